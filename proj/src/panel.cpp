#include "stjm/panel.hpp"

#include <stdexcept>

namespace stjm {

int PanelDataset::covariate_index(const std::string& name) const {
  for (int j = 0; j < static_cast<int>(covariate_names.size()); ++j)
    if (covariate_names[j] == name) return j;
  return -1;
}

int PanelDataset::n_at_risk(int t) const {
  int n = 0;
  for (int d : duration)
    if (d > t) ++n;
  return n;
}

void PanelDataset::rebuild_row_index() {
  loan_row_start.assign(n_loans + 1, 0);
  for (const auto& r : rows) loan_row_start[r.loan + 1]++;
  for (int i = 0; i < n_loans; ++i) loan_row_start[i + 1] += loan_row_start[i];
}

void PanelDataset::validate() const {
  if (n_loans <= 0) throw std::runtime_error("panel: no loans");
  if (static_cast<int>(duration.size()) != n_loans ||
      static_cast<int>(event.size()) != n_loans)
    throw std::runtime_error("panel: per-loan field size mismatch");
  if (covariates.rows() != n_loans ||
      covariates.cols() != static_cast<int>(covariate_names.size()))
    throw std::runtime_error("panel: covariate matrix shape mismatch");
  if (static_cast<int>(loan_row_start.size()) != n_loans + 1)
    throw std::runtime_error("panel: row index not built");

  for (int i = 0; i < n_loans; ++i) {
    const int t_i = duration[i];
    if (t_i < 1) throw std::runtime_error("panel: loan duration < 1");
    if (t_i > t_study) throw std::runtime_error("panel: loan duration exceeds study period");
    if (event[i] != 0 && event[i] != 1) throw std::runtime_error("panel: event must be 0/1");
    if (loan_row_start[i + 1] - loan_row_start[i] != t_i)
      throw std::runtime_error("panel: row count differs from duration");
    for (int s = 1; s <= t_i; ++s) {
      const auto& r = rows[loan_row_start[i] + s - 1];
      if (r.loan != i || r.s != s)
        throw std::runtime_error("panel: rows must run s = 1..t_i with no gaps");
      const int expect_x = (s == t_i) ? event[i] : 0;
      if (r.x != expect_x)
        throw std::runtime_error("panel: event indicator inconsistent with (t_i, delta_i)");
    }
  }
}

}  // namespace stjm
