#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace stjm {

// One loan as ingested from the origination/performance file pair.
struct LoanRecord {
  std::string id;
  int area = 0;  // 1-based zip3-like id
  std::string orig_date;
  int term_months = 360;
  double int_rt = 0.0;   // annual rate, percent
  double orig_upb = 0.0; // P0
  double cltv = 0.0;
  int cnt_units = 1;
  double dti = 0.0;
  std::string loan_purpose = "C";  // C (cash-out, reference) | N | P
  int cnt_borr = 1;
  std::vector<double> balances;  // current UPB at months 1..duration
  int duration = 0;              // t_i
  int event = 0;                 // delta_i
};

struct StandardizationStat {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
};

// One person-period row.
struct PanelRow {
  int loan;   // 0-based loan index
  int s;      // month since origination, 1-based
  double y;   // longitudinal outcome
  int x;      // event indicator for this period
};

// Person-period table plus loan-level covariates.
struct PanelDataset {
  int n_loans = 0;
  int t_study = 0;
  std::vector<std::string> loan_ids;
  std::vector<int> area;      // per loan, 1-based; 0 when absent
  std::vector<int> duration;  // t_i per loan
  std::vector<int> event;     // delta_i per loan
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariates;  // n_loans x p
  std::vector<PanelRow> rows;  // sorted by (loan, s), s = 1..t_i
  std::vector<int> loan_row_start;  // size n_loans + 1
  std::vector<StandardizationStat> standardization;

  int n_rows() const { return static_cast<int>(rows.size()); }
  int covariate_index(const std::string& name) const;
  // Count of loans with t_i strictly greater than t.
  int n_at_risk(int t) const;
  void validate() const;
  void rebuild_row_index();
};

}  // namespace stjm
