#pragma once

#include <Eigen/Dense>
#include <memory>

#include "stjm/model.hpp"
#include "stjm/panel.hpp"
#include "stjm/rng.hpp"
#include "stjm/simulate.hpp"

namespace stjm::test {

// Dense conditioned covariance of N(mean, Q^-1) | A x = e: the kriging
// oracle used against the sparse sampler.
inline Eigen::MatrixXd conditioned_covariance(const Eigen::MatrixXd& Q,
                                              const Eigen::MatrixXd& A) {
  const Eigen::MatrixXd sigma = Q.inverse();
  const Eigen::MatrixXd sat = sigma * A.transpose();
  const Eigen::MatrixXd s = A * sat;
  return sigma - sat * s.inverse() * sat.transpose();
}

// Rank with the project-wide singular-value cutoff.
inline int dense_rank(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double cutoff = 1e-9 * es.eigenvalues().cwiseAbs().maxCoeff();
  int rank = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > cutoff) ++rank;
  return rank;
}

// Small synthetic panel with arbitrary values; covariates named z1, z2.
inline std::shared_ptr<PanelDataset> tiny_panel(int n_loans, int t_study,
                                                std::uint64_t seed = 7,
                                                double event_rate = 0.3) {
  Rng rng(seed);
  auto panel = std::make_shared<PanelDataset>();
  panel->n_loans = n_loans;
  panel->t_study = t_study;
  panel->covariate_names = {"z1", "z2"};
  panel->covariates.resize(n_loans, 2);
  for (int i = 0; i < n_loans; ++i) {
    panel->loan_ids.push_back("L" + std::to_string(i));
    panel->area.push_back(0);
    panel->covariates(i, 0) = rng.normal();
    panel->covariates(i, 1) = rng.normal();
    const int t_i = 1 + static_cast<int>(rng.below(t_study));
    const int ev = rng.bernoulli(event_rate) ? 1 : 0;
    panel->duration.push_back(t_i);
    panel->event.push_back(ev);
    for (int s = 1; s <= t_i; ++s)
      panel->rows.push_back({i, s, 0.01 + 0.03 * s + 0.1 * rng.normal(), s == t_i ? ev : 0});
  }
  panel->rebuild_row_index();
  panel->validate();
  return panel;
}

inline SimConfig small_sim_config(std::uint64_t seed, int n = 60, int t_study = 20) {
  SimConfig sc;
  sc.seed = seed;
  sc.n_loans = n;
  sc.t_study = t_study;
  return sc;
}

}  // namespace stjm::test
