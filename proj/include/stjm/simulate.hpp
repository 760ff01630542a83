#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stjm/graph.hpp"
#include "stjm/hyper.hpp"
#include "stjm/panel.hpp"

namespace stjm {

struct SimConfig {
  int n_loans = 500;
  int t_study = 40;
  std::uint64_t seed = 1;

  HyperParams truth;  // tau_Y, tau_U0, tau_U1, rho_01, lambda, tau_v (+spatial)
  double beta01 = 0.011;
  double beta11 = 0.027;
  double nu0 = -2.62;
  double beta12 = 0.5;
  double beta22 = 0.5;

  // Deterministic centred time profile added to the RW2 fluctuation; the
  // default logistic ramp is tuned so the at-risk counts track the
  // (424, 347, 183, 85, 36) profile at N = 500.
  bool default_shape = true;
  double shape_amplitude = 3.4;
  double shape_midpoint = 18.0;
  double shape_scale = 3.5;
  std::vector<double> v_shape;  // explicit override, length t_study

  std::shared_ptr<const AdjacencyGraph> graph;  // spatial generation
  std::vector<double> area_weights;             // optional, length A

  // Loan-level constants for the CSV round trip.
  double orig_upb = 200000.0;
  double int_rt_pct = 4.0;
  int term_months = 360;

  SimConfig() {
    truth.tau_Y = 25.0;
    truth.tau_U0 = 10.0;
    truth.tau_U1 = 900.0;
    truth.rho_01 = -0.05;
    truth.lambda = 0.2;
    truth.tau_v = 400.0;
    truth.tau_u = 4.0;
    truth.tau_delta = 50.0;
  }
};

struct SimTruth {
  Eigen::VectorXd v;        // realized temporal effect (shape + fluctuation)
  Eigen::VectorXd u;        // realized spatial effect, empty when absent
  Eigen::VectorXd delta;    // realized interaction, empty when absent
  Eigen::MatrixXd u_loans;  // n x 2 random effects
  Eigen::MatrixXd z;        // n x 2 covariates
  std::vector<int> area;    // 1-based area ids, 0 when absent
};

struct SimResult {
  PanelDataset panel;
  SimTruth truth;
};

// Appendix-B-style temporal-only design with two covariates.
SimResult simulate_appendix_b(const SimConfig& config);

// Spatial extension: adds constrained ICAR and interaction draws; requires
// config.graph.
SimResult simulate_stjm(const SimConfig& config);

// Converts a simulated panel to loan records whose CSV round trip
// reproduces it: z1 rides in the cltv column and z2 in dti.
std::vector<LoanRecord> sim_to_loan_records(const SimResult& sim, const SimConfig& config);

void write_truth_json(const std::string& path, const SimConfig& config, const SimResult& sim);

}  // namespace stjm
