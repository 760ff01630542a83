#include "stjm/simulate.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "stjm/gmrf.hpp"
#include "stjm/model.hpp"
#include "stjm/pipeline.hpp"
#include "stjm/rng.hpp"

namespace stjm {

namespace {

std::vector<double> build_shape(const SimConfig& config) {
  const int T = config.t_study;
  if (!config.v_shape.empty()) {
    if (static_cast<int>(config.v_shape.size()) != T)
      throw std::invalid_argument("simulate: v_shape length must equal t_study");
    return config.v_shape;
  }
  std::vector<double> shape(T, 0.0);
  if (config.default_shape) {
    double mean = 0.0;
    for (int s = 1; s <= T; ++s) {
      shape[s - 1] = config.shape_amplitude /
                     (1.0 + std::exp(-(s - config.shape_midpoint) / config.shape_scale));
      mean += shape[s - 1];
    }
    mean /= T;
    for (double& v : shape) v -= mean;  // centred, consistent with sum(v) = 0
  }
  return shape;
}

Eigen::VectorXd draw_rw2(int T, double tau_v, Rng& rng) {
  SparseSymmetric R = build_rw2_structure(T);
  SparseSymmetric Q(T);
  for (const auto& e : R.entries()) Q.add(e.row, e.col, tau_v * e.value);
  Q = add_jitter(Q, 1e-6 * tau_v);
  // The fluctuation draw pins both null directions (level and trend); the
  // systematic trend lives in the deterministic shape instead, keeping the
  // hazard profile stable across seeds.
  ConstraintSet cs;
  cs.rows = Eigen::MatrixXd::Ones(2, T);
  for (int s = 0; s < T; ++s) cs.rows(1, s) = s - 0.5 * (T - 1);
  cs.rhs = Eigen::VectorXd::Zero(2);
  return sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(T), cs, 1, rng).col(0);
}

Eigen::VectorXd draw_icar(const AdjacencyGraph& graph, double tau_u, Rng& rng) {
  const int A = graph.n_areas();
  SparseSymmetric R = build_icar_structure(graph);
  SparseSymmetric Q(A);
  for (const auto& e : R.entries()) Q.add(e.row, e.col, tau_u * e.value);
  Q = add_jitter(Q, 1e-6 * tau_u);
  ConstraintSet cs;
  cs.rows = Eigen::MatrixXd::Ones(1, A);
  cs.rhs = Eigen::VectorXd::Zero(1);
  return sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(A), cs, 1, rng).col(0);
}

Eigen::VectorXd draw_interaction(int T, const AdjacencyGraph& graph, double tau_delta,
                                 Rng& rng) {
  const int A = graph.n_areas();
  SparseSymmetric R =
      build_interaction_structure(build_rw2_structure(T), build_icar_structure(graph));
  SparseSymmetric Q(T * A);
  for (const auto& e : R.entries()) Q.add(e.row, e.col, tau_delta * e.value);
  Q = add_jitter(Q, 1e-6 * tau_delta);
  ConstraintSet full = build_constraints(T, A, Variant::M3);
  // Keep only the interaction rows, re-based to the delta block, and pin the
  // remaining trend-by-area null directions the model constraints leave
  // unpenalized (A - 1 of them for a connected graph).
  const int k = full.count() - 2;
  ConstraintSet cs;
  cs.rows = Eigen::MatrixXd::Zero(k + A - 1, T * A);
  cs.rows.topRows(k) = full.rows.block(2, T + A, k, T * A);
  for (int a = 0; a + 1 < A; ++a)
    for (int s = 0; s < T; ++s) {
      const double trend = s - 0.5 * (T - 1);
      cs.rows(k + a, s * A + a) = trend;
      cs.rows(k + a, s * A + (A - 1)) = -trend;
    }
  cs.rhs = Eigen::VectorXd::Zero(cs.rows.rows());
  return sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(T * A), cs, 1, rng).col(0);
}

SimResult simulate_impl(const SimConfig& config, bool spatial) {
  if (config.n_loans < 1) throw std::invalid_argument("simulate: n_loans must be positive");
  if (config.t_study < 3) throw std::invalid_argument("simulate: t_study must be >= 3");
  config.truth.validate();
  if (spatial && !config.graph)
    throw std::invalid_argument("simulate_stjm: adjacency graph required");

  const int N = config.n_loans;
  const int T = config.t_study;
  const int A = spatial ? config.graph->n_areas() : 0;
  // All substreams derive from the same frozen root so the temporal-only
  // and spatial generators share their per-loan streams.
  const Rng root(config.seed);
  Rng global_rng = root.substream(1ull << 33);

  SimResult out;
  SimTruth& truth = out.truth;

  // Global effects first, in a fixed draw order.
  const std::vector<double> shape = build_shape(config);
  truth.v = draw_rw2(T, config.truth.tau_v, global_rng);
  for (int s = 0; s < T; ++s) truth.v(s) += shape[s];
  if (spatial) {
    truth.u = draw_icar(*config.graph, config.truth.tau_u, global_rng);
    truth.delta = draw_interaction(T, *config.graph, config.truth.tau_delta, global_rng);
  }

  // Area assignment from a stream separate from the per-loan streams so a
  // degenerate spatial run stays aligned with the temporal-only generator.
  truth.area.assign(N, 0);
  if (spatial) {
    std::vector<double> w = config.area_weights;
    if (w.empty()) w.assign(A, 1.0);
    if (static_cast<int>(w.size()) != A)
      throw std::invalid_argument("simulate: area_weights length must equal n_areas");
    double total = 0.0;
    for (double x : w) total += x;
    Rng area_rng = root.substream(1ull << 32);
    for (int i = 0; i < N; ++i) {
      const double pick = area_rng.uniform() * total;
      double acc = 0.0;
      int a = A - 1;
      for (int j = 0; j < A; ++j) {
        acc += w[j];
        if (pick < acc) {
          a = j;
          break;
        }
      }
      truth.area[i] = a + 1;
    }
  }

  // Per-loan covariance factor of Q_U^{-1}.
  const Eigen::Matrix2d cov = config.truth.q_u().inverse();
  const Eigen::Matrix2d chol_cov = Eigen::LLT<Eigen::Matrix2d>(cov).matrixL();

  truth.u_loans.resize(N, 2);
  truth.z.resize(N, 2);

  PanelDataset& panel = out.panel;
  panel.n_loans = N;
  panel.t_study = T;
  panel.covariate_names = {"z1", "z2"};
  panel.covariates.resize(N, 2);

  for (int i = 0; i < N; ++i) {
    Rng rng = root.substream(static_cast<std::uint64_t>(i));
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const Eigen::Vector2d u = chol_cov * Eigen::Vector2d(rng.normal(), rng.normal());
    truth.z(i, 0) = z1;
    truth.z(i, 1) = z2;
    truth.u_loans.row(i) = u;
    panel.covariates(i, 0) = z1;
    panel.covariates(i, 1) = z2;

    const double base = config.nu0 + config.beta12 * z1 + config.beta22 * z2;
    const double spatial_part =
        spatial ? truth.u(truth.area[i] - 1) : 0.0;

    int t_i = T;
    int event = 0;
    for (int s = 1; s <= T; ++s) {
      double eta = base + truth.v(s - 1) + spatial_part +
                   config.truth.lambda * (u(0) + u(1) * s);
      if (spatial && truth.delta.size() > 0)
        eta += truth.delta((s - 1) * A + (truth.area[i] - 1));
      if (rng.bernoulli(logistic(eta))) {
        t_i = s;
        event = 1;
        break;
      }
    }

    panel.loan_ids.push_back("L" + std::to_string(100000 + i));
    panel.area.push_back(truth.area[i]);
    panel.duration.push_back(t_i);
    panel.event.push_back(event);
    const double sd_y = 1.0 / std::sqrt(config.truth.tau_Y);
    for (int s = 1; s <= t_i; ++s) {
      PanelRow row;
      row.loan = i;
      row.s = s;
      row.y = config.beta01 + u(0) + (config.beta11 + u(1)) * s + sd_y * rng.normal();
      row.x = (s == t_i) ? event : 0;
      panel.rows.push_back(row);
    }
  }
  panel.rebuild_row_index();
  panel.validate();
  return out;
}

}  // namespace

SimResult simulate_appendix_b(const SimConfig& config) { return simulate_impl(config, false); }

SimResult simulate_stjm(const SimConfig& config) { return simulate_impl(config, true); }

std::vector<LoanRecord> sim_to_loan_records(const SimResult& sim, const SimConfig& config) {
  const double i_monthly = config.int_rt_pct / 100.0 / 12.0;
  const double scale =
      (std::pow(1.0 + i_monthly, config.term_months) - 1.0) / (i_monthly * config.t_study);
  std::vector<LoanRecord> loans;
  const PanelDataset& panel = sim.panel;
  for (int i = 0; i < panel.n_loans; ++i) {
    LoanRecord loan;
    loan.id = panel.loan_ids[i];
    loan.area = panel.area[i] == 0 ? 1 : panel.area[i];
    loan.orig_date = "2015-06-01";
    loan.term_months = config.term_months;
    loan.int_rt = config.int_rt_pct;
    loan.orig_upb = config.orig_upb;
    loan.cltv = panel.covariates(i, 0);  // z1
    loan.cnt_units = 1;
    loan.dti = panel.covariates(i, 1);  // z2
    loan.loan_purpose = "C";
    loan.cnt_borr = 1;
    loan.duration = panel.duration[i];
    loan.event = panel.event[i];
    for (int s = 1; s <= loan.duration; ++s) {
      const double y = panel.rows[panel.loan_row_start[i] + s - 1].y;
      loan.balances.push_back(config.orig_upb * (1.0 - y / scale));
    }
    loans.push_back(std::move(loan));
  }
  return loans;
}

void write_truth_json(const std::string& path, const SimConfig& config, const SimResult& sim) {
  nlohmann::json j;
  j["n_loans"] = config.n_loans;
  j["t_study"] = config.t_study;
  j["seed"] = config.seed;
  j["beta01"] = config.beta01;
  j["beta11"] = config.beta11;
  j["nu0"] = config.nu0;
  j["beta12"] = config.beta12;
  j["beta22"] = config.beta22;
  j["tau_Y"] = config.truth.tau_Y;
  j["tau_U0"] = config.truth.tau_U0;
  j["tau_U1"] = config.truth.tau_U1;
  j["rho_01"] = config.truth.rho_01;
  j["lambda"] = config.truth.lambda;
  j["tau_v"] = config.truth.tau_v;
  if (sim.truth.u.size() > 0) {
    j["tau_u"] = config.truth.tau_u;
    j["tau_delta"] = config.truth.tau_delta;
    j["u"] = std::vector<double>(sim.truth.u.data(), sim.truth.u.data() + sim.truth.u.size());
  }
  j["v"] = std::vector<double>(sim.truth.v.data(), sim.truth.v.data() + sim.truth.v.size());
  std::vector<int> n_at_risk;
  for (int t : {12, 18, 24, 30, 36}) n_at_risk.push_back(sim.panel.n_at_risk(t));
  j["n_at_risk_12_to_36"] = n_at_risk;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write truth file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace stjm
