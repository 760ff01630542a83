#include "stjm/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace stjm {

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double log1p_exp(double eta) {
  if (eta > 35.0) return eta;
  if (eta < -35.0) return std::exp(eta);
  return std::log1p(std::exp(eta));
}

std::pair<int, double> rank_and_loggdet(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double cutoff = 1e-9 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  int rank = 0;
  double loggdet = 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff) {
      ++rank;
      loggdet += std::log(ev(i));
    }
  }
  return {rank, loggdet};
}

ModelDefinition ModelDefinition::build(std::shared_ptr<const PanelDataset> panel,
                                       std::shared_ptr<const AdjacencyGraph> graph,
                                       Variant variant, ModelConfig config) {
  if (!panel) throw std::invalid_argument("build_model: panel required");
  panel->validate();
  const bool spatial = variant != Variant::M1;
  if (config.include_survival && spatial && !graph)
    throw std::invalid_argument("build_model: adjacency graph required for variant " +
                                variant_to_string(variant));

  ModelDefinition m;
  m.variant_ = variant;
  m.panel_ = panel;
  m.graph_ = graph;
  m.config_ = config;

  // Selected survival covariates.
  std::vector<std::string> names = config.covariates;
  if (names.empty()) names = panel->covariate_names;
  m.covariate_names_ = names;
  m.Z_.resize(panel->n_loans, static_cast<int>(names.size()));
  for (int j = 0; j < static_cast<int>(names.size()); ++j) {
    const int src = panel->covariate_index(names[j]);
    if (src < 0) throw std::invalid_argument("build_model: covariate not in panel: " + names[j]);
    m.Z_.col(j) = panel->covariates.col(src);
  }

  const int N = panel->n_loans;
  const int T = panel->t_study;
  const int p = static_cast<int>(names.size());
  if (config.include_survival && T < 3)
    throw std::invalid_argument("build_model: study period must be at least 3 months");

  LatentLayout lay;
  lay.n_loans = N;
  lay.n_covariates = p;
  lay.T = T;
  lay.has_survival = config.include_survival;
  lay.off_U = 0;
  lay.off_beta1 = 2 * N;
  int pos = lay.off_beta1 + 2;
  if (config.include_survival) {
    lay.off_beta2 = pos;
    pos += p;
    lay.off_nu0 = pos;
    pos += 1;
    lay.off_v = pos;
    pos += T;
    if (spatial) {
      lay.A = graph->n_areas();
      lay.has_u = true;
      lay.off_u = pos;
      pos += lay.A;
      for (int i = 0; i < N; ++i) {
        const int a = panel->area[i];
        if (a < 1 || a > lay.A)
          throw std::invalid_argument(
              "build_model: loan area id " + std::to_string(a) +
              " not covered by the adjacency graph (A = " + std::to_string(lay.A) + ")");
      }
    }
    if (variant == Variant::M3) {
      lay.has_delta = true;
      lay.off_delta = pos;
      pos += T * lay.A;
    }
  }
  lay.dim = pos;
  m.layout_ = lay;

  if (config.include_survival) {
    m.Rv_ = build_rw2_structure(T);
    auto [rv, gv] = rank_and_loggdet(m.Rv_.to_dense());
    m.rank_v_ = rv;
    m.loggdet_v_ = gv;
    if (spatial) {
      m.Ru_ = build_icar_structure(*graph);
      auto [ru, gu] = rank_and_loggdet(m.Ru_.to_dense());
      m.rank_u_ = ru;
      m.loggdet_u_ = gu;
    }
    if (variant == Variant::M3) {
      m.Rdelta_ = build_interaction_structure(m.Rv_, m.Ru_);
      m.rank_delta_ = m.rank_v_ * m.rank_u_;
      m.loggdet_delta_ = m.rank_u_ * m.loggdet_v_ + m.rank_v_ * m.loggdet_u_;
    }

    BlockOffsets off;
    off.dim = lay.dim;
    off.v = lay.off_v;
    off.u = lay.off_u;
    off.delta = lay.off_delta;
    m.constraints_ = build_constraints(T, lay.A, variant, off);
  } else {
    m.constraints_ = ConstraintSet{};
    m.constraints_.rows = Eigen::MatrixXd::Zero(0, lay.dim);
    m.constraints_.rhs = Eigen::VectorXd::Zero(0);
  }

  if (!config.include_survival) {
    m.active_hypers_ = {Hyper::TauY, Hyper::TauU0, Hyper::TauU1, Hyper::Rho01};
  } else {
    m.active_hypers_ = {Hyper::TauY,   Hyper::TauU0, Hyper::TauU1,
                        Hyper::Rho01,  Hyper::Lambda, Hyper::TauV};
    if (spatial) m.active_hypers_.push_back(Hyper::TauU);
    if (variant == Variant::M3) m.active_hypers_.push_back(Hyper::TauDelta);
  }

  // Per-row design templates.
  m.row_designs_.reserve(panel->rows.size());
  for (const auto& r : panel->rows) {
    RowDesign d;
    d.loan = r.loan;
    d.s = r.s;
    d.y = r.y;
    d.x = r.x;
    if (config.include_survival) {
      d.x_static.idx.push_back(lay.off_nu0);
      d.x_static.val.push_back(1.0);
      for (int j = 0; j < p; ++j) {
        d.x_static.idx.push_back(lay.off_beta2 + j);
        d.x_static.val.push_back(m.Z_(r.loan, j));
      }
      d.x_static.idx.push_back(lay.v(r.s));
      d.x_static.val.push_back(1.0);
      if (lay.has_u) {
        d.x_static.idx.push_back(lay.u(panel->area[r.loan] - 1));
        d.x_static.val.push_back(1.0);
      }
      if (lay.has_delta) {
        d.x_static.idx.push_back(lay.delta(panel->area[r.loan] - 1, r.s));
        d.x_static.val.push_back(1.0);
      }
    }
    m.row_designs_.push_back(std::move(d));
  }
  return m;
}

SparseSymmetric ModelDefinition::assemble_precision(const HyperParams& theta) const {
  theta.validate();
  const auto& lay = layout_;
  SparseSymmetric Q(lay.dim);
  const Eigen::Matrix2d qu = theta.q_u();
  for (int i = 0; i < lay.n_loans; ++i) {
    Q.add(lay.u0(i), lay.u0(i), qu(0, 0));
    Q.add(lay.u0(i), lay.u1(i), qu(0, 1));
    Q.add(lay.u1(i), lay.u1(i), qu(1, 1));
  }
  const int fixed_lo = lay.off_beta1;
  const int fixed_hi = lay.has_survival ? lay.off_nu0 + 1 : lay.off_beta1 + 2;
  for (int j = fixed_lo; j < fixed_hi; ++j) Q.add(j, j, config_.tau_f);
  if (lay.has_survival) {
    for (const auto& e : Rv_.entries())
      Q.add(lay.off_v + e.row, lay.off_v + e.col, theta.tau_v * e.value);
    if (lay.has_u)
      for (const auto& e : Ru_.entries())
        Q.add(lay.off_u + e.row, lay.off_u + e.col, theta.tau_u * e.value);
    if (lay.has_delta)
      for (const auto& e : Rdelta_.entries())
        Q.add(lay.off_delta + e.row, lay.off_delta + e.col, theta.tau_delta * e.value);
  }
  return Q;
}

std::pair<SparseVec, SparseVec> ModelDefinition::design_rows(int loan, int s,
                                                             double lambda) const {
  if (loan < 0 || loan >= layout_.n_loans)
    throw std::out_of_range("design_rows: loan index out of range");
  if (s < 1 || s > panel_->duration[loan])
    throw std::out_of_range("design_rows: period " + std::to_string(s) +
                            " outside 1..t_i for loan " + std::to_string(loan));
  const auto& lay = layout_;
  SparseVec row_y;
  row_y.idx = {lay.off_beta1, lay.off_beta1 + 1, lay.u0(loan), lay.u1(loan)};
  row_y.val = {1.0, static_cast<double>(s), 1.0, static_cast<double>(s)};

  SparseVec row_x;
  if (lay.has_survival) {
    const auto& d = row_designs_[panel_->loan_row_start[loan] + s - 1];
    row_x = d.x_static;
    row_x.idx.push_back(lay.u0(loan));
    row_x.val.push_back(lambda);
    row_x.idx.push_back(lay.u1(loan));
    row_x.val.push_back(lambda * s);
  }
  return {row_y, row_x};
}

double ModelDefinition::eta_y(const Eigen::VectorXd& mu, const RowDesign& r) const {
  const auto& lay = layout_;
  return mu(lay.off_beta1) + r.s * mu(lay.off_beta1 + 1) + mu(lay.u0(r.loan)) +
         r.s * mu(lay.u1(r.loan));
}

double ModelDefinition::eta_x(const Eigen::VectorXd& mu, const RowDesign& r,
                              double lambda) const {
  return r.x_static.dot(mu) +
         lambda * (mu(layout_.u0(r.loan)) + r.s * mu(layout_.u1(r.loan)));
}

double ModelDefinition::log_likelihood(const Eigen::VectorXd& mu,
                                       const HyperParams& theta) const {
  const double half_log_tau = 0.5 * (std::log(theta.tau_Y) - std::log(2.0 * M_PI));
  double total = 0.0;
  for (const auto& r : row_designs_) {
    const double ry = r.y - eta_y(mu, r);
    total += half_log_tau - 0.5 * theta.tau_Y * ry * ry;
    if (layout_.has_survival) {
      const double ex = eta_x(mu, r, theta.lambda);
      total += r.x * ex - log1p_exp(ex);
    }
  }
  return total;
}

PriorQuad ModelDefinition::prior_quad(const Eigen::VectorXd& mu) const {
  const auto& lay = layout_;
  PriorQuad q;
  for (int i = 0; i < lay.n_loans; ++i) {
    const double a = mu(lay.u0(i));
    const double b = mu(lay.u1(i));
    q.su00 += a * a;
    q.su01 += a * b;
    q.su11 += b * b;
  }
  const int fixed_hi = lay.has_survival ? lay.off_nu0 + 1 : lay.off_beta1 + 2;
  for (int j = lay.off_beta1; j < fixed_hi; ++j) q.qf += mu(j) * mu(j);
  auto quad_block = [&mu](const SparseSymmetric& R, int offset) {
    double s = 0.0;
    for (const auto& e : R.entries()) {
      const double term = e.value * mu(offset + e.row) * mu(offset + e.col);
      s += (e.row == e.col) ? term : 2.0 * term;
    }
    return s;
  };
  if (lay.has_survival) {
    q.qv = quad_block(Rv_, lay.off_v);
    if (lay.has_u) q.qu = quad_block(Ru_, lay.off_u);
    if (lay.has_delta) q.qd = quad_block(Rdelta_, lay.off_delta);
  }
  return q;
}

double ModelDefinition::prior_quad_value(const PriorQuad& q, const HyperParams& theta) const {
  const Eigen::Matrix2d qu = theta.q_u();
  double total = qu(0, 0) * q.su00 + 2.0 * qu(0, 1) * q.su01 + qu(1, 1) * q.su11;
  total += config_.tau_f * q.qf;
  if (layout_.has_survival) {
    total += theta.tau_v * q.qv;
    if (layout_.has_u) total += theta.tau_u * q.qu;
    if (layout_.has_delta) total += theta.tau_delta * q.qd;
  }
  return total;
}

double ModelDefinition::latent_prior_normalizer(const HyperParams& theta) const {
  const auto& lay = layout_;
  const double log2pi = std::log(2.0 * M_PI);
  double c = lay.n_loans * (-log2pi + 0.5 * theta.log_det_q_u());
  const int n_fixed = lay.has_survival ? 2 + lay.n_covariates + 1 : 2;
  c += 0.5 * n_fixed * (std::log(config_.tau_f) - log2pi);
  if (lay.has_survival) {
    c += 0.5 * rank_v_ * (std::log(theta.tau_v) - log2pi) + 0.5 * loggdet_v_;
    if (lay.has_u)
      c += 0.5 * rank_u_ * (std::log(theta.tau_u) - log2pi) + 0.5 * loggdet_u_;
    if (lay.has_delta)
      c += 0.5 * rank_delta_ * (std::log(theta.tau_delta) - log2pi) + 0.5 * loggdet_delta_;
  }
  return c;
}

double ModelDefinition::log_latent_prior(const Eigen::VectorXd& mu,
                                         const HyperParams& theta) const {
  return latent_prior_normalizer(theta) - 0.5 * prior_quad_value(prior_quad(mu), theta);
}

}  // namespace stjm
