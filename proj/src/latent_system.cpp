#include "stjm/latent_system.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "stjm/rng.hpp"

namespace stjm {

LatentSystem::LatentSystem(const ModelDefinition& model) : model_(&model) {
  build_pattern();
}

int LatentSystem::slot(int i, int j) const {
  // CSC lookup: Q_ is compressed, column j rows are sorted.
  const int* outer = Q_.outerIndexPtr();
  const int* inner = Q_.innerIndexPtr();
  const int* lo = inner + outer[j];
  const int* hi = inner + outer[j + 1];
  const int* it = std::lower_bound(lo, hi, i);
  return static_cast<int>(it - inner);
}

void LatentSystem::build_pattern() {
  const auto& lay = model_->layout();
  const int n = lay.dim;

  std::vector<Eigen::Triplet<double>> trips;
  auto add_sym = [&trips](int i, int j) {
    trips.emplace_back(i, j, 1.0);
    if (i != j) trips.emplace_back(j, i, 1.0);
  };

  for (int i = 0; i < lay.n_loans; ++i) {
    add_sym(lay.u0(i), lay.u0(i));
    add_sym(lay.u0(i), lay.u1(i));
    add_sym(lay.u1(i), lay.u1(i));
  }
  const int fixed_hi = lay.has_survival ? lay.off_nu0 + 1 : lay.off_beta1 + 2;
  for (int j = lay.off_beta1; j < fixed_hi; ++j) add_sym(j, j);
  for (const auto& e : model_->structure_v().entries())
    add_sym(lay.off_v + e.row, lay.off_v + e.col);
  for (const auto& e : model_->structure_u().entries())
    add_sym(lay.off_u + e.row, lay.off_u + e.col);
  for (const auto& e : model_->structure_delta().entries())
    add_sym(lay.off_delta + e.row, lay.off_delta + e.col);

  // Constraint regularization pattern (A'A restricted to its nonzeros).
  const auto& A = model_->constraints().rows;
  Eigen::MatrixXd AtA;
  if (A.rows() > 0) {
    AtA = kConstraintScale * (A.transpose() * A);
    for (int i = 0; i < AtA.rows(); ++i)
      for (int j = 0; j < AtA.cols(); ++j)
        if (AtA(i, j) != 0.0 && i <= j) add_sym(i, j);
  }

  // Likelihood row supports.
  for (const auto& r : model_->row_designs()) {
    std::vector<int> idx = {lay.off_beta1, lay.off_beta1 + 1, lay.u0(r.loan), lay.u1(r.loan)};
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a; b < idx.size(); ++b) add_sym(std::min(idx[a], idx[b]), std::max(idx[a], idx[b]));
    if (lay.has_survival) {
      std::vector<int> xi = r.x_static.idx;
      xi.push_back(lay.u0(r.loan));
      xi.push_back(lay.u1(r.loan));
      for (std::size_t a = 0; a < xi.size(); ++a)
        for (std::size_t b = a; b < xi.size(); ++b) add_sym(std::min(xi[a], xi[b]), std::max(xi[a], xi[b]));
    }
  }

  Q_.resize(n, n);
  Q_.setFromTriplets(trips.begin(), trips.end());
  Q_.makeCompressed();

  // Slot maps for the theta-scaled prior blocks.
  for (int i = 0; i < lay.n_loans; ++i) {
    slots_qu00_.push_back(slot(lay.u0(i), lay.u0(i)));
    slots_qu01a_.push_back(slot(lay.u0(i), lay.u1(i)));
    slots_qu01b_.push_back(slot(lay.u1(i), lay.u0(i)));
    slots_qu11_.push_back(slot(lay.u1(i), lay.u1(i)));
  }
  for (int j = lay.off_beta1; j < fixed_hi; ++j) slots_tauf_.push_back(slot(j, j));
  auto map_structure = [this](const SparseSymmetric& R, int off, std::vector<int>& slots,
                              std::vector<double>& vals) {
    for (const auto& e : R.entries()) {
      slots.push_back(slot(off + e.row, off + e.col));
      vals.push_back(e.value);
      if (e.row != e.col) {
        slots.push_back(slot(off + e.col, off + e.row));
        vals.push_back(e.value);
      }
    }
  };
  if (lay.has_survival) map_structure(model_->structure_v(), lay.off_v, slots_v_, vals_v_);
  if (lay.has_u) map_structure(model_->structure_u(), lay.off_u, slots_u_, vals_u_);
  if (lay.has_delta) map_structure(model_->structure_delta(), lay.off_delta, slots_d_, vals_d_);

  if (A.rows() > 0) {
    for (int i = 0; i < AtA.rows(); ++i)
      for (int j = 0; j < AtA.cols(); ++j)
        if (AtA(i, j) != 0.0) {
          slots_con_.push_back(slot(i, j));
          vals_con_.push_back(AtA(i, j));
        }
  }

  // Gaussian rows share the scale tau_Y; aggregate into one slot list.
  std::map<int, double> y_acc;
  for (const auto& r : model_->row_designs()) {
    const int idx[4] = {lay.off_beta1, lay.off_beta1 + 1, lay.u0(r.loan), lay.u1(r.loan)};
    const double val[4] = {1.0, static_cast<double>(r.s), 1.0, static_cast<double>(r.s)};
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) y_acc[slot(idx[a], idx[b])] += val[a] * val[b];
  }
  for (const auto& [sl, v] : y_acc) {
    slots_y_.push_back(sl);
    vals_y_.push_back(v);
  }

  if (lay.has_survival) {
    row_pairs_.reserve(model_->row_designs().size());
    for (const auto& r : model_->row_designs()) {
      std::vector<int> xi = r.x_static.idx;
      xi.push_back(lay.u0(r.loan));
      xi.push_back(lay.u1(r.loan));
      std::vector<PairOp> ops;
      const int k = static_cast<int>(xi.size());
      for (int a = 0; a < k; ++a)
        for (int b = a; b < k; ++b) {
          PairOp op;
          op.slot_ab = slot(xi[a], xi[b]);
          op.slot_ba = (a == b) ? op.slot_ab : slot(xi[b], xi[a]);
          op.a = static_cast<unsigned char>(a);
          op.b = static_cast<unsigned char>(b);
          ops.push_back(op);
        }
      row_pairs_.push_back(std::move(ops));
    }
  }
}

void LatentSystem::assemble(const HyperParams& theta, const Eigen::VectorXd& mu) {
  const auto& lay = model_->layout();
  double* vals = Q_.valuePtr();
  std::fill(vals, vals + Q_.nonZeros(), 0.0);

  const Eigen::Matrix2d qu = theta.q_u();
  for (std::size_t i = 0; i < slots_qu00_.size(); ++i) {
    vals[slots_qu00_[i]] += qu(0, 0);
    vals[slots_qu01a_[i]] += qu(0, 1);
    vals[slots_qu01b_[i]] += qu(0, 1);
    vals[slots_qu11_[i]] += qu(1, 1);
  }
  for (int sl : slots_tauf_) vals[sl] += model_->tau_f();
  for (std::size_t i = 0; i < slots_v_.size(); ++i) vals[slots_v_[i]] += theta.tau_v * vals_v_[i];
  for (std::size_t i = 0; i < slots_u_.size(); ++i) vals[slots_u_[i]] += theta.tau_u * vals_u_[i];
  for (std::size_t i = 0; i < slots_d_.size(); ++i)
    vals[slots_d_[i]] += theta.tau_delta * vals_d_[i];
  for (std::size_t i = 0; i < slots_con_.size(); ++i) vals[slots_con_[i]] += vals_con_[i];
  for (std::size_t i = 0; i < slots_y_.size(); ++i) vals[slots_y_[i]] += theta.tau_Y * vals_y_[i];

  if (lay.has_survival) {
    const auto& rows = model_->row_designs();
    std::vector<double> lv;
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
      const auto& r = rows[ri];
      const double eta = model_->eta_x(mu, r, theta.lambda);
      const double p = logistic(eta);
      const double w = p * (1.0 - p);
      lv.assign(r.x_static.val.begin(), r.x_static.val.end());
      lv.push_back(theta.lambda);
      lv.push_back(theta.lambda * r.s);
      for (const auto& op : row_pairs_[ri]) {
        const double contrib = w * lv[op.a] * lv[op.b];
        vals[op.slot_ab] += contrib;
        if (op.slot_ba != op.slot_ab) vals[op.slot_ba] += contrib;
      }
    }
  }

  chol_.refactorize(Q_);
  projector_ = ConstraintProjector(chol_, model_->constraints());
}

double LatentSystem::objective(const Eigen::VectorXd& mu, const HyperParams& theta) const {
  return model_->log_likelihood(mu, theta) -
         0.5 * model_->prior_quad_value(model_->prior_quad(mu), theta);
}

Eigen::VectorXd LatentSystem::gradient(const Eigen::VectorXd& mu,
                                       const HyperParams& theta) const {
  const auto& lay = model_->layout();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(lay.dim);

  for (const auto& r : model_->row_designs()) {
    const double ry = theta.tau_Y * (r.y - model_->eta_y(mu, r));
    g(lay.off_beta1) += ry;
    g(lay.off_beta1 + 1) += ry * r.s;
    g(lay.u0(r.loan)) += ry;
    g(lay.u1(r.loan)) += ry * r.s;
    if (lay.has_survival) {
      const double p = logistic(model_->eta_x(mu, r, theta.lambda));
      const double rx = r.x - p;
      for (std::size_t k = 0; k < r.x_static.idx.size(); ++k)
        g(r.x_static.idx[k]) += rx * r.x_static.val[k];
      g(lay.u0(r.loan)) += rx * theta.lambda;
      g(lay.u1(r.loan)) += rx * theta.lambda * r.s;
    }
  }

  // Minus the prior part Q_prior * mu, block by block.
  const Eigen::Matrix2d qu = theta.q_u();
  for (int i = 0; i < lay.n_loans; ++i) {
    const double a = mu(lay.u0(i));
    const double b = mu(lay.u1(i));
    g(lay.u0(i)) -= qu(0, 0) * a + qu(0, 1) * b;
    g(lay.u1(i)) -= qu(0, 1) * a + qu(1, 1) * b;
  }
  const int fixed_hi = lay.has_survival ? lay.off_nu0 + 1 : lay.off_beta1 + 2;
  for (int j = lay.off_beta1; j < fixed_hi; ++j) g(j) -= model_->tau_f() * mu(j);
  auto sub_structure = [&](const SparseSymmetric& R, int off, double scale) {
    for (const auto& e : R.entries()) {
      g(off + e.row) -= scale * e.value * mu(off + e.col);
      if (e.row != e.col) g(off + e.col) -= scale * e.value * mu(off + e.row);
    }
  };
  if (lay.has_survival) sub_structure(model_->structure_v(), lay.off_v, theta.tau_v);
  if (lay.has_u) sub_structure(model_->structure_u(), lay.off_u, theta.tau_u);
  if (lay.has_delta) sub_structure(model_->structure_delta(), lay.off_delta, theta.tau_delta);
  return g;
}

ModeResult LatentSystem::newton_mode(const HyperParams& theta, const Eigen::VectorXd& init,
                                     bool refactor_at_mode, int max_iter, double tol) {
  ModeResult res;
  Eigen::VectorXd mu = init;
  double f = objective(mu, theta);
  for (int iter = 0; iter < max_iter; ++iter) {
    assemble(theta, mu);
    Eigen::VectorXd g = gradient(mu, theta);
    Eigen::VectorXd candidate = projector_.project(mu + chol_.solve(g));
    Eigen::VectorXd step = candidate - mu;
    const double step_norm = step.lpNorm<Eigen::Infinity>();
    res.step_norms.push_back(step_norm);

    double alpha = 1.0;
    Eigen::VectorXd next = candidate;
    double f_next = objective(next, theta);
    for (int h = 0; h < 10 && !(f_next >= f - 1e-10 * (1.0 + std::abs(f))); ++h) {
      alpha *= 0.5;
      next = mu + alpha * step;
      f_next = objective(next, theta);
    }
    mu = next;
    f = f_next;
    if (step_norm < tol) {
      res.converged = true;
      res.iterations = iter;
      break;
    }
    res.iterations = iter + 1;
  }
  if (!res.converged)
    throw NewtonError("gaussian_approximation: Newton failed to converge in " +
                          std::to_string(max_iter) + " iterations (last step " +
                          std::to_string(res.step_norms.back()) + ")",
                      res.step_norms);
  res.mode = mu;
  if (refactor_at_mode) assemble(theta, mu);
  return res;
}

double LatentSystem::log_gaussian_normalizer() const {
  const int n = dim();
  const int k = model_->constraints().count();
  return -0.5 * (n - k) * std::log(2.0 * M_PI) + 0.5 * chol_.log_det() +
         0.5 * projector_.log_det_AQinvAt();
}

Eigen::VectorXd LatentSystem::sample_constrained(const Eigen::VectorXd& mode, Rng& rng) const {
  Eigen::VectorXd x = mode + chol_.sample(rng);
  return projector_.project(x);
}

double LatentSystem::quad_form(const Eigen::VectorXd& center, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd d = x - center;
  return d.dot(Q_ * d);
}

double LatentSystem::marginal_variance(int coord) const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim());
  e(coord) = 1.0;
  const Eigen::VectorXd col = chol_.solve(e);
  double var = col(coord);
  if (projector_.active()) var -= projector_.variance_correction(col);
  return var;
}

}  // namespace stjm
