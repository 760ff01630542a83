#include "stjm/gmrf.hpp"

#include <algorithm>
#include <cmath>

#include "stjm/rng.hpp"

namespace stjm {

Variant variant_from_string(const std::string& s) {
  if (s == "m1" || s == "M1") return Variant::M1;
  if (s == "m2" || s == "M2") return Variant::M2;
  if (s == "m3" || s == "M3") return Variant::M3;
  throw std::invalid_argument("unknown model variant: " + s);
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::M1: return "m1";
    case Variant::M2: return "m2";
    default: return "m3";
  }
}

SparseSymmetric build_rw2_structure(int T) {
  if (T < 3) throw std::invalid_argument("build_rw2_structure: T must be >= 3");
  // D'D with D the (T-2) x T second-difference operator, rows (1, -2, 1).
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(T - 2, T);
  for (int r = 0; r < T - 2; ++r) {
    D(r, r) = 1.0;
    D(r, r + 1) = -2.0;
    D(r, r + 2) = 1.0;
  }
  Eigen::MatrixXd R = D.transpose() * D;
  SparseSymmetric out(T);
  for (int i = 0; i < T; ++i)
    for (int j = i; j < T; ++j)
      if (R(i, j) != 0.0) out.add(i, j, R(i, j));
  return out;
}

SparseSymmetric build_icar_structure(const AdjacencyGraph& graph) {
  const int A = graph.n_areas();
  SparseSymmetric out(A);
  for (int a = 0; a < A; ++a)
    if (graph.degree(a) > 0) out.add(a, a, static_cast<double>(graph.degree(a)));
  for (auto [a, b] : graph.pairs()) out.add(a - 1, b - 1, -1.0);
  return out;
}

SparseSymmetric build_interaction_structure(const SparseSymmetric& Rv,
                                            const SparseSymmetric& Ru) {
  const int T = Rv.dim();
  const int A = Ru.dim();
  SparseSymmetric out(T * A);
  // (a, s) -> (s-1)*A + a, so time indexes the outer Kronecker factor.
  for (const auto& ev : Rv.entries()) {
    for (const auto& eu : Ru.entries()) {
      const double val = ev.value * eu.value;
      if (val == 0.0) continue;
      // Expand the implied symmetric pairs of both factors once each.
      const int vi[2] = {ev.row, ev.col};
      const int ui[2] = {eu.row, eu.col};
      const bool v_off = ev.row != ev.col;
      const bool u_off = eu.row != eu.col;
      auto emit = [&](int s1, int s2, int a1, int a2) {
        const int i = s1 * A + a1;
        const int j = s2 * A + a2;
        if (i <= j) out.add(i, j, val);
      };
      emit(vi[0], vi[1], ui[0], ui[1]);
      if (u_off) emit(vi[0], vi[1], ui[1], ui[0]);
      if (v_off) {
        emit(vi[1], vi[0], ui[0], ui[1]);
        if (u_off) emit(vi[1], vi[0], ui[1], ui[0]);
      }
    }
  }
  return out;
}

ConstraintSet build_constraints(int T, int A, Variant variant,
                                const std::optional<BlockOffsets>& offsets) {
  if (T < 3) throw std::invalid_argument("build_constraints: T must be >= 3");
  if (variant != Variant::M1 && A < 1)
    throw std::invalid_argument("build_constraints: A must be >= 1 for spatial variants");

  BlockOffsets off;
  if (offsets) {
    off = *offsets;
  } else {
    off.v = 0;
    off.u = T;
    off.delta = T + (variant == Variant::M1 ? 0 : A);
    off.dim = T + (variant == Variant::M1 ? 0 : A) + (variant == Variant::M3 ? T * A : 0);
  }

  int k = 1;
  if (variant != Variant::M1) k += 1;
  if (variant == Variant::M3) k += A + T - 1;

  ConstraintSet cs;
  cs.rows = Eigen::MatrixXd::Zero(k, off.dim);
  cs.rhs = Eigen::VectorXd::Zero(k);

  int r = 0;
  for (int s = 0; s < T; ++s) cs.rows(r, off.v + s) = 1.0;  // sum_s v_s = 0
  ++r;
  if (variant != Variant::M1) {
    for (int a = 0; a < A; ++a) cs.rows(r, off.u + a) = 1.0;  // sum_a u_a = 0
    ++r;
  }
  if (variant == Variant::M3) {
    // sum_s delta_{a,s} = 0 for every area.
    for (int a = 0; a < A; ++a, ++r)
      for (int s = 0; s < T; ++s) cs.rows(r, off.delta + s * A + a) = 1.0;
    // sum_a delta_{a,s} = 0 for every time except the last (redundant row).
    for (int s = 0; s + 1 < T; ++s, ++r)
      for (int a = 0; a < A; ++a) cs.rows(r, off.delta + s * A + a) = 1.0;
  }
  return cs;
}

SparseSymmetric add_jitter(const SparseSymmetric& Q, double eps) {
  SparseSymmetric out = Q;
  for (int i = 0; i < Q.dim(); ++i) out.add(i, i, eps);
  return out;
}

void SparseChol::factorize(const Eigen::SparseMatrix<double>& Q) {
  ldlt_.analyzePattern(Q);
  analyzed_ = true;
  refactorize(Q);
}

void SparseChol::refactorize(const Eigen::SparseMatrix<double>& Q) {
  if (!analyzed_) {
    factorize(Q);
    return;
  }
  ldlt_.factorize(Q);
  if (ldlt_.info() != Eigen::Success) throw NotPositiveDefiniteError(-1);
  const auto& D = ldlt_.vectorD();
  for (int i = 0; i < D.size(); ++i)
    if (!(D(i) > 0.0)) throw NotPositiveDefiniteError(i);
}

Eigen::VectorXd SparseChol::solve(const Eigen::VectorXd& b) const { return ldlt_.solve(b); }

Eigen::MatrixXd SparseChol::solve(const Eigen::MatrixXd& b) const { return ldlt_.solve(b); }

double SparseChol::log_det() const {
  return ldlt_.vectorD().array().log().sum();
}

Eigen::VectorXd SparseChol::sample(Rng& rng) const {
  // Q = P' L D L' P, so x = P' L^-T D^-1/2 z has covariance Q^-1.
  const int n = static_cast<int>(ldlt_.vectorD().size());
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.normal();
  z.array() /= ldlt_.vectorD().array().sqrt();
  Eigen::SparseMatrix<double> L = ldlt_.matrixL();
  Eigen::VectorXd y = L.transpose().triangularView<Eigen::Upper>().solve(z);
  return ldlt_.permutationPinv() * y;
}

ConstraintProjector::ConstraintProjector(const SparseChol& chol,
                                         const ConstraintSet& constraints) {
  if (constraints.empty()) return;
  active_ = true;
  constraints_ = &constraints;
  QinvAt_ = chol.solve(Eigen::MatrixXd(constraints.rows.transpose()));
  Eigen::MatrixXd S = constraints.rows * QinvAt_;
  small_llt_.compute(S);
  if (small_llt_.info() != Eigen::Success)
    throw std::runtime_error("constraint projection: A Q^-1 A' not positive definite");
  log_det_ = 2.0 * small_llt_.matrixLLT().diagonal().array().log().sum();
}

Eigen::VectorXd ConstraintProjector::project(const Eigen::VectorXd& x) const {
  if (!active_) return x;
  Eigen::VectorXd resid = constraints_->rows * x - constraints_->rhs;
  return x - QinvAt_ * small_llt_.solve(resid);
}

double ConstraintProjector::variance_correction(const Eigen::VectorXd& Qinv_ej) const {
  if (!active_) return 0.0;
  Eigen::VectorXd ax = constraints_->rows * Qinv_ej;
  return ax.dot(small_llt_.solve(ax));
}

Eigen::MatrixXd sample_constrained_gaussian(const SparseSymmetric& Q,
                                            const Eigen::VectorXd& mean,
                                            const ConstraintSet& constraints,
                                            int n, Rng& rng) {
  if (mean.size() != Q.dim())
    throw std::invalid_argument("sample_constrained_gaussian: mean size mismatch");
  if (!constraints.empty() && constraints.dim() != Q.dim())
    throw std::invalid_argument("sample_constrained_gaussian: constraint dim mismatch");
  SparseChol chol;
  chol.factorize(Q.to_eigen());
  ConstraintProjector proj(chol, constraints);
  Eigen::MatrixXd out(Q.dim(), n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd x = mean + chol.sample(rng);
    out.col(j) = proj.project(x);
  }
  return out;
}

IcarConditional icar_full_conditional(const Eigen::VectorXd& u, int area0,
                                      const AdjacencyGraph& graph, double tau_u) {
  if (area0 < 0 || area0 >= graph.n_areas())
    throw std::out_of_range("icar_full_conditional: area out of range");
  const int m = graph.degree(area0);
  if (m == 0)
    throw std::runtime_error("icar_full_conditional: area " + std::to_string(area0 + 1) +
                             " has no neighbours; conditional is degenerate");
  double s = 0.0;
  for (int nb : graph.neighbours(area0)) s += u(nb);
  return {s / m, 1.0 / (tau_u * m)};
}

}  // namespace stjm
