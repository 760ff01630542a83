#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stjm/graph.hpp"
#include "stjm/sparse.hpp"

namespace stjm {

class Rng;

enum class Variant { M1, M2, M3 };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

// Linear equality constraints A x = rhs over a latent vector.
struct ConstraintSet {
  Eigen::MatrixXd rows;  // k x dim
  Eigen::VectorXd rhs;   // k (all zeros here)

  int count() const { return static_cast<int>(rows.rows()); }
  int dim() const { return static_cast<int>(rows.cols()); }
  bool empty() const { return rows.rows() == 0; }
};

// Offsets of the constrained blocks inside a larger latent vector. The
// default places v, u, delta contiguously from zero.
struct BlockOffsets {
  int dim = 0;
  int v = 0;
  int u = 0;
  int delta = 0;
};

struct NotPositiveDefiniteError : std::runtime_error {
  explicit NotPositiveDefiniteError(int pivot_index)
      : std::runtime_error("matrix not positive definite at pivot index " +
                           std::to_string(pivot_index)),
        pivot(pivot_index) {}
  int pivot;
};

// T x T second-order random walk structure matrix D'D, rank T-2.
SparseSymmetric build_rw2_structure(int T);

// A x A intrinsic CAR structure matrix: degree on the diagonal, -1 between
// neighbours. Rank A - (number of connected components).
SparseSymmetric build_icar_structure(const AdjacencyGraph& graph);

// Kronecker interaction R_delta = R_v (x) R_u; index (a, s), both 1-based,
// maps to (s-1)*A + a.
SparseSymmetric build_interaction_structure(const SparseSymmetric& Rv,
                                            const SparseSymmetric& Ru);

// Sum-to-zero constraints for the requested variant, mapped into a latent
// vector described by offsets. M3 drops the last area-sum row (the A + T
// interaction sums have rank A + T - 1).
ConstraintSet build_constraints(int T, int A, Variant variant,
                                const std::optional<BlockOffsets>& offsets = std::nullopt);

// Draws from N(mean, Q^-1) conditioned on the constraint rows via
// conditioning by kriging: x_c = x - Q^-1 A' (A Q^-1 A')^-1 (A x - rhs).
// Q must be positive definite; intrinsic structure matrices need diagonal
// jitter before standalone sampling (see add_jitter).
Eigen::MatrixXd sample_constrained_gaussian(const SparseSymmetric& Q,
                                            const Eigen::VectorXd& mean,
                                            const ConstraintSet& constraints,
                                            int n, Rng& rng);

// Q + eps * diag scale, used to regularize intrinsic precisions for
// standalone prior sampling.
SparseSymmetric add_jitter(const SparseSymmetric& Q, double eps);

// Closed-form ICAR full conditional of u_a given the rest:
// mean = average of neighbour values, variance = 1 / (tau_u * m_a).
struct IcarConditional {
  double mean;
  double variance;
};
IcarConditional icar_full_conditional(const Eigen::VectorXd& u, int area0,
                                      const AdjacencyGraph& graph, double tau_u);

// Shared sparse Cholesky wrapper. Reports the offending pivot on failure.
class SparseChol {
 public:
  void factorize(const Eigen::SparseMatrix<double>& Q);
  // Re-uses the symbolic analysis when the pattern is unchanged.
  void refactorize(const Eigen::SparseMatrix<double>& Q);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  double log_det() const;
  // Draws x ~ N(0, Q^-1).
  Eigen::VectorXd sample(Rng& rng) const;
  bool ready() const { return analyzed_; }

 private:
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool analyzed_ = false;
};

// Kriging correction helper: caches Q^-1 A' and the small dense factor of
// A Q^-1 A' for repeated projections with one factorization.
class ConstraintProjector {
 public:
  ConstraintProjector() = default;
  ConstraintProjector(const SparseChol& chol, const ConstraintSet& constraints);
  // Projects x onto {A x = rhs}.
  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
  // log det(A Q^-1 A'), needed for constrained density normalization.
  double log_det_AQinvAt() const { return log_det_; }
  // (A x)' (A Q^-1 A')^-1 (A x) for x = Q^-1 e_j; the reduction of the
  // unconstrained marginal variance due to the constraints.
  double variance_correction(const Eigen::VectorXd& Qinv_ej) const;
  bool active() const { return active_; }

 private:
  bool active_ = false;
  const ConstraintSet* constraints_ = nullptr;
  Eigen::MatrixXd QinvAt_;      // dim x k
  Eigen::LLT<Eigen::MatrixXd> small_llt_;
  double log_det_ = 0.0;
};

}  // namespace stjm
