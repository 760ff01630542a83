#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "stjm/gmrf.hpp"
#include "stjm/model.hpp"

namespace stjm {

class Rng;

struct ModeResult {
  Eigen::VectorXd mode;
  int iterations = 0;
  bool converged = false;
  std::vector<double> step_norms;
};

struct NewtonError : std::runtime_error {
  NewtonError(const std::string& what, std::vector<double> trace)
      : std::runtime_error(what), step_norms(std::move(trace)) {}
  std::vector<double> step_norms;
};

// Working-precision assembly and constrained Gaussian operations shared by
// the Laplace and MCMC engines. The sparsity pattern (prior + likelihood
// cross-products + constraint regularization) is computed once; assemblies
// only rewrite values and refactorize.
//
// The assembled matrix is Q = Q_prior(theta) + H_lik(mu) + eps * A'A. The
// A'A term leaves every constrained quantity unchanged (A x = 0 on the
// manifold) and keeps Q positive definite when intrinsic blocks overlap.
class LatentSystem {
 public:
  explicit LatentSystem(const ModelDefinition& model);

  const ModelDefinition& model() const { return *model_; }
  int dim() const { return model_->layout().dim; }

  // Rebuilds values at (theta, mu), factorizes, and prepares the constraint
  // projector. Throws NotPositiveDefiniteError if the working precision is
  // not positive definite.
  void assemble(const HyperParams& theta, const Eigen::VectorXd& mu);

  // log p(D|mu,theta) + log prior kernel (normalizers dropped); the Newton
  // objective.
  double objective(const Eigen::VectorXd& mu, const HyperParams& theta) const;

  // Gradient of the objective at mu.
  Eigen::VectorXd gradient(const Eigen::VectorXd& mu, const HyperParams& theta) const;

  // Constrained Newton with conditioning-by-kriging projection each iterate
  // and step halving when the objective decreases. Leaves the system
  // assembled at the last iterate (or exactly at the mode when
  // refactor_at_mode is set).
  ModeResult newton_mode(const HyperParams& theta, const Eigen::VectorXd& init,
                         bool refactor_at_mode = true, int max_iter = 50,
                         double tol = 1e-6);

  // Queries against the current factorization.
  const Eigen::SparseMatrix<double>& matrix() const { return Q_; }
  const SparseChol& chol() const { return chol_; }
  const ConstraintProjector& projector() const { return projector_; }

  // Log density value at the constrained mode of the constrained Gaussian:
  // -((n-k)/2) log 2pi + 1/2 log det Q + 1/2 log det(A Q^-1 A').
  double log_gaussian_normalizer() const;

  // Draw from the constrained Gaussian centred at mode.
  Eigen::VectorXd sample_constrained(const Eigen::VectorXd& mode, Rng& rng) const;

  // (x - center)' Q (x - center) for the assembled Q.
  double quad_form(const Eigen::VectorXd& center, const Eigen::VectorXd& x) const;

  // Constrained marginal variance of one latent coordinate.
  double marginal_variance(int coord) const;

 private:
  void build_pattern();
  int slot(int i, int j) const;

  const ModelDefinition* model_;
  Eigen::SparseMatrix<double> Q_;  // full symmetric pattern, compressed
  SparseChol chol_;
  ConstraintProjector projector_;

  // Prior slot maps.
  std::vector<int> slots_qu00_, slots_qu01a_, slots_qu01b_, slots_qu11_;
  std::vector<int> slots_tauf_;
  std::vector<int> slots_v_, slots_u_, slots_d_;
  std::vector<double> vals_v_, vals_u_, vals_d_;  // unscaled structure values
  std::vector<int> slots_con_;
  std::vector<double> vals_con_;  // eps * A'A values

  // Gaussian rows aggregate to a single tau_Y-scaled pattern.
  std::vector<int> slots_y_;
  std::vector<double> vals_y_;

  // Bernoulli rows: per-row pair lists into local design values.
  struct PairOp {
    int slot_ab;
    int slot_ba;  // equals slot_ab on the diagonal
    unsigned char a, b;
  };
  std::vector<std::vector<PairOp>> row_pairs_;

  static constexpr double kConstraintScale = 1.0;
};

}  // namespace stjm
