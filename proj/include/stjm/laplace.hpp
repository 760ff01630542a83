#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "stjm/latent_system.hpp"
#include "stjm/model.hpp"

namespace stjm {

class Rng;

// Constrained Gaussian approximation of the latent field at one
// hyperparameter point.
struct GaussApprox {
  HyperParams theta;
  Eigen::VectorXd mode;
  SparseSymmetric precision;  // working precision at the mode
  double log_marginal = 0.0;  // unnormalized internal-scale log p(theta|D)
  int iterations = 0;
  bool converged = false;
  // Constrained marginal variances for the tracked coordinates.
  std::vector<int> tracked_coords;
  Eigen::VectorXd tracked_variance;
};

struct GridPoint {
  Eigen::VectorXd z;  // standardized coordinates around the mode
  Eigen::VectorXd theta_internal;
  double delta_w = 1.0;  // integration weight Delta_w
  double weight = 0.0;   // normalized p(theta_w|D) Delta_w
  GaussApprox approx;
};

enum class GridStrategy { Auto, Grid, Ccd, Eb };

GridStrategy grid_strategy_from_string(const std::string& s);

struct FitOptions {
  GridStrategy strategy = GridStrategy::Auto;
  double step = 1.0;       // axis step in standardized units ("grid")
  double log_drop = 2.5;   // keep axis points while the drop is below this
  int max_axis_points = 10;
  double ccd_f0 = 1.1;
  double max_internal_sd = 3.0;
  int nm_max_eval = 800;
  double nm_tol = 1e-5;
  double nm_init_step = 0.4;
  HyperParams init;
  std::vector<int> extra_tracked_coords;  // latent coords beyond the fixed block
};

struct ParamSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

struct FitResult {
  Variant variant = Variant::M1;
  std::vector<Hyper> active_hypers;
  HyperParams mode_theta;
  int mode_index = 0;
  std::vector<GridPoint> grid;
  std::vector<ParamSummary> summaries;

  const GridPoint& mode_point() const { return grid[mode_index]; }
  double weight_sum() const;
};

// One-shot public operations (each builds a private engine).
GaussApprox gaussian_approximation(const ModelDefinition& model, const HyperParams& theta);
double log_posterior_hyper(const ModelDefinition& model, const HyperParams& theta);
FitResult fit(const ModelDefinition& model, const FitOptions& options = {});

// Weighted posterior draws: grid point selected by normalized weight, then
// one constrained Gaussian draw at that point.
std::vector<std::pair<int, Eigen::VectorXd>> sample_latent(const ModelDefinition& model,
                                                           const FitResult& fit, int n_draws,
                                                           std::uint64_t seed);

// Reusable engine: shares the assembled sparsity pattern and warm starts
// across hyperparameter evaluations.
class LaplaceEngine {
 public:
  explicit LaplaceEngine(const ModelDefinition& model);

  const ModelDefinition& model() const { return *model_; }
  LatentSystem& system() { return sys_; }

  GaussApprox approximate(const HyperParams& theta,
                          const std::vector<int>& tracked_coords = {});
  double log_posterior(const HyperParams& theta);
  FitResult fit(const FitOptions& options = {});

  // Re-assembles the system at a stored grid point (for sampling).
  void load_grid_point(const GridPoint& gp);

 private:
  double evidence_at_mode(const HyperParams& theta, const Eigen::VectorXd& mode);

  const ModelDefinition* model_;
  LatentSystem sys_;
  Eigen::VectorXd warm_;
  bool has_warm_ = false;
};

// Default tracked coordinates: the fixed-effect block (beta1, beta2, nu0).
std::vector<int> default_tracked_coords(const ModelDefinition& model);
std::vector<std::string> tracked_coord_names(const ModelDefinition& model,
                                             const std::vector<int>& coords);

void write_fit_summary_csv(const std::string& path, const FitResult& fit);

}  // namespace stjm
