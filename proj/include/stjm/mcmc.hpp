#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stjm/hyper.hpp"
#include "stjm/laplace.hpp"
#include "stjm/model.hpp"

namespace stjm {

struct McmcConfig {
  int iterations = 20000;
  int burn_in = 5000;
  int thin = 5;
  std::uint64_t seed = 1;
  HyperParams init;
  std::vector<Hyper> fixed;  // hyperparameters held at their init values
  double init_rw_scale = 0.3;
  int adapt_interval = 50;
  // Random-walk acceptance band targeted during burn-in adaptation.
  double target_accept_lo = 0.23;
  double target_accept_hi = 0.44;
};

// Thinned post-burn-in draws of (latent field, hyperparameters).
struct ChainResult {
  std::vector<Hyper> sampled_hypers;
  HyperParams base;               // fixed components and starting values
  Eigen::MatrixXd latent;         // G x dim
  Eigen::MatrixXd hyper_internal; // G x n_sampled
  double latent_accept = 0.0;
  Eigen::VectorXd hyper_accept;   // per sampled hyperparameter
  std::uint64_t seed = 0;
  int iterations = 0;
  int burn_in = 0;
  int thin = 1;

  int size() const { return static_cast<int>(latent.rows()); }
  HyperParams theta_at(int g) const;
};

ChainResult run_mcmc(const ModelDefinition& model, const McmcConfig& config);
ChainResult run_mcmc(const ModelDefinition& model, int iterations, int burn_in, int thin,
                     std::uint64_t seed);

struct EssResult {
  double ess = 0.0;
  bool degenerate = false;
};

// Effective sample size by Geyer's initial monotone sequence estimator.
EssResult effective_sample_size(const Eigen::VectorXd& x);

struct ChainDiagnostics {
  std::vector<std::string> names;
  std::vector<double> ess;
  std::vector<bool> degenerate;
  std::vector<double> trace_min, trace_max;
  double latent_accept = 0.0;
  Eigen::VectorXd hyper_accept;
};

// Per-parameter diagnostics for the sampled hyperparameters plus the given
// latent coordinates (default: the fixed-effect block).
ChainDiagnostics diagnostics(const ChainResult& chain, const ModelDefinition& model,
                             std::vector<int> latent_coords = {});

// Posterior summaries from the draws, mirroring the fit summary layout:
// fixed effects first, then hyperparameters.
std::vector<ParamSummary> chain_summary(const ChainResult& chain, const ModelDefinition& model);

void save_chain(const ChainResult& chain, const std::string& path);
ChainResult load_chain(const std::string& path);

}  // namespace stjm
