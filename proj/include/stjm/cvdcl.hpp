#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stjm/laplace.hpp"
#include "stjm/mcmc.hpp"
#include "stjm/model.hpp"

namespace stjm {

enum class HiMethod { Laplace, Eb, Quadrature };

HiMethod hi_method_from_string(const std::string& s);
std::string hi_method_to_string(HiMethod m);

// log p(T_i, delta_i | T_i > t, y_i(t), theta, U_i, mu_{-U_i}): the
// discrete-time Bernoulli log likelihood of the observed post-t outcome.
double conditional_event_loglik(const ModelDefinition& model, const HyperParams& theta,
                                const Eigen::VectorXd& mu, const Eigen::Vector2d& u_i,
                                int loan, int t);

struct HiStats {
  long evaluations = 0;
  long quadrature_fallbacks = 0;
};

// log of h_i = int p(U_i | T_i>t, y_i(t), theta, mu_{-U_i})
//                  / p(T_i, delta_i | T_i>t, y_i(t), theta, U_i, mu_{-U_i}) dU_i.
// "laplace": ratio of Laplace approximations; "eb": plug-in at the numerator
// mode; "quadrature": 2-D adaptive Gauss-Hermite (the oracle). A Laplace
// Hessian that is not negative definite at the mode falls back to
// quadrature and counts in stats.
double h_i_log(const ModelDefinition& model, const HyperParams& theta,
               const Eigen::VectorXd& mu, int loan, int t, HiMethod method,
               int quadrature_nodes = 25, HiStats* stats = nullptr);

double h_i(const ModelDefinition& model, const HyperParams& theta, const Eigen::VectorXd& mu,
           int loan, int t, HiMethod method, int quadrature_nodes = 25,
           HiStats* stats = nullptr);

struct CvdclEvaluation {
  int t = 0;
  int n_at_risk = 0;
  double estimate = 0.0;
  double mc_se = 0.0;
  std::map<int, double> by_area;  // exact partition of the estimate
};

struct CvdclOptions {
  int draws_per_point = 50;  // R
  HiMethod method = HiMethod::Laplace;
  std::uint64_t seed = 1;
  int n_batches = 20;  // MCMC batching
  int threads = 1;
  int quadrature_nodes = 25;
};

// Eq.-9-style grid estimate with the delta-method Monte Carlo variance.
CvdclEvaluation cvdcl_inla(const ModelDefinition& model, const FitResult& fit, int t,
                           const CvdclOptions& options, HiStats* stats = nullptr);

// Appendix-A-style estimate over posterior draws with batching variance.
CvdclEvaluation cvdcl_mcmc(const ModelDefinition& model, const ChainResult& chain, int t,
                           const CvdclOptions& options);

// Per-area differences (lhs - rhs), keyed by area id.
std::map<int, double> cvdcl_area_difference(const CvdclEvaluation& lhs,
                                            const CvdclEvaluation& rhs);

struct CvdclReport {
  std::string model_name;
  std::string method;  // inla-laplace | inla-eb | inla-quadrature | mcmc
  std::vector<CvdclEvaluation> evaluations;
};

void write_cvdcl_csv(const std::string& path, const std::vector<CvdclReport>& reports);
void write_area_csv(const std::string& path, const CvdclReport& report,
                    const CvdclReport* baseline);

}  // namespace stjm
