#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace stjm {

// Full hyperparameter set. Which fields are active depends on the model
// variant; inactive ones keep their defaults.
struct HyperParams {
  double tau_Y = 1.0;
  double tau_U0 = 1.0;
  double tau_U1 = 1.0;
  double rho_01 = 0.0;
  double lambda = 0.0;
  double tau_v = 1.0;
  double tau_u = 1.0;
  double tau_delta = 1.0;

  // 2x2 random-effect precision from marginal precisions and correlation.
  Eigen::Matrix2d q_u() const;
  double log_det_q_u() const;
  void validate() const;
};

enum class Hyper { TauY, TauU0, TauU1, Rho01, Lambda, TauV, TauU, TauDelta };

const char* hyper_name(Hyper h);
bool hyper_is_precision(Hyper h);

double hyper_get(const HyperParams& p, Hyper h);
void hyper_set(HyperParams& p, Hyper h, double value);

struct HyperPriorSettings {
  double prec_shape = 1.0;
  double prec_rate = 5e-5;
  double lambda_mean = 0.0;
  double lambda_sd = 10.0;
  double rho_z_mean = 0.0;
  double rho_z_sd = 1.0;
};

// Maps the active hyperparameters to an unconstrained internal vector:
// log precisions, Fisher-transformed correlation, identity for lambda.
class HyperMap {
 public:
  HyperMap() = default;
  HyperMap(std::vector<Hyper> active, HyperParams base)
      : active_(std::move(active)), base_(base) {}

  int size() const { return static_cast<int>(active_.size()); }
  const std::vector<Hyper>& active() const { return active_; }
  const HyperParams& base() const { return base_; }

  Eigen::VectorXd to_internal(const HyperParams& p) const;
  HyperParams from_internal(const Eigen::VectorXd& x) const;

  static double to_internal_component(Hyper h, double natural);
  static double from_internal_component(Hyper h, double internal);

  // Log prior on the internal scale (Jacobians for log-precisions included;
  // the correlation prior is placed directly on the Fisher scale).
  double log_prior_internal(const Eigen::VectorXd& x, const HyperPriorSettings& s) const;

 private:
  std::vector<Hyper> active_;
  HyperParams base_;
};

// Sum of the active components' log prior densities for a natural-scale
// parameter set, evaluated on the internal scale.
double log_hyper_prior(const HyperParams& p, const HyperPriorSettings& s,
                       const std::vector<Hyper>& active);

}  // namespace stjm
