#include "stjm/hyper.hpp"

#include <cmath>

namespace stjm {

Eigen::Matrix2d HyperParams::q_u() const {
  const double c = rho_01 * std::sqrt(tau_U0 * tau_U1);
  const double f = 1.0 / (1.0 - rho_01 * rho_01);
  Eigen::Matrix2d q;
  q << f * tau_U0, -f * c, -f * c, f * tau_U1;
  return q;
}

double HyperParams::log_det_q_u() const {
  return std::log(tau_U0) + std::log(tau_U1) - std::log1p(-rho_01 * rho_01);
}

void HyperParams::validate() const {
  auto check_pos = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("invalid hyperparameter: ") + name +
                                  " must be positive and finite");
  };
  check_pos(tau_Y, "tau_Y");
  check_pos(tau_U0, "tau_U0");
  check_pos(tau_U1, "tau_U1");
  check_pos(tau_v, "tau_v");
  check_pos(tau_u, "tau_u");
  check_pos(tau_delta, "tau_delta");
  if (!(std::abs(rho_01) < 1.0))
    throw std::invalid_argument("invalid hyperparameter: rho_01 must lie in (-1, 1)");
  if (!std::isfinite(lambda))
    throw std::invalid_argument("invalid hyperparameter: lambda must be finite");
}

const char* hyper_name(Hyper h) {
  switch (h) {
    case Hyper::TauY: return "tau_Y";
    case Hyper::TauU0: return "tau_U0";
    case Hyper::TauU1: return "tau_U1";
    case Hyper::Rho01: return "rho_01";
    case Hyper::Lambda: return "lambda";
    case Hyper::TauV: return "tau_v";
    case Hyper::TauU: return "tau_u";
    case Hyper::TauDelta: return "tau_delta";
  }
  return "?";
}

bool hyper_is_precision(Hyper h) {
  return h != Hyper::Rho01 && h != Hyper::Lambda;
}

double hyper_get(const HyperParams& p, Hyper h) {
  switch (h) {
    case Hyper::TauY: return p.tau_Y;
    case Hyper::TauU0: return p.tau_U0;
    case Hyper::TauU1: return p.tau_U1;
    case Hyper::Rho01: return p.rho_01;
    case Hyper::Lambda: return p.lambda;
    case Hyper::TauV: return p.tau_v;
    case Hyper::TauU: return p.tau_u;
    case Hyper::TauDelta: return p.tau_delta;
  }
  return 0.0;
}

void hyper_set(HyperParams& p, Hyper h, double value) {
  switch (h) {
    case Hyper::TauY: p.tau_Y = value; break;
    case Hyper::TauU0: p.tau_U0 = value; break;
    case Hyper::TauU1: p.tau_U1 = value; break;
    case Hyper::Rho01: p.rho_01 = value; break;
    case Hyper::Lambda: p.lambda = value; break;
    case Hyper::TauV: p.tau_v = value; break;
    case Hyper::TauU: p.tau_u = value; break;
    case Hyper::TauDelta: p.tau_delta = value; break;
  }
}

double HyperMap::to_internal_component(Hyper h, double natural) {
  if (hyper_is_precision(h)) return std::log(natural);
  if (h == Hyper::Rho01) return std::atanh(natural);
  return natural;
}

double HyperMap::from_internal_component(Hyper h, double internal) {
  if (hyper_is_precision(h)) return std::exp(internal);
  if (h == Hyper::Rho01) return std::tanh(internal);
  return internal;
}

Eigen::VectorXd HyperMap::to_internal(const HyperParams& p) const {
  Eigen::VectorXd x(size());
  for (int i = 0; i < size(); ++i)
    x(i) = to_internal_component(active_[i], hyper_get(p, active_[i]));
  return x;
}

HyperParams HyperMap::from_internal(const Eigen::VectorXd& x) const {
  HyperParams p = base_;
  for (int i = 0; i < size(); ++i)
    hyper_set(p, active_[i], from_internal_component(active_[i], x(i)));
  return p;
}

namespace {

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
}

double component_log_prior_internal(Hyper h, double internal, const HyperPriorSettings& s) {
  if (hyper_is_precision(h)) {
    // Gamma(shape, rate) on tau plus the log-transform Jacobian.
    const double tau = std::exp(internal);
    const double natural_logpdf = s.prec_shape * std::log(s.prec_rate) -
                                  std::lgamma(s.prec_shape) +
                                  (s.prec_shape - 1.0) * std::log(tau) - s.prec_rate * tau;
    return natural_logpdf + internal;
  }
  if (h == Hyper::Rho01) return log_normal_pdf(internal, s.rho_z_mean, s.rho_z_sd);
  return log_normal_pdf(internal, s.lambda_mean, s.lambda_sd);
}

}  // namespace

double HyperMap::log_prior_internal(const Eigen::VectorXd& x,
                                    const HyperPriorSettings& s) const {
  double total = 0.0;
  for (int i = 0; i < size(); ++i)
    total += component_log_prior_internal(active_[i], x(i), s);
  return total;
}

double log_hyper_prior(const HyperParams& p, const HyperPriorSettings& s,
                       const std::vector<Hyper>& active) {
  double total = 0.0;
  for (Hyper h : active) {
    const double internal = HyperMap::to_internal_component(h, hyper_get(p, h));
    total += component_log_prior_internal(h, internal, s);
  }
  return total;
}

}  // namespace stjm
