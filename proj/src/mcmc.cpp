#include "stjm/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "stjm/latent_system.hpp"
#include "stjm/rng.hpp"

namespace stjm {

HyperParams ChainResult::theta_at(int g) const {
  HyperParams p = base;
  for (std::size_t j = 0; j < sampled_hypers.size(); ++j)
    hyper_set(p, sampled_hypers[j],
              HyperMap::from_internal_component(sampled_hypers[j],
                                                hyper_internal(g, static_cast<int>(j))));
  return p;
}

namespace {

// Per-latent caches that make single-hyperparameter Metropolis updates
// O(rows) at worst (lambda) and O(1) otherwise.
struct LikCaches {
  double ssr = 0.0;  // sum of squared longitudinal residuals
  int n_long = 0;
  std::vector<double> base_x;  // survival predictor without the U share
  std::vector<double> u_term;  // U_0i + U_1i s per row
  PriorQuad quad;

  void rebuild(const ModelDefinition& model, const Eigen::VectorXd& mu) {
    const auto& rows = model.row_designs();
    ssr = 0.0;
    n_long = static_cast<int>(rows.size());
    base_x.resize(rows.size());
    u_term.resize(rows.size());
    const auto& lay = model.layout();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& d = rows[r];
      const double ry = d.y - model.eta_y(mu, d);
      ssr += ry * ry;
      if (lay.has_survival) {
        base_x[r] = d.x_static.dot(mu);
        u_term[r] = mu(lay.u0(d.loan)) + d.s * mu(lay.u1(d.loan));
      }
    }
    quad = model.prior_quad(mu);
  }

  double log_lik(const ModelDefinition& model, const HyperParams& theta) const {
    double total = 0.5 * n_long * (std::log(theta.tau_Y) - std::log(2.0 * M_PI)) -
                   0.5 * theta.tau_Y * ssr;
    if (model.layout().has_survival) {
      const auto& rows = model.row_designs();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const double eta = base_x[r] + theta.lambda * u_term[r];
        total += rows[r].x * eta - log1p_exp(eta);
      }
    }
    return total;
  }
};

}  // namespace

ChainResult run_mcmc(const ModelDefinition& model, int iterations, int burn_in, int thin,
                     std::uint64_t seed) {
  McmcConfig cfg;
  cfg.iterations = iterations;
  cfg.burn_in = burn_in;
  cfg.thin = thin;
  cfg.seed = seed;
  return run_mcmc(model, cfg);
}

ChainResult run_mcmc(const ModelDefinition& model, const McmcConfig& config) {
  if (config.iterations <= config.burn_in)
    throw std::invalid_argument("run_mcmc: iterations must exceed burn_in");
  if (config.thin < 1) throw std::invalid_argument("run_mcmc: thin must be >= 1");
  config.init.validate();

  std::vector<Hyper> sampled;
  for (Hyper h : model.active_hypers())
    if (std::find(config.fixed.begin(), config.fixed.end(), h) == config.fixed.end())
      sampled.push_back(h);
  const int m = static_cast<int>(sampled.size());

  Rng rng(config.seed);
  LatentSystem sys(model);
  const int dim = model.layout().dim;

  HyperParams theta = config.init;
  Eigen::VectorXd x_int(m);
  for (int j = 0; j < m; ++j)
    x_int(j) = HyperMap::to_internal_component(sampled[j], hyper_get(theta, sampled[j]));

  const HyperPriorSettings& priors = model.config().priors;
  auto hyper_log_prior = [&](const Eigen::VectorXd& x) {
    HyperMap hm(sampled, theta);
    return hm.log_prior_internal(x, priors);
  };

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(dim);
  LikCaches caches;
  caches.rebuild(model, mu);

  auto log_target_theta = [&](const HyperParams& th) {
    return caches.log_lik(model, th) + model.latent_prior_normalizer(th) -
           0.5 * model.prior_quad_value(caches.quad, th) + hyper_log_prior([&] {
             Eigen::VectorXd x(m);
             for (int j = 0; j < m; ++j)
               x(j) = HyperMap::to_internal_component(sampled[j], hyper_get(th, sampled[j]));
             return x;
           }());
  };

  Eigen::VectorXd scales = Eigen::VectorXd::Constant(m, config.init_rw_scale);
  Eigen::VectorXi window_acc = Eigen::VectorXi::Zero(m);
  Eigen::VectorXi window_tot = Eigen::VectorXi::Zero(m);
  Eigen::VectorXd total_acc = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd total_tot = Eigen::VectorXd::Zero(m);
  long latent_acc = 0, latent_tot = 0;

  const int n_stored = (config.iterations - config.burn_in) / config.thin;
  ChainResult chain;
  chain.sampled_hypers = sampled;
  chain.base = config.init;
  chain.latent.resize(n_stored, dim);
  chain.hyper_internal.resize(n_stored, m);
  chain.seed = config.seed;
  chain.iterations = config.iterations;
  chain.burn_in = config.burn_in;
  chain.thin = config.thin;

  Eigen::VectorXd warm = Eigen::VectorXd::Zero(dim);
  double cur_target_theta = log_target_theta(theta);
  int stored = 0;

  for (int it = 0; it < config.iterations; ++it) {
    // Latent block: independence proposal from the Gaussian approximation
    // at the current theta, accepted with the exact likelihood ratio.
    bool approx_ok = true;
    try {
      ModeResult mr = sys.newton_mode(theta, warm, /*refactor_at_mode=*/false);
      warm = mr.mode;
    } catch (const NewtonError&) {
      try {
        ModeResult mr = sys.newton_mode(theta, Eigen::VectorXd::Zero(dim), false);
        warm = mr.mode;
      } catch (const NewtonError&) {
        approx_ok = false;  // keep the current latent state this sweep
      }
    }
    ++latent_tot;
    if (approx_ok) {
      Eigen::VectorXd prop = sys.sample_constrained(warm, rng);
      const double g_cur = sys.objective(mu, theta);
      const double g_prop = sys.objective(prop, theta);
      const double q_cur = sys.quad_form(warm, mu);
      const double q_prop = sys.quad_form(warm, prop);
      const double log_alpha = (g_prop - g_cur) + 0.5 * (q_prop - q_cur);
      if (std::log(rng.uniform()) < log_alpha) {
        mu = prop;
        caches.rebuild(model, mu);
        cur_target_theta = log_target_theta(theta);
        ++latent_acc;
      }
    }

    // Hyperparameters: single-site random-walk Metropolis on the internal
    // scale, adapted during burn-in.
    for (int j = 0; j < m; ++j) {
      const double old_int = x_int(j);
      const double prop_int = old_int + scales(j) * rng.normal();
      HyperParams prop_theta = theta;
      hyper_set(prop_theta, sampled[j],
                HyperMap::from_internal_component(sampled[j], prop_int));
      x_int(j) = prop_int;
      double prop_target;
      bool valid = true;
      try {
        prop_theta.validate();
        prop_target = log_target_theta(prop_theta);
      } catch (const std::exception&) {
        valid = false;
        prop_target = -1e300;
      }
      window_tot(j) += 1;
      total_tot(j) += 1;
      if (valid && std::log(rng.uniform()) < prop_target - cur_target_theta) {
        theta = prop_theta;
        cur_target_theta = prop_target;
        window_acc(j) += 1;
        total_acc(j) += 1;
      } else {
        x_int(j) = old_int;
      }
    }

    if (it < config.burn_in && (it + 1) % config.adapt_interval == 0) {
      for (int j = 0; j < m; ++j) {
        if (window_tot(j) == 0) continue;
        const double rate = static_cast<double>(window_acc(j)) / window_tot(j);
        if (rate > config.target_accept_hi) scales(j) *= 1.3;
        else if (rate < config.target_accept_lo) scales(j) /= 1.3;
      }
      window_acc.setZero();
      window_tot.setZero();
    }

    if (it >= config.burn_in && (it - config.burn_in) % config.thin == 0 &&
        stored < n_stored) {
      chain.latent.row(stored) = mu;
      chain.hyper_internal.row(stored) = x_int;
      ++stored;
    }
  }

  chain.latent_accept = latent_tot ? static_cast<double>(latent_acc) / latent_tot : 0.0;
  chain.hyper_accept.resize(m);
  for (int j = 0; j < m; ++j)
    chain.hyper_accept(j) = total_tot(j) > 0 ? total_acc(j) / total_tot(j) : 0.0;
  return chain;
}

EssResult effective_sample_size(const Eigen::VectorXd& x) {
  const int g = static_cast<int>(x.size());
  if (g < 2) return {1.0, true};
  const double mean = x.mean();
  Eigen::VectorXd c = x.array() - mean;
  const double var = c.squaredNorm() / g;
  if (!(var > 0.0)) return {1.0, true};

  // Geyer initial monotone sequence over autocorrelation pairs.
  auto rho = [&](int k) {
    double s = 0.0;
    for (int i = 0; i + k < g; ++i) s += c(i) * c(i + k);
    return s / (g * var);
  };
  double tau = -1.0;
  double prev_pair = 1e300;
  for (int mterm = 0; 2 * mterm + 1 < g; ++mterm) {
    double pair = rho(2 * mterm) + rho(2 * mterm + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
    if (mterm > 2000) break;
  }
  tau = std::max(tau, 1e-12);
  return {std::min(static_cast<double>(g) / tau, static_cast<double>(g)), false};
}

ChainDiagnostics diagnostics(const ChainResult& chain, const ModelDefinition& model,
                             std::vector<int> latent_coords) {
  if (chain.size() == 0) throw std::invalid_argument("diagnostics: empty chain");
  if (latent_coords.empty()) latent_coords = default_tracked_coords(model);
  ChainDiagnostics d;
  d.latent_accept = chain.latent_accept;
  d.hyper_accept = chain.hyper_accept;

  auto add = [&](const std::string& name, const Eigen::VectorXd& col) {
    EssResult e = effective_sample_size(col);
    d.names.push_back(name);
    d.ess.push_back(e.ess);
    d.degenerate.push_back(e.degenerate);
    d.trace_min.push_back(col.minCoeff());
    d.trace_max.push_back(col.maxCoeff());
  };
  for (std::size_t j = 0; j < chain.sampled_hypers.size(); ++j)
    add(hyper_name(chain.sampled_hypers[j]), chain.hyper_internal.col(static_cast<int>(j)));
  const auto names = tracked_coord_names(model, latent_coords);
  for (std::size_t i = 0; i < latent_coords.size(); ++i)
    add(names[i], chain.latent.col(latent_coords[i]));
  return d;
}

std::vector<ParamSummary> chain_summary(const ChainResult& chain,
                                        const ModelDefinition& model) {
  std::vector<ParamSummary> out;
  auto summarize = [](const std::string& name, std::vector<double> draws) {
    ParamSummary ps;
    ps.name = name;
    const int g = static_cast<int>(draws.size());
    double m1 = 0.0;
    for (double v : draws) m1 += v;
    m1 /= g;
    double s2 = 0.0;
    for (double v : draws) s2 += (v - m1) * (v - m1);
    ps.mean = m1;
    ps.sd = g > 1 ? std::sqrt(s2 / (g - 1)) : 0.0;
    std::sort(draws.begin(), draws.end());
    auto q = [&](double p) {
      const double pos = p * (g - 1);
      const int lo = static_cast<int>(pos);
      const int hi = std::min(lo + 1, g - 1);
      const double f = pos - lo;
      return (1.0 - f) * draws[lo] + f * draws[hi];
    };
    ps.q025 = q(0.025);
    ps.q50 = q(0.5);
    ps.q975 = q(0.975);
    return ps;
  };

  const auto coords = default_tracked_coords(model);
  const auto names = tracked_coord_names(model, coords);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    std::vector<double> draws(chain.size());
    for (int g = 0; g < chain.size(); ++g) draws[g] = chain.latent(g, coords[i]);
    out.push_back(summarize(names[i], std::move(draws)));
  }
  for (std::size_t j = 0; j < chain.sampled_hypers.size(); ++j) {
    std::vector<double> draws(chain.size());
    for (int g = 0; g < chain.size(); ++g)
      draws[g] = HyperMap::from_internal_component(chain.sampled_hypers[j],
                                                   chain.hyper_internal(g, static_cast<int>(j)));
    out.push_back(summarize(hyper_name(chain.sampled_hypers[j]), std::move(draws)));
  }
  return out;
}

void save_chain(const ChainResult& chain, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write chain file: " + path);
  const char magic[8] = {'S', 'T', 'J', 'M', 'C', 'H', 'N', '1'};
  out.write(magic, 8);
  auto w32 = [&](std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto w64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  auto wd = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  w32(static_cast<std::int32_t>(chain.size()));
  w32(static_cast<std::int32_t>(chain.latent.cols()));
  w32(static_cast<std::int32_t>(chain.sampled_hypers.size()));
  w64(chain.seed);
  w32(chain.iterations);
  w32(chain.burn_in);
  w32(chain.thin);
  for (Hyper h : chain.sampled_hypers) w32(static_cast<std::int32_t>(h));
  const double* base_fields[8] = {&chain.base.tau_Y,   &chain.base.tau_U0,
                                  &chain.base.tau_U1,  &chain.base.rho_01,
                                  &chain.base.lambda,  &chain.base.tau_v,
                                  &chain.base.tau_u,   &chain.base.tau_delta};
  for (const double* f : base_fields) wd(*f);
  wd(chain.latent_accept);
  for (int j = 0; j < chain.hyper_accept.size(); ++j) wd(chain.hyper_accept(j));
  for (int g = 0; g < chain.size(); ++g) {
    for (int c = 0; c < chain.latent.cols(); ++c) wd(chain.latent(g, c));
    for (int c = 0; c < chain.hyper_internal.cols(); ++c) wd(chain.hyper_internal(g, c));
  }
}

ChainResult load_chain(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open chain file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "STJMCHN1")
    throw std::runtime_error("bad chain file magic: " + path);
  auto r32 = [&]() {
    std::int32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto r64 = [&]() {
    std::uint64_t v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto rd = [&]() {
    double v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  ChainResult chain;
  const int g = r32();
  const int dim = r32();
  const int m = r32();
  chain.seed = r64();
  chain.iterations = r32();
  chain.burn_in = r32();
  chain.thin = r32();
  for (int j = 0; j < m; ++j) chain.sampled_hypers.push_back(static_cast<Hyper>(r32()));
  double* base_fields[8] = {&chain.base.tau_Y,  &chain.base.tau_U0, &chain.base.tau_U1,
                            &chain.base.rho_01, &chain.base.lambda, &chain.base.tau_v,
                            &chain.base.tau_u,  &chain.base.tau_delta};
  for (double* f : base_fields) *f = rd();
  chain.latent_accept = rd();
  chain.hyper_accept.resize(m);
  for (int j = 0; j < m; ++j) chain.hyper_accept(j) = rd();
  chain.latent.resize(g, dim);
  chain.hyper_internal.resize(g, m);
  for (int i = 0; i < g; ++i) {
    for (int c = 0; c < dim; ++c) chain.latent(i, c) = rd();
    for (int c = 0; c < m; ++c) chain.hyper_internal(i, c) = rd();
  }
  if (!in) throw std::runtime_error("truncated chain file: " + path);
  return chain;
}

}  // namespace stjm
