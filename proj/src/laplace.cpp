#include "stjm/laplace.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include "stjm/rng.hpp"

namespace stjm {

GridStrategy grid_strategy_from_string(const std::string& s) {
  if (s == "auto") return GridStrategy::Auto;
  if (s == "grid") return GridStrategy::Grid;
  if (s == "ccd") return GridStrategy::Ccd;
  if (s == "eb") return GridStrategy::Eb;
  throw std::invalid_argument("unknown grid strategy: " + s);
}

double FitResult::weight_sum() const {
  double s = 0.0;
  for (const auto& gp : grid) s += gp.weight;
  return s;
}

std::vector<int> default_tracked_coords(const ModelDefinition& model) {
  const auto& lay = model.layout();
  std::vector<int> coords;
  const int hi = lay.has_survival ? lay.off_nu0 + 1 : lay.off_beta1 + 2;
  for (int j = lay.off_beta1; j < hi; ++j) coords.push_back(j);
  return coords;
}

std::vector<std::string> tracked_coord_names(const ModelDefinition& model,
                                             const std::vector<int>& coords) {
  const auto& lay = model.layout();
  std::vector<std::string> names;
  for (int c : coords) {
    if (c == lay.off_beta1) names.push_back("beta_01");
    else if (c == lay.off_beta1 + 1) names.push_back("beta_11");
    else if (lay.has_survival && c == lay.off_nu0) names.push_back("nu_0");
    else if (lay.has_survival && c >= lay.off_beta2 && c < lay.off_beta2 + lay.n_covariates)
      names.push_back(model.covariate_names()[c - lay.off_beta2]);
    else if (lay.has_survival && c >= lay.off_v && c < lay.off_v + lay.T)
      names.push_back("v_" + std::to_string(c - lay.off_v + 1));
    else if (lay.has_u && c >= lay.off_u && c < lay.off_u + lay.A)
      names.push_back("u_" + std::to_string(c - lay.off_u + 1));
    else
      names.push_back("latent_" + std::to_string(c));
  }
  return names;
}

LaplaceEngine::LaplaceEngine(const ModelDefinition& model)
    : model_(&model), sys_(model) {}

double LaplaceEngine::evidence_at_mode(const HyperParams& theta,
                                       const Eigen::VectorXd& mode) {
  // Laplace evidence with constraint-corrected determinants; exact for
  // conjugate Gaussian sub-problems.
  return model_->log_likelihood(mode, theta) + model_->latent_prior_normalizer(theta) -
         0.5 * model_->prior_quad_value(model_->prior_quad(mode), theta) -
         sys_.log_gaussian_normalizer();
}

GaussApprox LaplaceEngine::approximate(const HyperParams& theta,
                                       const std::vector<int>& tracked_coords) {
  theta.validate();
  Eigen::VectorXd init =
      has_warm_ ? warm_ : Eigen::VectorXd::Zero(model_->layout().dim);
  ModeResult mr = sys_.newton_mode(theta, init, /*refactor_at_mode=*/true);
  warm_ = mr.mode;
  has_warm_ = true;

  GaussApprox ga;
  ga.theta = theta;
  ga.mode = mr.mode;
  ga.iterations = mr.iterations;
  ga.converged = mr.converged;
  ga.precision = SparseSymmetric::from_eigen_upper(sys_.matrix());
  const HyperMap map = model_->hyper_map();
  ga.log_marginal = evidence_at_mode(theta, mr.mode) +
                    map.log_prior_internal(map.to_internal(theta), model_->config().priors);
  ga.tracked_coords = tracked_coords;
  ga.tracked_variance.resize(static_cast<int>(tracked_coords.size()));
  for (std::size_t i = 0; i < tracked_coords.size(); ++i)
    ga.tracked_variance(static_cast<int>(i)) = sys_.marginal_variance(tracked_coords[i]);
  return ga;
}

double LaplaceEngine::log_posterior(const HyperParams& theta) {
  theta.validate();
  Eigen::VectorXd init =
      has_warm_ ? warm_ : Eigen::VectorXd::Zero(model_->layout().dim);
  ModeResult mr = sys_.newton_mode(theta, init, /*refactor_at_mode=*/true);
  warm_ = mr.mode;
  has_warm_ = true;
  const HyperMap map = model_->hyper_map();
  return evidence_at_mode(theta, mr.mode) +
         map.log_prior_internal(map.to_internal(theta), model_->config().priors);
}

void LaplaceEngine::load_grid_point(const GridPoint& gp) {
  sys_.assemble(gp.approx.theta, gp.approx.mode);
}

namespace {

// Nelder-Mead on an m-dimensional objective (maximization).
Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x0, double init_step, double tol,
                            int max_eval) {
  const int m = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> xs(m + 1, x0);
  std::vector<double> fs(m + 1);
  for (int i = 1; i <= m; ++i) xs[i](i - 1) += init_step;
  int evals = 0;
  for (int i = 0; i <= m; ++i) {
    fs[i] = f(xs[i]);
    ++evals;
  }
  auto order = [&]() {
    std::vector<int> idx(m + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] > fs[b]; });
    std::vector<Eigen::VectorXd> xs2;
    std::vector<double> fs2;
    for (int i : idx) {
      xs2.push_back(xs[i]);
      fs2.push_back(fs[i]);
    }
    xs = xs2;
    fs = fs2;
  };
  order();
  while (evals < max_eval) {
    if (std::abs(fs[0] - fs[m]) < tol) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) centroid += xs[i];
    centroid /= m;

    Eigen::VectorXd xr = centroid + (centroid - xs[m]);
    double fr = f(xr);
    ++evals;
    if (fr > fs[0]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[m]);
      double fe = f(xe);
      ++evals;
      if (fe > fr) {
        xs[m] = xe;
        fs[m] = fe;
      } else {
        xs[m] = xr;
        fs[m] = fr;
      }
    } else if (fr > fs[m - 1]) {
      xs[m] = xr;
      fs[m] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (xs[m] - centroid);
      double fc = f(xc);
      ++evals;
      if (fc > fs[m]) {
        xs[m] = xc;
        fs[m] = fc;
      } else {
        for (int i = 1; i <= m; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = f(xs[i]);
          ++evals;
        }
      }
    }
    order();
  }
  return xs[0];
}

// Fractional factorial corner designs of resolution >= V for m <= 8.
std::vector<Eigen::VectorXd> ccd_corners(int m) {
  int base = m;
  std::vector<std::vector<int>> generators;  // factor index lists for extra columns
  if (m == 5) {
    base = 4;
    generators = {{0, 1, 2, 3}};
  } else if (m == 6) {
    base = 5;
    generators = {{0, 1, 2, 3, 4}};
  } else if (m == 7) {
    base = 6;
    generators = {{0, 1, 2, 3, 4, 5}};
  } else if (m == 8) {
    base = 6;
    generators = {{0, 1, 2, 3}, {0, 1, 4, 5}};
  } else if (m > 8) {
    throw std::invalid_argument("ccd: more than 8 hyperparameters not supported");
  }
  std::vector<Eigen::VectorXd> corners;
  const int runs = 1 << base;
  for (int r = 0; r < runs; ++r) {
    Eigen::VectorXd z(m);
    for (int j = 0; j < base; ++j) z(j) = (r >> j) & 1 ? 1.0 : -1.0;
    for (std::size_t g = 0; g < generators.size(); ++g) {
      double s = 1.0;
      for (int j : generators[g]) s *= z(j);
      z(base + static_cast<int>(g)) = s;
    }
    corners.push_back(z);
  }
  return corners;
}

}  // namespace

FitResult LaplaceEngine::fit(const FitOptions& options) {
  const HyperMap map = model_->hyper_map();
  const int m = map.size();
  std::vector<int> tracked = default_tracked_coords(*model_);
  for (int c : options.extra_tracked_coords) tracked.push_back(c);

  // 1. Hyperparameter mode by derivative-free maximization.
  auto objective = [&](const Eigen::VectorXd& x) {
    try {
      return log_posterior(map.from_internal(x));
    } catch (const std::exception&) {
      return -1e30;  // reject infeasible or non-converging points
    }
  };
  Eigen::VectorXd x0 = map.to_internal(options.init);
  Eigen::VectorXd xmode =
      nelder_mead(objective, x0, options.nm_init_step, options.nm_tol, options.nm_max_eval);
  const double f_mode = objective(xmode);
  if (f_mode <= -1e29) throw std::runtime_error("fit: hyperparameter optimization failed");

  // 2. Standardizing directions from the numeric Hessian at the mode.
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd sd = Eigen::VectorXd::Ones(m);
  if (options.strategy != GridStrategy::Eb) {
    const double h = 0.1;
    Eigen::MatrixXd H(m, m);
    std::vector<Eigen::VectorXd> plus(m, xmode), minus(m, xmode);
    for (int i = 0; i < m; ++i) {
      plus[i](i) += h;
      minus[i](i) -= h;
    }
    std::vector<double> fp(m), fm(m);
    for (int i = 0; i < m; ++i) {
      fp[i] = objective(plus[i]);
      fm[i] = objective(minus[i]);
    }
    for (int i = 0; i < m; ++i) {
      H(i, i) = -(fp[i] - 2.0 * f_mode + fm[i]) / (h * h);
      for (int j = i + 1; j < m; ++j) {
        Eigen::VectorXd xpp = xmode, xpm = xmode, xmp = xmode, xmm = xmode;
        xpp(i) += h; xpp(j) += h;
        xpm(i) += h; xpm(j) -= h;
        xmp(i) -= h; xmp(j) += h;
        xmm(i) -= h; xmm(j) -= h;
        H(i, j) = H(j, i) =
            -(objective(xpp) - objective(xpm) - objective(xmp) + objective(xmm)) /
            (4.0 * h * h);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    V = es.eigenvectors();
    const double min_curv = 1.0 / (options.max_internal_sd * options.max_internal_sd);
    for (int i = 0; i < m; ++i)
      sd(i) = 1.0 / std::sqrt(std::max(es.eigenvalues()(i), min_curv));
  }
  auto theta_at = [&](const Eigen::VectorXd& z) {
    return xmode + V * (sd.asDiagonal() * z);
  };

  // 3. Grid construction.
  GridStrategy strategy = options.strategy;
  if (strategy == GridStrategy::Auto)
    strategy = (m <= 4) ? GridStrategy::Grid : GridStrategy::Ccd;

  struct Candidate {
    Eigen::VectorXd z;
    double delta_w;
  };
  std::vector<Candidate> cands;
  cands.push_back({Eigen::VectorXd::Zero(m), 1.0});
  if (strategy == GridStrategy::Grid) {
    for (int i = 0; i < m; ++i)
      for (double dir : {+1.0, -1.0})
        for (int k = 1; k <= options.max_axis_points; ++k) {
          Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
          z(i) = dir * options.step * k;
          const double lp = objective(theta_at(z));
          if (f_mode - lp >= options.log_drop) break;
          cands.push_back({z, 1.0});
        }
  } else if (strategy == GridStrategy::Ccd) {
    const double f0 = options.ccd_f0;
    std::vector<Eigen::VectorXd> pts = ccd_corners(m);
    for (auto& z : pts) z *= f0;
    const double radius = f0 * std::sqrt(static_cast<double>(m));
    for (int i = 0; i < m; ++i)
      for (double dir : {+1.0, -1.0}) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
        z(i) = dir * radius;
        pts.push_back(z);
      }
    const double n_sphere = static_cast<double>(pts.size());
    const double w_center = 1.0 - 1.0 / (f0 * f0);
    const double w_sphere = (1.0 - w_center) / n_sphere;
    // Delta_w absorbs the reference Gaussian: design weight / N(z).
    cands[0].delta_w = w_center;
    for (const auto& z : pts)
      cands.push_back({z, w_sphere * std::exp(0.5 * z.squaredNorm())});
  }

  // 4. Evaluate grid points; the center goes first and is the fallback.
  FitResult fr;
  fr.variant = model_->variant();
  fr.active_hypers = model_->active_hypers();
  fr.mode_index = 0;
  for (const auto& c : cands) {
    GridPoint gp;
    gp.z = c.z;
    gp.delta_w = c.delta_w;
    gp.theta_internal = theta_at(c.z);
    bool center = (c.z.lpNorm<Eigen::Infinity>() == 0.0);
    try {
      // Warm-start every point from the center mode.
      if (!fr.grid.empty()) warm_ = fr.grid[fr.mode_index].approx.mode;
      gp.approx = approximate(map.from_internal(gp.theta_internal), tracked);
    } catch (const std::exception&) {
      if (center) throw;
      continue;  // drop non-center points that fail to converge
    }
    fr.grid.push_back(std::move(gp));
  }
  if (fr.grid.empty()) throw std::runtime_error("fit: empty hyperparameter grid");
  fr.mode_theta = fr.grid[fr.mode_index].approx.theta;

  // 5. Normalized integration weights.
  double max_lp = -1e300;
  for (const auto& gp : fr.grid) max_lp = std::max(max_lp, gp.approx.log_marginal);
  double total = 0.0;
  for (auto& gp : fr.grid) {
    gp.weight = std::exp(gp.approx.log_marginal - max_lp) * gp.delta_w;
    total += gp.weight;
  }
  for (auto& gp : fr.grid) gp.weight /= total;

  // 6. Marginal summaries: Gaussian mixtures for tracked latent coordinates,
  // weighted grid statistics for hyperparameters.
  const auto latent_names = tracked_coord_names(*model_, tracked);
  for (std::size_t i = 0; i < tracked.size(); ++i) {
    std::vector<double> means, sds, ws;
    for (const auto& gp : fr.grid) {
      means.push_back(gp.approx.mode(tracked[i]));
      sds.push_back(std::sqrt(std::max(gp.approx.tracked_variance(static_cast<int>(i)), 0.0)));
      ws.push_back(gp.weight);
    }
    ParamSummary ps;
    ps.name = latent_names[i];
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < ws.size(); ++k) {
      m1 += ws[k] * means[k];
      m2 += ws[k] * (sds[k] * sds[k] + means[k] * means[k]);
    }
    ps.mean = m1;
    ps.sd = std::sqrt(std::max(m2 - m1 * m1, 0.0));
    auto mixture_cdf = [&](double x) {
      double c = 0.0;
      for (std::size_t k = 0; k < ws.size(); ++k)
        c += ws[k] * 0.5 * std::erfc(-(x - means[k]) / (sds[k] * std::sqrt(2.0) + 1e-300));
      return c;
    };
    auto quantile = [&](double q) {
      double lo = ps.mean - 12.0 * (ps.sd + 1e-12), hi = ps.mean + 12.0 * (ps.sd + 1e-12);
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mixture_cdf(mid) < q ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    };
    ps.q025 = quantile(0.025);
    ps.q50 = quantile(0.5);
    ps.q975 = quantile(0.975);
    fr.summaries.push_back(ps);
  }
  for (int c = 0; c < map.size(); ++c) {
    const Hyper h = map.active()[c];
    std::vector<std::pair<double, double>> vals;  // (natural value, weight)
    for (const auto& gp : fr.grid)
      vals.push_back({HyperMap::from_internal_component(h, gp.theta_internal(c)), gp.weight});
    std::sort(vals.begin(), vals.end());
    ParamSummary ps;
    ps.name = hyper_name(h);
    double m1 = 0.0, m2 = 0.0;
    for (auto& [v, w] : vals) {
      m1 += w * v;
      m2 += w * v * v;
    }
    ps.mean = m1;
    ps.sd = std::sqrt(std::max(m2 - m1 * m1, 0.0));
    auto wquant = [&](double q) {
      double c_acc = 0.0;
      for (auto& [v, w] : vals) {
        c_acc += w;
        if (c_acc >= q) return v;
      }
      return vals.back().first;
    };
    ps.q025 = wquant(0.025);
    ps.q50 = wquant(0.5);
    ps.q975 = wquant(0.975);
    fr.summaries.push_back(ps);
  }
  return fr;
}

GaussApprox gaussian_approximation(const ModelDefinition& model, const HyperParams& theta) {
  LaplaceEngine engine(model);
  return engine.approximate(theta, default_tracked_coords(model));
}

double log_posterior_hyper(const ModelDefinition& model, const HyperParams& theta) {
  LaplaceEngine engine(model);
  return engine.log_posterior(theta);
}

FitResult fit(const ModelDefinition& model, const FitOptions& options) {
  LaplaceEngine engine(model);
  return engine.fit(options);
}

std::vector<std::pair<int, Eigen::VectorXd>> sample_latent(const ModelDefinition& model,
                                                           const FitResult& fit, int n_draws,
                                                           std::uint64_t seed) {
  Rng rng(seed);
  const int W = static_cast<int>(fit.grid.size());
  std::vector<double> cum(W);
  double acc = 0.0;
  for (int w = 0; w < W; ++w) {
    acc += fit.grid[w].weight;
    cum[w] = acc;
  }
  std::vector<int> pick(n_draws);
  for (int r = 0; r < n_draws; ++r) {
    const double u = rng.uniform() * acc;
    pick[r] = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (pick[r] >= W) pick[r] = W - 1;
  }
  std::vector<std::pair<int, Eigen::VectorXd>> out(n_draws);
  LaplaceEngine engine(model);
  for (int w = 0; w < W; ++w) {
    bool any = false;
    for (int r = 0; r < n_draws; ++r)
      if (pick[r] == w) {
        any = true;
        break;
      }
    if (!any) continue;
    engine.load_grid_point(fit.grid[w]);
    for (int r = 0; r < n_draws; ++r)
      if (pick[r] == w)
        out[r] = {w, engine.system().sample_constrained(fit.grid[w].approx.mode, rng)};
  }
  return out;
}

void write_fit_summary_csv(const std::string& path, const FitResult& fit) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write fit summary: " + path);
  out.precision(10);
  out << "name,mean,sd,q2.5,q50,q97.5\n";
  for (const auto& ps : fit.summaries)
    out << ps.name << ',' << ps.mean << ',' << ps.sd << ',' << ps.q025 << ',' << ps.q50 << ','
        << ps.q975 << '\n';
}

}  // namespace stjm
