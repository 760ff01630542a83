#include "stjm/cvdcl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "stjm/numerics.hpp"
#include "stjm/rng.hpp"

namespace stjm {

HiMethod hi_method_from_string(const std::string& s) {
  if (s == "laplace") return HiMethod::Laplace;
  if (s == "eb") return HiMethod::Eb;
  if (s == "quadrature") return HiMethod::Quadrature;
  throw std::invalid_argument("unknown h_i method: " + s);
}

std::string hi_method_to_string(HiMethod m) {
  switch (m) {
    case HiMethod::Laplace: return "laplace";
    case HiMethod::Eb: return "eb";
    default: return "quadrature";
  }
}

namespace {

struct Period {
  int s;
  double y;
  double base_x;  // survival predictor without the shared U term
  int x;
};

// Everything h_i needs about one loan, extracted from (theta, mu).
struct LoanProblem {
  double beta01 = 0.0, beta11 = 0.0;
  double lambda = 0.0, tau_Y = 1.0;
  Eigen::Matrix2d q_u;
  std::vector<Period> hist;  // s = 1..t (all with x = 0 while at risk)
  std::vector<Period> post;  // s = t+1..t_i (observed outcome)
};

LoanProblem make_problem(const ModelDefinition& model, const HyperParams& theta,
                         const Eigen::VectorXd& mu, int loan, int t) {
  const auto& panel = model.panel();
  if (loan < 0 || loan >= panel.n_loans)
    throw std::out_of_range("h_i: loan index out of range");
  if (panel.duration[loan] <= t)
    throw std::invalid_argument("loan " + std::to_string(loan) + " is not at risk at t = " +
                                std::to_string(t));
  const auto& lay = model.layout();
  LoanProblem lp;
  lp.beta01 = mu(lay.off_beta1);
  lp.beta11 = mu(lay.off_beta1 + 1);
  lp.lambda = theta.lambda;
  lp.tau_Y = theta.tau_Y;
  lp.q_u = theta.q_u();
  const int start = panel.loan_row_start[loan];
  for (int s = 1; s <= panel.duration[loan]; ++s) {
    const auto& d = model.row_designs()[start + s - 1];
    Period p;
    p.s = s;
    p.y = d.y;
    p.base_x = d.x_static.dot(mu);
    p.x = d.x;
    (s <= t ? lp.hist : lp.post).push_back(p);
  }
  return lp;
}

// log g(U): the conditional post-t event log likelihood.
double f_den(const LoanProblem& lp, const Eigen::Vector2d& u) {
  double total = 0.0;
  for (const auto& p : lp.post) {
    const double eta = p.base_x + lp.lambda * (u(0) + p.s * u(1));
    total += p.x * eta - log1p_exp(eta);
  }
  return total;
}

// log numerator kernel: prior + longitudinal history + survival to t.
double f_num(const LoanProblem& lp, const Eigen::Vector2d& u) {
  double total = -0.5 * u.dot(lp.q_u * u);
  for (const auto& p : lp.hist) {
    const double r = p.y - (lp.beta01 + lp.beta11 * p.s + u(0) + p.s * u(1));
    total += -0.5 * lp.tau_Y * r * r;
    const double eta = p.base_x + lp.lambda * (u(0) + p.s * u(1));
    total += -log1p_exp(eta);
  }
  return total;
}

struct ModeInfo {
  Eigen::Vector2d mode = Eigen::Vector2d::Zero();
  Eigen::Matrix2d neg_hess = Eigen::Matrix2d::Identity();
  double f = 0.0;
  bool neg_definite = false;
  bool converged = false;
};

bool is_pd(const Eigen::Matrix2d& m) {
  return m(0, 0) > 0.0 && m.determinant() > 0.0;
}

// Objective f_num - include_den * f_den with analytic derivatives.
void eval_objective(const LoanProblem& lp, bool include_den, const Eigen::Vector2d& u,
                    double* f, Eigen::Vector2d* g, Eigen::Matrix2d* h) {
  double val = -0.5 * u.dot(lp.q_u * u);
  Eigen::Vector2d grad = -lp.q_u * u;
  Eigen::Matrix2d hess = -lp.q_u;
  for (const auto& p : lp.hist) {
    const Eigen::Vector2d a(1.0, static_cast<double>(p.s));
    const double r = p.y - (lp.beta01 + lp.beta11 * p.s + u(0) + p.s * u(1));
    val += -0.5 * lp.tau_Y * r * r;
    grad += lp.tau_Y * r * a;
    hess -= lp.tau_Y * a * a.transpose();
    const Eigen::Vector2d b = lp.lambda * a;
    const double eta = p.base_x + lp.lambda * (u(0) + p.s * u(1));
    const double pr = logistic(eta);
    val += -log1p_exp(eta);
    grad += -pr * b;
    hess -= pr * (1.0 - pr) * b * b.transpose();
  }
  if (include_den) {
    for (const auto& p : lp.post) {
      const Eigen::Vector2d b = lp.lambda * Eigen::Vector2d(1.0, static_cast<double>(p.s));
      const double eta = p.base_x + lp.lambda * (u(0) + p.s * u(1));
      const double pr = logistic(eta);
      val -= p.x * eta - log1p_exp(eta);
      grad -= (p.x - pr) * b;
      hess += pr * (1.0 - pr) * b * b.transpose();
    }
  }
  if (f) *f = val;
  if (g) *g = grad;
  if (h) *h = hess;
}

ModeInfo find_mode_2d(const LoanProblem& lp, bool include_den, Eigen::Vector2d init) {
  ModeInfo mi;
  Eigen::Vector2d u = init;
  double f;
  Eigen::Vector2d g;
  Eigen::Matrix2d h;
  eval_objective(lp, include_den, u, &f, &g, &h);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Matrix2d m = -h;
    if (!is_pd(m)) {
      // Levenberg-style shift for non-concave iterates.
      const double bump = std::abs(std::min(0.0, 0.5 * (m(0, 0) + m(1, 1)))) +
                          std::sqrt(std::abs(m.determinant())) + 1e-6;
      m += bump * Eigen::Matrix2d::Identity();
    }
    const Eigen::Vector2d step = m.inverse() * g;
    double alpha = 1.0;
    Eigen::Vector2d u_next = u + step;
    double f_next;
    eval_objective(lp, include_den, u_next, &f_next, nullptr, nullptr);
    for (int k = 0; k < 30 && !(f_next >= f - 1e-12 * (1.0 + std::abs(f))); ++k) {
      alpha *= 0.5;
      u_next = u + alpha * step;
      eval_objective(lp, include_den, u_next, &f_next, nullptr, nullptr);
    }
    u = u_next;
    eval_objective(lp, include_den, u, &f, &g, &h);
    if ((alpha * step).lpNorm<Eigen::Infinity>() < 1e-11) {
      mi.converged = true;
      break;
    }
  }
  mi.mode = u;
  mi.f = f;
  mi.neg_hess = -h;
  mi.neg_definite = is_pd(mi.neg_hess);
  return mi;
}

// log of int exp(f) dU by Gauss-Hermite centred at (centre, scale).
double log_integral_gh(const LoanProblem& lp, bool include_den,
                       const Eigen::Vector2d& centre, const Eigen::Matrix2d& neg_hess,
                       int nodes) {
  Eigen::Matrix2d cov = neg_hess.inverse();
  Eigen::LLT<Eigen::Matrix2d> llt(cov);
  Eigen::Matrix2d L = llt.matrixL();
  auto [xs, ws] = gauss_hermite(nodes);
  double f0;
  eval_objective(lp, include_den, centre, &f0, nullptr, nullptr);
  double acc = 0.0;
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      const Eigen::Vector2d z(xs(i), xs(j));
      const Eigen::Vector2d u = centre + std::sqrt(2.0) * (L * z);
      double f;
      eval_objective(lp, include_den, u, &f, nullptr, nullptr);
      acc += ws(i) * ws(j) * std::exp(f - f0 + z.squaredNorm());
    }
  }
  const double log_det_l = std::log(L(0, 0)) + std::log(L(1, 1));
  return std::log(2.0) + log_det_l + f0 + std::log(acc);
}

double h_i_log_impl(const LoanProblem& lp, HiMethod method, int nodes, HiStats* stats) {
  if (stats) ++stats->evaluations;
  ModeInfo num = find_mode_2d(lp, false, Eigen::Vector2d::Zero());

  if (method == HiMethod::Eb) return -f_den(lp, num.mode);

  if (method == HiMethod::Laplace) {
    ModeInfo full = find_mode_2d(lp, true, num.mode);
    if (full.neg_definite && num.neg_definite && full.converged && num.converged) {
      const double log_num = num.f - 0.5 * std::log(num.neg_hess.determinant());
      const double log_full = full.f - 0.5 * std::log(full.neg_hess.determinant());
      return log_full - log_num;
    }
    if (stats) ++stats->quadrature_fallbacks;
    method = HiMethod::Quadrature;
  }

  // Quadrature: both integrals adaptively centred; the ratio-of-integrals
  // centre falls back to the numerator mode if its own Hessian degenerates.
  ModeInfo full = find_mode_2d(lp, true, num.mode);
  const Eigen::Vector2d centre_i = full.neg_definite ? full.mode : num.mode;
  const Eigen::Matrix2d scale_i = full.neg_definite ? full.neg_hess : num.neg_hess;
  const double log_i = log_integral_gh(lp, true, centre_i, scale_i, nodes);
  const double log_z = log_integral_gh(lp, false, num.mode, num.neg_hess, nodes);
  return log_i - log_z;
}

}  // namespace

double conditional_event_loglik(const ModelDefinition& model, const HyperParams& theta,
                                const Eigen::VectorXd& mu, const Eigen::Vector2d& u_i,
                                int loan, int t) {
  const LoanProblem lp = make_problem(model, theta, mu, loan, t);
  return f_den(lp, u_i);
}

double h_i_log(const ModelDefinition& model, const HyperParams& theta,
               const Eigen::VectorXd& mu, int loan, int t, HiMethod method,
               int quadrature_nodes, HiStats* stats) {
  const LoanProblem lp = make_problem(model, theta, mu, loan, t);
  return h_i_log_impl(lp, method, quadrature_nodes, stats);
}

double h_i(const ModelDefinition& model, const HyperParams& theta, const Eigen::VectorXd& mu,
           int loan, int t, HiMethod method, int quadrature_nodes, HiStats* stats) {
  return std::exp(h_i_log(model, theta, mu, loan, t, method, quadrature_nodes, stats));
}

namespace {

std::vector<int> at_risk_loans(const PanelDataset& panel, int t) {
  std::vector<int> loans;
  for (int i = 0; i < panel.n_loans; ++i)
    if (panel.duration[i] > t) loans.push_back(i);
  return loans;
}

}  // namespace

CvdclEvaluation cvdcl_inla(const ModelDefinition& model, const FitResult& fit, int t,
                           const CvdclOptions& options, HiStats* stats) {
  const auto& panel = model.panel();
  const std::vector<int> loans = at_risk_loans(panel, t);
  if (loans.empty())
    throw std::runtime_error("cvdcl_inla: no loans at risk at t = " + std::to_string(t));
  const int R = options.draws_per_point;
  if (R < 2) throw std::invalid_argument("cvdcl_inla: need at least 2 draws per grid point");
  const int W = static_cast<int>(fit.grid.size());
  const int n = static_cast<int>(loans.size());

  // Per-loan accumulators of sum_w wgt * m_iw and sum_w wgt^2 * sigma2_iw.
  Eigen::VectorXd p_i = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v_i = Eigen::VectorXd::Zero(n);

  LaplaceEngine engine(model);
  Rng master(options.seed);
  std::vector<HiStats> thread_stats(n);
  for (int w = 0; w < W; ++w) {
    const GridPoint& gp = fit.grid[w];
    engine.load_grid_point(gp);
    Rng sub = master.substream(static_cast<std::uint64_t>(w));
    std::vector<Eigen::VectorXd> draws(R);
    for (int r = 0; r < R; ++r)
      draws[r] = engine.system().sample_constrained(gp.approx.mode, sub);

    std::vector<double> m_iw(n), s2_iw(n);
    parallel_for(n, options.threads, [&](int k) {
      double mean = 0.0, m2 = 0.0;
      for (int r = 0; r < R; ++r) {
        const LoanProblem lp = make_problem(model, gp.approx.theta, draws[r], loans[k], t);
        const double h = std::exp(h_i_log_impl(lp, options.method, options.quadrature_nodes,
                                               &thread_stats[k]));
        const double delta = h - mean;
        mean += delta / (r + 1);
        m2 += delta * (h - mean);
      }
      m_iw[k] = mean;
      s2_iw[k] = m2 / (R - 1);
    });
    for (int k = 0; k < n; ++k) {
      p_i(k) += gp.weight * m_iw[k];
      v_i(k) += gp.weight * gp.weight * s2_iw[k];
    }
  }

  CvdclEvaluation ev;
  ev.t = t;
  ev.n_at_risk = n;
  double var = 0.0;
  for (int k = 0; k < n; ++k) {
    const double term = std::log(p_i(k)) / n;
    ev.estimate += term;
    ev.by_area[panel.area[loans[k]]] += term;
    var += v_i(k) / (p_i(k) * p_i(k));
  }
  var /= static_cast<double>(n) * n * R;
  ev.mc_se = std::sqrt(var);
  if (stats)
    for (const auto& ts : thread_stats) {
      stats->evaluations += ts.evaluations;
      stats->quadrature_fallbacks += ts.quadrature_fallbacks;
    }
  return ev;
}

CvdclEvaluation cvdcl_mcmc(const ModelDefinition& model, const ChainResult& chain, int t,
                           const CvdclOptions& options) {
  const auto& panel = model.panel();
  const std::vector<int> loans = at_risk_loans(panel, t);
  if (loans.empty())
    throw std::runtime_error("cvdcl_mcmc: no loans at risk at t = " + std::to_string(t));
  const int G = chain.size();
  const int M = options.n_batches;
  if (M < 1 || G % M != 0)
    throw std::invalid_argument("cvdcl_mcmc: chain length " + std::to_string(G) +
                                " not divisible into " + std::to_string(M) + " batches");
  const int H = G / M;
  const int n = static_cast<int>(loans.size());
  const auto& lay = model.layout();

  // log 1/p for every (loan, draw).
  Eigen::MatrixXd log_inv(n, G);
  parallel_for(G, options.threads, [&](int g) {
    const HyperParams theta = chain.theta_at(g);
    const Eigen::VectorXd mu = chain.latent.row(g);
    for (int k = 0; k < n; ++k) {
      const int loan = loans[k];
      const Eigen::Vector2d u_i(mu(lay.u0(loan)), mu(lay.u1(loan)));
      log_inv(k, g) = -conditional_event_loglik(model, theta, mu, u_i, loan, t);
    }
  });

  CvdclEvaluation ev;
  ev.t = t;
  ev.n_at_risk = n;
  for (int k = 0; k < n; ++k) {
    const double term = (log_sum_exp(log_inv.row(k)) - std::log(static_cast<double>(G))) / n;
    ev.estimate += term;
    ev.by_area[panel.area[loans[k]]] += term;
  }
  // Batching variance over M successive blocks.
  Eigen::VectorXd batch(M);
  for (int m = 0; m < M; ++m) {
    double est = 0.0;
    for (int k = 0; k < n; ++k)
      est += (log_sum_exp(log_inv.row(k).segment(m * H, H)) -
              std::log(static_cast<double>(H))) / n;
    batch(m) = est;
  }
  const double bmean = batch.mean();
  const double bvar = M > 1 ? (batch.array() - bmean).square().sum() / (M - 1) : 0.0;
  ev.mc_se = std::sqrt(bvar / M);
  return ev;
}

std::map<int, double> cvdcl_area_difference(const CvdclEvaluation& lhs,
                                            const CvdclEvaluation& rhs) {
  std::map<int, double> diff = lhs.by_area;
  for (const auto& [area, value] : rhs.by_area) diff[area] -= value;
  return diff;
}

void write_cvdcl_csv(const std::string& path, const std::vector<CvdclReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("write_cvdcl_csv: no reports");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out.precision(10);
  out << "t,n_at_risk";
  for (const auto& r : reports)
    out << ',' << r.model_name << "_estimate," << r.model_name << "_mc_se";
  out << '\n';
  for (std::size_t e = 0; e < reports[0].evaluations.size(); ++e) {
    out << reports[0].evaluations[e].t << ',' << reports[0].evaluations[e].n_at_risk;
    for (const auto& r : reports)
      out << ',' << r.evaluations[e].estimate << ',' << r.evaluations[e].mc_se;
    out << '\n';
  }
}

void write_area_csv(const std::string& path, const CvdclReport& report,
                    const CvdclReport* baseline) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write per-area report: " + path);
  out.precision(10);
  out << "t,area,contribution" << (baseline ? ",diff_vs_baseline" : "") << '\n';
  for (std::size_t e = 0; e < report.evaluations.size(); ++e) {
    const auto& ev = report.evaluations[e];
    for (const auto& [area, value] : ev.by_area) {
      out << ev.t << ',' << area << ',' << value;
      if (baseline) {
        const auto& base = baseline->evaluations[e].by_area;
        auto it = base.find(area);
        out << ',' << (value - (it == base.end() ? 0.0 : it->second));
      }
      out << '\n';
    }
  }
}

}  // namespace stjm
