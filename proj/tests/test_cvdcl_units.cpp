#include <doctest.h>

#include <cmath>

#include "stjm/cvdcl.hpp"
#include "stjm/numerics.hpp"
#include "test_support.hpp"

using namespace stjm;

namespace {

// Panel with one loan of duration t_i and chosen event flag, plus a filler
// loan so the model has two U blocks.
std::shared_ptr<PanelDataset> two_loan_panel(int t_i, int event, int t_study) {
  auto panel = std::make_shared<PanelDataset>();
  panel->n_loans = 2;
  panel->t_study = t_study;
  panel->covariate_names = {"z1"};
  panel->covariates = Eigen::MatrixXd::Zero(2, 1);
  panel->covariates(0, 0) = 0.4;
  panel->covariates(1, 0) = -0.2;
  panel->loan_ids = {"A", "B"};
  panel->area = {1, 2};
  panel->duration = {t_i, t_study};
  panel->event = {event, 0};
  for (int s = 1; s <= t_i; ++s)
    panel->rows.push_back({0, s, 0.05 * s, s == t_i ? event : 0});
  for (int s = 1; s <= t_study; ++s) panel->rows.push_back({1, s, 0.04 * s, 0});
  panel->rebuild_row_index();
  panel->validate();
  return panel;
}

}  // namespace

TEST_CASE("gauss-hermite nodes integrate Gaussian moments") {
  for (int n : {5, 20, 25}) {
    auto [x, w] = gauss_hermite(n);
    CHECK(w.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
    CHECK((w.array() * x.array().square()).sum() ==
          doctest::Approx(0.5 * std::sqrt(M_PI)).epsilon(1e-10));
    CHECK(std::abs((w.array() * x.array()).sum()) < 1e-12);
  }
}

TEST_CASE("conditional event log likelihood") {
  // Censored loan, eta = 0 on all post-t periods: 3 periods of log(1/2).
  auto panel = two_loan_panel(5, 0, 8);
  ModelDefinition model = ModelDefinition::build(panel, nullptr, Variant::M1);
  HyperParams theta;
  theta.lambda = 0.7;
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(model.layout().dim);
  const double ll =
      conditional_event_loglik(model, theta, mu, Eigen::Vector2d::Zero(), 0, 2);
  CHECK(ll == doctest::Approx(3.0 * std::log(0.5)).epsilon(1e-12));

  // Event at t+1 with a huge predictor: probability 1.
  auto panel_ev = two_loan_panel(3, 1, 8);
  ModelDefinition model_ev = ModelDefinition::build(panel_ev, nullptr, Variant::M1);
  Eigen::VectorXd mu_ev = Eigen::VectorXd::Zero(model_ev.layout().dim);
  mu_ev(model_ev.layout().off_nu0) = 400.0;
  const double ll_ev =
      conditional_event_loglik(model_ev, theta, mu_ev, Eigen::Vector2d::Zero(), 0, 2);
  CHECK(ll_ev == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS(conditional_event_loglik(model, theta, mu, Eigen::Vector2d::Zero(), 0, 5));
}

TEST_CASE("conditional event log likelihood equals a brute-force pmf product") {
  Rng rng(55);
  auto panel = test::tiny_panel(6, 9, 21, 0.5);
  ModelDefinition model = ModelDefinition::build(panel, nullptr, Variant::M1);
  const auto& lay = model.layout();
  HyperParams theta;
  theta.lambda = 0.45;
  Eigen::VectorXd mu(lay.dim);
  for (int j = 0; j < lay.dim; ++j) mu(j) = 0.3 * rng.normal();

  for (int loan = 0; loan < panel->n_loans; ++loan) {
    for (int t = 0; t < panel->duration[loan]; ++t) {
      const Eigen::Vector2d u_i(0.2, -0.05);
      const double got = conditional_event_loglik(model, theta, mu, u_i, loan, t);
      double expect = 0.0;
      for (int s = t + 1; s <= panel->duration[loan]; ++s) {
        auto [ry, rx] = model.design_rows(loan, s, theta.lambda);
        // The design row carries lambda-scaled U coefficients; substitute the
        // provided U_i there, the sampled field elsewhere.
        double eta = 0.0;
        for (std::size_t k = 0; k < rx.idx.size(); ++k) {
          if (rx.idx[k] == lay.u0(loan)) eta += rx.val[k] * u_i(0);
          else if (rx.idx[k] == lay.u1(loan)) eta += rx.val[k] * u_i(1);
          else eta += rx.val[k] * mu(rx.idx[k]);
        }
        const double p = 1.0 / (1.0 + std::exp(-eta));
        const int x = panel->rows[panel->loan_row_start[loan] + s - 1].x;
        expect += std::log(x ? p : 1.0 - p);
      }
      CHECK(std::abs(got - expect) < 1e-12 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("h_i is exactly the inverse conditional probability when lambda is zero") {
  auto panel = two_loan_panel(6, 1, 8);
  ModelDefinition model = ModelDefinition::build(panel, nullptr, Variant::M1);
  HyperParams theta;
  theta.lambda = 0.0;
  theta.tau_U0 = 4.0;
  theta.tau_U1 = 50.0;
  Rng rng(8);
  Eigen::VectorXd mu(model.layout().dim);
  for (int j = 0; j < mu.size(); ++j) mu(j) = 0.2 * rng.normal();

  const int t = 2;
  // Denominator is U-free, so h = 1/p for every method.
  const double log_p =
      conditional_event_loglik(model, theta, mu, Eigen::Vector2d::Zero(), 0, t);
  for (HiMethod method : {HiMethod::Laplace, HiMethod::Eb, HiMethod::Quadrature}) {
    const double lh = h_i_log(model, theta, mu, 0, t, method);
    CHECK(std::abs(lh - (-log_p)) < 1e-10);
  }
}

TEST_CASE("mcmc cvdcl on toy chains") {
  auto panel = two_loan_panel(5, 1, 8);
  ModelDefinition model = ModelDefinition::build(panel, nullptr, Variant::M1);
  const int dim = model.layout().dim;

  // Hand-built two-draw chain; inverse-probability averaging must equal the
  // harmonic-mean arithmetic done directly.
  ChainResult chain;
  chain.sampled_hypers = {Hyper::Lambda};
  chain.base = HyperParams{};
  chain.base.lambda = 0.3;
  chain.latent.resize(2, dim);
  chain.latent.setZero();
  chain.latent(0, model.layout().off_nu0) = -0.5;
  chain.latent(1, model.layout().off_nu0) = 0.25;
  chain.hyper_internal.resize(2, 1);
  chain.hyper_internal(0, 0) = 0.3;
  chain.hyper_internal(1, 0) = 0.3;
  chain.hyper_accept = Eigen::VectorXd::Ones(1);

  CvdclOptions opts;
  opts.n_batches = 2;
  const int t = 2;
  CvdclEvaluation ev = cvdcl_mcmc(model, chain, t, opts);
  CHECK(ev.n_at_risk == 2);

  double expect = 0.0;
  for (int loan = 0; loan < 2; ++loan) {
    double inv = 0.0;
    for (int g = 0; g < 2; ++g) {
      const Eigen::VectorXd mu = chain.latent.row(g);
      const Eigen::Vector2d u_i(mu(model.layout().u0(loan)), mu(model.layout().u1(loan)));
      inv += std::exp(-conditional_event_loglik(model, chain.theta_at(g), mu, u_i, loan, t));
    }
    expect += std::log(inv / 2.0) / 2.0;
  }
  CHECK(ev.estimate == doctest::Approx(expect).epsilon(1e-12));

  // Identical draws: batch estimates coincide, mc_se = 0.
  ChainResult flat = chain;
  flat.latent.row(1) = flat.latent.row(0);
  flat.hyper_internal.row(1) = flat.hyper_internal.row(0);
  CvdclEvaluation ev_flat = cvdcl_mcmc(model, flat, t, opts);
  CHECK(ev_flat.mc_se == doctest::Approx(0.0).epsilon(1e-14));

  CvdclOptions bad = opts;
  bad.n_batches = 3;
  CHECK_THROWS(cvdcl_mcmc(model, chain, t, bad));
}
