#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "stjm/model.hpp"
#include "stjm/rng.hpp"
#include "test_support.hpp"

using namespace stjm;

namespace {

std::shared_ptr<PanelDataset> panel_with_areas(int n_loans, int t_study, int n_areas,
                                               std::uint64_t seed = 3) {
  auto panel = stjm::test::tiny_panel(n_loans, t_study, seed);
  for (int i = 0; i < n_loans; ++i) panel->area[i] = 1 + i % n_areas;
  return panel;
}

}  // namespace

TEST_CASE("latent dimension follows the block formula") {
  auto panel = panel_with_areas(10, 5, 3);
  ModelDefinition m1 = ModelDefinition::build(panel, nullptr, Variant::M1);
  CHECK(m1.layout().dim == 2 * 10 + 2 + 2 + 1 + 5);  // 30

  auto graph = std::make_shared<AdjacencyGraph>(AdjacencyGraph::lattice(1, 3));
  ModelDefinition m3 = ModelDefinition::build(panel, graph, Variant::M3);
  CHECK(m3.layout().dim == 30 + 3 + 15);  // 48

  ModelDefinition m2 = ModelDefinition::build(panel, graph, Variant::M2);
  CHECK(m2.layout().dim == 33);
  CHECK(m2.constraints().count() == 2);
  CHECK(m3.constraints().count() == 2 + 3 + 5 - 1);

  CHECK_THROWS(ModelDefinition::build(panel, nullptr, Variant::M2));
}

TEST_CASE("per-loan precision block inverts the random-effect covariance") {
  auto panel = stjm::test::tiny_panel(4, 6);
  ModelDefinition model = ModelDefinition::build(panel, nullptr, Variant::M1);

  HyperParams unit;
  unit.tau_U0 = 1.0;
  unit.tau_U1 = 1.0;
  unit.rho_01 = 0.0;
  CHECK((unit.q_u() - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() == 0.0);

  // Table-3-style values: dense 2x2 inversion oracle.
  HyperParams paper;
  paper.tau_U0 = 9.651;
  paper.tau_U1 = 895.736;
  paper.rho_01 = -0.067;
  Eigen::Matrix2d cov;
  const double c = paper.rho_01 / std::sqrt(paper.tau_U0 * paper.tau_U1);
  cov << 1.0 / paper.tau_U0, c, c, 1.0 / paper.tau_U1;
  const Eigen::Matrix2d expect = cov.inverse();
  CHECK((paper.q_u() - expect).cwiseAbs().maxCoeff() < 1e-9 * expect.cwiseAbs().maxCoeff());

  const Eigen::MatrixXd q = model.assemble_precision(paper).to_dense();
  const auto& lay = model.layout();
  for (int i = 0; i < lay.n_loans; ++i) {
    CHECK(q(lay.u0(i), lay.u0(i)) == doctest::Approx(expect(0, 0)));
    CHECK(q(lay.u0(i), lay.u1(i)) == doctest::Approx(expect(0, 1)));
    CHECK(q(lay.u1(i), lay.u1(i)) == doctest::Approx(expect(1, 1)));
  }

  // Dimension and sparsity pattern do not depend on theta.
  HyperParams other;
  other.tau_Y = 9.0;
  other.tau_v = 0.01;
  other.lambda = 2.0;
  const auto qa = model.assemble_precision(paper);
  const auto qb = model.assemble_precision(other);
  CHECK(qa.dim() == qb.dim());
  CHECK(qa.entries().size() == qb.entries().size());

  HyperParams bad;
  bad.rho_01 = 1.5;
  CHECK_THROWS(model.assemble_precision(bad));
}

TEST_CASE("design rows reproduce the two predictors") {
  auto panel = panel_with_areas(6, 5, 2, 9);
  auto graph = std::make_shared<AdjacencyGraph>(AdjacencyGraph::lattice(1, 2));
  ModelDefinition model = ModelDefinition::build(panel, graph, Variant::M3);
  const auto& lay = model.layout();

  // lambda = 0 decouples the survival row from the U block.
  auto [ry0, rx0] = model.design_rows(0, 1, 0.0);
  for (std::size_t k = 0; k < rx0.idx.size(); ++k)
    if (rx0.idx[k] == lay.u0(0) || rx0.idx[k] == lay.u1(0)) CHECK(rx0.val[k] == 0.0);

  // s = 1 with the Table-3 association puts (0.201, 0.201) on the U block.
  auto [ry1, rx1] = model.design_rows(2, 1, 0.201);
  double got_u0 = 0.0, got_u1 = 0.0;
  for (std::size_t k = 0; k < rx1.idx.size(); ++k) {
    if (rx1.idx[k] == lay.u0(2)) got_u0 = rx1.val[k];
    if (rx1.idx[k] == lay.u1(2)) got_u1 = rx1.val[k];
  }
  CHECK(got_u0 == doctest::Approx(0.201));
  CHECK(got_u1 == doctest::Approx(0.201));

  // Row-based eta equals the hand-coded predictor on every panel row.
  Rng rng(31);
  Eigen::VectorXd mu(lay.dim);
  for (int j = 0; j < lay.dim; ++j) mu(j) = rng.normal();
  const double lambda = 0.37;
  for (const auto& r : model.row_designs()) {
    auto [ry, rx] = model.design_rows(r.loan, r.s, lambda);
    const double eta_y_direct = mu(lay.off_beta1) + r.s * mu(lay.off_beta1 + 1) +
                                mu(lay.u0(r.loan)) + r.s * mu(lay.u1(r.loan));
    double eta_x_direct = mu(lay.off_nu0) + mu(lay.v(r.s)) +
                          mu(lay.u(panel->area[r.loan] - 1)) +
                          mu(lay.delta(panel->area[r.loan] - 1, r.s)) +
                          lambda * (mu(lay.u0(r.loan)) + r.s * mu(lay.u1(r.loan)));
    for (int j = 0; j < lay.n_covariates; ++j)
      eta_x_direct += model.covariate(r.loan, j) * mu(lay.off_beta2 + j);
    CHECK(std::abs(ry.dot(mu) - eta_y_direct) < 1e-12);
    CHECK(std::abs(rx.dot(mu) - eta_x_direct) < 1e-12);
    CHECK(std::abs(model.eta_y(mu, r) - eta_y_direct) < 1e-12);
    CHECK(std::abs(model.eta_x(mu, r, lambda) - eta_x_direct) < 1e-12);
  }

  CHECK_THROWS(model.design_rows(0, panel->duration[0] + 1, 0.0));
  CHECK_THROWS(model.design_rows(99, 1, 0.0));
}

TEST_CASE("hyper prior log densities") {
  HyperPriorSettings s;  // Gamma(1, 5e-5), N(0, 10^2), N(0, 1) on Fisher rho

  HyperParams p;
  p.tau_v = 1.0;
  const double expect_prec = std::log(5e-5) - 5e-5;  // log Gamma(1,b) pdf at 1 (+ zero Jacobian)
  CHECK(log_hyper_prior(p, s, {Hyper::TauV}) == doctest::Approx(expect_prec).epsilon(1e-12));

  p.lambda = 0.0;
  const double expect_lambda = -std::log(10.0) - 0.5 * std::log(2.0 * M_PI);
  CHECK(log_hyper_prior(p, s, {Hyper::Lambda}) == doctest::Approx(expect_lambda).epsilon(1e-12));

  // Log-precision Jacobian: internal density is natural density times tau.
  p.tau_v = 3.7;
  const double natural = std::log(5e-5) - 5e-5 * 3.7;
  CHECK(log_hyper_prior(p, s, {Hyper::TauV}) ==
        doctest::Approx(natural + std::log(3.7)).epsilon(1e-12));
}

TEST_CASE("hyper map round trip") {
  HyperParams p;
  p.tau_Y = 12.0;
  p.rho_01 = -0.4;
  p.lambda = 0.7;
  p.tau_v = 0.3;
  HyperMap map({Hyper::TauY, Hyper::TauU0, Hyper::TauU1, Hyper::Rho01, Hyper::Lambda,
                Hyper::TauV},
               HyperParams{});
  const Eigen::VectorXd x = map.to_internal(p);
  const HyperParams back = map.from_internal(x);
  CHECK(back.tau_Y == doctest::Approx(p.tau_Y));
  CHECK(back.rho_01 == doctest::Approx(p.rho_01));
  CHECK(back.lambda == doctest::Approx(p.lambda));
  CHECK(back.tau_v == doctest::Approx(p.tau_v));
}

TEST_CASE("assembled prior precision is positive semi-definite") {
  auto panel = panel_with_areas(5, 5, 3, 13);
  auto graph = std::make_shared<AdjacencyGraph>(AdjacencyGraph::lattice(1, 3));
  ModelDefinition model = ModelDefinition::build(panel, graph, Variant::M3);
  HyperParams theta;
  theta.tau_v = 2.0;
  theta.tau_u = 1.5;
  theta.tau_delta = 3.0;
  const Eigen::MatrixXd q = model.assemble_precision(theta).to_dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() > -1e-9);
}
