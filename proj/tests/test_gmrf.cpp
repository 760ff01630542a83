#include <doctest.h>

#include <Eigen/Dense>

#include "stjm/gmrf.hpp"
#include "stjm/graph.hpp"
#include "stjm/rng.hpp"
#include "test_support.hpp"

using namespace stjm;

TEST_CASE("rw2 structure matches the displayed matrix at T = 7") {
  const Eigen::MatrixXd R = build_rw2_structure(7).to_dense();
  Eigen::VectorXd first(7), second(7), middle(7);
  first << 1, -2, 1, 0, 0, 0, 0;
  second << -2, 5, -4, 1, 0, 0, 0;
  middle << 1, -4, 6, -4, 1, 0, 0;
  CHECK((R.row(0).transpose() - first).cwiseAbs().maxCoeff() == 0.0);
  CHECK((R.row(1).transpose() - second).cwiseAbs().maxCoeff() == 0.0);
  for (int r = 2; r <= 4; ++r) {
    Eigen::VectorXd expect = Eigen::VectorXd::Zero(7);
    expect.segment(r - 2, 5) << 1, -4, 6, -4, 1;
    CHECK((R.row(r).transpose() - expect).cwiseAbs().maxCoeff() == 0.0);
  }
  // Mirror rows at the bottom.
  CHECK(R(5, 5) == 5.0);
  CHECK(R(6, 6) == 1.0);
  CHECK(R == R.transpose());
}

TEST_CASE("rw2 structure at T = 3 and its null space") {
  const Eigen::MatrixXd R = build_rw2_structure(3).to_dense();
  Eigen::MatrixXd expect(3, 3);
  expect << 1, -2, 1, -2, 4, -2, 1, -2, 1;
  CHECK((R - expect).cwiseAbs().maxCoeff() == 0.0);

  for (int T : {3, 5, 9, 17}) {
    const Eigen::MatrixXd Rt = build_rw2_structure(T).to_dense();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(T);
    Eigen::VectorXd trend(T);
    for (int s = 0; s < T; ++s) trend(s) = s + 1;
    CHECK((Rt * ones).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK((Rt * trend).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(test::dense_rank(Rt) == T - 2);
  }
  CHECK_THROWS(build_rw2_structure(2));
}

TEST_CASE("icar structure from the element-wise definition") {
  AdjacencyGraph path(3, {{1, 2}, {2, 3}});
  const Eigen::MatrixXd R = build_icar_structure(path).to_dense();
  Eigen::MatrixXd expect(3, 3);
  expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK((R - expect).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(42);
  for (int rep = 0; rep < 5; ++rep) {
    AdjacencyGraph g = AdjacencyGraph::random_connected(6, 0.3, rng);
    const Eigen::MatrixXd Ru = build_icar_structure(g).to_dense();
    CHECK((Ru * Eigen::VectorXd::Ones(6)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Ru == Ru.transpose());
    for (int a = 0; a < 6; ++a) CHECK(Ru(a, a) == g.degree(a));
  }

  // Two disconnected edges: rank 2, two components.
  AdjacencyGraph two(4, {{1, 2}, {3, 4}});
  CHECK(two.n_components() == 2);
  CHECK(test::dense_rank(build_icar_structure(two).to_dense()) == 2);
}

TEST_CASE("graph validation rejects malformed pairs") {
  CHECK_THROWS(AdjacencyGraph(3, {{1, 1}}));
  CHECK_THROWS(AdjacencyGraph(3, {{1, 4}}));
  CHECK_THROWS(AdjacencyGraph(3, {{1, 2}, {2, 1}}));
}

TEST_CASE("interaction structure equals the dense Kronecker product") {
  const SparseSymmetric Rv = build_rw2_structure(3);
  AdjacencyGraph path(3, {{1, 2}, {2, 3}});
  const SparseSymmetric Ru = build_icar_structure(path);
  const Eigen::MatrixXd Rd = build_interaction_structure(Rv, Ru).to_dense();
  REQUIRE(Rd.rows() == 9);

  const Eigen::MatrixXd dv = Rv.to_dense();
  const Eigen::MatrixXd du = Ru.to_dense();
  Eigen::MatrixXd kron(9, 9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) kron.block(3 * i, 3 * j, 3, 3) = dv(i, j) * du;
  CHECK((Rd - kron).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(Rd == Rd.transpose());

  // Diagonal identity and the rank product rule at several sizes.
  Rng rng(11);
  for (int T : {3, 4, 6}) {
    for (int A : {2, 4, 6}) {
      AdjacencyGraph g = AdjacencyGraph::random_connected(A, 0.4, rng);
      const SparseSymmetric rv = build_rw2_structure(T);
      const SparseSymmetric ru = build_icar_structure(g);
      const Eigen::MatrixXd rd = build_interaction_structure(rv, ru).to_dense();
      const Eigen::MatrixXd dvT = rv.to_dense();
      const Eigen::MatrixXd duA = ru.to_dense();
      for (int s = 0; s < T; ++s)
        for (int a = 0; a < A; ++a)
          CHECK(rd(s * A + a, s * A + a) == doctest::Approx(dvT(s, s) * duA(a, a)));
      CHECK(test::dense_rank(rd) ==
            test::dense_rank(dvT) * test::dense_rank(duA));
    }
  }
}

TEST_CASE("constraint sets per variant") {
  const ConstraintSet m1 = build_constraints(5, 0, Variant::M1);
  CHECK(m1.count() == 1);
  CHECK(m1.rows.row(0).sum() == 5.0);
  CHECK((m1.rows.row(0).array() == 1.0).all());

  const ConstraintSet m2 = build_constraints(5, 4, Variant::M2);
  CHECK(m2.count() == 2);

  const ConstraintSet m3 = build_constraints(4, 3, Variant::M3);
  CHECK(m3.count() == 2 + 3 + 4 - 1);
  // Stacked rows keep full row rank after the redundant drop.
  Eigen::MatrixXd gram = m3.rows * m3.rows.transpose();
  CHECK(test::dense_rank(gram) == m3.count());
}

TEST_CASE("constrained interaction draws satisfy both sum families") {
  const int T = 4, A = 3;
  AdjacencyGraph g = AdjacencyGraph::lattice(1, 3);
  SparseSymmetric R = build_interaction_structure(build_rw2_structure(T), build_icar_structure(g));
  SparseSymmetric Q(T * A);
  for (const auto& e : R.entries()) Q.add(e.row, e.col, 2.0 * e.value);
  Q = add_jitter(Q, 1e-6);

  ConstraintSet full = build_constraints(T, A, Variant::M3);
  ConstraintSet cs;
  cs.rows = full.rows.block(2, T + A, full.count() - 2, T * A);
  cs.rhs = Eigen::VectorXd::Zero(full.count() - 2);

  Rng rng(5);
  Eigen::MatrixXd draws =
      sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(T * A), cs, 20, rng);
  for (int j = 0; j < draws.cols(); ++j) {
    for (int a = 0; a < A; ++a) {
      double time_sum = 0.0;
      for (int s = 0; s < T; ++s) time_sum += draws(s * A + a, j);
      CHECK(std::abs(time_sum) < 1e-10);
    }
    for (int s = 0; s < T; ++s) {
      double area_sum = 0.0;
      for (int a = 0; a < A; ++a) area_sum += draws(s * A + a, j);
      CHECK(std::abs(area_sum) < 1e-10);
    }
  }
}

TEST_CASE("constrained sampling: identity precision with a sum constraint") {
  const int n = 6;
  SparseSymmetric Q(n);
  for (int i = 0; i < n; ++i) Q.add(i, i, 1.0);
  ConstraintSet cs;
  cs.rows = Eigen::MatrixXd::Ones(1, n);
  cs.rhs = Eigen::VectorXd::Zero(1);
  Rng rng(123);
  Eigen::MatrixXd draws =
      sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(n), cs, 10000, rng);
  for (int j = 0; j < draws.cols(); ++j) CHECK(std::abs(draws.col(j).sum()) < 1e-8);
}

TEST_CASE("constrained sampling: x1 = x2 pins draws to the diagonal") {
  SparseSymmetric Q(2);
  Q.add(0, 0, 1.0);
  Q.add(1, 1, 1.0);
  ConstraintSet cs;
  cs.rows = Eigen::MatrixXd::Zero(1, 2);
  cs.rows(0, 0) = 1.0;
  cs.rows(0, 1) = -1.0;
  cs.rhs = Eigen::VectorXd::Zero(1);
  Rng rng(9);
  Eigen::MatrixXd draws = sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(2), cs, 200, rng);
  for (int j = 0; j < draws.cols(); ++j) CHECK(std::abs(draws(0, j) - draws(1, j)) < 1e-12);
}

TEST_CASE("constrained sampling covariance matches the dense kriging oracle") {
  const int T = 3;
  SparseSymmetric R = build_rw2_structure(T);
  SparseSymmetric Q(T);
  for (const auto& e : R.entries()) Q.add(e.row, e.col, e.value);
  Q = add_jitter(Q, 0.05);
  ConstraintSet cs;
  cs.rows = Eigen::MatrixXd::Ones(1, T);
  cs.rhs = Eigen::VectorXd::Zero(1);

  Rng rng(2024);
  const int n = 100000;
  Eigen::MatrixXd draws = sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(T), cs, n, rng);
  Eigen::MatrixXd emp = (draws * draws.transpose()) / n;
  const Eigen::MatrixXd oracle = test::conditioned_covariance(Q.to_dense(), cs.rows);
  const double scale = oracle.cwiseAbs().maxCoeff();
  CHECK((emp - oracle).cwiseAbs().maxCoeff() < 0.05 * scale);
}

TEST_CASE("cholesky failure names the offending pivot") {
  SparseSymmetric Q(3);
  Q.add(0, 0, 1.0);
  Q.add(1, 1, -2.0);
  Q.add(2, 2, 1.0);
  ConstraintSet none;
  none.rows = Eigen::MatrixXd::Zero(0, 3);
  none.rhs = Eigen::VectorXd::Zero(0);
  Rng rng(1);
  CHECK_THROWS_AS(sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(3), none, 1, rng),
                  NotPositiveDefiniteError);
  try {
    sample_constrained_gaussian(Q, Eigen::VectorXd::Zero(3), none, 1, rng);
  } catch (const NotPositiveDefiniteError& e) {
    CHECK(e.pivot >= 0);
    CHECK(std::string(e.what()).find("pivot") != std::string::npos);
  }
}

TEST_CASE("icar full conditional closed form") {
  AdjacencyGraph path(3, {{1, 2}, {2, 3}});
  Eigen::VectorXd u(3);
  u << 1.0, 0.0, 3.0;
  const auto cond = icar_full_conditional(u, 1, path, 1.0);
  CHECK(cond.mean == doctest::Approx(2.0));
  CHECK(cond.variance == doctest::Approx(0.5));

  // All neighbours equal c -> conditional mean c.
  Eigen::VectorXd uc = Eigen::VectorXd::Constant(3, 0.7);
  CHECK(icar_full_conditional(uc, 1, path, 3.0).mean == doctest::Approx(0.7));

  AdjacencyGraph isolated(3, {{1, 2}});
  Eigen::VectorXd u3 = Eigen::VectorXd::Zero(3);
  CHECK_THROWS(icar_full_conditional(u3, 2, isolated, 1.0));
}

TEST_CASE("icar full conditional agrees with precision-matrix conditioning") {
  Rng rng(77);
  AdjacencyGraph g = AdjacencyGraph::random_connected(6, 0.35, rng);
  const double tau_u = 1.7;
  const Eigen::MatrixXd R = build_icar_structure(g).to_dense();
  Eigen::VectorXd u(6);
  for (int i = 0; i < 6; ++i) u(i) = rng.normal();

  for (int a = 0; a < 6; ++a) {
    const auto cond = icar_full_conditional(u, a, g, tau_u);
    // Gaussian conditional from Q = tau R: mean = -Q_aa^-1 Q_a,-a u_-a.
    double cross = 0.0;
    for (int b = 0; b < 6; ++b)
      if (b != a) cross += tau_u * R(a, b) * u(b);
    const double mean = -cross / (tau_u * R(a, a));
    const double var = 1.0 / (tau_u * R(a, a));
    CHECK(std::abs(cond.mean - mean) < 1e-10);
    CHECK(std::abs(cond.variance - var) < 1e-10);
  }
}

TEST_CASE("structure matrices are exactly symmetric in stored entries") {
  Rng rng(3);
  AdjacencyGraph g = AdjacencyGraph::random_connected(5, 0.5, rng);
  for (const SparseSymmetric& R :
       {build_rw2_structure(6), build_icar_structure(g),
        build_interaction_structure(build_rw2_structure(4), build_icar_structure(g))}) {
    const Eigen::MatrixXd d = R.to_dense();
    CHECK(d == d.transpose());
  }
}

TEST_CASE("adjacency file round trip") {
  AdjacencyGraph g = AdjacencyGraph::lattice(2, 3);
  const std::string path = "/tmp/stjm_test_adj.txt";
  g.save(path);
  AdjacencyGraph back = AdjacencyGraph::load(path);
  CHECK(back.n_areas() == g.n_areas());
  CHECK(back.pairs() == g.pairs());
}
