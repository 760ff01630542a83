#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "stjm/pipeline.hpp"
#include "stjm/simulate.hpp"
#include "test_support.hpp"

using namespace stjm;

TEST_CASE("fixed seed reproduces datasets bit-exactly") {
  SimConfig sc = test::small_sim_config(99, 80, 18);
  SimResult a = simulate_appendix_b(sc);
  SimResult b = simulate_appendix_b(sc);
  CHECK(a.panel.duration == b.panel.duration);
  CHECK(a.panel.event == b.panel.event);
  REQUIRE(a.panel.n_rows() == b.panel.n_rows());
  for (int r = 0; r < a.panel.n_rows(); ++r) {
    CHECK(a.panel.rows[r].y == b.panel.rows[r].y);
    CHECK(a.panel.rows[r].x == b.panel.rows[r].x);
  }
  CHECK(a.truth.v == b.truth.v);

  SimResult c = simulate_appendix_b(test::small_sim_config(100, 80, 18));
  bool identical = a.panel.duration == c.panel.duration;
  CHECK_FALSE(identical);
}

TEST_CASE("hazard shut off means everyone is censored") {
  SimConfig sc = test::small_sim_config(4, 200, 15);
  sc.nu0 = -30.0;
  sc.truth.lambda = 0.0;
  sc.default_shape = false;
  SimResult sim = simulate_appendix_b(sc);
  for (int i = 0; i < sc.n_loans; ++i) {
    CHECK(sim.panel.event[i] == 0);
    CHECK(sim.panel.duration[i] == sc.t_study);
  }
}

TEST_CASE("nu0 = 0 with no other effects gives a geometric(1/2) duration") {
  SimConfig sc = test::small_sim_config(17, 10000, 15);
  sc.nu0 = 0.0;
  sc.beta12 = sc.beta22 = 0.0;
  sc.truth.lambda = 0.0;
  sc.default_shape = false;
  sc.truth.tau_v = 1e8;  // fluctuations off
  SimResult sim = simulate_appendix_b(sc);
  double mean_duration = 0.0;
  for (int d : sim.panel.duration) mean_duration += d;
  mean_duration /= sc.n_loans;
  CHECK(mean_duration == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("default config tracks the published at-risk profile at N = 500") {
  const int targets[5] = {424, 347, 183, 85, 36};
  const int times[5] = {12, 18, 24, 30, 36};
  for (std::uint64_t seed : {1ull, 3ull, 7ull}) {
    SimConfig sc;
    sc.seed = seed;
    SimResult sim = simulate_appendix_b(sc);
    for (int k = 0; k < 5; ++k) {
      const int nt = sim.panel.n_at_risk(times[k]);
      CHECK(nt >= static_cast<int>(std::floor(0.75 * targets[k])));
      CHECK(nt <= static_cast<int>(std::ceil(1.25 * targets[k])));
    }
  }
}

TEST_CASE("degenerate spatial precision matches the temporal-only generator") {
  SimConfig sc = test::small_sim_config(7, 400, 20);
  auto graph = std::make_shared<AdjacencyGraph>(AdjacencyGraph::lattice(2, 3));
  sc.graph = graph;
  sc.truth.tau_u = 1e6;
  sc.truth.tau_delta = 1e6;
  SimResult spatial = simulate_stjm(sc);
  CHECK(spatial.truth.u.cwiseAbs().maxCoeff() < 0.02);

  SimConfig plain = sc;
  plain.graph = nullptr;
  SimResult temporal = simulate_appendix_b(plain);
  // Same per-loan streams: realized outcomes agree up to the tiny spatial tilt.
  int same_duration = 0;
  for (int i = 0; i < sc.n_loans; ++i)
    if (spatial.panel.duration[i] == temporal.panel.duration[i]) ++same_duration;
  CHECK(same_duration >= static_cast<int>(0.95 * sc.n_loans));
}

TEST_CASE("spatial simulation produces positive Moran autocorrelation") {
  SimConfig sc = test::small_sim_config(21, 5000, 20);
  auto graph = std::make_shared<AdjacencyGraph>(AdjacencyGraph::lattice(5, 5));
  sc.graph = graph;
  sc.truth.tau_u = 1.0;
  // Moderate overall hazard so area event rates stay away from 1.
  sc.nu0 = -4.5;
  sc.default_shape = false;
  SimResult sim = simulate_stjm(sc);

  const int A = graph->n_areas();
  Eigen::VectorXd events = Eigen::VectorXd::Zero(A), counts = Eigen::VectorXd::Zero(A);
  for (int i = 0; i < sc.n_loans; ++i) {
    counts(sim.panel.area[i] - 1) += 1.0;
    events(sim.panel.area[i] - 1) += sim.panel.event[i];
  }
  Eigen::VectorXd rate = events.array() / counts.array().max(1.0);
  const double mean = rate.mean();
  double num = 0.0, den = 0.0, wsum = 0.0;
  for (auto [a, b] : graph->pairs()) {
    num += 2.0 * (rate(a - 1) - mean) * (rate(b - 1) - mean);
    wsum += 2.0;
  }
  for (int a = 0; a < A; ++a) den += (rate(a) - mean) * (rate(a) - mean);
  const double moran = (A / wsum) * (num / den);
  CHECK(moran > 0.05);

  // Uniform assignment: per-area counts within chi-square tolerance.
  double chi2 = 0.0;
  const double expect = static_cast<double>(sc.n_loans) / A;
  for (int a = 0; a < A; ++a) chi2 += (counts(a) - expect) * (counts(a) - expect) / expect;
  CHECK(chi2 < 52.6);  // chi-square(24) upper 0.999 quantile
}

TEST_CASE("simulated data round trips through the CSV pipeline") {
  SimConfig sc = test::small_sim_config(5, 40, 16);
  SimResult sim = simulate_appendix_b(sc);
  auto loans = sim_to_loan_records(sim, sc);
  const std::string orig = "/tmp/stjm_sim_orig.csv";
  const std::string perf = "/tmp/stjm_sim_perf.csv";
  write_loans(loans, orig, perf);
  auto back = load_loans(orig, perf);
  PanelDataset panel = expand_person_period(back, sc.t_study);

  REQUIRE(panel.n_loans == sim.panel.n_loans);
  CHECK(panel.duration == sim.panel.duration);
  CHECK(panel.event == sim.panel.event);
  for (int r = 0; r < panel.n_rows(); ++r)
    CHECK(panel.rows[r].y == doctest::Approx(sim.panel.rows[r].y).epsilon(1e-10));
  // z1/z2 ride in the cltv and dti columns.
  const int j_cltv = panel.covariate_index("cltv");
  const int j_dti = panel.covariate_index("dti");
  for (int i = 0; i < panel.n_loans; ++i) {
    CHECK(panel.covariates(i, j_cltv) == doctest::Approx(sim.panel.covariates(i, 0)).epsilon(1e-12));
    CHECK(panel.covariates(i, j_dti) == doctest::Approx(sim.panel.covariates(i, 1)).epsilon(1e-12));
  }
  std::remove(orig.c_str());
  std::remove(perf.c_str());
}
