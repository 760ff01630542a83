#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "stjm/pipeline.hpp"

using namespace stjm;

namespace {

LoanRecord basic_loan(const std::string& id, int duration, int event) {
  LoanRecord loan;
  loan.id = id;
  loan.area = 1;
  loan.orig_date = "2015-06-01";
  loan.term_months = 360;
  loan.int_rt = 4.0;
  loan.orig_upb = 200000.0;
  loan.cltv = 75.0;
  loan.cnt_units = 1;
  loan.dti = 30.0;
  loan.loan_purpose = "P";
  loan.cnt_borr = 2;
  loan.duration = duration;
  loan.event = event;
  for (int s = 1; s <= duration; ++s)
    loan.balances.push_back(scheduled_balance(loan.orig_upb, 4.0 / 100 / 12, 360, s));
  return loan;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("longitudinal outcome basics") {
  CHECK(longitudinal_outcome(200000, 200000, 0.04 / 12, 360, 54) == 0.0);
  // Frozen golden value from a high-precision evaluation.
  CHECK(longitudinal_outcome(200000, 150000, 0.04 / 12, 360, 54) ==
        doctest::Approx(3.213191686953959).epsilon(1e-12));
  CHECK_THROWS(longitudinal_outcome(200000, 150000, 0.0, 360, 54));
  CHECK_THROWS(longitudinal_outcome(200000, 150000, -0.001, 360, 54));

  // Monotone in the repaid amount.
  double prev = -1.0;
  for (double pt : {200000.0, 180000.0, 120000.0, 50000.0, 0.0}) {
    const double y = longitudinal_outcome(200000, pt, 0.003, 360, 54);
    CHECK(y > prev);
    prev = y;
  }
}

TEST_CASE("on-schedule loans match the geometric-series closed form") {
  for (double i : {0.001, 0.004, 0.01}) {
    for (int m : {120, 360}) {
      for (int t : {1, 7, 60, m / 2, m}) {
        const double pt = scheduled_balance(150000.0, i, m, t);
        const double y = longitudinal_outcome(150000.0, pt, i, m, 54);
        const double closed = (std::pow(1.0 + i, t) - 1.0) / (i * 54);
        CHECK(std::abs(y - closed) < 1e-12 * std::max(1.0, std::abs(closed)));
      }
    }
  }
}

TEST_CASE("person-period expansion") {
  std::vector<LoanRecord> loans = {basic_loan("A", 3, 1), basic_loan("B", 3, 0),
                                   basic_loan("C", 5, 1)};
  PanelDataset panel = expand_person_period(loans, 10);
  CHECK(panel.n_loans == 3);
  CHECK(panel.n_rows() == 3 + 3 + 5);

  // Event loan: zeros then a single one; censored loan: all zeros.
  std::vector<int> xa, xb;
  for (const auto& r : panel.rows) {
    if (r.loan == 0) xa.push_back(r.x);
    if (r.loan == 1) xb.push_back(r.x);
  }
  CHECK(xa == std::vector<int>({0, 0, 1}));
  CHECK(xb == std::vector<int>({0, 0, 0}));

  // (t_i, delta_i) is recoverable from each loan's sequence.
  for (int i = 0; i < panel.n_loans; ++i) {
    int last_s = 0, sum_x = 0, x_last = 0;
    for (const auto& r : panel.rows)
      if (r.loan == i) {
        last_s = std::max(last_s, r.s);
        sum_x += r.x;
        if (r.s == panel.duration[i]) x_last = r.x;
      }
    CHECK(last_s == panel.duration[i]);
    CHECK(sum_x == panel.event[i]);
    CHECK(x_last == panel.event[i]);
  }

  std::vector<LoanRecord> too_long = {basic_loan("A", 12, 0)};
  CHECK_THROWS(expand_person_period(too_long, 10));
}

TEST_CASE("standardize to zero mean and unit sd") {
  std::vector<LoanRecord> loans = {basic_loan("A", 2, 0), basic_loan("B", 2, 0),
                                   basic_loan("C", 2, 0)};
  loans[0].dti = 1.0;
  loans[1].dti = 2.0;
  loans[2].dti = 3.0;
  PanelDataset panel = expand_person_period(loans, 10);
  const Eigen::MatrixXd before = panel.covariates;
  standardize(panel, {"dti"});
  const int j = panel.covariate_index("dti");
  CHECK(panel.covariates(0, j) == doctest::Approx(-1.0));
  CHECK(panel.covariates(1, j) == doctest::Approx(0.0));
  CHECK(panel.covariates(2, j) == doctest::Approx(1.0));

  // Stored stats map a Table-1-style value: (44.01 - 34.87) / 9.14 = 1.
  StandardizationStat dti_stat{"dti", 34.87, 9.14};
  CHECK((44.01 - dti_stat.mean) / dti_stat.sd == doctest::Approx(1.0));

  // De-standardization is the identity.
  for (int i = 0; i < 3; ++i) {
    const double back =
        panel.covariates(i, j) * panel.standardization[0].sd + panel.standardization[0].mean;
    CHECK(std::abs(back - before(i, j)) < 1e-12);
  }

  std::vector<LoanRecord> flat = {basic_loan("A", 2, 0), basic_loan("B", 2, 0)};
  PanelDataset p2 = expand_person_period(flat, 10);
  CHECK_THROWS(standardize(p2, {"dti"}));
  CHECK_THROWS(standardize(p2, {"nope"}));
}

TEST_CASE("loan loading from the CSV pair") {
  const std::string orig = "/tmp/stjm_orig.csv";
  const std::string perf = "/tmp/stjm_perf.csv";
  write_file(orig,
             "loan_id,area,orig_date,term,int_rt,orig_upb,cltv,cnt_units,dti,loan_purpose,cnt_borr\n"
             "A,3,2015-06-01,360,4.0,200000,75,1,30,P,2\n"
             "B,5,2015-07-01,180,3.5,150000,60,2,28,C,1\n");
  write_file(perf,
             "loan_id,month_index,current_upb,prepaid_flag\n"
             "A,1,199700,0\nA,2,199400,0\nA,3,199100,0\nA,4,198800,0\nA,5,0,1\n"
             "B,1,149500,0\nB,2,149000,0\n");
  LoadWarnings warnings;
  auto loans = load_loans(orig, perf, &warnings);
  REQUIRE(loans.size() == 2);
  CHECK(loans[0].duration == 5);
  CHECK(loans[0].event == 1);
  CHECK(loans[1].duration == 2);
  CHECK(loans[1].event == 0);
  CHECK(loans[1].term_months == 180);
  CHECK(warnings.messages.empty());

  // Orphan performance row.
  write_file(perf, "loan_id,month_index,current_upb,prepaid_flag\nZ,1,10,0\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(load_loans(orig, perf)),
                       doctest::Contains("orphan"), std::runtime_error);

  // Loans without observations are named in the error.
  write_file(perf, "loan_id,month_index,current_upb,prepaid_flag\nA,1,199700,0\n");
  try {
    load_loans(orig, perf);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("B") != std::string::npos);
  }

  // Rising balances warn but do not fail.
  write_file(perf,
             "loan_id,month_index,current_upb,prepaid_flag\n"
             "A,1,199700,0\nA,2,201000,0\n"
             "B,1,149500,0\n");
  LoadWarnings w2;
  auto loans2 = load_loans(orig, perf, &w2);
  CHECK(loans2[0].duration == 2);
  CHECK(w2.messages.size() == 1);

  // Duplicate (loan, month) rows are an error.
  write_file(perf,
             "loan_id,month_index,current_upb,prepaid_flag\n"
             "A,1,199700,0\nA,1,199600,0\nB,1,149500,0\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(load_loans(orig, perf)),
                       doctest::Contains("duplicate"), std::runtime_error);

  std::remove(orig.c_str());
  std::remove(perf.c_str());
}

TEST_CASE("write-load round trip preserves loan fields") {
  std::vector<LoanRecord> loans = {basic_loan("A", 4, 1), basic_loan("B", 2, 0),
                                   basic_loan("C", 6, 1)};
  const std::string orig = "/tmp/stjm_rt_orig.csv";
  const std::string perf = "/tmp/stjm_rt_perf.csv";
  write_loans(loans, orig, perf);
  auto back = load_loans(orig, perf);
  REQUIRE(back.size() == loans.size());
  for (std::size_t i = 0; i < loans.size(); ++i) {
    CHECK(back[i].id == loans[i].id);
    CHECK(back[i].area == loans[i].area);
    CHECK(back[i].duration == loans[i].duration);
    CHECK(back[i].event == loans[i].event);
    CHECK(back[i].term_months == loans[i].term_months);
    CHECK(back[i].int_rt == doctest::Approx(loans[i].int_rt).epsilon(1e-14));
    for (int s = 0; s < loans[i].duration; ++s)
      CHECK(back[i].balances[s] == doctest::Approx(loans[i].balances[s]).epsilon(1e-12));
  }
  std::remove(orig.c_str());
  std::remove(perf.c_str());
}
