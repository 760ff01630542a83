#include "stjm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace stjm {

const std::vector<std::string> kLoanCovariateNames = {
    "cltv", "orig_upb", "cnt_units1", "dti", "int_rt",
    "term_g15", "loan_purposeN", "loan_purposeP", "cnt_borr2"};

double longitudinal_outcome(double p0, double pt, double i_monthly, int term_months,
                            int t_study) {
  if (!(i_monthly > 0.0))
    throw std::invalid_argument("longitudinal_outcome: monthly rate must be positive");
  if (!(p0 > 0.0)) throw std::invalid_argument("longitudinal_outcome: P0 must be positive");
  const double paid_fraction = (p0 - pt) / p0;
  const double scale = (std::pow(1.0 + i_monthly, term_months) - 1.0) / (i_monthly * t_study);
  return paid_fraction * scale;
}

double scheduled_balance(double p0, double i_monthly, int term_months, int t) {
  const double gM = std::pow(1.0 + i_monthly, term_months);
  const double gt = std::pow(1.0 + i_monthly, t);
  return p0 * (gM - gt) / (gM - 1.0);
}

PanelDataset expand_person_period(const std::vector<LoanRecord>& loans, int t_study) {
  if (loans.empty()) throw std::invalid_argument("expand_person_period: no loans");
  PanelDataset panel;
  panel.n_loans = static_cast<int>(loans.size());
  panel.t_study = t_study;
  panel.covariate_names = kLoanCovariateNames;
  panel.covariates.resize(panel.n_loans, static_cast<int>(kLoanCovariateNames.size()));

  for (int i = 0; i < panel.n_loans; ++i) {
    const LoanRecord& loan = loans[i];
    if (loan.duration < 1)
      throw std::runtime_error("loan " + loan.id + ": duration must be >= 1");
    if (loan.duration > t_study)
      throw std::runtime_error("loan " + loan.id + ": duration " +
                               std::to_string(loan.duration) + " exceeds study period " +
                               std::to_string(t_study));
    if (static_cast<int>(loan.balances.size()) != loan.duration)
      throw std::runtime_error("loan " + loan.id + ": balance count differs from duration");

    panel.loan_ids.push_back(loan.id);
    panel.area.push_back(loan.area);
    panel.duration.push_back(loan.duration);
    panel.event.push_back(loan.event);

    panel.covariates(i, 0) = loan.cltv;
    panel.covariates(i, 1) = loan.orig_upb;
    panel.covariates(i, 2) = loan.cnt_units == 1 ? 1.0 : 0.0;
    panel.covariates(i, 3) = loan.dti;
    panel.covariates(i, 4) = loan.int_rt;
    panel.covariates(i, 5) = loan.term_months > 180 ? 1.0 : 0.0;
    panel.covariates(i, 6) = loan.loan_purpose == "N" ? 1.0 : 0.0;
    panel.covariates(i, 7) = loan.loan_purpose == "P" ? 1.0 : 0.0;
    panel.covariates(i, 8) = loan.cnt_borr >= 2 ? 1.0 : 0.0;

    const double i_monthly = loan.int_rt / 100.0 / 12.0;
    for (int s = 1; s <= loan.duration; ++s) {
      PanelRow row;
      row.loan = i;
      row.s = s;
      row.y = longitudinal_outcome(loan.orig_upb, loan.balances[s - 1], i_monthly,
                                   loan.term_months, t_study);
      row.x = (s == loan.duration) ? loan.event : 0;
      panel.rows.push_back(row);
    }
  }
  panel.rebuild_row_index();
  panel.validate();
  return panel;
}

void standardize(PanelDataset& panel, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    const int j = panel.covariate_index(name);
    if (j < 0) throw std::invalid_argument("standardize: unknown covariate " + name);
    const Eigen::VectorXd col = panel.covariates.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / (col.size() - 1);
    if (!(var > 0.0))
      throw std::runtime_error("standardize: covariate " + name + " has zero variance");
    const double sd = std::sqrt(var);
    panel.covariates.col(j) = (col.array() - mean) / sd;
    panel.standardization.push_back({name, mean, sd});
  }
}

void apply_standardization(PanelDataset& panel, const std::vector<StandardizationStat>& stats) {
  for (const auto& st : stats) {
    const int j = panel.covariate_index(st.name);
    if (j < 0) throw std::invalid_argument("apply_standardization: unknown covariate " + st.name);
    panel.covariates.col(j) = (panel.covariates.col(j).array() - st.mean) / st.sd;
  }
  panel.standardization = stats;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name, const std::string& path) const {
    for (int j = 0; j < static_cast<int>(header.size()); ++j)
      if (header[j] == name) return j;
    throw std::runtime_error("missing column '" + name + "' in " + path);
  }
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    t.rows.push_back(split_csv_line(line));
  }
  return t;
}

}  // namespace

std::vector<LoanRecord> load_loans(const std::string& origination_path,
                                   const std::string& performance_path,
                                   LoadWarnings* warnings) {
  CsvTable orig = read_csv(origination_path);
  CsvTable perf = read_csv(performance_path);

  const int o_id = orig.col("loan_id", origination_path);
  const int o_area = orig.col("area", origination_path);
  const int o_date = orig.col("orig_date", origination_path);
  const int o_term = orig.col("term", origination_path);
  const int o_rate = orig.col("int_rt", origination_path);
  const int o_upb = orig.col("orig_upb", origination_path);
  const int o_cltv = orig.col("cltv", origination_path);
  const int o_units = orig.col("cnt_units", origination_path);
  const int o_dti = orig.col("dti", origination_path);
  const int o_purpose = orig.col("loan_purpose", origination_path);
  const int o_borr = orig.col("cnt_borr", origination_path);

  std::vector<LoanRecord> loans;
  std::map<std::string, int> index;
  for (const auto& row : orig.rows) {
    LoanRecord loan;
    loan.id = row[o_id];
    loan.area = std::stoi(row[o_area]);
    loan.orig_date = row[o_date];
    loan.term_months = std::stoi(row[o_term]);
    loan.int_rt = std::stod(row[o_rate]);
    loan.orig_upb = std::stod(row[o_upb]);
    loan.cltv = std::stod(row[o_cltv]);
    loan.cnt_units = std::stoi(row[o_units]);
    loan.dti = std::stod(row[o_dti]);
    loan.loan_purpose = row[o_purpose];
    loan.cnt_borr = std::stoi(row[o_borr]);
    if (!(loan.int_rt > 0.0))
      throw std::runtime_error("loan " + loan.id +
                               ": non-positive interest rate; the outcome transform "
                               "requires a positive rate");
    if (index.count(loan.id))
      throw std::runtime_error("duplicate loan id in origination file: " + loan.id);
    index[loan.id] = static_cast<int>(loans.size());
    loans.push_back(std::move(loan));
  }

  const int p_id = perf.col("loan_id", performance_path);
  const int p_month = perf.col("month_index", performance_path);
  const int p_upb = perf.col("current_upb", performance_path);
  const int p_flag = perf.col("prepaid_flag", performance_path);

  std::vector<std::vector<std::pair<int, std::pair<double, int>>>> monthly(loans.size());
  for (const auto& row : perf.rows) {
    auto it = index.find(row[p_id]);
    if (it == index.end())
      throw std::runtime_error("orphan performance row for unknown loan id: " + row[p_id]);
    monthly[it->second].push_back(
        {std::stoi(row[p_month]), {std::stod(row[p_upb]), std::stoi(row[p_flag])}});
  }

  std::vector<std::string> missing;
  for (std::size_t i = 0; i < loans.size(); ++i) {
    auto& rows = monthly[i];
    if (rows.empty()) {
      missing.push_back(loans[i].id);
      continue;
    }
    std::sort(rows.begin(), rows.end());
    LoanRecord& loan = loans[i];
    loan.balances.clear();
    int prev_month = 0;
    double prev_balance = loan.orig_upb;
    for (const auto& [month, data] : rows) {
      if (month == prev_month)
        throw std::runtime_error("duplicate (loan, month) performance row: " + loan.id +
                                 " month " + std::to_string(month));
      if (month != prev_month + 1)
        throw std::runtime_error("loan " + loan.id + ": performance months have a gap at " +
                                 std::to_string(month));
      if (warnings && data.first > prev_balance + 1e-9)
        warnings->messages.push_back("loan " + loan.id + ": balance rises at month " +
                                     std::to_string(month));
      loan.balances.push_back(data.first);
      prev_month = month;
      prev_balance = data.first;
    }
    loan.duration = prev_month;
    loan.event = rows.back().second.second ? 1 : 0;
  }
  if (!missing.empty()) {
    std::string msg = "loans without performance observations:";
    for (const auto& id : missing) msg += " " + id;
    throw std::runtime_error(msg);
  }
  return loans;
}

void write_loans(const std::vector<LoanRecord>& loans, const std::string& origination_path,
                 const std::string& performance_path) {
  std::ofstream orig(origination_path);
  std::ofstream perf(performance_path);
  if (!orig || !perf) throw std::runtime_error("cannot write loan CSV files");
  orig.precision(17);
  perf.precision(17);
  orig << "loan_id,area,orig_date,term,int_rt,orig_upb,cltv,cnt_units,dti,loan_purpose,cnt_borr\n";
  perf << "loan_id,month_index,current_upb,prepaid_flag\n";
  for (const auto& loan : loans) {
    orig << loan.id << ',' << loan.area << ',' << loan.orig_date << ',' << loan.term_months
         << ',' << loan.int_rt << ',' << loan.orig_upb << ',' << loan.cltv << ','
         << loan.cnt_units << ',' << loan.dti << ',' << loan.loan_purpose << ','
         << loan.cnt_borr << '\n';
    for (int s = 1; s <= loan.duration; ++s) {
      const int flag = (s == loan.duration) ? loan.event : 0;
      perf << loan.id << ',' << s << ',' << loan.balances[s - 1] << ',' << flag << '\n';
    }
  }
}

}  // namespace stjm
