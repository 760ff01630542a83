#pragma once

#include <string>
#include <vector>

#include "stjm/panel.hpp"

namespace stjm {

// Scaled paid-fraction outcome from unpaid principal balance:
// y = ((P0 - Pt) / P0) * ((1 + i)^M - 1) / (i * T_study).
double longitudinal_outcome(double p0, double pt, double i_monthly, int term_months,
                            int t_study);

// Scheduled (annuity) balance after t months, used as a diagnostic and a
// test oracle for the geometric-series identity.
double scheduled_balance(double p0, double i_monthly, int term_months, int t);

// Expands validated loans into the person-period panel. Censored loans get
// an all-zero event sequence, event loans a single trailing 1.
PanelDataset expand_person_period(const std::vector<LoanRecord>& loans, int t_study);

// Standardizes the named covariates in place to mean 0, sd 1 (sample sd)
// and records the stats for scoring new data.
void standardize(PanelDataset& panel, const std::vector<std::string>& names);

// Applies previously stored stats to a covariate matrix column.
void apply_standardization(PanelDataset& panel, const std::vector<StandardizationStat>& stats);

struct LoadWarnings {
  std::vector<std::string> messages;
};

// Reads the origination/performance CSV pair. Performance rows are joined
// by loan id; duration and the event flag come from the last monthly row.
std::vector<LoanRecord> load_loans(const std::string& origination_path,
                                   const std::string& performance_path,
                                   LoadWarnings* warnings = nullptr);

void write_loans(const std::vector<LoanRecord>& loans, const std::string& origination_path,
                 const std::string& performance_path);

// Engineered covariate columns derived from the raw loan fields, in the
// fixed order used by the survival design.
extern const std::vector<std::string> kLoanCovariateNames;

}  // namespace stjm
