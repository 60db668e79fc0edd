#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mhcohort/asymptotics.hpp"
#include "mhcohort/baseline.hpp"
#include "mhcohort/cohort.hpp"
#include "mhcohort/designs.hpp"
#include "mhcohort/estimator.hpp"

namespace mhc {

struct Scenario {
  long n = 1000;
  double phi0 = 1.0;
  LevelSet levels = LevelSet::classical();
  // Entry distribution over (level k, stratum l): cell[k][l], summing to one.
  std::vector<std::vector<double>> cell{{0.8}, {0.2}};
  // Piecewise-constant baseline hazard: values[i] applies on [breaks[i-1], breaks[i]).
  std::vector<double> lambda0_breaks;
  std::vector<double> lambda0_values{1.0};
  // Optional per-stratum multiplier of the baseline (stratified matching model).
  std::vector<double> stratum_hazard_ratio;
  double tau = 1.0;
  double censor_max = 0.0;  // > 0: independent censoring time uniform on (0, censor_max)
  DesignSpec design;
  long reps = 100;
  std::uint64_t seed = 0;
  EstimateOptions estimator;
  bool stratified_estimator = false;
  double baseline_time = 0.0;  // > 0: report the baseline estimate at this time

  std::size_t n_strata() const { return cell.empty() ? 0 : cell.front().size(); }
  void validate() const;
  double cumulative_baseline(double t) const;
  double baseline_hazard(double t) const;
  double censor_survival(double t) const;
  // Marginal exposure distribution at entry.
  std::vector<double> level_frequencies() const;
};

Scenario srs_scenario(long n, double phi0, double f1, int m, double tau, long reps, std::uint64_t seed);

struct SimulatedCohort {
  std::vector<EventRecord> records;
  Cohort cohort;
};

SimulatedCohort simulate_cohort(const Scenario& sc, long rep);

struct ReplicateResult {
  long rep = 0;
  bool degenerate = false;
  std::string reason;
  long failures = 0;
  EstimateResult estimate;
  double lambda_hat = 0.0;     // baseline estimate at baseline_time
  double sigma2_lambda = 0.0;  // its estimated variance (scaled by n)
};

ReplicateResult run_replication(const Scenario& sc, long rep);

// Runs all replicates; threads <= 0 reads MHC_THREADS or uses the hardware count.
std::vector<ReplicateResult> run_replications(const Scenario& sc, int threads = 0);
int default_threads();

struct MCSummary {
  long reps = 0;
  long used = 0;
  long excluded = 0;
  double mean_phi_hat = 0.0;
  double se_mean_phi_hat = 0.0;
  double empirical_var_scaled = 0.0;  // n var(phi_hat)
  double mean_sigma2_hat = 0.0;
  double mean_theta_hat = 0.0;
  double empirical_var_theta_scaled = 0.0;
  double mean_sigma2_theta_hat = 0.0;
  double coverage95 = 0.0;
  double mean_failures = 0.0;
  long min_failures = 0;
  long max_failures = 0;
  // Baseline diagnostics, when requested.
  double baseline_time = 0.0;
  double mean_lambda_hat = 0.0;
  double se_mean_lambda_hat = 0.0;
  double empirical_var_lambda_scaled = 0.0;
  double mean_sigma2_lambda = 0.0;
  double lambda0_true = 0.0;
};

MCSummary mc_summary(const std::vector<ReplicateResult>& results, const Scenario& sc);

// Limiting population implied by the scenario: the at-risk probability and the
// level/stratum mix of survivors at each time, on a grid refined at hazard breaks.
PopulationModel limit_population(const Scenario& sc, int segments = 200);

// Expected fraction of subjects failing by tau.
double expected_failure_fraction(const Scenario& sc, double tau);
double tau_for_failure_fraction(const Scenario& sc, double fraction);

std::string scenario_to_json(const Scenario& sc);
std::string summary_to_json(const MCSummary& s, const Scenario& sc);

}  // namespace mhc
