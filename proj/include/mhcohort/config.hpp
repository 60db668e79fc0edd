#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mhcohort/designs.hpp"
#include "mhcohort/estimator.hpp"
#include "mhcohort/montecarlo.hpp"

namespace mhc {

struct RunConfig {
  std::string command;
  std::string input;
  std::string output;  // empty: stdout
  std::string svg;

  // levels and design
  std::vector<double> alphas{0.0, 1.0};
  std::string design = "full";
  int m = 2;
  std::vector<int> m_strata;
  bool clamp = false;

  // estimator
  std::string c = "equal";  // equal | optimal | custom
  std::vector<double> c_weights;
  std::string variance = "optional";
  double cohort_size = 0.0;  // <= 0: largest risk set
  bool stratified = false;
  std::vector<double> times;  // baseline evaluation grid; empty: failure times

  // population / scenario
  long n = 1000;
  double phi0 = 1.0;
  double f1 = 0.2;
  std::vector<double> freq;  // level frequencies; overrides f1
  std::vector<double> cell;  // row-major cell probabilities, levels x strata
  double delta = 1.0;        // surrogate sensitivity
  double gamma = 1.0;        // surrogate specificity
  std::vector<double> lambda0{1.0};
  std::vector<double> breaks;
  double tau = 0.0;  // <= 0: chosen from failure_fraction
  double failure_fraction = 0.15;
  double censor_max = 0.0;
  long reps = 100;
  long rep = 0;
  double baseline_time = 0.0;
  std::string grid = "-3:3:0.1";

  std::int64_t seed = -1;  // < 0: not set
  int threads = 0;

  bool has_seed() const { return seed >= 0; }
  bool stochastic() const;
  bool operator==(const RunConfig&) const = default;
};

// Parses argv (argv[1] is the command). A --config file supplies values that flags override.
RunConfig parse_args(int argc, const char* const* argv);
// Reads a config file alone.
RunConfig load_config(const std::string& path);
// Key-value text that load_config reads back to the same RunConfig.
std::string config_to_str(const RunConfig& cfg);
// Throws SchemaError for inconsistent values.
void validate_config(const RunConfig& cfg);

LevelSet config_levels(const RunConfig& cfg);
DesignSpec config_design(const RunConfig& cfg);
EstimateOptions config_estimate_options(const RunConfig& cfg);
// Time-constant population for the asymptotic calculators (p = 1, lambda0 = 1, tau = 1).
PopulationModel config_population(const RunConfig& cfg);
Scenario config_scenario(const RunConfig& cfg);
std::vector<double> parse_grid(const std::string& spec);

}  // namespace mhc
