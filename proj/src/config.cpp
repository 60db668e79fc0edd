#include "mhcohort/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mhcohort/errors.hpp"
#include "mhcohort/io.hpp"

namespace mhc {

namespace {

const std::vector<std::string> kCommands{"simulate", "sample", "estimate", "baseline", "are", "mc", "check"};

void bind(CLI::App& app, RunConfig& cfg) {
  app.option_defaults()->always_capture_default();
  app.add_option("command,--command", cfg.command, "simulate | sample | estimate | baseline | are | mc | check");
  app.add_option("--input", cfg.input, "input CSV (event records or sampled sets)");
  app.add_option("--output", cfg.output, "output file; stdout when empty");
  app.add_option("--svg", cfg.svg, "are: also render the table as SVG");

  app.add_option("--alphas", cfg.alphas, "exposure scores, first must be 0")->delimiter(',');
  app.add_option("--design", cfg.design, "full | srs | matching | cm");
  app.add_option("--m", cfg.m, "srs: sampled set size including the case");
  app.add_option("--m-strata", cfg.m_strata, "matching / cm: per-stratum sizes")->delimiter(',');
  app.add_flag("--clamp", cfg.clamp, "take whole strata that are too small");

  app.add_option("--c", cfg.c, "equal | optimal | custom");
  app.add_option("--c-weights", cfg.c_weights, "custom weights, one per level pair")->delimiter(',');
  app.add_option("--variance", cfg.variance, "optional | model");
  app.add_option("--cohort-size", cfg.cohort_size, "cohort size n; default the largest risk set");
  app.add_flag("--stratified", cfg.stratified, "sum variance contributions within strata");
  app.add_option("--times", cfg.times, "baseline: evaluation times")->delimiter(',');

  app.add_option("--n", cfg.n, "cohort size to simulate");
  app.add_option("--phi0", cfg.phi0, "true rate ratio");
  app.add_option("--f1", cfg.f1, "exposed fraction (two levels)");
  app.add_option("--freq", cfg.freq, "level frequencies")->delimiter(',');
  app.add_option("--cell", cfg.cell, "level x stratum probabilities, row-major")->delimiter(',');
  app.add_option("--delta", cfg.delta, "surrogate sensitivity");
  app.add_option("--gamma", cfg.gamma, "surrogate specificity");
  app.add_option("--lambda0", cfg.lambda0, "baseline hazard per interval")->delimiter(',');
  app.add_option("--breaks", cfg.breaks, "hazard change points")->delimiter(',');
  app.add_option("--tau", cfg.tau, "follow-up horizon; 0 picks it from --failure-fraction");
  app.add_option("--failure-fraction", cfg.failure_fraction, "expected failure fraction used to set tau");
  app.add_option("--censor-max", cfg.censor_max, "uniform censoring on (0, censor-max)");
  app.add_option("--reps", cfg.reps, "Monte Carlo replicates");
  app.add_option("--rep", cfg.rep, "simulate: replicate index");
  app.add_option("--baseline-time", cfg.baseline_time, "mc: time at which to assess the baseline estimate");
  app.add_option("--grid", cfg.grid, "are: log phi grid a:b:step or a list");

  app.add_option("--seed", cfg.seed, "random seed");
  app.add_option("--threads", cfg.threads, "mc threads; default MHC_THREADS or all cores");
}

// CLI11 reports a missing config file as a parse error; keep I/O failures distinct.
[[noreturn]] void rethrow_cli(const CLI::Error& e) {
  if (dynamic_cast<const CLI::FileError*>(&e)) throw IoError(e.what());
  if (dynamic_cast<const CLI::ConfigError*>(&e)) throw SchemaError(std::string("config: ") + e.what());
  throw UsageError(e.what());
}

std::vector<double> level_freq(const RunConfig& cfg) {
  if (!cfg.freq.empty()) return cfg.freq;
  return {1.0 - cfg.f1, cfg.f1};
}

}  // namespace

bool RunConfig::stochastic() const {
  if (command == "simulate" || command == "mc") return true;
  if (command == "sample") return design != "full";
  if (command == "estimate" || command == "baseline") return false;  // decided once the input is read
  return false;
}

RunConfig parse_args(int argc, const char* const* argv) {
  RunConfig cfg;
  CLI::App app{"Mantel-Haenszel estimation under cohort sampling designs", "mhcohort"};
  bind(app, cfg);
  app.set_config("--config", "", "key = value file; flags override");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    throw UsageError(app.help());
  } catch (const CLI::Error& e) {
    rethrow_cli(e);
  }
  if (cfg.command.empty()) throw UsageError("missing command; one of simulate, sample, estimate, baseline, are, mc, check");
  if (std::find(kCommands.begin(), kCommands.end(), cfg.command) == kCommands.end())
    throw UsageError(fmt::format("unknown command '{}'", cfg.command));
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError(fmt::format("cannot open {}", path));
  RunConfig cfg;
  CLI::App app;
  bind(app, cfg);
  app.set_config("--config", path, "", true);
  try {
    app.parse(std::vector<std::string>{});
  } catch (const CLI::Error& e) {
    if (dynamic_cast<const CLI::FileError*>(&e)) throw IoError(e.what());
    throw SchemaError(std::string("config: ") + e.what());
  }
  if (!cfg.command.empty() &&
      std::find(kCommands.begin(), kCommands.end(), cfg.command) == kCommands.end())
    throw SchemaError(fmt::format("unknown command '{}'", cfg.command));
  validate_config(cfg);
  return cfg;
}

std::string config_to_str(const RunConfig& cfg) {
  RunConfig copy = cfg;
  CLI::App app;
  bind(app, copy);
  // CLI11 writes empty vectors as {}, which it cannot read back; every such field defaults to empty.
  std::istringstream in(app.config_to_str(true, false));
  std::string line, text;
  while (std::getline(in, line))
    if (!line.ends_with("=\"{}\"")) text += line + "\n";
  return text;
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw SchemaError(msg); };
  if (cfg.stochastic() && !cfg.has_seed()) fail(fmt::format("command '{}' requires a seed", cfg.command));
  {
    std::vector<std::string> paths;
    for (const auto* p : {&cfg.input, &cfg.output, &cfg.svg})
      if (!p->empty()) paths.push_back(*p);
    std::sort(paths.begin(), paths.end());
    if (std::adjacent_find(paths.begin(), paths.end()) != paths.end()) fail("input and output paths must differ");
  }
  try {
    config_levels(cfg);
    config_design(cfg).validate();
    parse_method(cfg.variance);
  } catch (const Error& e) {
    fail(e.what());
  }
  if (cfg.c != "equal" && cfg.c != "optimal" && cfg.c != "custom") fail(fmt::format("unknown c choice '{}'", cfg.c));
  if (cfg.c == "custom") {
    std::size_t K = cfg.alphas.size();
    if (cfg.c_weights.size() != K * (K - 1) / 2) fail("custom c needs one weight per level pair");
  }
  if (cfg.n < 2) fail("n must be at least 2");
  if (cfg.reps < 1) fail("reps must be positive");
  if (cfg.rep < 0) fail("rep must be nonnegative");
  if (!(cfg.phi0 > 0.0)) fail("phi0 must be positive");
  if (!(cfg.f1 >= 0.0 && cfg.f1 <= 1.0)) fail("f1 must lie in [0,1]");
  if (!(cfg.delta >= 0.0 && cfg.delta <= 1.0) || !(cfg.gamma >= 0.0 && cfg.gamma <= 1.0))
    fail("sensitivity and specificity must lie in [0,1]");
  if (!cfg.freq.empty() && cfg.freq.size() != cfg.alphas.size()) fail("one frequency per level required");
  bool needs_population = cfg.command == "simulate" || cfg.command == "mc" || cfg.command == "are";
  if (needs_population && cfg.freq.empty() && cfg.alphas.size() != 2 && cfg.cell.empty())
    fail("--freq or --cell required with more than two levels");
  if (!cfg.cell.empty() && cfg.cell.size() % cfg.alphas.size() != 0) fail("cell must have levels x strata entries");
  if (!(cfg.failure_fraction > 0.0 && cfg.failure_fraction < 1.0)) fail("failure fraction must lie in (0,1)");
  if (cfg.tau < 0.0 || cfg.censor_max < 0.0 || cfg.baseline_time < 0.0) fail("times must be nonnegative");
  if (cfg.command == "are") {
    try {
      parse_grid(cfg.grid);
    } catch (const Error& e) {
      fail(e.what());
    }
  }
}

LevelSet config_levels(const RunConfig& cfg) {
  return LevelSet(cfg.alphas, {});
}

DesignSpec config_design(const RunConfig& cfg) {
  DesignSpec d;
  switch (parse_design(cfg.design)) {
    case DesignKind::Full: d = DesignSpec::full(); break;
    case DesignKind::SRS: d = DesignSpec::srs(cfg.m); break;
    case DesignKind::Matching: d = DesignSpec::matching(cfg.m_strata.empty() ? std::vector<int>{cfg.m, cfg.m} : cfg.m_strata); break;
    case DesignKind::CounterMatching:
      d = DesignSpec::counter_matching(cfg.m_strata.empty() ? std::vector<int>{1, 1} : cfg.m_strata);
      break;
  }
  d.clamp = cfg.clamp;
  return d;
}

EstimateOptions config_estimate_options(const RunConfig& cfg) {
  EstimateOptions o;
  o.c = cfg.c == "optimal" ? CChoice::Optimal : cfg.c == "custom" ? CChoice::Custom : CChoice::Equal;
  o.custom_c = cfg.c_weights;
  o.variance = parse_method(cfg.variance);
  o.n_cohort = cfg.cohort_size;
  return o;
}

namespace {

// cell[k][l] from the row-major list, or from the surrogate model for stratified designs.
std::vector<std::vector<double>> config_cells(const RunConfig& cfg) {
  const std::size_t K = cfg.alphas.size();
  std::vector<std::vector<double>> cell;
  if (!cfg.cell.empty()) {
    std::size_t L = cfg.cell.size() / K;
    cell.assign(K, std::vector<double>(L));
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < L; ++l) cell[k][l] = cfg.cell[k * L + l];
    return cell;
  }
  DesignKind kind = parse_design(cfg.design);
  std::vector<double> f = level_freq(cfg);
  if (kind == DesignKind::Matching || kind == DesignKind::CounterMatching) {
    if (K != 2) throw SchemaError("stratified designs with more than two levels need --cell");
    return {{cfg.gamma * f[0], (1.0 - cfg.gamma) * f[0]}, {(1.0 - cfg.delta) * f[1], cfg.delta * f[1]}};
  }
  for (double v : f) cell.push_back({v});
  return cell;
}

}  // namespace

PopulationModel config_population(const RunConfig& cfg) {
  LevelSet levels = config_levels(cfg);
  auto cell = config_cells(cfg);
  const std::size_t K = levels.size(), L = cell.front().size();
  DesignKind kind = parse_design(cfg.design);
  if (L == 1 && kind != DesignKind::Matching && kind != DesignKind::CounterMatching) {
    std::vector<double> f(K);
    for (std::size_t k = 0; k < K; ++k) f[k] = cell[k][0];
    return PopulationModel::constant(levels, f, 1.0, 1.0, 1.0);
  }
  std::vector<double> q(L, 0.0);
  std::vector<std::vector<double>> fs(L, std::vector<double>(K));
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < K; ++k) q[l] += cell[k][l];
    if (!(q[l] > 0.0)) throw SchemaError(fmt::format("stratum {} has zero probability", l));
    for (std::size_t k = 0; k < K; ++k) fs[l][k] = cell[k][l] / q[l];
  }
  return PopulationModel::stratified(levels, q, fs, 1.0, 1.0, 1.0);
}

Scenario config_scenario(const RunConfig& cfg) {
  Scenario sc;
  sc.n = cfg.n;
  sc.phi0 = cfg.phi0;
  sc.levels = config_levels(cfg);
  sc.cell = config_cells(cfg);
  sc.lambda0_breaks = cfg.breaks;
  sc.lambda0_values = cfg.lambda0;
  sc.censor_max = cfg.censor_max;
  sc.design = config_design(cfg);
  sc.reps = cfg.reps;
  sc.seed = static_cast<std::uint64_t>(std::max<std::int64_t>(cfg.seed, 0));
  sc.estimator = config_estimate_options(cfg);
  sc.estimator.n_cohort = 0.0;
  sc.stratified_estimator = cfg.stratified;
  sc.baseline_time = cfg.baseline_time;
  sc.tau = cfg.tau > 0.0 ? cfg.tau : 1.0;
  try {
    sc.validate();
  } catch (const UsageError& e) {
    throw SchemaError(e.what());
  }
  if (!(cfg.tau > 0.0)) sc.tau = tau_for_failure_fraction(sc, cfg.failure_fraction);
  return sc;
}

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
      std::size_t pos = spec.find(':', start);
      parts.push_back(spec.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (parts.size() != 3) throw UsageError(fmt::format("grid '{}' is not a:b:step", spec));
    double a = parse_double(parts[0], "grid start"), b = parse_double(parts[1], "grid end"),
           step = parse_double(parts[2], "grid step");
    if (!(step > 0.0) || b < a) throw UsageError(fmt::format("grid '{}' is empty", spec));
    long count = std::lround(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= count; ++i) out.push_back(a + static_cast<double>(i) * step);
  } else {
    std::size_t start = 0;
    for (;;) {
      std::size_t pos = spec.find(',', start);
      out.push_back(parse_double(spec.substr(start, pos - start), "grid value"));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  }
  return out;
}

}  // namespace mhc
