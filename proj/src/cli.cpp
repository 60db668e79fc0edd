#include "mhcohort/cli.hpp"

#include <algorithm>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mhcohort/asymptotics.hpp"
#include "mhcohort/baseline.hpp"
#include "mhcohort/cohort.hpp"
#include "mhcohort/errors.hpp"
#include "mhcohort/io.hpp"
#include "mhcohort/montecarlo.hpp"

namespace mhc {

namespace {

void emit(const RunConfig& cfg, std::ostream& out, const std::string& text) {
  if (cfg.output.empty()) out << text;
  else write_file(cfg.output, text);
}

std::string require_input(const RunConfig& cfg) {
  if (cfg.input.empty()) throw UsageError(fmt::format("{} needs --input", cfg.command));
  return read_file(cfg.input);
}

Cohort load_cohort(const RunConfig& cfg, const std::string& text) {
  return build_cohort(parse_event_csv(text), config_levels(cfg), cfg.tau);
}

// Sampled sets from a sampled CSV, or drawn from an event CSV under the configured design.
std::vector<SampledFailure> load_sampled(const RunConfig& cfg) {
  std::string text = require_input(cfg);
  CsvTable table = parse_csv(text);
  if (table.has_column("member_id")) return parse_sampled_csv(text);
  Cohort cohort = load_cohort(cfg, text);
  DesignSpec design = config_design(cfg);
  if (design.kind != DesignKind::Full && !cfg.has_seed())
    throw SchemaError("sampling an event file requires a seed");
  return sample_cohort(cohort, design, static_cast<std::uint64_t>(std::max<std::int64_t>(cfg.seed, 0)));
}

EstimateResult run_estimate(const RunConfig& cfg, const std::vector<SampledFailure>& sampled) {
  EstimateOptions opt = config_estimate_options(cfg);
  LevelSet levels = config_levels(cfg);
  return cfg.stratified ? estimate_stratified(sampled, levels, opt) : estimate(sampled, levels, opt);
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  Scenario sc = config_scenario(cfg);
  SimulatedCohort sim = simulate_cohort(sc, cfg.rep);
  emit(cfg, out, format_event_csv(sim.records));
  return 0;
}

int cmd_sample(const RunConfig& cfg, std::ostream& out) {
  Cohort cohort = load_cohort(cfg, require_input(cfg));
  auto sampled = sample_cohort(cohort, config_design(cfg), static_cast<std::uint64_t>(std::max<std::int64_t>(cfg.seed, 0)));
  emit(cfg, out, format_sampled_csv(sampled, cohort.strata));
  return 0;
}

int cmd_estimate(const RunConfig& cfg, std::ostream& out) {
  EstimateResult r = run_estimate(cfg, load_sampled(cfg));
  emit(cfg, out, estimate_to_json(r));
  return r.degenerate ? static_cast<int>(ErrorKind::Numerical) : 0;
}

int cmd_baseline(const RunConfig& cfg, std::ostream& out) {
  auto sampled = load_sampled(cfg);
  EstimateResult r = run_estimate(cfg, sampled);
  if (r.degenerate) throw NumericalError("rate ratio estimate is degenerate; baseline not computed");
  BaselineReport rep = baseline_variance(sampled, config_levels(cfg), r.phi_hat, r.sigma2, r.n);
  std::vector<double> grid = cfg.times;
  if (grid.empty()) {
    for (const auto& f : sampled) grid.push_back(f.time);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  }
  emit(cfg, out, format_baseline_csv(rep, grid));
  return 0;
}

std::string are_label(const RunConfig& cfg, const DesignSpec& d) {
  switch (d.kind) {
    case DesignKind::Full: return "full cohort";
    case DesignKind::SRS: return fmt::format("srs m={}", d.m);
    case DesignKind::Matching: return fmt::format("matching m=({})", fmt::join(d.m_strata, ","));
    case DesignKind::CounterMatching:
      return fmt::format("cm m=({}) delta={} gamma={}", fmt::join(d.m_strata, ","), cfg.delta, cfg.gamma);
  }
  return "";
}

int cmd_are(const RunConfig& cfg, std::ostream& out) {
  DesignSpec design = config_design(cfg);
  PopulationModel pop = config_population(cfg);
  auto rows = are_curve(design, pop, parse_grid(cfg.grid));
  emit(cfg, out, format_are_csv(rows));
  if (!cfg.svg.empty())
    write_file(cfg.svg, render_are_svg({{are_label(cfg, design), rows}}, "asymptotic relative efficiency"));
  return 0;
}

int cmd_mc(const RunConfig& cfg, std::ostream& out) {
  Scenario sc = config_scenario(cfg);
  auto results = run_replications(sc, cfg.threads);
  MCSummary s = mc_summary(results, sc);
  emit(cfg, out, summary_to_json(s, sc));
  return 0;
}

// Two strata, three levels, staggered entry and exit; every risk set has n(t) <= 8.
std::vector<EventRecord> check_fixture() {
  struct Row { const char* id; double enter, leave; bool fail; int level; int stratum; };
  const Row rows[] = {
      {"1", 0.0, 1.0, true, 1, 1},  {"2", 0.0, 3.0, true, 0, 0},  {"3", 0.0, 2.5, false, 2, 1},
      {"4", 0.0, 4.0, true, 2, 0},  {"5", 0.5, 2.0, true, 0, 1},  {"6", 0.0, 5.0, false, 1, 0},
      {"7", 0.2, 3.5, true, 1, 1},  {"8", 0.0, 4.5, false, 0, 0},
  };
  std::vector<EventRecord> rec;
  for (const auto& r : rows) {
    rec.push_back({r.id, r.enter, "enter", ""});
    rec.push_back({r.id, r.enter, "cov", std::to_string(r.level)});
    rec.push_back({r.id, r.enter, "stratum", std::to_string(r.stratum)});
    rec.push_back({r.id, r.leave, r.fail ? "fail" : "exit", ""});
  }
  return rec;
}

int cmd_check(const RunConfig& cfg, std::ostream& out) {
  Cohort cohort;
  if (cfg.input.empty()) {
    cohort = build_cohort(check_fixture(), LevelSet({0.0, 1.0, 2.0}, {}), 0.0);
  } else {
    cohort = load_cohort(cfg, require_input(cfg));
  }
  std::vector<DesignSpec> designs;
  if (cfg.input.empty()) {
    designs = {DesignSpec::full(), DesignSpec::srs(3), DesignSpec::matching({2, 2}),
               DesignSpec::counter_matching({1, 2})};
    for (auto& d : designs) d.clamp = true;
  } else {
    designs = {config_design(cfg)};
  }
  bool ok = true;
  for (const auto& d : designs) {
    for (std::size_t k = 0; k < cohort.failures.size(); ++k) {
      RiskSet rs = failure_risk_set(cohort, k);
      if (rs.n_t() > 12) {
        out << fmt::format("skip  {} t={} n(t)={} exceeds enumeration limit\n", design_name(d.kind), rs.time, rs.n_t());
        continue;
      }
      DesignCheck c = check_design(rs, d);
      out << fmt::format("{} {} t={} n(t)={}{}\n", c.ok() ? "ok   " : "FAIL ", design_name(d.kind), rs.time,
                         rs.n_t(), c.detail.empty() ? "" : " " + c.detail);
      ok = ok && c.ok();
    }
  }
  if (!ok) throw SchemaError("design verification failed");
  return 0;
}

}  // namespace

int run_config(const RunConfig& cfg, std::ostream& out) {
  validate_config(cfg);
  if (cfg.command == "simulate") return cmd_simulate(cfg, out);
  if (cfg.command == "sample") return cmd_sample(cfg, out);
  if (cfg.command == "estimate") return cmd_estimate(cfg, out);
  if (cfg.command == "baseline") return cmd_baseline(cfg, out);
  if (cfg.command == "are") return cmd_are(cfg, out);
  if (cfg.command == "mc") return cmd_mc(cfg, out);
  if (cfg.command == "check") return cmd_check(cfg, out);
  throw UsageError(fmt::format("unknown command '{}'", cfg.command));
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return run_config(parse_args(argc, argv), out);
  } catch (const Error& e) {
    err << "mhcohort: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "mhcohort: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Usage);
  }
}

}  // namespace mhc
