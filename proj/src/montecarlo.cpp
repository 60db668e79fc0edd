#include "mhcohort/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mhcohort/errors.hpp"
#include "mhcohort/io.hpp"

namespace mhc {

namespace {

enum Purpose : std::uint64_t { kSubjects = 1, kSampling = 2 };

double hazard_multiplier(const Scenario& sc, std::size_t k, std::size_t l) {
  double h = std::pow(sc.phi0, sc.levels.alpha(k));
  if (!sc.stratum_hazard_ratio.empty()) h *= sc.stratum_hazard_ratio[l];
  return h;
}

}  // namespace

void Scenario::validate() const {
  if (n < 2) throw UsageError("cohort size must be at least 2");
  if (reps < 1) throw UsageError("at least one replicate required");
  if (!(phi0 > 0.0)) throw UsageError("phi0 must be positive");
  if (!(tau > 0.0)) throw UsageError("tau must be positive");
  if (!(censor_max >= 0.0)) throw UsageError("censoring bound must be nonnegative");
  if (cell.size() != levels.size()) throw UsageError("one row of cell probabilities per exposure level");
  double total = 0.0;
  for (const auto& row : cell) {
    if (row.size() != n_strata() || row.empty()) throw UsageError("cell probability rows differ in length");
    for (double v : row) {
      if (!(v >= 0.0)) throw UsageError("cell probabilities must be nonnegative");
      total += v;
    }
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("cell probabilities must sum to 1");
  if (lambda0_values.size() != lambda0_breaks.size() + 1)
    throw UsageError("need one baseline hazard value per interval between breaks");
  for (std::size_t i = 0; i < lambda0_breaks.size(); ++i)
    if (!(lambda0_breaks[i] > (i ? lambda0_breaks[i - 1] : 0.0)))
      throw UsageError("hazard breaks must be positive and increasing");
  for (double v : lambda0_values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("baseline hazard must be finite and nonnegative");
  if (!stratum_hazard_ratio.empty()) {
    if (stratum_hazard_ratio.size() != n_strata()) throw UsageError("one hazard ratio per stratum required");
    if (design.kind != DesignKind::Matching)
      throw UsageError("stratum-specific baselines are only supported with the matching design");
  }
  design.validate();
}

double Scenario::cumulative_baseline(double t) const {
  double acc = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < lambda0_values.size(); ++i) {
    double end = i < lambda0_breaks.size() ? lambda0_breaks[i] : std::numeric_limits<double>::infinity();
    if (t <= end) return acc + lambda0_values[i] * (t - prev);
    acc += lambda0_values[i] * (end - prev);
    prev = end;
  }
  return acc;
}

double Scenario::baseline_hazard(double t) const {
  std::size_t i = static_cast<std::size_t>(std::upper_bound(lambda0_breaks.begin(), lambda0_breaks.end(), t) -
                                           lambda0_breaks.begin());
  return lambda0_values[i];
}

double Scenario::censor_survival(double t) const {
  return censor_max > 0.0 ? std::max(0.0, 1.0 - t / censor_max) : 1.0;
}

std::vector<double> Scenario::level_frequencies() const {
  std::vector<double> f(cell.size(), 0.0);
  for (std::size_t k = 0; k < cell.size(); ++k)
    for (double v : cell[k]) f[k] += v;
  return f;
}

Scenario srs_scenario(long n, double phi0, double f1, int m, double tau, long reps, std::uint64_t seed) {
  Scenario sc;
  sc.n = n;
  sc.phi0 = phi0;
  sc.cell = {{1.0 - f1}, {f1}};
  sc.tau = tau;
  sc.design = DesignSpec::srs(m);
  sc.reps = reps;
  sc.seed = seed;
  return sc;
}

namespace {

// Smallest t with H(t) = target for the cumulative hazard mult * Lambda0(t); +inf if never.
double invert_cumulative(const Scenario& sc, double mult, double target) {
  if (mult <= 0.0) return std::numeric_limits<double>::infinity();
  double acc = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < sc.lambda0_values.size(); ++i) {
    double end = i < sc.lambda0_breaks.size() ? sc.lambda0_breaks[i] : std::numeric_limits<double>::infinity();
    double rate = mult * sc.lambda0_values[i];
    double piece = rate * (end - prev);
    if (rate > 0.0 && acc + piece >= target) return prev + (target - acc) / rate;
    acc += piece;
    prev = end;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

SimulatedCohort simulate_cohort(const Scenario& sc, long rep) {
  sc.validate();
  const std::size_t K = sc.levels.size(), L = sc.n_strata();
  std::vector<double> cum;
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  double acc = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < L; ++l) {
      acc += sc.cell[k][l];
      cum.push_back(acc);
      cells.emplace_back(k, l);
    }
  SimulatedCohort out;
  out.records.reserve(static_cast<std::size_t>(sc.n) * 4);
  for (long i = 0; i < sc.n; ++i) {
    Stream rng = Stream::keyed(sc.seed, {static_cast<std::uint64_t>(rep), kSubjects, static_cast<std::uint64_t>(i)});
    double u = rng.uniform() * acc;
    std::size_t c = static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (c >= cells.size()) c = cells.size() - 1;
    auto [k, l] = cells[c];
    double e = -std::log(rng.uniform());
    double t_fail = invert_cumulative(sc, hazard_multiplier(sc, k, l), e);
    double t_cens = sc.tau;
    if (sc.censor_max > 0.0) t_cens = std::min(t_cens, rng.uniform() * sc.censor_max);
    std::string id = std::to_string(i + 1);
    out.records.push_back({id, 0.0, "enter", ""});
    out.records.push_back({id, 0.0, "cov", sc.levels.labels[k]});
    if (L > 1) out.records.push_back({id, 0.0, "stratum", std::to_string(l)});
    if (t_fail <= t_cens) out.records.push_back({id, t_fail, "fail", ""});
    else out.records.push_back({id, t_cens, "exit", ""});
  }
  out.cohort = build_cohort(out.records, sc.levels, sc.tau);
  // Strata absent from this draw would shift the label-ordered ids.
  if (L > 1 && out.cohort.strata.size() != L) {
    for (auto& subj : out.cohort.subjects)
      for (int& v : subj.stratum.values) v = std::stoi(out.cohort.strata[v]);
    out.cohort.strata.clear();
    for (std::size_t l = 0; l < L; ++l) out.cohort.strata.push_back(std::to_string(l));
  }
  return out;
}

ReplicateResult run_replication(const Scenario& sc, long rep) {
  ReplicateResult r;
  r.rep = rep;
  SimulatedCohort sim = simulate_cohort(sc, rep);
  r.failures = static_cast<long>(sim.cohort.failures.size());
  try {
    std::uint64_t sampling_seed = Stream::keyed(sc.seed, {static_cast<std::uint64_t>(rep), kSampling}).key();
    auto sampled = sample_cohort(sim.cohort, sc.design, sampling_seed);
    EstimateOptions opt = sc.estimator;
    opt.n_cohort = static_cast<double>(sc.n);
    r.estimate = sc.stratified_estimator ? estimate_stratified(sampled, sc.levels, opt)
                                         : estimate(sampled, sc.levels, opt);
    if (r.estimate.degenerate) {
      r.degenerate = true;
      r.reason = r.estimate.flags.empty() ? "degenerate" : r.estimate.flags.front();
      return r;
    }
    if (sc.baseline_time > 0.0) {
      BaselineReport rep_b = baseline_variance(sampled, sc.levels, r.estimate.phi_hat, r.estimate.sigma2,
                                               static_cast<double>(sc.n));
      r.lambda_hat = rep_b.lambda_hat(sc.baseline_time);
      r.sigma2_lambda = rep_b.sigma2_lambda(sc.baseline_time, sc.baseline_time);
    }
  } catch (const NumericalError& e) {
    r.degenerate = true;
    r.reason = e.what();
  }
  return r;
}

int default_threads() {
  if (const char* env = std::getenv("MHC_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<ReplicateResult> run_replications(const Scenario& sc, int threads) {
  sc.validate();
  if (threads <= 0) threads = default_threads();
  threads = static_cast<int>(std::min<long>(threads, sc.reps));
  std::vector<ReplicateResult> results(static_cast<std::size_t>(sc.reps));
  std::atomic<long> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      long i = next.fetch_add(1);
      if (i >= sc.reps || failed.load()) return;
      try {
        results[static_cast<std::size_t>(i)] = run_replication(sc, i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

MCSummary mc_summary(const std::vector<ReplicateResult>& results, const Scenario& sc) {
  MCSummary s;
  s.reps = static_cast<long>(results.size());
  std::vector<const ReplicateResult*> ok;
  double fsum = 0.0;
  s.min_failures = std::numeric_limits<long>::max();
  for (const auto& r : results) {
    fsum += r.failures;
    s.min_failures = std::min(s.min_failures, r.failures);
    s.max_failures = std::max(s.max_failures, r.failures);
    if (!r.degenerate) ok.push_back(&r);
  }
  if (results.empty()) s.min_failures = 0;
  s.used = static_cast<long>(ok.size());
  s.excluded = s.reps - s.used;
  s.mean_failures = results.empty() ? 0.0 : fsum / static_cast<double>(results.size());
  if (s.used < 2) throw NumericalError("fewer than two usable replicates");
  const double R = static_cast<double>(s.used), n = static_cast<double>(sc.n);
  auto mean_var = [&](auto get) {
    double m = 0.0;
    for (auto* r : ok) m += get(*r);
    m /= R;
    double v = 0.0;
    for (auto* r : ok) v += (get(*r) - m) * (get(*r) - m);
    return std::pair<double, double>{m, v / (R - 1.0)};
  };
  auto [mphi, vphi] = mean_var([](const ReplicateResult& r) { return r.estimate.phi_hat; });
  auto [mth, vth] = mean_var([](const ReplicateResult& r) { return r.estimate.theta_hat; });
  s.mean_phi_hat = mphi;
  s.se_mean_phi_hat = std::sqrt(vphi / R);
  s.empirical_var_scaled = n * vphi;
  s.mean_theta_hat = mth;
  s.empirical_var_theta_scaled = n * vth;
  double cover = 0.0, s2 = 0.0, s2t = 0.0;
  for (auto* r : ok) {
    s2 += r->estimate.sigma2;
    s2t += r->estimate.sigma2_theta;
    if (r->estimate.ci_low <= sc.phi0 && sc.phi0 <= r->estimate.ci_high) cover += 1.0;
  }
  s.mean_sigma2_hat = s2 / R;
  s.mean_sigma2_theta_hat = s2t / R;
  s.coverage95 = cover / R;
  if (sc.baseline_time > 0.0) {
    auto [ml, vl] = mean_var([](const ReplicateResult& r) { return r.lambda_hat; });
    s.baseline_time = sc.baseline_time;
    s.mean_lambda_hat = ml;
    s.se_mean_lambda_hat = std::sqrt(vl / R);
    s.empirical_var_lambda_scaled = n * vl;
    double sl = 0.0;
    for (auto* r : ok) sl += r->sigma2_lambda;
    s.mean_sigma2_lambda = sl / R;
    s.lambda0_true = sc.cumulative_baseline(sc.baseline_time);
  }
  return s;
}

PopulationModel limit_population(const Scenario& sc, int segments) {
  sc.validate();
  const std::size_t K = sc.levels.size(), L = sc.n_strata();
  std::vector<double> grid;
  for (int i = 0; i <= segments; ++i) grid.push_back(sc.tau * i / segments);
  for (double b : sc.lambda0_breaks)
    if (b < sc.tau) grid.push_back(b);
  if (sc.censor_max > 0.0 && sc.censor_max < sc.tau) grid.push_back(sc.censor_max);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  PopulationModel pop;
  pop.levels = sc.levels;
  for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
    double a = grid[g], b = grid[g + 1], t = 0.5 * (a + b);
    double L0 = sc.cumulative_baseline(t), cens = sc.censor_survival(t);
    std::vector<std::vector<double>> mass(L, std::vector<double>(K, 0.0));
    double p = 0.0;
    std::vector<double> q(L, 0.0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < L; ++l) {
        double v = sc.cell[k][l] * std::exp(-hazard_multiplier(sc, k, l) * L0) * cens;
        mass[l][k] = v;
        q[l] += v;
        p += v;
      }
    Segment s;
    s.t0 = a;
    s.t1 = b;
    s.p = p;
    s.lambda0 = sc.baseline_hazard(t);
    s.f.assign(K, 0.0);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t k = 0; k < K; ++k) s.f[k] += mass[l][k] / p;
    if (L > 1 || sc.design.kind == DesignKind::Matching || sc.design.kind == DesignKind::CounterMatching) {
      s.q.resize(L);
      s.f_strata.assign(L, std::vector<double>(K, 0.0));
      for (std::size_t l = 0; l < L; ++l) {
        s.q[l] = q[l] / p;
        for (std::size_t k = 0; k < K; ++k) s.f_strata[l][k] = q[l] > 0.0 ? mass[l][k] / q[l] : (k == 0 ? 1.0 : 0.0);
      }
      if (!sc.stratum_hazard_ratio.empty()) {
        s.lambda_strata.resize(L);
        for (std::size_t l = 0; l < L; ++l) s.lambda_strata[l] = s.lambda0 * sc.stratum_hazard_ratio[l];
      }
    }
    pop.segments.push_back(std::move(s));
  }
  pop.validate();
  return pop;
}

double expected_failure_fraction(const Scenario& sc, double tau) {
  const std::size_t K = sc.levels.size(), L = sc.n_strata();
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < L; ++l) {
      double w = sc.cell[k][l];
      if (w == 0.0) continue;
      double h = hazard_multiplier(sc, k, l);
      if (sc.censor_max == 0.0) {
        total += w * (1.0 - std::exp(-h * sc.cumulative_baseline(tau)));
        continue;
      }
      // Gauss-Legendre on each piece where the integrand is smooth
      std::vector<double> cuts{0.0};
      for (double b : sc.lambda0_breaks)
        if (b > 0.0 && b < tau) cuts.push_back(b);
      if (sc.censor_max < tau) cuts.push_back(sc.censor_max);
      cuts.push_back(tau);
      std::sort(cuts.begin(), cuts.end());
      auto g = [&](double t) {
        return h * sc.baseline_hazard(t) * std::exp(-h * sc.cumulative_baseline(t)) * sc.censor_survival(t);
      };
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        if (cuts[i + 1] > cuts[i])
          total += w * boost::math::quadrature::gauss<double, 30>::integrate(g, cuts[i], cuts[i + 1]);
    }
  return total;
}

double tau_for_failure_fraction(const Scenario& sc, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("failure fraction must lie in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (expected_failure_fraction(sc, hi) < fraction) {
    hi *= 2.0;
    if (hi > 1e12) throw NumericalError("failure fraction not reachable");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
    double mid = 0.5 * (lo + hi);
    if (expected_failure_fraction(sc, mid) < fraction) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

nlohmann::ordered_json scenario_json(const Scenario& sc) {
  nlohmann::ordered_json j;
  j["n"] = sc.n;
  j["phi0"] = sc.phi0;
  j["alphas"] = sc.levels.alphas;
  j["cell"] = sc.cell;
  j["lambda0_breaks"] = sc.lambda0_breaks;
  j["lambda0_values"] = sc.lambda0_values;
  j["stratum_hazard_ratio"] = sc.stratum_hazard_ratio;
  j["tau"] = sc.tau;
  j["censor_max"] = sc.censor_max;
  j["design"] = design_name(sc.design.kind);
  j["m"] = sc.design.kind == DesignKind::SRS ? nlohmann::ordered_json(sc.design.m)
                                                : nlohmann::ordered_json(sc.design.m_strata);
  j["clamp"] = sc.design.clamp;
  j["reps"] = sc.reps;
  j["seed"] = sc.seed;
  j["c"] = sc.estimator.c == CChoice::Equal ? "equal" : sc.estimator.c == CChoice::Optimal ? "optimal" : "custom";
  j["variance"] = method_name(sc.estimator.variance);
  j["stratified"] = sc.stratified_estimator;
  j["baseline_time"] = sc.baseline_time;
  return j;
}

}  // namespace

std::string scenario_to_json(const Scenario& sc) { return scenario_json(sc).dump(2) + "\n"; }

std::string summary_to_json(const MCSummary& s, const Scenario& sc) {
  nlohmann::ordered_json j;
  j["scenario"] = scenario_json(sc);
  j["reps"] = s.reps;
  j["used"] = s.used;
  j["excluded"] = s.excluded;
  j["mean_phi_hat"] = s.mean_phi_hat;
  j["se_mean_phi_hat"] = s.se_mean_phi_hat;
  j["empirical_var_scaled"] = s.empirical_var_scaled;
  j["mean_sigma2_hat"] = s.mean_sigma2_hat;
  j["mean_theta_hat"] = s.mean_theta_hat;
  j["empirical_var_theta_scaled"] = s.empirical_var_theta_scaled;
  j["mean_sigma2_theta_hat"] = s.mean_sigma2_theta_hat;
  j["coverage95"] = s.coverage95;
  j["mean_failures"] = s.mean_failures;
  j["min_failures"] = s.min_failures;
  j["max_failures"] = s.max_failures;
  if (s.baseline_time > 0.0) {
    nlohmann::ordered_json b;
    b["time"] = s.baseline_time;
    b["mean_lambda_hat"] = s.mean_lambda_hat;
    b["se_mean_lambda_hat"] = s.se_mean_lambda_hat;
    b["empirical_var_scaled"] = s.empirical_var_lambda_scaled;
    b["mean_sigma2_lambda"] = s.mean_sigma2_lambda;
    b["lambda0_true"] = s.lambda0_true;
    j["baseline"] = b;
  }
  return j.dump(2) + "\n";
}

}  // namespace mhc
