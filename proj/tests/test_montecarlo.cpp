#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "mhcohort/errors.hpp"
#include "mhcohort/montecarlo.hpp"

using namespace mhc;

namespace {

long count_failures(const std::vector<EventRecord>& rec, int level = -1) {
  std::map<std::string, std::string> cov;
  long n = 0;
  for (const auto& r : rec) {
    if (r.event == "cov") cov[r.subject_id] = r.value;
    if (r.event == "fail" && (level < 0 || cov[r.subject_id] == std::to_string(level))) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("failure fraction under a constant hazard") {
  Scenario sc = srs_scenario(10000, 1.0, 0.2, 2, 0.1, 1, 3);
  SimulatedCohort sim = simulate_cohort(sc, 0);
  double frac = static_cast<double>(count_failures(sim.records)) / sc.n;
  double expect = 1.0 - std::exp(-0.1);
  CHECK(expect == doctest::Approx(0.0952).epsilon(1e-3));
  CHECK(expected_failure_fraction(sc, 0.1) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(std::abs(frac - expect) < 4.0 * std::sqrt(expect * (1 - expect) / sc.n));
}

TEST_CASE("zero hazard gives no failures") {
  Scenario sc = srs_scenario(500, 1.0, 0.2, 2, 1.0, 1, 3);
  sc.lambda0_values = {0.0};
  SimulatedCohort sim = simulate_cohort(sc, 0);
  CHECK(count_failures(sim.records) == 0);
  CHECK(sim.cohort.failures.empty());
}

TEST_CASE("exposed subjects fail at phi0 times the rate") {
  Scenario sc = srs_scenario(40000, 2.0, 0.5, 2, 0.02, 1, 5);
  SimulatedCohort sim = simulate_cohort(sc, 0);
  double r = static_cast<double>(count_failures(sim.records, 1)) / count_failures(sim.records, 0);
  CHECK(r == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("piecewise hazard and censoring") {
  Scenario sc = srs_scenario(20000, 1.0, 0.2, 2, 2.0, 1, 8);
  sc.lambda0_breaks = {1.0};
  sc.lambda0_values = {0.2, 0.6};
  sc.censor_max = 4.0;
  CHECK(sc.cumulative_baseline(1.5) == doctest::Approx(0.2 + 0.3));
  CHECK(sc.baseline_hazard(0.5) == 0.2);
  CHECK(sc.baseline_hazard(1.5) == 0.6);
  CHECK(sc.censor_survival(1.0) == doctest::Approx(0.75));
  SimulatedCohort sim = simulate_cohort(sc, 0);
  double frac = static_cast<double>(count_failures(sim.records)) / sc.n;
  // int_0^2 exp(-L(t)) (1 - t/4) lambda(t) dt by the midpoint rule
  double oracle = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    double t = (i + 0.5) * 2.0 / N;
    double L = t < 1.0 ? 0.2 * t : 0.2 + 0.6 * (t - 1.0);
    oracle += std::exp(-L) * (1.0 - t / 4.0) * (t < 1.0 ? 0.2 : 0.6) * 2.0 / N;
  }
  CHECK(expected_failure_fraction(sc, 2.0) == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(std::abs(frac - oracle) < 4.0 * std::sqrt(oracle * (1 - oracle) / sc.n));
  CHECK(tau_for_failure_fraction(sc, oracle) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("replicates are reproducible and independent of thread count") {
  Scenario sc = srs_scenario(300, 2.0, 0.2, 3, 1.0, 12, 41);
  auto a = run_replications(sc, 1), b = run_replications(sc, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].rep == static_cast<long>(r));
    CHECK(a[r].failures == b[r].failures);
    CHECK(a[r].estimate.phi_hat == b[r].estimate.phi_hat);
    CHECK(a[r].estimate.sigma2 == b[r].estimate.sigma2);
  }
  CHECK(summary_to_json(mc_summary(a, sc), sc) == summary_to_json(mc_summary(b, sc), sc));

  Scenario other = sc;
  other.seed = 42;
  CHECK(run_replication(other, 0).estimate.phi_hat != a[0].estimate.phi_hat);
}

TEST_CASE("no exposed subjects: every replicate is degenerate") {
  Scenario sc = srs_scenario(200, 1.0, 0.0, 2, 1.0, 4, 1);
  auto res = run_replications(sc, 1);
  for (const auto& r : res) {
    CHECK(r.degenerate);
    CHECK(!r.reason.empty());
  }
  CHECK_THROWS_AS(mc_summary(res, sc), NumericalError);
}

TEST_CASE("summary arithmetic") {
  Scenario sc;
  sc.n = 100;
  sc.phi0 = 2.0;
  std::vector<ReplicateResult> same(5);
  for (auto& r : same) {
    r.failures = 10;
    r.estimate.phi_hat = 2.5;
    r.estimate.sigma2 = 3.0;
    r.estimate.ci_low = 1.0;
    r.estimate.ci_high = 3.0;
  }
  MCSummary s = mc_summary(same, sc);
  CHECK(s.mean_phi_hat == 2.5);
  CHECK(s.empirical_var_scaled == 0.0);
  CHECK(s.coverage95 == 1.0);
  CHECK(s.mean_sigma2_hat == 3.0);

  std::vector<ReplicateResult> mixed(4);
  double phis[] = {1.0, 2.0, 3.0, 6.0};
  for (int i = 0; i < 4; ++i) {
    mixed[i].failures = i;
    mixed[i].estimate.phi_hat = phis[i];
    mixed[i].estimate.ci_low = phis[i] - 0.5;
    mixed[i].estimate.ci_high = phis[i] + 0.5;
  }
  mixed.push_back(ReplicateResult{});
  mixed.back().degenerate = true;
  s = mc_summary(mixed, sc);
  CHECK(s.used == 4);
  CHECK(s.excluded == 1);
  CHECK(s.mean_phi_hat == 3.0);
  // sample variance of {1,2,3,6} is 14/3
  CHECK(s.empirical_var_scaled == doctest::Approx(100.0 * 14.0 / 3.0));
  CHECK(s.coverage95 == 0.25);
  CHECK(s.min_failures == 0);
  CHECK(s.max_failures == 3);
}

TEST_CASE("time rescaling leaves estimates unchanged") {
  Scenario a = srs_scenario(400, 1.5, 0.3, 3, 1.0, 3, 17);
  a.censor_max = 3.0;
  Scenario b = a;
  b.lambda0_values = {2.0};
  b.tau = 0.5;
  b.censor_max = 1.5;
  for (long r = 0; r < 3; ++r) {
    ReplicateResult x = run_replication(a, r), y = run_replication(b, r);
    CHECK(x.failures == y.failures);
    CHECK(x.estimate.phi_hat == doctest::Approx(y.estimate.phi_hat).epsilon(1e-9));
  }
}

TEST_CASE("estimating function is centred at the true value") {
  // G(phi0) = phi0 R01 - R10 over the sampled sets; its replicate mean should vanish.
  Scenario sc = srs_scenario(500, 2.0, 0.3, 3, 0.5, 300, 23);
  double sum = 0.0, sumsq = 0.0;
  for (long r = 0; r < sc.reps; ++r) {
    SimulatedCohort sim = simulate_cohort(sc, r);
    auto sampled = sample_cohort(sim.cohort, sc.design, 5000 + r);
    double g = 0.0;
    for (const auto& f : sampled) {
      double s[2] = {0.0, 0.0};
      for (const auto& m : f.members) s[m.level] += m.weight / f.n_t;
      g += f.case_level == 0 ? sc.phi0 * s[1] : -s[0];
    }
    sum += g;
    sumsq += g * g;
  }
  double R = static_cast<double>(sc.reps), mean = sum / R, sd = std::sqrt((sumsq - R * mean * mean) / (R - 1));
  CHECK(std::abs(mean) < 4.0 * sd / std::sqrt(R));
}

TEST_CASE("limit population") {
  Scenario sc = srs_scenario(1000, 1.0, 0.2, 2, 1.0, 1, 0);
  PopulationModel pop = limit_population(sc, 50);
  REQUIRE(pop.segments.size() == 50);
  CHECK(pop.segments.front().p == doctest::Approx(std::exp(-0.01)).epsilon(1e-4));
  CHECK(pop.segments.back().p == doctest::Approx(std::exp(-0.99)).epsilon(1e-4));
  CHECK(pop.segments.back().f[1] == doctest::Approx(0.2).epsilon(1e-9));

  sc.phi0 = 3.0;
  pop = limit_population(sc, 50);
  double t = 0.99, s0 = 0.8 * std::exp(-t), s1 = 0.2 * std::exp(-3.0 * t);
  CHECK(pop.segments.back().f[1] == doctest::Approx(s1 / (s0 + s1)).epsilon(1e-4));
  CHECK(pop.segments.back().p == doctest::Approx(s0 + s1).epsilon(1e-4));
}

TEST_CASE("scenario validation and json") {
  Scenario sc = srs_scenario(100, 1.0, 0.2, 2, 1.0, 1, 0);
  sc.cell = {{0.5}, {0.2}};
  CHECK_THROWS_AS(sc.validate(), UsageError);
  sc = srs_scenario(100, 1.0, 0.2, 2, 1.0, 1, 0);
  sc.tau = -1.0;
  CHECK_THROWS_AS(sc.validate(), UsageError);
  sc = srs_scenario(100, 1.0, 0.2, 2, 1.0, 1, 9);
  std::string js = scenario_to_json(sc);
  CHECK(js.find("\"seed\"") != std::string::npos);
}
