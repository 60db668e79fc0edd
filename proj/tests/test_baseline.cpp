#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "mhcohort/baseline.hpp"
#include "mhcohort/designs.hpp"
#include "mhcohort/io.hpp"

using namespace mhc;

namespace {

// One failure at t=1 in a full cohort of four, two exposed.
std::vector<SampledFailure> one_failure() {
  Cohort c = fixtures::single_risk_set({{1, 0}, {1, 0}, {0, 0}, {0, 0}});
  return sample_cohort(c, DesignSpec::full(), 0);
}

}  // namespace

TEST_CASE("single failure jumps") {
  auto s = one_failure();
  StepFunction L = baseline_cumhaz(s, LevelSet::classical(), 1.0);
  CHECK(L(1.0) == doctest::Approx(0.25));
  CHECK(L(0.99) == 0.0);

  BaselineReport r = baseline_variance(s, LevelSet::classical(), 1.0, 0.0, 4.0);
  CHECK(r.omega2_hat(1.0) == doctest::Approx(4.0 / 16.0));
  CHECK(r.B_hat(1.0) == doctest::Approx(2.0 / 16.0));
}

TEST_CASE("no failures") {
  StepFunction L = baseline_cumhaz({}, LevelSet::classical(), 1.0);
  CHECK(L(0.0) == 0.0);
  CHECK(L(100.0) == 0.0);
}

TEST_CASE("full cohort at phi=1 is the Nelson-Aalen sum") {
  Cohort c = build_cohort(fixtures::fixture_a(), LevelSet::classical());
  auto s = sample_cohort(c, DesignSpec::full(), 0);
  StepFunction L = baseline_cumhaz(s, c.levels, 1.0);
  CHECK(L(1.0) == 1.0 / 4.0);
  CHECK(L(2.0) == 1.0 / 4.0 + 1.0 / 2.0);
  CHECK(L(3.0) == L(2.0));
}

TEST_CASE("jumps with an exposed member decrease in phi") {
  Cohort c = build_cohort(fixtures::fixture_a(), LevelSet::classical());
  auto s = sample_cohort(c, DesignSpec::full(), 0);
  double prev1 = 1e9, prev2 = 1e9;
  for (double phi : {0.5, 1.0, 2.0, 4.0}) {
    StepFunction L = baseline_cumhaz(s, c.levels, phi);
    double j1 = L(1.0), j2 = L(2.0) - L(1.0);
    CHECK(j1 < prev1);
    CHECK(j2 < prev2);
    prev1 = j1;
    prev2 = j2;
  }
}

TEST_CASE("variance function properties") {
  Cohort c = build_cohort(fixtures::fixture_a(), LevelSet::classical());
  auto s = sample_cohort(c, DesignSpec::full(), 0);
  BaselineReport r = baseline_variance(s, c.levels, 1.3, 8.0, 4.0);
  for (double a : {0.5, 1.0, 1.5, 2.0, 3.0})
    for (double b : {0.5, 1.0, 1.5, 2.0, 3.0}) CHECK(r.sigma2_lambda(a, b) == doctest::Approx(r.sigma2_lambda(b, a)));
  for (double t : {0.5, 1.0, 2.0, 3.0}) CHECK(r.sigma2_lambda(t, t) >= r.omega2_hat(t));
  CHECK(r.omega2_hat(2.0) >= r.omega2_hat(1.0));
  CHECK(r.lambda_hat(2.0) >= r.lambda_hat(1.0));
}

TEST_CASE("no exposed members: correction term vanishes") {
  Cohort c = fixtures::single_risk_set({{0, 0}, {0, 0}, {0, 0}});
  auto s = sample_cohort(c, DesignSpec::full(), 0);
  BaselineReport r = baseline_variance(s, LevelSet::classical(), 2.0, 5.0, 3.0);
  CHECK(r.B_hat(2.0) == 0.0);
  CHECK(r.sigma2_lambda(1.0, 2.0) == doctest::Approx(r.omega2_hat(1.0)));
}

TEST_CASE("csv output") {
  Cohort c = build_cohort(fixtures::fixture_a(), LevelSet::classical());
  auto s = sample_cohort(c, DesignSpec::full(), 0);
  BaselineReport r = baseline_variance(s, c.levels, 1.0, 8.0, 4.0);
  CsvTable t = parse_csv(format_baseline_csv(r, {1.0, 2.0}));
  CHECK(t.header == std::vector<std::string>{"t", "lambda_hat", "omega2_hat", "B_hat", "se_lambda"});
  REQUIRE(t.rows.size() == 2);
  CHECK(parse_double(t.rows[1][1], "") == doctest::Approx(0.75));
}
