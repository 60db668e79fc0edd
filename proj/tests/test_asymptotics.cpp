#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mhcohort/asymptotics.hpp"
#include "mhcohort/errors.hpp"
#include "mhcohort/montecarlo.hpp"

using namespace mhc;

namespace {

std::mt19937_64 gen(7);

double unif(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }

// A random stratified two-level population, strata frequencies q and level mixes f_strata.
PopulationModel random_stratified(std::size_t L, std::size_t K = 2) {
  std::vector<double> q(L);
  double tot = 0.0;
  for (auto& v : q) tot += (v = unif(0.2, 1.0));
  for (auto& v : q) v /= tot;
  std::vector<std::vector<double>> fs(L, std::vector<double>(K));
  for (auto& row : fs) {
    double t = 0.0;
    for (auto& v : row) t += (v = unif(0.05, 1.0));
    for (auto& v : row) v /= t;
  }
  std::vector<double> alphas;
  for (std::size_t k = 0; k < K; ++k) alphas.push_back(static_cast<double>(k));
  return PopulationModel::stratified(LevelSet(alphas), q, fs, unif(0.3, 1.0), unif(0.5, 2.0), 1.0);
}

PopulationModel constant_pop(double f1) { return PopulationModel::constant(LevelSet::classical(), {1 - f1, f1}, 1.0, 1.0, 1.0); }

// Pmf of the multivariate hypergeometric by direct counting of subsets, as doubles.
double hyper_by_subsets(const std::vector<long>& nv, long m, const std::vector<int>& v) {
  std::vector<int> type;
  for (std::size_t k = 0; k < nv.size(); ++k)
    for (long i = 0; i < nv[k]; ++i) type.push_back(static_cast<int>(k));
  const int n = static_cast<int>(type.size());
  double sum = 0.0, count = 0.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != m) continue;
    std::vector<double> x(nv.size(), 0.0);
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) x[type[i]] += 1.0;
    double prod = 1.0;
    for (int k : v) prod *= x[k];
    sum += prod;
    count += 1.0;
  }
  return sum / count;
}

}  // namespace

TEST_CASE("hypergeometric moments") {
  CHECK(hypergeom_moment({3, 3}, 2, {0, 1}) == Rational(3, 5));
  CHECK(hypergeom_moment({4, 7}, 3, {1}) == Rational(3 * 7, 11));
  double big = static_cast<double>(hypergeom_moment({300, 300}, 2, {0, 1}));
  CHECK(big == doctest::Approx(0.5).epsilon(0.01));
  CHECK_THROWS(hypergeom_moment({2, 2}, 5, {0}));
}

TEST_CASE("hypergeometric formula matches subset counting") {
  const std::vector<std::vector<long>> ns{{3, 3}, {2, 5, 3}, {4, 1, 2, 2}, {6, 6}};
  const std::vector<std::vector<int>> vs{{0}, {1}, {0, 1}, {1, 1}, {0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {0, 0, 0}};
  for (const auto& nv : ns)
    for (long m = 1; m <= 4; ++m)
      for (const auto& v : vs) {
        double oracle = hyper_by_subsets(nv, m, v);
        CHECK(static_cast<double>(hypergeom_moment(nv, m, v)) == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(hypergeom_moment_formula(nv, m, v) == hypergeom_moment(nv, m, v));
      }
}

TEST_CASE("multinomial expectations") {
  std::vector<double> f{0.8, 0.2};
  CHECK(multinomial_expect(f, 5, [](const std::vector<int>&) { return 1.0; }) == doctest::Approx(1.0));
  CHECK(multinomial_expect(f, 5, [](const std::vector<int>& x) { return double(x[1]); }) == doctest::Approx(1.0));
  CHECK(multinomial_expect(f, 2, [](const std::vector<int>& x) { return x[1] / double(x[0] + x[1]); }) ==
        doctest::Approx(0.2));
  CHECK_THROWS(multinomial_expect(f, 31, [](const std::vector<int>&) { return 1.0; }));
}

TEST_CASE("multinomial closed forms match enumeration") {
  const std::vector<std::vector<double>> fs{{0.8, 0.2}, {0.5, 0.3, 0.2}, {0.1, 0.2, 0.3, 0.4}};
  for (const auto& f : fs)
    for (int m = 1; m <= 5; ++m)
      for (std::size_t a = 0; a < f.size(); ++a)
        for (std::size_t b = a; b < f.size(); ++b)
          for (std::size_t c = b; c < f.size(); ++c) {
            std::vector<int> v3{int(a), int(b), int(c)}, v2{int(a), int(b)};
            double e3 = multinomial_expect(f, m, [&](const std::vector<int>& x) { return double(x[a]) * x[b] * x[c]; });
            double e2 = multinomial_expect(f, m, [&](const std::vector<int>& x) { return double(x[a]) * x[b]; });
            CHECK(multinomial_moment(f, m, v3) == doctest::Approx(e3).epsilon(1e-12));
            CHECK(multinomial_moment(f, m, v2) == doctest::Approx(e2).epsilon(1e-12));
            CHECK(multinomial_moment_general(f, m, v3) == doctest::Approx(e3).epsilon(1e-12));
          }
}

TEST_CASE("hypergeometric converges to multinomial") {
  for (long m = 1; m <= 4; ++m) {
    double prev = 1e9;
    for (long n : {100L, 1000L, 10000L}) {
      std::vector<long> nv{n / 2, 3 * n / 10, n / 5};
      std::vector<double> f{0.5, 0.3, 0.2};
      double gap = 0.0;
      for (const auto& v : std::vector<std::vector<int>>{{0, 1}, {1, 1}, {0, 1, 2}, {2, 2, 2}, {0, 0, 1}}) {
        double h = static_cast<double>(hypergeom_moment_formula(nv, m, v));
        double mu = multinomial_moment(f, m, v);
        if (mu > 0.0) gap = std::max(gap, std::abs(h - mu) / mu);
      }
      CHECK(gap < 2.0 * m * m / n);
      CHECK(gap <= prev);
      prev = gap;
    }
  }
}

TEST_CASE("design closed forms for h") {
  PopulationModel pop = constant_pop(0.2);
  const Segment& seg = pop.segments[0];
  CHECK(h_value(DesignSpec::full(), seg, {0, 1}) == doctest::Approx(0.16));
  for (int m = 2; m <= 6; ++m)
    CHECK(h_value(DesignSpec::srs(m), seg, {0, 1}) == doctest::Approx((m - 1.0) / m * 0.16));
  PopulationModel cm = cm_population({0.2, 1.0, 1.0}, 1.0, 1.0, 1.0);
  CHECK(h_value(DesignSpec::counter_matching({1, 1}), cm.segments[0], {0, 1}) == doctest::Approx(0.16));
}

TEST_CASE("closed forms agree with the composition law") {
  for (int trial = 0; trial < 40; ++trial) {
    PopulationModel pop = random_stratified(2, trial % 2 ? 3 : 2);
    const Segment& seg = pop.segments[0];
    const int K = static_cast<int>(pop.levels.size());
    std::vector<DesignSpec> designs{DesignSpec::full(), DesignSpec::srs(2 + trial % 4),
                                    DesignSpec::matching({1 + trial % 3, 2}),
                                    DesignSpec::counter_matching({1 + trial % 2, 1 + (trial / 2) % 2})};
    for (const auto& d : designs)
      for (int a = 0; a < K; ++a)
        for (int b = a; b < K; ++b) {
          CHECK(h_value(d, seg, {a, b}) == doctest::Approx(h_from_atoms(d, seg, {a, b})).epsilon(1e-12));
          for (int c = b; c < K; ++c)
            CHECK(h_value(d, seg, {a, b, c}) == doctest::Approx(h_from_atoms(d, seg, {a, b, c})).epsilon(1e-12));
        }
  }
}

TEST_CASE("counter-matching displays agree with the composition law") {
  for (int trial = 0; trial < 40; ++trial) {
    PopulationModel pop = random_stratified(2 + trial % 2, 3);
    const Segment& seg = pop.segments[0];
    std::vector<int> m(seg.n_strata());
    for (auto& v : m) v = 1 + static_cast<int>(gen() % 3);
    DesignSpec d = DesignSpec::counter_matching(m);
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        if (j == k) continue;
        CHECK(h_cm_pair(seg, m, j, k) == doctest::Approx(h_from_atoms(d, seg, {j, k})).epsilon(1e-12));
        CHECK(h_cm_jjk(seg, m, j, k) == doctest::Approx(h_from_atoms(d, seg, {j, j, k})).epsilon(1e-12));
      }
    CHECK(h_cm_distinct(seg, m, 0, 1, 2) == doctest::Approx(h_from_atoms(d, seg, {0, 1, 2})).epsilon(1e-12));
  }
  for (int trial = 0; trial < 20; ++trial) {
    PopulationModel pop = random_stratified(2);
    const Segment& seg = pop.segments[0];
    std::vector<int> m{1 + trial % 3, 1 + trial % 2};
    DesignSpec d = DesignSpec::counter_matching(m);
    auto [h01, h011] = h_cm_classical(seg, m);
    CHECK(h01 == doctest::Approx(h_from_atoms(d, seg, {0, 1})).epsilon(1e-12));
    CHECK(h011 == doctest::Approx(h_from_atoms(d, seg, {0, 1, 1})).epsilon(1e-12));
  }
}

TEST_CASE("null identity h011 + h100 = h01") {
  for (int trial = 0; trial < 100; ++trial) {
    PopulationModel pop = random_stratified(2);
    const Segment& seg = pop.segments[0];
    for (const auto& d : {DesignSpec::full(), DesignSpec::srs(2 + trial % 5), DesignSpec::matching({2, 3}),
                          DesignSpec::counter_matching({1 + trial % 2, 1})})
      CHECK(h_value(d, seg, {0, 1, 1}) + h_value(d, seg, {1, 0, 0}) ==
            doctest::Approx(h_value(d, seg, {0, 1})).epsilon(1e-10));
  }
}

TEST_CASE("single-stratum matching equals simple random sampling") {
  PopulationModel a = constant_pop(0.3);
  PopulationModel b = PopulationModel::stratified(LevelSet::classical(), {1.0}, {{0.7, 0.3}}, 1.0, 1.0, 1.0);
  for (int m = 2; m <= 5; ++m)
    for (double phi : {0.2, 1.0, 3.0})
      CHECK(sigma2_mh(DesignSpec::srs(m), a, phi) ==
            doctest::Approx(sigma2_mh(DesignSpec::matching({m}), b, phi)).epsilon(1e-12));
}

TEST_CASE("asymptotic variances") {
  PopulationModel pop = constant_pop(0.2);
  CHECK(sigma2_mh(DesignSpec::full(), pop, 1.0) == doctest::Approx(6.25).epsilon(1e-12));
  for (int m = 2; m <= 10; ++m)
    CHECK(sigma2_mh(DesignSpec::srs(m), pop, 1.0) == doctest::Approx(6.25 * m / (m - 1.0)).epsilon(1e-12));
  PopulationModel cm = cm_population({0.2, 1.0, 1.0}, 1.0, 1.0, 1.0);
  CHECK(sigma2_mh(DesignSpec::counter_matching({1, 1}), cm, 1.0) == doctest::Approx(6.25).epsilon(1e-12));
  for (double phi : {0.1, 0.5, 2.0, 8.0}) {
    for (int m = 2; m <= 6; ++m) {
      double s = sigma2_mh(DesignSpec::srs(m), pop, phi);
      CHECK(s == doctest::Approx(sigma2_srs_explicit(pop, m, phi)).epsilon(1e-12));
      CHECK(s == doctest::Approx(sigma2_mh_classical(DesignSpec::srs(m), pop, phi)).epsilon(1e-12));
      CHECK(sigma2_mh(DesignSpec::full(), pop, phi) <= s);
    }
  }
  PopulationModel empty = constant_pop(0.0);
  CHECK_THROWS_AS(sigma2_mh(DesignSpec::full(), empty, 1.0), NumericalError);
}

TEST_CASE("e and psi") {
  PopulationModel pop = PopulationModel::constant(LevelSet::classical(), {0.8, 0.2}, 0.6, 1.0, 1.0);
  EPsi full = e_psi(DesignSpec::full(), pop, 1.0);
  CHECK(full.e(0.5) == doctest::Approx(0.2));
  CHECK(full.psi(0.5) == doctest::Approx(1.0 / 0.6));
  EPsi srs = e_psi(DesignSpec::srs(4), pop, 1.0);
  CHECK(srs.psi(0.5) == doctest::Approx(1.0 / 0.6));
  CHECK(srs.e(0.5) == doctest::Approx(0.2));
  PopulationModel cm = cm_population({0.2, 0.7, 0.8}, 1.0, 1.0, 1.0);
  const Segment& seg = cm.segments[0];
  double e_null = seg.f_strata[0][1] * seg.q[0] + seg.f_strata[1][1] * seg.q[1];
  CHECK(e_psi(DesignSpec::counter_matching({1, 1}), cm, 1.0).e(0.5) == doctest::Approx(e_null));
}

TEST_CASE("partial likelihood information") {
  for (int trial = 0; trial < 20; ++trial) {
    PopulationModel pop = random_stratified(2);
    for (const auto& d : {DesignSpec::full(), DesignSpec::srs(2 + trial % 4), DesignSpec::matching({2, 2}),
                          DesignSpec::counter_matching({1, 1 + trial % 2})})
      CHECK(sigma2_mh(d, pop, 1.0) * mple_inverse_variance(d, pop, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
  }
  PopulationModel pop = constant_pop(0.2);
  auto rows = are_curve(DesignSpec::srs(2), pop, {-3, -1, 0, 1.5, 3});
  for (const auto& r : rows) CHECK(r.are == doctest::Approx(1.0).epsilon(1e-9));

  PopulationModel cm = cm_population({0.2, 1.0, 1.0}, 1.0, 1.0, 1.0);
  for (double phi : {0.3, 1.0, 4.0})
    CHECK(mple_inverse_variance(DesignSpec::counter_matching({1, 1}), cm, phi) ==
          doctest::Approx(mple_inverse_variance(DesignSpec::full(), pop, phi)).epsilon(1e-12));

  auto mv = mple_variance(DesignSpec::srs(3), pop, 2.0);
  CHECK(mv.phi == doctest::Approx(mv.theta * 4.0));
}

TEST_CASE("partial likelihood information against a score-variance simulation") {
  // Draw sampled sets from their finite-population law and compare the variance of the
  // partial likelihood score at the true value with the limiting information.
  const double phi = 3.0, f1 = 0.3;
  for (const auto& d : {DesignSpec::srs(3), DesignSpec::counter_matching({1, 1})}) {
    Scenario sc;
    sc.n = 4000;
    sc.phi0 = phi;
    if (d.kind == DesignKind::CounterMatching)
      sc.cell = {{0.9 * (1 - f1), 0.1 * (1 - f1)}, {0.2 * f1, 0.8 * f1}};
    else
      sc.cell = {{1 - f1}, {f1}};
    sc.design = d;
    sc.tau = 0.05;
    sc.reps = 1;
    sc.seed = 99;
    const int reps = 150;
    double s = 0.0, ss = 0.0;
    for (int r = 0; r < reps; ++r) {
      SimulatedCohort sim = simulate_cohort(sc, r);
      auto sampled = sample_cohort(sim.cohort, d, 1000 + r);
      double u = 0.0;
      for (const auto& f : sampled) {
        double s0 = 0.0, s1 = 0.0;
        for (const auto& m : f.members) {
          double w = m.weight * std::pow(phi, m.level);
          s0 += w;
          s1 += w * m.level;
        }
        u += f.case_level - s1 / s0;
      }
      s += u;
      ss += u * u;
    }
    double var = (ss - s * s / reps) / (reps - 1) / sc.n;
    double J = mple_inverse_variance(d, limit_population(sc), phi);
    CHECK(var == doctest::Approx(J).epsilon(0.25));
  }
}

TEST_CASE("surrogate population") {
  PopulationModel a = cm_population({0.2, 1.0, 1.0}, 1.0, 1.0, 1.0);
  const Segment& s = a.segments[0];
  CHECK(s.q[1] == doctest::Approx(0.2));
  CHECK(s.f_strata[1][1] == doctest::Approx(1.0));
  CHECK(s.f_strata[0][1] == doctest::Approx(0.0));

  PopulationModel b = cm_population({0.2, 0.5, 0.5}, 1.0, 1.0, 1.0);
  CHECK(b.segments[0].f_strata[0][1] == doctest::Approx(0.2));
  CHECK(b.segments[0].f_strata[1][1] == doctest::Approx(0.2));

  CHECK(cm_null_factor({0.2, 0.9, 0.9}) == doctest::Approx(0.82));

  for (double dl : {0.6, 0.9})
    for (double gm : {0.7, 0.95}) {
      PopulationModel pm = cm_population({0.2, dl, gm}, 1.0, 1.0, 1.0);
      const Segment& g = pm.segments[0];
      CHECK(g.f_strata[0][1] * g.q[0] + g.f_strata[1][1] * g.q[1] == doctest::Approx(0.2).epsilon(1e-15));
    }
  CHECK_THROWS_AS(cm_population({0.0, 1.0, 1.0}, 1.0, 1.0, 1.0), SchemaError);
}

TEST_CASE("efficiency curves") {
  PopulationModel pop = constant_pop(0.2);
  auto at = [&](const DesignSpec& d, const PopulationModel& p, double x) { return are_curve(d, p, {x})[0].are; };
  CHECK(at(DesignSpec::srs(5), pop, 0.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(at(DesignSpec::srs(3), pop, -2.8) == doctest::Approx(0.942).epsilon(0.02 / 0.942));
  CHECK(at(DesignSpec::srs(10), pop, 2.8) == doctest::Approx(0.879).epsilon(0.02 / 0.879));
  PopulationModel cm = cm_population({0.2, 0.9, 0.9}, 1.0, 1.0, 1.0);
  CHECK(at(DesignSpec::counter_matching({1, 1}), cm, 2.8) == doctest::Approx(0.990).epsilon(0.02 / 0.99));
  CHECK(at(DesignSpec::counter_matching({1, 1}), cm, 0.0) == doctest::Approx(1.0).epsilon(1e-6));

  std::string csv = format_are_csv(are_curve(DesignSpec::srs(3), pop, {0.0, 1.0}));
  CHECK(csv.rfind("log_phi,sigma2_mh_theta,sigma2_mple_theta,are\n", 0) == 0);
  std::string svg = render_are_svg({{"srs m=3", are_curve(DesignSpec::srs(3), pop, {-1, 0, 1})}}, "ARE");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
}

TEST_CASE("time-varying population integrates segment by segment") {
  PopulationModel two = PopulationModel::constant(LevelSet::classical(), {0.8, 0.2}, 1.0, 1.0, 1.0);
  Segment extra = two.segments[0];
  extra.t0 = 1.0;
  extra.t1 = 3.0;
  extra.f = {0.5, 0.5};
  extra.p = 0.5;
  two.segments.push_back(extra);
  // int p f0 f1 lambda = 0.16 + 2 * 0.5 * 0.25
  CHECK(sigma2_mh(DesignSpec::full(), two, 1.0) == doctest::Approx(1.0 / 0.41));
}
