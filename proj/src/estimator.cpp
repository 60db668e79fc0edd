#include "mhcohort/estimator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mhcohort/errors.hpp"

namespace mhc {

std::vector<std::pair<int, int>> level_pairs(std::size_t n_levels) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t j = 0; j < n_levels; ++j)
    for (std::size_t k = j + 1; k < n_levels; ++k) out.emplace_back(static_cast<int>(j), static_cast<int>(k));
  return out;
}

EstimatorState accumulate(const std::vector<SampledFailure>& failures, const LevelSet& levels,
                          double n_cohort) {
  if (failures.empty() && !(n_cohort > 0.0)) throw NumericalError("no failures to estimate from");
  EstimatorState st;
  st.levels = levels;
  const std::size_t K = levels.size();
  st.R.assign(K * K, 0.0);
  st.c.assign(K * (K - 1) / 2, 1.0);
  long max_nt = 0;
  st.increments.reserve(failures.size());
  for (const auto& f : failures) {
    if (f.n_t <= 0) throw SchemaError(fmt::format("failure at t={} has no subjects at risk", f.time));
    if (f.case_level < 0 || static_cast<std::size_t>(f.case_level) >= K)
      throw SchemaError(fmt::format("failure at t={}: case level {} out of range", f.time, f.case_level));
    if (f.members.empty() || f.members.front().id != f.case_id)
      throw SchemaError(fmt::format("failure at t={}: case missing from its sampled set", f.time));
    Increment inc{f.time, f.case_level, f.members.front().stratum, std::vector<double>(K, 0.0)};
    for (const auto& m : f.members) {
      if (m.level < 0 || static_cast<std::size_t>(m.level) >= K)
        throw SchemaError(fmt::format("failure at t={}: member level {} out of range", f.time, m.level));
      if (!(m.weight > 0.0)) throw SchemaError(fmt::format("failure at t={}: nonpositive weight", f.time));
      inc.s[m.level] += m.weight;
    }
    for (double& v : inc.s) v /= static_cast<double>(f.n_t);
    for (std::size_t k = 0; k < K; ++k) st.R[f.case_level * K + k] += inc.s[k];
    max_nt = std::max(max_nt, f.n_t);
    st.increments.push_back(std::move(inc));
  }
  st.n = n_cohort > 0.0 ? n_cohort : static_cast<double>(max_nt);
  return st;
}

double falling_factorial(double a, int p) {
  double out = 1.0;
  for (int i = 0; i < p; ++i) out *= a - i;
  return out;
}

namespace {

double dpow(double a, int p, double phi) {
  double ff = falling_factorial(a, p);
  return ff == 0.0 ? 0.0 : ff * std::pow(phi, a - p);
}

}  // namespace

double g_value(const EstimatorState& st, int j, int k, double phi, int p) {
  const double aj = st.levels.alpha(j), ak = st.levels.alpha(k);
  return dpow(ak, p, phi) * st.r(j, k) - dpow(aj, p, phi) * st.r(k, j);
}

double score(const EstimatorState& st, double phi) {
  double u = 0.0;
  auto pairs = level_pairs(st.K());
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    auto [j, k] = pairs[a];
    if (st.c[a] == 0.0) continue;
    u += st.c[a] * g_value(st, j, k, phi, 0) * g_value(st, j, k, phi, 1);
  }
  return u / st.n;
}

double score_derivative(const EstimatorState& st, double phi) {
  double u = 0.0;
  auto pairs = level_pairs(st.K());
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    auto [j, k] = pairs[a];
    if (st.c[a] == 0.0) continue;
    double g1 = g_value(st, j, k, phi, 1);
    u += st.c[a] * (g1 * g1 + g_value(st, j, k, phi, 0) * g_value(st, j, k, phi, 2));
  }
  return u / st.n;
}

double weighted_ssq(const EstimatorState& st, double phi) {
  double s = 0.0;
  auto pairs = level_pairs(st.K());
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    auto [j, k] = pairs[a];
    double g = g_value(st, j, k, phi, 0);
    s += st.c[a] * g * g;
  }
  return s / st.n;
}

namespace {

// Root of f(theta) = score(exp(theta)) inside [a, b] with f(a) < 0 < f(b).
double refine(const EstimatorState& st, double a, double b, double tol) {
  double x = 0.5 * (a + b);
  for (int it = 0; it < 300 && b - a > tol; ++it) {
    double phi = std::exp(x);
    double f = score(st, phi);
    if (f == 0.0) return x;
    if (f < 0.0) a = x; else b = x;
    double df = phi * score_derivative(st, phi);
    double next = (df > 0.0 && std::isfinite(df)) ? x - f / df : std::numeric_limits<double>::quiet_NaN();
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::abs(next - x) < 0.25 * tol) return next;
    x = next;
  }
  return x;
}

}  // namespace

SolveResult solve_phi(const EstimatorState& st, const SolveOptions& opt) {
  const std::size_t K = st.K();
  auto pairs = level_pairs(K);
  if (st.c.size() != pairs.size()) throw UsageError("weight vector length differs from number of level pairs");
  bool informative = false;
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    auto [j, k] = pairs[a];
    if (st.c[a] > 0.0 && st.r(j, k) + st.r(k, j) > 0.0) informative = true;
  }
  if (!informative) throw NumericalError("no level pair with positive weight carries cross-level information");

  SolveResult out;
  if (K == 2) {
    double r10 = st.r(1, 0), r01 = st.r(0, 1), a1 = st.levels.alpha(1);
    if (r01 == 0.0) throw NumericalError("no finite solution: R_01 = 0");
    out.roots = 1;
    if (r10 == 0.0) {
      out.degenerate = true;
      out.note = "boundary estimate: R_10 = 0";
      return out;
    }
    out.phi = a1 == 1.0 ? r10 / r01 : std::pow(r10 / r01, 1.0 / a1);
    return out;
  }

  const double lo = std::log(opt.lo), hi = std::log(opt.hi);
  std::vector<double> theta(opt.grid), f(opt.grid);
  for (int i = 0; i < opt.grid; ++i) {
    theta[i] = lo + (hi - lo) * i / (opt.grid - 1);
    f[i] = score(st, std::exp(theta[i]));
  }
  std::vector<double> roots;
  for (int i = 0; i + 1 < opt.grid; ++i) {
    if (f[i] == 0.0 && (i == 0 || f[i - 1] < 0.0)) roots.push_back(theta[i]);
    else if (f[i] < 0.0 && f[i + 1] > 0.0) roots.push_back(refine(st, theta[i], theta[i + 1], opt.tol));
  }
  if (roots.empty()) {
    bool all_pos = std::all_of(f.begin(), f.end(), [](double v) { return v >= 0.0; });
    if (all_pos) {
      out.degenerate = true;
      out.note = "boundary estimate: weighted sum of squares decreases towards phi = 0";
      return out;
    }
    throw NumericalError("no sign change of the score in the search window");
  }
  out.roots = static_cast<int>(roots.size());
  double best = roots.front();
  if (opt.prefer > 0.0) {
    double target = std::log(opt.prefer);
    for (double r : roots)
      if (std::abs(r - target) < std::abs(best - target)) best = r;
  } else {
    double best_ssq = weighted_ssq(st, std::exp(best));
    for (double r : roots) {
      double s = weighted_ssq(st, std::exp(r));
      if (s < best_ssq) {
        best_ssq = s;
        best = r;
      }
    }
  }
  out.phi = std::exp(best);
  if (roots.size() > 1) out.note = fmt::format("{} local minima of the weighted sum of squares", roots.size());
  return out;
}

std::string method_name(VariationMethod m) { return m == VariationMethod::Optional ? "optional" : "model"; }

VariationMethod parse_method(const std::string& name) {
  if (name == "optional") return VariationMethod::Optional;
  if (name == "model" || name == "model_based" || name == "model-based") return VariationMethod::ModelBased;
  throw UsageError(fmt::format("unknown variance method '{}'", name));
}

namespace {

void fill_pair_integrals(const EstimatorState& st, double phi, Variation& v) {
  const std::size_t K = st.K();
  v.I2.assign(K * K, 0.0);
  for (std::size_t j = 0; j < K; ++j)
    for (std::size_t k = 0; k < K; ++k)
      v.I2[j * K + k] = 0.5 *
                        (std::pow(phi, -st.levels.alpha(j)) * st.r(j, k) +
                         std::pow(phi, -st.levels.alpha(k)) * st.r(k, j)) /
                        st.n;
}

}  // namespace

Variation optional_variation(const EstimatorState& st, double phi) {
  const std::size_t K = st.K();
  Variation v;
  v.K = K;
  fill_pair_integrals(st, phi, v);
  // T[i][a][b] = sum over failures with case level i of s_a s_b
  std::vector<double> T(K * K * K, 0.0);
  for (const auto& inc : st.increments)
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b) T[(inc.case_level * K + a) * K + b] += inc.s[a] * inc.s[b];
  std::vector<double> scale(K);
  for (std::size_t k = 0; k < K; ++k) scale[k] = std::pow(phi, -st.levels.alpha(k));
  v.I3.assign(K * K * K, 0.0);
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < K; ++b)
      for (std::size_t c = 0; c < K; ++c) {
        std::array<std::size_t, 3> idx{a, b, c};
        std::sort(idx.begin(), idx.end());
        double sum = 0.0;
        int count = 0;
        do {
          sum += scale[idx[0]] * T[(idx[0] * K + idx[1]) * K + idx[2]];
          ++count;
        } while (std::next_permutation(idx.begin(), idx.end()));
        v.I3[(a * K + b) * K + c] = sum / count / st.n;
      }
  return v;
}

Variation model_variation(const EstimatorState& st, double phi) {
  const std::size_t K = st.K();
  Variation v;
  v.K = K;
  fill_pair_integrals(st, phi, v);
  std::vector<double> pw(K);
  for (std::size_t k = 0; k < K; ++k) pw[k] = std::pow(phi, st.levels.alpha(k));
  v.I3.assign(K * K * K, 0.0);
  for (const auto& inc : st.increments) {
    double s0 = 0.0;
    for (std::size_t k = 0; k < K; ++k) s0 += pw[k] * inc.s[k];
    if (!(s0 > 0.0)) throw NumericalError(fmt::format("failure at t={}: empty weighted risk set", inc.time));
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b)
        for (std::size_t c = 0; c < K; ++c)
          v.I3[(a * K + b) * K + c] += inc.s[a] * inc.s[b] * inc.s[c] / s0;
  }
  for (double& x : v.I3) x /= st.n;
  return v;
}

PairMoments pair_moments(const LevelSet& levels, const Variation& I, double phi) {
  auto pairs = level_pairs(levels.size());
  const std::size_t P = pairs.size();
  PairMoments pm;
  pm.beta.resize(P);
  pm.Gamma.assign(P * P, 0.0);
  auto al = [&](int k) { return levels.alpha(k); };
  for (std::size_t a = 0; a < P; ++a) {
    auto [j, k] = pairs[a];
    pm.beta[a] = (al(k) - al(j)) * std::pow(phi, al(k) + al(j) - 1.0) * I.i2(j, k);
  }
  for (std::size_t a = 0; a < P; ++a) {
    auto [j, k] = pairs[a];
    for (std::size_t b = 0; b < P; ++b) {
      auto [p, q] = pairs[b];
      double v = 0.0;
      double d1 = (j == p ? 1.0 : 0.0) - (k == p ? 1.0 : 0.0);
      double d2 = (k == q ? 1.0 : 0.0) - (j == q ? 1.0 : 0.0);
      if (d1 != 0.0) v += std::pow(phi, al(j) + al(k) + al(q)) * d1 * I.i3(j, k, q);
      if (d2 != 0.0) v += std::pow(phi, al(j) + al(k) + al(p)) * d2 * I.i3(j, k, p);
      pm.Gamma[a * P + b] = v;
    }
  }
  return pm;
}

double sandwich_sigma2(const PairMoments& pm, const std::vector<double>& c) {
  const std::size_t P = pm.beta.size();
  double gamma = 0.0, v2 = 0.0;
  for (std::size_t a = 0; a < P; ++a) gamma += c[a] * pm.beta[a] * pm.beta[a];
  for (std::size_t a = 0; a < P; ++a)
    for (std::size_t b = 0; b < P; ++b)
      v2 += c[a] * pm.beta[a] * pm.Gamma[a * P + b] * pm.beta[b] * c[b];
  return v2 / (gamma * gamma);
}

VarianceReport variance(const EstimatorState& st, const Variation& I, double phi,
                        VariationMethod method) {
  VarianceReport rep;
  rep.phi_hat = phi;
  rep.I = I;
  rep.method = method;
  PairMoments pm = pair_moments(st.levels, I, phi);
  for (std::size_t a = 0; a < pm.beta.size(); ++a) rep.gamma_hat += st.c[a] * pm.beta[a] * pm.beta[a];
  if (!(rep.gamma_hat != 0.0) || !std::isfinite(rep.gamma_hat)) {
    rep.informative = false;
    rep.sigma2 = rep.sigma2_theta = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }
  rep.sigma2 = sandwich_sigma2(pm, st.c);
  rep.sigma2_theta = rep.sigma2 / (phi * phi);
  return rep;
}

OptimalC optimal_c(const std::vector<double>& beta, const std::vector<double>& Gamma) {
  const std::size_t P = beta.size();
  if (Gamma.size() != P * P) throw UsageError("covariation matrix has the wrong size");
  OptimalC out;
  auto equal = [&] {
    out.c.assign(P, 1.0);
    out.fallback = true;
    PairMoments pm{beta, Gamma};
    out.sigma2 = sandwich_sigma2(pm, out.c);
    return out;
  };
  Eigen::VectorXd b(P);
  Eigen::MatrixXd G(P, P);
  for (std::size_t a = 0; a < P; ++a) {
    b(a) = beta[a];
    if (beta[a] == 0.0 || !std::isfinite(beta[a])) return equal();
    for (std::size_t q = 0; q < P; ++q) G(a, q) = Gamma[a * P + q];
  }
  // With B = diag(beta): sigma^2(c) = (Bc)' Gamma (Bc) / ((Bc)' beta)^2, minimised
  // by Bc proportional to Gamma^{-1} beta.
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (G + G.transpose()));
  if (llt.info() != Eigen::Success) return equal();
  Eigen::VectorXd u = llt.solve(b);
  double info = b.dot(u);
  if (!(info > 0.0) || !std::isfinite(info)) return equal();
  Eigen::VectorXd c = u.cwiseQuotient(b);
  c *= static_cast<double>(P) / c.cwiseAbs().sum();
  out.c.assign(c.data(), c.data() + P);
  out.sigma2 = 1.0 / info;
  return out;
}

bool EstimateResult::has(const std::string& flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

namespace {

Variation variation_for(const EstimatorState& st, double phi, VariationMethod m) {
  return m == VariationMethod::Optional ? optional_variation(st, phi) : model_variation(st, phi);
}

EstimateResult finish(const EstimatorState& st, const Variation& I, double phi,
                      VariationMethod method, EstimateResult r) {
  VarianceReport rep = variance(st, I, phi, method);
  r.phi_hat = phi;
  r.theta_hat = std::log(phi);
  r.c = st.c;
  if (!rep.informative) {
    r.flags.push_back("non_informative");
    r.degenerate = true;
    r.sigma2 = r.sigma2_theta = r.ci_low = r.ci_high = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.sigma2 = rep.sigma2;
  r.sigma2_theta = rep.sigma2_theta;
  double half = 1.959963984540054 * std::sqrt(r.sigma2_theta / r.n);
  r.ci_low = std::exp(r.theta_hat - half);
  r.ci_high = std::exp(r.theta_hat + half);
  return r;
}

EstimateResult run(EstimatorState st, const EstimateOptions& opt,
                   const std::function<Variation(const EstimatorState&, double)>& vary) {
  EstimateResult r;
  r.n = st.n;
  r.failures = st.increments.size();
  r.method = opt.variance;
  if (opt.c == CChoice::Custom) {
    if (opt.custom_c.size() != st.c.size())
      throw UsageError(fmt::format("expected {} pair weights, got {}", st.c.size(), opt.custom_c.size()));
    st.c = opt.custom_c;
  }
  SolveResult s1 = solve_phi(st);
  if (s1.roots > 1) r.flags.push_back("multiple_roots");
  if (s1.degenerate) {
    r.flags.push_back("boundary_estimate");
    r.degenerate = true;
    r.phi_hat = 0.0;
    r.theta_hat = -std::numeric_limits<double>::infinity();
    r.c = st.c;
    r.sigma2 = r.sigma2_theta = r.ci_low = r.ci_high = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  Variation I = vary(st, s1.phi);
  if (opt.c != CChoice::Optimal || st.c.size() == 1) return finish(st, I, s1.phi, opt.variance, r);

  PairMoments pm = pair_moments(st.levels, I, s1.phi);
  OptimalC oc = optimal_c(pm.beta, pm.Gamma);
  if (oc.fallback) {
    r.flags.push_back("gamma_not_pd");
    return finish(st, I, s1.phi, opt.variance, r);
  }
  st.c = oc.c;
  SolveOptions so;
  so.prefer = s1.phi;
  SolveResult s2 = solve_phi(st, so);
  if (s2.degenerate) {
    r.flags.push_back("stage2_boundary");
    st.c.assign(st.c.size(), 1.0);
    return finish(st, I, s1.phi, opt.variance, r);
  }
  return finish(st, vary(st, s2.phi), s2.phi, opt.variance, r);
}

}  // namespace

EstimateResult estimate(const std::vector<SampledFailure>& failures, const LevelSet& levels,
                        const EstimateOptions& opt) {
  if (failures.empty()) throw NumericalError("no failures to estimate from");
  EstimatorState st = accumulate(failures, levels, opt.n_cohort);
  return run(std::move(st), opt, [&](const EstimatorState& s, double phi) {
    return variation_for(s, phi, opt.variance);
  });
}

EstimateResult estimate_stratified(const std::vector<SampledFailure>& failures,
                                   const LevelSet& levels, const EstimateOptions& opt) {
  for (const auto& f : failures)
    for (const auto& m : f.members)
      if (m.stratum != f.members.front().stratum)
        throw SchemaError(fmt::format("failure at t={}: sampled set spans several strata", f.time));
  EstimatorState st = accumulate(failures, levels, opt.n_cohort);
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < st.increments.size(); ++i) groups[st.increments[i].stratum].push_back(i);
  return run(std::move(st), opt, [&](const EstimatorState& s, double phi) {
    Variation total;
    for (const auto& [l, idx] : groups) {
      EstimatorState part = s;
      part.increments.clear();
      std::fill(part.R.begin(), part.R.end(), 0.0);
      const std::size_t K = s.K();
      for (std::size_t i : idx) {
        const auto& inc = s.increments[i];
        for (std::size_t k = 0; k < K; ++k) part.R[inc.case_level * K + k] += inc.s[k];
        part.increments.push_back(inc);
      }
      Variation v = variation_for(part, phi, opt.variance);
      if (total.K == 0) {
        total = std::move(v);
      } else {
        for (std::size_t q = 0; q < v.I2.size(); ++q) total.I2[q] += v.I2[q];
        for (std::size_t q = 0; q < v.I3.size(); ++q) total.I3[q] += v.I3[q];
      }
    }
    return total;
  });
}

std::string estimate_to_json(const EstimateResult& r) {
  nlohmann::ordered_json j;
  auto num = [](double x) -> nlohmann::ordered_json {
    if (std::isfinite(x)) return x;
    return nullptr;
  };
  j["phi_hat"] = num(r.phi_hat);
  j["theta_hat"] = num(r.theta_hat);
  j["sigma2"] = num(r.sigma2);
  j["sigma2_theta"] = num(r.sigma2_theta);
  j["ci_low"] = num(r.ci_low);
  j["ci_high"] = num(r.ci_high);
  j["n"] = r.n;
  j["failures"] = r.failures;
  j["c_weights"] = r.c;
  j["variance_method"] = method_name(r.method);
  j["degenerate_flags"] = r.flags;
  return j.dump(2) + "\n";
}

}  // namespace mhc
