#include "mhcohort/asymptotics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "mhcohort/errors.hpp"
#include "mhcohort/io.hpp"

namespace mhc {

namespace {

constexpr double kSumTol = 1e-9;

void check_frequencies(const std::vector<double>& f, std::size_t K, const std::string& what) {
  if (f.size() != K) throw SchemaError(fmt::format("{}: expected {} entries", what, K));
  double s = 0.0;
  for (double v : f) {
    if (!(v >= 0.0 && v <= 1.0)) throw SchemaError(fmt::format("{}: entries must lie in [0,1]", what));
    s += v;
  }
  if (std::abs(s - 1.0) > kSumTol) throw SchemaError(fmt::format("{}: entries must sum to 1", what));
}

template <typename Fn>
void compositions_from(std::vector<int>& x, std::size_t k, int left, Fn& fn) {
  if (k + 1 == x.size()) {
    x[k] = left;
    fn(static_cast<const std::vector<int>&>(x));
    return;
  }
  for (int v = 0; v <= left; ++v) {
    x[k] = v;
    compositions_from(x, k + 1, left - v, fn);
  }
}

// Calls fn(x) for every vector of K nonnegative integers summing to m.
template <typename Fn>
void for_each_composition(int m, std::size_t K, Fn&& fn) {
  std::vector<int> x(K, 0);
  compositions_from(x, 0, m, fn);
}

double log_multinomial_pmf(const std::vector<int>& x, const std::vector<double>& f) {
  int m = 0;
  double lp = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    m += x[k];
    if (x[k] > 0) {
      if (f[k] <= 0.0) return -std::numeric_limits<double>::infinity();
      lp += x[k] * std::log(f[k]) - std::lgamma(x[k] + 1.0);
    }
  }
  return lp + std::lgamma(m + 1.0);
}

Rational falling(long a, long p) {
  Rational out = 1;
  for (long i = 0; i < p; ++i) out *= (a - i);
  return out;
}

double falling_d(double a, long p) {
  double out = 1.0;
  for (long i = 0; i < p; ++i) out *= a - i;
  return out;
}

// Stirling numbers of the second kind.
long stirling2(int r, int j) {
  if (r == 0 && j == 0) return 1;
  if (r == 0 || j == 0) return 0;
  return j * stirling2(r - 1, j) + stirling2(r - 1, j - 1);
}

std::vector<int> power_counts(const std::vector<int>& v, std::size_t K) {
  std::vector<int> r(K, 0);
  for (int k : v) {
    if (k < 0 || static_cast<std::size_t>(k) >= K) throw UsageError("level index out of range");
    ++r[k];
  }
  return r;
}

// Calls fn(j) for every vector j with 0 <= j_k <= r_k.
template <typename Fn>
void for_each_sub(const std::vector<int>& r, Fn&& fn) {
  std::vector<int> j(r.size(), 0);
  for (;;) {
    fn(static_cast<const std::vector<int>&>(j));
    std::size_t k = 0;
    while (k < r.size() && j[k] == r[k]) j[k++] = 0;
    if (k == r.size()) return;
    ++j[k];
  }
}

}  // namespace

// ---- population model -----------------------------------------------------

void PopulationModel::validate() const {
  const std::size_t K = levels.size();
  if (segments.empty()) throw SchemaError("population model has no segments");
  double prev = 0.0;
  for (const auto& s : segments) {
    if (!(s.t1 > s.t0) || std::abs(s.t0 - prev) > 1e-12)
      throw SchemaError("population segments must be contiguous and start at 0");
    prev = s.t1;
    if (!(s.p >= 0.0 && s.p <= 1.0)) throw SchemaError("p(t) must lie in [0,1]");
    if (!(s.lambda0 >= 0.0) || !std::isfinite(s.lambda0)) throw SchemaError("lambda0 must be finite and nonnegative");
    check_frequencies(s.f, K, "level frequencies");
    if (!s.q.empty()) {
      check_frequencies(s.q, s.q.size(), "stratum frequencies");
      if (s.f_strata.size() != s.q.size()) throw SchemaError("one level distribution per stratum required");
      for (std::size_t l = 0; l < s.q.size(); ++l) {
        check_frequencies(s.f_strata[l], K, "within-stratum level frequencies");
      }
      for (std::size_t k = 0; k < K; ++k) {
        double m = 0.0;
        for (std::size_t l = 0; l < s.q.size(); ++l) m += s.f_strata[l][k] * s.q[l];
        if (std::abs(m - s.f[k]) > kSumTol) throw SchemaError("level frequencies disagree with strata");
      }
      if (!s.lambda_strata.empty() && s.lambda_strata.size() != s.q.size())
        throw SchemaError("one baseline hazard per stratum required");
    }
  }
}

PopulationModel PopulationModel::constant(const LevelSet& levels, std::vector<double> f, double p,
                                          double lambda0, double tau) {
  PopulationModel pop;
  pop.levels = levels;
  Segment s;
  s.t0 = 0.0;
  s.t1 = tau;
  s.p = p;
  s.lambda0 = lambda0;
  s.f = std::move(f);
  pop.segments.push_back(std::move(s));
  pop.validate();
  return pop;
}

PopulationModel PopulationModel::stratified(const LevelSet& levels, std::vector<double> q,
                                            std::vector<std::vector<double>> f_strata, double p,
                                            double lambda0, double tau,
                                            std::vector<double> lambda_strata) {
  PopulationModel pop;
  pop.levels = levels;
  Segment s;
  s.t0 = 0.0;
  s.t1 = tau;
  s.p = p;
  s.lambda0 = lambda0;
  s.f.assign(levels.size(), 0.0);
  if (f_strata.size() != q.size()) throw SchemaError("one level distribution per stratum required");
  for (std::size_t l = 0; l < q.size(); ++l) {
    if (f_strata[l].size() != levels.size()) throw SchemaError("within-stratum frequencies have the wrong length");
    for (std::size_t k = 0; k < levels.size(); ++k) s.f[k] += f_strata[l][k] * q[l];
  }
  s.q = std::move(q);
  s.f_strata = std::move(f_strata);
  s.lambda_strata = std::move(lambda_strata);
  pop.segments.push_back(std::move(s));
  pop.validate();
  return pop;
}

double Piecewise::operator()(double t) const {
  for (std::size_t i = 0; i < value.size(); ++i)
    if (t >= t0[i] && t < t1[i]) return value[i];
  if (!value.empty() && t == t1.back()) return value.back();
  return 0.0;
}

double Piecewise::integral() const {
  double s = 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) s += value[i] * (t1[i] - t0[i]);
  return s;
}

// ---- moments --------------------------------------------------------------

Rational hypergeom_moment(const std::vector<long>& n_vec, long m, const std::vector<int>& v) {
  const std::size_t K = n_vec.size();
  long n = 0;
  for (long c : n_vec) {
    if (c < 0) throw UsageError("negative type count");
    n += c;
  }
  if (m < 0 || m > n) throw UsageError("sample size must lie in [0, n]");
  power_counts(v, K);
  using boost::multiprecision::cpp_int;
  auto binom = [](long a, long b) -> cpp_int {
    if (b < 0 || b > a) return 0;
    cpp_int r = 1;
    for (long i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return r;
  };
  Rational total = 0;
  for_each_composition(static_cast<int>(m), K, [&](const std::vector<int>& x) {
    cpp_int w = 1;
    for (std::size_t k = 0; k < K; ++k) {
      if (x[k] > n_vec[k]) return;
      w *= binom(n_vec[k], x[k]);
    }
    cpp_int prod = 1;
    for (int k : v) prod *= x[k];
    total += Rational(w * prod);
  });
  return total / Rational(binom(n, m));
}

Rational hypergeom_moment_formula(const std::vector<long>& n_vec, long m, const std::vector<int>& v) {
  const std::size_t K = n_vec.size();
  long n = 0;
  for (long c : n_vec) n += c;
  if (m < 0 || m > n) throw UsageError("sample size must lie in [0, n]");
  std::vector<int> r = power_counts(v, K);
  Rational total = 0;
  for_each_sub(r, [&](const std::vector<int>& j) {
    long coef = 1, J = 0;
    Rational term = 1;
    for (std::size_t k = 0; k < K; ++k) {
      coef *= stirling2(r[k], j[k]);
      J += j[k];
      term *= falling(n_vec[k], j[k]);
    }
    if (coef == 0) return;
    if (J > n) return;
    total += coef * falling(m, J) * term / falling(n, J);
  });
  return total;
}

double multinomial_moment(const std::vector<double>& f, long m, const std::vector<int>& v) {
  std::vector<int> w = v;
  std::sort(w.begin(), w.end());
  const double m1 = static_cast<double>(m), m2 = falling_d(m1, 2), m3 = falling_d(m1, 3);
  switch (w.size()) {
    case 0:
      return 1.0;
    case 1:
      return m1 * f[w[0]];
    case 2:
      if (w[0] != w[1]) return m2 * f[w[0]] * f[w[1]];
      return m1 * f[w[0]] + m2 * f[w[0]] * f[w[0]];
    case 3: {
      if (w[0] != w[1] && w[1] != w[2]) return m3 * f[w[0]] * f[w[1]] * f[w[2]];
      if (w[0] == w[1] && w[1] == w[2]) {
        double x = f[w[0]];
        return m1 * x + 3.0 * m2 * x * x + m3 * x * x * x;
      }
      int j = w[1], k = (w[0] == w[1]) ? w[2] : w[0];
      return m2 * f[j] * f[k] + m3 * f[j] * f[j] * f[k];
    }
    default:
      return multinomial_moment_general(f, m, v);
  }
}

double multinomial_moment_general(const std::vector<double>& f, long m, const std::vector<int>& v) {
  std::vector<int> r = power_counts(v, f.size());
  double total = 0.0;
  for_each_sub(r, [&](const std::vector<int>& j) {
    double coef = 1.0;
    long J = 0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      coef *= static_cast<double>(stirling2(r[k], j[k])) * std::pow(f[k], j[k]);
      J += j[k];
    }
    total += coef * falling_d(static_cast<double>(m), J);
  });
  return total;
}

double multinomial_expect(const std::vector<double>& f, int m,
                          const std::function<double(const std::vector<int>&)>& g) {
  if (m < 0 || m > 30) throw UsageError("multinomial enumeration limited to m <= 30");
  if (f.empty()) throw UsageError("empty frequency vector");
  double total = 0.0;
  for_each_composition(m, f.size(), [&](const std::vector<int>& x) {
    double lp = log_multinomial_pmf(x, f);
    if (std::isinf(lp)) return;
    total += std::exp(lp) * g(x);
  });
  return total;
}

// ---- composition law ------------------------------------------------------

std::vector<Atom> composition_atoms(const DesignSpec& design, const Segment& seg) {
  const std::size_t K = seg.f.size();
  std::vector<Atom> out;
  auto multinomial_atoms = [&](const std::vector<double>& f, int m, double scale_prob, int stratum,
                               std::vector<Atom>& into) {
    for_each_composition(m, K, [&](const std::vector<int>& x) {
      double lp = log_multinomial_pmf(x, f);
      if (std::isinf(lp)) return;
      Atom a{scale_prob * std::exp(lp), std::vector<double>(K), stratum};
      for (std::size_t k = 0; k < K; ++k) a.s[k] = static_cast<double>(x[k]) / m;
      into.push_back(std::move(a));
    });
  };
  switch (design.kind) {
    case DesignKind::Full:
      out.push_back({1.0, seg.f, 0});
      break;
    case DesignKind::SRS:
      multinomial_atoms(seg.f, design.m, 1.0, 0, out);
      break;
    case DesignKind::Matching:
      for (std::size_t l = 0; l < seg.n_strata(); ++l)
        if (seg.q_of(l) > 0.0)
          multinomial_atoms(seg.f_of(l), design.m_for(l), seg.q_of(l), static_cast<int>(l), out);
      break;
    case DesignKind::CounterMatching: {
      out.push_back({1.0, std::vector<double>(K, 0.0), 0});
      for (std::size_t l = 0; l < seg.n_strata(); ++l) {
        if (seg.q_of(l) == 0.0) continue;
        std::vector<Atom> part;
        int m = design.m_for(l);
        multinomial_atoms(seg.f_of(l), m, 1.0, 0, part);
        std::vector<Atom> next;
        next.reserve(out.size() * part.size());
        for (const auto& a : out)
          for (const auto& b : part) {
            Atom c{a.prob * b.prob, a.s, 0};
            for (std::size_t k = 0; k < K; ++k) c.s[k] += seg.q_of(l) * b.s[k];
            next.push_back(std::move(c));
          }
        if (next.size() > 2000000) throw UsageError("counter-matching composition too large to enumerate");
        out = std::move(next);
      }
      break;
    }
  }
  return out;
}

double h_from_atoms(const DesignSpec& design, const Segment& seg, const std::vector<int>& v) {
  double total = 0.0;
  for (const auto& a : composition_atoms(design, seg)) {
    double prod = a.prob;
    for (int k : v) prod *= a.s[k];
    total += prod;
  }
  return seg.p * total;
}

namespace {

// E[prod_p sum_l q_l X_{k_p,l} / m_l] with independent multinomial X_l, expanded over
// the assignment of factors to strata.
double cm_expansion(const Segment& seg, const std::vector<int>& m, const std::vector<int>& v) {
  const std::size_t L = seg.n_strata(), V = v.size();
  std::vector<std::size_t> assign(V, 0);
  double total = 0.0;
  for (;;) {
    double term = 1.0;
    for (std::size_t p = 0; p < V; ++p) term *= seg.q_of(assign[p]) / m[assign[p]];
    if (term != 0.0) {
      for (std::size_t l = 0; l < L && term != 0.0; ++l) {
        std::vector<int> sub;
        for (std::size_t p = 0; p < V; ++p)
          if (assign[p] == l) sub.push_back(v[p]);
        if (!sub.empty()) term *= multinomial_moment(seg.f_of(l), m[l], sub);
      }
      total += term;
    }
    std::size_t p = 0;
    while (p < V && assign[p] == L - 1) assign[p++] = 0;
    if (p == V) break;
    ++assign[p];
  }
  return total;
}

std::vector<int> strata_sizes(const DesignSpec& design, std::size_t L) {
  std::vector<int> m(L);
  for (std::size_t l = 0; l < L; ++l) m[l] = design.m_for(l);
  return m;
}

}  // namespace

double h_value(const DesignSpec& design, const Segment& seg, const std::vector<int>& v) {
  const double V = static_cast<double>(v.size());
  switch (design.kind) {
    case DesignKind::Full: {
      double prod = seg.p;
      for (int k : v) prod *= seg.f[k];
      return prod;
    }
    case DesignKind::SRS:
      return seg.p * multinomial_moment(seg.f, design.m, v) / std::pow(design.m, V);
    case DesignKind::Matching: {
      double total = 0.0;
      for (std::size_t l = 0; l < seg.n_strata(); ++l) {
        int m = design.m_for(l);
        total += seg.q_of(l) * multinomial_moment(seg.f_of(l), m, v) / std::pow(m, V);
      }
      return seg.p * total;
    }
    case DesignKind::CounterMatching:
      return seg.p * cm_expansion(seg, strata_sizes(design, seg.n_strata()), v);
  }
  return 0.0;
}

Piecewise h_limit(const DesignSpec& design, const PopulationModel& pop, const std::vector<int>& v) {
  Piecewise out;
  for (const auto& s : pop.segments) {
    out.t0.push_back(s.t0);
    out.t1.push_back(s.t1);
    out.value.push_back(h_value(design, s, v));
  }
  return out;
}

double h_cm_pair(const Segment& seg, const std::vector<int>& m, int k1, int k2) {
  double sub = 0.0;
  for (std::size_t l = 0; l < seg.n_strata(); ++l)
    sub += seg.f_of(l)[k1] * seg.f_of(l)[k2] * seg.q_of(l) * seg.q_of(l) / m[l];
  return seg.p * (seg.f[k1] * seg.f[k2] - sub);
}

double h_cm_jjk(const Segment& seg, const std::vector<int>& m, int k1, int k3) {
  const std::size_t L = seg.n_strata();
  double total = seg.f[k1] * seg.f[k1] * seg.f[k3];
  for (std::size_t l = 0; l < L; ++l) {
    const auto& f = seg.f_of(l);
    double ml = m[l], q = seg.q_of(l);
    total += f[k1] * f[k3] * (ml * (1.0 - 3.0 * f[k1]) - (1.0 - 2.0 * f[k1])) * q * q * q / (ml * ml);
  }
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = 0; b < L; ++b) {
      if (a == b) continue;
      const auto& fa = seg.f_of(a);
      const auto& fb = seg.f_of(b);
      total += fa[k1] * (fb[k3] * (1.0 - fa[k1]) - 2.0 * fa[k3] * fb[k1]) * seg.q_of(a) * seg.q_of(a) *
               seg.q_of(b) / m[a];
    }
  return seg.p * total;
}

double h_cm_distinct(const Segment& seg, const std::vector<int>& m, int k1, int k2, int k3) {
  const std::size_t L = seg.n_strata();
  double total = seg.f[k1] * seg.f[k2] * seg.f[k3];
  for (std::size_t l = 0; l < L; ++l) {
    const auto& f = seg.f_of(l);
    double ml = m[l], q = seg.q_of(l);
    total += (2.0 - 3.0 * ml) / (ml * ml) * f[k1] * f[k2] * f[k3] * q * q * q;
  }
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = 0; b < L; ++b) {
      if (a == b) continue;
      const auto& fa = seg.f_of(a);
      const auto& fb = seg.f_of(b);
      double qq = seg.q_of(a) * seg.q_of(a) * seg.q_of(b) / m[a];
      total -= fa[k1] * fa[k2] * fb[k3] * qq;
      total -= fa[k3] * (fa[k1] * fb[k2] + fb[k1] * fa[k2]) * qq;
    }
  return seg.p * total;
}

std::pair<double, double> h_cm_classical(const Segment& seg, const std::vector<int>& m) {
  const std::size_t L = seg.n_strata();
  double a = 0.0, b = 0.0, c = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& f = seg.f_of(l);
    double q = seg.q_of(l), ml = m[l];
    a += f[0] * f[1] * q * q / ml;
    b += (1.0 - 3.0 * f[1]) * q;
    c += f[0] * f[1] * (1.0 - 2.0 * f[1]) * q * q * q / (ml * ml);
  }
  double h01 = seg.p * (seg.f[0] * seg.f[1] - a);
  double h011 = seg.p * (seg.f[0] * seg.f[1] * seg.f[1] + a * b - c);
  return {h01, h011};
}

namespace {

// h_v times the applicable baseline hazard on one segment.
double h_rate(const DesignSpec& design, const Segment& seg, const std::vector<int>& v) {
  if (design.kind == DesignKind::Matching && !seg.lambda_strata.empty()) {
    const double V = static_cast<double>(v.size());
    double total = 0.0;
    for (std::size_t l = 0; l < seg.n_strata(); ++l) {
      int m = design.m_for(l);
      total += seg.q_of(l) * seg.lambda_of(l) * multinomial_moment(seg.f_of(l), m, v) / std::pow(m, V);
    }
    return seg.p * total;
  }
  return h_value(design, seg, v) * seg.lambda0;
}

}  // namespace

Variation limit_variation(const DesignSpec& design, const PopulationModel& pop) {
  const std::size_t K = pop.levels.size();
  Variation out;
  out.K = K;
  out.I2.assign(K * K, 0.0);
  out.I3.assign(K * K * K, 0.0);
  for (const auto& seg : pop.segments) {
    double len = seg.length();
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = a; b < K; ++b) {
        double v2 = len * h_rate(design, seg, {int(a), int(b)});
        out.I2[a * K + b] += v2;
        if (a != b) out.I2[b * K + a] += v2;
        for (std::size_t c = b; c < K; ++c) {
          double v3 = len * h_rate(design, seg, {int(a), int(b), int(c)});
          std::array<std::size_t, 3> idx{a, b, c};
          do {
            out.I3[(idx[0] * K + idx[1]) * K + idx[2]] += v3;
          } while (std::next_permutation(idx.begin(), idx.end()));
        }
      }
  }
  return out;
}

double sigma2_mh(const DesignSpec& design, const PopulationModel& pop, double phi0,
                 const std::vector<double>& c) {
  if (!(phi0 > 0.0)) throw UsageError("phi0 must be positive");
  Variation I = limit_variation(design, pop);
  PairMoments pm = pair_moments(pop.levels, I, phi0);
  std::vector<double> w = c.empty() ? std::vector<double>(pm.beta.size(), 1.0) : c;
  if (w.size() != pm.beta.size()) throw UsageError("weight vector length differs from number of level pairs");
  double gamma = 0.0;
  for (std::size_t a = 0; a < w.size(); ++a) gamma += w[a] * pm.beta[a] * pm.beta[a];
  if (!(gamma != 0.0)) throw NumericalError("population carries no information about phi");
  return sandwich_sigma2(pm, w);
}

double sigma2_mh_classical(const DesignSpec& design, const PopulationModel& pop, double phi0) {
  double num = 0.0, den = 0.0;
  for (const auto& seg : pop.segments) {
    double len = seg.length();
    num += len * (phi0 * phi0 * h_rate(design, seg, {0, 1, 1}) + phi0 * h_rate(design, seg, {1, 0, 0}));
    den += len * h_rate(design, seg, {0, 1});
  }
  if (!(den > 0.0)) throw NumericalError("population carries no information about phi");
  return num / (den * den);
}

double sigma2_srs_explicit(const PopulationModel& pop, int m, double phi0) {
  double num = 0.0, den = 0.0;
  for (const auto& s : pop.segments) {
    double base = s.p * s.f[0] * s.f[1] * s.lambda0 * s.length();
    num += base * ((1.0 + phi0) + (s.f[0] + phi0 * s.f[1]) * (m - 2));
    den += base;
  }
  if (!(den > 0.0)) throw NumericalError("population carries no information about phi");
  return phi0 * num / ((m - 1) * den * den);
}

namespace {

struct SetSums {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, d1 = 0.0;
};

SetSums set_sums(const LevelSet& levels, const std::vector<double>& s, double phi) {
  SetSums out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    double a = levels.alpha(k), pw = std::pow(phi, a) * s[k];
    out.s0 += pw;
    out.s1 += a * pw;
    out.s2 += a * a * pw;
    if (a != 0.0) out.d1 += a * std::pow(phi, a - 1.0) * s[k];
  }
  return out;
}

}  // namespace

EPsi e_psi(const DesignSpec& design, const PopulationModel& pop, double phi0) {
  EPsi out;
  for (const auto& seg : pop.segments) {
    double e = 0.0, psi = 0.0;
    for (const auto& a : composition_atoms(design, seg)) {
      SetSums ss = set_sums(pop.levels, a.s, phi0);
      if (ss.s0 <= 0.0) continue;
      e += a.prob * ss.d1 / ss.s0;
      psi += a.prob / ss.s0;
    }
    for (Piecewise* pw : {&out.e, &out.psi}) {
      pw->t0.push_back(seg.t0);
      pw->t1.push_back(seg.t1);
    }
    out.e.value.push_back(e);
    out.psi.value.push_back(seg.p > 0.0 ? psi / seg.p : std::numeric_limits<double>::infinity());
  }
  return out;
}

double mple_inverse_variance(const DesignSpec& design, const PopulationModel& pop, double phi0) {
  if (!(phi0 > 0.0)) throw UsageError("phi0 must be positive");
  double J = 0.0;
  for (const auto& seg : pop.segments) {
    double inner = 0.0;
    for (const auto& a : composition_atoms(design, seg)) {
      SetSums ss = set_sums(pop.levels, a.s, phi0);
      if (ss.s0 <= 0.0) continue;
      double lam = design.kind == DesignKind::Matching ? seg.lambda_of(a.stratum) : seg.lambda0;
      inner += a.prob * lam * (ss.s2 - ss.s1 * ss.s1 / ss.s0);
    }
    J += seg.p * inner * seg.length();
  }
  return J;
}

MpleVariance mple_variance(const DesignSpec& design, const PopulationModel& pop, double phi0) {
  double J = mple_inverse_variance(design, pop, phi0);
  if (!(J > 0.0)) throw NumericalError("partial likelihood information is zero");
  return {1.0 / J, phi0 * phi0 / J};
}

std::vector<AreRow> are_curve(const DesignSpec& design, const PopulationModel& pop,
                              const std::vector<double>& log_phi_grid) {
  std::vector<AreRow> rows;
  rows.reserve(log_phi_grid.size());
  for (double x : log_phi_grid) {
    double phi = std::exp(x);
    double mh = sigma2_mh(design, pop, phi) / (phi * phi);
    double ml = mple_variance(design, pop, phi).theta;
    rows.push_back({x, mh, ml, ml / mh});
  }
  return rows;
}

std::string format_are_csv(const std::vector<AreRow>& rows) {
  std::string out = "log_phi,sigma2_mh_theta,sigma2_mple_theta,are\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{}\n", format_double(r.log_phi), format_double(r.sigma2_mh_theta),
                       format_double(r.sigma2_mple_theta), format_double(r.are));
  return out;
}

std::string render_are_svg(const std::vector<AreSeries>& series, const std::string& title) {
  const double W = 640, H = 480, left = 70, right = 130, top = 40, bottom = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = 1.0, ymax = 1.0;
  for (const auto& s : series)
    for (const auto& r : s.rows) {
      xmin = std::min(xmin, r.log_phi);
      xmax = std::max(xmax, r.log_phi);
      ymin = std::min(ymin, r.are);
      ymax = std::max(ymax, r.are);
    }
  if (!(xmax > xmin)) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  ymin = std::floor(ymin * 20.0) / 20.0;
  ymax = std::ceil(ymax * 20.0) / 20.0;
  if (!(ymax > ymin)) ymin = ymax - 0.05;
  auto X = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (W - left - right); };
  auto Y = [&](double y) { return H - bottom - (y - ymin) / (ymax - ymin) * (H - top - bottom); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  svg += fmt::format("<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>\n", W / 2, title);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", left,
                     H - bottom, W - right);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left, top,
                     H - bottom);
  for (int i = 0; i <= 6; ++i) {
    double x = xmin + (xmax - xmin) * i / 6.0;
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1}\" x2=\"{0:.1f}\" y2=\"{2}\" stroke=\"black\"/>"
                       "<text x=\"{0:.1f}\" y=\"{3}\" text-anchor=\"middle\">{4:.1f}</text>\n",
                       X(x), H - bottom, H - bottom + 5, H - bottom + 20, x);
  }
  int ny = static_cast<int>(std::lround((ymax - ymin) / 0.05));
  for (int i = 0; i <= ny; ++i) {
    double y = ymin + 0.05 * i;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1:.1f}\" x2=\"{2}\" y2=\"{1:.1f}\" stroke=\"black\"/>"
                       "<text x=\"{3}\" y=\"{4:.1f}\" text-anchor=\"end\">{5:.2f}</text>\n",
                       left - 5, Y(y), left, left - 8, Y(y) + 4, y);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log(phi)</text>\n", (left + W - right) / 2,
                     H - 20);
  svg += fmt::format("<text x=\"20\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">ARE</text>\n",
                     (top + H - bottom) / 2, (top + H - bottom) / 2);
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string pts;
    for (const auto& r : series[i].rows) pts += fmt::format("{:.2f},{:.2f} ", X(r.log_phi), Y(r.are));
    const char* col = colors[i % 6];
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", col, pts);
    if (!series[i].rows.empty()) {
      const auto& last = series[i].rows.back();
      svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" fill=\"{}\">{}</text>\n", X(last.log_phi) + 6,
                         Y(last.are) + 4, col, series[i].label);
    }
  }
  svg += "</svg>\n";
  return svg;
}

PopulationModel cm_population(const SensSpecModel& ss, double p, double lambda0, double tau) {
  for (double v : {ss.f1, ss.delta, ss.gamma_spec, p})
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("sensitivity model parameters must lie in [0,1]");
  double f1 = ss.f1, f0 = 1.0 - f1;
  double pi11 = ss.delta * f1, pi10 = (1.0 - ss.delta) * f1;
  double pi01 = (1.0 - ss.gamma_spec) * f0, pi00 = ss.gamma_spec * f0;
  double q0 = pi00 + pi10, q1 = pi01 + pi11;
  if (!(q0 > 0.0) || !(q1 > 0.0)) throw SchemaError("surrogate stratum has zero probability");
  return PopulationModel::stratified(LevelSet::classical(), {q0, q1},
                                     {{pi00 / q0, pi10 / q0}, {pi01 / q1, pi11 / q1}}, p, lambda0, tau);
}

double cm_null_factor(const SensSpecModel& ss) {
  return (1.0 - ss.delta) * (1.0 - ss.gamma_spec) + ss.gamma_spec * ss.delta;
}

}  // namespace mhc
