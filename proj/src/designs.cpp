#include "mhcohort/designs.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "mhcohort/errors.hpp"
#include "mhcohort/io.hpp"

namespace mhc {

int DesignSpec::m_for(std::size_t stratum) const {
  if (kind == DesignKind::SRS) return m;
  if (stratum >= m_strata.size())
    throw UsageError(fmt::format("no sampling size given for stratum {}", stratum));
  return m_strata[stratum];
}

void DesignSpec::validate() const {
  switch (kind) {
    case DesignKind::Full:
      break;
    case DesignKind::SRS:
      if (m < 2) throw UsageError("simple random sampling needs m >= 2");
      break;
    case DesignKind::Matching:
    case DesignKind::CounterMatching:
      if (m_strata.empty()) throw UsageError("per-stratum sampling sizes required");
      for (int v : m_strata)
        if (v < 1) throw UsageError("per-stratum sampling sizes must be >= 1");
      break;
  }
}

std::string design_name(DesignKind kind) {
  switch (kind) {
    case DesignKind::Full: return "full";
    case DesignKind::SRS: return "srs";
    case DesignKind::Matching: return "matching";
    case DesignKind::CounterMatching: return "cm";
  }
  return "?";
}

DesignKind parse_design(const std::string& name) {
  if (name == "full") return DesignKind::Full;
  if (name == "srs" || name == "ncc") return DesignKind::SRS;
  if (name == "matching") return DesignKind::Matching;
  if (name == "cm" || name == "counter-matching") return DesignKind::CounterMatching;
  throw UsageError(fmt::format("unknown design '{}'", name));
}

namespace {

// Sampling size actually used in a stratum (or the whole risk set for SRS).
long effective_m(int m, long available, bool clamp, const char* what) {
  if (available >= m) return m;
  if (!clamp)
    throw NumericalError(fmt::format("{} has {} subjects at risk, fewer than the {} required", what,
                                     available, m));
  return available;
}

SampledMember member_at(const Cohort& cohort, const RiskSet& rs, std::size_t pos, double w) {
  return {cohort.subjects[rs.members[pos]].id, rs.level[pos], rs.stratum[pos], w};
}

// Draws k distinct entries from pool (partial Fisher-Yates); order of draws kept.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, long k, Stream& rng) {
  for (long j = 0; j < k; ++j) {
    std::size_t pick = j + static_cast<std::size_t>(rng.below(pool.size() - j));
    std::swap(pool[j], pool[pick]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

SampledFailure header(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos) {
  if (case_pos >= rs.members.size()) throw UsageError("case is not in the risk set");
  SampledFailure out;
  out.time = rs.time;
  out.case_id = cohort.subjects[rs.members[case_pos]].id;
  out.case_level = rs.level[case_pos];
  out.n_t = rs.n_t();
  return out;
}

}  // namespace

double design_weight(const DesignSpec& d, const RiskSet& rs, int member_stratum, int case_stratum) {
  const long n = rs.n_t();
  switch (d.kind) {
    case DesignKind::Full:
      return 1.0;
    case DesignKind::SRS:
      return static_cast<double>(n) / static_cast<double>(effective_m(d.m, n, d.clamp, "risk set"));
    case DesignKind::Matching: {
      long c = rs.stratum_counts[case_stratum];
      return static_cast<double>(n) /
             static_cast<double>(effective_m(d.m_for(case_stratum), c, d.clamp, "case stratum"));
    }
    case DesignKind::CounterMatching: {
      long c = rs.stratum_counts[member_stratum];
      return static_cast<double>(c) /
             static_cast<double>(effective_m(d.m_for(member_stratum), c, d.clamp, "stratum"));
    }
  }
  return 0.0;
}

SampledFailure sample_full(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos) {
  SampledFailure out = header(cohort, rs, case_pos);
  out.members.reserve(rs.members.size());
  out.members.push_back(member_at(cohort, rs, case_pos, 1.0));
  for (std::size_t p = 0; p < rs.members.size(); ++p)
    if (p != case_pos) out.members.push_back(member_at(cohort, rs, p, 1.0));
  return out;
}

SampledFailure sample_srs(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos, int m,
                          Stream& rng, bool clamp) {
  if (m < 2) throw UsageError("simple random sampling needs m >= 2");
  SampledFailure out = header(cohort, rs, case_pos);
  long me = effective_m(m, rs.n_t(), clamp, "risk set");
  double w = static_cast<double>(rs.n_t()) / static_cast<double>(me);
  std::vector<std::size_t> pool;
  pool.reserve(rs.members.size());
  for (std::size_t p = 0; p < rs.members.size(); ++p)
    if (p != case_pos) pool.push_back(p);
  out.members.push_back(member_at(cohort, rs, case_pos, w));
  for (std::size_t p : draw(std::move(pool), me - 1, rng)) out.members.push_back(member_at(cohort, rs, p, w));
  return out;
}

SampledFailure sample_matching(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos,
                               const std::vector<int>& m, Stream& rng, bool clamp) {
  SampledFailure out = header(cohort, rs, case_pos);
  int l = rs.stratum[case_pos];
  if (static_cast<std::size_t>(l) >= m.size())
    throw UsageError(fmt::format("no sampling size given for stratum {}", l));
  long me = effective_m(m[l], rs.stratum_counts[l], clamp, "case stratum");
  double w = static_cast<double>(rs.n_t()) / static_cast<double>(me);
  std::vector<std::size_t> pool;
  for (std::size_t p = 0; p < rs.members.size(); ++p)
    if (p != case_pos && rs.stratum[p] == l) pool.push_back(p);
  out.members.push_back(member_at(cohort, rs, case_pos, w));
  for (std::size_t p : draw(std::move(pool), me - 1, rng)) out.members.push_back(member_at(cohort, rs, p, w));
  return out;
}

SampledFailure sample_counter_matching(const Cohort& cohort, const RiskSet& rs,
                                       std::size_t case_pos, const std::vector<int>& m,
                                       Stream& rng, bool clamp) {
  SampledFailure out = header(cohort, rs, case_pos);
  const std::size_t L = rs.stratum_counts.size();
  if (m.size() < L) throw UsageError("per-stratum sampling sizes missing for some strata");
  int case_stratum = rs.stratum[case_pos];
  std::vector<long> me(L);
  for (std::size_t l = 0; l < L; ++l) me[l] = effective_m(m[l], rs.stratum_counts[l], clamp, "stratum");
  auto w = [&](int l) { return static_cast<double>(rs.stratum_counts[l]) / static_cast<double>(me[l]); };
  out.members.push_back(member_at(cohort, rs, case_pos, w(case_stratum)));
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<std::size_t> pool;
    for (std::size_t p = 0; p < rs.members.size(); ++p)
      if (p != case_pos && rs.stratum[p] == static_cast<int>(l)) pool.push_back(p);
    long k = me[l] - (static_cast<int>(l) == case_stratum ? 1 : 0);
    for (std::size_t p : draw(std::move(pool), k, rng))
      out.members.push_back(member_at(cohort, rs, p, w(static_cast<int>(l))));
  }
  return out;
}

SampledFailure sample(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos,
                      const DesignSpec& d, Stream& rng) {
  switch (d.kind) {
    case DesignKind::Full: return sample_full(cohort, rs, case_pos);
    case DesignKind::SRS: return sample_srs(cohort, rs, case_pos, d.m, rng, d.clamp);
    case DesignKind::Matching: return sample_matching(cohort, rs, case_pos, d.m_strata, rng, d.clamp);
    case DesignKind::CounterMatching:
      return sample_counter_matching(cohort, rs, case_pos, d.m_strata, rng, d.clamp);
  }
  throw UsageError("unknown design");
}

std::vector<SampledFailure> sample_cohort(const Cohort& cohort, const DesignSpec& design,
                                          std::uint64_t seed) {
  design.validate();
  std::vector<SampledFailure> out;
  out.reserve(cohort.failures.size());
  for (std::size_t k = 0; k < cohort.failures.size(); ++k) {
    RiskSet rs = failure_risk_set(cohort, k);
    Stream rng = Stream::keyed(seed, {k});
    out.push_back(sample(cohort, rs, rs.position(cohort.failures[k].subject), design, rng));
  }
  return out;
}

DesignTable enumerate_design(const RiskSet& rs, const DesignSpec& d) {
  const long n = rs.n_t();
  if (n > 12) throw UsageError("enumeration limited to risk sets of at most 12 subjects");
  if (n == 0) return {};
  d.validate();
  const std::size_t L = rs.stratum_counts.size();
  std::vector<long> me(L, 0);
  if (d.kind == DesignKind::Matching || d.kind == DesignKind::CounterMatching)
    for (std::size_t l = 0; l < L; ++l)
      me[l] = std::min<long>(d.m_for(l), rs.stratum_counts[l]);
  const long srs_m = d.kind == DesignKind::SRS ? std::min<long>(d.m, n) : 0;

  const unsigned full = (1u << n) - 1;
  auto supported = [&](unsigned mask, std::size_t i) {
    if (!(mask & (1u << i))) return false;
    switch (d.kind) {
      case DesignKind::Full:
        return mask == full;
      case DesignKind::SRS:
        return std::popcount(mask) == srs_m;
      case DesignKind::Matching: {
        int li = rs.stratum[i];
        for (long p = 0; p < n; ++p)
          if ((mask & (1u << p)) && rs.stratum[p] != li) return false;
        return std::popcount(mask) == me[li];
      }
      case DesignKind::CounterMatching: {
        std::vector<long> cnt(L, 0);
        for (long p = 0; p < n; ++p)
          if (mask & (1u << p)) ++cnt[rs.stratum[p]];
        return cnt == me;
      }
    }
    return false;
  };

  // pi(r|i) for every (r, i) pair with positive probability.
  std::map<unsigned, std::vector<std::pair<std::size_t, Rational>>> by_set;
  for (long i = 0; i < n; ++i) {
    std::vector<unsigned> sets;
    for (unsigned mask = 1; mask <= full; ++mask)
      if (supported(mask, static_cast<std::size_t>(i))) sets.push_back(mask);
    if (sets.empty()) continue;
    Rational p(1, static_cast<long>(sets.size()));
    for (unsigned mask : sets) by_set[mask].push_back({static_cast<std::size_t>(i), p});
  }

  DesignTable table;
  table.n_t = n;
  for (const auto& [mask, cases] : by_set) {
    Rational pi_r = 0;
    for (const auto& [i, p] : cases) pi_r += p;
    pi_r /= n;
    std::vector<std::size_t> set;
    for (long p = 0; p < n; ++p)
      if (mask & (1u << p)) set.push_back(static_cast<std::size_t>(p));
    for (const auto& [i, p] : cases) table.rows.push_back({set, i, p, pi_r, p / pi_r});
  }
  return table;
}

namespace {

Rational closed_weight(const DesignSpec& d, const RiskSet& rs, std::size_t member,
                       std::size_t case_pos) {
  const long n = rs.n_t();
  switch (d.kind) {
    case DesignKind::Full:
      return 1;
    case DesignKind::SRS:
      return Rational(n, std::min<long>(d.m, n));
    case DesignKind::Matching: {
      int l = rs.stratum[case_pos];
      return Rational(n, std::min<long>(d.m_for(l), rs.stratum_counts[l]));
    }
    case DesignKind::CounterMatching: {
      int l = rs.stratum[member];
      return Rational(rs.stratum_counts[l], std::min<long>(d.m_for(l), rs.stratum_counts[l]));
    }
  }
  return 0;
}

}  // namespace

DesignCheck check_design(const RiskSet& rs, const DesignSpec& d) {
  DesignCheck out;
  DesignTable table = enumerate_design(rs, d);
  const long n = rs.n_t();
  std::map<std::vector<std::size_t>, Rational> set_prob;
  std::vector<Rational> case_total(static_cast<std::size_t>(n), Rational(0));
  Rational grand = 0;
  for (const auto& row : table.rows) {
    set_prob[row.set] = row.pi_set;
    case_total[row.case_pos] += row.pi_given_case;
    grand += row.pi_given_case;
    // Identity with the closed-form weight of the member that failed.
    Rational w = closed_weight(d, rs, row.case_pos, row.case_pos);
    if (row.pi_given_case != row.pi_set * w) {
      out.identity = false;
      out.detail += fmt::format("identity fails for case {} ", row.case_pos);
    }
  }
  // Every member of a supported set must itself be able to generate it, since
  // pi(r) w_i > 0 for all i in r.
  std::map<std::vector<std::size_t>, std::size_t> generators;
  for (const auto& row : table.rows) ++generators[row.set];
  for (const auto& [set, count] : generators)
    if (count != set.size()) {
      out.identity = false;
      out.detail += "a set member cannot generate its set ";
    }
  Rational total = 0;
  for (const auto& [set, p] : set_prob) total += p;
  if (n > 0 && total != 1) {
    out.set_total = false;
    out.detail += "set probabilities do not sum to one ";
  }
  for (long i = 0; i < n; ++i)
    if (case_total[i] != 1) {
      out.case_totals = false;
      out.detail += fmt::format("case {} probabilities do not sum to one ", i);
    }
  if (grand != n) {
    out.grand_total = false;
    out.detail += "total mass differs from n(t) ";
  }
  return out;
}

std::string format_sampled_csv(const std::vector<SampledFailure>& failures,
                               const std::vector<std::string>& strata) {
  std::string out = "failure_time,n_at_risk,case_id,member_id,level_index,stratum,weight\n";
  for (const auto& f : failures)
    for (const auto& m : f.members) {
      std::string label = static_cast<std::size_t>(m.stratum) < strata.size()
                              ? strata[m.stratum]
                              : std::to_string(m.stratum);
      out += fmt::format("{},{},{},{},{},{},{}\n", format_double(f.time), f.n_t, f.case_id, m.id,
                         m.level, label, format_double(m.weight));
    }
  return out;
}

std::vector<SampledFailure> parse_sampled_csv(const std::string& text) {
  CsvTable t = parse_csv(text);
  std::size_t c_t = t.column("failure_time"), c_n = t.column("n_at_risk"),
              c_case = t.column("case_id"), c_mem = t.column("member_id"),
              c_lev = t.column("level_index"), c_str = t.column("stratum"),
              c_w = t.column("weight");
  std::map<std::string, int> strata;
  std::vector<SampledFailure> out;
  bool case_seen = false;
  auto finish = [&] {
    if (!out.empty() && !case_seen)
      throw SchemaError(fmt::format("failure at t={} lists no row for its case {}",
                                    out.back().time, out.back().case_id));
  };
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::string where = fmt::format("row {}", r + 2);
    double time = parse_double(row[c_t], where + " failure_time");
    long n_t = parse_long(row[c_n], where + " n_at_risk");
    if (out.empty() || out.back().time != time || out.back().case_id != row[c_case]) {
      finish();
      out.push_back({time, row[c_case], 0, n_t, {}});
      case_seen = false;
    } else if (out.back().n_t != n_t) {
      throw SchemaError(where + ": n_at_risk differs within one failure");
    }
    long level = parse_long(row[c_lev], where + " level_index");
    if (level < 0) throw SchemaError(where + ": negative level index");
    double w = parse_double(row[c_w], where + " weight");
    if (!(w > 0.0)) throw SchemaError(where + ": weights must be positive");
    auto [it, fresh] = strata.emplace(row[c_str], static_cast<int>(strata.size()));
    SampledMember m{row[c_mem], static_cast<int>(level), it->second, w};
    auto& f = out.back();
    if (m.id == f.case_id) {
      if (case_seen) throw SchemaError(where + ": case listed twice");
      case_seen = true;
      f.case_level = m.level;
      f.members.insert(f.members.begin(), m);
    } else {
      f.members.push_back(m);
    }
  }
  finish();
  return out;
}

}  // namespace mhc
