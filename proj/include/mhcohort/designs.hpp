#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "mhcohort/cohort.hpp"
#include "mhcohort/rng.hpp"

namespace mhc {

enum class DesignKind { Full, SRS, Matching, CounterMatching };

struct DesignSpec {
  DesignKind kind = DesignKind::Full;
  int m = 2;                  // SRS set size (case included)
  std::vector<int> m_strata;  // per-stratum sizes for matching / counter-matching
  bool clamp = false;         // deficient strata: take the whole stratum instead of failing

  static DesignSpec full() { return {}; }
  static DesignSpec srs(int m, bool clamp = false) { return {DesignKind::SRS, m, {}, clamp}; }
  static DesignSpec matching(std::vector<int> m, bool clamp = false) {
    return {DesignKind::Matching, 0, std::move(m), clamp};
  }
  static DesignSpec counter_matching(std::vector<int> m, bool clamp = false) {
    return {DesignKind::CounterMatching, 0, std::move(m), clamp};
  }

  int m_for(std::size_t stratum) const;
  void validate() const;
};

std::string design_name(DesignKind kind);
DesignKind parse_design(const std::string& name);

struct SampledMember {
  std::string id;
  int level;
  int stratum;
  double weight;
};

struct SampledFailure {
  double time = 0.0;
  std::string case_id;
  int case_level = 0;
  long n_t = 0;
  std::vector<SampledMember> members;  // the case is members[0]
};

SampledFailure sample_full(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos);
SampledFailure sample_srs(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos, int m,
                          Stream& rng, bool clamp = false);
SampledFailure sample_matching(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos,
                               const std::vector<int>& m, Stream& rng, bool clamp = false);
SampledFailure sample_counter_matching(const Cohort& cohort, const RiskSet& rs,
                                       std::size_t case_pos, const std::vector<int>& m,
                                       Stream& rng, bool clamp = false);
SampledFailure sample(const Cohort& cohort, const RiskSet& rs, std::size_t case_pos,
                      const DesignSpec& design, Stream& rng);

// Samples every failure of the cohort. The stream for failure k is keyed by
// (seed, k) so results do not depend on processing order.
std::vector<SampledFailure> sample_cohort(const Cohort& cohort, const DesignSpec& design,
                                          std::uint64_t seed);

// Closed-form weight w_i(t,r) for a member in the given stratum.
double design_weight(const DesignSpec& design, const RiskSet& rs, int member_stratum,
                     int case_stratum);

using Rational = boost::multiprecision::cpp_rational;

struct DesignRow {
  std::vector<std::size_t> set;  // member positions within the risk set, ascending
  std::size_t case_pos;
  Rational pi_given_case;  // pi_t(r | i)
  Rational pi_set;         // pi_t(r)
  Rational weight;         // pi_t(r|i) / pi_t(r)
};

struct DesignTable {
  long n_t = 0;
  std::vector<DesignRow> rows;
};

// Exhaustive enumeration of the sampling mechanism for every potential case.
// Each case's supported sets are found by subset enumeration and given equal
// probability; pi_t(r) = n(t)^{-1} sum_i pi_t(r|i).
DesignTable enumerate_design(const RiskSet& rs, const DesignSpec& design);

struct DesignCheck {
  bool identity = true;       // pi(r|i) = pi(r) w_i with closed-form w
  bool set_total = true;      // sum_r pi(r) = 1
  bool case_totals = true;    // sum_{r ni i} pi(r|i) = 1 for every i
  bool grand_total = true;    // sum_r sum_{i in r} pi(r|i) = n(t)
  std::string detail;
  bool ok() const { return identity && set_total && case_totals && grand_total; }
};

DesignCheck check_design(const RiskSet& rs, const DesignSpec& design);

// SampledFailure CSV: failure_time, n_at_risk, case_id, member_id, level_index, stratum, weight
std::string format_sampled_csv(const std::vector<SampledFailure>& failures,
                               const std::vector<std::string>& strata);
std::vector<SampledFailure> parse_sampled_csv(const std::string& text);

}  // namespace mhc
