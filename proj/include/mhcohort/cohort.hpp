#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mhc {

// Exposure scores alpha_0 = 0 < alpha_1 < ... < alpha_eta, each with a text label
// used in event records.
struct LevelSet {
  std::vector<double> alphas;
  std::vector<std::string> labels;

  LevelSet() = default;
  explicit LevelSet(std::vector<double> a, std::vector<std::string> l = {});

  static LevelSet classical() { return LevelSet({0.0, 1.0}); }

  std::size_t size() const { return alphas.size(); }
  std::size_t eta() const { return alphas.size() - 1; }
  double alpha(std::size_t k) const { return alphas[k]; }
  // Level index for a record label; -1 if unknown.
  int find(const std::string& label) const;
};

struct Interval {
  double start;  // exclusive
  double end;    // inclusive
};

// Piecewise-constant left-continuous path: the value at t is the value of the
// last change whose time is strictly less than t.
struct Path {
  std::vector<double> times;
  std::vector<int> values;
  int at(double t) const;  // -1 when undefined
};

struct Subject {
  std::string id;
  std::vector<Interval> risk_intervals;
  Path level;
  Path stratum;
  bool failed = false;
  double failure_time = 0.0;

  bool at_risk(double t) const;
};

struct FailureEvent {
  double time;
  std::size_t subject;  // index into Cohort::subjects
  std::string case_id;
  int case_level;
};

struct Cohort {
  std::vector<Subject> subjects;
  double tau = 0.0;
  LevelSet levels;
  std::vector<std::string> strata;      // stratum labels, index = stratum id
  std::vector<FailureEvent> failures;   // processing order

  std::size_t n() const { return subjects.size(); }
  std::size_t n_strata() const { return strata.size(); }
  std::size_t find_subject(const std::string& id) const;  // npos if absent
};

struct EventRecord {
  std::string subject_id;
  double time;
  std::string event;  // enter, exit, fail, cov, stratum
  std::string value;
};

struct RiskSet {
  double time = 0.0;
  std::vector<std::size_t> members;  // subject indices
  std::vector<int> level;            // per member
  std::vector<int> stratum;          // per member
  std::vector<long> level_counts;    // n_k(t)
  std::vector<long> stratum_counts;  // c_l(t)
  std::vector<long> cross_counts;    // n_{k,l}(t), row-major [k * n_strata + l]

  long n_t() const { return static_cast<long>(members.size()); }
  long cross(std::size_t k, std::size_t l) const {
    return cross_counts[k * stratum_counts.size() + l];
  }
  // Position of a subject among members; npos if absent.
  std::size_t position(std::size_t subject) const;
};

// Numeric-aware ordering of subject ids ("2" < "10", "a2" < "a10").
bool id_less(const std::string& a, const std::string& b);

// Validates event records and builds the cohort with its ordered failure list.
// tau <= 0 means: use the largest record time.
Cohort build_cohort(const std::vector<EventRecord>& records, const LevelSet& levels,
                    double tau = 0.0);

RiskSet risk_set(const Cohort& cohort, double t);

// Risk set used for the failure at position k of cohort.failures: subjects at risk
// at its time, minus cases of earlier-processed failures tied at the same time.
RiskSet failure_risk_set(const Cohort& cohort, std::size_t k);

int level_index(const Cohort& cohort, const std::string& subject_id, double t);

std::vector<EventRecord> read_event_csv(const std::string& path);
void write_event_csv(const std::string& path, const std::vector<EventRecord>& records);
std::vector<EventRecord> parse_event_csv(const std::string& text);
std::string format_event_csv(const std::vector<EventRecord>& records);

}  // namespace mhc
