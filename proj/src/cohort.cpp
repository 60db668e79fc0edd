#include "mhcohort/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "mhcohort/errors.hpp"
#include "mhcohort/io.hpp"

namespace mhc {

namespace {
constexpr std::size_t npos = static_cast<std::size_t>(-1);
}

LevelSet::LevelSet(std::vector<double> a, std::vector<std::string> l)
    : alphas(std::move(a)), labels(std::move(l)) {
  if (alphas.size() < 2) throw SchemaError("level set needs at least two levels");
  if (alphas[0] != 0.0) throw SchemaError("first exposure score must be 0");
  for (std::size_t k = 1; k < alphas.size(); ++k)
    if (!(alphas[k] > alphas[k - 1]))
      throw SchemaError("exposure scores must be strictly increasing");
  if (labels.empty())
    for (std::size_t k = 0; k < alphas.size(); ++k) labels.push_back(std::to_string(k));
  if (labels.size() != alphas.size()) throw SchemaError("one label per exposure level required");
}

int LevelSet::find(const std::string& label) const {
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == label) return static_cast<int>(k);
  return -1;
}

int Path::at(double t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return -1;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

bool Subject::at_risk(double t) const {
  for (const auto& iv : risk_intervals)
    if (iv.start < t && t <= iv.end) return true;
  return false;
}

std::size_t Cohort::find_subject(const std::string& id) const {
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (subjects[i].id == id) return i;
  return npos;
}

std::size_t RiskSet::position(std::size_t subject) const {
  for (std::size_t p = 0; p < members.size(); ++p)
    if (members[p] == subject) return p;
  return npos;
}

bool id_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    bool da = std::isdigit(static_cast<unsigned char>(a[i]));
    bool db = std::isdigit(static_cast<unsigned char>(b[j]));
    if (da && db) {
      std::size_t i2 = i, j2 = j;
      while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2]))) ++i2;
      while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2]))) ++j2;
      std::string_view na(a.data() + i, i2 - i), nb(b.data() + j, j2 - j);
      while (na.size() > 1 && na[0] == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb[0] == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = i2;
      j = j2;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

Cohort build_cohort(const std::vector<EventRecord>& records, const LevelSet& levels,
                    double tau) {
  Cohort cohort;
  cohort.levels = levels;

  std::map<std::string, std::size_t> index;
  std::map<std::string, int> stratum_index;
  auto stratum_of = [&](const std::string& label) {
    auto it = stratum_index.find(label);
    if (it != stratum_index.end()) return it->second;
    int id = static_cast<int>(cohort.strata.size());
    cohort.strata.push_back(label);
    stratum_index.emplace(label, id);
    return id;
  };

  struct Open {
    bool open = false;
    double start = 0.0;
    double last_time = -std::numeric_limits<double>::infinity();
  };
  std::vector<Open> state;
  double max_time = 0.0;

  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    auto where = [&] { return fmt::format("record {} (subject {}, t={})", r + 1, rec.subject_id, rec.time); };
    if (!std::isfinite(rec.time) || rec.time < 0.0)
      throw SchemaError(fmt::format("{}: time must be finite and nonnegative", where()));
    auto [it, fresh] = index.emplace(rec.subject_id, cohort.subjects.size());
    if (fresh) {
      cohort.subjects.push_back(Subject{rec.subject_id, {}, {}, {}});
      state.emplace_back();
    }
    Subject& s = cohort.subjects[it->second];
    Open& st = state[it->second];
    if (rec.time < st.last_time)
      throw SchemaError(fmt::format("{}: times out of order for subject", where()));
    st.last_time = rec.time;
    max_time = std::max(max_time, rec.time);

    if (rec.event == "enter") {
      if (s.failed) throw SchemaError(fmt::format("{}: re-entry after failure", where()));
      if (st.open) throw SchemaError(fmt::format("{}: overlapping risk intervals", where()));
      if (!s.risk_intervals.empty() && rec.time < s.risk_intervals.back().end)
        throw SchemaError(fmt::format("{}: overlapping risk intervals", where()));
      st.open = true;
      st.start = rec.time;
    } else if (rec.event == "exit" || rec.event == "fail") {
      if (!st.open || !(rec.time > st.start)) {
        if (rec.event == "fail")
          throw SchemaError(fmt::format("{}: failure while not at risk", where()));
        throw SchemaError(fmt::format("{}: exit while not at risk", where()));
      }
      s.risk_intervals.push_back({st.start, rec.time});
      st.open = false;
      if (rec.event == "fail") {
        s.failed = true;
        s.failure_time = rec.time;
      }
    } else if (rec.event == "cov") {
      int k = levels.find(rec.value);
      if (k < 0) throw SchemaError(fmt::format("{}: unknown level label '{}'", where(), rec.value));
      s.level.times.push_back(rec.time);
      s.level.values.push_back(k);
    } else if (rec.event == "stratum") {
      if (rec.value.empty()) throw SchemaError(fmt::format("{}: empty stratum label", where()));
      s.stratum.times.push_back(rec.time);
      s.stratum.values.push_back(stratum_of(rec.value));
    } else {
      throw SchemaError(fmt::format("{}: unknown event '{}'", where(), rec.event));
    }
  }

  cohort.tau = tau > 0.0 ? tau : max_time;
  if (!(cohort.tau > 0.0)) throw SchemaError("time horizon must be positive");

  // Subjects still open are followed to tau.
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    if (state[i].open) {
      if (!(cohort.tau > state[i].start))
        throw SchemaError(fmt::format("subject {}: entry at or after horizon", cohort.subjects[i].id));
      cohort.subjects[i].risk_intervals.push_back({state[i].start, cohort.tau});
    }
  }

  for (auto& s : cohort.subjects)
    if (s.stratum.times.empty()) {
      s.stratum.times.push_back(-std::numeric_limits<double>::infinity());
      s.stratum.values.push_back(stratum_of("0"));
    }
  // Stratum ids follow label order, not order of appearance.
  {
    std::vector<std::string> sorted = cohort.strata;
    std::sort(sorted.begin(), sorted.end(), id_less);
    std::vector<int> remap(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) remap[stratum_index.at(sorted[i])] = static_cast<int>(i);
    for (auto& s : cohort.subjects)
      for (int& v : s.stratum.values) v = remap[v];
    cohort.strata = std::move(sorted);
  }

  for (auto& s : cohort.subjects) {
    for (const auto& iv : s.risk_intervals) {
      if (iv.end > cohort.tau)
        throw SchemaError(fmt::format("subject {}: record beyond horizon", s.id));
      // Paths must be defined just after each interval start.
      double probe = std::nextafter(iv.start, iv.end);
      if (s.level.at(probe) < 0)
        throw SchemaError(fmt::format("subject {}: exposure level undefined while at risk", s.id));
      if (s.stratum.at(probe) < 0)
        throw SchemaError(fmt::format("subject {}: stratum undefined while at risk", s.id));
    }
    if (s.failed) {
      int k = s.level.at(s.failure_time);
      cohort.failures.push_back({s.failure_time, static_cast<std::size_t>(&s - cohort.subjects.data()), s.id, k});
    }
  }

  std::sort(cohort.failures.begin(), cohort.failures.end(),
            [](const FailureEvent& a, const FailureEvent& b) {
              if (a.time != b.time) return a.time < b.time;
              return id_less(a.case_id, b.case_id);
            });
  return cohort;
}

namespace {

RiskSet collect(const Cohort& cohort, double t, const std::vector<char>* excluded) {
  RiskSet rs;
  rs.time = t;
  const std::size_t K = cohort.levels.size(), L = std::max<std::size_t>(cohort.n_strata(), 1);
  rs.level_counts.assign(K, 0);
  rs.stratum_counts.assign(L, 0);
  rs.cross_counts.assign(K * L, 0);
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    if (excluded && (*excluded)[i]) continue;
    const Subject& s = cohort.subjects[i];
    if (!s.at_risk(t)) continue;
    int k = s.level.at(t), l = s.stratum.at(t);
    rs.members.push_back(i);
    rs.level.push_back(k);
    rs.stratum.push_back(l);
    ++rs.level_counts[k];
    ++rs.stratum_counts[l];
    ++rs.cross_counts[static_cast<std::size_t>(k) * L + l];
  }
  return rs;
}

}  // namespace

RiskSet risk_set(const Cohort& cohort, double t) {
  if (!(t > 0.0 && t <= cohort.tau))
    throw UsageError(fmt::format("time {} outside (0, {}]", t, cohort.tau));
  return collect(cohort, t, nullptr);
}

RiskSet failure_risk_set(const Cohort& cohort, std::size_t k) {
  const FailureEvent& f = cohort.failures.at(k);
  std::vector<char> excluded;
  for (std::size_t j = k; j-- > 0 && cohort.failures[j].time == f.time;) {
    if (excluded.empty()) excluded.assign(cohort.subjects.size(), 0);
    excluded[cohort.failures[j].subject] = 1;
  }
  return collect(cohort, f.time, excluded.empty() ? nullptr : &excluded);
}

int level_index(const Cohort& cohort, const std::string& subject_id, double t) {
  std::size_t i = cohort.find_subject(subject_id);
  if (i == npos) throw UsageError(fmt::format("unknown subject {}", subject_id));
  const Subject& s = cohort.subjects[i];
  if (!s.at_risk(t)) throw UsageError(fmt::format("subject {} not at risk at {}", subject_id, t));
  return s.level.at(t);
}

std::vector<EventRecord> parse_event_csv(const std::string& text) {
  CsvTable table = parse_csv(text);
  std::size_t c_id = table.column("subject_id"), c_t = table.column("time"),
              c_ev = table.column("event"), c_v = table.column("value");
  std::vector<EventRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    out.push_back({row[c_id], parse_double(row[c_t], fmt::format("row {} time", r + 2)), row[c_ev],
                   row[c_v]});
  }
  return out;
}

std::vector<EventRecord> read_event_csv(const std::string& path) {
  return parse_event_csv(read_file(path));
}

std::string format_event_csv(const std::vector<EventRecord>& records) {
  std::string out = "subject_id,time,event,value\n";
  for (const auto& r : records)
    out += fmt::format("{},{},{},{}\n", r.subject_id, format_double(r.time), r.event, r.value);
  return out;
}

void write_event_csv(const std::string& path, const std::vector<EventRecord>& records) {
  write_file(path, format_event_csv(records));
}

}  // namespace mhc
