#pragma once

#include <string>
#include <vector>

#include "mhcohort/cohort.hpp"

namespace fixtures {

// s1 exposed fails at 1, s2 exposed exits at 3, s3 unexposed exits at 1.5, s4 unexposed fails at 2.
inline std::vector<mhc::EventRecord> fixture_a() {
  return {
      {"s1", 0, "enter", ""}, {"s1", 0, "cov", "1"}, {"s1", 1, "fail", ""},
      {"s2", 0, "enter", ""}, {"s2", 0, "cov", "1"}, {"s2", 3, "exit", ""},
      {"s3", 0, "enter", ""}, {"s3", 0, "cov", "0"}, {"s3", 1.5, "exit", ""},
      {"s4", 0, "enter", ""}, {"s4", 0, "cov", "0"}, {"s4", 2, "fail", ""},
  };
}

inline const char* fixture_a_csv =
    "subject_id,time,event,value\n"
    "s1,0,enter,\ns1,0,cov,1\ns1,1,fail,\n"
    "s2,0,enter,\ns2,0,cov,1\ns2,3,exit,\n"
    "s3,0,enter,\ns3,0,cov,0\ns3,1.5,exit,\n"
    "s4,0,enter,\ns4,0,cov,0\ns4,2,fail,\n";

// A single risk set at t=1 with the given (level, stratum) per subject; subject 1 fails.
inline mhc::Cohort single_risk_set(const std::vector<std::pair<int, int>>& members,
                                   const mhc::LevelSet& levels = mhc::LevelSet::classical()) {
  std::vector<mhc::EventRecord> rec;
  for (std::size_t i = 0; i < members.size(); ++i) {
    std::string id = std::to_string(i + 1);
    rec.push_back({id, 0, "enter", ""});
    rec.push_back({id, 0, "cov", levels.labels[members[i].first]});
    rec.push_back({id, 0, "stratum", std::to_string(members[i].second)});
    rec.push_back({id, i == 0 ? 1.0 : 2.0, i == 0 ? "fail" : "exit", ""});
  }
  return mhc::build_cohort(rec, levels, 2.0);
}

}  // namespace fixtures
