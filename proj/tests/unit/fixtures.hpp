#pragma once

#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "cxrl/corpus.hpp"

namespace fixtures {

inline cxrl::corpus::StudyRecord study(const std::string& id, const std::string& patient, const std::string& ts,
                                       std::initializer_list<cxrl::corpus::View> views,
                                       std::optional<std::string> findings,
                                       std::optional<std::string> impression = std::nullopt) {
  cxrl::corpus::StudyRecord r;
  r.study_id = id;
  r.patient_id = patient;
  r.timestamp_text = ts;
  r.timestamp = cxrl::corpus::parse_timestamp(ts);
  int k = 0;
  for (auto v : views) r.images.push_back({id + "/img" + std::to_string(k++) + ".png", v});
  r.sections.findings = std::move(findings);
  r.sections.impression = std::move(impression);
  return r;
}

}  // namespace fixtures
