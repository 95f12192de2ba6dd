#include <algorithm>
#include <set>
#include <stdexcept>

#include "cxrl/evalsuite.hpp"

namespace cxrl::evalsuite {

std::string to_string(Axis axis) {
  switch (axis) {
    case Axis::encounter: return "encounter";
    case Axis::temporal: return "temporal";
    case Axis::gender: return "gender";
    case Axis::age_band: return "age_band";
    case Axis::race: break;
  }
  return "race";
}

Axis parse_axis(const std::string& text) {
  for (Axis a : {Axis::encounter, Axis::temporal, Axis::gender, Axis::age_band, Axis::race}) {
    if (to_string(a) == text) return a;
  }
  throw std::invalid_argument("unknown stratification axis '" + text + "'");
}

StratifiedTable stratify(std::vector<EvalPair>& pairs, const std::vector<PairScore>& scores, Axis axis,
                         judge::Judge* judge, const metrics::CompositeCoefficients& coefficients) {
  if (scores.size() != pairs.size()) throw std::invalid_argument("stratify: scores do not align with pairs");

  // Axis value per pair; nullopt means the pair is excluded from this axis.
  std::vector<std::optional<std::string>> keys(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& p = pairs[i];
    switch (axis) {
      case Axis::encounter:
        keys[i] = p.encounter_bucket();
        break;
      case Axis::temporal:
        if (!p.temporal_category) {
          if (p.prior_reference && judge == nullptr) {
            throw std::invalid_argument("stratify: temporal axis needs a judge for studies with priors");
          }
          p.temporal_category = p.prior_reference
                                    ? judge::label_temporal(p.reference, p.prior_reference, *judge)
                                    : judge::TemporalCategory::first_study;
        }
        keys[i] = std::string(judge::to_string(*p.temporal_category));
        break;
      default: {
        auto it = p.demographics.find(to_string(axis));
        if (it != p.demographics.end()) keys[i] = it->second;
        break;
      }
    }
  }

  std::vector<std::string> order;
  if (axis == Axis::encounter) {
    order = corpus::encounter_bucket_names();
  } else if (axis == Axis::temporal) {
    for (auto c : judge::all_temporal_categories()) order.emplace_back(judge::to_string(c));
  } else {
    std::set<std::string> seen;
    for (const auto& k : keys) {
      if (k) seen.insert(*k);
    }
    order.assign(seen.begin(), seen.end());
  }

  StratifiedTable table;
  table.axis = axis;
  for (const auto& key : order) {
    Stratum s;
    s.key = key;
    double judge_sum = 0.0;
    std::size_t judged = 0;
    // Fold in study_id order.
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (keys[i] == key) members.push_back(i);
    }
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) { return pairs[a].study_id < pairs[b].study_id; });
    for (std::size_t i : members) {
      const auto& m = scores[i].metrics;
      s.bleu2 += m.bleu2;
      s.soft_f1 += m.soft_f1;
      s.semb += m.semb;
      s.radgraph_f1 += m.radgraph_f1;
      s.composite_raw += scores[i].composite_raw;
      if (m.judge_errors) {
        judge_sum += *m.judge_errors;
        ++judged;
      }
    }
    s.count = members.size();
    s.present = s.count > 0;
    if (s.present) {
      const double n = static_cast<double>(s.count);
      s.bleu2 /= n;
      s.soft_f1 /= n;
      s.semb /= n;
      s.radgraph_f1 /= n;
      s.composite_raw /= n;
      try {
        s.composite_reported = metrics::report_composite(s.composite_raw, coefficients);
      } catch (const std::domain_error&) {
      }
      if (judged > 0) s.mean_judge_errors = judge_sum / static_cast<double>(judged);
    }
    table.strata.push_back(std::move(s));
  }
  for (const auto& k : keys) {
    if (!k) ++table.excluded;
  }
  table.absent = table.excluded == pairs.size();
  return table;
}

}  // namespace cxrl::evalsuite
