#include <algorithm>
#include <stdexcept>

#include "cxrl/metrics.hpp"
#include "phrase.hpp"

namespace cxrl::metrics {

std::string_view to_string(EntityType t) { return t == EntityType::anatomy ? "anatomy" : "observation"; }

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::present: return "present";
    case Polarity::absent: return "absent";
    case Polarity::uncertain: break;
  }
  return "uncertain";
}

std::string_view to_string(RelationType t) {
  switch (t) {
    case RelationType::modify: return "modify";
    case RelationType::located_at: return "located_at";
    case RelationType::suggestive_of: break;
  }
  return "suggestive_of";
}

EntityGraph extract_entities(std::string_view report, const PatternSet& patterns) {
  if (patterns.anatomy.empty() && patterns.observation.empty()) {
    throw std::invalid_argument("extract_entities: empty pattern set");
  }
  struct Candidate {
    detail::Phrase phrase;
    EntityType type;
  };
  std::vector<Candidate> candidates;
  for (auto& p : detail::to_phrases(patterns.anatomy)) candidates.push_back({std::move(p), EntityType::anatomy});
  for (auto& p : detail::to_phrases(patterns.observation)) candidates.push_back({std::move(p), EntityType::observation});
  // Longest first; anatomy before observation on equal length.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.phrase.size() > b.phrase.size(); });
  const auto negators = detail::to_phrases(patterns.negators);
  const auto hedges = detail::to_phrases(patterns.hedges);

  EntityGraph graph;
  for (const auto& sentence : split_sentences(report)) {
    std::vector<Entity> anatomy;
    std::vector<Entity> observations;
    std::size_t i = 0;
    while (i < sentence.size()) {
      const Candidate* hit = nullptr;
      for (const auto& c : candidates) {
        if (detail::matches_at(sentence, i, c.phrase)) {
          hit = &c;
          break;
        }
      }
      if (hit == nullptr) {
        ++i;
        continue;
      }
      Entity e;
      e.text = detail::join(sentence, i, i + hit->phrase.size());
      e.type = hit->type;
      if (detail::cue_before(sentence, i, negators, patterns.window)) {
        e.polarity = Polarity::absent;
      } else if (detail::cue_before(sentence, i, hedges, patterns.window)) {
        e.polarity = Polarity::uncertain;
      }
      graph.entities.insert(e);
      (e.type == EntityType::anatomy ? anatomy : observations).push_back(e);
      i += hit->phrase.size();
    }
    for (const auto& obs : observations) {
      for (const auto& anat : anatomy) graph.relations.insert(Relation{obs, anat, RelationType::located_at});
    }
  }
  return graph;
}

namespace {

template <typename T>
double set_f1(const std::set<T>& cand, const std::set<T>& ref) {
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;
  std::size_t overlap = 0;
  for (const auto& x : cand) overlap += ref.count(x);
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

}  // namespace

double radgraph_f1(const EntityGraph& candidate, const EntityGraph& reference) {
  return 0.5 * (set_f1(candidate.entities, reference.entities) + set_f1(candidate.relations, reference.relations));
}

}  // namespace cxrl::metrics
