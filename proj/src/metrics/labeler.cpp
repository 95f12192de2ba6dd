#include <cmath>
#include <stdexcept>

#include "cxrl/metrics.hpp"
#include "phrase.hpp"

namespace cxrl::metrics {

PathologyLabels label_pathologies(std::string_view report, const Lexicon& lexicon) {
  if (lexicon.labels.empty()) throw std::invalid_argument("label_pathologies: empty lexicon");

  const auto sentences = split_sentences(report);
  PathologyLabels out;
  out.indicators.assign(lexicon.size(), 0);

  for (std::size_t li = 0; li < lexicon.labels.size(); ++li) {
    const auto triggers = detail::to_phrases(lexicon.labels[li].triggers);
    const auto negators = detail::to_phrases(lexicon.labels[li].negators);
    for (const auto& sentence : sentences) {
      for (std::size_t i = 0; i < sentence.size() && out.indicators[li] == 0; ++i) {
        for (const auto& trig : triggers) {
          if (detail::matches_at(sentence, i, trig) &&
              !detail::cue_before(sentence, i, negators, lexicon.negation_window)) {
            out.indicators[li] = 1;
            break;
          }
        }
      }
      if (out.indicators[li] == 1) break;
    }
  }
  return out;
}

std::set<std::string> affirmed_labels(const PathologyLabels& labels, const Lexicon& lexicon) {
  if (labels.indicators.size() != lexicon.size()) throw std::invalid_argument("label vector does not match lexicon");
  std::set<std::string> out;
  for (std::size_t i = 0; i < labels.indicators.size(); ++i) {
    if (labels.indicators[i] != 0) out.insert(lexicon.labels[i].name);
  }
  return out;
}

double semb_score(const PathologyLabels& candidate, const PathologyLabels& reference) {
  const auto& a = candidate.indicators;
  const auto& b = reference.indicators;
  if (a.size() != b.size()) {
    throw std::invalid_argument("semb_score: label vectors differ in length (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return aa == 0.0 && bb == 0.0 ? 1.0 : 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

}  // namespace cxrl::metrics
