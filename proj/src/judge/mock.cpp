#include <algorithm>
#include <cmath>
#include <iterator>

#include "cxrl/judge.hpp"
#include "cxrl/util/hash.hpp"
#include "cxrl/util/rng.hpp"

namespace cxrl::judge {

MockJudge::MockJudge(metrics::Lexicon lexicon) : lexicon_(std::move(lexicon)) {}

JudgeVerdict MockJudge::count_errors(const std::string& candidate, const std::string& reference) {
  const auto cand = metrics::affirmed_labels(metrics::label_pathologies(candidate, lexicon_), lexicon_);
  const auto ref = metrics::affirmed_labels(metrics::label_pathologies(reference, lexicon_), lexicon_);
  std::vector<std::string> diff;
  std::set_symmetric_difference(cand.begin(), cand.end(), ref.begin(), ref.end(), std::back_inserter(diff));

  JudgeVerdict v;
  v.error_count = static_cast<int>(diff.size());
  if (!diff.empty()) {
    std::string r = "label disagreement:";
    for (const auto& d : diff) r += " " + d;
    v.rationale = std::move(r);
  }
  return v;
}

TemporalCategory MockJudge::classify_change(const std::string& current, const std::string& prior) {
  const auto now = metrics::affirmed_labels(metrics::label_pathologies(current, lexicon_), lexicon_);
  const auto before = metrics::affirmed_labels(metrics::label_pathologies(prior, lexicon_), lexicon_);
  if (now == before) return TemporalCategory::no_change;
  const bool added = !std::includes(before.begin(), before.end(), now.begin(), now.end());
  const bool removed = !std::includes(now.begin(), now.end(), before.begin(), before.end());
  if (added && removed) return TemporalCategory::new_development;
  if (added) return before.empty() ? TemporalCategory::new_development : TemporalCategory::progression;
  return TemporalCategory::regression;
}

MockEmbedder::MockEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw std::invalid_argument("MockEmbedder: dimension must be positive");
}

std::vector<double> MockEmbedder::vector_for(std::string_view token) const {
  Rng rng(derive_seed(seed_, {fnv1a64(token)}));
  std::vector<double> v(dimension_);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

std::vector<std::vector<double>> MockEmbedder::embed(const std::vector<std::string>& tokens) {
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vector_for(t));
  return out;
}

}  // namespace cxrl::judge
