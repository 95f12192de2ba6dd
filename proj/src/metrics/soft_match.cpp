#include <algorithm>
#include <limits>
#include <map>
#include <stdexcept>

#include "cxrl/metrics.hpp"

namespace cxrl::metrics {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::runtime_error("embedder returned vectors of differing dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double mean_best_match(const std::vector<const std::vector<double>*>& from,
                       const std::vector<const std::vector<double>*>& to) {
  double total = 0.0;
  for (const auto* f : from) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto* t : to) best = std::max(best, dot(*f, *t));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

SoftScore soft_token_f1(std::string_view candidate, std::string_view reference, Embedder& embedder) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return {};

  // Embed each distinct token once.
  std::map<std::string, std::size_t> index;
  std::vector<std::string> unique;
  for (const auto* side : {&cand, &ref}) {
    for (const auto& t : *side) {
      if (index.emplace(t, unique.size()).second) unique.push_back(t);
    }
  }
  const auto vectors = embedder.embed(unique);
  if (vectors.size() != unique.size()) throw std::runtime_error("embedder returned the wrong number of vectors");

  auto lookup = [&](const std::vector<std::string>& toks) {
    std::vector<const std::vector<double>*> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(&vectors[index.at(t)]);
    return out;
  };
  const auto cv = lookup(cand);
  const auto rv = lookup(ref);

  SoftScore s;
  s.precision = std::clamp(mean_best_match(cv, rv), 0.0, 1.0);
  s.recall = std::clamp(mean_best_match(rv, cv), 0.0, 1.0);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace cxrl::metrics
