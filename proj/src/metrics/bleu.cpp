#include <cmath>
#include <map>

#include "cxrl/metrics.hpp"

namespace cxrl::metrics {
namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, int> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

// Clipped matches over total candidate n-grams.
std::pair<int, int> modified_precision(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                                       std::size_t n) {
  const auto cand_counts = count_ngrams(cand, n);
  const auto ref_counts = count_ngrams(ref, n);
  int matched = 0;
  int total = 0;
  for (const auto& [gram, count] : cand_counts) {
    total += count;
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matched += std::min(count, it->second);
  }
  return {matched, total};
}

}  // namespace

double bleu2(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty()) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 2; ++n) {
    auto [matched, total] = modified_precision(cand, ref, n);
    if (matched == 0 || total == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(0.5 * log_sum);
}

}  // namespace cxrl::metrics
