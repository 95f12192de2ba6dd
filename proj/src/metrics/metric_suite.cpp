#include <atomic>
#include <mutex>
#include <thread>

#include "cxrl/metrics.hpp"

namespace cxrl::metrics {

MetricSuite::MetricSuite(Lexicon lexicon, PatternSet patterns, std::shared_ptr<Embedder> embedder)
    : lexicon_(std::move(lexicon)), patterns_(std::move(patterns)), embedder_(std::move(embedder)) {}

MetricVector MetricSuite::score(std::string_view candidate, std::string_view reference) const {
  MetricVector mv;
  mv.bleu2 = bleu2(candidate, reference);
  mv.soft_f1 = soft_token_f1(candidate, reference, *embedder_).f1;
  mv.semb = semb_score(label_pathologies(candidate, lexicon_), label_pathologies(reference, lexicon_));
  mv.radgraph_f1 = radgraph_f1(extract_entities(candidate, patterns_), extract_entities(reference, patterns_));
  return mv;
}

std::vector<MetricVector> MetricSuite::score_batch(const std::vector<std::pair<std::string, std::string>>& pairs,
                                                   unsigned threads) const {
  std::vector<MetricVector> out(pairs.size());
  if (threads <= 1 || pairs.size() < 2) {
    for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = score(pairs[i].first, pairs[i].second);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < pairs.size(); i = next++) {
          try {
            out[i] = score(pairs[i].first, pairs[i].second);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace cxrl::metrics
