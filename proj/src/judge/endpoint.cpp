#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cxrl/errors.hpp"
#include "cxrl/judge.hpp"

namespace cxrl::judge {

std::string_view to_string(TemporalCategory c) {
  switch (c) {
    case TemporalCategory::first_study: return "first_study";
    case TemporalCategory::new_development: return "new_development";
    case TemporalCategory::no_change: return "no_change";
    case TemporalCategory::progression: return "progression";
    case TemporalCategory::regression: break;
  }
  return "regression";
}

TemporalCategory parse_temporal(std::string_view text) {
  for (auto c : all_temporal_categories()) {
    if (to_string(c) == text) return c;
  }
  throw ServiceError("unknown temporal category '" + std::string(text) + "'", true);
}

void ServiceEndpoint::validate() const {
  if (max_retries < 0) throw std::invalid_argument("ServiceEndpoint: max_retries must be >= 0");
  if (max_in_flight < 1) throw std::invalid_argument("ServiceEndpoint: max_in_flight must be >= 1");
  if (timeout.count() <= 0) throw std::invalid_argument("ServiceEndpoint: timeout must be positive");
}

InFlightGate::InFlightGate(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("InFlightGate: capacity must be >= 1");
}

void InFlightGate::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return active_ < capacity_; });
  ++active_;
  int seen = peak_.load();
  while (active_ > seen && !peak_.compare_exchange_weak(seen, active_)) {
  }
}

void InFlightGate::release() {
  {
    std::lock_guard lock(mu_);
    --active_;
  }
  cv_.notify_one();
}

JudgeVerdict count_errors(const std::string& candidate, const std::string& reference, Judge& judge) {
  if (reference.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw std::invalid_argument("count_errors: reference must be non-empty");
  }
  JudgeVerdict v = judge.count_errors(candidate, reference);
  if (v.error_count < 0) throw ServiceError("judge returned a negative error count", true);
  return v;
}

TemporalCategory label_temporal(const std::string& current_reference, const std::optional<std::string>& prior_reference,
                                Judge& judge) {
  if (!prior_reference) return TemporalCategory::first_study;
  const TemporalCategory c = judge.classify_change(current_reference, *prior_reference);
  if (c == TemporalCategory::first_study) throw ServiceError("judge returned first_study for a study with a prior", true);
  return c;
}

std::vector<std::vector<double>> embed(const std::vector<std::string>& tokens, metrics::Embedder& embedder) {
  if (tokens.empty()) throw std::invalid_argument("embed: token list must be non-empty");
  auto out = embedder.embed(tokens);
  if (out.size() != tokens.size()) throw ServiceError("embedder returned the wrong number of vectors", true);
  return out;
}

GenerationResult generate(const corpus::PromptInstance& prompt, const GenerationOptions& options, Generator& backend) {
  if (!(options.temperature >= 0.0) || !std::isfinite(options.temperature)) {
    throw std::invalid_argument("generate: temperature must be a finite value >= 0");
  }
  if (options.temperature > 0.0 && !options.seed) {
    throw std::invalid_argument("generate: sampling at temperature > 0 requires a seed");
  }
  if (options.max_tokens < 1) throw std::invalid_argument("generate: max_tokens must be >= 1");
  return backend.generate(prompt, options);
}

GenerationResult truncate_tokens(std::string_view text, int max_tokens) {
  std::size_t pos = 0;
  int count = 0;
  while (pos < text.size()) {
    std::size_t start = text.find_first_not_of(" \t\r\n", pos);
    if (start == std::string_view::npos) break;
    if (count == max_tokens) return {std::string(text.substr(0, pos)), true};
    std::size_t end = text.find_first_of(" \t\r\n", start);
    if (end == std::string_view::npos) end = text.size();
    ++count;
    pos = end;
  }
  return {std::string(text), false};
}

GenerationResult EchoGenerator::generate(const corpus::PromptInstance& prompt, const GenerationOptions& options) {
  return truncate_tokens(prompt.target, options.max_tokens);
}

}  // namespace cxrl::judge
