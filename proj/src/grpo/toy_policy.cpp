#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cxrl/grpo.hpp"

namespace cxrl::grpo {

ToyPolicy::ToyPolicy(std::vector<std::string> vocabulary, std::size_t num_prompts, std::size_t max_length)
    : vocabulary_(std::move(vocabulary)), num_prompts_(num_prompts), max_length_(max_length) {
  if (vocabulary_.size() < 2) throw std::invalid_argument("ToyPolicy: vocabulary needs EOS plus at least one word");
  if (num_prompts_ == 0 || max_length_ == 0) throw std::invalid_argument("ToyPolicy: empty state space");
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (!index_.emplace(vocabulary_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("ToyPolicy: duplicate vocabulary entry '" + vocabulary_[i] + "'");
    }
  }
  logits_.assign(num_states() * vocab_size(), 0.0);
}

std::size_t ToyPolicy::state(std::size_t prompt, std::size_t position) const {
  if (prompt >= num_prompts_ || position >= max_length_) throw std::out_of_range("ToyPolicy::state");
  return prompt * max_length_ + position;
}

std::span<const double> ToyPolicy::row(std::size_t state) const {
  return {logits_.data() + state * vocab_size(), vocab_size()};
}

std::vector<double> ToyPolicy::log_probs(std::size_t state, double temperature) const {
  const auto z = row(state);
  std::vector<double> out(z.size());
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = z[i] / temperature;
    hi = std::max(hi, out[i]);
  }
  double sum = 0.0;
  for (double v : out) sum += std::exp(v - hi);
  const double log_norm = hi + std::log(sum);
  for (double& v : out) v -= log_norm;
  return out;
}

double ToyPolicy::token_logprob(std::size_t state, int token, double temperature) const {
  return log_probs(state, temperature)[static_cast<std::size_t>(token)];
}

double ToyPolicy::sequence_logprob(std::size_t prompt, std::span<const int> tokens, double temperature) const {
  double total = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) total += token_logprob(state(prompt, t), tokens[t], temperature);
  return total;
}

ToyPolicy::Sample ToyPolicy::sample(std::size_t prompt, double temperature, Rng& rng) const {
  if (!(temperature > 0.0)) throw std::invalid_argument("ToyPolicy::sample: temperature must be positive");
  Sample s;
  std::vector<double> probs(vocab_size());
  for (std::size_t t = 0; t < max_length_; ++t) {
    const auto lp = log_probs(state(prompt, t), temperature);
    for (std::size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
    const int tok = static_cast<int>(rng.categorical(probs));
    s.tokens.push_back(tok);
    s.logprobs.push_back(lp[static_cast<std::size_t>(tok)]);
    if (tok == kEos) break;
  }
  return s;
}

std::vector<int> ToyPolicy::greedy(std::size_t prompt) const {
  std::vector<int> out;
  for (std::size_t t = 0; t < max_length_; ++t) {
    const auto z = row(state(prompt, t));
    // First maximum wins ties.
    const int tok = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    out.push_back(tok);
    if (tok == kEos) break;
  }
  return out;
}

std::string ToyPolicy::decode(std::span<const int> tokens) const {
  std::string out;
  for (int t : tokens) {
    if (t == kEos) break;
    if (!out.empty()) out += ' ';
    out += vocabulary_.at(static_cast<std::size_t>(t));
  }
  return out;
}

std::vector<int> ToyPolicy::encode(const std::vector<std::string>& words) const {
  if (words.size() > max_length_) throw std::invalid_argument("ToyPolicy::encode: sequence longer than max_length");
  std::vector<int> out;
  for (const auto& w : words) {
    auto id = token_id(w);
    if (!id || *id == kEos) throw std::invalid_argument("ToyPolicy::encode: out-of-vocabulary token '" + w + "'");
    out.push_back(*id);
  }
  if (out.size() < max_length_) out.push_back(kEos);
  return out;
}

std::optional<int> ToyPolicy::token_id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double ReferencePolicy::token_logprob(std::size_t state, int token, double temperature) const {
  ++reads_;
  return policy_.token_logprob(state, token, temperature);
}

}  // namespace cxrl::grpo
