#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "cxrl/errors.hpp"
#include "cxrl/grpo.hpp"

namespace cxrl::grpo {

using ojson = nlohmann::ordered_json;

std::vector<double> normalize_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("normalize_advantages: a group needs at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);

  std::vector<double> out(rewards.size(), 0.0);
  if (sd < 1e-12) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

double clipped_surrogate(double ratio, double advantage, double clip_low, double clip_high) {
  const double clipped = std::clamp(ratio, 1.0 - clip_low, 1.0 + clip_high);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_term(double logp_new, double logp_ref) {
  const double d = logp_ref - logp_new;
  return std::exp(d) - d - 1.0;
}

void TrainerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainerConfig: learning_rate must be positive");
  if (!(clip_low > 0.0) || clip_high < clip_low) {
    throw std::invalid_argument("TrainerConfig: need clip_high >= clip_low > 0");
  }
  if (kl_coefficient < 0.0) throw std::invalid_argument("TrainerConfig: kl_coefficient must be non-negative");
  if (group_size < 2) throw std::invalid_argument("TrainerConfig: group_size must be >= 2");
  if (prompts_per_batch == 0) throw std::invalid_argument("TrainerConfig: prompts_per_batch must be positive");
  if (epochs == 0) throw std::invalid_argument("TrainerConfig: epochs must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("TrainerConfig: rollout temperature must be positive");
}

TrainerConfig TrainerConfig::from_json(const ojson& j) {
  TrainerConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.prompts_per_batch = j.value("prompts_per_batch", c.prompts_per_batch);
    c.group_size = j.value("group_size", c.group_size);
    c.clip_low = j.value("clip_low", c.clip_low);
    c.clip_high = j.value("clip_high", c.clip_high);
    c.kl_coefficient = j.value("kl_coefficient", c.kl_coefficient);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.temperature = j.value("temperature", c.temperature);
    c.threads = j.value("threads", c.threads);
    const std::string agg = j.value("aggregation", std::string("token_mean"));
    if (agg == "token_mean") {
      c.aggregation = LossAggregation::token_mean;
    } else if (agg == "sequence_mean") {
      c.aggregation = LossAggregation::sequence_mean;
    } else {
      throw DataError("unknown loss aggregation '" + agg + "'");
    }
  } catch (const ojson::exception& e) {
    throw DataError(std::string("bad trainer config: ") + e.what());
  }
  return c;
}

ojson TrainerConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"prompts_per_batch", prompts_per_batch},
          {"group_size", group_size},
          {"clip_low", clip_low},
          {"clip_high", clip_high},
          {"kl_coefficient", kl_coefficient},
          {"epochs", epochs},
          {"seed", seed},
          {"temperature", temperature},
          {"aggregation", aggregation == LossAggregation::token_mean ? "token_mean" : "sequence_mean"},
          {"threads", threads}};
}

LossGradient grpo_loss(const std::vector<RolloutGroup>& groups, const ToyPolicy& policy,
                       const ReferencePolicy* reference, const TrainerConfig& config) {
  const bool use_kl = config.kl_coefficient > 0.0;
  if (use_kl && reference == nullptr) {
    throw std::invalid_argument("grpo_loss: kl_coefficient > 0 requires a reference policy");
  }

  LossGradient out;
  out.gradient.assign(policy.logits().size(), 0.0);

  std::size_t total_tokens = 0;
  std::size_t total_sequences = 0;
  double reward_sum = 0.0;
  double judge_sum = 0.0;
  std::size_t judge_count = 0;
  for (const auto& g : groups) {
    if (g.responses.size() < 2 || g.rewards.size() != g.responses.size() || g.old_logprobs.size() != g.responses.size()) {
      throw std::invalid_argument("grpo_loss: group " + g.query_id + " is malformed or missing rewards");
    }
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      if (g.old_logprobs[i].size() != g.responses[i].size()) {
        throw std::invalid_argument("grpo_loss: old_logprobs do not match response tokens");
      }
      total_tokens += g.responses[i].size();
      reward_sum += g.rewards[i];
    }
    total_sequences += g.responses.size();
    for (const auto& e : g.judge_errors) {
      if (e) {
        judge_sum += *e;
        ++judge_count;
      }
    }
  }
  if (total_tokens == 0) return out;

  const std::size_t vocab = policy.vocab_size();
  double clipped_tokens = 0.0;
  double kl_sum = 0.0;
  double entropy_sum = 0.0;

  for (const auto& g : groups) {
    const auto adv = normalize_advantages(g.rewards);
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      const auto& tokens = g.responses[i];
      const double weight = config.aggregation == LossAggregation::token_mean
                                ? 1.0 / static_cast<double>(total_tokens)
                                : 1.0 / (static_cast<double>(total_sequences) * static_cast<double>(tokens.size()));
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        const std::size_t s = policy.state(g.prompt, t);
        const auto lp = policy.log_probs(s, g.temperature);
        const auto a = static_cast<std::size_t>(tokens[t]);
        const double lp_new = lp[a];
        const double ratio = std::exp(lp_new - g.old_logprobs[i][t]);

        const double surrogate = clipped_surrogate(ratio, adv[i], config.clip_low, config.clip_high);
        const double clipped_ratio = std::clamp(ratio, 1.0 - config.clip_low, 1.0 + config.clip_high);
        // The gradient flows through the unclipped branch only when it is the minimum.
        const bool unclipped_active = ratio * adv[i] <= clipped_ratio * adv[i];
        if (!unclipped_active) clipped_tokens += 1.0;

        double dloss_dlp = unclipped_active ? -ratio * adv[i] : 0.0;
        double token_loss = -surrogate;
        if (use_kl) {
          const double lp_ref = reference->token_logprob(s, tokens[t], g.temperature);
          const double k3 = kl_term(lp_new, lp_ref);
          kl_sum += k3;
          token_loss += config.kl_coefficient * k3;
          dloss_dlp += config.kl_coefficient * (1.0 - std::exp(lp_ref - lp_new));
        }
        out.loss += weight * token_loss;

        double h = 0.0;
        for (double l : lp) h -= std::exp(l) * l;
        entropy_sum += h;

        const double scale = weight * dloss_dlp / g.temperature;
        if (scale != 0.0) {
          double* grad_row = out.gradient.data() + s * vocab;
          for (std::size_t b = 0; b < vocab; ++b) grad_row[b] -= scale * std::exp(lp[b]);
          grad_row[a] += scale;
        }
      }
    }
  }

  const double n_tok = static_cast<double>(total_tokens);
  out.stats.loss = out.loss;
  out.stats.tokens = total_tokens;
  out.stats.mean_reward = reward_sum / static_cast<double>(total_sequences);
  out.stats.clip_frac = clipped_tokens / n_tok;
  out.stats.mean_kl = use_kl ? kl_sum / n_tok : 0.0;
  out.stats.entropy = entropy_sum / n_tok;
  if (judge_count > 0) out.stats.mean_judge_errors = judge_sum / static_cast<double>(judge_count);
  return out;
}

StepStats grpo_step(const std::vector<RolloutGroup>& groups, ToyPolicy& policy, const ReferencePolicy* reference,
                    const TrainerConfig& config) {
  config.validate();
  StepStats first;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const LossGradient lg = grpo_loss(groups, policy, reference, config);
    if (!std::isfinite(lg.loss)) throw std::runtime_error("grpo_step: non-finite loss");
    if (epoch == 0) first = lg.stats;
    auto& z = policy.logits();
    for (std::size_t k = 0; k < z.size(); ++k) z[k] -= config.learning_rate * lg.gradient[k];
  }
  return first;
}

RolloutGroup rollout(const ToyPolicy& policy, std::size_t prompt, std::size_t group_size, double temperature,
                     std::uint64_t seed) {
  if (group_size < 2) throw std::invalid_argument("rollout: group size must be >= 2");
  RolloutGroup g;
  g.prompt = prompt;
  g.query_id = "prompt-" + std::to_string(prompt);
  g.temperature = temperature;
  Rng rng(seed);
  for (std::size_t i = 0; i < group_size; ++i) {
    auto s = policy.sample(prompt, temperature, rng);
    g.responses.push_back(std::move(s.tokens));
    g.old_logprobs.push_back(std::move(s.logprobs));
  }
  return g;
}

LossGradient sft_loss(const std::vector<SftExample>& batch, const ToyPolicy& policy) {
  LossGradient out;
  out.gradient.assign(policy.logits().size(), 0.0);
  std::size_t total = 0;
  for (const auto& ex : batch) {
    if (ex.target.size() > policy.max_length()) throw std::invalid_argument("sft_loss: target longer than max_length");
    for (int tok : ex.target) {
      if (tok < 0 || static_cast<std::size_t>(tok) >= policy.vocab_size()) {
        throw std::invalid_argument("sft_loss: out-of-vocabulary target token");
      }
    }
    total += ex.target.size();
  }
  if (total == 0) return out;

  const double weight = 1.0 / static_cast<double>(total);
  const std::size_t vocab = policy.vocab_size();
  double entropy_sum = 0.0;
  for (const auto& ex : batch) {
    for (std::size_t t = 0; t < ex.target.size(); ++t) {
      const std::size_t s = policy.state(ex.prompt, t);
      const auto lp = policy.log_probs(s);
      const auto a = static_cast<std::size_t>(ex.target[t]);
      out.loss -= weight * lp[a];
      double* grad_row = out.gradient.data() + s * vocab;
      for (std::size_t b = 0; b < vocab; ++b) {
        const double p = std::exp(lp[b]);
        grad_row[b] += weight * p;
        entropy_sum -= p * lp[b];
      }
      grad_row[a] -= weight;
    }
  }
  out.stats.loss = out.loss;
  out.stats.tokens = total;
  out.stats.entropy = entropy_sum / static_cast<double>(total);
  return out;
}

void sft_step(const std::vector<SftExample>& batch, ToyPolicy& policy, double learning_rate) {
  if (batch.empty()) return;
  const LossGradient lg = sft_loss(batch, policy);
  auto& z = policy.logits();
  for (std::size_t k = 0; k < z.size(); ++k) z[k] -= learning_rate * lg.gradient[k];
}

}  // namespace cxrl::grpo
