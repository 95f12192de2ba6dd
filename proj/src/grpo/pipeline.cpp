#include <cctype>
#include <cmath>
#include <nlohmann/json.hpp>

#include "cxrl/errors.hpp"
#include "cxrl/grpo.hpp"
#include "cxrl/util/hash.hpp"

namespace cxrl::grpo {

using ojson = nlohmann::ordered_json;

ojson LogEntry::to_json() const {
  return {{"step", step},         {"mean_reward", mean_reward}, {"clip_frac", clip_frac},
          {"mean_kl", mean_kl},   {"entropy", entropy},         {"mean_judge_errors", mean_judge_errors}};
}

SftConfig SftConfig::from_json(const ojson& j) {
  SftConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.examples_per_prompt = j.value("examples_per_prompt", c.examples_per_prompt);
    c.noise = j.value("noise", c.noise);
    c.seed = j.value("seed", c.seed);
  } catch (const ojson::exception& e) {
    throw DataError(std::string("bad sft config: ") + e.what());
  }
  return c;
}

ojson SftConfig::to_json() const {
  return {{"steps", steps},
          {"learning_rate", learning_rate},
          {"examples_per_prompt", examples_per_prompt},
          {"noise", noise},
          {"seed", seed}};
}

std::vector<double> run_sft(ToyPolicy& policy, const GrammarTask& task, const SftConfig& config) {
  Rng rng(derive_seed(config.seed, {0x5f7}));
  std::vector<double> losses;
  losses.reserve(config.steps);
  for (std::size_t s = 0; s < config.steps; ++s) {
    const auto batch = make_sft_batch(task, policy, config.examples_per_prompt, config.noise, rng);
    losses.push_back(sft_loss(batch, policy).loss);
    sft_step(batch, policy, config.learning_rate);
  }
  return losses;
}

double evaluate_policy(const ToyPolicy& policy, const GrammarTask& task, const reward::RewardScorer& scorer,
                       std::size_t samples, std::uint64_t seed) {
  double total = 0.0;
  for (std::size_t p = 0; p < task.prompts.size(); ++p) {
    Rng rng(derive_seed(seed, {p, 0xe7a1}));
    const auto& cases = task.prompts[p].cases;
    double prompt_total = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
      const std::string text = policy.decode(policy.sample(p, 1.0, rng).tokens);
      for (const auto& c : cases) prompt_total += scorer.score(text, c.reference).reward;
    }
    total += prompt_total / static_cast<double>(samples * cases.size());
  }
  return total / static_cast<double>(task.prompts.size());
}

std::size_t ToyPolicyGenerator::prompt_index(const std::string& text) const {
  for (std::size_t at = text.find("case-"); at != std::string::npos; at = text.find("case-", at + 1)) {
    std::size_t i = at + 5;
    std::size_t value = 0;
    bool any = false;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      value = value * 10 + static_cast<std::size_t>(text[i] - '0');
      any = true;
      ++i;
    }
    if (any && value < policy_.num_prompts()) return value;
  }
  return static_cast<std::size_t>(fnv1a64(text) % policy_.num_prompts());
}

judge::GenerationResult ToyPolicyGenerator::generate(const corpus::PromptInstance& prompt,
                                                     const judge::GenerationOptions& options) {
  const std::size_t p = prompt_index(prompt.text);
  std::vector<int> tokens;
  if (options.temperature == 0.0) {
    tokens = policy_.greedy(p);
  } else {
    Rng rng(options.seed.value_or(0));
    tokens = policy_.sample(p, options.temperature, rng).tokens;
  }
  const bool hit_length = tokens.size() == policy_.max_length() && tokens.back() != ToyPolicy::kEos;
  auto result = judge::truncate_tokens(policy_.decode(tokens), options.max_tokens);
  result.truncated = result.truncated || hit_length;
  return result;
}

}  // namespace cxrl::grpo
