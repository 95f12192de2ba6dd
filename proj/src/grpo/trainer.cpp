#include <atomic>
#include <exception>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "cxrl/grpo.hpp"

namespace cxrl::grpo {

RlTrainer::RlTrainer(const GrammarTask& task, const reward::RewardScorer& scorer, TrainerConfig config,
                     const ReferencePolicy* reference)
    : task_(task), scorer_(scorer), config_(config), reference_(reference) {
  config_.validate();
  if (config_.kl_coefficient > 0.0 && reference_ == nullptr) {
    throw std::invalid_argument("RlTrainer: kl_coefficient > 0 requires a reference policy");
  }
}

std::vector<RolloutGroup> RlTrainer::collect(const ToyPolicy& policy, std::size_t step_index) const {
  const std::size_t n_prompts = task_.prompts.size();
  std::vector<std::size_t> chosen(n_prompts);
  for (std::size_t i = 0; i < n_prompts; ++i) chosen[i] = i;
  if (config_.prompts_per_batch < n_prompts) {
    Rng pick(derive_seed(config_.seed, {step_index, 0x9b}));
    pick.shuffle(chosen);
    chosen.resize(config_.prompts_per_batch);
  }

  std::vector<RolloutGroup> groups(chosen.size());
  auto fill = [&](std::size_t gi) {
    const std::size_t p = chosen[gi];
    const auto& cases = task_.prompts[p].cases;
    Rng case_rng(derive_seed(config_.seed, {step_index, p, 1}));
    const auto& reference = cases[case_rng.below(cases.size())].reference;

    RolloutGroup g = rollout(policy, p, config_.group_size, config_.temperature,
                             derive_seed(config_.seed, {step_index, p, 2}));
    g.query_id = task_.prompts[p].key + "@" + std::to_string(step_index);
    g.reference = reference;
    for (const auto& resp : g.responses) {
      const auto scored = scorer_.score(policy.decode(resp), reference);
      g.rewards.push_back(scored.reward);
      g.judge_errors.push_back(scored.metrics.judge_errors);
    }
    groups[gi] = std::move(g);
  };

  const unsigned threads = std::min<unsigned>(config_.threads, static_cast<unsigned>(groups.size()));
  if (threads <= 1) {
    for (std::size_t gi = 0; gi < groups.size(); ++gi) fill(gi);
    return groups;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t gi = next++; gi < groups.size(); gi = next++) {
          try {
            fill(gi);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return groups;
}

LogEntry RlTrainer::step(ToyPolicy& policy) {
  const auto groups = collect(policy, step_);
  const StepStats stats = grpo_step(groups, policy, reference_, config_);
  LogEntry e;
  e.step = step_++;
  e.mean_reward = stats.mean_reward;
  e.clip_frac = stats.clip_frac;
  e.mean_kl = stats.mean_kl;
  e.entropy = stats.entropy;
  e.mean_judge_errors = stats.mean_judge_errors.value_or(0.0);
  return e;
}

}  // namespace cxrl::grpo
