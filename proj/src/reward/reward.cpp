#include "cxrl/reward.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

#include "cxrl/errors.hpp"
#include "cxrl/util/hash.hpp"

namespace cxrl::reward {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Stage s) { return s == Stage::stage1 ? "stage1" : "stage2"; }

Stage parse_stage(std::string_view text) {
  if (text == "stage1") return Stage::stage1;
  if (text == "stage2") return Stage::stage2;
  throw DataError("unknown reward stage '" + std::string(text) + "'");
}

RewardConfig schedule(Stage stage) {
  RewardConfig c;
  c.stage = stage;
  if (stage == Stage::stage2) {
    c.judge_weight = 0.5;
    c.kl_coefficient = 0.03;
  }
  return c;
}

RewardConfig RewardConfig::from_json(const ojson& j) {
  try {
    RewardConfig c = schedule(parse_stage(j.value("stage", std::string("stage1"))));
    if (auto w = j.find("metric_weights"); w != j.end()) {
      c.metric_weights.bleu2 = w->value("bleu2", c.metric_weights.bleu2);
      c.metric_weights.soft_f1 = w->value("soft_f1", c.metric_weights.soft_f1);
      c.metric_weights.semb = w->value("semb", c.metric_weights.semb);
      c.metric_weights.radgraph_f1 = w->value("radgraph_f1", c.metric_weights.radgraph_f1);
    }
    c.judge_weight = j.value("judge_weight", c.judge_weight);
    c.kl_coefficient = j.value("kl_coefficient", c.kl_coefficient);
    if (c.kl_coefficient < 0.0) throw DataError("kl_coefficient must be non-negative");
    return c;
  } catch (const ojson::exception& e) {
    throw DataError(std::string("bad reward config: ") + e.what());
  }
}

ojson RewardConfig::to_json() const {
  return {{"stage", std::string(to_string(stage))},
          {"metric_weights",
           {{"bleu2", metric_weights.bleu2},
            {"soft_f1", metric_weights.soft_f1},
            {"semb", metric_weights.semb},
            {"radgraph_f1", metric_weights.radgraph_f1}}},
          {"judge_weight", judge_weight},
          {"kl_coefficient", kl_coefficient}};
}

double judge_reward(int error_count) {
  if (error_count < 0) throw std::invalid_argument("judge_reward: error count must be >= 0");
  return 1.0 / (static_cast<double>(error_count) + 1.0);
}

double total_reward(const metrics::MetricVector& mv, const RewardConfig& c) {
  const auto& w = c.metric_weights;
  double r = w.bleu2 * mv.bleu2 + w.soft_f1 * mv.soft_f1 + w.semb * mv.semb + w.radgraph_f1 * mv.radgraph_f1;
  if (c.judge_weight != 0.0) {
    if (!mv.judge_errors) throw std::invalid_argument("total_reward: judge weight is set but judge_errors is missing");
    r += c.judge_weight * judge_reward(*mv.judge_errors);
  }
  return r;
}

std::string JudgeCache::key(const std::string& candidate, const std::string& reference) {
  // Length-prefixed so ("ab","c") and ("a","bc") differ.
  return std::to_string(candidate.size()) + ':' + candidate + reference;
}

std::optional<int> JudgeCache::find(const std::string& candidate, const std::string& reference) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key(candidate, reference));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void JudgeCache::store(const std::string& candidate, const std::string& reference, int error_count) {
  std::lock_guard lock(mu_);
  entries_[key(candidate, reference)] = error_count;
}

std::size_t JudgeCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

RewardScorer::RewardScorer(std::shared_ptr<const metrics::MetricSuite> suite, std::shared_ptr<judge::Judge> judge,
                           RewardConfig config, bool always_judge)
    : suite_(std::move(suite)),
      judge_(std::move(judge)),
      config_(config),
      always_judge_(always_judge),
      cache_(std::make_shared<JudgeCache>()) {
  if (!suite_) throw std::invalid_argument("RewardScorer: metric suite is required");
  if (config_.judge_weight != 0.0 && !judge_) {
    throw std::invalid_argument("RewardScorer: judge weight is set but no judge backend was given");
  }
}

ScoredResponse RewardScorer::score(const std::string& candidate, const std::string& reference) const {
  ScoredResponse out;
  const std::string mkey = std::to_string(candidate.size()) + ':' + candidate + reference;
  bool cached = false;
  {
    std::lock_guard lock(metric_mu_);
    if (auto it = metric_cache_.find(mkey); it != metric_cache_.end()) {
      out.metrics = it->second;
      cached = true;
    }
  }
  if (!cached) {
    out.metrics = suite_->score(candidate, reference);
    std::lock_guard lock(metric_mu_);
    metric_cache_.emplace(mkey, out.metrics);
  }

  if (judge_ && (always_judge_ || config_.judge_weight != 0.0)) {
    if (auto hit = cache_->find(candidate, reference)) {
      out.metrics.judge_errors = *hit;
    } else {
      ++judge_calls_;
      const int errors = judge::count_errors(candidate, reference, *judge_).error_count;
      cache_->store(candidate, reference, errors);
      out.metrics.judge_errors = errors;
    }
  }
  out.reward = total_reward(out.metrics, config_);
  return out;
}

}  // namespace cxrl::reward
