#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include <nlohmann/json_fwd.hpp>

#include "cxrl/judge.hpp"
#include "cxrl/metrics.hpp"

namespace cxrl::reward {

enum class Stage { stage1, stage2 };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view text);

struct MetricWeights {
  double bleu2 = 0.0;
  double soft_f1 = 0.370;
  double semb = 0.253;
  double radgraph_f1 = 0.377;
};

struct RewardConfig {
  MetricWeights metric_weights;
  double judge_weight = 0.0;
  double kl_coefficient = 0.0;
  Stage stage = Stage::stage1;

  // {"stage": "stage1"|"stage2", "metric_weights": {...}, "judge_weight": x,
  // "kl_coefficient": x}. Stage defaults first, then explicit fields.
  static RewardConfig from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;
};

// Stage 1: composite weights only, no judge, no KL.
// Stage 2: same weights, judge weight 0.5, KL coefficient 0.03.
RewardConfig schedule(Stage stage);

// 1 / (errors + 1).
double judge_reward(int error_count);

// Weighted metric sum plus the judge term. KL is not part of the scalar.
double total_reward(const metrics::MetricVector& mv, const RewardConfig& config);

// Thread-safe (candidate, reference) -> verdict cache.
class JudgeCache {
 public:
  std::optional<int> find(const std::string& candidate, const std::string& reference) const;
  void store(const std::string& candidate, const std::string& reference, int error_count);
  std::size_t size() const;

 private:
  static std::string key(const std::string& candidate, const std::string& reference);

  mutable std::mutex mu_;
  std::unordered_map<std::string, int> entries_;
};

struct ScoredResponse {
  metrics::MetricVector metrics;
  double reward = 0.0;
};

// Scores one response against its reference. The judge is consulted when the
// config weights it or when `always_judge` is set (for error tracking).
class RewardScorer {
 public:
  RewardScorer(std::shared_ptr<const metrics::MetricSuite> suite, std::shared_ptr<judge::Judge> judge,
               RewardConfig config, bool always_judge = false);

  ScoredResponse score(const std::string& candidate, const std::string& reference) const;

  const RewardConfig& config() const { return config_; }
  const metrics::MetricSuite& suite() const { return *suite_; }
  std::size_t judge_calls() const { return judge_calls_.load(); }
  const JudgeCache& cache() const { return *cache_; }

 private:
  std::shared_ptr<const metrics::MetricSuite> suite_;
  std::shared_ptr<judge::Judge> judge_;
  RewardConfig config_;
  bool always_judge_;
  std::shared_ptr<JudgeCache> cache_;
  mutable std::atomic<std::size_t> judge_calls_{0};
  // Metric vectors are cached too; the suite is a pure function.
  mutable std::mutex metric_mu_;
  mutable std::unordered_map<std::string, metrics::MetricVector> metric_cache_;
};

}  // namespace cxrl::reward
