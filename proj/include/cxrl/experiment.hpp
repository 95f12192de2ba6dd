#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cxrl/evalsuite.hpp"
#include "cxrl/grpo.hpp"
#include "cxrl/judge.hpp"
#include "cxrl/metrics.hpp"
#include "cxrl/reward.hpp"

namespace cxrl::experiment {

// "mock" or an http(s) base URL.
struct BackendSpec {
  std::string backend = "mock";
  int timeout_ms = 10'000;
  int max_retries = 3;
  int max_in_flight = 4;
  std::optional<std::string> bearer_token;
  std::string instruction;

  bool is_mock() const { return backend == "mock"; }
  judge::ServiceEndpoint endpoint() const;
};

struct JudgeSpec : BackendSpec {
  // Lexicon file for the mock judge; the default label set when empty.
  std::optional<std::string> lexicon;
  // Extra single-word findings the mock judge recognizes on top of its
  // lexicon, with the first label's negators.
  std::vector<std::string> extra_findings;
};

struct MetricSpec {
  std::optional<std::string> lexicon;
  std::optional<std::string> patterns;
  BackendSpec embedder;
  std::size_t embedding_dimension = 64;
  std::uint64_t embedding_seed = 17;
};

struct StageSpec {
  grpo::TrainerConfig trainer;
  reward::RewardConfig reward;
  std::size_t steps = 500;
  // Ask the judge for every response even when it carries no reward weight,
  // so the log tracks errors.
  bool track_judge_errors = true;
};

struct EvalSpec {
  bool use_prior = false;
  int max_tokens = 256;
  std::size_t bootstrap_resamples = 1000;
  unsigned threads = 1;
  evalsuite::SectionScope section = evalsuite::SectionScope::full;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::optional<std::string> corpus;
  std::string output_dir = "run";
  grpo::GrammarTaskConfig task;
  grpo::SftConfig sft;
  StageSpec rl1;
  StageSpec rl2;
  JudgeSpec judge;
  MetricSpec metrics;
  metrics::CompositeCoefficients coefficients;
  EvalSpec eval;

  ExperimentConfig();

  // Master seed: task, SFT and both stages get streams derived from it.
  void apply_seed(std::uint64_t master);

  static ExperimentConfig from_json(const nlohmann::ordered_json& j);
  static ExperimentConfig from_file(const std::string& path);
  nlohmann::ordered_json to_json() const;
  // FNV-1a of the compact JSON, hex.
  std::string hash() const;
};

// Shared scoring services built from a config.
struct Services {
  std::shared_ptr<metrics::MetricSuite> suite;
  std::shared_ptr<judge::Judge> judge;
};

metrics::Lexicon judge_lexicon(const JudgeSpec& spec);
Services make_services(const ExperimentConfig& config);

// The grammar task with its oracle computed under the rl1 reward.
grpo::GrammarTask make_task(const ExperimentConfig& config, const Services& services);

// Checkpoint config hash for a task.
std::string task_hash(const grpo::GrammarTask& task);

enum class TrainStage { sft, rl1, rl2 };
TrainStage parse_train_stage(const std::string& text);  // std::invalid_argument
std::string to_string(TrainStage stage);

struct StageResult {
  grpo::ToyPolicy policy;
  std::vector<nlohmann::ordered_json> log;  // one JSON object per step
  double final_mean_reward = 0.0;
};

// Runs one stage from `init` (a fresh policy when absent). rl2 freezes `init`
// as its KL reference and needs it.
StageResult run_stage(const ExperimentConfig& config, TrainStage stage, const grpo::GrammarTask& task,
                      const Services& services, const std::optional<grpo::ToyPolicy>& init);

void write_jsonl(const std::string& path, const std::vector<nlohmann::ordered_json>& rows);
void write_text(const std::string& path, const std::string& text);

}  // namespace cxrl::experiment
