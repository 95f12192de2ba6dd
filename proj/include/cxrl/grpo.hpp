#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cxrl/judge.hpp"
#include "cxrl/reward.hpp"
#include "cxrl/util/rng.hpp"

namespace cxrl::grpo {

// ---------------------------------------------------------------------------
// Toy autoregressive policy

// Tabular softmax policy. The context state of a decoding step is
// (prompt, position); each state owns one row of logits over the vocabulary.
// Token 0 is the end-of-sequence marker.
class ToyPolicy {
 public:
  static constexpr int kEos = 0;

  ToyPolicy(std::vector<std::string> vocabulary, std::size_t num_prompts, std::size_t max_length);

  std::size_t vocab_size() const { return vocabulary_.size(); }
  std::size_t num_prompts() const { return num_prompts_; }
  std::size_t max_length() const { return max_length_; }
  std::size_t num_states() const { return num_prompts_ * max_length_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  std::size_t state(std::size_t prompt, std::size_t position) const;

  double logit(std::size_t state, std::size_t token) const { return logits_[state * vocab_size() + token]; }
  double& logit(std::size_t state, std::size_t token) { return logits_[state * vocab_size() + token]; }
  std::span<const double> row(std::size_t state) const;
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& logits() { return logits_; }

  // log softmax(row / temperature).
  std::vector<double> log_probs(std::size_t state, double temperature = 1.0) const;
  double token_logprob(std::size_t state, int token, double temperature = 1.0) const;
  double sequence_logprob(std::size_t prompt, std::span<const int> tokens, double temperature = 1.0) const;

  struct Sample {
    std::vector<int> tokens;
    std::vector<double> logprobs;
  };

  // Ancestral sampling until EOS or max_length.
  Sample sample(std::size_t prompt, double temperature, Rng& rng) const;
  std::vector<int> greedy(std::size_t prompt) const;

  // Space-joined words, EOS dropped.
  std::string decode(std::span<const int> tokens) const;
  // Word ids plus a trailing EOS when shorter than max_length. Throws
  // std::invalid_argument on out-of-vocabulary words.
  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::optional<int> token_id(const std::string& word) const;

  friend bool operator==(const ToyPolicy&, const ToyPolicy&) = default;

 private:
  std::vector<std::string> vocabulary_;
  std::size_t num_prompts_;
  std::size_t max_length_;
  std::vector<double> logits_;
  std::map<std::string, int> index_;
};

// Frozen policy snapshot used as the KL anchor; counts every read.
class ReferencePolicy {
 public:
  explicit ReferencePolicy(ToyPolicy snapshot) : policy_(std::move(snapshot)) {}

  double token_logprob(std::size_t state, int token, double temperature) const;
  std::size_t reads() const { return reads_.load(); }
  const ToyPolicy& policy() const { return policy_; }

 private:
  ToyPolicy policy_;
  mutable std::atomic<std::size_t> reads_{0};
};

// ---------------------------------------------------------------------------
// Objective pieces

struct RolloutGroup {
  std::string query_id;
  std::size_t prompt = 0;
  std::string reference;
  double temperature = 1.0;
  std::vector<std::vector<int>> responses;
  std::vector<std::vector<double>> old_logprobs;
  std::vector<double> rewards;
  std::vector<std::optional<int>> judge_errors;
};

// (r - mean) / population std; all zeros when std < 1e-12. Throws on G < 2.
std::vector<double> normalize_advantages(std::span<const double> rewards);

// min(ratio * adv, clip(ratio, 1 - clip_low, 1 + clip_high) * adv).
double clipped_surrogate(double ratio, double advantage, double clip_low, double clip_high);

// k3 estimator exp(ref - new) - (ref - new) - 1.
double kl_term(double logp_new, double logp_ref);

enum class LossAggregation { token_mean, sequence_mean };

struct TrainerConfig {
  double learning_rate = 5e-6;
  std::size_t prompts_per_batch = 256;
  std::size_t group_size = 16;
  double clip_low = 0.2;
  double clip_high = 0.28;
  double kl_coefficient = 0.0;
  std::size_t epochs = 1;  // optimization passes per sampled batch
  std::uint64_t seed = 0;
  double temperature = 1.0;  // rollout temperature
  LossAggregation aggregation = LossAggregation::token_mean;
  unsigned threads = 1;

  void validate() const;
  static TrainerConfig from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;
};

struct StepStats {
  double loss = 0.0;
  double mean_reward = 0.0;
  double clip_frac = 0.0;
  double mean_kl = 0.0;
  double entropy = 0.0;
  std::optional<double> mean_judge_errors;
  std::size_t tokens = 0;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as ToyPolicy::logits()
  StepStats stats;
};

// Clipped surrogate loss (plus KL when the coefficient is non-zero) and its
// analytic gradient with respect to the logits table. The reference is only
// read when kl_coefficient > 0.
LossGradient grpo_loss(const std::vector<RolloutGroup>& groups, const ToyPolicy& policy,
                       const ReferencePolicy* reference, const TrainerConfig& config);

// One plain gradient-descent update per configured epoch.
StepStats grpo_step(const std::vector<RolloutGroup>& groups, ToyPolicy& policy, const ReferencePolicy* reference,
                    const TrainerConfig& config);

// G seeded ancestral samples with their log-probabilities; rewards unfilled.
RolloutGroup rollout(const ToyPolicy& policy, std::size_t prompt, std::size_t group_size, double temperature,
                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Supervised warm start

struct SftExample {
  std::size_t prompt = 0;
  std::vector<int> target;  // includes EOS when shorter than max_length
};

// Mean per-token negative log-likelihood and its gradient.
LossGradient sft_loss(const std::vector<SftExample>& batch, const ToyPolicy& policy);

// One cross-entropy gradient step. An empty batch is a no-op.
void sft_step(const std::vector<SftExample>& batch, ToyPolicy& policy, double learning_rate);

// ---------------------------------------------------------------------------
// Synthetic report-grammar task

struct GrammarTaskConfig {
  std::uint64_t seed = 0;
  std::size_t num_prompts = 8;
  std::vector<std::string> pathologies{"effusion", "pneumothorax", "consolidation", "edema", "atelectasis", "opacity"};
  std::vector<std::string> sides{"left", "right"};
  std::vector<std::string> regions{"base", "apex"};
  std::size_t max_clauses = 2;
  // The last `ambiguous_prompts` prompts admit several readings: the dominant
  // finding with probability 1/2, otherwise one of `alternative_readings`
  // other pathologies at the same location. The reference is drawn per query.
  std::size_t ambiguous_prompts = 0;
  std::size_t alternative_readings = 2;

  static GrammarTaskConfig from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;
};

struct Finding {
  std::string pathology;
  bool present = true;
  std::string side;
  std::string region;
};

struct PromptCase {
  std::vector<Finding> findings;
  std::string reference;
};

struct GrammarPrompt {
  std::string key;  // "case-<index>"
  std::vector<PromptCase> cases;
  double oracle_max_reward = 0.0;
  std::string oracle_output;
};

struct GrammarTask {
  GrammarTaskConfig config;
  std::vector<std::string> vocabulary;
  std::size_t max_length = 0;
  std::vector<GrammarPrompt> prompts;

  // Every grammar-valid output, 1..max_clauses clauses.
  std::vector<std::string> enumerate_outputs() const;
  ToyPolicy make_policy() const;
  std::uint64_t fingerprint() const;
};

// "no <pathology> ." or "<pathology> in <side> <region> .".
std::string realize(const Finding& f);
std::string realize(const std::vector<Finding>& findings);

// Builds prompts and references, then fills the oracle by exhaustive
// enumeration: for each prompt, the max over grammar outputs of the reward
// averaged over the prompt's cases.
GrammarTask make_grammar_task(const GrammarTaskConfig& config, const reward::RewardScorer& scorer);

// Brute-force oracle for one prompt.
std::pair<double, std::string> oracle_max(const GrammarTask& task, const GrammarPrompt& prompt,
                                          const reward::RewardScorer& scorer);

// Noisy demonstrations: the reference with probability 1 - noise, otherwise
// a uniformly drawn grammar output.
std::vector<SftExample> make_sft_batch(const GrammarTask& task, const ToyPolicy& policy, std::size_t per_prompt,
                                       double noise, Rng& rng);

// ---------------------------------------------------------------------------
// Training loops

struct LogEntry {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double clip_frac = 0.0;
  double mean_kl = 0.0;
  double entropy = 0.0;
  double mean_judge_errors = 0.0;

  nlohmann::ordered_json to_json() const;
};

class RlTrainer {
 public:
  RlTrainer(const GrammarTask& task, const reward::RewardScorer& scorer, TrainerConfig config,
            const ReferencePolicy* reference = nullptr);

  // Samples a batch, scores it, and applies one grpo_step.
  LogEntry step(ToyPolicy& policy);

  std::vector<RolloutGroup> collect(const ToyPolicy& policy, std::size_t step_index) const;
  std::size_t steps_taken() const { return step_; }

 private:
  const GrammarTask& task_;
  const reward::RewardScorer& scorer_;
  TrainerConfig config_;
  const ReferencePolicy* reference_;
  std::size_t step_ = 0;
};

struct SftConfig {
  std::size_t steps = 200;
  double learning_rate = 2.0;
  std::size_t examples_per_prompt = 4;
  double noise = 0.5;
  std::uint64_t seed = 0;

  static SftConfig from_json(const nlohmann::ordered_json& j);
  nlohmann::ordered_json to_json() const;
};

// Returns the per-step mean NLL.
std::vector<double> run_sft(ToyPolicy& policy, const GrammarTask& task, const SftConfig& config);

// Expected reward under sampling, estimated with `samples` draws per prompt
// (temperature 1), averaged over prompts and their cases.
double evaluate_policy(const ToyPolicy& policy, const GrammarTask& task, const reward::RewardScorer& scorer,
                       std::size_t samples, std::uint64_t seed);

// Mean oracle_max over prompts.
double oracle_mean(const GrammarTask& task);

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::ordered_json checkpoint_json(const ToyPolicy& policy, const std::string& config_hash, std::size_t step);
void save_checkpoint(const std::string& path, const ToyPolicy& policy, const std::string& config_hash, std::size_t step);

struct Checkpoint {
  ToyPolicy policy;
  std::string config_hash;
  std::size_t step = 0;
};

// Throws DataError on malformed files or a config-hash mismatch.
Checkpoint load_checkpoint(const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt);

// FNV-1a of the file bytes, hex.
std::string file_hash(const std::string& path);

// ---------------------------------------------------------------------------
// Generation backend

// Serves generation from a toy policy. The prompt index comes from a
// "case-<n>" key in the prompt text (indication); unknown prompts hash to an
// index.
class ToyPolicyGenerator : public judge::Generator {
 public:
  explicit ToyPolicyGenerator(ToyPolicy policy) : policy_(std::move(policy)) {}
  judge::GenerationResult generate(const corpus::PromptInstance& prompt, const judge::GenerationOptions& options) override;

  std::size_t prompt_index(const std::string& prompt_text) const;

 private:
  ToyPolicy policy_;
};

}  // namespace cxrl::grpo
