#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "cxrl/errors.hpp"
#include "cxrl/experiment.hpp"
#include "cxrl/util/hash.hpp"

namespace cxrl::experiment {

using ojson = nlohmann::ordered_json;

namespace {

ojson backend_json(const BackendSpec& b) {
  ojson j{{"backend", b.backend},
          {"timeout_ms", b.timeout_ms},
          {"max_retries", b.max_retries},
          {"max_in_flight", b.max_in_flight},
          {"instruction", b.instruction}};
  if (b.bearer_token) j["bearer_token"] = *b.bearer_token;
  return j;
}

void read_backend(const ojson& j, BackendSpec& b) {
  b.backend = j.value("backend", b.backend);
  b.timeout_ms = j.value("timeout_ms", b.timeout_ms);
  b.max_retries = j.value("max_retries", b.max_retries);
  b.max_in_flight = j.value("max_in_flight", b.max_in_flight);
  b.instruction = j.value("instruction", b.instruction);
  if (j.contains("bearer_token")) b.bearer_token = j.at("bearer_token").get<std::string>();
}

ojson stage_json(const StageSpec& s) {
  return {{"steps", s.steps},
          {"track_judge_errors", s.track_judge_errors},
          {"trainer", s.trainer.to_json()},
          {"reward", s.reward.to_json()}};
}

void read_stage(const ojson& j, StageSpec& s) {
  s.steps = j.value("steps", s.steps);
  s.track_judge_errors = j.value("track_judge_errors", s.track_judge_errors);
  if (j.contains("trainer")) {
    ojson merged = s.trainer.to_json();
    merged.update(j.at("trainer"));
    s.trainer = grpo::TrainerConfig::from_json(merged);
  }
  if (j.contains("reward")) {
    ojson merged = s.reward.to_json();
    merged.update(j.at("reward"));
    s.reward = reward::RewardConfig::from_json(merged);
  }
}

template <typename T>
ojson merged(const T& current, const ojson& j, const char* key) {
  ojson out = current.to_json();
  if (j.contains(key)) out.update(j.at(key));
  return out;
}

std::shared_ptr<judge::HttpTransport> transport(const BackendSpec& b) {
  auto endpoint = b.endpoint();
  endpoint.validate();
  return std::make_shared<judge::HttpTransport>(endpoint);
}

}  // namespace

judge::ServiceEndpoint BackendSpec::endpoint() const {
  judge::ServiceEndpoint e;
  e.base_url = backend;
  e.timeout = std::chrono::milliseconds(timeout_ms);
  e.max_retries = max_retries;
  e.max_in_flight = max_in_flight;
  e.bearer_token = bearer_token;
  e.instruction = instruction;
  return e;
}

ExperimentConfig::ExperimentConfig() {
  rl1.reward = reward::schedule(reward::Stage::stage1);
  rl1.trainer.learning_rate = 5.0;
  rl1.trainer.prompts_per_batch = 8;
  rl1.trainer.group_size = 8;
  rl1.steps = 1000;
  rl2.reward = reward::schedule(reward::Stage::stage2);
  rl2.trainer = rl1.trainer;
  rl2.steps = 500;
  apply_seed(seed);
}

void ExperimentConfig::apply_seed(std::uint64_t master) {
  seed = master;
  task.seed = master;
  sft.seed = derive_seed(master, {1});
  rl1.trainer.seed = derive_seed(master, {2});
  rl2.trainer.seed = derive_seed(master, {3});
}

ExperimentConfig ExperimentConfig::from_json(const ojson& j) {
  if (!j.is_object()) throw DataError("experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    if (j.contains("seed")) c.apply_seed(j.at("seed").get<std::uint64_t>());
    if (j.contains("corpus") && !j.at("corpus").is_null()) c.corpus = j.at("corpus").get<std::string>();
    c.output_dir = j.value("output_dir", c.output_dir);
    c.task = grpo::GrammarTaskConfig::from_json(merged(c.task, j, "task"));
    c.sft = grpo::SftConfig::from_json(merged(c.sft, j, "sft"));
    if (j.contains("rl1")) read_stage(j.at("rl1"), c.rl1);
    if (j.contains("rl2")) read_stage(j.at("rl2"), c.rl2);
    if (j.contains("judge")) {
      const auto& jj = j.at("judge");
      read_backend(jj, c.judge);
      if (jj.contains("lexicon") && !jj.at("lexicon").is_null()) c.judge.lexicon = jj.at("lexicon").get<std::string>();
      c.judge.extra_findings = jj.value("extra_findings", c.judge.extra_findings);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      if (m.contains("lexicon") && !m.at("lexicon").is_null()) c.metrics.lexicon = m.at("lexicon").get<std::string>();
      if (m.contains("patterns") && !m.at("patterns").is_null()) c.metrics.patterns = m.at("patterns").get<std::string>();
      if (m.contains("embedder")) read_backend(m.at("embedder"), c.metrics.embedder);
      c.metrics.embedding_dimension = m.value("embedding_dimension", c.metrics.embedding_dimension);
      c.metrics.embedding_seed = m.value("embedding_seed", c.metrics.embedding_seed);
    }
    if (j.contains("coefficients")) c.coefficients = metrics::CompositeCoefficients::from_json(j.at("coefficients"));
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.use_prior = e.value("use_prior", c.eval.use_prior);
      c.eval.max_tokens = e.value("max_tokens", c.eval.max_tokens);
      c.eval.bootstrap_resamples = e.value("bootstrap_resamples", c.eval.bootstrap_resamples);
      c.eval.threads = e.value("threads", c.eval.threads);
      if (e.contains("section")) c.eval.section = evalsuite::parse_section_scope(e.at("section").get<std::string>());
    }
  } catch (const ojson::exception& e) {
    throw DataError(std::string("bad experiment config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("bad experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const ojson::exception& e) {
    throw DataError("malformed JSON in '" + path + "': " + e.what());
  }
  return from_json(j);
}

ojson ExperimentConfig::to_json() const {
  ojson judge_j = backend_json(judge);
  judge_j["lexicon"] = judge.lexicon ? ojson(*judge.lexicon) : ojson(nullptr);
  judge_j["extra_findings"] = judge.extra_findings;
  ojson metrics_j{{"lexicon", metrics.lexicon ? ojson(*metrics.lexicon) : ojson(nullptr)},
                  {"patterns", metrics.patterns ? ojson(*metrics.patterns) : ojson(nullptr)},
                  {"embedder", backend_json(metrics.embedder)},
                  {"embedding_dimension", metrics.embedding_dimension},
                  {"embedding_seed", metrics.embedding_seed}};
  return {{"seed", seed},
          {"corpus", corpus ? ojson(*corpus) : ojson(nullptr)},
          {"output_dir", output_dir},
          {"task", task.to_json()},
          {"sft", sft.to_json()},
          {"rl1", stage_json(rl1)},
          {"rl2", stage_json(rl2)},
          {"judge", judge_j},
          {"metrics", metrics_j},
          {"coefficients", coefficients.to_json()},
          {"eval",
           {{"use_prior", eval.use_prior},
            {"max_tokens", eval.max_tokens},
            {"bootstrap_resamples", eval.bootstrap_resamples},
            {"threads", eval.threads},
            {"section", evalsuite::to_string(eval.section)}}}};
}

std::string ExperimentConfig::hash() const { return to_hex(fnv1a64(to_json().dump())); }

metrics::Lexicon judge_lexicon(const JudgeSpec& spec) {
  metrics::Lexicon lex = spec.lexicon ? metrics::Lexicon::from_file(*spec.lexicon) : metrics::Lexicon::default_chexpert();
  const std::vector<std::string> negators =
      lex.labels.empty() ? std::vector<std::string>{} : lex.labels.front().negators;
  for (const auto& w : spec.extra_findings) lex.labels.push_back({w, {w}, negators});
  return lex;
}

Services make_services(const ExperimentConfig& config) {
  Services s;
  std::shared_ptr<metrics::Embedder> embedder;
  if (config.metrics.embedder.is_mock()) {
    embedder = std::make_shared<judge::MockEmbedder>(config.metrics.embedding_dimension, config.metrics.embedding_seed);
  } else {
    embedder = std::make_shared<judge::HttpEmbedder>(transport(config.metrics.embedder));
  }
  s.suite = std::make_shared<metrics::MetricSuite>(
      config.metrics.lexicon ? metrics::Lexicon::from_file(*config.metrics.lexicon) : metrics::Lexicon::default_chexpert(),
      config.metrics.patterns ? metrics::PatternSet::from_file(*config.metrics.patterns)
                              : metrics::PatternSet::default_radiology(),
      embedder);
  if (config.judge.is_mock()) {
    s.judge = std::make_shared<judge::MockJudge>(judge_lexicon(config.judge));
  } else {
    s.judge = std::make_shared<judge::HttpJudge>(transport(config.judge));
  }
  return s;
}

grpo::GrammarTask make_task(const ExperimentConfig& config, const Services& services) {
  reward::RewardScorer scorer(services.suite, services.judge, config.rl1.reward);
  return grpo::make_grammar_task(config.task, scorer);
}

std::string task_hash(const grpo::GrammarTask& task) { return to_hex(task.fingerprint()); }

TrainStage parse_train_stage(const std::string& text) {
  if (text == "sft") return TrainStage::sft;
  if (text == "rl1") return TrainStage::rl1;
  if (text == "rl2") return TrainStage::rl2;
  throw std::invalid_argument("unknown stage '" + text + "' (sft, rl1, rl2)");
}

std::string to_string(TrainStage stage) {
  switch (stage) {
    case TrainStage::sft: return "sft";
    case TrainStage::rl1: return "rl1";
    case TrainStage::rl2: return "rl2";
  }
  return "?";
}

StageResult run_stage(const ExperimentConfig& config, TrainStage stage, const grpo::GrammarTask& task,
                      const Services& services, const std::optional<grpo::ToyPolicy>& init) {
  if (stage == TrainStage::rl2 && !init) throw std::invalid_argument("rl2 needs an initial policy (its KL reference)");
  StageResult result{init ? *init : task.make_policy(), {}, 0.0};
  // final reward is always measured under the Step-1 composite
  reward::RewardScorer measure(services.suite, services.judge, config.rl1.reward);

  if (stage == TrainStage::sft) {
    const auto losses = grpo::run_sft(result.policy, task, config.sft);
    for (std::size_t s = 0; s < losses.size(); ++s) {
      if (!std::isfinite(losses[s])) throw std::runtime_error("sft: non-finite loss at step " + std::to_string(s));
      result.log.push_back(ojson{{"step", s}, {"loss", losses[s]}});
    }
  } else {
    const StageSpec& spec = stage == TrainStage::rl1 ? config.rl1 : config.rl2;
    grpo::TrainerConfig trainer = spec.trainer;
    trainer.kl_coefficient = spec.reward.kl_coefficient;
    std::optional<grpo::ReferencePolicy> reference;
    if (stage == TrainStage::rl2) reference.emplace(*init);
    reward::RewardScorer scorer(services.suite, services.judge, spec.reward, spec.track_judge_errors);
    grpo::RlTrainer rl(task, scorer, trainer, reference ? &*reference : nullptr);
    for (std::size_t s = 0; s < spec.steps; ++s) result.log.push_back(rl.step(result.policy).to_json());
  }
  result.final_mean_reward =
      grpo::evaluate_policy(result.policy, task, measure, 64, derive_seed(config.seed, {0xf1a1}));
  return result;
}

void write_jsonl(const std::string& path, const std::vector<ojson>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + '\n';
  write_text(path, text);
}

void write_text(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace cxrl::experiment
