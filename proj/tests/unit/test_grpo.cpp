#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "cxrl/errors.hpp"
#include "cxrl/grpo.hpp"
#include "cxrl/util/rng.hpp"

using namespace cxrl::grpo;
using cxrl::Rng;

namespace {

ToyPolicy random_policy(std::size_t prompts, std::size_t length, std::size_t vocab, std::uint64_t seed) {
  std::vector<std::string> words{"<eos>"};
  for (std::size_t i = 1; i < vocab; ++i) words.push_back("w" + std::to_string(i));
  ToyPolicy p(words, prompts, length);
  Rng rng(seed);
  for (auto& z : p.logits()) z = rng.normal();
  return p;
}

std::shared_ptr<cxrl::reward::RewardScorer> scorer(cxrl::reward::Stage stage = cxrl::reward::Stage::stage1) {
  auto suite = std::make_shared<cxrl::metrics::MetricSuite>(cxrl::metrics::Lexicon::default_chexpert(),
                                                            cxrl::metrics::PatternSet::default_radiology(),
                                                            std::make_shared<cxrl::judge::MockEmbedder>());
  return std::make_shared<cxrl::reward::RewardScorer>(suite, std::make_shared<cxrl::judge::MockJudge>(),
                                                      cxrl::reward::schedule(stage), true);
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double scale = std::max({std::abs(analytic[k]), std::abs(numeric[k]), 1e-6});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / scale);
  }
  return worst;
}

template <class LossFn>
std::vector<double> central_differences(ToyPolicy policy, LossFn loss) {
  std::vector<double> out(policy.logits().size());
  const double h = 1e-6;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double z = policy.logits()[k];
    policy.logits()[k] = z + h;
    const double up = loss(policy);
    policy.logits()[k] = z - h;
    const double down = loss(policy);
    policy.logits()[k] = z;
    out[k] = (up - down) / (2 * h);
  }
  return out;
}

// Groups on a 3-state, 5-token policy with old log-probs perturbed away from
// the current policy so ratios differ from 1 but stay clear of the clip edges.
std::vector<RolloutGroup> fd_groups(const ToyPolicy& policy, double temperature, Rng& rng) {
  std::vector<RolloutGroup> groups;
  for (int g = 0; g < 3; ++g) {
    auto group = rollout(policy, 0, 6, temperature, 100 + g);
    for (auto& lps : group.old_logprobs) {
      for (auto& lp : lps) lp += (rng.uniform() - 0.5) * 0.5;
    }
    for (std::size_t i = 0; i < group.responses.size(); ++i) group.rewards.push_back(rng.uniform());
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace

TEST(ToyPolicy, RowsAreDistributions) {
  auto p = random_policy(2, 3, 5, 1);
  for (std::size_t s = 0; s < p.num_states(); ++s) {
    for (double t : {0.3, 1.0, 4.0}) {
      double total = 0.0;
      for (double lp : p.log_probs(s, t)) total += std::exp(lp);
      ASSERT_NEAR(total, 1.0, 1e-12);
    }
  }
  EXPECT_THROW(p.state(2, 0), std::out_of_range);
  EXPECT_THROW(p.encode({"w1", "zzz"}), std::invalid_argument);
  EXPECT_EQ(p.encode({"w1"}), (std::vector<int>{1, 0}));
  EXPECT_EQ(p.encode({"w1", "w2", "w3"}), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(p.decode(std::vector<int>{2, 1, 0}), "w2 w1");
}

TEST(Advantages, Examples) {
  EXPECT_EQ(normalize_advantages(std::vector<double>{1, 1, 1, 1}), (std::vector<double>{0, 0, 0, 0}));
  auto a = normalize_advantages(std::vector<double>{0, 2});
  EXPECT_DOUBLE_EQ(a[0], -1.0);
  EXPECT_DOUBLE_EQ(a[1], 1.0);
  EXPECT_THROW(normalize_advantages(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Advantages, MeanZeroUnitStdAndAffineInvariant) {
  Rng rng(77);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t g = 2 + rng.below(31);
    std::vector<double> r(g);
    const bool degenerate = rng.below(20) == 0;
    for (auto& x : r) x = degenerate ? 0.37 : rng.normal() * 3.0;
    const auto adv = normalize_advantages(r);
    double mean = 0.0;
    for (double x : adv) mean += x;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double x : adv) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(g));
    ASSERT_LE(std::abs(mean), 1e-9);
    if (degenerate) {
      for (double x : adv) ASSERT_EQ(x, 0.0);
    } else {
      ASSERT_LE(std::abs(sd - 1.0), 1e-9);
    }
    const double scale = 0.01 + rng.uniform() * 10.0;
    const double shift = rng.normal() * 5.0;
    std::vector<double> t(g);
    for (std::size_t i = 0; i < g; ++i) t[i] = scale * r[i] + shift;
    const auto adv2 = normalize_advantages(t);
    for (std::size_t i = 0; i < g; ++i) ASSERT_NEAR(adv[i], adv2[i], 1e-9);
  }
}

TEST(ClippedSurrogate, Examples) {
  EXPECT_EQ(clipped_surrogate(2.0, 1.0, 0.2, 0.28), 1.28);
  EXPECT_EQ(clipped_surrogate(0.5, -1.0, 0.2, 0.28), -0.8);
  EXPECT_EQ(clipped_surrogate(1.0, 0.7, 0.2, 0.28), 0.7);
  EXPECT_EQ(clipped_surrogate(1.0, -2.5, 0.2, 0.28), -2.5);
}

TEST(ClippedSurrogate, NeverExceedsUnclippedObjective) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double ratio = std::exp(rng.normal());
    const double adv = rng.normal();
    ASSERT_LE(clipped_surrogate(ratio, adv, 0.2, 0.28), ratio * adv + 1e-15);
  }
}

TEST(KlTerm, ExamplesAndNonNegativity) {
  EXPECT_EQ(kl_term(-0.3, -0.3), 0.0);
  EXPECT_NEAR(kl_term(std::log(0.5), std::log(0.25)), 0.5 + std::log(2.0) - 1.0, 1e-15);
  EXPECT_NEAR(kl_term(std::log(0.5), std::log(0.25)), 0.19315, 1e-5);
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double a = -5.0 * rng.uniform();
    const double b = -5.0 * rng.uniform();
    ASSERT_GE(kl_term(a, b), 0.0);
    if (a != b) ASSERT_GT(kl_term(a, b), 0.0);
  }
}

TEST(Rollout, DeterministicAndLogprobsRecomputable) {
  auto p = random_policy(2, 4, 5, 2);
  const auto a = rollout(p, 1, 16, 0.8, 42);
  const auto b = rollout(p, 1, 16, 0.8, 42);
  EXPECT_EQ(a.responses, b.responses);
  EXPECT_EQ(a.old_logprobs, b.old_logprobs);
  ASSERT_EQ(a.responses.size(), 16u);
  for (std::size_t i = 0; i < a.responses.size(); ++i) {
    const auto& toks = a.responses[i];
    ASSERT_EQ(a.old_logprobs[i].size(), toks.size());
    double total = 0.0;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      // offline recomputation of the tempered log-softmax
      const auto row = p.row(p.state(1, t));
      double mx = -1e300;
      for (double z : row) mx = std::max(mx, z / 0.8);
      double lse = 0.0;
      for (double z : row) lse += std::exp(z / 0.8 - mx);
      const double lp = row[static_cast<std::size_t>(toks[t])] / 0.8 - mx - std::log(lse);
      ASSERT_NEAR(a.old_logprobs[i][t], lp, 1e-12);
      total += lp;
      if (toks[t] == ToyPolicy::kEos) ASSERT_EQ(t + 1, toks.size());
    }
    ASSERT_NEAR(p.sequence_logprob(1, toks, 0.8), total, 1e-12);
  }
  EXPECT_NE(rollout(p, 1, 16, 0.8, 43).responses, a.responses);
}

TEST(Rollout, LowTemperatureIsGreedy) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = random_policy(3, 5, 6, seed);
    for (std::size_t prompt = 0; prompt < 3; ++prompt) {
      const auto g = rollout(p, prompt, 8, 1e-6, seed);
      for (const auto& r : g.responses) ASSERT_EQ(r, p.greedy(prompt));
    }
  }
  auto p = random_policy(1, 2, 3, 0);
  EXPECT_THROW(rollout(p, 0, 1, 1.0, 0), std::invalid_argument);
}

TEST(GrpoLoss, GradientMatchesFiniteDifferences) {
  for (double temperature : {1.0, 0.7}) {
    for (double kl : {0.0, 0.03, 0.5}) {
      auto policy = random_policy(1, 3, 5, 11);
      Rng rng(21);
      const auto groups = fd_groups(policy, temperature, rng);
      auto ref_table = random_policy(1, 3, 5, 12);
      ReferencePolicy reference(ref_table);
      TrainerConfig cfg;
      cfg.kl_coefficient = kl;
      for (auto agg : {LossAggregation::token_mean, LossAggregation::sequence_mean}) {
        cfg.aggregation = agg;
        const auto analytic = grpo_loss(groups, policy, &reference, cfg);
        const auto numeric = central_differences(
            policy, [&](const ToyPolicy& p) { return grpo_loss(groups, p, &reference, cfg).loss; });
        EXPECT_LT(max_relative_error(analytic.gradient, numeric), 1e-5)
            << "T=" << temperature << " kl=" << kl;
        EXPECT_GT(analytic.stats.clip_frac, 0.0);
        EXPECT_LT(analytic.stats.clip_frac, 1.0);
      }
    }
  }
}

TEST(GrpoStep, DegenerateGroupsLeavePolicyUnchanged) {
  auto policy = random_policy(2, 3, 5, 3);
  const auto before = policy;
  std::vector<RolloutGroup> groups;
  for (std::size_t prompt = 0; prompt < 2; ++prompt) {
    auto g = rollout(policy, prompt, 8, 1.0, prompt);
    g.rewards.assign(8, 0.42);
    groups.push_back(g);
  }
  TrainerConfig cfg;
  cfg.learning_rate = 10.0;
  grpo_step(groups, policy, nullptr, cfg);
  EXPECT_EQ(policy, before);
}

TEST(GrpoStep, NoReferenceReadsWithoutKl) {
  auto policy = random_policy(1, 3, 5, 4);
  ReferencePolicy reference(policy);
  auto g = rollout(policy, 0, 8, 1.0, 9);
  for (std::size_t i = 0; i < 8; ++i) g.rewards.push_back(static_cast<double>(i));
  TrainerConfig cfg;
  cfg.learning_rate = 1.0;
  grpo_step({g}, policy, &reference, cfg);
  EXPECT_EQ(reference.reads(), 0u);
  cfg.kl_coefficient = 0.03;
  grpo_step({g}, policy, &reference, cfg);
  EXPECT_GT(reference.reads(), 0u);
  EXPECT_THROW(grpo_step({g}, policy, nullptr, cfg), std::invalid_argument);
}

TEST(GrpoStep, BanditFavoursRewardedToken) {
  ToyPolicy policy({"<eos>", "A", "B"}, 1, 1);
  const auto p_a = [&] { return std::exp(policy.token_logprob(0, 1)); };
  const double before = p_a();
  RolloutGroup g;
  g.query_id = "bandit";
  for (int i = 0; i < 8; ++i) {
    const int tok = i % 2 == 0 ? 1 : 2;
    g.responses.push_back({tok});
    g.old_logprobs.push_back({policy.token_logprob(0, tok)});
    g.rewards.push_back(tok == 1 ? 1.0 : 0.0);
  }
  TrainerConfig cfg;
  cfg.learning_rate = 0.1;
  grpo_step({g}, policy, nullptr, cfg);
  EXPECT_GT(p_a(), before);
}

TEST(Sft, GradientMatchesFiniteDifferences) {
  auto policy = random_policy(1, 3, 5, 13);
  std::vector<SftExample> batch{{0, {1, 2, 3}}, {0, {4, 0}}, {0, {2, 2, 1}}, {0, {0}}};
  const auto analytic = sft_loss(batch, policy);
  const auto numeric = central_differences(policy, [&](const ToyPolicy& p) { return sft_loss(batch, p).loss; });
  EXPECT_LT(max_relative_error(analytic.gradient, numeric), 1e-5);
}

TEST(Sft, RepeatedStepsRaiseTargetLikelihood) {
  auto policy = random_policy(1, 3, 5, 14);
  const std::vector<SftExample> batch{{0, {3, 1, 0}}};
  double last = policy.sequence_logprob(0, batch[0].target);
  for (int step = 0; step < 50; ++step) {
    sft_step(batch, policy, 0.5);
    const double now = policy.sequence_logprob(0, batch[0].target);
    ASSERT_GT(now, last) << step;
    last = now;
  }
  const auto frozen = policy;
  sft_step({}, policy, 0.5);
  EXPECT_EQ(policy, frozen);
  EXPECT_THROW(sft_step({{0, {7}}}, policy, 0.5), std::invalid_argument);
}

TEST(GrammarTask, EnumerationMatchesGolden) {
  std::ifstream in(std::string(CXRL_TEST_DATA_DIR) + "/golden/grammar_two_pathology.json");
  const auto golden = nlohmann::ordered_json::parse(in);
  const auto cfg = GrammarTaskConfig::from_json(golden["config"]);
  auto s1 = scorer();
  const auto task = make_grammar_task(cfg, *s1);
  const auto outputs = task.enumerate_outputs();
  const auto want = golden["outputs"].get<std::vector<std::string>>();
  EXPECT_EQ(std::set<std::string>(outputs.begin(), outputs.end()), std::set<std::string>(want.begin(), want.end()));
  EXPECT_EQ(outputs.size(), want.size());

  // Independent enumeration: every token string up to max_length that parses
  // as one clause.
  const auto policy = task.make_policy();
  const std::size_t v = policy.vocab_size();
  std::set<std::string> parsed;
  std::vector<int> seq;
  std::function<void()> walk = [&] {
    if (!seq.empty()) {
      std::vector<std::string> w;
      for (int t : seq) w.push_back(policy.vocabulary()[static_cast<std::size_t>(t)]);
      const bool neg = w.size() == 3 && w[0] == "no" && (w[1] == "effusion" || w[1] == "pneumothorax") && w[2] == ".";
      const bool pos = w.size() == 5 && (w[0] == "effusion" || w[0] == "pneumothorax") && w[1] == "in" &&
                       w[2] == "left" && w[3] == "base" && w[4] == ".";
      if (neg || pos) parsed.insert(policy.decode(seq));
    }
    if (seq.size() == task.max_length) return;
    for (std::size_t t = 1; t < v; ++t) {
      seq.push_back(static_cast<int>(t));
      walk();
      seq.pop_back();
    }
  };
  walk();
  EXPECT_EQ(parsed, std::set<std::string>(want.begin(), want.end()));

  for (const auto& prompt : task.prompts) {
    EXPECT_DOUBLE_EQ(prompt.oracle_max_reward, golden["oracle_reward_stage1"].get<double>());
    EXPECT_EQ(prompt.oracle_output, prompt.cases.at(0).reference);
  }
  auto s2 = scorer(cxrl::reward::Stage::stage2);
  const auto task2 = make_grammar_task(cfg, *s2);
  for (const auto& prompt : task2.prompts) EXPECT_DOUBLE_EQ(prompt.oracle_max_reward, golden["oracle_reward_stage2"]);

  auto two = cfg;
  two.max_clauses = 2;
  EXPECT_EQ(make_grammar_task(two, *s1).enumerate_outputs().size(), golden["two_clause_output_count"].get<std::size_t>());
}

TEST(GrammarTask, ReferenceAttainsOracleAndSeedIsReproducible) {
  GrammarTaskConfig cfg;
  cfg.seed = 9;
  auto s = scorer();
  const auto a = make_grammar_task(cfg, *s);
  const auto b = make_grammar_task(cfg, *s);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  ASSERT_EQ(a.prompts.size(), 8u);
  for (std::size_t i = 0; i < a.prompts.size(); ++i) {
    const auto& p = a.prompts[i];
    EXPECT_EQ(p.oracle_output, b.prompts[i].oracle_output);
    ASSERT_EQ(p.cases.size(), 1u);
    EXPECT_NEAR(s->score(p.cases[0].reference, p.cases[0].reference).reward, p.oracle_max_reward, 1e-12);
    EXPECT_LE(a.vocabulary.size(), 30u);
  }
  cfg.seed = 10;
  EXPECT_NE(make_grammar_task(cfg, *s).fingerprint(), a.fingerprint());
}

TEST(Training, SeededRunsAreBitReproducible) {
  GrammarTaskConfig tc;
  tc.seed = 1;
  auto s = scorer();
  const auto task = make_grammar_task(tc, *s);
  TrainerConfig cfg;
  cfg.learning_rate = 5.0;
  cfg.prompts_per_batch = 8;
  cfg.group_size = 8;
  cfg.seed = 5;
  auto run = [&](unsigned threads) {
    auto policy = task.make_policy();
    SftConfig sc;
    sc.steps = 20;
    run_sft(policy, task, sc);
    auto c = cfg;
    c.threads = threads;
    RlTrainer trainer(task, *s, c);
    std::vector<double> rewards;
    for (int i = 0; i < 20; ++i) rewards.push_back(trainer.step(policy).mean_reward);
    return std::make_pair(policy, rewards);
  };
  const auto a = run(1);
  const auto b = run(1);
  const auto c = run(3);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_EQ(a.first, c.first);
}

TEST(Checkpoint, RoundTripAndHashValidation) {
  const auto dir = std::filesystem::temp_directory_path() / "cxrl_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "policy.json").string();
  auto policy = random_policy(2, 3, 5, 15);
  save_checkpoint(path, policy, "abc123", 17);
  const auto ck = load_checkpoint(path, std::string("abc123"));
  EXPECT_EQ(ck.policy, policy);
  EXPECT_EQ(ck.step, 17u);
  EXPECT_EQ(ck.config_hash, "abc123");
  EXPECT_THROW(load_checkpoint(path, std::string("other")), cxrl::DataError);

  const auto h1 = file_hash(path);
  save_checkpoint(path, policy, "abc123", 17);
  EXPECT_EQ(file_hash(path), h1);
  policy.logits()[0] += 1e-3;
  save_checkpoint(path, policy, "abc123", 17);
  EXPECT_NE(file_hash(path), h1);

  std::ofstream(dir / "bad.json") << "{\"format\": 1";
  EXPECT_THROW(load_checkpoint((dir / "bad.json").string()), cxrl::DataError);
  EXPECT_THROW(load_checkpoint((dir / "missing.json").string()), cxrl::IoError);
  std::filesystem::remove_all(dir);
}

TEST(ToyPolicyGenerator, GreedyAndSeededSamplingAreDeterministic) {
  auto policy = random_policy(4, 5, 6, 16);
  ToyPolicyGenerator gen(policy);
  cxrl::corpus::PromptInstance p;
  p.text = "Indication: case-2";
  cxrl::judge::GenerationOptions greedy;
  const auto a = cxrl::judge::generate(p, greedy, gen);
  EXPECT_EQ(a.text, cxrl::judge::generate(p, greedy, gen).text);
  EXPECT_EQ(a.text, policy.decode(policy.greedy(2)));
  cxrl::judge::GenerationOptions hot;
  hot.temperature = 1.0;
  hot.seed = 8;
  EXPECT_EQ(cxrl::judge::generate(p, hot, gen).text, cxrl::judge::generate(p, hot, gen).text);
  EXPECT_EQ(gen.prompt_index("Indication: case-3"), 3u);
  EXPECT_LT(gen.prompt_index("no key here"), 4u);
}
