#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cxrl/errors.hpp"
#include "cxrl/grpo.hpp"
#include "cxrl/util/hash.hpp"

namespace cxrl::grpo {

using ojson = nlohmann::ordered_json;

GrammarTaskConfig GrammarTaskConfig::from_json(const ojson& j) {
  GrammarTaskConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.num_prompts = j.value("num_prompts", c.num_prompts);
    c.pathologies = j.value("pathologies", c.pathologies);
    c.sides = j.value("sides", c.sides);
    c.regions = j.value("regions", c.regions);
    c.max_clauses = j.value("max_clauses", c.max_clauses);
    c.ambiguous_prompts = j.value("ambiguous_prompts", c.ambiguous_prompts);
    c.alternative_readings = j.value("alternative_readings", c.alternative_readings);
  } catch (const ojson::exception& e) {
    throw DataError(std::string("bad grammar task config: ") + e.what());
  }
  if (c.num_prompts == 0 || c.pathologies.empty() || c.sides.empty() || c.regions.empty() || c.max_clauses == 0) {
    throw DataError("grammar task config needs prompts, pathologies, sides, regions and clauses");
  }
  if (c.ambiguous_prompts > c.num_prompts) throw DataError("ambiguous_prompts exceeds num_prompts");
  return c;
}

ojson GrammarTaskConfig::to_json() const {
  return {{"seed", seed},
          {"num_prompts", num_prompts},
          {"pathologies", pathologies},
          {"sides", sides},
          {"regions", regions},
          {"max_clauses", max_clauses},
          {"ambiguous_prompts", ambiguous_prompts},
          {"alternative_readings", alternative_readings}};
}

std::string realize(const Finding& f) {
  if (!f.present) return "no " + f.pathology + " .";
  return f.pathology + " in " + f.side + " " + f.region + " .";
}

std::string realize(const std::vector<Finding>& findings) {
  std::string out;
  for (const auto& f : findings) {
    if (!out.empty()) out += ' ';
    out += realize(f);
  }
  return out;
}

namespace {

std::vector<std::string> clause_options(const GrammarTaskConfig& c) {
  std::vector<std::string> out;
  for (const auto& p : c.pathologies) {
    out.push_back(realize(Finding{p, false, "", ""}));
    for (const auto& s : c.sides) {
      for (const auto& r : c.regions) out.push_back(realize(Finding{p, true, s, r}));
    }
  }
  return out;
}

std::vector<Finding> draw_findings(const GrammarTaskConfig& c, Rng& rng) {
  const std::size_t limit = std::min(c.max_clauses, c.pathologies.size());
  const std::size_t count = 1 + static_cast<std::size_t>(rng.below(limit));
  std::vector<std::string> pool = c.pathologies;
  rng.shuffle(pool);
  std::vector<Finding> out;
  for (std::size_t i = 0; i < count; ++i) {
    Finding f;
    f.pathology = pool[i];
    f.present = rng.uniform() < 0.6;
    if (f.present) {
      f.side = c.sides[rng.below(c.sides.size())];
      f.region = c.regions[rng.below(c.regions.size())];
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::vector<std::string> GrammarTask::enumerate_outputs() const {
  const auto clauses = clause_options(config);
  std::vector<std::string> out;
  std::vector<std::string> level{""};
  for (std::size_t depth = 1; depth <= config.max_clauses; ++depth) {
    std::vector<std::string> next;
    next.reserve(level.size() * clauses.size());
    for (const auto& prefix : level) {
      for (const auto& c : clauses) next.push_back(prefix.empty() ? c : prefix + " " + c);
    }
    out.insert(out.end(), next.begin(), next.end());
    level = std::move(next);
  }
  return out;
}

ToyPolicy GrammarTask::make_policy() const { return ToyPolicy(vocabulary, prompts.size(), max_length); }

std::uint64_t GrammarTask::fingerprint() const {
  std::string blob = config.to_json().dump();
  blob += '|' + std::to_string(max_length);
  for (const auto& w : vocabulary) blob += '|' + w;
  for (const auto& p : prompts) {
    for (const auto& c : p.cases) blob += '|' + c.reference;
  }
  return fnv1a64(blob);
}

std::pair<double, std::string> oracle_max(const GrammarTask& task, const GrammarPrompt& prompt,
                                          const reward::RewardScorer& scorer) {
  double best = -std::numeric_limits<double>::infinity();
  std::string best_output;
  for (const auto& output : task.enumerate_outputs()) {
    double total = 0.0;
    for (const auto& c : prompt.cases) total += scorer.score(output, c.reference).reward;
    const double mean = total / static_cast<double>(prompt.cases.size());
    if (mean > best) {
      best = mean;
      best_output = output;
    }
  }
  return {best, best_output};
}

GrammarTask make_grammar_task(const GrammarTaskConfig& config, const reward::RewardScorer& scorer) {
  GrammarTask task;
  task.config = config;
  task.vocabulary = {"<eos>", "no", "in", "."};
  auto add_words = [&](const std::vector<std::string>& words) {
    for (const auto& w : words) {
      if (std::find(task.vocabulary.begin(), task.vocabulary.end(), w) == task.vocabulary.end()) {
        task.vocabulary.push_back(w);
      }
    }
  };
  add_words(config.pathologies);
  add_words(config.sides);
  add_words(config.regions);
  task.max_length = config.max_clauses * 5 + 1;

  Rng rng(derive_seed(config.seed, {0x7a5c}));
  const std::size_t first_ambiguous = config.num_prompts - config.ambiguous_prompts;
  for (std::size_t p = 0; p < config.num_prompts; ++p) {
    GrammarPrompt prompt;
    prompt.key = "case-" + std::to_string(p);
    if (p < first_ambiguous) {
      PromptCase c;
      c.findings = draw_findings(config, rng);
      c.reference = realize(c.findings);
      prompt.cases.push_back(std::move(c));
    } else {
      // One dominant reading (half the mass) and m alternative pathologies
      // seen at the same location.
      const std::size_t m = std::min(config.alternative_readings, config.pathologies.size() - 1);
      std::vector<std::string> pool = config.pathologies;
      rng.shuffle(pool);
      Finding base{pool[0], true, config.sides[rng.below(config.sides.size())],
                   config.regions[rng.below(config.regions.size())]};
      for (std::size_t k = 0; k < m; ++k) prompt.cases.push_back({{base}, realize(base)});
      for (std::size_t k = 1; k <= m; ++k) {
        Finding alt = base;
        alt.pathology = pool[k];
        prompt.cases.push_back({{alt}, realize(alt)});
      }
    }
    task.prompts.push_back(std::move(prompt));
  }
  for (auto& prompt : task.prompts) {
    auto [best, output] = oracle_max(task, prompt, scorer);
    prompt.oracle_max_reward = best;
    prompt.oracle_output = std::move(output);
  }
  return task;
}

std::vector<SftExample> make_sft_batch(const GrammarTask& task, const ToyPolicy& policy, std::size_t per_prompt,
                                       double noise, Rng& rng) {
  const auto outputs = task.enumerate_outputs();
  std::vector<SftExample> batch;
  for (std::size_t p = 0; p < task.prompts.size(); ++p) {
    const auto& cases = task.prompts[p].cases;
    for (std::size_t k = 0; k < per_prompt; ++k) {
      const std::string& ref = cases[rng.below(cases.size())].reference;
      const std::string& text = rng.uniform() < noise ? outputs[rng.below(outputs.size())] : ref;
      batch.push_back({p, policy.encode(split_words(text))});
    }
  }
  return batch;
}

double oracle_mean(const GrammarTask& task) {
  double total = 0.0;
  for (const auto& p : task.prompts) total += p.oracle_max_reward;
  return total / static_cast<double>(task.prompts.size());
}

}  // namespace cxrl::grpo
