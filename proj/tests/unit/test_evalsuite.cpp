#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "cxrl/errors.hpp"
#include "cxrl/evalsuite.hpp"
#include "fixtures.hpp"

using namespace cxrl::evalsuite;
using cxrl::judge::TemporalCategory;

namespace {

std::string golden_path(const std::string& name) { return std::string(CXRL_TEST_DATA_DIR) + "/golden/" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

cxrl::metrics::MetricSuite suite() {
  return cxrl::metrics::MetricSuite(cxrl::metrics::Lexicon::default_chexpert(),
                                    cxrl::metrics::PatternSet::default_radiology(),
                                    std::make_shared<cxrl::judge::MockEmbedder>());
}

EvalPair pair(const std::string& id, const std::string& pred, const std::string& ref, int encounter = 1) {
  EvalPair p;
  p.study_id = id;
  p.prediction = pred;
  p.reference = ref;
  p.encounter_index = encounter;
  return p;
}

// Fixed error count per candidate text.
class ScriptedJudge : public cxrl::judge::Judge {
 public:
  cxrl::judge::JudgeVerdict count_errors(const std::string& candidate, const std::string&) override {
    if (candidate == "fail") throw cxrl::ServiceError("judge down", true);
    return {std::stoi(candidate), std::nullopt};
  }
  TemporalCategory classify_change(const std::string&, const std::string&) override {
    return TemporalCategory::no_change;
  }
};

}  // namespace

TEST(PromptGolden, TemplatesAreByteExact) {
  using cxrl::corpus::TaskKind;
  EXPECT_EQ(std::string(cxrl::corpus::prompt_template(TaskKind::findings_impression)),
            slurp(golden_path("template_findings_impression.txt")));
  EXPECT_EQ(std::string(cxrl::corpus::prompt_template(TaskKind::findings_only)),
            slurp(golden_path("template_findings.txt")));
}

TEST(PromptGolden, RenderedPromptsAreByteExact) {
  using cxrl::corpus::View;
  auto r = fixtures::study("s", "p", "2020-01-01", {View::frontal_ap}, "Clear.", "Normal.");
  r.sections.indication = "Cough.";
  r.sections.comparison = "None.";
  EXPECT_EQ(cxrl::corpus::build_prompt(r).text, slurp(golden_path("rendered_findings_impression.txt")));

  auto prior = fixtures::study("p0", "p", "2019-01-01", {View::frontal_pa}, "Mild edema.");
  auto cur = fixtures::study("s1", "p", "2020-01-01", {View::frontal_ap}, "Worse edema.");
  EXPECT_EQ(cxrl::corpus::build_prompt(cur, cxrl::corpus::make_prior_context(prior)).text,
            slurp(golden_path("rendered_findings_with_prior.txt")));
}

class Timeline : public ::testing::Test {
 protected:
  void SetUp() override {
    records = cxrl::corpus::read_corpus_file(golden_path("timeline_corpus.jsonl"));
    std::ifstream in(golden_path("timeline_expected.json"));
    expected = nlohmann::json::parse(in);
  }
  std::vector<cxrl::corpus::StudyRecord> records;
  nlohmann::json expected;
};

TEST_F(Timeline, PriorsAndEncounterBuckets) {
  const auto priors = cxrl::corpus::link_prior_all(records);
  const auto encounters = cxrl::corpus::encounter_index_all(records);
  ASSERT_EQ(priors.size(), expected["priors"].size());
  for (const auto& [id, want] : expected["priors"].items()) {
    if (want.is_null()) {
      EXPECT_FALSE(priors.at(id)) << id;
    } else {
      EXPECT_EQ(priors.at(id), want.get<std::string>()) << id;
    }
    EXPECT_EQ(cxrl::corpus::encounter_bucket(encounters.at(id)), expected["encounter_buckets"][id]) << id;
  }
}

TEST_F(Timeline, CopyPriorBaseline) {
  const auto base = copy_prior_baseline(records);
  EXPECT_EQ(base.excluded, expected["copy_prior"]["excluded"].get<std::size_t>());
  ASSERT_EQ(base.pairs.size(), expected["copy_prior"]["predictions"].size());
  for (const auto& p : base.pairs) {
    EXPECT_EQ(p.prediction, expected["copy_prior"]["predictions"][p.study_id].get<std::string>()) << p.study_id;
    EXPECT_EQ(p.prediction, *p.prior_reference);
  }
  // a6 copies an identical report
  auto s = suite();
  for (const auto& p : base.pairs) {
    if (p.study_id != "a6") continue;
    const auto mv = s.score(p.prediction, p.reference);
    EXPECT_NEAR(mv.bleu2, 1.0, 1e-12);
    EXPECT_NEAR(mv.soft_f1, 1.0, 1e-12);
    EXPECT_NEAR(mv.semb, 1.0, 1e-12);
    EXPECT_NEAR(mv.radgraph_f1, 1.0, 1e-12);
  }
}

TEST_F(Timeline, TemporalAndEncounterStrata) {
  cxrl::judge::EchoGenerator echo;
  auto inf = run_inference(records, echo);
  ASSERT_TRUE(inf.complete);
  auto s = suite();
  const auto report = score_pairs(inf.pairs, s, nullptr, ScoreOptions{});
  cxrl::judge::MockJudge judge;
  const auto temporal = stratify(inf.pairs, report.scores, Axis::temporal, &judge, {});
  for (const auto& p : inf.pairs) {
    EXPECT_EQ(cxrl::judge::to_string(*p.temporal_category), expected["temporal"][p.study_id].get<std::string>())
        << p.study_id;
  }
  std::size_t total = 0;
  for (const auto& st : temporal.strata) total += st.count;
  EXPECT_EQ(total, inf.pairs.size());

  const auto enc = stratify(inf.pairs, report.scores, Axis::encounter, nullptr, {});
  for (const auto& st : enc.strata) EXPECT_EQ(st.count, expected["encounter_strata"][st.key].get<std::size_t>());
}

TEST_F(Timeline, FirstStudyNeedsNoJudge) {
  std::vector<EvalPair> pairs{pair("x", "a", "effusion")};
  std::vector<PairScore> scores(1);
  scores[0].study_id = "x";
  const auto table = stratify(pairs, scores, Axis::temporal, nullptr, {});
  EXPECT_EQ(pairs[0].temporal_category, TemporalCategory::first_study);
  EXPECT_EQ(table.strata.front().count, 1u);
}

TEST(RunInference, EchoGivesPerfectScoresAndNoPriorText) {
  const auto records = cxrl::corpus::read_corpus_file(golden_path("timeline_corpus.jsonl"));
  cxrl::judge::EchoGenerator echo;
  const auto a = run_inference(records, echo);
  const auto b = run_inference(records, echo);
  ASSERT_EQ(a.pairs.size(), records.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].prediction, a.pairs[i].reference);
    EXPECT_EQ(a.pairs[i].prediction, b.pairs[i].prediction);
    EXPECT_EQ(a.prompts[i].find("Prior study report"), std::string::npos);
    EXPECT_EQ(a.prompts[i].find("<prior_image>"), std::string::npos);
    EXPECT_EQ(std::count(a.prompts[i].begin(), a.prompts[i].end(), '<'), 1);  // key image only
  }
  auto s = suite();
  const auto report = score_pairs(a.pairs, s, nullptr, ScoreOptions{});
  EXPECT_NEAR(report.bleu2.mean, 1.0, 1e-12);
  EXPECT_NEAR(report.soft_f1.mean, 1.0, 1e-12);
  EXPECT_NEAR(report.semb.mean, 1.0, 1e-12);
  EXPECT_NEAR(report.radgraph_f1.mean, 1.0, 1e-12);

  InferenceOptions with_prior;
  with_prior.use_prior = true;
  const auto c = run_inference(records, echo, with_prior);
  std::size_t with_text = 0;
  for (const auto& p : c.prompts) with_text += p.find("Prior study report") != std::string::npos;
  EXPECT_EQ(with_text, 6u);
}

TEST(RunInference, BackendFailureKeepsPartialResults) {
  class FlakyGenerator : public cxrl::judge::Generator {
   public:
    cxrl::judge::GenerationResult generate(const cxrl::corpus::PromptInstance& p,
                                           const cxrl::judge::GenerationOptions&) override {
      if (++calls == 3) throw cxrl::ServiceError("backend down", false);
      return {p.target, false};
    }
    int calls = 0;
  } flaky;
  const auto records = cxrl::corpus::read_corpus_file(golden_path("timeline_corpus.jsonl"));
  const auto r = run_inference(records, flaky);
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.pairs.size(), 2u);
  EXPECT_NE(r.error.find("backend down"), std::string::npos);
}

TEST(ScorePairs, MeansMatchNaiveAverage) {
  std::vector<EvalPair> pairs{pair("c", "left effusion", "left effusion and edema"),
                              pair("a", "no pneumothorax", "small pneumothorax"),
                              pair("b", "heart normal", "heart normal"), pair("d", "", "edema")};
  auto s = suite();
  const auto report = score_pairs(pairs, s, nullptr, ScoreOptions{});
  double bleu = 0.0;
  double soft = 0.0;
  double semb = 0.0;
  double rg = 0.0;
  for (const auto& p : pairs) {
    const auto mv = s.score(p.prediction, p.reference);
    bleu += mv.bleu2;
    soft += mv.soft_f1;
    semb += mv.semb;
    rg += mv.radgraph_f1;
  }
  EXPECT_NEAR(report.bleu2.mean, bleu / 4, 1e-12);
  EXPECT_NEAR(report.soft_f1.mean, soft / 4, 1e-12);
  EXPECT_NEAR(report.semb.mean, semb / 4, 1e-12);
  EXPECT_NEAR(report.radgraph_f1.mean, rg / 4, 1e-12);
  EXPECT_LE(report.soft_f1.lo, report.soft_f1.mean);
  EXPECT_GE(report.soft_f1.hi, report.soft_f1.mean);
  EXPECT_EQ(report.scores[0].study_id, "c");

  auto reordered = pairs;
  std::reverse(reordered.begin(), reordered.end());
  const auto again = score_pairs(reordered, s, nullptr, ScoreOptions{});
  EXPECT_EQ(again.soft_f1.mean, report.soft_f1.mean);
  EXPECT_EQ(again.soft_f1.lo, report.soft_f1.lo);

  EXPECT_THROW(score_pairs({}, s, nullptr, ScoreOptions{}), std::invalid_argument);
  EXPECT_THROW(score_pairs({pair("x", "a", "  ")}, s, nullptr, ScoreOptions{}), std::invalid_argument);
}

TEST(ScorePairs, SinglePerfectPair) {
  auto s = suite();
  const auto r = score_pairs({pair("x", "Findings: mild edema.", "Findings: mild edema.")}, s, nullptr, {});
  EXPECT_NEAR(r.bleu2.mean, 1.0, 1e-12);
  EXPECT_NEAR(r.soft_f1.mean, 1.0, 1e-12);
  EXPECT_NEAR(r.semb.mean, 1.0, 1e-12);
  EXPECT_NEAR(r.radgraph_f1.mean, 1.0, 1e-12);
}

TEST(ScorePairs, ReciprocalOfMeanRawComposite) {
  // Coefficients that put both raw composites at exactly 1.6.
  ScoreOptions opt;
  opt.coefficients = {0.0, 0.0, 0.0, 0.0, 1.6, true};
  auto s = suite();
  const auto r = score_pairs({pair("a", "x y", "x y"), pair("b", "p", "q r")}, s, nullptr, opt);
  EXPECT_DOUBLE_EQ(r.composite_raw.mean, 1.6);
  ASSERT_TRUE(r.composite_reported);
  EXPECT_NEAR(*r.composite_reported, 0.625, 1e-15);
}

TEST(ScorePairs, ErrorHistogramBuckets) {
  ErrorHistogram h;
  for (int e : {0, 1, 2, 3, 4, 7}) h.add(e);
  EXPECT_EQ(h, (ErrorHistogram{2, 1, 1, 2}));
  EXPECT_EQ(histogram_csv(h), "bucket,count\n<=1,2\n2,1\n3,1\n>=4,2\n");

  std::vector<EvalPair> pairs;
  for (int e : {0, 1, 2, 3, 4, 7}) pairs.push_back(pair("s" + std::to_string(e), std::to_string(e), "ref"));
  pairs.push_back(pair("zz", "fail", "ref"));
  ScriptedJudge judge;
  auto s = suite();
  const auto r = score_pairs(pairs, s, &judge, ScoreOptions{});
  ASSERT_TRUE(r.histogram);
  EXPECT_EQ(*r.histogram, (ErrorHistogram{2, 1, 1, 2}));
  EXPECT_EQ(r.histogram->total(), 6u);
  EXPECT_EQ(r.judge_failures, 1u);
  EXPECT_NEAR(r.judge_errors->mean, 17.0 / 6.0, 1e-12);
  EXPECT_EQ(r.pairs, 7u);
}

TEST(Stratify, EncounterBucketsAndAbsentAxes) {
  std::vector<EvalPair> pairs;
  for (int i = 1; i <= 6; ++i) pairs.push_back(pair("s" + std::to_string(i), "edema", "edema", i));
  pairs[0].demographics["gender"] = "F";
  pairs[1].demographics["gender"] = "M";
  auto s = suite();
  const auto report = score_pairs(pairs, s, nullptr, ScoreOptions{});
  const auto enc = stratify(pairs, report.scores, Axis::encounter, nullptr, {});
  std::map<std::string, std::size_t> sizes;
  for (const auto& st : enc.strata) sizes[st.key] = st.count;
  EXPECT_EQ(sizes, (std::map<std::string, std::size_t>{{"1", 1}, {"2", 1}, {"3", 1}, {"4", 1}, {"5+", 2}}));

  const auto race = stratify(pairs, report.scores, Axis::race, nullptr, {});
  EXPECT_TRUE(race.absent);
  EXPECT_EQ(race.excluded, 6u);

  const auto gender = stratify(pairs, report.scores, Axis::gender, nullptr, {});
  EXPECT_FALSE(gender.absent);
  EXPECT_EQ(gender.strata.size(), 2u);
  EXPECT_EQ(gender.excluded, 4u);

  auto few = pairs;
  few.resize(2);
  auto few_scores = report.scores;
  few_scores.resize(2);
  const auto sparse = stratify(few, few_scores, Axis::encounter, nullptr, {});
  for (const auto& st : sparse.strata) {
    if (st.key == "3") {
      EXPECT_FALSE(st.present);
      EXPECT_EQ(st.count, 0u);
    }
  }
  EXPECT_THROW(parse_axis("height"), std::invalid_argument);
  EXPECT_EQ(parse_axis("age_band"), Axis::age_band);
}

TEST(ConditionF1, ConstructedConfusionCounts) {
  const std::vector<EvalPair> pairs{pair("1", "pneumonia", "pneumonia"), pair("2", "pneumonia", "no pneumonia"),
                                    pair("3", "clear lungs", "pneumonia"), pair("4", "effusion", "effusion")};
  const auto& lex = cxrl::metrics::Lexicon::default_chexpert();
  const auto table = condition_f1(pairs, lex);
  for (const auto& row : table.rows) {
    if (row.label == "pneumonia") {
      EXPECT_EQ(row.tp, 1u);
      EXPECT_EQ(row.fp, 1u);
      EXPECT_EQ(row.fn, 1u);
      EXPECT_EQ(*row.f1, 0.5);
    } else if (row.label == "pleural_effusion") {
      EXPECT_EQ(*row.f1, 1.0);
    } else {
      EXPECT_FALSE(row.f1) << row.label;
    }
  }
  EXPECT_NEAR(*table.macro_f1, 0.75, 1e-15);
  EXPECT_NE(conditions_csv(table).find("fracture,0,0,0,undefined,undefined,undefined"), std::string::npos);

  const std::vector<EvalPair> same{pair("1", "edema and tube", "edema and tube"), pair("2", "mass", "mass")};
  for (const auto& row : condition_f1(same, lex).rows) {
    if (row.f1) EXPECT_EQ(*row.f1, 1.0);
  }
}

TEST(SectionScope, RestrictsToOneSection) {
  std::vector<EvalPair> pairs{pair("a", "Findings: edema\nImpression: bad", "Findings: edema\nImpression: worse"),
                              pair("b", "Impression: fine", "Findings: clear"),
                              pair("c", "Findings: x", "Impression: stable")};
  const auto f = restrict_to_section(pairs, SectionScope::findings);
  ASSERT_EQ(f.pairs.size(), 2u);
  EXPECT_EQ(f.excluded, 1u);
  EXPECT_EQ(f.pairs[0].reference, "edema");
  EXPECT_EQ(f.pairs[1].prediction, "");
  const auto i = restrict_to_section(pairs, SectionScope::impression);
  ASSERT_EQ(i.pairs.size(), 2u);
  EXPECT_EQ(i.pairs[0].prediction, "bad");
  EXPECT_EQ(restrict_to_section(pairs, SectionScope::full).pairs.size(), 3u);
  EXPECT_THROW(parse_section_scope("history"), std::invalid_argument);
}

TEST(PairIo, JsonlRoundTrip) {
  auto p = pair("s1", "pred", "ref", 5);
  p.prior_reference = "old";
  p.temporal_category = TemporalCategory::progression;
  p.demographics["race"] = "Asian";
  p.truncated = true;
  std::ostringstream out;
  write_pairs(out, {p, pair("s2", "a", "b")});
  std::istringstream in(out.str());
  const auto back = read_pairs(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].prior_reference, "old");
  EXPECT_EQ(back[0].temporal_category, TemporalCategory::progression);
  EXPECT_EQ(back[0].encounter_index, 5);
  EXPECT_EQ(back[0].demographics.at("race"), "Asian");
  EXPECT_TRUE(back[0].truncated);
  std::istringstream bad("{\"study_id\":\"x\"}\nnot json");
  EXPECT_THROW(read_pairs(bad), cxrl::DataError);
}

TEST(ReportIo, JsonCarriesAllSections) {
  auto s = suite();
  auto pairs = std::vector<EvalPair>{pair("a", "edema", "edema", 2), pair("b", "effusion", "edema", 6)};
  cxrl::judge::MockJudge judge;
  auto report = score_pairs(pairs, s, &judge, ScoreOptions{});
  report.strata.push_back(stratify(pairs, report.scores, Axis::encounter, nullptr, {}));
  report.conditions = condition_f1(pairs, cxrl::metrics::Lexicon::default_chexpert());
  const auto j = report_to_json(report);
  EXPECT_EQ(j["pairs"], 2);
  EXPECT_TRUE(j["soft_f1"].contains("ci95"));
  EXPECT_EQ(j["error_histogram"]["2"], 1);
  EXPECT_EQ(j["strata"][0]["axis"], "encounter");
  EXPECT_FALSE(report_to_text(report).empty());
  EXPECT_EQ(strata_csv(report.strata[0]).substr(0, 13), "axis,stratum,");
}
