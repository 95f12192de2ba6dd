#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cxrl/corpus.hpp"
#include "cxrl/judge.hpp"
#include "cxrl/metrics.hpp"

namespace cxrl::evalsuite {

struct EvalPair {
  std::string study_id;
  std::string prediction;
  std::string reference;
  std::optional<std::string> prior_reference;
  int encounter_index = 1;
  std::optional<judge::TemporalCategory> temporal_category;
  std::map<std::string, std::string> demographics;
  bool truncated = false;

  std::string encounter_bucket() const { return corpus::encounter_bucket(encounter_index); }
};

// ---------------------------------------------------------------------------
// Inference

struct InferenceOptions {
  bool use_prior = false;
  int max_tokens = 256;
};

struct InferenceResult {
  std::vector<EvalPair> pairs;
  std::vector<std::string> prompts;  // rendered prompt text per pair
  bool complete = true;
  std::string error;  // set when a backend failure stopped the run
};

// Builds one prompt per record and decodes at temperature 0. Only the key
// image is passed (the first image for lateral-only studies); prior context
// is added when use_prior is set and a prior is linked. A backend failure
// stops the run; pairs produced so far are returned and flagged incomplete.
InferenceResult run_inference(const std::vector<corpus::StudyRecord>& records, judge::Generator& backend,
                              const InferenceOptions& options = {});

// Pairs whose prediction is the linked prior report, verbatim. Studies with
// no prior are excluded and counted.
struct BaselineResult {
  std::vector<EvalPair> pairs;
  std::size_t excluded = 0;
};
BaselineResult copy_prior_baseline(const std::vector<corpus::StudyRecord>& records);

// ---------------------------------------------------------------------------
// Scoring

enum class SectionScope { full, findings, impression };

std::string to_string(SectionScope scope);
SectionScope parse_section_scope(const std::string& text);  // std::invalid_argument on unknown scopes

struct SectionView {
  std::vector<EvalPair> pairs;
  std::size_t excluded = 0;  // references without the section
};

// Rewrites prediction and reference to the body of one section; the prior
// stays whole. Pairs whose reference lacks the section are dropped and
// counted; a prediction without it becomes empty. `full` is a no-op.
SectionView restrict_to_section(const std::vector<EvalPair>& pairs, SectionScope scope);

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct PairScore {
  std::string study_id;
  metrics::MetricVector metrics;
  double composite_raw = 0.0;
};

// Error-count buckets {<=1, 2, 3, >=4}.
struct ErrorHistogram {
  std::size_t le1 = 0;
  std::size_t two = 0;
  std::size_t three = 0;
  std::size_t ge4 = 0;

  void add(int errors);
  std::size_t total() const { return le1 + two + three + ge4; }
  friend bool operator==(const ErrorHistogram&, const ErrorHistogram&) = default;
};

struct Stratum {
  std::string key;
  std::size_t count = 0;
  bool present = false;  // false when no pair fell in this stratum
  double bleu2 = 0.0;
  double soft_f1 = 0.0;
  double semb = 0.0;
  double radgraph_f1 = 0.0;
  double composite_raw = 0.0;
  std::optional<double> composite_reported;
  std::optional<double> mean_judge_errors;
};

enum class Axis { encounter, temporal, gender, age_band, race };

std::string to_string(Axis axis);
Axis parse_axis(const std::string& text);  // std::invalid_argument on unknown axes

struct StratifiedTable {
  Axis axis = Axis::encounter;
  bool absent = false;  // no pair carries this axis
  std::vector<Stratum> strata;
  std::size_t excluded = 0;  // pairs without a value on this axis
};

struct ConditionRow {
  std::string label;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;  // undefined when no reference affirms the label
};

struct ConditionTable {
  std::vector<ConditionRow> rows;
  std::optional<double> macro_f1;
};

struct ScoreOptions {
  metrics::CompositeCoefficients coefficients;
  std::size_t bootstrap_resamples = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct EvalReport {
  std::size_t pairs = 0;
  Interval bleu2;
  Interval soft_f1;
  Interval semb;
  Interval radgraph_f1;
  Interval composite_raw;
  std::optional<double> composite_reported;  // from the mean raw composite
  std::optional<Interval> judge_errors;
  std::optional<ErrorHistogram> histogram;
  std::size_t judge_failures = 0;
  std::string judge_error;
  std::vector<PairScore> scores;  // input order
  std::vector<StratifiedTable> strata;
  std::optional<ConditionTable> conditions;
};

// Scores every pair (judge errors when a judge is given), aggregates means in
// study_id order with seeded percentile-bootstrap intervals, and fills the
// error histogram. Judge failures leave only the judge fields empty.
EvalReport score_pairs(const std::vector<EvalPair>& pairs, const metrics::MetricSuite& suite, judge::Judge* judge,
                       const ScoreOptions& options = {});

// Groups pairs by the axis value and averages their scores. The temporal axis
// labels (reference, prior_reference) with the judge when a pair has no
// category yet. `scores` must align with `pairs`.
StratifiedTable stratify(std::vector<EvalPair>& pairs, const std::vector<PairScore>& scores, Axis axis,
                         judge::Judge* judge, const metrics::CompositeCoefficients& coefficients);

// Per-label detection scores with reference labels as ground truth.
ConditionTable condition_f1(const std::vector<EvalPair>& pairs, const metrics::Lexicon& lexicon);

// ---------------------------------------------------------------------------
// Output

nlohmann::ordered_json report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);
std::string histogram_csv(const ErrorHistogram& histogram);
std::string strata_csv(const StratifiedTable& table);
std::string conditions_csv(const ConditionTable& table);

nlohmann::ordered_json pair_to_json(const EvalPair& pair);
EvalPair pair_from_json(const nlohmann::ordered_json& j);
void write_pairs(std::ostream& out, const std::vector<EvalPair>& pairs);
std::vector<EvalPair> read_pairs(std::istream& in);

}  // namespace cxrl::evalsuite
