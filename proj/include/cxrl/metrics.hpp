#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cxrl::metrics {

// ---------------------------------------------------------------------------
// Text normalization

// Lowercases and splits on whitespace; ASCII punctuation separates tokens and
// is dropped.
std::vector<std::string> tokenize(std::string_view text);

// Sentences end at '.', '!', '?', ';' and newlines ('.' between digits does
// not split). Each sentence is tokenized; empty sentences are skipped.
std::vector<std::vector<std::string>> split_sentences(std::string_view text);

// ---------------------------------------------------------------------------
// BLEU-2

// Sentence-level BLEU with uniform weights over unigram and bigram modified
// precisions and the standard brevity penalty. No smoothing: any zero
// precision, or an empty candidate, scores 0.
double bleu2(std::string_view candidate, std::string_view reference);

// ---------------------------------------------------------------------------
// Soft token matching

class Embedder {
 public:
  virtual ~Embedder() = default;
  // One unit-norm vector per token, deterministic per token string.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& tokens) = 0;
};

struct SoftScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy max-cosine matching in both directions (BERTScore-style).
SoftScore soft_token_f1(std::string_view candidate, std::string_view reference, Embedder& embedder);

// ---------------------------------------------------------------------------
// Pathology labeling

struct LabelSpec {
  std::string name;
  std::vector<std::string> triggers;
  std::vector<std::string> negators;
};

struct Lexicon {
  std::vector<LabelSpec> labels;
  int negation_window = 3;

  std::size_t size() const { return labels.size(); }

  // {"label": {"triggers": [...], "negators": [...]}, ...}; key order kept.
  static Lexicon from_json(const nlohmann::ordered_json& j);
  static Lexicon from_file(const std::string& path);
  nlohmann::ordered_json to_json() const;

  // The 14 CheXpert-convention labels with rule-based triggers.
  static const Lexicon& default_chexpert();
};

struct PathologyLabels {
  std::vector<int> indicators;

  friend bool operator==(const PathologyLabels&, const PathologyLabels&) = default;
};

// A label fires when one of its triggers occurs with none of its negators
// ending within `negation_window` tokens before it in the same sentence.
PathologyLabels label_pathologies(std::string_view report, const Lexicon& lexicon);

// Names of the labels set to 1.
std::set<std::string> affirmed_labels(const PathologyLabels& labels, const Lexicon& lexicon);

// Cosine similarity; if either side is all-zero the score is 1 when both are
// and 0 otherwise.
double semb_score(const PathologyLabels& candidate, const PathologyLabels& reference);

// ---------------------------------------------------------------------------
// Entity graph

enum class EntityType { anatomy, observation };
enum class Polarity { present, absent, uncertain };
enum class RelationType { modify, located_at, suggestive_of };

struct Entity {
  std::string text;
  EntityType type = EntityType::observation;
  Polarity polarity = Polarity::present;
  auto operator<=>(const Entity&) const = default;
};

struct Relation {
  Entity head;
  Entity tail;
  RelationType type = RelationType::located_at;
  auto operator<=>(const Relation&) const = default;
};

struct EntityGraph {
  std::set<Entity> entities;
  std::set<Relation> relations;

  bool empty() const { return entities.empty() && relations.empty(); }
  friend bool operator==(const EntityGraph&, const EntityGraph&) = default;
};

std::string_view to_string(EntityType t);
std::string_view to_string(Polarity p);
std::string_view to_string(RelationType t);

struct PatternSet {
  std::vector<std::string> anatomy;
  std::vector<std::string> observation;
  std::vector<std::string> negators;
  std::vector<std::string> hedges;
  int window = 3;

  // Same file shape as a Lexicon, with the keys "anatomy" and "observation";
  // an optional "hedges" key supplies uncertainty cues as its triggers.
  static PatternSet from_json(const nlohmann::ordered_json& j);
  static PatternSet from_file(const std::string& path);
  static const PatternSet& default_radiology();
};

// Greedy longest-match spans per sentence. Polarity follows the negation
// window (absent wins over uncertain). Every observation gets a located_at
// relation to every anatomy entity in its sentence.
EntityGraph extract_entities(std::string_view report, const PatternSet& patterns);

// Mean of entity-set F1 and relation-set F1 over exact triples. Each set F1
// is 1 when both sides are empty and 0 when exactly one is.
double radgraph_f1(const EntityGraph& candidate, const EntityGraph& reference);

// ---------------------------------------------------------------------------
// Composite

struct MetricVector {
  double bleu2 = 0.0;
  double soft_f1 = 0.0;
  double semb = 0.0;
  double radgraph_f1 = 0.0;
  std::optional<int> judge_errors;

  friend bool operator==(const MetricVector&, const MetricVector&) = default;
};

struct CompositeCoefficients {
  double w_bleu = 0.0;
  double w_soft = 0.370;
  double w_semb = 0.253;
  double w_radgraph = 0.377;
  double intercept = 0.0;
  bool reciprocal_reporting = false;

  static CompositeCoefficients from_json(const nlohmann::ordered_json& j);
  static CompositeCoefficients from_file(const std::string& path);
  nlohmann::ordered_json to_json() const;
};

struct CompositeScore {
  double raw = 0.0;
  double reported = 0.0;
};

double composite_raw(const MetricVector& mv, const CompositeCoefficients& coeffs);

// Throws std::domain_error when reciprocal reporting meets raw <= 0.
double report_composite(double raw, const CompositeCoefficients& coeffs);

CompositeScore composite(const MetricVector& mv, const CompositeCoefficients& coeffs);

// ---------------------------------------------------------------------------
// Suite

// Bundles the labeler, extractor and embedder behind one scoring call.
class MetricSuite {
 public:
  MetricSuite(Lexicon lexicon, PatternSet patterns, std::shared_ptr<Embedder> embedder);

  // Judge errors are left unset.
  MetricVector score(std::string_view candidate, std::string_view reference) const;

  // Scores in input order; `threads` <= 1 runs inline.
  std::vector<MetricVector> score_batch(const std::vector<std::pair<std::string, std::string>>& pairs,
                                        unsigned threads = 1) const;

  const Lexicon& lexicon() const { return lexicon_; }
  const PatternSet& patterns() const { return patterns_; }
  Embedder& embedder() const { return *embedder_; }

 private:
  Lexicon lexicon_;
  PatternSet patterns_;
  std::shared_ptr<Embedder> embedder_;
};

}  // namespace cxrl::metrics
