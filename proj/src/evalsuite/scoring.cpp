#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cxrl/errors.hpp"
#include "cxrl/evalsuite.hpp"
#include "cxrl/util/rng.hpp"

namespace cxrl::evalsuite {

void ErrorHistogram::add(int errors) {
  if (errors <= 1) {
    ++le1;
  } else if (errors == 2) {
    ++two;
  } else if (errors == 3) {
    ++three;
  } else {
    ++ge4;
  }
}

namespace {

// Indices of `pairs` sorted by study_id, so sums do not depend on input order.
std::vector<std::size_t> fold_order(const std::vector<PairScore>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].study_id < scores[b].study_id; });
  return order;
}

double mean_of(const std::vector<double>& values, const std::vector<std::size_t>& order) {
  double s = 0.0;
  for (std::size_t i : order) s += values[i];
  return s / static_cast<double>(order.size());
}

Interval bootstrap(const std::vector<double>& values, const std::vector<std::size_t>& order, std::size_t resamples,
                   std::uint64_t seed) {
  Interval iv;
  iv.mean = mean_of(values, order);
  iv.lo = iv.hi = iv.mean;
  if (resamples == 0 || order.size() < 2) return iv;

  Rng rng(seed);
  std::vector<double> means(resamples);
  const std::size_t n = order.size();
  for (std::size_t b = 0; b < resamples; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += values[order[rng.below(n)]];
    means[b] = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double last = static_cast<double>(resamples - 1);
  iv.lo = means[static_cast<std::size_t>(std::floor(0.025 * last))];
  iv.hi = means[static_cast<std::size_t>(std::ceil(0.975 * last))];
  return iv;
}

}  // namespace

EvalReport score_pairs(const std::vector<EvalPair>& pairs, const metrics::MetricSuite& suite, judge::Judge* judge,
                       const ScoreOptions& options) {
  if (pairs.empty()) throw std::invalid_argument("score_pairs: no pairs to score");

  std::vector<std::pair<std::string, std::string>> texts;
  texts.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.reference.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw std::invalid_argument("score_pairs: study " + p.study_id + " has an empty reference");
    }
    texts.emplace_back(p.prediction, p.reference);
  }
  const auto vectors = suite.score_batch(texts, options.threads);

  EvalReport report;
  report.pairs = pairs.size();
  report.scores.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& s = report.scores[i];
    s.study_id = pairs[i].study_id;
    s.metrics = vectors[i];
    s.composite_raw = metrics::composite_raw(s.metrics, options.coefficients);
    if (judge != nullptr) {
      try {
        s.metrics.judge_errors = judge::count_errors(pairs[i].prediction, pairs[i].reference, *judge).error_count;
      } catch (const ServiceError& e) {
        ++report.judge_failures;
        if (report.judge_error.empty()) report.judge_error = e.what();
      }
    }
  }

  const auto order = fold_order(report.scores);
  auto column = [&](auto get) {
    std::vector<double> v(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) v[i] = get(report.scores[i]);
    return v;
  };
  const std::size_t B = options.bootstrap_resamples;
  report.bleu2 = bootstrap(column([](const PairScore& s) { return s.metrics.bleu2; }), order, B, options.seed);
  report.soft_f1 = bootstrap(column([](const PairScore& s) { return s.metrics.soft_f1; }), order, B, options.seed);
  report.semb = bootstrap(column([](const PairScore& s) { return s.metrics.semb; }), order, B, options.seed);
  report.radgraph_f1 =
      bootstrap(column([](const PairScore& s) { return s.metrics.radgraph_f1; }), order, B, options.seed);
  report.composite_raw = bootstrap(column([](const PairScore& s) { return s.composite_raw; }), order, B, options.seed);
  try {
    report.composite_reported = metrics::report_composite(report.composite_raw.mean, options.coefficients);
  } catch (const std::domain_error&) {
    report.composite_reported.reset();
  }

  if (judge != nullptr) {
    std::vector<double> errors;
    std::vector<std::size_t> judged;
    ErrorHistogram hist;
    for (std::size_t i : order) {
      if (const auto e = report.scores[i].metrics.judge_errors) {
        judged.push_back(errors.size());
        errors.push_back(*e);
        hist.add(*e);
      }
    }
    if (!errors.empty()) {
      report.judge_errors = bootstrap(errors, judged, B, options.seed);
      report.histogram = hist;
    }
  }
  return report;
}

std::string to_string(SectionScope scope) {
  switch (scope) {
    case SectionScope::findings: return "findings";
    case SectionScope::impression: return "impression";
    case SectionScope::full: break;
  }
  return "full";
}

SectionScope parse_section_scope(const std::string& text) {
  if (text == "full") return SectionScope::full;
  if (text == "findings") return SectionScope::findings;
  if (text == "impression") return SectionScope::impression;
  throw std::invalid_argument("unknown section scope '" + text + "'");
}

SectionView restrict_to_section(const std::vector<EvalPair>& pairs, SectionScope scope) {
  SectionView view;
  if (scope == SectionScope::full) {
    view.pairs = pairs;
    return view;
  }
  auto pick = [scope](const std::string& text) {
    const auto sections = corpus::parse_sections(text);
    return scope == SectionScope::findings ? sections.findings : sections.impression;
  };
  for (const auto& p : pairs) {
    auto ref = pick(p.reference);
    if (!ref) {
      ++view.excluded;
      continue;
    }
    EvalPair q = p;
    q.reference = std::move(*ref);
    q.prediction = pick(p.prediction).value_or("");
    view.pairs.push_back(std::move(q));
  }
  return view;
}

ConditionTable condition_f1(const std::vector<EvalPair>& pairs, const metrics::Lexicon& lexicon) {
  ConditionTable table;
  table.rows.resize(lexicon.size());
  for (std::size_t l = 0; l < lexicon.size(); ++l) table.rows[l].label = lexicon.labels[l].name;

  for (const auto& p : pairs) {
    const auto pred = metrics::label_pathologies(p.prediction, lexicon);
    const auto ref = metrics::label_pathologies(p.reference, lexicon);
    for (std::size_t l = 0; l < lexicon.size(); ++l) {
      const bool y = ref.indicators[l] != 0;
      const bool yhat = pred.indicators[l] != 0;
      if (y && yhat) ++table.rows[l].tp;
      if (!y && yhat) ++table.rows[l].fp;
      if (y && !yhat) ++table.rows[l].fn;
    }
  }

  double f1_sum = 0.0;
  std::size_t defined = 0;
  for (auto& row : table.rows) {
    const std::size_t positives = row.tp + row.fn;
    if (positives == 0) continue;  // never affirmed in a reference
    row.recall = static_cast<double>(row.tp) / static_cast<double>(positives);
    row.precision = row.tp + row.fp > 0 ? static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fp) : 0.0;
    row.f1 = *row.precision + *row.recall > 0.0 ? 2.0 * *row.precision * *row.recall / (*row.precision + *row.recall) : 0.0;
    f1_sum += *row.f1;
    ++defined;
  }
  if (defined > 0) table.macro_f1 = f1_sum / static_cast<double>(defined);
  return table;
}

}  // namespace cxrl::evalsuite
