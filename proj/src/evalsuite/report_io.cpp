#include <cstdio>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "cxrl/errors.hpp"
#include "cxrl/evalsuite.hpp"

namespace cxrl::evalsuite {

using ojson = nlohmann::ordered_json;

namespace {

ojson interval_json(const Interval& iv) { return {{"mean", iv.mean}, {"ci95", {iv.lo, iv.hi}}}; }

template <typename T>
ojson optional_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

ojson histogram_json(const ErrorHistogram& h) {
  return {{"<=1", h.le1}, {"2", h.two}, {"3", h.three}, {">=4", h.ge4}};
}

ojson table_json(const StratifiedTable& t) {
  ojson strata = ojson::array();
  for (const auto& s : t.strata) {
    ojson row{{"key", s.key}, {"count", s.count}, {"present", s.present}};
    if (s.present) {
      row["bleu2"] = s.bleu2;
      row["soft_f1"] = s.soft_f1;
      row["semb"] = s.semb;
      row["radgraph_f1"] = s.radgraph_f1;
      row["composite_raw"] = s.composite_raw;
      row["composite_reported"] = optional_json(s.composite_reported);
      row["mean_judge_errors"] = optional_json(s.mean_judge_errors);
    }
    strata.push_back(std::move(row));
  }
  return {{"axis", to_string(t.axis)}, {"absent", t.absent}, {"excluded", t.excluded}, {"strata", std::move(strata)}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

ojson report_to_json(const EvalReport& r) {
  ojson j;
  j["pairs"] = r.pairs;
  j["bleu2"] = interval_json(r.bleu2);
  j["soft_f1"] = interval_json(r.soft_f1);
  j["semb"] = interval_json(r.semb);
  j["radgraph_f1"] = interval_json(r.radgraph_f1);
  j["composite_raw"] = interval_json(r.composite_raw);
  j["composite_reported"] = optional_json(r.composite_reported);
  j["judge_errors"] = r.judge_errors ? interval_json(*r.judge_errors) : ojson(nullptr);
  j["error_histogram"] = r.histogram ? histogram_json(*r.histogram) : ojson(nullptr);
  j["judge_failures"] = r.judge_failures;
  if (!r.judge_error.empty()) j["judge_error"] = r.judge_error;
  j["strata"] = ojson::array();
  for (const auto& t : r.strata) j["strata"].push_back(table_json(t));
  if (r.conditions) {
    ojson rows = ojson::array();
    for (const auto& row : r.conditions->rows) {
      rows.push_back({{"label", row.label},
                      {"tp", row.tp},
                      {"fp", row.fp},
                      {"fn", row.fn},
                      {"precision", optional_json(row.precision)},
                      {"recall", optional_json(row.recall)},
                      {"f1", optional_json(row.f1)}});
    }
    j["conditions"] = {{"rows", std::move(rows)}, {"macro_f1", optional_json(r.conditions->macro_f1)}};
  }
  return j;
}

std::string report_to_text(const EvalReport& r) {
  std::ostringstream out;
  out << "pairs: " << r.pairs << "\n\n";
  out << pad("metric", 16) << pad("mean", 10) << pad("ci_lo", 10) << "ci_hi\n";
  auto line = [&](const std::string& name, const Interval& iv) {
    out << pad(name, 16) << pad(fmt(iv.mean), 10) << pad(fmt(iv.lo), 10) << fmt(iv.hi) << '\n';
  };
  line("bleu2", r.bleu2);
  line("soft_f1", r.soft_f1);
  line("semb", r.semb);
  line("radgraph_f1", r.radgraph_f1);
  line("composite_raw", r.composite_raw);
  if (r.judge_errors) line("judge_errors", *r.judge_errors);
  if (r.composite_reported) out << pad("composite", 16) << fmt(*r.composite_reported) << '\n';
  if (r.histogram) {
    out << "\nerror histogram: <=1 " << r.histogram->le1 << "  2 " << r.histogram->two << "  3 " << r.histogram->three
        << "  >=4 " << r.histogram->ge4 << '\n';
  }
  for (const auto& t : r.strata) {
    out << "\n[" << to_string(t.axis) << "]";
    if (t.absent) {
      out << " absent\n";
      continue;
    }
    out << " excluded=" << t.excluded << '\n';
    out << pad("stratum", 18) << pad("n", 6) << pad("bleu2", 9) << pad("soft_f1", 9) << pad("semb", 9)
        << pad("radgraph", 9) << "composite\n";
    for (const auto& s : t.strata) {
      out << pad(s.key, 18) << pad(std::to_string(s.count), 6);
      if (!s.present) {
        out << "absent\n";
        continue;
      }
      out << pad(fmt(s.bleu2), 9) << pad(fmt(s.soft_f1), 9) << pad(fmt(s.semb), 9) << pad(fmt(s.radgraph_f1), 9)
          << (s.composite_reported ? fmt(*s.composite_reported) : "n/a") << '\n';
    }
  }
  if (r.conditions) {
    out << "\n[conditions]\n" << pad("label", 28) << pad("tp", 5) << pad("fp", 5) << pad("fn", 5) << "f1\n";
    for (const auto& row : r.conditions->rows) {
      out << pad(row.label, 28) << pad(std::to_string(row.tp), 5) << pad(std::to_string(row.fp), 5)
          << pad(std::to_string(row.fn), 5) << (row.f1 ? fmt(*row.f1) : "undefined") << '\n';
    }
    if (r.conditions->macro_f1) out << pad("macro", 43) << fmt(*r.conditions->macro_f1) << '\n';
  }
  return out.str();
}

std::string histogram_csv(const ErrorHistogram& h) {
  std::ostringstream out;
  out << "bucket,count\n<=1," << h.le1 << "\n2," << h.two << "\n3," << h.three << "\n>=4," << h.ge4 << '\n';
  return out.str();
}

std::string strata_csv(const StratifiedTable& t) {
  std::ostringstream out;
  out << "axis,stratum,count,present,bleu2,soft_f1,semb,radgraph_f1,composite_raw,composite_reported,mean_judge_errors\n";
  for (const auto& s : t.strata) {
    out << to_string(t.axis) << ',' << s.key << ',' << s.count << ',' << (s.present ? "true" : "false") << ',';
    if (s.present) {
      out << fmt(s.bleu2) << ',' << fmt(s.soft_f1) << ',' << fmt(s.semb) << ',' << fmt(s.radgraph_f1) << ','
          << fmt(s.composite_raw) << ',' << (s.composite_reported ? fmt(*s.composite_reported) : "") << ','
          << (s.mean_judge_errors ? fmt(*s.mean_judge_errors) : "");
    } else {
      out << ",,,,,,";
    }
    out << '\n';
  }
  return out.str();
}

std::string conditions_csv(const ConditionTable& t) {
  std::ostringstream out;
  out << "label,tp,fp,fn,precision,recall,f1\n";
  for (const auto& r : t.rows) {
    out << r.label << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',';
    if (r.f1) {
      out << fmt(*r.precision) << ',' << fmt(*r.recall) << ',' << fmt(*r.f1) << '\n';
    } else {
      out << "undefined,undefined,undefined\n";
    }
  }
  return out.str();
}

ojson pair_to_json(const EvalPair& p) {
  ojson j{{"study_id", p.study_id},
          {"prediction", p.prediction},
          {"reference", p.reference},
          {"prior_reference", optional_json(p.prior_reference)},
          {"encounter_index", p.encounter_index},
          {"temporal_category",
           p.temporal_category ? ojson(std::string(judge::to_string(*p.temporal_category))) : ojson(nullptr)},
          {"demographics", p.demographics},
          {"truncated", p.truncated}};
  return j;
}

EvalPair pair_from_json(const ojson& j) {
  try {
    EvalPair p;
    p.study_id = j.at("study_id").get<std::string>();
    p.prediction = j.at("prediction").get<std::string>();
    p.reference = j.at("reference").get<std::string>();
    if (auto it = j.find("prior_reference"); it != j.end() && !it->is_null()) p.prior_reference = it->get<std::string>();
    p.encounter_index = j.value("encounter_index", 1);
    if (auto it = j.find("temporal_category"); it != j.end() && !it->is_null()) {
      p.temporal_category = judge::parse_temporal(it->get<std::string>());
    }
    if (auto it = j.find("demographics"); it != j.end() && it->is_object()) {
      p.demographics = it->get<std::map<std::string, std::string>>();
    }
    p.truncated = j.value("truncated", false);
    return p;
  } catch (const ojson::exception& e) {
    throw DataError(std::string("malformed evaluation pair: ") + e.what());
  } catch (const ServiceError& e) {
    throw DataError(e.what());
  }
}

void write_pairs(std::ostream& out, const std::vector<EvalPair>& pairs) {
  for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
}

std::vector<EvalPair> read_pairs(std::istream& in) {
  std::vector<EvalPair> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(pair_from_json(ojson::parse(line)));
    } catch (const ojson::exception& e) {
      throw DataError(std::string("malformed JSON: ") + e.what(), n);
    } catch (const DataError& e) {
      throw DataError(e.what(), n);
    }
  }
  return out;
}

}  // namespace cxrl::evalsuite
