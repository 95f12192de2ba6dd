#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>

#include "cxrl/corpus.hpp"
#include "cxrl/errors.hpp"

namespace cxrl::corpus {
namespace {

using json = nlohmann::ordered_json;

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

std::string require_string(const json& obj, const char* key) {
  const json* v = find(obj, key);
  if (v == nullptr || !v->is_string()) throw DataError(std::string("missing or non-string field '") + key + "'");
  return v->get<std::string>();
}

std::optional<std::string> normalized(const json& obj, const char* key) {
  const json* v = find(obj, key);
  if (v == nullptr) return std::nullopt;
  if (!v->is_string()) throw DataError(std::string("field '") + key + "' must be a string");
  // Re-run the section trimming rule so empty-after-trim becomes absent.
  auto s = v->get<std::string>();
  std::size_t b = s.find_first_not_of(" \t\r\n\f\v");
  if (b == std::string::npos) return std::nullopt;
  std::size_t e = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(b, e - b + 1);
}

}  // namespace

StudyRecord record_from_json_line(std::string_view line, std::size_t line_number) {
  try {
    const json j = json::parse(line);
    if (!j.is_object()) throw DataError("record must be a JSON object");

    StudyRecord r;
    r.study_id = require_string(j, "study_id");
    r.patient_id = require_string(j, "patient_id");
    r.timestamp_text = require_string(j, "timestamp");
    r.timestamp = parse_timestamp(r.timestamp_text);

    if (const json* imgs = find(j, "images")) {
      if (!imgs->is_array()) throw DataError("'images' must be an array");
      for (const auto& im : *imgs) {
        ImageRef ref;
        ref.uri = require_string(im, "uri");
        ref.view = parse_view(require_string(im, "view"));
        r.images.push_back(std::move(ref));
      }
    }

    if (const json* rep = find(j, "report")) {
      if (rep->is_string()) {
        r.sections = parse_sections(rep->get<std::string>());
      } else if (rep->is_object()) {
        r.sections.indication = normalized(*rep, "indication");
        r.sections.comparison = normalized(*rep, "comparison");
        r.sections.findings = normalized(*rep, "findings");
        r.sections.impression = normalized(*rep, "impression");
      } else {
        throw DataError("'report' must be an object or a raw report string");
      }
    }

    if (const json* demo = find(j, "demographics")) {
      if (!demo->is_object()) throw DataError("'demographics' must be an object");
      for (const char* key : {"gender", "age_band", "race", "site"}) {
        if (auto v = normalized(*demo, key)) r.demographics[key] = *v;
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed JSON: ") + e.what(), line_number);
  } catch (const DataError& e) {
    if (e.line() != 0 || line_number == 0) throw;
    throw DataError(e.what(), line_number);
  }
}

std::vector<StudyRecord> read_corpus(std::istream& in) {
  std::vector<StudyRecord> out;
  std::string line;
  std::size_t number = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(record_from_json_line(line, number));
    if (!seen.insert(out.back().study_id).second) throw DataError("duplicate study_id '" + out.back().study_id + "'", number);
  }
  return out;
}

std::vector<StudyRecord> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file '" + path + "'");
  return read_corpus(in);
}

std::string to_json_line(const StudyRecord& r) {
  json j;
  j["study_id"] = r.study_id;
  j["patient_id"] = r.patient_id;
  j["timestamp"] = r.timestamp_text;
  j["images"] = json::array();
  for (const auto& im : r.images) j["images"].push_back({{"uri", im.uri}, {"view", to_string(im.view)}});
  json rep = json::object();
  if (r.sections.indication) rep["indication"] = *r.sections.indication;
  if (r.sections.comparison) rep["comparison"] = *r.sections.comparison;
  if (r.sections.findings) rep["findings"] = *r.sections.findings;
  if (r.sections.impression) rep["impression"] = *r.sections.impression;
  j["report"] = std::move(rep);
  if (!r.demographics.empty()) {
    json demo = json::object();
    for (const auto& [k, v] : r.demographics) demo[k] = v;
    j["demographics"] = std::move(demo);
  }
  return j.dump();
}

void write_corpus(std::ostream& out, const std::vector<StudyRecord>& records) {
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

void write_corpus_file(const std::string& path, const std::vector<StudyRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_corpus(out, records);
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace cxrl::corpus
