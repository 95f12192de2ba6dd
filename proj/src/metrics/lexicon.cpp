#include <fstream>
#include <nlohmann/json.hpp>

#include "cxrl/errors.hpp"
#include "cxrl/metrics.hpp"
#include "phrase.hpp"

namespace cxrl::metrics {

namespace detail {

std::vector<Phrase> to_phrases(const std::vector<std::string>& texts) {
  std::vector<Phrase> out;
  for (const auto& t : texts) {
    auto toks = tokenize(t);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

bool matches_at(const std::vector<std::string>& sentence, std::size_t at, const Phrase& phrase) {
  if (at + phrase.size() > sentence.size()) return false;
  for (std::size_t k = 0; k < phrase.size(); ++k) {
    if (sentence[at + k] != phrase[k]) return false;
  }
  return true;
}

bool cue_before(const std::vector<std::string>& sentence, std::size_t start, const std::vector<Phrase>& cues,
                int window) {
  const std::size_t lo = start > static_cast<std::size_t>(window) ? start - static_cast<std::size_t>(window) : 0;
  for (const auto& cue : cues) {
    if (cue.size() > start - lo) continue;
    for (std::size_t b = lo; b + cue.size() <= start; ++b) {
      if (matches_at(sentence, b, cue)) return true;
    }
  }
  return false;
}

std::string join(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace detail

namespace {

using ojson = nlohmann::ordered_json;

std::vector<std::string> string_list(const ojson& obj, const char* key, const std::string& owner) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end()) return out;
  if (!it->is_array()) throw DataError("'" + owner + "." + key + "' must be an array of strings");
  for (const auto& v : *it) {
    if (!v.is_string()) throw DataError("'" + owner + "." + key + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

ojson read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return ojson::parse(in);
  } catch (const ojson::exception& e) {
    throw DataError("malformed JSON in '" + path + "': " + e.what());
  }
}

const std::vector<std::string> kNegators{"no", "not", "without", "negative for", "free of", "resolved"};

}  // namespace

Lexicon Lexicon::from_json(const ojson& j) {
  if (!j.is_object()) throw DataError("lexicon must be a JSON object");
  Lexicon lex;
  for (const auto& [name, spec] : j.items()) {
    if (name == "negation_window") {
      lex.negation_window = spec.get<int>();
      continue;
    }
    if (!spec.is_object()) throw DataError("lexicon entry '" + name + "' must be an object");
    LabelSpec label;
    label.name = name;
    label.triggers = string_list(spec, "triggers", name);
    label.negators = string_list(spec, "negators", name);
    lex.labels.push_back(std::move(label));
  }
  if (lex.labels.empty()) throw DataError("lexicon has no labels");
  return lex;
}

Lexicon Lexicon::from_file(const std::string& path) { return from_json(read_json_file(path)); }

ojson Lexicon::to_json() const {
  ojson j = ojson::object();
  for (const auto& l : labels) j[l.name] = {{"triggers", l.triggers}, {"negators", l.negators}};
  return j;
}

const Lexicon& Lexicon::default_chexpert() {
  static const Lexicon lex = [] {
    auto label = [](std::string name, std::vector<std::string> triggers) {
      return LabelSpec{std::move(name), std::move(triggers), kNegators};
    };
    Lexicon l;
    l.labels = {
        label("atelectasis", {"atelectasis", "atelectatic", "collapse"}),
        label("cardiomegaly", {"cardiomegaly", "enlarged heart", "enlarged cardiac silhouette"}),
        label("consolidation", {"consolidation", "consolidations", "consolidative"}),
        label("edema", {"edema", "vascular congestion"}),
        label("enlarged_cardiomediastinum", {"widened mediastinum", "mediastinal widening", "enlarged cardiomediastinal"}),
        label("fracture", {"fracture", "fractures"}),
        label("lung_lesion", {"nodule", "nodules", "mass", "lesion"}),
        label("lung_opacity", {"opacity", "opacities", "opacification"}),
        label("no_finding", {"no acute cardiopulmonary", "no acute disease", "no acute abnormality", "normal chest"}),
        label("pleural_effusion", {"effusion", "effusions", "pleural fluid"}),
        label("pleural_other", {"pleural thickening", "pleural plaque", "pleural plaques"}),
        label("pneumonia", {"pneumonia", "infection"}),
        label("pneumothorax", {"pneumothorax"}),
        label("support_devices", {"tube", "catheter", "pacemaker", "picc"}),
    };
    return l;
  }();
  return lex;
}

PatternSet PatternSet::from_json(const ojson& j) {
  if (!j.is_object()) throw DataError("pattern set must be a JSON object");
  PatternSet p;
  for (const auto& [name, spec] : j.items()) {
    if (name == "window") {
      p.window = spec.get<int>();
      continue;
    }
    if (!spec.is_object()) throw DataError("pattern entry '" + name + "' must be an object");
    auto triggers = string_list(spec, "triggers", name);
    auto negators = string_list(spec, "negators", name);
    if (name == "anatomy") {
      p.anatomy = std::move(triggers);
    } else if (name == "observation") {
      p.observation = std::move(triggers);
    } else if (name == "hedges") {
      p.hedges = std::move(triggers);
    } else {
      throw DataError("unknown pattern key '" + name + "'");
    }
    for (auto& n : negators) {
      if (std::find(p.negators.begin(), p.negators.end(), n) == p.negators.end()) p.negators.push_back(std::move(n));
    }
  }
  if (p.anatomy.empty() && p.observation.empty()) throw DataError("pattern set has no patterns");
  return p;
}

PatternSet PatternSet::from_file(const std::string& path) { return from_json(read_json_file(path)); }

const PatternSet& PatternSet::default_radiology() {
  static const PatternSet patterns = [] {
    PatternSet p;
    const std::vector<std::string> regions{"lung", "lungs", "base", "bases", "apex", "lower lobe", "upper lobe",
                                           "middle lobe", "hemithorax", "costophrenic angle"};
    for (const auto& r : regions) p.anatomy.push_back(r);
    for (const char* side : {"right", "left", "bilateral"}) {
      for (const auto& r : regions) p.anatomy.push_back(std::string(side) + " " + r);
    }
    for (const char* a : {"heart", "mediastinum", "hilum", "hila", "diaphragm", "spine", "ribs", "pleura"}) {
      p.anatomy.emplace_back(a);
    }
    for (const auto& label : Lexicon::default_chexpert().labels) {
      if (label.name == "no_finding") continue;
      for (const auto& t : label.triggers) p.observation.push_back(t);
    }
    p.negators = kNegators;
    p.hedges = {"possible", "possibly", "probable", "likely", "may", "questionable", "suspected", "suggestive of"};
    return p;
  }();
  return patterns;
}

}  // namespace cxrl::metrics
