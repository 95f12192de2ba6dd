#include <algorithm>
#include <stdexcept>

#include "cxrl/corpus.hpp"
#include "cxrl/util/rng.hpp"

namespace cxrl::corpus {
namespace {

void require_single_patient(const std::vector<StudyRecord>& records) {
  for (const auto& r : records) {
    if (r.patient_id != records.front().patient_id) {
      throw std::invalid_argument("expected studies of a single patient, saw " + records.front().patient_id +
                                  " and " + r.patient_id);
    }
  }
}

std::map<std::string, std::vector<StudyRecord>> by_patient(const std::vector<StudyRecord>& records) {
  std::map<std::string, std::vector<StudyRecord>> groups;
  for (const auto& r : records) groups[r.patient_id].push_back(r);
  return groups;
}

}  // namespace

std::vector<const StudyRecord*> chronological(const std::vector<StudyRecord>& records) {
  std::vector<const StudyRecord*> order;
  order.reserve(records.size());
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const StudyRecord* a, const StudyRecord* b) {
    if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
    return a->study_id < b->study_id;
  });
  return order;
}

std::map<std::string, std::optional<std::string>> link_prior(const std::vector<StudyRecord>& patient_records) {
  std::map<std::string, std::optional<std::string>> out;
  if (patient_records.empty()) return out;
  require_single_patient(patient_records);

  const auto order = chronological(patient_records);
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::optional<std::string> prior;
    for (std::size_t j = i; j-- > 0;) {
      const StudyRecord* c = order[j];
      // Strictly earlier only: a same-timestamp study is never a prior.
      if (c->timestamp < order[i]->timestamp && c->has_frontal() && c->sections.has_report()) {
        prior = c->study_id;
        break;
      }
    }
    out[order[i]->study_id] = prior;
  }
  return out;
}

std::map<std::string, int> encounter_index(const std::vector<StudyRecord>& patient_records) {
  std::map<std::string, int> out;
  if (patient_records.empty()) return out;
  require_single_patient(patient_records);
  int rank = 0;
  for (const StudyRecord* r : chronological(patient_records)) out[r->study_id] = ++rank;
  return out;
}

std::string encounter_bucket(int index) {
  if (index < 1) throw std::invalid_argument("encounter index must be >= 1");
  return index >= 5 ? "5+" : std::to_string(index);
}

std::map<std::string, std::optional<std::string>> link_prior_all(const std::vector<StudyRecord>& records) {
  std::map<std::string, std::optional<std::string>> out;
  for (const auto& [pid, group] : by_patient(records)) out.merge(link_prior(group));
  return out;
}

std::map<std::string, int> encounter_index_all(const std::vector<StudyRecord>& records) {
  std::map<std::string, int> out;
  for (const auto& [pid, group] : by_patient(records)) out.merge(encounter_index(group));
  return out;
}

PriorContext make_prior_context(const StudyRecord& prior) {
  PriorContext ctx;
  if (auto key = key_image(prior)) ctx.images.push_back(*key);
  ctx.report_text = target_text(prior.sections);
  return ctx;
}

std::optional<ImageRef> key_image(const StudyRecord& record) {
  for (View preferred : {View::frontal_ap, View::frontal_pa}) {
    for (const auto& img : record.images) {
      if (img.view == preferred) return img;
    }
  }
  return std::nullopt;
}

Split split_validation(const std::vector<StudyRecord>& records, std::size_t n, std::uint64_t seed) {
  if (n > records.size()) {
    throw std::invalid_argument("split_validation: requested " + std::to_string(n) + " validation records from " +
                                std::to_string(records.size()));
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  Split split;
  split.validation.reserve(n);
  split.train.reserve(records.size() - n);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n ? split.validation : split.train).push_back(records[order[i]]);
  }
  return split;
}

}  // namespace cxrl::corpus
