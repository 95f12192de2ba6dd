#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cxrl::corpus {

// Report sections. An absent section is std::nullopt; a present section is
// never empty after trimming.
struct ReportSections {
  std::optional<std::string> indication;
  std::optional<std::string> comparison;
  std::optional<std::string> findings;
  std::optional<std::string> impression;

  bool has_report() const { return findings.has_value() || impression.has_value(); }

  friend bool operator==(const ReportSections&, const ReportSections&) = default;
};

enum class View { frontal_ap, frontal_pa, lateral, other };

std::string_view to_string(View view);
View parse_view(std::string_view text);  // throws DataError on unknown text

inline bool is_frontal(View v) { return v == View::frontal_ap || v == View::frontal_pa; }

struct ImageRef {
  std::string uri;
  View view = View::other;
  // Preprocessing contract only; no pixel work happens in this library.
  int target_width = 512;
  int target_height = 512;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

// Microseconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t micros = 0;
  auto operator<=>(const Timestamp&) const = default;
};

// Parses ISO-8601 "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS[.ffffff]]" with an
// optional "Z" or "+HH:MM"/"-HH:MM" offset. Throws DataError.
Timestamp parse_timestamp(std::string_view text);

struct StudyRecord {
  std::string study_id;
  std::string patient_id;
  std::string timestamp_text;
  Timestamp timestamp;
  std::vector<ImageRef> images;
  ReportSections sections;
  // Keys: gender, age_band, race, site. Missing keys mean unknown.
  std::map<std::string, std::string> demographics;

  bool has_frontal() const;
};

// ---------------------------------------------------------------------------
// Sectioning and filtering

// Recognizes "INDICATION:", "COMPARISON:", "FINDINGS:" and "IMPRESSION:"
// case-insensitively at the start of a line (leading blanks allowed). Text up
// to the next header belongs to the open section; text before the first
// header is dropped. A repeated header appends to its section on a new line.
ReportSections parse_sections(std::string_view raw_report);

// Inverse of parse_sections for present sections, in canonical order.
std::string serialize_sections(const ReportSections& sections);

std::vector<StudyRecord> filter_corpus(std::vector<StudyRecord> records);

// ---------------------------------------------------------------------------
// Prompts

enum class TaskKind { findings_impression, findings_only };

struct PriorContext {
  std::vector<ImageRef> images;
  std::string report_text;
};

struct PromptInstance {
  TaskKind task_kind = TaskKind::findings_only;
  std::string context;  // indication/comparison (+ labeled prior report)
  std::vector<ImageRef> current_images;
  std::optional<PriorContext> prior;
  std::string target;
  std::string text;  // full rendered prompt
};

// Template with the literal "{input}" placeholder.
std::string_view prompt_template(TaskKind kind);

// "Findings: ...\nImpression: ..." over the sections that are present.
std::string target_text(const ReportSections& sections);

PromptInstance build_prompt(const StudyRecord& record, const std::optional<PriorContext>& prior = std::nullopt);

// ---------------------------------------------------------------------------
// Longitudinal structure

// Chronological order within a patient, ties broken by study_id.
std::vector<const StudyRecord*> chronological(const std::vector<StudyRecord>& records);

// For one patient's studies: the latest earlier study with a frontal image
// and a report, or nullopt.
std::map<std::string, std::optional<std::string>> link_prior(const std::vector<StudyRecord>& patient_records);

// 1-based chronological rank within one patient.
std::map<std::string, int> encounter_index(const std::vector<StudyRecord>& patient_records);

// "1".."4" or "5+".
std::string encounter_bucket(int index);

inline const std::vector<std::string>& encounter_bucket_names() {
  static const std::vector<std::string> names{"1", "2", "3", "4", "5+"};
  return names;
}

// Corpus-wide versions grouping by patient_id.
std::map<std::string, std::optional<std::string>> link_prior_all(const std::vector<StudyRecord>& records);
std::map<std::string, int> encounter_index_all(const std::vector<StudyRecord>& records);

// Prior context (images + serialized report) for a linked prior study.
PriorContext make_prior_context(const StudyRecord& prior);

// First frontal image, AP before PA. nullopt when there is none.
std::optional<ImageRef> key_image(const StudyRecord& record);

// ---------------------------------------------------------------------------
// Splitting

struct Split {
  std::vector<StudyRecord> train;
  std::vector<StudyRecord> validation;
};

// Seeded record-level shuffle; the first n go to validation.
Split split_validation(const std::vector<StudyRecord>& records, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// JSONL I/O

// Reads one StudyRecord per non-blank line; raw "report" strings are run
// through parse_sections. Throws DataError with the 1-based line number.
std::vector<StudyRecord> read_corpus(std::istream& in);
std::vector<StudyRecord> read_corpus_file(const std::string& path);  // IoError if unreadable

std::string to_json_line(const StudyRecord& record);
void write_corpus(std::ostream& out, const std::vector<StudyRecord>& records);
void write_corpus_file(const std::string& path, const std::vector<StudyRecord>& records);

StudyRecord record_from_json_line(std::string_view line, std::size_t line_number = 0);

}  // namespace cxrl::corpus
