#include <stdexcept>

#include "cxrl/corpus.hpp"

namespace cxrl::corpus {
namespace {

constexpr std::string_view kFindingsImpressionTemplate =
    "This is a radiology report generation task. Here is the context: {input}\n"
    "Given the image and the context, provide the report in the following format:\n"
    "Findings: [write the findings]\n"
    "Impression: [write the impression]\n"
    "Now write the report in the format above.";

constexpr std::string_view kFindingsTemplate =
    "This is a radiology report generation task. Here is the context: {input}\n"
    "Given the image and the context, provide the findings in the following format:\n"
    "Findings: [write the findings]\n"
    "Now write the report in the format above.";

constexpr std::string_view kPlaceholder = "{input}";

}  // namespace

std::string_view prompt_template(TaskKind kind) {
  return kind == TaskKind::findings_impression ? kFindingsImpressionTemplate : kFindingsTemplate;
}

std::string target_text(const ReportSections& sections) {
  std::string out;
  if (sections.findings) out += "Findings: " + *sections.findings;
  if (sections.impression) {
    if (!out.empty()) out += '\n';
    out += "Impression: " + *sections.impression;
  }
  return out;
}

PromptInstance build_prompt(const StudyRecord& record, const std::optional<PriorContext>& prior) {
  if (!record.sections.has_report()) {
    throw std::invalid_argument("build_prompt: study " + record.study_id + " has neither findings nor impression");
  }

  PromptInstance p;
  p.task_kind = record.sections.impression ? TaskKind::findings_impression : TaskKind::findings_only;
  p.current_images = record.images;
  p.prior = prior;
  p.target = target_text(record.sections);

  std::vector<std::string> lines;
  if (record.sections.indication) lines.push_back("Indication: " + *record.sections.indication);
  if (record.sections.comparison) lines.push_back("Comparison: " + *record.sections.comparison);
  if (prior) lines.push_back("Prior study report: " + prior->report_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) p.context += '\n';
    p.context += lines[i];
  }

  std::string input;
  auto add_token = [&](std::string_view tok) {
    if (!input.empty()) input += ' ';
    input += tok;
  };
  for (std::size_t i = 0; i < record.images.size(); ++i) add_token("<image>");
  if (prior) {
    for (std::size_t i = 0; i < prior->images.size(); ++i) add_token("<prior_image>");
  }
  if (!p.context.empty()) {
    if (!input.empty()) input += '\n';
    input += p.context;
  }

  std::string_view tmpl = prompt_template(p.task_kind);
  const std::size_t at = tmpl.find(kPlaceholder);
  p.text.reserve(tmpl.size() + input.size());
  p.text.append(tmpl.substr(0, at));
  p.text.append(input);
  p.text.append(tmpl.substr(at + kPlaceholder.size()));
  return p;
}

}  // namespace cxrl::corpus
