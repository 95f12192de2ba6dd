#include <array>
#include <cctype>

#include "cxrl/corpus.hpp"

namespace cxrl::corpus {
namespace {

enum class Section { none, indication, comparison, findings, impression };

struct Header {
  std::string_view word;
  Section section;
};

constexpr std::array<Header, 4> kHeaders{{
    {"indication", Section::indication},
    {"comparison", Section::comparison},
    {"findings", Section::findings},
    {"impression", Section::impression},
}};

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (is_blank(s[b]) || s[b] == '\n')) ++b;
  while (e > b && (is_blank(s[e - 1]) || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

// Returns the section and the offset just past the colon when `line` opens
// with a header.
std::pair<Section, std::size_t> match_header(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && is_blank(line[i])) ++i;
  for (const auto& h : kHeaders) {
    if (line.size() < i + h.word.size() + 1) continue;
    bool same = true;
    for (std::size_t k = 0; k < h.word.size(); ++k) {
      if (std::tolower(static_cast<unsigned char>(line[i + k])) != h.word[k]) {
        same = false;
        break;
      }
    }
    if (same && line[i + h.word.size()] == ':') return {h.section, i + h.word.size() + 1};
  }
  return {Section::none, 0};
}

std::optional<std::string>& slot(ReportSections& out, Section s) {
  switch (s) {
    case Section::indication: return out.indication;
    case Section::comparison: return out.comparison;
    case Section::findings: return out.findings;
    case Section::impression: break;
    case Section::none: break;
  }
  return out.impression;
}

}  // namespace

ReportSections parse_sections(std::string_view raw_report) {
  std::array<std::string, 5> text;
  std::array<bool, 5> seen{};
  Section current = Section::none;

  std::size_t pos = 0;
  while (pos <= raw_report.size()) {
    std::size_t nl = raw_report.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw_report.size();
    std::string_view line = raw_report.substr(pos, nl - pos);

    auto [header, body_at] = match_header(line);
    if (header != Section::none) {
      current = header;
      auto idx = static_cast<std::size_t>(current);
      if (seen[idx]) text[idx] += '\n';
      seen[idx] = true;
      text[idx] += line.substr(body_at);
    } else if (current != Section::none) {
      auto idx = static_cast<std::size_t>(current);
      text[idx] += '\n';
      text[idx] += line;
    }
    pos = nl + 1;
  }

  ReportSections out;
  for (Section s : {Section::indication, Section::comparison, Section::findings, Section::impression}) {
    auto idx = static_cast<std::size_t>(s);
    if (!seen[idx]) continue;
    std::string body = trim(text[idx]);
    if (!body.empty()) slot(out, s) = std::move(body);
  }
  return out;
}

std::string serialize_sections(const ReportSections& sections) {
  std::string out;
  auto add = [&](std::string_view header, const std::optional<std::string>& body) {
    if (!body) return;
    if (!out.empty()) out += '\n';
    out += header;
    out += ' ';
    out += *body;
  };
  add("INDICATION:", sections.indication);
  add("COMPARISON:", sections.comparison);
  add("FINDINGS:", sections.findings);
  add("IMPRESSION:", sections.impression);
  return out;
}

std::vector<StudyRecord> filter_corpus(std::vector<StudyRecord> records) {
  std::vector<StudyRecord> kept;
  kept.reserve(records.size());
  for (auto& r : records) {
    if (r.sections.has_report()) kept.push_back(std::move(r));
  }
  return kept;
}

}  // namespace cxrl::corpus
