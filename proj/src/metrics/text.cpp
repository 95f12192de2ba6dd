#include <cctype>

#include "cxrl/metrics.hpp"

namespace cxrl::metrics {
namespace {

bool is_separator(unsigned char c) { return std::isspace(c) || std::ispunct(c); }

void tokenize_into(std::string_view text, std::vector<std::string>& out) {
  std::string current;
  for (unsigned char c : text) {
    if (is_separator(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  tokenize_into(text, out);
  return out;
}

std::vector<std::vector<std::string>> split_sentences(std::string_view text) {
  std::vector<std::vector<std::string>> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    std::vector<std::string> toks;
    tokenize_into(text.substr(start, end - start), toks);
    if (!toks.empty()) out.push_back(std::move(toks));
    start = end + 1;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.') {
      const bool decimal = i > 0 && i + 1 < text.size() && is_digit(text[i - 1]) && is_digit(text[i + 1]);
      if (!decimal) flush(i);
    } else if (c == '!' || c == '?' || c == ';' || c == '\n') {
      flush(i);
    }
  }
  if (start <= text.size()) flush(text.size());
  return out;
}

}  // namespace cxrl::metrics
