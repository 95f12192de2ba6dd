#pragma once

#include <string>
#include <vector>

namespace cxrl::metrics::detail {

using Phrase = std::vector<std::string>;

std::vector<Phrase> to_phrases(const std::vector<std::string>& texts);

bool matches_at(const std::vector<std::string>& sentence, std::size_t at, const Phrase& phrase);

// True when some cue ends inside [start - window, start) and begins no
// earlier than start - window.
bool cue_before(const std::vector<std::string>& sentence, std::size_t start, const std::vector<Phrase>& cues,
                int window);

std::string join(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end);

}  // namespace cxrl::metrics::detail
