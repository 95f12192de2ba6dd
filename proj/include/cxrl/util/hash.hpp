#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cxrl {

// 64-bit FNV-1a. Stable across platforms; used for config/checkpoint
// fingerprints and cache keys, not for security.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string to_hex(std::uint64_t value);

}  // namespace cxrl
