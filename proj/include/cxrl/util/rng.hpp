#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cxrl {

// Seeded generator with platform-independent draws. The std distributions
// are implementation-defined, so uniform/bounded draws are done here from the
// raw mt19937_64 stream to keep runs bit-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Index drawn from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a tag sequence.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

}  // namespace cxrl
