#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace findr {

// std::*_distribution output is implementation-defined, so artifacts that
// must be byte-identical across toolchains draw through these helpers, which
// only depend on the (standardized) raw mt19937_64 stream.
class DeterministicRng {
 public:
  explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}

  /// Seed derived from the SHA-256 of an arbitrary key string.
  static DeterministicRng from_key(std::string_view key);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  double standard_normal();

  /// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace findr
