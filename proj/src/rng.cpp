#include "findr/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "findr/util.hpp"

namespace findr {

DeterministicRng DeterministicRng::from_key(std::string_view key) {
  const std::string hex = sha256_hex(key);
  return DeterministicRng(std::stoull(hex.substr(0, 16), nullptr, 16));
}

double DeterministicRng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t DeterministicRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index(0)");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double DeterministicRng::standard_normal() {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::vector<std::size_t> DeterministicRng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw std::invalid_argument("sample larger than population");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace findr
