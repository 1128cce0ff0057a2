#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace trapnet {

/// Seeded generator with platform-independent derived distributions.
/// The standard <random> distributions are implementation-defined, so the
/// uniform/normal/shuffle helpers here are written against the raw engine
/// output to keep artifacts bitwise reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean = 0.0, double stddev = 1.0);

  /// Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);

  bool coin() { return (next_u64() >> 63) != 0; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Deterministic sub-seed: the first 8 bytes of SHA-256(master || name).
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace trapnet
