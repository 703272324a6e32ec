#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace ivg {

/// Seeded random source with platform-independent uniform and normal draws.
///
/// std::uniform_real_distribution and std::normal_distribution are
/// implementation-defined, so identical seeds can give different streams on
/// different standard libraries. mt19937_64 itself is fully specified; the
/// conversions below are fixed here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one cached spare).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to derive independent sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Lowercase 16-digit hex rendering of a 64-bit hash.
std::string hex64(std::uint64_t v);

}  // namespace ivg
