#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mait {

/// splitmix64 finalizer; mixes a 64-bit value into a well-spread one.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent seed for the named substream `name`/`index` of `root`.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

/// Seeded generator with platform-independent uniform and normal draws.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard; the distributions are implemented here so that results do not
/// depend on the standard library's distribution code.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mait
