#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace vlroute {

/// splitmix64 finalizer. Used only to derive substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Purpose tags for substream derivation. Values are part of the replay
/// contract: changing one changes every run that uses it.
enum class StreamPurpose : std::uint64_t {
  Topology = 1,
  Blockage = 2,
  LinkError = 3,
  Sessions = 4,
  Estimation = 5,
  ControlChannel = 6,
  DataChannel = 7,
  Backoff = 8,
  Beacon = 9,
};

/// Split function: seed = fold(splitmix64) over (master, purpose, keys...).
/// Substreams for distinct key tuples are independent for practical purposes,
/// and adding a new consumer never shifts the draws of an existing one.
inline std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose,
                                 std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t h = splitmix64(master ^ 0x5EEDULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  for (auto k : keys) h = splitmix64(h ^ k);
  return h;
}

/// mt19937_64 with portable conversions (the std distributions are
/// implementation-defined, which would break cross-platform replay).
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}
  RngStream(std::uint64_t master, StreamPurpose purpose, std::initializer_list<std::uint64_t> keys = {})
      : engine_(derive_seed(master, purpose, keys)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // Reject the biased tail so every residue is equally likely.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_{0};
};

}  // namespace vlroute
