#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace dcn {

// Deterministic generator: std::mt19937_64 (bit-exact by the standard) with
// our own integer/real mappings, since std:: distributions differ between
// standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n), unbiased by rejection. n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Subkey derivation: splitmix64 finalizer chained over the root seed, an
// FNV-1a hash of the stream label, and two ordinals. Streams used by the
// trainer: "init", "shuffle", "neg-train", "neg-eval", "valid".
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace dcn
