#pragma once

#include <cstdint>
#include <string_view>

namespace capsule {

// splitmix64. The stream is defined purely by integer arithmetic, so a seed
// yields the same sequence on every platform and compiler.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  // Standard normal via Box-Muller (no cached second value).
  double normal() noexcept;

  std::uint64_t state() const noexcept { return state_; }

  // Independent stream for one purpose ("init", "shuffle", "dropout", "synth").
  // Derivation: splitmix64 finaliser of (root ^ fnv1a64(tag)).
  static Rng substream(std::uint64_t root_seed, std::string_view purpose) noexcept;

 private:
  std::uint64_t state_;
};

std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace capsule
