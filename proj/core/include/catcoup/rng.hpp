#pragma once

#include <cstdint>
#include <random>

#include "catcoup/matrix.hpp"

namespace catcoup {

/// Seeded random source. All sampling in the library goes through this class
/// so that every result is reproducible from a single integer seed. Uniforms
/// are produced from the top 53 bits of a mt19937_64 draw, shifted half a
/// step away from both endpoints, so log(u) and log(1-u) are always finite.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform draw strictly inside (0, 1).
  double uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard Gumbel(0) via -log(-log(u)).
  double gumbel() {
    return -std::log(-std::log(uniform_open01()));
  }

  /// Standard normal (Box-Muller, deterministic draw order).
  double normal();

  /// Uniform index in {0, ..., n-1}.
  std::size_t uniform_index(std::size_t n);

  /// Inverse-CDF draw from a probability vector (clamps to the last index).
  std::size_t categorical(const Vec& probs);

  Vec gumbel_vector(std::size_t n);
  Vec normal_vector(std::size_t n);

  /// Mixes (seed, stream) into a fresh seed for an independent substream.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace catcoup
