#pragma once

#include <array>
#include <cstdint>

#include "mg/image.hpp"

namespace mg {

/// Reproducible random stream: xoshiro256++ seeded through splitmix64, with
/// Box-Muller normal draws (the spare deviate is cached across calls).
///
/// The generator is fixed so that a (seed, stream) pair plus the call sequence
/// fully determines every draw. Independent chains use the same seed with
/// distinct stream indices.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform();

  /// Standard normal deviate.
  double normal();

  void fill_normal(Image& img);
  Image normal_image(int height, int width);

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mg
