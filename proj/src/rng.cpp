#include "mg/rng.hpp"

#include <cmath>

namespace mg {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) {
  // Distinct streams decorrelate by folding the stream index into the
  // splitmix64 chain before expanding the four state words.
  std::uint64_t x = seed;
  const std::uint64_t mixed = splitmix64(x) ^ (stream * 0x9E3779B97F4A7C15ULL);
  x = mixed;
  for (auto& word : state_) word = splitmix64(x);
  if (state_[0] == 0 && state_[1] == 0 && state_[2] == 0 && state_[3] == 0) {
    state_[0] = 0x1ULL;  // xoshiro state must not be all zero
  }
}

std::uint64_t RngStream::next_u64() {
  // xoshiro256++ (Blackman & Vigna), public-domain reference algorithm.
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0,1] x [0,1); 1 - uniform() keeps the log argument positive.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = kTwoPi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void RngStream::fill_normal(Image& img) {
  for (double& v : img.data) v = normal();
}

Image RngStream::normal_image(int height, int width) {
  Image img(height, width);
  fill_normal(img);
  return img;
}

}  // namespace mg
