#pragma once

#include <cmath>
#include <cstring>

#include "mg/image.hpp"
#include "mg/rng.hpp"

namespace test_util {

inline mg::Image random_image(mg::RngStream& rng, int h, int w, double lo = 0.05,
                              double hi = 0.95) {
  mg::Image img(h, w);
  for (double& v : img.data) v = lo + (hi - lo) * rng.uniform();
  return img;
}

inline double rel_err(double got, double expected) {
  return std::abs(got - expected) / std::max(std::abs(expected), 1e-300);
}

inline bool bit_identical(const mg::Image& a, const mg::Image& b) {
  return a.height == b.height && a.width == b.width &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

inline double rel_l2(const mg::Image& a, const mg::Image& b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t n = 0; n < a.data.size(); ++n) {
    const double d = a.data[n] - b.data[n];
    diff += d * d;
    ref += b.data[n] * b.data[n];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

}  // namespace test_util
