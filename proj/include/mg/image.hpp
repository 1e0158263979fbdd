#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mg {

/// Row-major grayscale intensity grid. Pixel (i, j) is row i, column j.
/// Intensities are nominally in [0, 1]; intermediate sampler math may leave
/// that range and is clamped only at image-file output.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
    if (h < 1 || w < 1) {
      throw std::invalid_argument("Image: height and width must be >= 1");
    }
  }

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * width + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * width + j]; }

  int pixels() const { return height * width; }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width;
  }
};

inline bool all_finite(const Image& img) {
  for (double v : img.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(where) + ": image shape mismatch (" +
                                std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                                std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

inline double dot(const Image& a, const Image& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t n = 0; n < a.data.size(); ++n) s += a.data[n] * b.data[n];
  return s;
}

inline double l2_norm(const Image& a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(const Image& a, const Image& b) {
  require_same_shape(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t n = 0; n < a.data.size(); ++n) {
    const double d = a.data[n] - b.data[n];
    s += d * d;
  }
  return s;
}

inline double pixel_mean(const Image& a) {
  double s = 0.0;
  for (double v : a.data) s += v;
  return s / static_cast<double>(a.pixels());
}

/// y += c * x
inline void add_scaled(Image& y, double c, const Image& x) {
  require_same_shape(y, x, "add_scaled");
  for (std::size_t n = 0; n < y.data.size(); ++n) y.data[n] += c * x.data[n];
}

inline Image zeros_like(const Image& a) { return Image(a.height, a.width, 0.0); }

}  // namespace mg
