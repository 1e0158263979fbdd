#include "mg/moments.hpp"

#include <cstdint>
#include <set>
#include <stdexcept>

namespace mg {

namespace {

/// Integer power by repeated multiplication. Deterministic across platforms
/// (no libm), exact for p = 0 and p = 1.
double ipow(double x, int p) {
  double r = 1.0;
  for (int k = 0; k < p; ++k) r *= x;
  return r;
}

std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

void require_basis_match(const Image& img, const MomentBasis& basis, const char* where) {
  if (img.height != basis.height || img.width != basis.width) {
    throw std::invalid_argument(std::string(where) + ": image " + std::to_string(img.height) +
                                "x" + std::to_string(img.width) + " does not match basis " +
                                std::to_string(basis.height) + "x" + std::to_string(basis.width));
  }
}

}  // namespace

std::vector<std::pair<int, int>> orders_up_to(int max_total_order) {
  if (max_total_order < 0) {
    throw std::invalid_argument("orders_up_to: max_total_order must be >= 0");
  }
  std::vector<std::pair<int, int>> orders;
  for (int total = 0; total <= max_total_order; ++total) {
    for (int p = 0; p <= total; ++p) orders.emplace_back(p, total - p);
  }
  return orders;
}

MomentBasis build_basis(const std::vector<std::pair<int, int>>& orders, int height, int width,
                        CoordConvention convention) {
  if (orders.empty()) throw std::invalid_argument("build_basis: empty order list");
  if (height < 1 || width < 1) {
    throw std::invalid_argument("build_basis: height and width must be >= 1");
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& [p, q] : orders) {
    if (p < 0 || q < 0) throw std::invalid_argument("build_basis: orders must be non-negative");
    if (!seen.insert({p, q}).second) {
      throw std::invalid_argument("build_basis: duplicate order (" + std::to_string(p) + "," +
                                  std::to_string(q) + ")");
    }
  }

  MomentBasis basis;
  basis.orders = orders;
  basis.height = height;
  basis.width = width;
  basis.convention = convention;
  basis.quadrature_weight = 1.0 / (static_cast<double>(height) * static_cast<double>(width));

  basis.xs.resize(width);
  basis.ys.resize(height);
  const double x_shift = convention == CoordConvention::kCentered ? 0.5 : 0.0;
  for (int j = 0; j < width; ++j) basis.xs[j] = (j + 0.5) / width - x_shift;
  for (int i = 0; i < height; ++i) basis.ys[i] = (i + 0.5) / height - x_shift;

  basis.basis_images.reserve(orders.size());
  for (const auto& [p, q] : orders) {
    std::vector<double> grid(static_cast<std::size_t>(height) * width);
    for (int i = 0; i < height; ++i) {
      const double yq = ipow(basis.ys[i], q);
      for (int j = 0; j < width; ++j) {
        grid[static_cast<std::size_t>(i) * width + j] = ipow(basis.xs[j], p) * yq;
      }
    }
    basis.basis_images.push_back(std::move(grid));
  }

  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& [p, q] : orders) {
    const int pq[2] = {p, q};
    h = fnv1a64(pq, sizeof(pq), h);
  }
  basis.tag = std::to_string(height) + "x" + std::to_string(width) +
              (convention == CoordConvention::kCentered ? ":centered" : ":unit") + ":n" +
              std::to_string(orders.size()) + ":" + hex16(h);
  return basis;
}

FeatureVector moments(const Image& img, const MomentBasis& basis) {
  require_basis_match(img, basis, "moments");
  FeatureVector out;
  out.descriptor = "moments:" + basis.tag;
  out.values.resize(basis.orders.size());
  for (std::size_t k = 0; k < basis.orders.size(); ++k) {
    const auto& grid = basis.basis_images[k];
    double s = 0.0;
    for (std::size_t n = 0; n < grid.size(); ++n) s += grid[n] * img.data[n];
    out.values[k] = basis.quadrature_weight * s;
  }
  return out;
}

Image moments_adjoint(const FeatureVector& residual, const MomentBasis& basis) {
  if (residual.values.size() != basis.orders.size()) {
    throw std::invalid_argument("moments_adjoint: residual length " +
                                std::to_string(residual.values.size()) + " != order count " +
                                std::to_string(basis.orders.size()));
  }
  Image out(basis.height, basis.width, 0.0);
  for (std::size_t k = 0; k < basis.orders.size(); ++k) {
    const double c = residual.values[k] * basis.quadrature_weight;
    const auto& grid = basis.basis_images[k];
    for (std::size_t n = 0; n < grid.size(); ++n) out.data[n] += c * grid[n];
  }
  return out;
}

std::pair<double, double> centroid(const Image& img, const MomentBasis& basis) {
  require_basis_match(img, basis, "centroid");
  double m00 = 0.0, m10 = 0.0, m01 = 0.0;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const double f = img.at(i, j);
      m00 += f;
      m10 += basis.xs[j] * f;
      m01 += basis.ys[i] * f;
    }
  }
  if (!(m00 > 0.0)) {
    throw std::invalid_argument("central_moments: degenerate input, total mass must be positive");
  }
  return {m10 / m00, m01 / m00};
}

FeatureVector central_moments(const Image& img, const MomentBasis& basis) {
  const auto [x_bar, y_bar] = centroid(img, basis);
  FeatureVector out;
  out.descriptor = "central-moments:" + basis.tag;
  out.values.resize(basis.orders.size());
  for (std::size_t k = 0; k < basis.orders.size(); ++k) {
    const auto [p, q] = basis.orders[k];
    // First-order central moments vanish identically; pin them to avoid
    // reporting cancellation residue.
    if (p + q == 1) {
      out.values[k] = 0.0;
      continue;
    }
    double s = 0.0;
    for (int i = 0; i < img.height; ++i) {
      const double yq = ipow(basis.ys[i] - y_bar, q);
      for (int j = 0; j < img.width; ++j) {
        s += ipow(basis.xs[j] - x_bar, p) * yq * img.at(i, j);
      }
    }
    out.values[k] = basis.quadrature_weight * s;
  }
  return out;
}

}  // namespace mg
