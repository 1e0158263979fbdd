#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mg/image.hpp"

namespace mg {

/// Feature vector produced by some extractor. The descriptor identifies the
/// extractor + basis that produced it; comparisons (MSE, cosine) are only
/// defined between vectors with equal descriptors.
struct FeatureVector {
  std::vector<double> values;
  std::string descriptor;
};

/// Mapping from pixel indices to spatial coordinates.
///  - kCentered: x = (j + 0.5)/W - 0.5, y = (i + 0.5)/H - 0.5, both in (-0.5, 0.5).
///    Centered monomials keep high-order moments small and balanced.
///  - kUnit:     x = (j + 0.5)/W, y = (i + 0.5)/H, both in (0, 1).
enum class CoordConvention { kCentered, kUnit };

/// Precomputed monomial grids x^p y^q for a fixed order set on a fixed
/// geometry. Built once, then shared read-only across threads.
struct MomentBasis {
  std::vector<std::pair<int, int>> orders;  // (p, q), no duplicates
  int height = 0;
  int width = 0;
  CoordConvention convention = CoordConvention::kCentered;
  double quadrature_weight = 0.0;  // uniform Riemann weight, 1/(H*W)
  std::vector<std::vector<double>> basis_images;  // one H*W grid per order
  std::vector<double> xs;  // per-column x coordinate
  std::vector<double> ys;  // per-row y coordinate
  std::string tag;         // stable id: geometry + convention + order set
};

/// All (p, q) with p + q <= max_total_order, ordered by total order then p.
std::vector<std::pair<int, int>> orders_up_to(int max_total_order);

MomentBasis build_basis(const std::vector<std::pair<int, int>>& orders, int height, int width,
                        CoordConvention convention = CoordConvention::kCentered);

/// Geometric moments: values[k] = w * sum_pixels x^p y^q * img, with
/// (p, q) = orders[k] and w the uniform quadrature weight.
FeatureVector moments(const Image& img, const MomentBasis& basis);

/// Adjoint of the (linear) moments map: returns sum_k residual[k] * w * basis_k.
Image moments_adjoint(const FeatureVector& residual, const MomentBasis& basis);

/// Moments computed about the intensity centroid; orders (1,0) and (0,1) map
/// to zero by construction. Requires positive total mass.
FeatureVector central_moments(const Image& img, const MomentBasis& basis);

/// Centroid (x_bar, y_bar) = (M10/M00, M01/M00). Throws on zero total mass.
std::pair<double, double> centroid(const Image& img, const MomentBasis& basis);

}  // namespace mg
