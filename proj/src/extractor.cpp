#include "mg/extractor.hpp"

#include <stdexcept>
#include <string>

namespace mg {

namespace {

double ipow(double x, int p) {
  double r = 1.0;
  for (int k = 0; k < p; ++k) r *= x;
  return r;
}

void require_cotangent_length(const FeatureVector& cotangent, int dimension, const char* where) {
  if (cotangent.values.size() != static_cast<std::size_t>(dimension)) {
    throw std::invalid_argument(std::string(where) + ": cotangent length " +
                                std::to_string(cotangent.values.size()) + " != dimension " +
                                std::to_string(dimension));
  }
}

/// Central moment of a single (p, q) about a fixed centroid.
double central_moment_single(const Image& img, const MomentBasis& basis, int p, int q,
                             double x_bar, double y_bar) {
  double s = 0.0;
  for (int i = 0; i < img.height; ++i) {
    const double yq = ipow(basis.ys[i] - y_bar, q);
    for (int j = 0; j < img.width; ++j) {
      s += ipow(basis.xs[j] - x_bar, p) * yq * img.at(i, j);
    }
  }
  return basis.quadrature_weight * s;
}

}  // namespace

void require_descriptor_match(const FeatureVector& features, const FeatureExtractor& extractor,
                              const char* where) {
  if (features.descriptor != extractor.descriptor()) {
    throw std::invalid_argument(std::string(where) + ": feature descriptor '" +
                                features.descriptor + "' does not match extractor '" +
                                extractor.descriptor() + "'");
  }
}

MomentExtractor::MomentExtractor(MomentBasis basis)
    : basis_(std::move(basis)), descriptor_("moments:" + basis_.tag) {}

FeatureVector MomentExtractor::extract(const Image& img) const { return moments(img, basis_); }

Image MomentExtractor::extract_vjp(const Image& img, const FeatureVector& cotangent) const {
  require_cotangent_length(cotangent, dimension(), "MomentExtractor::extract_vjp");
  if (img.height != basis_.height || img.width != basis_.width) {
    throw std::invalid_argument("MomentExtractor::extract_vjp: image does not match basis");
  }
  return moments_adjoint(cotangent, basis_);
}

CentralMomentExtractor::CentralMomentExtractor(MomentBasis basis)
    : basis_(std::move(basis)), descriptor_("central-moments:" + basis_.tag) {}

FeatureVector CentralMomentExtractor::extract(const Image& img) const {
  return central_moments(img, basis_);
}

Image CentralMomentExtractor::extract_vjp(const Image& img, const FeatureVector& cotangent) const {
  require_cotangent_length(cotangent, dimension(), "CentralMomentExtractor::extract_vjp");
  if (img.height != basis_.height || img.width != basis_.width) {
    throw std::invalid_argument("CentralMomentExtractor::extract_vjp: image does not match basis");
  }
  const auto [x_bar, y_bar] = centroid(img, basis_);

  double raw_mass = 0.0;
  for (double v : img.data) raw_mass += v;

  // d mu_{p,q} / d f(u,v) =
  //   w (x_v - x_bar)^p (y_u - y_bar)^q
  //   - p mu_{p-1,q} (x_v - x_bar) / raw_mass
  //   - q mu_{p,q-1} (y_u - y_bar) / raw_mass,
  // the trailing terms coming from the centroid's dependence on f.
  double coeff_x = 0.0;
  double coeff_y = 0.0;
  for (std::size_t k = 0; k < basis_.orders.size(); ++k) {
    const auto [p, q] = basis_.orders[k];
    const double c = cotangent.values[k];
    // First-order outputs are identically zero, so they carry no gradient.
    if (c == 0.0 || p + q == 1) continue;
    if (p > 0) coeff_x += c * p * central_moment_single(img, basis_, p - 1, q, x_bar, y_bar);
    if (q > 0) coeff_y += c * q * central_moment_single(img, basis_, p, q - 1, x_bar, y_bar);
  }

  Image grad(img.height, img.width, 0.0);
  const double w = basis_.quadrature_weight;
  for (int i = 0; i < img.height; ++i) {
    const double dy = basis_.ys[i] - y_bar;
    for (int j = 0; j < img.width; ++j) {
      const double dx = basis_.xs[j] - x_bar;
      double direct = 0.0;
      for (std::size_t k = 0; k < basis_.orders.size(); ++k) {
        const auto [p, q] = basis_.orders[k];
        const double c = cotangent.values[k];
        if (c == 0.0 || p + q == 1) continue;  // first-order outputs are pinned to zero
        direct += c * ipow(dx, p) * ipow(dy, q);
      }
      grad.at(i, j) = w * direct - (coeff_x * dx + coeff_y * dy) / raw_mass;
    }
  }
  return grad;
}

}  // namespace mg
