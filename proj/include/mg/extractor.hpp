#pragma once

#include <memory>
#include <string>

#include "mg/image.hpp"
#include "mg/moments.hpp"

namespace mg {

/// Image-to-feature map with an exact adjoint of its linearization.
/// extract_vjp(img, c) must return the gradient of <c, extract(img)> with
/// respect to img; this is finite-difference testable and the guidance loop
/// relies on it being exact.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual int dimension() const = 0;
  virtual const std::string& descriptor() const = 0;
  virtual FeatureVector extract(const Image& img) const = 0;
  virtual Image extract_vjp(const Image& img, const FeatureVector& cotangent) const = 0;
};

/// Raw geometric moments; a linear map, so the VJP ignores the base point.
class MomentExtractor final : public FeatureExtractor {
 public:
  explicit MomentExtractor(MomentBasis basis);

  int dimension() const override { return static_cast<int>(basis_.orders.size()); }
  const std::string& descriptor() const override { return descriptor_; }
  FeatureVector extract(const Image& img) const override;
  Image extract_vjp(const Image& img, const FeatureVector& cotangent) const override;

  const MomentBasis& basis() const { return basis_; }

 private:
  MomentBasis basis_;
  std::string descriptor_;
};

/// Moments about the intensity centroid. Nonlinear in the image (the centroid
/// moves with the intensities); the VJP carries the centroid terms exactly.
class CentralMomentExtractor final : public FeatureExtractor {
 public:
  explicit CentralMomentExtractor(MomentBasis basis);

  int dimension() const override { return static_cast<int>(basis_.orders.size()); }
  const std::string& descriptor() const override { return descriptor_; }
  FeatureVector extract(const Image& img) const override;
  Image extract_vjp(const Image& img, const FeatureVector& cotangent) const override;

 private:
  MomentBasis basis_;
  std::string descriptor_;
};

void require_descriptor_match(const FeatureVector& features, const FeatureExtractor& extractor,
                              const char* where);

}  // namespace mg
