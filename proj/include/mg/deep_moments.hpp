#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mg/extractor.hpp"
#include "mg/image.hpp"
#include "mg/moments.hpp"

namespace mg {

/// Tiny per-pixel feature network: two 3x3 convolutions (1 -> C -> C) with a
/// smooth nonlinearity between, same-size output. Channel maps are pooled by
/// a moment basis to form "moments of learned features".
struct PixelFeatureNet {
  enum class Activation { kSoftplus, kIdentity };
  enum class Padding { kZero, kWrap };  // kWrap exists for equivariance tests

  int channels = 1;
  Activation activation = Activation::kSoftplus;
  Padding padding = Padding::kZero;
  std::vector<double> conv1_w;  // channels x 3 x 3
  std::vector<double> conv1_b;  // channels
  std::vector<double> conv2_w;  // channels x channels x 3 x 3
  std::vector<double> conv2_b;  // channels
};

/// Fan-in scaled uniform init, W ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)), zero
/// biases; reproducible by seed.
PixelFeatureNet init_pixel_net(int channels, std::uint64_t seed);

/// Single channel, center-tap identity convolutions, identity activation:
/// the resulting feature map equals the input image.
PixelFeatureNet identity_pixel_net();

/// Feature maps g_c, each the size of the input image.
std::vector<Image> pixel_features(const PixelFeatureNet& net, const Image& img);

/// Pooled features of length channels * |orders|; entry (c, k) at index
/// c * |orders| + k is the k-th moment of channel c.
FeatureVector deep_moments(const PixelFeatureNet& net, const MomentBasis& basis,
                           const Image& img);

/// Gradient of <cotangent, deep_moments(net, basis, .)> at img, reverse mode
/// through the moment pooling and both convolutions.
Image deep_moments_vjp(const PixelFeatureNet& net, const MomentBasis& basis, const Image& img,
                       const FeatureVector& cotangent);

std::string deep_moments_descriptor(const PixelFeatureNet& net, const MomentBasis& basis);

void save_pixel_net(const PixelFeatureNet& net, const std::string& path);
PixelFeatureNet load_pixel_net(const std::string& path);

class DeepMomentExtractor final : public FeatureExtractor {
 public:
  DeepMomentExtractor(PixelFeatureNet net, MomentBasis basis);

  int dimension() const override {
    return net_.channels * static_cast<int>(basis_.orders.size());
  }
  const std::string& descriptor() const override { return descriptor_; }
  FeatureVector extract(const Image& img) const override;
  Image extract_vjp(const Image& img, const FeatureVector& cotangent) const override;

  const PixelFeatureNet& net() const { return net_; }

 private:
  PixelFeatureNet net_;
  MomentBasis basis_;
  std::string descriptor_;
};

}  // namespace mg
