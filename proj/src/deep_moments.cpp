#include "mg/deep_moments.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "mg/checkpoint.hpp"
#include "mg/errors.hpp"
#include "mg/rng.hpp"

namespace mg {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double activate(const PixelFeatureNet& net, double x) {
  return net.activation == PixelFeatureNet::Activation::kSoftplus ? softplus(x) : x;
}

double activate_derivative(const PixelFeatureNet& net, double x) {
  return net.activation == PixelFeatureNet::Activation::kSoftplus ? sigmoid(x) : 1.0;
}

void validate_net(const PixelFeatureNet& net) {
  const auto c = static_cast<std::size_t>(net.channels);
  if (net.channels < 1) throw std::invalid_argument("PixelFeatureNet: channels must be >= 1");
  if (net.conv1_w.size() != c * 9 || net.conv1_b.size() != c ||
      net.conv2_w.size() != c * c * 9 || net.conv2_b.size() != c) {
    throw std::invalid_argument("PixelFeatureNet: parameter sizes inconsistent with channels");
  }
}

/// value at (i, j) with the net's padding rule; zero padding reads 0 outside.
double sample_padded(const Image& img, int i, int j, PixelFeatureNet::Padding padding) {
  if (padding == PixelFeatureNet::Padding::kWrap) {
    const int ii = ((i % img.height) + img.height) % img.height;
    const int jj = ((j % img.width) + img.width) % img.width;
    return img.at(ii, jj);
  }
  if (i < 0 || i >= img.height || j < 0 || j >= img.width) return 0.0;
  return img.at(i, j);
}

/// Cross-correlation with a 3x3 kernel, same-size output.
void conv3x3_accumulate(const Image& input, const double* kernel, double bias_share,
                        PixelFeatureNet::Padding padding, Image& out) {
  for (int i = 0; i < input.height; ++i) {
    for (int j = 0; j < input.width; ++j) {
      double s = bias_share;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          s += kernel[(di + 1) * 3 + (dj + 1)] * sample_padded(input, i + di, j + dj, padding);
        }
      }
      out.at(i, j) += s;
    }
  }
}

/// Adjoint of conv3x3_accumulate with respect to its input: scatter the
/// upstream through the flipped kernel under the same padding rule.
void conv3x3_transpose_accumulate(const Image& upstream, const double* kernel,
                                  PixelFeatureNet::Padding padding, Image& out) {
  for (int i = 0; i < out.height; ++i) {
    for (int j = 0; j < out.width; ++j) {
      double s = 0.0;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          s += kernel[(di + 1) * 3 + (dj + 1)] * sample_padded(upstream, i - di, j - dj, padding);
        }
      }
      out.at(i, j) += s;
    }
  }
}

std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

PixelFeatureNet init_pixel_net(int channels, std::uint64_t seed) {
  if (channels < 1) throw std::invalid_argument("init_pixel_net: channels must be >= 1");
  PixelFeatureNet net;
  net.channels = channels;
  const auto c = static_cast<std::size_t>(channels);
  net.conv1_w.resize(c * 9);
  net.conv1_b.assign(c, 0.0);
  net.conv2_w.resize(c * c * 9);
  net.conv2_b.assign(c, 0.0);

  RngStream rng(seed);
  const double bound1 = std::sqrt(3.0 / 9.0);  // fan_in = 1 * 3 * 3
  for (double& v : net.conv1_w) v = bound1 * (2.0 * rng.uniform() - 1.0);
  const double bound2 = std::sqrt(3.0 / (9.0 * channels));
  for (double& v : net.conv2_w) v = bound2 * (2.0 * rng.uniform() - 1.0);
  return net;
}

PixelFeatureNet identity_pixel_net() {
  PixelFeatureNet net;
  net.channels = 1;
  net.activation = PixelFeatureNet::Activation::kIdentity;
  net.conv1_w.assign(9, 0.0);
  net.conv1_w[4] = 1.0;  // center tap
  net.conv1_b.assign(1, 0.0);
  net.conv2_w.assign(9, 0.0);
  net.conv2_w[4] = 1.0;
  net.conv2_b.assign(1, 0.0);
  return net;
}

std::vector<Image> pixel_features(const PixelFeatureNet& net, const Image& img) {
  validate_net(net);
  const int C = net.channels;

  std::vector<Image> act1;
  act1.reserve(C);
  for (int c = 0; c < C; ++c) {
    Image pre(img.height, img.width, 0.0);
    conv3x3_accumulate(img, &net.conv1_w[static_cast<std::size_t>(c) * 9], net.conv1_b[c],
                       net.padding, pre);
    for (double& v : pre.data) v = activate(net, v);
    act1.push_back(std::move(pre));
  }

  std::vector<Image> out;
  out.reserve(C);
  for (int co = 0; co < C; ++co) {
    Image g(img.height, img.width, net.conv2_b[co]);
    for (int ci = 0; ci < C; ++ci) {
      conv3x3_accumulate(act1[ci], &net.conv2_w[(static_cast<std::size_t>(co) * C + ci) * 9], 0.0,
                         net.padding, g);
    }
    out.push_back(std::move(g));
  }
  return out;
}

FeatureVector deep_moments(const PixelFeatureNet& net, const MomentBasis& basis,
                           const Image& img) {
  if (img.height != basis.height || img.width != basis.width) {
    throw std::invalid_argument("deep_moments: image does not match basis geometry");
  }
  const std::vector<Image> features = pixel_features(net, img);
  FeatureVector out;
  out.descriptor = deep_moments_descriptor(net, basis);
  out.values.reserve(features.size() * basis.orders.size());
  for (const Image& channel : features) {
    const FeatureVector m = moments(channel, basis);
    out.values.insert(out.values.end(), m.values.begin(), m.values.end());
  }
  return out;
}

Image deep_moments_vjp(const PixelFeatureNet& net, const MomentBasis& basis, const Image& img,
                       const FeatureVector& cotangent) {
  validate_net(net);
  if (img.height != basis.height || img.width != basis.width) {
    throw std::invalid_argument("deep_moments_vjp: image does not match basis geometry");
  }
  const int C = net.channels;
  const std::size_t K = basis.orders.size();
  if (cotangent.values.size() != static_cast<std::size_t>(C) * K) {
    throw std::invalid_argument("deep_moments_vjp: cotangent length " +
                                std::to_string(cotangent.values.size()) + " != " +
                                std::to_string(static_cast<std::size_t>(C) * K));
  }

  // Forward pass, keeping pre-activations for the nonlinearity derivative.
  std::vector<Image> pre1;
  pre1.reserve(C);
  for (int c = 0; c < C; ++c) {
    Image pre(img.height, img.width, 0.0);
    conv3x3_accumulate(img, &net.conv1_w[static_cast<std::size_t>(c) * 9], net.conv1_b[c],
                       net.padding, pre);
    pre1.push_back(std::move(pre));
  }
  std::vector<Image> act1;
  act1.reserve(C);
  for (int c = 0; c < C; ++c) {
    Image a = pre1[c];
    for (double& v : a.data) v = activate(net, v);
    act1.push_back(std::move(a));
  }

  // Pooling adjoint: d g_c = sum_k cot[c*K + k] * w * basis_k.
  std::vector<Image> d_g;
  d_g.reserve(C);
  for (int c = 0; c < C; ++c) {
    FeatureVector slice;
    slice.values.assign(cotangent.values.begin() + static_cast<std::ptrdiff_t>(c * K),
                        cotangent.values.begin() + static_cast<std::ptrdiff_t>((c + 1) * K));
    d_g.push_back(moments_adjoint(slice, basis));
  }

  // Second convolution adjoint into d act1.
  std::vector<Image> d_act1(C, Image(img.height, img.width, 0.0));
  for (int co = 0; co < C; ++co) {
    for (int ci = 0; ci < C; ++ci) {
      conv3x3_transpose_accumulate(d_g[co], &net.conv2_w[(static_cast<std::size_t>(co) * C + ci) * 9],
                                   net.padding, d_act1[ci]);
    }
  }

  // Nonlinearity, then first convolution adjoint into the input image.
  Image d_img(img.height, img.width, 0.0);
  for (int c = 0; c < C; ++c) {
    Image d_pre = d_act1[c];
    for (std::size_t n = 0; n < d_pre.data.size(); ++n) {
      d_pre.data[n] *= activate_derivative(net, pre1[c].data[n]);
    }
    conv3x3_transpose_accumulate(d_pre, &net.conv1_w[static_cast<std::size_t>(c) * 9], net.padding,
                                 d_img);
  }
  return d_img;
}

std::string deep_moments_descriptor(const PixelFeatureNet& net, const MomentBasis& basis) {
  std::uint64_t h = fnv1a64(net.conv1_w.data(), net.conv1_w.size() * sizeof(double));
  h = fnv1a64(net.conv1_b.data(), net.conv1_b.size() * sizeof(double), h);
  h = fnv1a64(net.conv2_w.data(), net.conv2_w.size() * sizeof(double), h);
  h = fnv1a64(net.conv2_b.data(), net.conv2_b.size() * sizeof(double), h);
  h = fnv1a64(&net.activation, sizeof(net.activation), h);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return "deep-moments:" + basis.tag + ":c" + std::to_string(net.channels) + ":" + hex;
}

void save_pixel_net(const PixelFeatureNet& net, const std::string& path) {
  validate_net(net);
  const auto c = static_cast<std::uint64_t>(net.channels);
  Checkpoint ckpt;
  ckpt["meta"] = TensorEntry{{3},
                             {static_cast<double>(net.channels),
                              net.activation == PixelFeatureNet::Activation::kSoftplus ? 0.0 : 1.0,
                              net.padding == PixelFeatureNet::Padding::kZero ? 0.0 : 1.0}};
  ckpt["conv1_w"] = TensorEntry{{c, 3, 3}, net.conv1_w};
  ckpt["conv1_b"] = TensorEntry{{c}, net.conv1_b};
  ckpt["conv2_w"] = TensorEntry{{c, c, 3, 3}, net.conv2_w};
  ckpt["conv2_b"] = TensorEntry{{c}, net.conv2_b};
  save_checkpoint(path, ckpt);
}

PixelFeatureNet load_pixel_net(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const auto meta_it = ckpt.find("meta");
  if (meta_it == ckpt.end() || meta_it->second.data.size() != 3) {
    throw ParseError(path + ": missing or malformed pixel-net meta tensor", 0);
  }
  PixelFeatureNet net;
  net.channels = static_cast<int>(meta_it->second.data[0]);
  net.activation = meta_it->second.data[1] == 0.0 ? PixelFeatureNet::Activation::kSoftplus
                                                  : PixelFeatureNet::Activation::kIdentity;
  net.padding = meta_it->second.data[2] == 0.0 ? PixelFeatureNet::Padding::kZero
                                               : PixelFeatureNet::Padding::kWrap;
  auto take = [&ckpt, &path](const char* name, std::vector<double>& dst, std::size_t n) {
    const auto it = ckpt.find(name);
    if (it == ckpt.end() || it->second.data.size() != n) {
      throw ParseError(path + ": missing or misshaped tensor '" + name + "'", 0);
    }
    dst = it->second.data;
  };
  const auto c = static_cast<std::size_t>(net.channels);
  take("conv1_w", net.conv1_w, c * 9);
  take("conv1_b", net.conv1_b, c);
  take("conv2_w", net.conv2_w, c * c * 9);
  take("conv2_b", net.conv2_b, c);
  validate_net(net);
  return net;
}

DeepMomentExtractor::DeepMomentExtractor(PixelFeatureNet net, MomentBasis basis)
    : net_(std::move(net)), basis_(std::move(basis)),
      descriptor_(deep_moments_descriptor(net_, basis_)) {
  validate_net(net_);
}

FeatureVector DeepMomentExtractor::extract(const Image& img) const {
  return deep_moments(net_, basis_, img);
}

Image DeepMomentExtractor::extract_vjp(const Image& img, const FeatureVector& cotangent) const {
  return deep_moments_vjp(net_, basis_, img, cotangent);
}

}  // namespace mg
