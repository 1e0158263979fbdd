#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mg/rng.hpp"
#include "mg/score_model.hpp"

namespace mg {

/// Two-hidden-layer MLP noise predictor on flattened images, conditioned on
/// the timestep through a sinusoidal embedding of t/T. All gradients are
/// hand-derived reverse mode; no autodiff framework involved.
class TinyDenoiser final : public ScoreModel {
 public:
  enum class Activation { kTanh, kIdentity };

  static constexpr int kTimeFrequencies = 16;
  static constexpr int kTimeEmbedDim = 2 * kTimeFrequencies;

  TinyDenoiser(int height, int width, int hidden1, int hidden2,
               Activation activation = Activation::kTanh);

  /// Uniform init scaled by fan-in: W ~ U(-sqrt(3/fan_in), +sqrt(3/fan_in)),
  /// biases zero. Reproducible by seed.
  static TinyDenoiser random_init(int height, int width, int hidden1, int hidden2,
                                  std::uint64_t seed, Activation activation = Activation::kTanh);

  Image predict(const LatentState& state, const NoiseSchedule& schedule) const override;

  bool supports_input_grad() const override { return true; }
  Image predict_input_vjp(const LatentState& state, const NoiseSchedule& schedule,
                          const Image& upstream) const override;

  struct Gradients {
    std::vector<double> w1, b1, w2, b2, w3, b3;
  };

  /// Exact reverse-mode gradients of <upstream, predict(z_t)> with respect to
  /// all parameters and the image input.
  Gradients backward(const LatentState& state, const NoiseSchedule& schedule,
                     const Image& upstream, Image* input_grad = nullptr) const;

  void apply_update(const Gradients& grads, double lr);

  /// Embedding of tau = t/T: [sin(pi 2^k tau), cos(pi 2^k tau)] for k < 16.
  static std::vector<double> time_embedding(int t, int T);

  void save(const std::string& path) const;
  static TinyDenoiser load(const std::string& path);

  int height() const override { return height_; }
  int width() const override { return width_; }
  int hidden1() const { return hidden1_; }
  int hidden2() const { return hidden2_; }
  int input_dim() const { return height_ * width_ + kTimeEmbedDim; }
  int output_dim() const { return height_ * width_; }
  Activation activation() const { return activation_; }

  // Row-major parameter blocks; exposed for tests and the training loop.
  std::vector<double> w1, b1;  // hidden1 x input_dim, hidden1
  std::vector<double> w2, b2;  // hidden2 x hidden1, hidden2
  std::vector<double> w3, b3;  // output_dim x hidden2, output_dim

 private:
  std::vector<double> make_input(const LatentState& state, const NoiseSchedule& schedule) const;
  void forward_impl(const std::vector<double>& input, std::vector<double>& pre1,
                    std::vector<double>& act1, std::vector<double>& pre2,
                    std::vector<double>& act2, std::vector<double>& out) const;
  double activate(double x) const;
  double activate_derivative(double pre) const;

  int height_, width_, hidden1_, hidden2_;
  Activation activation_;
};

struct TrainOptions {
  int steps = 1000;
  double lr = 0.05;
  int val_batch = 16;
  int val_every = 100;
};

struct TrainReport {
  std::vector<double> step_loss;
  std::vector<std::pair<int, double>> val_loss;  // (step, loss) including step 0 and final
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
};

/// Noise-prediction MSE training with plain SGD. Throws std::runtime_error if
/// the loss turns non-finite (divergence).
TrainReport train_denoiser(TinyDenoiser& model, const std::vector<Image>& dataset,
                           const NoiseSchedule& schedule, const TrainOptions& options,
                           RngStream& rng);

}  // namespace mg
