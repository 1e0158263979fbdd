#pragma once

#include <memory>
#include <vector>

#include "mg/diffusion.hpp"
#include "mg/image.hpp"
#include "mg/schedule.hpp"

namespace mg {

/// Noise-prediction contract: predict() returns eps_hat with the shape of the
/// input latent. Models with labeled components additionally expose a class
/// posterior; differentiable models expose the VJP of predict.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual Image predict(const LatentState& state, const NoiseSchedule& schedule) const = 0;

  /// Shape of the data space the model operates on.
  virtual int height() const = 0;
  virtual int width() const = 0;

  virtual bool has_class_posterior() const { return false; }
  virtual int num_classes() const { return 0; }
  virtual double log_class_posterior(const LatentState& state, const NoiseSchedule& schedule,
                                     int class_index) const;
  virtual Image log_class_posterior_grad(const LatentState& state, const NoiseSchedule& schedule,
                                         int class_index) const;

  virtual bool supports_input_grad() const { return false; }
  /// Gradient of <upstream, predict(z)> with respect to z.
  virtual Image predict_input_vjp(const LatentState& state, const NoiseSchedule& schedule,
                                  const Image& upstream) const;
};

struct GaussianComponent {
  double weight = 1.0;
  Image mean;
  double variance = 0.0;  // isotropic; 0 = point mass
};

/// Isotropic Gaussian mixture over clean images. Under the forward process
/// the t-marginal of component k is N(sqrt(ab_t) mu_k, (ab_t s_k^2 + 1 - ab_t) I),
/// so the exact noise prediction and per-component responsibilities are
/// available in closed form (log-sum-exp stabilized).
class GaussianMixtureModel final : public ScoreModel {
 public:
  /// Weights must be non-negative with a positive sum; they are normalized.
  explicit GaussianMixtureModel(std::vector<GaussianComponent> components);

  Image predict(const LatentState& state, const NoiseSchedule& schedule) const override;
  int height() const override { return components_.front().mean.height; }
  int width() const override { return components_.front().mean.width; }

  bool has_class_posterior() const override { return true; }
  int num_classes() const override { return static_cast<int>(components_.size()); }
  double log_class_posterior(const LatentState& state, const NoiseSchedule& schedule,
                             int class_index) const override;
  Image log_class_posterior_grad(const LatentState& state, const NoiseSchedule& schedule,
                                 int class_index) const override;

  /// Posterior responsibilities of each component at z_t (sums to 1).
  std::vector<double> responsibilities(const LatentState& state,
                                       const NoiseSchedule& schedule) const;
  /// Log marginal density of z_t under the t-marginal mixture.
  double log_density(const LatentState& state, const NoiseSchedule& schedule) const;

  const std::vector<GaussianComponent>& components() const { return components_; }

 private:
  std::vector<double> component_log_joint(const LatentState& state,
                                          const NoiseSchedule& schedule) const;
  std::vector<GaussianComponent> components_;
};

/// Exact denoiser when the data law is the empirical measure over a finite
/// dataset: the posterior mean over clean images is a softmax-weighted
/// average of the dataset, and eps_hat follows by inverting the forward map.
class EmpiricalScoreModel final : public ScoreModel {
 public:
  explicit EmpiricalScoreModel(std::vector<Image> dataset);

  Image predict(const LatentState& state, const NoiseSchedule& schedule) const override;
  int height() const override { return dataset_.front().height; }
  int width() const override { return dataset_.front().width; }

  Image posterior_mean(const LatentState& state, const NoiseSchedule& schedule) const;
  std::vector<double> posterior_weights(const LatentState& state,
                                        const NoiseSchedule& schedule) const;

  const std::vector<Image>& dataset() const { return dataset_; }

 private:
  std::vector<Image> dataset_;
};

}  // namespace mg
