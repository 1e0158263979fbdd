#pragma once

#include <vector>

#include "mg/diffusion.hpp"
#include "mg/extractor.hpp"
#include "mg/image.hpp"
#include "mg/rng.hpp"
#include "mg/schedule.hpp"
#include "mg/score_model.hpp"

namespace mg {

enum class LossKind { kMse, kCosine };

/// How the loss gradient reaches z_t. kStopGrad treats the noise prediction
/// inside the clean estimate as a constant; kFullBackprop also differentiates
/// through the score model (which must support input gradients).
enum class GradMode { kStopGrad, kFullBackprop };

enum class ScaleSchedule { kConstant, kSigmaScaled };

struct GuidanceConfig {
  double scale = 0.0;
  ScaleSchedule scale_schedule = ScaleSchedule::kConstant;
  int recurrence_steps = 1;
  LossKind loss_kind = LossKind::kMse;
  GradMode grad_mode = GradMode::kStopGrad;
};

/// s(t): the configured scale, optionally modulated by sqrt(1 - ab_t).
double guidance_scale_at(const GuidanceConfig& config, const NoiseSchedule& schedule, int t);

struct LossResult {
  double value = 0.0;
  Image grad_wrt_z0;
};

/// Feature-space loss between precomputed reference features and the features
/// of a clean estimate, with its exact gradient with respect to the estimate.
/// MSE: mean squared feature difference. Cosine: 1 - cosine similarity with
/// an epsilon-guarded denominator (1e-12).
LossResult guidance_loss(const FeatureExtractor& extractor, const FeatureVector& ref_features,
                         const Image& z0_hat, LossKind kind);
LossResult guidance_loss(const FeatureExtractor& extractor, const Image& z_ref,
                         const Image& z0_hat, LossKind kind);

struct GuidedEps {
  Image eps;              // guided noise prediction
  double loss = 0.0;      // guidance loss at the clean estimate
  double grad_norm = 0.0; // L2 norm of the (unscaled) gradient w.r.t. z_t
};

/// Guided noise prediction: eps' = eps + s(t) * grad_{z_t} loss, with the
/// clean estimate built from the unguided prediction. When s(t) = 0 the
/// unguided prediction is returned bit-for-bit.
GuidedEps feature_guided_eps(const ScoreModel& model, const FeatureExtractor& extractor,
                             const FeatureVector& ref_features, const LatentState& state,
                             const NoiseSchedule& schedule, const GuidanceConfig& config);

/// Class-posterior guidance: eps' = eps - sqrt(1 - ab_t) * scale * grad log p(c | z_t).
Image classifier_guided_eps(const ScoreModel& model, const LatentState& state,
                            const NoiseSchedule& schedule, int class_index, double scale);

/// Re-noise a state at t-1 back up to t:
/// z_t' = sqrt(ab_t / ab_{t-1}) z_{t-1} + sqrt(1 - ab_t / ab_{t-1}) eps.
/// Preserves the forward marginal: if z_{t-1} ~ q(z_{t-1} | x0) then
/// z_t' ~ q(z_t | x0).
LatentState recurrence_renoise(const LatentState& z_prev, const NoiseSchedule& schedule,
                               RngStream& rng);

struct SamplerKind {
  enum class Type { kDdpm, kDdim };
  Type type = Type::kDdim;
  double eta = 0.0;  // DDIM only
};

/// One reverse step of the configured sampler.
LatentState sampler_step(const SamplerKind& sampler, const LatentState& state,
                         const Image& eps_hat, const NoiseSchedule& schedule, RngStream& rng);

/// Plain reverse chain from pure noise to t = 0.
Image sample_chain(const ScoreModel& model, const NoiseSchedule& schedule,
                   const SamplerKind& sampler, RngStream& rng);

struct TraceRecord {
  int t = 0;
  int repeat = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct GuidedRun {
  Image sample;
  std::vector<TraceRecord> trace;  // one record per inner (guided) iteration
};

/// Full guided chain. At each t the guided step runs recurrence_steps times;
/// between repeats the step output is re-noised back to t. With scale 0 and
/// recurrence_steps 1 this consumes the same random draws as sample_chain and
/// produces bit-identical output.
GuidedRun guided_sample(const ScoreModel& model, const FeatureExtractor& extractor,
                        const Image& z_ref, const NoiseSchedule& schedule,
                        const GuidanceConfig& config, const SamplerKind& sampler, RngStream& rng);

/// Guided chain driven by a class posterior instead of a feature loss.
Image classifier_guided_sample(const ScoreModel& model, int class_index, double scale,
                               const NoiseSchedule& schedule, const SamplerKind& sampler,
                               RngStream& rng);

}  // namespace mg
