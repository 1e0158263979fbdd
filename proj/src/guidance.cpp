#include "mg/guidance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mg {

namespace {

constexpr double kCosineEps = 1e-12;

void validate_guidance_config(const GuidanceConfig& config) {
  if (config.scale < 0.0) throw std::invalid_argument("GuidanceConfig: scale must be >= 0");
  if (config.recurrence_steps < 0) {
    throw std::invalid_argument("GuidanceConfig: recurrence_steps must be >= 0");
  }
}

}  // namespace

double guidance_scale_at(const GuidanceConfig& config, const NoiseSchedule& schedule, int t) {
  if (config.scale_schedule == ScaleSchedule::kSigmaScaled) {
    return config.scale * std::sqrt(1.0 - schedule.alpha_bar(t));
  }
  return config.scale;
}

LossResult guidance_loss(const FeatureExtractor& extractor, const FeatureVector& ref_features,
                         const Image& z0_hat, LossKind kind) {
  require_descriptor_match(ref_features, extractor, "guidance_loss");
  const FeatureVector features = extractor.extract(z0_hat);
  const std::size_t d = features.values.size();
  if (ref_features.values.size() != d) {
    throw std::invalid_argument("guidance_loss: feature length mismatch");
  }

  LossResult result;
  FeatureVector d_features;
  d_features.descriptor = features.descriptor;
  d_features.values.resize(d);

  if (kind == LossKind::kMse) {
    double value = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = features.values[i] - ref_features.values[i];
      value += diff * diff;
      d_features.values[i] = 2.0 * diff / static_cast<double>(d);
    }
    result.value = value / static_cast<double>(d);
  } else {
    // loss = 1 - <a, b> / (|a| |b| + eps), differentiated w.r.t. b = f(z0_hat).
    double dot_ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dot_ab += ref_features.values[i] * features.values[i];
      aa += ref_features.values[i] * ref_features.values[i];
      bb += features.values[i] * features.values[i];
    }
    if (aa == 0.0 || bb == 0.0) {
      throw std::invalid_argument("guidance_loss: cosine loss undefined for zero feature vector");
    }
    const double na = std::sqrt(aa);
    const double nb = std::sqrt(bb);
    const double denom = na * nb + kCosineEps;
    const double cos = dot_ab / denom;
    result.value = 1.0 - cos;
    const double b_coeff = cos * na / (nb * denom);
    for (std::size_t i = 0; i < d; ++i) {
      d_features.values[i] = -(ref_features.values[i] / denom - b_coeff * features.values[i]);
    }
  }

  result.grad_wrt_z0 = extractor.extract_vjp(z0_hat, d_features);
  return result;
}

LossResult guidance_loss(const FeatureExtractor& extractor, const Image& z_ref,
                         const Image& z0_hat, LossKind kind) {
  return guidance_loss(extractor, extractor.extract(z_ref), z0_hat, kind);
}

GuidedEps feature_guided_eps(const ScoreModel& model, const FeatureExtractor& extractor,
                             const FeatureVector& ref_features, const LatentState& state,
                             const NoiseSchedule& schedule, const GuidanceConfig& config) {
  validate_guidance_config(config);
  if (config.grad_mode == GradMode::kFullBackprop && !model.supports_input_grad()) {
    throw std::invalid_argument(
        "feature_guided_eps: full_backprop requires a score model with input gradients");
  }

  GuidedEps out;
  out.eps = model.predict(state, schedule);

  const Image z0_hat = clean_estimate(state, out.eps, schedule);
  const LossResult loss = guidance_loss(extractor, ref_features, z0_hat, config.loss_kind);
  out.loss = loss.value;

  const double ab = schedule.alpha_bar(state.t);
  const double inv_signal = 1.0 / std::sqrt(ab);

  // d z0_hat / d z_t = (I - sqrt(1 - ab) * d eps / d z_t) / sqrt(ab); stop-grad
  // keeps only the identity part.
  Image grad = loss.grad_wrt_z0;
  for (double& v : grad.data) v *= inv_signal;
  if (config.grad_mode == GradMode::kFullBackprop) {
    const Image eps_vjp = model.predict_input_vjp(state, schedule, loss.grad_wrt_z0);
    const double coeff = -std::sqrt(1.0 - ab) * inv_signal;
    add_scaled(grad, coeff, eps_vjp);
  }
  out.grad_norm = l2_norm(grad);

  const double s = guidance_scale_at(config, schedule, state.t);
  if (s != 0.0) {
    add_scaled(out.eps, s, grad);
  }
  return out;
}

Image classifier_guided_eps(const ScoreModel& model, const LatentState& state,
                            const NoiseSchedule& schedule, int class_index, double scale) {
  if (!model.has_class_posterior()) {
    throw std::invalid_argument("classifier_guided_eps: model lacks a class posterior");
  }
  Image eps = model.predict(state, schedule);
  if (scale == 0.0) return eps;
  const Image grad = model.log_class_posterior_grad(state, schedule, class_index);
  const double coeff = -std::sqrt(1.0 - schedule.alpha_bar(state.t)) * scale;
  add_scaled(eps, coeff, grad);
  return eps;
}

LatentState recurrence_renoise(const LatentState& z_prev, const NoiseSchedule& schedule,
                               RngStream& rng) {
  const int t = z_prev.t + 1;
  if (t < 1 || t > schedule.T) {
    throw std::invalid_argument("recurrence_renoise: target t=" + std::to_string(t) +
                                " outside [1, " + std::to_string(schedule.T) + "]");
  }
  const double ratio = schedule.alpha_bar(t) / schedule.alpha_bar(t - 1);
  const double keep = std::sqrt(ratio);
  const double fresh = std::sqrt(1.0 - ratio);

  LatentState next;
  next.t = t;
  next.z = Image(z_prev.z.height, z_prev.z.width);
  for (std::size_t n = 0; n < next.z.data.size(); ++n) {
    next.z.data[n] = keep * z_prev.z.data[n];
  }
  if (fresh > 0.0) {
    for (double& v : next.z.data) v += fresh * rng.normal();
  }
  return next;
}

LatentState sampler_step(const SamplerKind& sampler, const LatentState& state,
                         const Image& eps_hat, const NoiseSchedule& schedule, RngStream& rng) {
  if (sampler.type == SamplerKind::Type::kDdpm) {
    return ddpm_step(state, eps_hat, schedule, rng);
  }
  return ddim_step(state, eps_hat, schedule, sampler.eta, &rng);
}

Image sample_chain(const ScoreModel& model, const NoiseSchedule& schedule,
                   const SamplerKind& sampler, RngStream& rng) {
  LatentState state;
  state.t = schedule.T;
  state.z = rng.normal_image(model.height(), model.width());
  while (state.t > 0) {
    const Image eps_hat = model.predict(state, schedule);
    state = sampler_step(sampler, state, eps_hat, schedule, rng);
  }
  return state.z;
}

GuidedRun guided_sample(const ScoreModel& model, const FeatureExtractor& extractor,
                        const Image& z_ref, const NoiseSchedule& schedule,
                        const GuidanceConfig& config, const SamplerKind& sampler,
                        RngStream& rng) {
  validate_guidance_config(config);
  if (z_ref.height != model.height() || z_ref.width != model.width()) {
    throw std::invalid_argument("guided_sample: reference image does not match model shape");
  }
  const FeatureVector ref_features = extractor.extract(z_ref);
  const int repeats = config.recurrence_steps < 1 ? 1 : config.recurrence_steps;

  GuidedRun run;
  LatentState state;
  state.t = schedule.T;
  state.z = rng.normal_image(model.height(), model.width());

  while (state.t > 0) {
    const int t = state.t;
    LatentState stepped;
    for (int repeat = 0; repeat < repeats; ++repeat) {
      const GuidedEps guided =
          feature_guided_eps(model, extractor, ref_features, state, schedule, config);
      stepped = sampler_step(sampler, state, guided.eps, schedule, rng);
      run.trace.push_back({t, repeat, guided.loss, guided.grad_norm});
      if (repeat + 1 < repeats) {
        state = recurrence_renoise(stepped, schedule, rng);
      }
    }
    state = std::move(stepped);
  }
  run.sample = std::move(state.z);
  return run;
}

Image classifier_guided_sample(const ScoreModel& model, int class_index, double scale,
                               const NoiseSchedule& schedule, const SamplerKind& sampler,
                               RngStream& rng) {
  LatentState state;
  state.t = schedule.T;
  state.z = rng.normal_image(model.height(), model.width());
  while (state.t > 0) {
    const Image eps_hat = classifier_guided_eps(model, state, schedule, class_index, scale);
    state = sampler_step(sampler, state, eps_hat, schedule, rng);
  }
  return state.z;
}

}  // namespace mg
