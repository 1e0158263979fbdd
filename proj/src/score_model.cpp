#include "mg/score_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mg {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

/// log(sum(exp(v))) without overflow for widely separated terms.
double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double ScoreModel::log_class_posterior(const LatentState&, const NoiseSchedule&, int) const {
  throw std::logic_error("ScoreModel: this model exposes no class posterior");
}

Image ScoreModel::log_class_posterior_grad(const LatentState&, const NoiseSchedule&, int) const {
  throw std::logic_error("ScoreModel: this model exposes no class posterior");
}

Image ScoreModel::predict_input_vjp(const LatentState&, const NoiseSchedule&,
                                    const Image&) const {
  throw std::logic_error("ScoreModel: this model does not support input gradients");
}

GaussianMixtureModel::GaussianMixtureModel(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw std::invalid_argument("GaussianMixtureModel: empty mixture");
  }
  double sum = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight >= 0.0)) throw std::invalid_argument("GaussianMixtureModel: negative weight");
    if (!(c.variance >= 0.0)) {
      throw std::invalid_argument("GaussianMixtureModel: negative variance");
    }
    if (!c.mean.same_shape(components_.front().mean)) {
      throw std::invalid_argument("GaussianMixtureModel: component mean shape mismatch");
    }
    sum += c.weight;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("GaussianMixtureModel: weights sum to zero");
  for (auto& c : components_) c.weight /= sum;
}

std::vector<double> GaussianMixtureModel::component_log_joint(
    const LatentState& state, const NoiseSchedule& schedule) const {
  require_same_shape(state.z, components_.front().mean, "GaussianMixtureModel");
  const double ab = schedule.alpha_bar(state.t);
  const double d = static_cast<double>(state.z.pixels());

  std::vector<double> lj(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const double s2 = ab * c.variance + (1.0 - ab);  // t-marginal variance
    double sq = 0.0;
    const double signal = std::sqrt(ab);
    for (std::size_t n = 0; n < state.z.data.size(); ++n) {
      const double diff = state.z.data[n] - signal * c.mean.data[n];
      sq += diff * diff;
    }
    const double logw = c.weight > 0.0 ? std::log(c.weight)
                                       : -std::numeric_limits<double>::infinity();
    lj[k] = logw - 0.5 * d * (kLogTwoPi + std::log(s2)) - 0.5 * sq / s2;
  }
  return lj;
}

std::vector<double> GaussianMixtureModel::responsibilities(const LatentState& state,
                                                           const NoiseSchedule& schedule) const {
  std::vector<double> lj = component_log_joint(state, schedule);
  const double lse = log_sum_exp(lj);
  std::vector<double> r(lj.size());
  for (std::size_t k = 0; k < lj.size(); ++k) r[k] = std::exp(lj[k] - lse);
  return r;
}

double GaussianMixtureModel::log_density(const LatentState& state,
                                         const NoiseSchedule& schedule) const {
  return log_sum_exp(component_log_joint(state, schedule));
}

Image GaussianMixtureModel::predict(const LatentState& state,
                                    const NoiseSchedule& schedule) const {
  // eps* = -sqrt(1 - ab_t) * grad log p_t(z), with the score mixing the
  // per-component Gaussian scores by posterior responsibility.
  const double ab = schedule.alpha_bar(state.t);
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  const std::vector<double> r = responsibilities(state, schedule);

  Image eps(state.z.height, state.z.width, 0.0);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    if (r[k] == 0.0) continue;
    const auto& c = components_[k];
    const double s2 = ab * c.variance + (1.0 - ab);
    const double coeff = r[k] * noise / s2;
    for (std::size_t n = 0; n < eps.data.size(); ++n) {
      eps.data[n] += coeff * (state.z.data[n] - signal * c.mean.data[n]);
    }
  }
  return eps;
}

double GaussianMixtureModel::log_class_posterior(const LatentState& state,
                                                 const NoiseSchedule& schedule,
                                                 int class_index) const {
  if (class_index < 0 || class_index >= num_classes()) {
    throw std::invalid_argument("log_class_posterior: class index " +
                                std::to_string(class_index) + " out of range");
  }
  std::vector<double> lj = component_log_joint(state, schedule);
  return lj[static_cast<std::size_t>(class_index)] - log_sum_exp(lj);
}

Image GaussianMixtureModel::log_class_posterior_grad(const LatentState& state,
                                                     const NoiseSchedule& schedule,
                                                     int class_index) const {
  if (class_index < 0 || class_index >= num_classes()) {
    throw std::invalid_argument("log_class_posterior_grad: class index " +
                                std::to_string(class_index) + " out of range");
  }
  // grad log r_k = grad lj_k - sum_j r_j grad lj_j, with
  // grad lj_k = (sqrt(ab) mu_k - z) / s_k^2.
  const double ab = schedule.alpha_bar(state.t);
  const double signal = std::sqrt(ab);
  const std::vector<double> r = responsibilities(state, schedule);

  Image grad(state.z.height, state.z.width, 0.0);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const double sel = (k == static_cast<std::size_t>(class_index) ? 1.0 : 0.0) - r[k];
    if (sel == 0.0) continue;
    const auto& c = components_[k];
    const double s2 = ab * c.variance + (1.0 - ab);
    const double coeff = sel / s2;
    for (std::size_t n = 0; n < grad.data.size(); ++n) {
      grad.data[n] += coeff * (signal * c.mean.data[n] - state.z.data[n]);
    }
  }
  return grad;
}

EmpiricalScoreModel::EmpiricalScoreModel(std::vector<Image> dataset)
    : dataset_(std::move(dataset)) {
  if (dataset_.empty()) throw std::invalid_argument("EmpiricalScoreModel: empty dataset");
  for (const auto& img : dataset_) {
    if (!img.same_shape(dataset_.front())) {
      throw std::invalid_argument("EmpiricalScoreModel: dataset images must share one shape");
    }
  }
}

std::vector<double> EmpiricalScoreModel::posterior_weights(const LatentState& state,
                                                           const NoiseSchedule& schedule) const {
  require_same_shape(state.z, dataset_.front(), "EmpiricalScoreModel");
  const double ab = schedule.alpha_bar(state.t);
  const double signal = std::sqrt(ab);
  const double inv_two_var = 0.5 / (1.0 - ab);

  std::vector<double> logits(dataset_.size());
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    double sq = 0.0;
    for (std::size_t n = 0; n < state.z.data.size(); ++n) {
      const double diff = state.z.data[n] - signal * dataset_[i].data[n];
      sq += diff * diff;
    }
    logits[i] = -sq * inv_two_var;
  }
  const double lse = log_sum_exp(logits);
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) w[i] = std::exp(logits[i] - lse);
  return w;
}

Image EmpiricalScoreModel::posterior_mean(const LatentState& state,
                                          const NoiseSchedule& schedule) const {
  const std::vector<double> w = posterior_weights(state, schedule);
  Image mean(state.z.height, state.z.width, 0.0);
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    if (w[i] == 0.0) continue;
    add_scaled(mean, w[i], dataset_[i]);
  }
  return mean;
}

Image EmpiricalScoreModel::predict(const LatentState& state,
                                   const NoiseSchedule& schedule) const {
  const double ab = schedule.alpha_bar(state.t);
  const double signal = std::sqrt(ab);
  const double inv_noise = 1.0 / std::sqrt(1.0 - ab);
  const Image mean = posterior_mean(state, schedule);

  Image eps(state.z.height, state.z.width);
  for (std::size_t n = 0; n < eps.data.size(); ++n) {
    eps.data[n] = (state.z.data[n] - signal * mean.data[n]) * inv_noise;
  }
  return eps;
}

}  // namespace mg
