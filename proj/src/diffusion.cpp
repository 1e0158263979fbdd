#include "mg/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mg {

namespace {

void require_t_in_chain(int t, const NoiseSchedule& schedule, const char* where) {
  if (t < 1 || t > schedule.T) {
    throw std::invalid_argument(std::string(where) + ": t=" + std::to_string(t) +
                                " outside [1, " + std::to_string(schedule.T) + "]");
  }
}

}  // namespace

ForwardSample q_sample(const Image& x0, int t, const NoiseSchedule& schedule, RngStream& rng) {
  require_t_in_chain(t, schedule, "q_sample");
  const double ab = schedule.alpha_bar(t);
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);

  ForwardSample out;
  out.eps = rng.normal_image(x0.height, x0.width);
  out.state.t = t;
  out.state.z = Image(x0.height, x0.width);
  for (std::size_t n = 0; n < x0.data.size(); ++n) {
    out.state.z.data[n] = signal * x0.data[n] + noise * out.eps.data[n];
  }
  return out;
}

Image clean_estimate(const LatentState& state, const Image& eps_hat,
                     const NoiseSchedule& schedule) {
  require_t_in_chain(state.t, schedule, "clean_estimate");
  require_same_shape(state.z, eps_hat, "clean_estimate");
  const double ab = schedule.alpha_bar(state.t);
  const double inv_signal = 1.0 / std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);

  Image z0(state.z.height, state.z.width);
  for (std::size_t n = 0; n < z0.data.size(); ++n) {
    z0.data[n] = (state.z.data[n] - noise * eps_hat.data[n]) * inv_signal;
  }
  return z0;
}

LatentState ddim_step(const LatentState& state, const Image& eps_hat,
                      const NoiseSchedule& schedule, double eta, RngStream* rng) {
  require_t_in_chain(state.t, schedule, "ddim_step");
  require_same_shape(state.z, eps_hat, "ddim_step");
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("ddim_step: eta must be in [0, 1]");
  if (eta > 0.0 && rng == nullptr) {
    throw std::invalid_argument("ddim_step: eta > 0 requires an RngStream");
  }

  const int t = state.t;
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t - 1);

  // sigma^2 = eta^2 * (1 - ab_prev)/(1 - ab_t) * (1 - ab_t/ab_prev); zero at t = 1.
  double sigma2 = 0.0;
  if (eta > 0.0) {
    sigma2 = eta * eta * (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
  }
  const double dir_coeff2 = 1.0 - ab_prev - sigma2;
  const double dir_coeff = std::sqrt(dir_coeff2 > 0.0 ? dir_coeff2 : 0.0);
  const double sigma = std::sqrt(sigma2);
  const double signal_prev = std::sqrt(ab_prev);

  const Image z0 = clean_estimate(state, eps_hat, schedule);

  LatentState next;
  next.t = t - 1;
  next.z = Image(state.z.height, state.z.width);
  for (std::size_t n = 0; n < next.z.data.size(); ++n) {
    next.z.data[n] = signal_prev * z0.data[n] + dir_coeff * eps_hat.data[n];
  }
  if (sigma > 0.0) {
    for (double& v : next.z.data) v += sigma * rng->normal();
  }
  return next;
}

LatentState ddpm_step(const LatentState& state, const Image& eps_hat,
                      const NoiseSchedule& schedule, RngStream& rng) {
  require_t_in_chain(state.t, schedule, "ddpm_step");
  require_same_shape(state.z, eps_hat, "ddpm_step");

  const int t = state.t;
  const double a_t = schedule.alpha(t);
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t - 1);

  const double eps_coeff = (1.0 - a_t) / std::sqrt(1.0 - ab_t);
  const double inv_sqrt_a = 1.0 / std::sqrt(a_t);
  const double sigma2 = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - a_t);
  const double sigma = std::sqrt(sigma2 > 0.0 ? sigma2 : 0.0);

  LatentState next;
  next.t = t - 1;
  next.z = Image(state.z.height, state.z.width);
  for (std::size_t n = 0; n < next.z.data.size(); ++n) {
    next.z.data[n] = inv_sqrt_a * (state.z.data[n] - eps_coeff * eps_hat.data[n]);
  }
  if (t > 1 && sigma > 0.0) {
    for (double& v : next.z.data) v += sigma * rng.normal();
  }
  return next;
}

}  // namespace mg
