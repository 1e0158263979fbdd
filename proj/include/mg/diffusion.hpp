#pragma once

#include "mg/image.hpp"
#include "mg/rng.hpp"
#include "mg/schedule.hpp"

namespace mg {

/// A sampler latent z together with its timestep. t = 0 is the clean end of
/// the chain, t = T is pure noise.
struct LatentState {
  Image z;
  int t = 0;
};

struct ForwardSample {
  LatentState state;
  Image eps;  // the exact noise used, returned for oracle checks
};

/// Forward (noising) process: z_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
ForwardSample q_sample(const Image& x0, int t, const NoiseSchedule& schedule, RngStream& rng);

/// One-step reconstruction of the noise-free image from a latent and a noise
/// prediction: z0_hat = (z_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t).
Image clean_estimate(const LatentState& state, const Image& eps_hat, const NoiseSchedule& schedule);

/// DDIM update to t-1. eta = 0 is the deterministic path; eta in (0, 1]
/// interpolates toward ancestral sampling and draws from rng (required then).
/// At t = 1 the step returns the clean estimate as the final (t = 0) sample.
LatentState ddim_step(const LatentState& state, const Image& eps_hat,
                      const NoiseSchedule& schedule, double eta, RngStream* rng = nullptr);

/// Ancestral (DDPM) update to t-1 with the small posterior variance
/// sigma_t^2 = (1 - ab_{t-1}) / (1 - ab_t) * (1 - a_t); deterministic at t = 1.
LatentState ddpm_step(const LatentState& state, const Image& eps_hat,
                      const NoiseSchedule& schedule, RngStream& rng);

}  // namespace mg
