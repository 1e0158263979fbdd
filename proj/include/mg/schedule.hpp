#pragma once

#include <vector>

#include "mg/image.hpp"

namespace mg {

enum class ScheduleKind { kLinear, kCosine };

/// Per-timestep alpha_t in (0, 1] and cumulative products alpha_bar_t,
/// indexed by t = 1..T. alpha_bar is strictly decreasing.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alphas;      // alphas[t-1] = alpha_t
  std::vector<double> alpha_bars;  // alpha_bars[t-1] = prod_{s<=t} alpha_s

  double alpha(int t) const;
  /// Valid for t in [0, T]; alpha_bar(0) = 1 (no noise).
  double alpha_bar(int t) const;
};

/// kLinear: alpha_t = 1 - beta_t with beta_t linearly spaced in
/// [beta_min, beta_max]. kCosine: squared-cosine alpha_bar ramp
/// (offset 0.008) with per-step beta clamped to [beta_min, beta_max].
NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_min, double beta_max);

/// Throws std::invalid_argument if the schedule violates its invariants.
void validate_schedule(const NoiseSchedule& schedule);

}  // namespace mg
