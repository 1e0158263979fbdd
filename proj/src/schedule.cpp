#include "mg/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mg {

double NoiseSchedule::alpha(int t) const {
  if (t < 1 || t > T) {
    throw std::invalid_argument("NoiseSchedule::alpha: t=" + std::to_string(t) +
                                " outside [1, " + std::to_string(T) + "]");
  }
  return alphas[static_cast<std::size_t>(t) - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > T) {
    throw std::invalid_argument("NoiseSchedule::alpha_bar: t=" + std::to_string(t) +
                                " outside [0, " + std::to_string(T) + "]");
  }
  return alpha_bars[static_cast<std::size_t>(t) - 1];
}

NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_min, double beta_max) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");
  }

  NoiseSchedule s;
  s.T = T;
  s.alphas.resize(T);
  s.alpha_bars.resize(T);

  if (kind == ScheduleKind::kLinear) {
    for (int t = 1; t <= T; ++t) {
      const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
      const double beta = beta_min + (beta_max - beta_min) * frac;
      s.alphas[t - 1] = 1.0 - beta;
    }
  } else {
    // Squared-cosine alpha_bar ramp: f(u) = cos^2((u + c)/(1 + c) * pi/2),
    // c = 0.008, u = t/T; beta_t = 1 - f(t/T)/f((t-1)/T), clamped.
    const double c = 0.008;
    auto f = [c](double u) {
      const double v = std::cos((u + c) / (1.0 + c) * 1.5707963267948966);
      return v * v;
    };
    for (int t = 1; t <= T; ++t) {
      const double beta = 1.0 - f(static_cast<double>(t) / T) / f(static_cast<double>(t - 1) / T);
      s.alphas[t - 1] = 1.0 - std::clamp(beta, beta_min, beta_max);
    }
  }

  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    prod *= s.alphas[t - 1];
    s.alpha_bars[t - 1] = prod;
  }
  validate_schedule(s);
  return s;
}

void validate_schedule(const NoiseSchedule& s) {
  if (s.T < 1 || s.alphas.size() != static_cast<std::size_t>(s.T) ||
      s.alpha_bars.size() != static_cast<std::size_t>(s.T)) {
    throw std::invalid_argument("validate_schedule: inconsistent sizes");
  }
  double prod = 1.0;
  double prev_bar = 1.0 + 1e-30;  // alpha_bar(0) = 1 may be attained only at t=0
  for (int t = 1; t <= s.T; ++t) {
    const double a = s.alphas[t - 1];
    const double ab = s.alpha_bars[t - 1];
    if (!(a > 0.0) || !(a <= 1.0) || !(ab > 0.0) || !(ab <= 1.0)) {
      throw std::invalid_argument("validate_schedule: values must lie in (0, 1]");
    }
    prod *= a;
    if (std::abs(ab - prod) > 1e-12 * prod) {
      throw std::invalid_argument("validate_schedule: alpha_bar is not the cumulative product");
    }
    if (!(ab < prev_bar)) {
      throw std::invalid_argument("validate_schedule: alpha_bar must be strictly decreasing");
    }
    prev_bar = ab;
  }
}

}  // namespace mg
