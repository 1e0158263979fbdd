#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mg/guidance.hpp"

namespace mg {

struct CheckResult {
  std::string suite;
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Central finite-difference gradient of a scalar functional of an image.
Image central_fd_gradient(const std::function<double(const Image&)>& f, const Image& at,
                          double step);

/// Relative L2 deviation ||a - b|| / max(||b||, floor).
double relative_error(const Image& a, const Image& b, double floor = 1e-300);

/// Hook type for the re-noising rule, injectable so a deliberately broken
/// rule can be shown to fail the marginal check.
using RenoiseFn =
    std::function<LatentState(const LatentState&, const NoiseSchedule&, RngStream&)>;

/// Monte Carlo check that renoise maps q(z_{t-1} | x0) samples to q(z_t | x0):
/// scalar mean and variance within 4 standard errors at each listed t.
CheckResult check_marginal_preservation(const RenoiseFn& renoise, const NoiseSchedule& schedule,
                                        const std::vector<int>& t_values, int num_draws,
                                        std::uint64_t seed);

/// Named verification suites: "adjoints", "gradients", "marginals". An empty
/// scope runs everything; an unknown scope throws ConfigError.
std::vector<CheckResult> run_checks(const std::string& scope);

}  // namespace mg
