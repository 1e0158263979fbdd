#include "mg/checks.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "mg/deep_moments.hpp"
#include "mg/errors.hpp"
#include "mg/extractor.hpp"
#include "mg/metrics.hpp"
#include "mg/score_model.hpp"
#include "mg/tiny_denoiser.hpp"

namespace mg {

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Image random_image(RngStream& rng, int h, int w, double lo = 0.05, double hi = 0.95) {
  Image img(h, w);
  for (double& v : img.data) v = lo + (hi - lo) * rng.uniform();
  return img;
}

/// Straight nested-loop moment sum, recomputing coordinates from scratch.
double brute_force_moment(const Image& img, int p, int q) {
  double s = 0.0;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const double x = (j + 0.5) / img.width - 0.5;
      const double y = (i + 0.5) / img.height - 0.5;
      double term = img.at(i, j);
      for (int k = 0; k < p; ++k) term *= x;
      for (int k = 0; k < q; ++k) term *= y;
      s += term;
    }
  }
  return s / (static_cast<double>(img.height) * img.width);
}

CheckResult check_moments_brute_force() {
  RngStream rng(0xA11CE);
  const Image img = random_image(rng, 8, 8);
  const MomentBasis basis = build_basis(orders_up_to(6), 8, 8);
  const FeatureVector fv = moments(img, basis);
  double worst = 0.0;
  for (std::size_t k = 0; k < basis.orders.size(); ++k) {
    const auto [p, q] = basis.orders[k];
    const double expected = brute_force_moment(img, p, q);
    const double err = std::abs(fv.values[k] - expected) /
                       std::max(std::abs(expected), 1e-300);
    worst = std::max(worst, err);
  }
  return {"adjoints", "moments-vs-brute-force", worst <= 1e-12, "rel_err=" + fmt(worst)};
}

CheckResult check_moment_adjoint_identity() {
  RngStream rng(0xADBEEF);
  const MomentBasis basis = build_basis(orders_up_to(5), 9, 7);
  double worst = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    const Image v = random_image(rng, 9, 7, -1.0, 1.0);
    FeatureVector r;
    r.values.resize(basis.orders.size());
    for (double& x : r.values) x = 2.0 * rng.uniform() - 1.0;
    const double lhs = dot(moments_adjoint(r, basis), v);
    const FeatureVector jv = moments(v, basis);
    double rhs = 0.0;
    for (std::size_t k = 0; k < r.values.size(); ++k) rhs += r.values[k] * jv.values[k];
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300));
  }
  return {"adjoints", "moment-adjoint-identity", worst <= 1e-12, "rel_err=" + fmt(worst)};
}

CheckResult check_deep_moments_reduction() {
  RngStream rng(0x5EED);
  const Image img = random_image(rng, 8, 8);
  const MomentBasis basis = build_basis(orders_up_to(4), 8, 8);
  const PixelFeatureNet net = identity_pixel_net();
  const FeatureVector plain = moments(img, basis);
  const FeatureVector deep = deep_moments(net, basis, img);
  double worst = 0.0;
  for (std::size_t k = 0; k < plain.values.size(); ++k) {
    worst = std::max(worst, std::abs(plain.values[k] - deep.values[k]) /
                                std::max(std::abs(plain.values[k]), 1e-300));
  }
  return {"adjoints", "deep-moments-identity-reduction", worst <= 1e-12, "rel_err=" + fmt(worst)};
}

CheckResult check_empirical_gmm_equivalence() {
  RngStream rng(0xE0F1);
  const int h = 6, w = 6;
  std::vector<Image> dataset;
  for (int i = 0; i < 3; ++i) dataset.push_back(random_image(rng, h, w));
  std::vector<GaussianComponent> comps;
  for (const Image& img : dataset) comps.push_back({1.0 / 3.0, img, 0.0});

  const EmpiricalScoreModel empirical(dataset);
  const GaussianMixtureModel gmm(std::move(comps));
  const NoiseSchedule schedule = make_schedule(ScheduleKind::kLinear, 50, 1e-4, 0.05);

  double worst = 0.0;
  for (int trial = 0; trial < 6; ++trial) {
    LatentState state;
    state.t = 1 + static_cast<int>(rng.uniform() * schedule.T) % schedule.T;
    state.z = random_image(rng, h, w, -1.5, 1.5);
    const Image a = empirical.predict(state, schedule);
    const Image b = gmm.predict(state, schedule);
    worst = std::max(worst, relative_error(a, b));
  }
  return {"adjoints", "empirical-vs-gmm-delta", worst <= 1e-10, "rel_err=" + fmt(worst)};
}

/// Finite-difference check of a guidance gradient. The loss is treated as a
/// function of z_t with the noise prediction handling matching grad_mode:
/// frozen at the base point for stop-grad, live for full backprop.
CheckResult check_guidance_gradient_fd(const std::string& name, const ScoreModel& model,
                                       const FeatureExtractor& extractor, LossKind loss_kind,
                                       GradMode grad_mode, double tolerance, int t,
                                       std::uint64_t seed) {
  RngStream rng(seed);
  const int h = model.height(), w = model.width();
  const NoiseSchedule schedule = make_schedule(ScheduleKind::kLinear, 40, 1e-4, 0.02);
  const Image z_ref = random_image(rng, h, w);
  const FeatureVector ref_features = extractor.extract(z_ref);

  LatentState state;
  state.t = t;
  state.z = random_image(rng, h, w, -1.0, 1.0);

  GuidanceConfig config;
  config.scale = 1.0;
  config.loss_kind = loss_kind;
  config.grad_mode = grad_mode;

  const GuidedEps guided = feature_guided_eps(model, extractor, ref_features, state, schedule,
                                              config);
  Image analytic(h, w);
  for (int n = 0; n < h * w; ++n) {
    analytic.data[n] = guided.eps.data[n];
  }
  {
    const Image unguided = model.predict(state, schedule);
    for (int n = 0; n < h * w; ++n) analytic.data[n] -= unguided.data[n];
  }

  const Image eps_frozen = model.predict(state, schedule);
  auto loss_of_z = [&](const Image& z) {
    LatentState probe;
    probe.t = state.t;
    probe.z = z;
    const Image eps_hat =
        grad_mode == GradMode::kStopGrad ? eps_frozen : model.predict(probe, schedule);
    const Image z0 = clean_estimate(probe, eps_hat, schedule);
    FeatureVector ref_copy = ref_features;
    return guidance_loss(extractor, ref_copy, z0, loss_kind).value;
  };
  const Image fd = central_fd_gradient(loss_of_z, state.z, 1e-5);
  const double err = relative_error(analytic, fd);
  return {"gradients", name, err <= tolerance,
          "rel_err=" + fmt(err) + " tol=" + fmt(tolerance)};
}

CheckResult check_gmm_class_grad_fd() {
  RngStream rng(0xC1A55);
  const int h = 4, w = 4;
  std::vector<GaussianComponent> comps;
  comps.push_back({0.4, random_image(rng, h, w), 0.01});
  comps.push_back({0.6, random_image(rng, h, w), 0.04});
  const GaussianMixtureModel gmm(std::move(comps));
  const NoiseSchedule schedule = make_schedule(ScheduleKind::kLinear, 40, 1e-4, 0.02);

  LatentState state;
  state.t = 17;
  state.z = random_image(rng, h, w, -1.0, 1.0);

  const Image analytic = gmm.log_class_posterior_grad(state, schedule, 1);
  auto f = [&](const Image& z) {
    LatentState probe{z, state.t};
    return gmm.log_class_posterior(probe, schedule, 1);
  };
  const Image fd = central_fd_gradient(f, state.z, 1e-6);
  const double err = relative_error(analytic, fd);
  return {"gradients", "gmm-class-posterior-grad", err <= 1e-6, "rel_err=" + fmt(err)};
}

CheckResult check_gmm_score_fd() {
  RngStream rng(0x5C0FE);
  const int h = 4, w = 4;
  std::vector<GaussianComponent> comps;
  comps.push_back({0.5, random_image(rng, h, w), 0.02});
  comps.push_back({0.5, random_image(rng, h, w), 0.0});
  const GaussianMixtureModel gmm(std::move(comps));
  const NoiseSchedule schedule = make_schedule(ScheduleKind::kLinear, 40, 1e-4, 0.02);

  LatentState state;
  state.t = 25;
  state.z = random_image(rng, h, w, -1.0, 1.0);

  // eps* = -sqrt(1 - ab) * grad log p_t.
  const Image eps = gmm.predict(state, schedule);
  auto f = [&](const Image& z) {
    LatentState probe{z, state.t};
    return gmm.log_density(probe, schedule);
  };
  Image fd = central_fd_gradient(f, state.z, 1e-6);
  const double coeff = -std::sqrt(1.0 - schedule.alpha_bar(state.t));
  for (double& v : fd.data) v *= coeff;
  const double err = relative_error(eps, fd);
  return {"gradients", "gmm-score-vs-log-density-fd", err <= 1e-5, "rel_err=" + fmt(err)};
}

std::vector<CheckResult> gradient_checks() {
  std::vector<CheckResult> results;

  const int h = 8, w = 8;
  const MomentBasis basis = build_basis(orders_up_to(4), h, w);

  RngStream rng(0x90AD5);
  std::vector<GaussianComponent> comps;
  comps.push_back({1.0, random_image(rng, h, w), 0.05});
  const GaussianMixtureModel gaussian(std::move(comps));

  const MomentExtractor moment_extractor(basis);
  results.push_back(check_guidance_gradient_fd("moment-mse-stop-grad", gaussian, moment_extractor,
                                               LossKind::kMse, GradMode::kStopGrad, 1e-5, 20,
                                               0xF001));
  results.push_back(check_guidance_gradient_fd("moment-cosine-stop-grad", gaussian,
                                               moment_extractor, LossKind::kCosine,
                                               GradMode::kStopGrad, 1e-4, 20, 0xF002));

  const CentralMomentExtractor central_extractor(build_basis(orders_up_to(3), h, w));
  results.push_back(check_guidance_gradient_fd("central-moment-mse-stop-grad", gaussian,
                                               central_extractor, LossKind::kMse,
                                               GradMode::kStopGrad, 1e-4, 20, 0xF003));

  const DeepMomentExtractor deep_extractor(init_pixel_net(3, 0xDEE9),
                                           build_basis(orders_up_to(3), h, w));
  results.push_back(check_guidance_gradient_fd("deep-moments-mse-stop-grad", gaussian,
                                               deep_extractor, LossKind::kMse,
                                               GradMode::kStopGrad, 1e-4, 20, 0xF004));
  results.push_back(check_guidance_gradient_fd("deep-moments-cosine-stop-grad", gaussian,
                                               deep_extractor, LossKind::kCosine,
                                               GradMode::kStopGrad, 1e-4, 20, 0xF005));

  const TinyDenoiser tiny = TinyDenoiser::random_init(h, w, 16, 16, 0x7187);
  results.push_back(check_guidance_gradient_fd("tiny-full-backprop-mse", tiny, moment_extractor,
                                               LossKind::kMse, GradMode::kFullBackprop, 1e-4, 20,
                                               0xF006));
  results.push_back(check_guidance_gradient_fd("tiny-full-backprop-cosine", tiny,
                                               moment_extractor, LossKind::kCosine,
                                               GradMode::kFullBackprop, 1e-4, 20, 0xF007));

  results.push_back(check_gmm_class_grad_fd());
  results.push_back(check_gmm_score_fd());
  return results;
}

}  // namespace

Image central_fd_gradient(const std::function<double(const Image&)>& f, const Image& at,
                          double step) {
  Image grad(at.height, at.width);
  Image probe = at;
  for (std::size_t n = 0; n < at.data.size(); ++n) {
    const double saved = probe.data[n];
    probe.data[n] = saved + step;
    const double plus = f(probe);
    probe.data[n] = saved - step;
    const double minus = f(probe);
    probe.data[n] = saved;
    grad.data[n] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

double relative_error(const Image& a, const Image& b, double floor) {
  require_same_shape(a, b, "relative_error");
  double diff = 0.0, ref = 0.0;
  for (std::size_t n = 0; n < a.data.size(); ++n) {
    const double d = a.data[n] - b.data[n];
    diff += d * d;
    ref += b.data[n] * b.data[n];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

CheckResult check_marginal_preservation(const RenoiseFn& renoise, const NoiseSchedule& schedule,
                                        const std::vector<int>& t_values, int num_draws,
                                        std::uint64_t seed) {
  const double x0_value = 0.7;
  const Image x0(1, 1, x0_value);
  RngStream rng(seed);

  bool pass = true;
  std::string detail;
  for (int t : t_values) {
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < num_draws; ++i) {
      LatentState prev;
      if (t - 1 == 0) {
        prev.t = 0;
        prev.z = x0;
      } else {
        prev = q_sample(x0, t - 1, schedule, rng).state;
      }
      const LatentState renoised = renoise(prev, schedule, rng);
      const double v = renoised.z.data[0];
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / num_draws;
    const double var = (sum_sq - sum * sum / num_draws) / (num_draws - 1);

    const double ab = schedule.alpha_bar(t);
    const double expected_mean = std::sqrt(ab) * x0_value;
    const double expected_var = 1.0 - ab;
    const double se_mean = std::sqrt(expected_var / num_draws);
    const double se_var = expected_var * std::sqrt(2.0 / (num_draws - 1));

    const bool mean_ok = std::abs(mean - expected_mean) <= 4.0 * se_mean;
    const bool var_ok = std::abs(var - expected_var) <= 4.0 * se_var;
    if (!(mean_ok && var_ok)) {
      pass = false;
      detail += "t=" + std::to_string(t) + (mean_ok ? " var" : " mean") + " off; ";
    }
  }
  if (detail.empty()) detail = "all t within 4 standard errors";
  return {"marginals", "renoise-marginal-preservation", pass, detail};
}

std::vector<CheckResult> run_checks(const std::string& scope) {
  if (!scope.empty() && scope != "adjoints" && scope != "gradients" && scope != "marginals") {
    throw ConfigError("check: unknown scope '" + scope +
                      "' (expected adjoints, gradients, or marginals)");
  }
  std::vector<CheckResult> results;
  if (scope.empty() || scope == "adjoints") {
    results.push_back(check_moments_brute_force());
    results.push_back(check_moment_adjoint_identity());
    results.push_back(check_deep_moments_reduction());
    results.push_back(check_empirical_gmm_equivalence());
  }
  if (scope.empty() || scope == "gradients") {
    for (auto& r : gradient_checks()) results.push_back(std::move(r));
  }
  if (scope.empty() || scope == "marginals") {
    const NoiseSchedule schedule = make_schedule(ScheduleKind::kLinear, 100, 1e-4, 0.02);
    results.push_back(check_marginal_preservation(
        [](const LatentState& prev, const NoiseSchedule& s, RngStream& r) {
          return recurrence_renoise(prev, s, r);
        },
        schedule, {1, 25, 50, 75, 100}, 20000, 0x3A6D));
  }
  return results;
}

}  // namespace mg
