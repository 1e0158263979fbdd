#include <doctest.h>

#include <cmath>

#include "mg/diffusion.hpp"
#include "mg/score_model.hpp"
#include "test_util.hpp"

using namespace mg;
using test_util::bit_identical;
using test_util::random_image;
using test_util::rel_err;

TEST_SUITE("diffusion") {

TEST_CASE("single-step linear schedule") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 1, 0.1, 0.1);
  CHECK(s.alphas[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_bars[0] == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("linear schedule terminal alpha_bar matches an independent product") {
  const int T = 1000;
  const double beta_min = 1e-4, beta_max = 0.02;
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, T, beta_min, beta_max);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    prod *= 1.0 - (beta_min + (beta_max - beta_min) * (t - 1) / double(T - 1));
  }
  CHECK(rel_err(s.alpha_bar(T), prod) <= 1e-12);
}

TEST_CASE("alpha_bar is strictly decreasing for both schedule kinds") {
  for (const ScheduleKind kind : {ScheduleKind::kLinear, ScheduleKind::kCosine}) {
    const NoiseSchedule s = make_schedule(kind, 200, 1e-4, 0.5);
    for (int t = 2; t <= s.T; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK_NOTHROW(validate_schedule(s));
  }
}

TEST_CASE("schedule construction rejects bad ranges") {
  CHECK_THROWS_AS(make_schedule(ScheduleKind::kLinear, 0, 1e-4, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(ScheduleKind::kLinear, 10, 0.0, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(ScheduleKind::kLinear, 10, 0.03, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(ScheduleKind::kLinear, 10, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("q_sample with alpha_bar = 1 returns x0 exactly") {
  NoiseSchedule s;
  s.T = 1;
  s.alphas = {1.0};
  s.alpha_bars = {1.0};
  CHECK_NOTHROW(validate_schedule(s));
  RngStream rng(7);
  const Image x0 = random_image(rng, 4, 4);
  const ForwardSample fs = q_sample(x0, 1, s, rng);
  CHECK(bit_identical(fs.state.z, x0));
}

TEST_CASE("q_sample is bit-reproducible under a fixed seed") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 50, 1e-4, 0.02);
  RngStream base(99);
  const Image x0 = random_image(base, 6, 6);
  RngStream r1(1234), r2(1234);
  const ForwardSample a = q_sample(x0, 20, s, r1);
  const ForwardSample b = q_sample(x0, 20, s, r2);
  CHECK(bit_identical(a.state.z, b.state.z));
  CHECK(bit_identical(a.eps, b.eps));
}

TEST_CASE("q_sample rejects t outside the chain") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 10, 1e-4, 0.02);
  RngStream rng(1);
  const Image x0(2, 2, 0.5);
  CHECK_THROWS_AS(q_sample(x0, 0, s, rng), std::invalid_argument);
  CHECK_THROWS_AS(q_sample(x0, 11, s, rng), std::invalid_argument);
}

TEST_CASE("q_sample scalar Monte Carlo moments match the forward marginal") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 100, 1e-4, 0.02);
  const int t = 60;
  const int n = 100000;
  const double x0_value = 0.4;
  const Image x0(1, 1, x0_value);
  RngStream rng(2024);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const ForwardSample fs = q_sample(x0, t, s, rng);
    sum += fs.state.z.data[0];
    sum_sq += fs.state.z.data[0] * fs.state.z.data[0];
  }
  const double mean = sum / n;
  const double var = (sum_sq - sum * sum / n) / (n - 1);
  const double expected_mean = std::sqrt(s.alpha_bar(t)) * x0_value;
  const double expected_var = 1.0 - s.alpha_bar(t);
  CHECK(std::abs(mean - expected_mean) <= 4.0 * std::sqrt(expected_var / n));
  CHECK(std::abs(var - expected_var) <= 4.0 * expected_var * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("clean_estimate inverts q_sample given the true noise") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 100, 1e-4, 0.02);
  RngStream rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Image x0 = random_image(rng, 5, 4);
    const int t = 1 + static_cast<int>(rng.uniform() * s.T) % s.T;
    const ForwardSample fs = q_sample(x0, t, s, rng);
    const Image recovered = clean_estimate(fs.state, fs.eps, s);
    CHECK(test_util::rel_l2(recovered, x0) <= 1e-12);
  }
}

TEST_CASE("clean_estimate with zero predicted noise rescales the latent") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 40, 1e-4, 0.02);
  RngStream rng(6);
  LatentState state{random_image(rng, 3, 3, -1.0, 1.0), 17};
  const Image z0 = clean_estimate(state, Image(3, 3, 0.0), s);
  const double inv = 1.0 / std::sqrt(s.alpha_bar(17));
  for (std::size_t n = 0; n < z0.data.size(); ++n) {
    CHECK(z0.data[n] == doctest::Approx(state.z.data[n] * inv).epsilon(1e-15));
  }
}

TEST_CASE("clean_estimate matches a direct formula evaluation") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 80, 1e-4, 0.02);
  RngStream rng(8);
  LatentState state{random_image(rng, 4, 4, -2.0, 2.0), 33};
  const Image eps_hat = random_image(rng, 4, 4, -1.0, 1.0);
  const Image z0 = clean_estimate(state, eps_hat, s);
  const double ab = s.alpha_bar(33);
  for (std::size_t n = 0; n < z0.data.size(); ++n) {
    const double expected = (state.z.data[n] - std::sqrt(1.0 - ab) * eps_hat.data[n]) /
                            std::sqrt(ab);
    CHECK(rel_err(z0.data[n], expected) <= 1e-14);
  }
}

TEST_CASE("ddim step with the true noise stays on the forward trajectory") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 60, 1e-4, 0.02);
  RngStream rng(9);
  const Image x0 = random_image(rng, 4, 4);
  const int t = 31;
  const ForwardSample fs = q_sample(x0, t, s, rng);
  const LatentState next = ddim_step(fs.state, fs.eps, s, 0.0);
  // Substituting the exact forward noise gives
  // z_{t-1} = sqrt(ab_{t-1}) x0 + sqrt(1 - ab_{t-1}) eps.
  const double ab_prev = s.alpha_bar(t - 1);
  for (std::size_t n = 0; n < next.z.data.size(); ++n) {
    const double expected =
        std::sqrt(ab_prev) * x0.data[n] + std::sqrt(1.0 - ab_prev) * fs.eps.data[n];
    CHECK(rel_err(next.z.data[n], expected) <= 1e-12);
  }
  CHECK(next.t == t - 1);
}

TEST_CASE("ddim step is a no-op when consecutive alpha_bars coincide") {
  NoiseSchedule s;
  s.T = 2;
  s.alphas = {0.9, 1.0};
  s.alpha_bars = {0.9, 0.9};  // deliberately violates strict decrease
  RngStream rng(10);
  LatentState state{random_image(rng, 3, 3, -1.0, 1.0), 2};
  const Image eps_hat = random_image(rng, 3, 3, -1.0, 1.0);
  const LatentState next = ddim_step(state, eps_hat, s, 0.0);
  for (std::size_t n = 0; n < next.z.data.size(); ++n) {
    CHECK(rel_err(next.z.data[n], state.z.data[n]) <= 1e-12);
  }
}

TEST_CASE("ddim rejects t = 0 and bad eta") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 10, 1e-4, 0.02);
  RngStream rng(11);
  LatentState state{Image(2, 2, 0.1), 0};
  CHECK_THROWS_AS(ddim_step(state, Image(2, 2, 0.0), s, 0.0), std::invalid_argument);
  state.t = 5;
  CHECK_THROWS_AS(ddim_step(state, Image(2, 2, 0.0), s, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(ddim_step(state, Image(2, 2, 0.0), s, 0.5, nullptr), std::invalid_argument);
}

TEST_CASE("deterministic ddim chain reaches the closed-form linear-Gaussian limit") {
  // Data law: isotropic Gaussian N(mu, sigma^2 I). The exact noise prediction
  // makes every update affine, so the whole chain collapses to a scalar
  // recursion on the deviation coefficient:
  //   rho_{t-1} = rho_t * (sqrt(ab_{t-1} ab_t) sigma^2
  //               + sqrt((1-ab_{t-1})(1-ab_t))) / (ab_t sigma^2 + 1 - ab_t),
  // and z_0 = mu + rho_0 (z_T - sqrt(ab_T) mu) with rho_T = 1.
  const int h = 6, w = 6;
  const double sigma2 = 0.04;
  RngStream rng(12);
  const Image mu = random_image(rng, h, w);
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 100, 1e-4, 0.02);

  const GaussianMixtureModel model({{1.0, mu, sigma2}});
  const Image z_init = rng.normal_image(h, w);

  LatentState state{z_init, s.T};
  while (state.t > 0) {
    const Image eps_hat = model.predict(state, s);
    state = ddim_step(state, eps_hat, s, 0.0);
  }

  double rho = 1.0;
  for (int t = s.T; t >= 1; --t) {
    const double ab_t = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t - 1);
    const double marginal_var = ab_t * sigma2 + 1.0 - ab_t;
    rho *= (std::sqrt(ab_prev * ab_t) * sigma2 +
            std::sqrt((1.0 - ab_prev) * (1.0 - ab_t))) /
           marginal_var;
  }
  Image expected(h, w);
  const double signal_T = std::sqrt(s.alpha_bar(s.T));
  for (std::size_t n = 0; n < expected.data.size(); ++n) {
    expected.data[n] = mu.data[n] + rho * (z_init.data[n] - signal_T * mu.data[n]);
  }
  CHECK(test_util::rel_l2(state.z, expected) <= 1e-6);
}

TEST_CASE("ddim with eta = 0 is bit-deterministic across reruns") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 30, 1e-4, 0.02);
  RngStream rng(14);
  const Image mu = random_image(rng, 4, 4);
  const GaussianMixtureModel model({{1.0, mu, 0.01}});

  auto run = [&](std::uint64_t seed) {
    RngStream chain_rng(seed);
    LatentState state{chain_rng.normal_image(4, 4), s.T};
    while (state.t > 0) {
      state = ddim_step(state, model.predict(state, s), s, 0.0);
    }
    return state.z;
  };
  CHECK(bit_identical(run(555), run(555)));
}

TEST_CASE("ddpm step at t = 1 adds no noise") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 20, 1e-4, 0.02);
  RngStream r1(15), r2(16);  // different streams; outputs must still agree
  LatentState state{Image(3, 3, 0.25), 1};
  const Image eps_hat(3, 3, 0.1);
  const LatentState a = ddpm_step(state, eps_hat, s, r1);
  const LatentState b = ddpm_step(state, eps_hat, s, r2);
  CHECK(bit_identical(a.z, b.z));
  CHECK(a.t == 0);
}

TEST_CASE("ddpm step is reproducible under a fixed seed") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 20, 1e-4, 0.02);
  RngStream base(17);
  LatentState state{random_image(base, 3, 3, -1.0, 1.0), 10};
  const Image eps_hat = random_image(base, 3, 3, -1.0, 1.0);
  RngStream r1(890), r2(890);
  CHECK(bit_identical(ddpm_step(state, eps_hat, s, r1).z, ddpm_step(state, eps_hat, s, r2).z));
}

TEST_CASE("ddpm rejects t = 0") {
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 10, 1e-4, 0.02);
  RngStream rng(18);
  LatentState state{Image(2, 2, 0.0), 0};
  CHECK_THROWS_AS(ddpm_step(state, Image(2, 2, 0.0), s, rng), std::invalid_argument);
}

TEST_CASE("full ddpm chain reproduces scalar Gaussian data") {
  // Exact scalar denoiser for N(0.3, 0.2^2); terminal samples should follow
  // the data law up to Monte Carlo error.
  const double data_mean = 0.3;
  const double data_var = 0.04;
  const NoiseSchedule s = make_schedule(ScheduleKind::kLinear, 100, 1e-4, 0.02);
  const GaussianMixtureModel model({{1.0, Image(1, 1, data_mean), data_var}});

  const int n = 10000;
  RngStream rng(19);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    LatentState state{rng.normal_image(1, 1), s.T};
    while (state.t > 0) {
      state = ddpm_step(state, model.predict(state, s), s, rng);
    }
    sum += state.z.data[0];
    sum_sq += state.z.data[0] * state.z.data[0];
  }
  const double mean = sum / n;
  const double var = (sum_sq - sum * sum / n) / (n - 1);
  CHECK(std::abs(mean - data_mean) <= 4.0 * std::sqrt(data_var / n));
  CHECK(std::abs(var - data_var) <= 4.0 * data_var * std::sqrt(2.0 / (n - 1)));
}

}  // TEST_SUITE
