#include <doctest.h>

#include <cmath>

#include "mg/moments.hpp"
#include "mg/rng.hpp"
#include "test_util.hpp"

using namespace mg;
using test_util::bit_identical;
using test_util::random_image;
using test_util::rel_err;

namespace {

/// Independent nested-loop oracle: recomputes the centered coordinate map and
/// the monomial sum from scratch, sharing no code with the implementation.
double brute_force_moment(const Image& img, int p, int q) {
  double sum = 0.0;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const double x = (j + 0.5) / img.width - 0.5;
      const double y = (i + 0.5) / img.height - 0.5;
      sum += std::pow(x, p) * std::pow(y, q) * img.at(i, j);
    }
  }
  return sum / (static_cast<double>(img.height) * img.width);
}

/// Brute-force central moment with its own centroid computation.
double brute_force_central_moment(const Image& img, int p, int q) {
  double m00 = 0.0, m10 = 0.0, m01 = 0.0;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const double x = (j + 0.5) / img.width - 0.5;
      const double y = (i + 0.5) / img.height - 0.5;
      m00 += img.at(i, j);
      m10 += x * img.at(i, j);
      m01 += y * img.at(i, j);
    }
  }
  const double x_bar = m10 / m00;
  const double y_bar = m01 / m00;
  double sum = 0.0;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      const double x = (j + 0.5) / img.width - 0.5;
      const double y = (i + 0.5) / img.height - 0.5;
      sum += std::pow(x - x_bar, p) * std::pow(y - y_bar, q) * img.at(i, j);
    }
  }
  return sum / (static_cast<double>(img.height) * img.width);
}

}  // namespace

TEST_SUITE("moments") {

TEST_CASE("basis order (0,0) is all ones") {
  const MomentBasis basis = build_basis({{0, 0}}, 5, 7);
  for (double v : basis.basis_images[0]) CHECK(v == 1.0);
  CHECK(basis.quadrature_weight == doctest::Approx(1.0 / 35.0));
}

TEST_CASE("basis order (1,0) on a 2-pixel row matches the centered map") {
  // Hand evaluation of x = (j + 0.5)/W - 0.5 at W = 2: (-0.25, +0.25).
  const MomentBasis basis = build_basis({{1, 0}}, 1, 2);
  CHECK(basis.basis_images[0][0] == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(basis.basis_images[0][1] == doctest::Approx(+0.25).epsilon(1e-15));
}

TEST_CASE("basis order (1,0) unit convention stays in (0,1)") {
  const MomentBasis basis = build_basis({{1, 0}}, 1, 2, CoordConvention::kUnit);
  CHECK(basis.basis_images[0][0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(basis.basis_images[0][1] == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("monomial factorization: (2,3) = (1,0)^2 * (0,1)^3 pointwise") {
  const MomentBasis basis = build_basis({{2, 3}, {1, 0}, {0, 1}}, 6, 9);
  const auto& b23 = basis.basis_images[0];
  const auto& b10 = basis.basis_images[1];
  const auto& b01 = basis.basis_images[2];
  for (std::size_t n = 0; n < b23.size(); ++n) {
    const double expected = b10[n] * b10[n] * b01[n] * b01[n] * b01[n];
    CHECK(b23[n] == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("basis construction rejects bad inputs") {
  CHECK_THROWS_AS(build_basis({}, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_basis({{1, 0}, {1, 0}}, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_basis({{-1, 0}}, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(build_basis({{0, 0}}, 0, 4), std::invalid_argument);
}

TEST_CASE("orders_up_to enumerates the full triangle") {
  const auto orders = orders_up_to(6);
  CHECK(orders.size() == 28);
  CHECK(orders.front() == std::pair<int, int>{0, 0});
}

TEST_CASE("moment of a constant image is its value at order (0,0)") {
  const MomentBasis basis = build_basis({{0, 0}}, 8, 8);
  const Image img(8, 8, 0.37);
  const FeatureVector fv = moments(img, basis);
  CHECK(fv.values[0] == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("moment of a single-pixel impulse is the monomial value over HW") {
  const int h = 6, w = 5, pi = 2, pj = 3;
  const MomentBasis basis = build_basis({{2, 1}, {0, 0}}, h, w);
  Image img(h, w, 0.0);
  img.at(pi, pj) = 1.0;
  const FeatureVector fv = moments(img, basis);
  const double x = (pj + 0.5) / w - 0.5;
  const double y = (pi + 0.5) / h - 0.5;
  CHECK(fv.values[0] == doctest::Approx(x * x * y / (h * w)).epsilon(1e-14));
  CHECK(fv.values[1] == doctest::Approx(1.0 / (h * w)).epsilon(1e-14));
}

TEST_CASE("random image matches the brute-force oracle") {
  RngStream rng(101);
  const Image img = random_image(rng, 8, 8);
  std::vector<std::pair<int, int>> orders;
  for (int p = 0; p <= 3; ++p) {
    for (int q = 0; q <= 3; ++q) orders.emplace_back(p, q);
  }
  const MomentBasis basis = build_basis(orders, 8, 8);
  const FeatureVector fv = moments(img, basis);
  for (std::size_t k = 0; k < orders.size(); ++k) {
    const double expected = brute_force_moment(img, orders[k].first, orders[k].second);
    CHECK(rel_err(fv.values[k], expected) <= 1e-12);
  }
}

TEST_CASE("moments rejects mismatched image dimensions") {
  const MomentBasis basis = build_basis({{0, 0}}, 4, 4);
  CHECK_THROWS_AS(moments(Image(4, 5, 0.1), basis), std::invalid_argument);
}

TEST_CASE("order (0,0) moment equals the pixel mean") {
  RngStream rng(77);
  const Image img = random_image(rng, 7, 9);
  const MomentBasis basis = build_basis({{0, 0}}, 7, 9);
  CHECK(moments(img, basis).values[0] == doctest::Approx(pixel_mean(img)).epsilon(1e-14));
}

TEST_CASE("adjoint of a one-hot residual is the weighted basis image") {
  const MomentBasis basis = build_basis(orders_up_to(3), 6, 6);
  FeatureVector residual;
  residual.values.assign(basis.orders.size(), 0.0);
  residual.values[4] = 1.0;
  const Image img = moments_adjoint(residual, basis);
  for (std::size_t n = 0; n < img.data.size(); ++n) {
    CHECK(img.data[n] ==
          doctest::Approx(basis.quadrature_weight * basis.basis_images[4][n]).epsilon(1e-15));
  }
}

TEST_CASE("adjoint of a zero residual is the zero image") {
  const MomentBasis basis = build_basis(orders_up_to(2), 4, 4);
  FeatureVector residual;
  residual.values.assign(basis.orders.size(), 0.0);
  const Image img = moments_adjoint(residual, basis);
  for (double v : img.data) CHECK(v == 0.0);
}

TEST_CASE("adjoint identity <J^T r, v> = <r, J v> on random inputs") {
  RngStream rng(13);
  const MomentBasis basis = build_basis(orders_up_to(6), 8, 8);
  for (int trial = 0; trial < 10; ++trial) {
    const Image v = random_image(rng, 8, 8, -1.0, 1.0);
    FeatureVector r;
    for (std::size_t k = 0; k < basis.orders.size(); ++k) {
      r.values.push_back(2.0 * rng.uniform() - 1.0);
    }
    const double lhs = dot(moments_adjoint(r, basis), v);
    const FeatureVector jv = moments(v, basis);
    double rhs = 0.0;
    for (std::size_t k = 0; k < r.values.size(); ++k) rhs += r.values[k] * jv.values[k];
    CHECK(rel_err(lhs, rhs) <= 1e-12);
  }
}

TEST_CASE("adjoint rejects a residual of the wrong length") {
  const MomentBasis basis = build_basis(orders_up_to(2), 4, 4);
  FeatureVector residual;
  residual.values.assign(3, 1.0);
  CHECK_THROWS_AS(moments_adjoint(residual, basis), std::invalid_argument);
}

TEST_CASE("moments are linear") {
  RngStream rng(23);
  const MomentBasis basis = build_basis(orders_up_to(5), 8, 8);
  const Image u = random_image(rng, 8, 8, -1.0, 1.0);
  const Image v = random_image(rng, 8, 8, -1.0, 1.0);
  const double a = 1.7, b = -0.4;
  Image combo(8, 8);
  for (std::size_t n = 0; n < combo.data.size(); ++n) {
    combo.data[n] = a * u.data[n] + b * v.data[n];
  }
  const FeatureVector fu = moments(u, basis);
  const FeatureVector fv = moments(v, basis);
  const FeatureVector fc = moments(combo, basis);
  for (std::size_t k = 0; k < fc.values.size(); ++k) {
    CHECK(rel_err(fc.values[k], a * fu.values[k] + b * fv.values[k]) <= 1e-12);
  }
}

TEST_CASE("moments are deterministic") {
  RngStream rng(31);
  const Image img = random_image(rng, 8, 8);
  const MomentBasis basis = build_basis(orders_up_to(6), 8, 8);
  const FeatureVector a = moments(img, basis);
  const FeatureVector b = moments(img, basis);
  CHECK(a.values == b.values);
  CHECK(a.descriptor == b.descriptor);
}

TEST_CASE("first-order central moments are exactly zero") {
  RngStream rng(41);
  const Image img = random_image(rng, 8, 8, 0.1, 1.0);
  const MomentBasis basis = build_basis({{1, 0}, {0, 1}, {2, 0}}, 8, 8);
  const FeatureVector fv = central_moments(img, basis);
  CHECK(fv.values[0] == 0.0);
  CHECK(fv.values[1] == 0.0);
}

TEST_CASE("central moments are invariant to whole-pixel shifts of the content") {
  // A small bright block far from the borders, shifted without clipping.
  const int h = 16, w = 16;
  Image base(h, w, 0.0);
  RngStream rng(53);
  for (int i = 4; i < 8; ++i) {
    for (int j = 5; j < 9; ++j) base.at(i, j) = 0.2 + 0.8 * rng.uniform();
  }
  Image shifted(h, w, 0.0);
  const int di = 3, dj = 2;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (base.at(i, j) != 0.0) shifted.at(i + di, j + dj) = base.at(i, j);
    }
  }
  const MomentBasis basis = build_basis(orders_up_to(5), h, w);
  const FeatureVector a = central_moments(base, basis);
  const FeatureVector b = central_moments(shifted, basis);
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    CHECK(std::abs(a.values[k] - b.values[k]) <= 1e-10);
  }
}

TEST_CASE("central moment of a constant image matches the brute-force centered sum") {
  const Image img(8, 8, 0.42);
  const MomentBasis basis = build_basis({{2, 0}}, 8, 8);
  const FeatureVector fv = central_moments(img, basis);
  CHECK(rel_err(fv.values[0], brute_force_central_moment(img, 2, 0)) <= 1e-12);
}

TEST_CASE("random central moments match the brute-force oracle") {
  RngStream rng(59);
  const Image img = random_image(rng, 8, 8, 0.05, 1.0);
  const MomentBasis basis = build_basis({{2, 0}, {0, 2}, {2, 2}, {3, 1}}, 8, 8);
  const FeatureVector fv = central_moments(img, basis);
  for (std::size_t k = 0; k < basis.orders.size(); ++k) {
    const auto [p, q] = basis.orders[k];
    CHECK(rel_err(fv.values[k], brute_force_central_moment(img, p, q)) <= 1e-12);
  }
}

TEST_CASE("central moments reject zero total mass") {
  const MomentBasis basis = build_basis({{2, 0}}, 4, 4);
  CHECK_THROWS_AS(central_moments(Image(4, 4, 0.0), basis), std::invalid_argument);
}

}  // TEST_SUITE
