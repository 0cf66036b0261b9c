#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedmeta/regularizer.hpp"
#include "support.hpp"

using namespace fedmeta;

namespace {

// Three-term divergence h(x) - h(p) - <grad h(p), x - p> written as plain
// loops, independent of the library's collapsed form.
Scalar loop_divergence(const ParamVector& weights, const ParamVector& x, const ParamVector& p) {
  Scalar hx = 0.0, hp = 0.0, cross = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    hx += weights[j] * x[j] * x[j];
    hp += weights[j] * p[j] * p[j];
    cross += 2.0 * weights[j] * p[j] * (x[j] - p[j]);
  }
  return hx - hp - cross;
}

}  // namespace

TEST_CASE("squared-euclidean divergence equals the squared distance") {
  RngStream rng(300);
  const int n = 8;
  ParamVector prior = draw_gaussian(rng, n, 0.0, 1.0);
  BregmanRegularizer reg = make_squared_euclidean(prior, 0.5);

  CHECK(reg.mu_r == 2.0);
  CHECK(reg.strong_convexity == 2.0);
  CHECK(reg.lambda == 0.5);
  CHECK(bregman_value(reg, prior) == 0.0);

  // Unit offset in one coordinate has divergence exactly 1.
  ParamVector unit = prior;
  unit[0] += 1.0;
  CHECK(bregman_value(reg, unit) == doctest::Approx(1.0).epsilon(1e-14));

  for (int trial = 0; trial < 20; ++trial) {
    ParamVector x = draw_gaussian(rng, n, 0.0, 2.0);
    const Scalar div = bregman_value(reg, x);
    CHECK(div >= 0.0);
    CHECK(testsup::rel_err(div, (x - prior).squaredNorm()) < 1e-15);
    CHECK(testsup::rel_err(div, loop_divergence(ParamVector::Ones(n), x, prior)) < 1e-12);
    CHECK(testsup::max_rel_err(bregman_gradient(reg, x), ParamVector(2.0 * (x - prior))) < 1e-13);
  }

  // Pinned gradient: offset (1, -2) maps to (2, -4).
  BregmanRegularizer flat = make_squared_euclidean(ParamVector::Zero(2), 1.0);
  ParamVector off(2);
  off << 1.0, -2.0;
  ParamVector g = bregman_gradient(flat, off);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(-4.0));
}

TEST_CASE("diagonal-quadratic divergence matches the three-term expansion") {
  RngStream rng(301);
  const int n = 6;
  ParamVector prior = draw_gaussian(rng, n, 0.0, 1.0);
  ParamVector weights = testsup::random_positive(rng, n, 0.3, 3.0);
  BregmanRegularizer reg = make_diagonal_quadratic(prior, weights, 1.25);

  CHECK(reg.mu_r == doctest::Approx(2.0 * weights.maxCoeff()));
  CHECK(reg.strong_convexity == doctest::Approx(2.0 * weights.minCoeff()));

  for (int trial = 0; trial < 20; ++trial) {
    ParamVector x = draw_gaussian(rng, n, 0.0, 2.0);
    const Scalar div = bregman_value(reg, x);
    CHECK(div >= 0.0);
    CHECK(testsup::rel_err(div, loop_divergence(weights, x, prior)) < 1e-12);

    ParamVector fd = testsup::fd_gradient(
        [&](const ParamVector& p) { return bregman_value(reg, p); }, x, 1e-6);
    CHECK(testsup::max_rel_err(bregman_gradient(reg, x), fd) < 1e-7);
  }

  // Pinned: a = (1, 2), offset (1, 1) diverges by 3.
  ParamVector a2(2), p2 = ParamVector::Zero(2), x2(2);
  a2 << 1.0, 2.0;
  x2 << 1.0, 1.0;
  CHECK(bregman_value(make_diagonal_quadratic(p2, a2, 1.0), x2) == doctest::Approx(3.0));
}

TEST_CASE("divergence is nonnegative over many random pairs") {
  RngStream rng(302);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_int(1, 8));
    ParamVector prior = draw_gaussian(rng, n, 0.0, 3.0);
    ParamVector x = draw_gaussian(rng, n, 0.0, 3.0);
    CHECK(bregman_value(make_squared_euclidean(prior, 1.0), x) >= -1e-12);
    ParamVector w = testsup::random_positive(rng, n, 0.1, 5.0);
    CHECK(bregman_value(make_diagonal_quadratic(prior, w, 1.0), x) >= -1e-12);
  }
}

TEST_CASE("gradient map is strongly monotone and Lipschitz with the stated constants") {
  RngStream rng(303);
  const int n = 7;
  ParamVector prior = draw_gaussian(rng, n, 0.0, 1.0);
  ParamVector weights = testsup::random_positive(rng, n, 0.2, 4.0);

  for (const auto& reg : {make_squared_euclidean(prior, 1.0),
                          make_diagonal_quadratic(prior, weights, 1.0)}) {
    for (int trial = 0; trial < 200; ++trial) {
      ParamVector x = draw_gaussian(rng, n, 0.0, 2.0);
      ParamVector y = draw_gaussian(rng, n, 0.0, 2.0);
      ParamVector dg = bregman_gradient(reg, x) - bregman_gradient(reg, y);
      const Scalar gap2 = (x - y).squaredNorm();
      CHECK(dg.dot(x - y) >= reg.strong_convexity * gap2 - 1e-10);
      CHECK(dg.norm() <= reg.mu_r * (x - y).norm() + 1e-10);
    }
  }
}

TEST_CASE("mirror map values and gradients") {
  RngStream rng(304);
  ParamVector x = draw_gaussian(rng, 5, 0.0, 1.0);

  MirrorMap sq{MirrorMapKind::kSquaredEuclidean, {}};
  CHECK(testsup::rel_err(mirror_value(sq, x), x.squaredNorm()) < 1e-15);
  CHECK(testsup::max_rel_err(mirror_gradient(sq, x), ParamVector(2.0 * x)) < 1e-15);

  ParamVector w = testsup::random_positive(rng, 5);
  MirrorMap diag{MirrorMapKind::kDiagonalQuadratic, w};
  Scalar want = 0.0;
  for (int j = 0; j < 5; ++j) want += w[j] * x[j] * x[j];
  CHECK(testsup::rel_err(mirror_value(diag, x), want) < 1e-14);
  CHECK(testsup::max_rel_err(mirror_gradient(diag, x), ParamVector(2.0 * w.cwiseProduct(x))) <
        1e-14);
}

TEST_CASE("regularizer construction rejects bad arguments") {
  ParamVector prior = ParamVector::Zero(3);
  CHECK_THROWS_AS(make_squared_euclidean(prior, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(make_diagonal_quadratic(prior, ParamVector::Zero(3), 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_diagonal_quadratic(prior, ParamVector::Ones(2), 1.0),
                  std::invalid_argument);

  BregmanRegularizer reg = make_squared_euclidean(prior, 1.0);
  CHECK_THROWS_AS(bregman_value(reg, ParamVector::Zero(4)), std::invalid_argument);
  ParamVector bad(3);
  bad << 1.0, std::numeric_limits<Scalar>::quiet_NaN(), 0.0;
  CHECK_THROWS_AS(bregman_gradient(reg, bad), NumericError);
}
