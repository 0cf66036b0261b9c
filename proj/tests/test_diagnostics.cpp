#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedmeta/diagnostics.hpp"
#include "mixture.hpp"
#include "support.hpp"

#include <cmath>

using namespace fedmeta;

namespace {

NodeState quadratic_node(int id, const ParamVector& center, Scalar weight, Scalar rho) {
  NodeState node;
  node.id = id;
  node.loss = make_quadratic(center, ParamVector::Ones(center.size()));
  node.support = make_center_dataset(center, 3);
  node.query = make_center_dataset(center, 3);
  node.weight = weight;
  node.rho = rho;
  node.theta_local = ParamVector::Zero(center.size());
  node.dual = ParamVector::Zero(center.size());
  return node;
}

}  // namespace

TEST_CASE("nu_constant pinned values") {
  // alpha = 0, beta arbitrary: nu = (1 + mu) mu.
  CHECK(nu_constant(1.0, 5.0, 0.0, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
  // mu = 0: only the curvature-variation term survives.
  CHECK(nu_constant(0.0, 2.0, 1.5, 0.3) == doctest::Approx(0.3 * 2.0 * 1.5).epsilon(1e-12));
  // Worked composite: mu=1, beta=2, zeta=1, alpha=0.01.
  const Scalar want = (1.0 + 0.01) * 2.0 * 1.0 + 0.01 * 2.0 * 1.0;
  CHECK(nu_constant(1.0, 2.0, 1.0, 0.01) == doctest::Approx(want).epsilon(1e-12));
  CHECK_THROWS_AS(nu_constant(-1.0, 1.0, 0.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(nu_constant(1.0, -1.0, 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("assumption5_check pinned verdicts") {
  DeltaSchedule sched;  // 1/(10 t + 100), never summable

  // Generously large penalty: every condition holds with room to spare.
  {
    std::vector<Scalar> rho = {100.0, 100.0};
    std::vector<Scalar> nu = {1.0, 1.0};
    std::vector<Scalar> w = {0.1, 0.1};
    Assumption5Report rep = assumption5_check(rho, nu, w, 0.0, 2.0, 2, sched);
    CHECK(rep.all_hold);
    CHECK_FALSE(rep.delta_summable);
    REQUIRE(rep.nodes.size() == 2);
    for (const auto& v : rep.nodes) {
      CHECK(v.all());
      CHECK(v.local_descent_margin > 0.0);
      CHECK(v.global_descent_margin > 0.0);
      CHECK(v.dual_control_margin > 0.0);
    }
    // Spot-check the arithmetic of the first verdict.
    const Scalar local = 100.0 / 2.0 - 4.0 * 0.1 * 1.0;
    CHECK(rep.nodes[0].local_descent_margin == doctest::Approx(local).epsilon(1e-12));
    const Scalar dual = 100.0 - 3.0 * 1.0;
    CHECK(rep.nodes[0].dual_control_margin == doctest::Approx(dual).epsilon(1e-12));
  }

  // rho just under 3 nu trips the dual-control condition alone.
  {
    std::vector<Scalar> rho = {2.9};
    std::vector<Scalar> nu = {1.0};
    std::vector<Scalar> w = {0.01};
    Assumption5Report rep = assumption5_check(rho, nu, w, 0.0, 2.0, 1, sched);
    CHECK_FALSE(rep.all_hold);
    CHECK_FALSE(rep.nodes[0].dual_control);
    CHECK(rep.nodes[0].dual_control_margin == doctest::Approx(2.9 - 3.0).epsilon(1e-12));
    CHECK(rep.nodes[0].local_descent);
  }

  // The prior penalty term tightens the global-descent condition.
  {
    std::vector<Scalar> rho = {10.0};
    std::vector<Scalar> nu = {1.0};
    std::vector<Scalar> w = {1.0};
    Assumption5Report no_prior = assumption5_check(rho, nu, w, 0.0, 2.0, 1, sched);
    Assumption5Report strong_prior = assumption5_check(rho, nu, w, 3.0, 2.0, 1, sched);
    CHECK(strong_prior.nodes[0].global_descent_margin <
          no_prior.nodes[0].global_descent_margin);
    const Scalar shift = 3.0 * 2.0 / (2.0 * 1.0);
    CHECK(no_prior.nodes[0].global_descent_margin - strong_prior.nodes[0].global_descent_margin ==
          doctest::Approx(shift).epsilon(1e-12));
  }

  CHECK_THROWS_AS(assumption5_check({1.0}, {1.0, 2.0}, {0.5}, 0.0, 2.0, 1, sched),
                  std::invalid_argument);
}

TEST_CASE("lagrangian collapses to the objective at consensus") {
  auto mix = testsup::make_quadratic_mixture(3, 4, 0.01, 0.2, 7.0, 17);
  for (auto& node : mix.nodes) {
    node.theta_local = mix.platform.theta;
    node.dual = ParamVector::Zero(4);
  }
  const Scalar lag = lagrangian_value(mix.nodes, mix.platform, mix.alpha);
  const Scalar obj = objective_value(mix.platform.theta, mix.nodes, mix.platform, mix.alpha);
  CHECK(std::abs(lag - obj) <= 1e-10 * (1.0 + std::abs(obj)));
}

TEST_CASE("lagrangian single-node hand case") {
  const int n = 3;
  NodeState node = quadratic_node(0, ParamVector::Zero(n), 1.0, 2.0);
  node.theta_local = ParamVector::Unit(n, 0);  // e1
  node.dual = ParamVector::Unit(n, 0);

  PlatformState platform;
  platform.theta = ParamVector::Zero(n);
  platform.reg = make_squared_euclidean(ParamVector::Zero(n), 0.0);

  const Scalar alpha = 0.1;
  // F_1(e1) for the identity quadratic centered at the origin:
  // phi = (1 - alpha) e1, F = 1/2 |phi|^2.
  const Scalar meta = 0.5 * (1.0 - alpha) * (1.0 - alpha);
  const Scalar want = meta + 1.0 /* <y, e1 - 0> */ + 0.5 * 2.0 * 1.0 /* rho/2 |e1|^2 */;
  const Scalar got = lagrangian_value({node}, platform, alpha);
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("fosp gap vanishes at the mixture stationary point") {
  auto mix = testsup::make_quadratic_mixture(4, 5, 0.01, 0.1, 7.0, 23);
  ParamVector star = mix.stationary_point();
  CHECK(fosp_gap(star, mix.nodes, mix.platform, mix.alpha) <= 1e-8);

  // Away from it, the gap matches a finite-difference probe of F.
  ParamVector off = ParamVector::Constant(5, 0.7);
  auto objective_at = [&](const ParamVector& x) {
    return objective_value(x, mix.nodes, mix.platform, mix.alpha);
  };
  ParamVector fd = testsup::fd_gradient(objective_at, off, 1e-6);
  CHECK(std::abs(fosp_gap(off, mix.nodes, mix.platform, mix.alpha) - fd.norm()) <= 1e-5);
}

TEST_CASE("estimate_constants on quadratics is analytic") {
  RngStream rng(500);
  const int n = 4;

  // Identity curvature: mu is exactly 1, zeta exactly 0.
  TaskLoss iso = make_quadratic(ParamVector::Zero(n), ParamVector::Ones(n));
  Dataset origin = make_center_dataset(ParamVector::Zero(n), 2);
  ConstantsEstimate est = estimate_constants(iso, origin, 50, 2.0, rng);
  CHECK(est.analytic);
  CHECK(est.mu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(est.zeta == 0.0);
  CHECK(est.beta > 0.0);
  CHECK(est.probes == 50);

  // Dense SPD curvature: mu equals the top eigenvalue.
  Matrix A = testsup::random_spd(rng, n);
  TaskLoss dense = make_quadratic_dense(ParamVector::Zero(n), A);
  ConstantsEstimate de = estimate_constants(dense, origin, 30, 1.0, rng);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
  CHECK(de.mu == doctest::Approx(eig.eigenvalues().maxCoeff()).epsilon(1e-9));
  CHECK(de.zeta == 0.0);
}

TEST_CASE("estimate_constants sees cubic curvature variation") {
  RngStream rng(501);
  const int n = 3;
  TaskLoss cubic = make_cubic_quadratic(ParamVector::Ones(n), 2.0);
  Dataset origin = make_center_dataset(ParamVector::Zero(n), 2);
  ConstantsEstimate est = estimate_constants(cubic, origin, 200, 1.0, rng);
  CHECK_FALSE(est.analytic);
  // Hessian variation for the kappa-cubic is bounded by kappa per unit step.
  CHECK(est.zeta > 0.0);
  CHECK(est.zeta <= 2.0 + 1e-6);
  // Curvature inside the unit ball stays within 1 + kappa.
  CHECK(est.mu <= 3.0 + 1e-6);
  CHECK_THROWS_AS(estimate_constants(cubic, origin, 1, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(estimate_constants(cubic, origin, 10, 0.0, rng), std::invalid_argument);
}

TEST_CASE("similarity of a task with itself is zero") {
  RngStream rng(600);
  const int n = 4;
  ParamVector c(n);
  c << 1.0, -2.0, 0.5, 0.0;
  NodeState node = quadratic_node(0, c, 1.0, 1.0);
  NodeState target = node;
  target.id = 99;

  SimilarityEstimate sim = estimate_similarity({node}, target, 30, 1.0, rng);
  REQUIRE(sim.psi_g.size() == 1);
  CHECK(sim.node_ids[0] == 0);
  CHECK(sim.psi_g[0] <= 1e-10);
  CHECK(sim.psi_h[0] <= 1e-10);
  CHECK(sim.probes == 30);
}

TEST_CASE("similarity of shifted identity quadratics is the center gap") {
  RngStream rng(601);
  const int n = 3;
  ParamVector c0(n), c1(n);
  c0 << 1.0, 0.0, 0.0;
  c1 << 0.0, 0.0, 2.0;
  NodeState node = quadratic_node(0, c0, 1.0, 1.0);
  NodeState target = quadratic_node(1, c1, 1.0, 1.0);

  // Gradient gap for identity quadratics is |c0 - c1| at every point.
  SimilarityEstimate sim = estimate_similarity({node}, target, 20, 1.0, rng);
  const Scalar gap = (c0 - c1).norm();
  CHECK(sim.psi_g[0] == doctest::Approx(gap).epsilon(1e-12));
  // Equal curvature: Hessian dissimilarity is numerically zero.
  CHECK(sim.psi_h[0] <= 1e-6);

  CHECK_THROWS_AS(estimate_similarity({node}, target, 0, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(estimate_similarity({node}, target, 5, -1.0, rng), std::invalid_argument);
}

TEST_CASE("adaptation_eval reaches the target from the meta optimum") {
  const int n = 3;
  ParamVector c(n);
  c << 0.5, -1.0, 2.0;
  NodeState target = quadratic_node(0, c, 1.0, 1.0);

  AdaptationConfig cfg;
  cfg.alpha = 0.5;
  cfg.steps = 40;
  AdaptationResult res = adaptation_eval(c, target, cfg);
  CHECK(res.loss <= 1e-8);
  CHECK(std::isnan(res.accuracy));  // quadratic targets have no accuracy

  // alpha = 0 scores the un-adapted parameters.
  AdaptationConfig frozen;
  frozen.alpha = 0.0;
  frozen.steps = 1;
  ParamVector away = c + ParamVector::Ones(n);
  AdaptationResult raw = adaptation_eval(away, target, frozen);
  CHECK(raw.loss == doctest::Approx(loss_value(target.loss, away, target.query)).epsilon(1e-12));

  NodeState cubic = target;
  cubic.loss = make_cubic_quadratic(ParamVector::Ones(n), 1.0);
  CHECK_THROWS_AS(adaptation_eval(c, cubic, cfg), std::invalid_argument);
  AdaptationConfig bad;
  bad.alpha = 0.1;
  bad.steps = 0;
  CHECK_THROWS_AS(adaptation_eval(c, target, bad), std::invalid_argument);
}

TEST_CASE("forgetting_eval at the prior optimum reports zero loss and gradient") {
  const int n = 3;
  ParamVector cp(n);
  cp << 1.0, 1.0, -1.0;
  TaskLoss prior = make_quadratic(cp, ParamVector::Ones(n));
  Dataset data = make_center_dataset(cp, 5);

  ForgettingResult at = forgetting_eval(cp, prior, data);
  CHECK(at.loss <= 1e-12);
  CHECK(at.grad_norm <= 1e-12);
  CHECK(std::isnan(at.accuracy));

  ForgettingResult off = forgetting_eval(ParamVector::Zero(n), prior, data);
  CHECK(off.loss == doctest::Approx(0.5 * cp.squaredNorm()).epsilon(1e-12));
  CHECK(off.grad_norm == doctest::Approx(cp.norm()).epsilon(1e-12));
}

TEST_CASE("classification evaluators report accuracy") {
  RngStream rng(700);
  const int d = 4;
  // Two well-separated gaussian blobs, logistic readout.
  const int rows = 60;
  Matrix x(rows, d);
  Eigen::VectorXi ylab(rows);
  for (int i = 0; i < rows; ++i) {
    const int cls = i % 2;
    for (int j = 0; j < d; ++j)
      x(i, j) = rng.next_gaussian() * 0.3 + (cls == 0 ? -2.0 : 2.0);
    ylab[i] = cls;
  }
  Dataset data{x, ylab};
  Dataset support{x.topRows(30), ylab.head(30)};
  Dataset query{x.bottomRows(30), ylab.tail(30)};

  NodeState target;
  target.id = 0;
  target.loss = make_logistic(d);
  target.support = support;
  target.query = query;
  target.weight = 1.0;
  target.rho = 1.0;

  AdaptationConfig cfg;
  cfg.alpha = 0.1;
  cfg.steps = 25;
  AdaptationResult res = adaptation_eval(ParamVector::Zero(d), target, cfg);
  CHECK(res.accuracy > 0.9);
  CHECK(res.loss < std::log(2.0));

  ForgettingResult f = forgetting_eval(ParamVector::Zero(d), target.loss, data);
  CHECK(f.accuracy == doctest::Approx(0.5).epsilon(1e-12));  // zero weights guess one class
}
