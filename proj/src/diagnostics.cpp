#include "fedmeta/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedmeta {

namespace {

constexpr Scalar kNan = std::numeric_limits<Scalar>::quiet_NaN();

// Uniform draw from the ball of the given radius.
ParamVector ball_point(RngStream& rng, int dim, Scalar radius) {
  ParamVector dir = draw_gaussian(rng, dim, 0.0, 1.0);
  const Scalar norm = dir.norm();
  if (norm == 0.0) return ParamVector::Zero(dim);
  const Scalar r = radius * std::pow(rng.next_double(), 1.0 / dim);
  return (r / norm) * dir;
}

// Hessian-vector product that works for every family: exact when available,
// otherwise a tight central difference (step independent of any schedule).
ParamVector any_hessian_vector(const TaskLoss& loss, const ParamVector& x, const ParamVector& v,
                               const Dataset& data) {
  if (has_exact_hessian(loss)) return hessian_vector_exact(loss, x, v, data);
  return hessian_free_product(loss, x, v, 1e-5, data);
}

Scalar quadratic_mu(const TaskLoss& loss) {
  if (loss.curvature_dense.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(loss.curvature_dense,
                                                 Eigen::EigenvaluesOnly);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
  }
  return loss.curvature_diag.maxCoeff();
}

}  // namespace

ConstantsEstimate estimate_constants(const TaskLoss& loss, const Dataset& data, int probes,
                                     Scalar radius, RngStream& rng) {
  if (probes < 2) throw std::invalid_argument("estimate_constants: need at least two probes");
  if (!(radius > 0)) throw std::invalid_argument("estimate_constants: radius must be positive");

  const int n = parameter_dim(loss);
  ConstantsEstimate est;
  est.probes = probes;

  for (int p = 0; p < probes; ++p) {
    const ParamVector x = ball_point(rng, n, radius);
    const ParamVector y = ball_point(rng, n, radius);
    const ParamVector gx = loss_gradient(loss, x, data);
    const ParamVector gy = loss_gradient(loss, y, data);
    est.beta = std::max({est.beta, gx.norm(), gy.norm()});
    const Scalar gap = (x - y).norm();
    if (gap > 1e-12) {
      est.mu = std::max(est.mu, (gx - gy).norm() / gap);
      ParamVector v = draw_gaussian(rng, n, 0.0, 1.0);
      const Scalar vn = v.norm();
      if (vn > 0) {
        v /= vn;
        const ParamVector hx = any_hessian_vector(loss, x, v, data);
        const ParamVector hy = any_hessian_vector(loss, y, v, data);
        est.zeta = std::max(est.zeta, (hx - hy).norm() / gap);
      }
    }
  }

  if (loss.family == LossFamily::kQuadratic) {
    est.analytic = true;
    est.mu = quadratic_mu(loss);
    est.zeta = 0.0;
  }
  return est;
}

Scalar nu_constant(Scalar mu, Scalar beta, Scalar zeta, Scalar alpha) {
  if (mu < 0 || beta < 0 || zeta < 0 || alpha < 0) {
    throw std::invalid_argument("nu_constant: arguments must be nonnegative");
  }
  return (1.0 + alpha * mu) * (1.0 + mu) * mu + alpha * beta * zeta;
}

Assumption5Report assumption5_check(const std::vector<Scalar>& rho, const std::vector<Scalar>& nu,
                                    const std::vector<Scalar>& w, Scalar lambda, Scalar mu_r,
                                    int num_nodes, const DeltaSchedule& schedule) {
  const std::size_t count = rho.size();
  if (nu.size() != count || w.size() != count) {
    throw std::invalid_argument("assumption5_check: per-node arrays differ in length");
  }
  if (num_nodes < 1) throw std::invalid_argument("assumption5_check: need at least one node");
  if (lambda < 0 || mu_r < 0) {
    throw std::invalid_argument("assumption5_check: lambda and mu_r must be nonnegative");
  }

  Assumption5Report report;
  report.all_hold = true;
  report.delta_summable = schedule.summable();
  report.nodes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(rho[i] > 0) || !(w[i] > 0) || nu[i] < 0) {
      throw std::invalid_argument("assumption5_check: rho and w must be positive, nu nonnegative");
    }
    Assumption5Report::NodeVerdict v;
    v.index = static_cast<int>(i);
    v.nu = nu[i];
    v.local_descent_margin = rho[i] / 2.0 - 4.0 * w[i] * nu[i];
    v.global_descent_margin =
        rho[i] / 2.0 -
        2.0 * w[i] * w[i] * nu[i] * nu[i] * (4.0 * w[i] * nu[i] / (rho[i] * rho[i]) + 1.0 / rho[i]) -
        lambda * mu_r / (2.0 * static_cast<Scalar>(num_nodes));
    v.dual_control_margin = rho[i] - 3.0 * nu[i];
    v.local_descent = v.local_descent_margin > 0;
    v.global_descent = v.global_descent_margin > 0;
    v.dual_control = v.dual_control_margin > 0;
    report.all_hold = report.all_hold && v.all();
    report.nodes.push_back(v);
  }
  return report;
}

Scalar lagrangian_value(const std::vector<NodeState>& nodes, const PlatformState& platform,
                        Scalar alpha) {
  const Eigen::Index n = platform.theta.size();
  Scalar total = 0.0;
  for (const NodeState& node : nodes) {
    if (node.theta_local.size() != n || node.dual.size() != n) {
      throw std::invalid_argument("lagrangian_value: node dimension mismatch");
    }
    const ParamVector gap = node.theta_local - platform.theta;
    total += node.weight *
                 meta_objective(node.loss, node.theta_local, node.support, node.query, {alpha, 1}) +
             node.dual.dot(gap) + 0.5 * node.rho * gap.squaredNorm();
  }
  total += platform.reg.lambda * bregman_value(platform.reg, platform.theta);
  ensure_finite(total, "lagrangian_value");
  return total;
}

Scalar objective_value(const ParamVector& theta, const std::vector<NodeState>& nodes,
                       const PlatformState& platform, Scalar alpha) {
  Scalar total = 0.0;
  for (const NodeState& node : nodes) {
    total += node.weight * meta_objective(node.loss, theta, node.support, node.query, {alpha, 1});
  }
  total += platform.reg.lambda * bregman_value(platform.reg, theta);
  ensure_finite(total, "objective_value");
  return total;
}

Scalar fosp_gap(const ParamVector& theta, const std::vector<NodeState>& nodes,
                const PlatformState& platform, Scalar alpha) {
  ParamVector grad = ParamVector::Zero(theta.size());
  for (const NodeState& node : nodes) {
    grad += node.weight * meta_gradient_exact(node.loss, theta, node.support, node.query, alpha);
  }
  grad += platform.reg.lambda * bregman_gradient(platform.reg, theta);
  ensure_finite(grad, "fosp_gap");
  return grad.norm();
}

SimilarityEstimate estimate_similarity(const std::vector<NodeState>& nodes,
                                       const NodeState& target, int probes, Scalar radius,
                                       RngStream& rng) {
  if (probes < 1) throw std::invalid_argument("estimate_similarity: need at least one probe");
  if (!(radius > 0)) throw std::invalid_argument("estimate_similarity: radius must be positive");
  const int n = parameter_dim(target.loss);

  SimilarityEstimate out;
  out.probes = probes;
  out.node_ids.reserve(nodes.size());
  out.psi_g.assign(nodes.size(), 0.0);
  out.psi_h.assign(nodes.size(), 0.0);
  for (const NodeState& node : nodes) {
    if (parameter_dim(node.loss) != n) {
      throw std::invalid_argument("estimate_similarity: parameter dimensions differ");
    }
    out.node_ids.push_back(node.id);
  }

  for (int p = 0; p < probes; ++p) {
    const ParamVector x = ball_point(rng, n, radius);
    ParamVector v = draw_gaussian(rng, n, 0.0, 1.0);
    if (v.norm() > 0) v /= v.norm();
    const ParamVector gt = loss_gradient(target.loss, x, target.support);
    const ParamVector ht = any_hessian_vector(target.loss, x, v, target.support);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const ParamVector gi = loss_gradient(nodes[i].loss, x, nodes[i].support);
      out.psi_g[i] = std::max(out.psi_g[i], (gt - gi).norm());
      const ParamVector hi = any_hessian_vector(nodes[i].loss, x, v, nodes[i].support);
      out.psi_h[i] = std::max(out.psi_h[i], (ht - hi).norm());
    }
  }
  return out;
}

AdaptationResult adaptation_eval(const ParamVector& theta, const NodeState& target,
                                 const AdaptationConfig& cfg) {
  if (target.loss.family == LossFamily::kCubicQuadratic) {
    throw std::invalid_argument("adaptation_eval: classification or quadratic families only");
  }
  if (cfg.steps < 1) throw std::invalid_argument("adaptation_eval: need at least one step");
  if (cfg.alpha < 0) throw std::invalid_argument("adaptation_eval: negative step size");

  const ParamVector adapted =
      cfg.alpha == 0.0 ? theta : inner_adapt(target.loss, theta, target.support, cfg);
  AdaptationResult out;
  out.loss = loss_value(target.loss, adapted, target.query);
  out.accuracy = is_classification(target.loss)
                     ? predict_accuracy(target.loss, adapted, target.query)
                     : kNan;
  return out;
}

ForgettingResult forgetting_eval(const ParamVector& theta, const TaskLoss& prior_loss,
                                 const Dataset& prior_data) {
  ForgettingResult out;
  out.loss = loss_value(prior_loss, theta, prior_data);
  out.grad_norm = loss_gradient(prior_loss, theta, prior_data).norm();
  out.accuracy = is_classification(prior_loss)
                     ? predict_accuracy(prior_loss, theta, prior_data)
                     : kNan;
  return out;
}

}  // namespace fedmeta
