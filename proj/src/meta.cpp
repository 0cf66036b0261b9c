#include "fedmeta/meta.hpp"

#include <stdexcept>

namespace fedmeta {

namespace {

void require_alpha(Scalar alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("adaptation step size must be positive");
}

}  // namespace

Scalar DeltaSchedule::at(int round) const {
  if (round < 0) throw std::invalid_argument("DeltaSchedule: negative round");
  if (slope < 0 || !(offset > 0)) {
    throw std::invalid_argument("DeltaSchedule: need slope >= 0 and offset > 0");
  }
  return 1.0 / (slope * static_cast<Scalar>(round) + offset);
}

ParamVector inner_adapt(const TaskLoss& loss, const ParamVector& theta, const Dataset& support,
                        const AdaptationConfig& cfg) {
  require_alpha(cfg.alpha);
  if (cfg.steps < 1) throw std::invalid_argument("inner_adapt: need at least one step");
  ParamVector phi = theta;
  for (int s = 0; s < cfg.steps; ++s) {
    phi -= cfg.alpha * loss_gradient(loss, phi, support);
  }
  ensure_finite(phi, "inner_adapt");
  return phi;
}

ParamVector hessian_free_product(const TaskLoss& loss, const ParamVector& theta,
                                 const ParamVector& r, Scalar delta, const Dataset& support) {
  if (!(delta > 0)) throw std::invalid_argument("hessian_free_product: delta must be positive");
  if (r.size() != theta.size()) {
    throw std::invalid_argument("hessian_free_product: direction length mismatch");
  }
  const ParamVector plus = loss_gradient(loss, theta + delta * r, support);
  const ParamVector minus = loss_gradient(loss, theta - delta * r, support);
  ParamVector g = (plus - minus) / (2.0 * delta);
  ensure_finite(g, "hessian_free_product");
  return g;
}

Scalar meta_objective(const TaskLoss& loss, const ParamVector& theta, const Dataset& support,
                      const Dataset& query, const AdaptationConfig& cfg) {
  return loss_value(loss, inner_adapt(loss, theta, support, cfg), query);
}

ParamVector meta_gradient_estimate(const TaskLoss& loss, const ParamVector& theta,
                                   const Dataset& support, const Dataset& query, Scalar alpha,
                                   Scalar delta) {
  require_alpha(alpha);
  const ParamVector phi = inner_adapt(loss, theta, support, {alpha, 1});
  const ParamVector r = loss_gradient(loss, phi, query);
  const ParamVector g = hessian_free_product(loss, theta, r, delta, support);
  return r - alpha * g;
}

ParamVector meta_gradient_exact(const TaskLoss& loss, const ParamVector& theta,
                                const Dataset& support, const Dataset& query, Scalar alpha) {
  require_alpha(alpha);
  if (has_exact_hessian(loss)) {
    const ParamVector phi = inner_adapt(loss, theta, support, {alpha, 1});
    const ParamVector r = loss_gradient(loss, phi, query);
    return r - alpha * hessian_vector_exact(loss, theta, r, support);
  }
  const int n = parameter_dim(loss);
  if (n > 200) {
    throw std::invalid_argument(
        "meta_gradient_exact: finite-difference fallback limited to 200 parameters");
  }
  const AdaptationConfig cfg{alpha, 1};
  const Scalar h = 1e-5;
  ParamVector grad(n);
  ParamVector probe = theta;
  for (int j = 0; j < n; ++j) {
    const Scalar saved = probe[j];
    probe[j] = saved + h;
    const Scalar up = meta_objective(loss, probe, support, query, cfg);
    probe[j] = saved - h;
    const Scalar down = meta_objective(loss, probe, support, query, cfg);
    probe[j] = saved;
    grad[j] = (up - down) / (2.0 * h);
  }
  ensure_finite(grad, "meta_gradient_exact");
  return grad;
}

}  // namespace fedmeta
