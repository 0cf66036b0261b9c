#pragma once

#include "fedmeta/losses.hpp"

namespace fedmeta {

struct AdaptationConfig {
  Scalar alpha = 0.01;  // inner gradient step size, must be positive
  int steps = 1;        // number of inner steps, at least one
};

// Perturbation size for the curvature surrogate at round t: 1 / (slope*t + offset).
// Nonincreasing in t for slope >= 0; offset must be positive.
struct DeltaSchedule {
  Scalar slope = 10.0;
  Scalar offset = 100.0;

  Scalar at(int round) const;

  // Whether the series sum_t at(t) converges. This family never does: it is
  // harmonic for positive slope and constant otherwise.
  bool summable() const { return false; }
};

// Gradient descent on the support loss starting from theta.
ParamVector inner_adapt(const TaskLoss& loss, const ParamVector& theta, const Dataset& support,
                        const AdaptationConfig& cfg);

// Central-difference surrogate for the support Hessian acting on r:
// [grad L(theta + delta r) - grad L(theta - delta r)] / (2 delta).
// Costs two gradient evaluations and never forms the Hessian.
ParamVector hessian_free_product(const TaskLoss& loss, const ParamVector& theta,
                                 const ParamVector& r, Scalar delta, const Dataset& support);

// Query loss after adapting on the support set.
Scalar meta_objective(const TaskLoss& loss, const ParamVector& theta, const Dataset& support,
                      const Dataset& query, const AdaptationConfig& cfg);

// Derivative of the one-step meta objective with the Hessian term replaced by
// the central-difference surrogate: r - alpha * g where r is the query
// gradient at the adapted point and g = hessian_free_product(theta, r, delta).
ParamVector meta_gradient_estimate(const TaskLoss& loss, const ParamVector& theta,
                                   const Dataset& support, const Dataset& query, Scalar alpha,
                                   Scalar delta);

// True one-step meta gradient (I - alpha H_support(theta)) r. Uses the exact
// Hessian product when the family has one; otherwise falls back to central
// differences over meta_objective, which is only allowed up to 200 parameters.
ParamVector meta_gradient_exact(const TaskLoss& loss, const ParamVector& theta,
                                const Dataset& support, const Dataset& query, Scalar alpha);

}  // namespace fedmeta
