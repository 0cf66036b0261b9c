#pragma once

#include "fedmeta/admm.hpp"

namespace fedmeta {

// Empirical (probe-based) or closed-form bounds on a task's smoothness
// constants: mu bounds the gradient Lipschitz quotient, beta the gradient
// norm, zeta the Hessian Lipschitz quotient. Probe maxima are lower bounds on
// the true suprema. analytic means mu and zeta are closed forms for the
// family; beta is always a probe maximum since gradients are unbounded on
// all of parameter space.
struct ConstantsEstimate {
  Scalar mu = 0.0;
  Scalar beta = 0.0;
  Scalar zeta = 0.0;
  int probes = 0;
  bool analytic = false;
};

// Probes random point pairs inside the given radius around the origin.
// Requires probes >= 2.
ConstantsEstimate estimate_constants(const TaskLoss& loss, const Dataset& data, int probes,
                                     Scalar radius, RngStream& rng);

// Smoothness constant of the one-step meta loss:
// (1 + alpha*mu) * (1 + mu) * mu + alpha*beta*zeta.
Scalar nu_constant(Scalar mu, Scalar beta, Scalar zeta, Scalar alpha);

// Penalty-size conditions for convergence, evaluated per node as the sign of
// three margins, plus whether the delta schedule has a finite sum (the
// 1/(slope*t + offset) family never does).
struct Assumption5Report {
  struct NodeVerdict {
    int index = 0;
    Scalar nu = 0.0;
    Scalar local_descent_margin = 0.0;   // rho/2 - 4 w nu
    Scalar global_descent_margin = 0.0;  // rho/2 - 2w^2nu^2(4w nu/rho^2 + 1/rho) - lambda mu_r/(2I)
    Scalar dual_control_margin = 0.0;    // rho - 3 nu
    bool local_descent = false;
    bool global_descent = false;
    bool dual_control = false;
    bool all() const { return local_descent && global_descent && dual_control; }
  };
  std::vector<NodeVerdict> nodes;
  bool all_hold = false;
  bool delta_summable = false;
};

Assumption5Report assumption5_check(const std::vector<Scalar>& rho, const std::vector<Scalar>& nu,
                                    const std::vector<Scalar>& w, Scalar lambda, Scalar mu_r,
                                    int num_nodes, const DeltaSchedule& schedule);

// Augmented Lagrangian at the given joint state: each node's weighted meta
// loss at theta_local plus dual coupling and quadratic penalty against the
// platform theta, plus the lambda-scaled Bregman pull toward the prior.
Scalar lagrangian_value(const std::vector<NodeState>& nodes, const PlatformState& platform,
                        Scalar alpha);

// The training objective: weighted one-step meta losses plus the prior
// penalty, both as a value and as the norm of its exact gradient. The
// gradient path never uses the finite-delta estimator.
Scalar objective_value(const ParamVector& theta, const std::vector<NodeState>& nodes,
                       const PlatformState& platform, Scalar alpha);
Scalar fosp_gap(const ParamVector& theta, const std::vector<NodeState>& nodes,
                const PlatformState& platform, Scalar alpha);

// Probe maxima of gradient and curvature differences between each training
// node's task and the target's, evaluated at shared random points. Lower
// bounds on the task-similarity constants.
struct SimilarityEstimate {
  std::vector<int> node_ids;
  std::vector<Scalar> psi_g;
  std::vector<Scalar> psi_h;
  int probes = 0;
};

SimilarityEstimate estimate_similarity(const std::vector<NodeState>& nodes,
                                       const NodeState& target, int probes, Scalar radius,
                                       RngStream& rng);

// Adapt on the target's support set, score on its query set. accuracy is NaN
// for non-classification families. alpha == 0 skips adaptation.
struct AdaptationResult {
  Scalar loss = 0.0;
  Scalar accuracy = 0.0;
};

AdaptationResult adaptation_eval(const ParamVector& theta, const NodeState& target,
                                 const AdaptationConfig& cfg);

// Loss, gradient norm, and accuracy (NaN when undefined) of the current
// parameters on a previously learned task.
struct ForgettingResult {
  Scalar loss = 0.0;
  Scalar grad_norm = 0.0;
  Scalar accuracy = 0.0;
};

ForgettingResult forgetting_eval(const ParamVector& theta, const TaskLoss& prior_loss,
                                 const Dataset& prior_data);

}  // namespace fedmeta
