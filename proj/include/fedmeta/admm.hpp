#pragma once

#include "fedmeta/meta.hpp"
#include "fedmeta/regularizer.hpp"

#include <functional>
#include <vector>

namespace fedmeta {

// One federated node: its task, data split, penalty and aggregation weights,
// and the primal/dual iterates it owns.
struct NodeState {
  int id = 0;
  TaskLoss loss;
  Dataset support;
  Dataset query;
  Scalar weight = 0.0;  // aggregation weight; training-node weights sum to one
  Scalar rho = 1.0;     // consensus penalty, positive
  ParamVector theta_local;
  ParamVector dual;
  DeltaSchedule delta;
};

struct PlatformState {
  ParamVector theta;
  BregmanRegularizer reg;
  int round = 0;  // completed rounds
};

// Metrics for one completed round, evaluated at the end-of-round state: the
// freshly aggregated global theta together with the node iterates that
// produced it. round counts aggregations, so the first record has round 1.
struct RoundRecord {
  int round = 0;
  Scalar lagrangian = 0.0;
  Scalar objective = 0.0;                // F(theta)
  Scalar fosp_gap = 0.0;                 // |grad F(theta)|, NaN when skipped
  std::vector<Scalar> primal_residuals;  // per node |theta_i - theta|
  std::vector<Scalar> dual_deltas;       // per node |y_i - previous y_i|
  Scalar mean_train_loss = 0.0;          // weighted plain loss over node data
  Scalar wallclock_s = 0.0;              // zero unless wallclock recording is on
};

Scalar max_primal_residual(const RoundRecord& rec);
Scalar max_dual_delta(const RoundRecord& rec);

// Raised when a run must abort: non-finite state or a violated invariant.
class DivergenceError : public NumericError {
 public:
  DivergenceError(int round, int node_id, const std::string& message);
  int round() const { return round_; }
  int node_id() const { return node_id_; }  // -1 when not tied to one node

 private:
  int round_;
  int node_id_;
};

// Linearized update of one node against the incoming global parameters:
// adapt, estimate the meta gradient with the round's delta, take the
// closed-form penalized step, then update the dual. Returns the meta-gradient
// estimate; afterwards dual == -weight * estimate up to roundoff.
ParamVector node_update(NodeState& node, const ParamVector& theta, Scalar alpha, int round);

// New global parameters: rho-weighted node states plus duals, pulled toward
// the prior by lambda times the regularizer gradient at the current theta.
// The node sum is accumulated in ascending id order.
ParamVector platform_aggregate(const std::vector<NodeState>& nodes,
                               const PlatformState& platform);

struct RunHooks {
  std::function<void(const RoundRecord&, const std::vector<NodeState>&, const PlatformState&)>
      on_round;
};

struct RunOptions {
  Scalar alpha = 0.01;
  int rounds = 0;
  int threads = 1;             // node updates in parallel; results are order-independent
  bool record_fosp = true;     // exact-gradient stationarity gap each round
  bool record_wallclock = false;  // off by default so traces stay bit-reproducible
};

struct RunResult {
  std::vector<RoundRecord> trace;
  ParamVector theta_final;
};

// Runs full rounds of node updates plus aggregation, recording one
// RoundRecord per round. Mutates nodes and platform in place; empty node
// iterates are initialized to zero. Throws DivergenceError on non-finite
// state or a dual-identity violation.
RunResult run_admm_fedmeta(std::vector<NodeState>& nodes, PlatformState& platform,
                           const RunOptions& opts, const RunHooks& hooks = {});

struct ExactNodeResult {
  bool converged = false;
  int iterations = 0;
  Scalar grad_norm = 0.0;
};

// Reference node update without linearization: minimizes the node's share of
// the augmented Lagrangian by backtracking gradient descent on exact meta
// gradients, then applies the same dual update. Non-convergence is reported
// in the result, not thrown.
ExactNodeResult exact_admm_node_update(NodeState& node, const ParamVector& theta, Scalar alpha,
                                       Scalar inner_tol, int inner_max_iters);

// Baseline: local_steps full-gradient steps on each node's combined
// support+query data, then the weight-averaged model.
ParamVector fedavg_round(const std::vector<NodeState>& nodes, const ParamVector& theta,
                         Scalar alpha_local, int local_steps);

// Baseline: one federated meta step, theta minus beta_outer times the
// weighted meta-gradient estimates (round picks the delta).
ParamVector perfedavg_round(const std::vector<NodeState>& nodes, const ParamVector& theta,
                            Scalar alpha, Scalar beta_outer, int round);

}  // namespace fedmeta
