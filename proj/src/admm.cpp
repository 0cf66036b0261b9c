#include "fedmeta/admm.hpp"

#include "fedmeta/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace fedmeta {

namespace {

Scalar vec_max(const std::vector<Scalar>& v) {
  Scalar m = 0.0;
  for (Scalar x : v) m = std::max(m, x);
  return m;
}

void require_node(const NodeState& node, Eigen::Index n, const char* op) {
  if (!(node.rho > 0)) {
    throw std::invalid_argument(std::string(op) + ": rho must be positive (node " +
                                std::to_string(node.id) + ")");
  }
  if (!(node.weight > 0) || node.weight > 1.0) {
    throw std::invalid_argument(std::string(op) + ": weight must lie in (0, 1] (node " +
                                std::to_string(node.id) + ")");
  }
  if (node.theta_local.size() != n || node.dual.size() != n) {
    throw std::invalid_argument(std::string(op) + ": iterate dimensions disagree (node " +
                                std::to_string(node.id) + ")");
  }
}

// Node's share of the augmented Lagrangian at local parameters x.
Scalar node_subobjective(const NodeState& node, const ParamVector& x, const ParamVector& theta,
                         Scalar alpha) {
  return node.weight * meta_objective(node.loss, x, node.support, node.query, {alpha, 1}) +
         node.dual.dot(x - theta) + 0.5 * node.rho * (x - theta).squaredNorm();
}

}  // namespace

Scalar max_primal_residual(const RoundRecord& rec) { return vec_max(rec.primal_residuals); }

Scalar max_dual_delta(const RoundRecord& rec) { return vec_max(rec.dual_deltas); }

DivergenceError::DivergenceError(int round, int node_id, const std::string& message)
    : NumericError("round " + std::to_string(round) +
                   (node_id >= 0 ? ", node " + std::to_string(node_id) : std::string()) + ": " +
                   message),
      round_(round),
      node_id_(node_id) {}

ParamVector node_update(NodeState& node, const ParamVector& theta, Scalar alpha, int round) {
  if (round < 0) throw std::invalid_argument("node_update: negative round");
  require_node(node, theta.size(), "node_update");

  const Scalar delta = node.delta.at(round);
  const ParamVector phi = theta - alpha * loss_gradient(node.loss, theta, node.support);
  const ParamVector r = loss_gradient(node.loss, phi, node.query);
  const ParamVector g = hessian_free_product(node.loss, theta, r, delta, node.support);
  const ParamVector estimate = r - alpha * g;

  node.theta_local = theta - (node.dual + node.weight * estimate) / node.rho;
  node.dual += node.rho * (node.theta_local - theta);

  if (!node.theta_local.allFinite() || !node.dual.allFinite()) {
    throw DivergenceError(round, node.id, "non-finite node update");
  }
  return estimate;
}

ParamVector platform_aggregate(const std::vector<NodeState>& nodes,
                               const PlatformState& platform) {
  if (nodes.empty()) throw std::invalid_argument("platform_aggregate: no nodes");
  const Eigen::Index n = platform.theta.size();

  std::vector<const NodeState*> ordered;
  ordered.reserve(nodes.size());
  for (const NodeState& node : nodes) ordered.push_back(&node);
  std::sort(ordered.begin(), ordered.end(),
            [](const NodeState* a, const NodeState* b) { return a->id < b->id; });

  ParamVector numerator = ParamVector::Zero(n);
  Scalar rho_sum = 0.0;
  for (const NodeState* node : ordered) {
    if (node->theta_local.size() != n || node->dual.size() != n) {
      throw std::invalid_argument("platform_aggregate: node dimension mismatch (node " +
                                  std::to_string(node->id) + ")");
    }
    numerator += node->dual + node->rho * node->theta_local;
    rho_sum += node->rho;
  }
  if (!(rho_sum > 0)) throw std::invalid_argument("platform_aggregate: penalty sum must be positive");

  numerator -= platform.reg.lambda * bregman_gradient(platform.reg, platform.theta);
  return numerator / rho_sum;
}

RunResult run_admm_fedmeta(std::vector<NodeState>& nodes, PlatformState& platform,
                           const RunOptions& opts, const RunHooks& hooks) {
  if (nodes.empty()) throw std::invalid_argument("run_admm_fedmeta: no nodes");
  if (opts.rounds < 0) throw std::invalid_argument("run_admm_fedmeta: negative round count");
  const Eigen::Index n = platform.theta.size();
  if (platform.reg.prior.size() != n) {
    throw std::invalid_argument("run_admm_fedmeta: prior dimension mismatch");
  }

  Scalar weight_sum = 0.0;
  for (NodeState& node : nodes) {
    if (node.theta_local.size() == 0) node.theta_local = ParamVector::Zero(n);
    if (node.dual.size() == 0) node.dual = ParamVector::Zero(n);
    require_node(node, n, "run_admm_fedmeta");
    weight_sum += node.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-12) {
    throw std::invalid_argument("run_admm_fedmeta: node weights must sum to one");
  }

  const std::size_t count = nodes.size();
  RunResult result;
  result.trace.reserve(static_cast<std::size_t>(opts.rounds));

  std::vector<ParamVector> estimates(count);

  for (int step = 0; step < opts.rounds; ++step) {
    const auto started = std::chrono::steady_clock::now();
    const int round = platform.round;
    const ParamVector theta = platform.theta;

    std::vector<ParamVector> prev_duals(count);
    for (std::size_t i = 0; i < count; ++i) prev_duals[i] = nodes[i].dual;

    auto update_one = [&](std::size_t i) {
      try {
        estimates[i] = node_update(nodes[i], theta, opts.alpha, round);
      } catch (const DivergenceError&) {
        throw;
      } catch (const NumericError& e) {
        throw DivergenceError(round, nodes[i].id, e.what());
      }
    };

    const int threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(count)));
    if (threads == 1) {
      for (std::size_t i = 0; i < count; ++i) update_one(i);
    } else {
      std::vector<std::exception_ptr> errors(count);
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(threads));
      for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t i = static_cast<std::size_t>(w); i < count;
               i += static_cast<std::size_t>(threads)) {
            try {
              update_one(i);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
      for (std::thread& t : pool) t.join();
      for (std::size_t i = 0; i < count; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
      }
    }

    RoundRecord rec;
    rec.round = round + 1;
    rec.primal_residuals.resize(count);
    rec.dual_deltas.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const NodeState& node = nodes[i];
      // Closing the loop on the dual step: y must equal -w * estimate.
      const Scalar drift = (node.dual + node.weight * estimates[i]).norm();
      if (drift > 1e-10 * (1.0 + node.dual.norm())) {
        throw DivergenceError(round, node.id, "dual identity violated");
      }
      rec.dual_deltas[i] = (node.dual - prev_duals[i]).norm();
    }

    ParamVector next;
    try {
      next = platform_aggregate(nodes, platform);
    } catch (const NumericError& e) {
      throw DivergenceError(round, -1, e.what());
    }
    if (!next.allFinite()) throw DivergenceError(round, -1, "non-finite aggregation");
    platform.theta = next;
    platform.round = round + 1;

    for (std::size_t i = 0; i < count; ++i) {
      rec.primal_residuals[i] = (nodes[i].theta_local - platform.theta).norm();
    }
    try {
      rec.lagrangian = lagrangian_value(nodes, platform, opts.alpha);
      rec.objective = objective_value(platform.theta, nodes, platform, opts.alpha);
      rec.fosp_gap = opts.record_fosp ? fosp_gap(platform.theta, nodes, platform, opts.alpha)
                                      : std::numeric_limits<Scalar>::quiet_NaN();
      Scalar train_loss = 0.0;
      for (const NodeState& node : nodes) {
        const Scalar ls = loss_value(node.loss, platform.theta, node.support);
        const Scalar lq = loss_value(node.loss, platform.theta, node.query);
        const Scalar ns = node.support.size(), nq = node.query.size();
        train_loss += node.weight * (ns * ls + nq * lq) / (ns + nq);
      }
      rec.mean_train_loss = train_loss;
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericError& e) {
      throw DivergenceError(round, -1, e.what());
    }
    if (opts.record_wallclock) {
      rec.wallclock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }

    result.trace.push_back(rec);
    if (hooks.on_round) hooks.on_round(result.trace.back(), nodes, platform);
  }

  result.theta_final = platform.theta;
  return result;
}

ExactNodeResult exact_admm_node_update(NodeState& node, const ParamVector& theta, Scalar alpha,
                                       Scalar inner_tol, int inner_max_iters) {
  require_node(node, theta.size(), "exact_admm_node_update");
  if (!(inner_tol > 0)) throw std::invalid_argument("exact_admm_node_update: tol must be positive");
  if (inner_max_iters < 1) {
    throw std::invalid_argument("exact_admm_node_update: need at least one iteration");
  }

  auto gradient = [&](const ParamVector& x) -> ParamVector {
    return node.weight * meta_gradient_exact(node.loss, x, node.support, node.query, alpha) +
           node.dual + node.rho * (x - theta);
  };

  ParamVector x = theta;
  ExactNodeResult out;
  const Scalar eta0 = 1.0 / node.rho;
  Scalar best_grad = std::numeric_limits<Scalar>::infinity();
  int stalled = 0;
  for (out.iterations = 0; out.iterations < inner_max_iters; ++out.iterations) {
    const ParamVector g = gradient(x);
    out.grad_norm = g.norm();
    if (out.grad_norm <= inner_tol) {
      out.converged = true;
      break;
    }
    // once rounding noise dominates, the gradient norm stops shrinking;
    // detect that floor instead of spinning out the iteration budget
    if (out.grad_norm <= 0.99 * best_grad) {
      best_grad = out.grad_norm;
      stalled = 0;
    } else if (++stalled >= 100) {
      break;
    }
    const Scalar fx = node_subobjective(node, x, theta, alpha);
    Scalar eta = eta0;
    ParamVector candidate = x - eta * g;
    int backtracks = 0;
    while (backtracks < 60 && node_subobjective(node, candidate, theta, alpha) >
                                  fx - 1e-4 * eta * out.grad_norm * out.grad_norm) {
      eta *= 0.5;
      candidate = x - eta * g;
      ++backtracks;
    }
    // no descent at any stepsize: the objective is flat at evaluation
    // precision, so further iterations cannot make progress
    if (backtracks >= 60) break;
    x = candidate;
    if (!x.allFinite()) throw DivergenceError(-1, node.id, "non-finite exact node update");
  }
  if (!out.converged) out.grad_norm = gradient(x).norm();
  out.converged = out.grad_norm <= inner_tol;

  node.theta_local = x;
  node.dual += node.rho * (node.theta_local - theta);
  return out;
}

ParamVector fedavg_round(const std::vector<NodeState>& nodes, const ParamVector& theta,
                         Scalar alpha_local, int local_steps) {
  if (local_steps < 1) throw std::invalid_argument("fedavg_round: need at least one local step");
  if (nodes.empty()) throw std::invalid_argument("fedavg_round: no nodes");

  std::vector<const NodeState*> ordered;
  for (const NodeState& node : nodes) ordered.push_back(&node);
  std::sort(ordered.begin(), ordered.end(),
            [](const NodeState* a, const NodeState* b) { return a->id < b->id; });

  ParamVector mixed = ParamVector::Zero(theta.size());
  for (const NodeState* node : ordered) {
    const Dataset combined = concat(node->support, node->query);
    ParamVector local = theta;
    for (int s = 0; s < local_steps; ++s) {
      local -= alpha_local * loss_gradient(node->loss, local, combined);
    }
    mixed += node->weight * local;
  }
  ensure_finite(mixed, "fedavg_round");
  return mixed;
}

ParamVector perfedavg_round(const std::vector<NodeState>& nodes, const ParamVector& theta,
                            Scalar alpha, Scalar beta_outer, int round) {
  if (beta_outer < 0) throw std::invalid_argument("perfedavg_round: negative outer step");
  if (nodes.empty()) throw std::invalid_argument("perfedavg_round: no nodes");

  std::vector<const NodeState*> ordered;
  for (const NodeState& node : nodes) ordered.push_back(&node);
  std::sort(ordered.begin(), ordered.end(),
            [](const NodeState* a, const NodeState* b) { return a->id < b->id; });

  ParamVector step = ParamVector::Zero(theta.size());
  for (const NodeState* node : ordered) {
    step += node->weight * meta_gradient_estimate(node->loss, theta, node->support, node->query,
                                                  alpha, node->delta.at(round));
  }
  ParamVector next = theta - beta_outer * step;
  ensure_finite(next, "perfedavg_round");
  return next;
}

}  // namespace fedmeta
