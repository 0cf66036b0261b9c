#include "fedmeta/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace fedmeta {

namespace {

void shuffle_indices(std::vector<int>& items, RngStream& rng) {
  for (std::size_t j = items.size(); j > 1; --j) {
    const auto k = static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(j) - 1));
    std::swap(items[j - 1], items[k]);
  }
}

// First m entries of a partial shuffle over pool, drawn without replacement.
std::vector<int> sample_without_replacement(std::vector<int> pool, int m, RngStream& rng) {
  for (int j = 0; j < m; ++j) {
    const auto k = static_cast<std::size_t>(
        rng.next_int(j, static_cast<std::int64_t>(pool.size()) - 1));
    std::swap(pool[static_cast<std::size_t>(j)], pool[k]);
  }
  pool.resize(static_cast<std::size_t>(m));
  return pool;
}

Dataset take_rows(const Dataset& dataset, const std::vector<int>& rows) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dataset.features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = dataset.features.row(rows[i]);
    out.labels[static_cast<Eigen::Index>(i)] = dataset.labels[rows[i]];
  }
  return out;
}

}  // namespace

PartitionResult partition(const Dataset& dataset, const PartitionSpec& spec) {
  if (spec.num_nodes < 1) throw std::invalid_argument("partition: need at least one node");
  if (spec.classes_per_node < 1) {
    throw std::invalid_argument("partition: classes_per_node must be positive");
  }
  if (spec.size_low < 1 || spec.size_low > spec.size_high) {
    throw std::invalid_argument("partition: need 1 <= size_low <= size_high");
  }
  if (!(spec.source_fraction > 0.0 && spec.source_fraction < 1.0) ||
      !(spec.split_fraction > 0.0 && spec.split_fraction < 1.0)) {
    throw std::invalid_argument("partition: fractions must lie in (0, 1)");
  }
  if (dataset.labels.size() != dataset.features.rows()) {
    throw std::invalid_argument("partition: dataset needs one label per row");
  }
  const int rows = dataset.size();
  if (rows < 1) throw std::invalid_argument("partition: empty dataset");

  int num_classes = 0;
  for (Eigen::Index r = 0; r < dataset.labels.size(); ++r) {
    if (dataset.labels[r] < 0) throw std::invalid_argument("partition: negative label");
    num_classes = std::max(num_classes, dataset.labels[r] + 1);
  }
  if (spec.classes_per_node > num_classes) {
    throw std::invalid_argument("partition: fewer classes than classes_per_node");
  }
  if (static_cast<long long>(rows) <
      static_cast<long long>(spec.num_nodes) * spec.size_high) {
    throw std::invalid_argument("partition: dataset smaller than num_nodes * size_high");
  }

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
  for (int r = 0; r < rows; ++r) by_class[static_cast<std::size_t>(dataset.labels[r])].push_back(r);

  const RngStream root(spec.seed);
  std::vector<NodeState> nodes;
  nodes.reserve(static_cast<std::size_t>(spec.num_nodes));

  for (int i = 0; i < spec.num_nodes; ++i) {
    RngStream node_rng = root.split(static_cast<std::uint64_t>(i));
    std::vector<int> picked;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
      std::vector<int> classes;
      while (static_cast<int>(classes.size()) < spec.classes_per_node) {
        const int c = static_cast<int>(node_rng.next_int(0, num_classes - 1));
        if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
      }
      const int want = static_cast<int>(node_rng.next_int(spec.size_low, spec.size_high));
      // Spread the draw evenly over the chosen classes, extras to earlier picks.
      const int k = spec.classes_per_node;
      std::vector<int> quota(static_cast<std::size_t>(k), want / k);
      for (int j = 0; j < want % k; ++j) ++quota[static_cast<std::size_t>(j)];

      bool enough = true;
      for (int j = 0; j < k; ++j) {
        if (static_cast<int>(by_class[static_cast<std::size_t>(classes[j])].size()) <
            quota[static_cast<std::size_t>(j)]) {
          enough = false;
          break;
        }
      }
      if (!enough) continue;

      picked.clear();
      for (int j = 0; j < k; ++j) {
        std::vector<int> taken = sample_without_replacement(
            by_class[static_cast<std::size_t>(classes[j])], quota[static_cast<std::size_t>(j)],
            node_rng);
        picked.insert(picked.end(), taken.begin(), taken.end());
      }
      ok = true;
    }
    if (!ok) {
      throw std::runtime_error("partition: node " + std::to_string(i) +
                               " found no class draw with enough samples in 10 attempts");
    }

    shuffle_indices(picked, node_rng);
    const int total = static_cast<int>(picked.size());
    const int support_count =
        static_cast<int>(std::ceil(spec.split_fraction * static_cast<Scalar>(total)));
    NodeState node;
    node.id = i;
    node.support = take_rows(dataset, {picked.begin(), picked.begin() + support_count});
    node.query = take_rows(dataset, {picked.begin() + support_count, picked.end()});
    nodes.push_back(std::move(node));
  }

  std::vector<int> order(static_cast<std::size_t>(spec.num_nodes));
  std::iota(order.begin(), order.end(), 0);
  RngStream role_rng = root.split("roles");
  shuffle_indices(order, role_rng);
  const int num_sources = static_cast<int>(
      std::ceil(spec.source_fraction * static_cast<Scalar>(spec.num_nodes)));

  std::vector<int> source_ids(order.begin(), order.begin() + num_sources);
  std::vector<int> target_ids(order.begin() + num_sources, order.end());
  std::sort(source_ids.begin(), source_ids.end());
  std::sort(target_ids.begin(), target_ids.end());

  PartitionResult out;
  for (int id : source_ids) out.sources.push_back(nodes[static_cast<std::size_t>(id)]);
  for (int id : target_ids) out.targets.push_back(nodes[static_cast<std::size_t>(id)]);
  return out;
}

namespace {

constexpr char kMagic[7] = {'F', 'M', 'A', 'D', 'M', 'M', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

void put_f64(std::ostream& os, Scalar x) {
  std::uint64_t v = 0;
  static_assert(sizeof(v) == sizeof(x));
  std::memcpy(&v, &x, sizeof(v));
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

void put_vector(std::ostream& os, const ParamVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(os, v[i]);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

Scalar get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  Scalar x;
  std::memcpy(&x, &v, sizeof(x));
  return x;
}

ParamVector get_vector(std::istream& is, int n) {
  ParamVector v(n);
  for (int i = 0; i < n; ++i) v[i] = get_f64(is);
  return v;
}

}  // namespace

Checkpoint make_checkpoint(const std::vector<NodeState>& nodes, const PlatformState& platform) {
  Checkpoint ck;
  ck.round = platform.round;
  ck.theta = platform.theta;
  ck.prior = platform.reg.prior;
  ck.reg_kind = platform.reg.map.kind;
  ck.reg_weights = platform.reg.map.weights;
  ck.lambda = platform.reg.lambda;

  ck.nodes.reserve(nodes.size());
  for (const NodeState& node : nodes) {
    ck.nodes.push_back({node.id, node.theta_local, node.dual, node.rho, node.weight});
  }
  std::sort(ck.nodes.begin(), ck.nodes.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  const auto n = static_cast<std::uint32_t>(ck.theta.size());
  put_u32(os, n);
  put_u32(os, static_cast<std::uint32_t>(ck.nodes.size()));
  put_u32(os, static_cast<std::uint32_t>(ck.round));
  os.put(ck.reg_kind == MirrorMapKind::kSquaredEuclidean ? '\0' : '\1');
  put_f64(os, ck.lambda);
  if (ck.reg_kind != MirrorMapKind::kSquaredEuclidean) put_vector(os, ck.reg_weights);
  put_vector(os, ck.theta);
  put_vector(os, ck.prior);
  for (const Checkpoint::NodeEntry& node : ck.nodes) {
    put_u32(os, static_cast<std::uint32_t>(node.id));
    put_vector(os, node.theta_local);
    put_vector(os, node.dual);
    put_f64(os, node.rho);
    put_f64(os, node.weight);
  }
  if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic))) throw std::runtime_error("checkpoint: truncated file");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: version mismatch, expected FMADMM1");
  }

  Checkpoint ck;
  const int n = static_cast<int>(get_u32(is));
  const int count = static_cast<int>(get_u32(is));
  ck.round = static_cast<int>(get_u32(is));
  const int kind = is.get();
  if (kind == std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint: truncated file");
  }
  if (kind != 0 && kind != 1) throw std::runtime_error("checkpoint: unknown regularizer kind");
  ck.reg_kind = kind == 0 ? MirrorMapKind::kSquaredEuclidean : MirrorMapKind::kDiagonalQuadratic;
  ck.lambda = get_f64(is);
  if (kind == 1) ck.reg_weights = get_vector(is, n);
  ck.theta = get_vector(is, n);
  ck.prior = get_vector(is, n);
  ck.nodes.resize(static_cast<std::size_t>(count));
  for (Checkpoint::NodeEntry& node : ck.nodes) {
    node.id = static_cast<int>(get_u32(is));
    node.theta_local = get_vector(is, n);
    node.dual = get_vector(is, n);
    node.rho = get_f64(is);
    node.weight = get_f64(is);
  }
  return ck;
}

void apply_checkpoint(const Checkpoint& ck, std::vector<NodeState>& nodes,
                      PlatformState& platform) {
  if (nodes.size() != ck.nodes.size()) {
    throw std::runtime_error("checkpoint: node count mismatch (" +
                             std::to_string(ck.nodes.size()) + " stored, " +
                             std::to_string(nodes.size()) + " live)");
  }
  const auto n = ck.theta.size();
  std::vector<NodeState*> by_id;
  by_id.reserve(nodes.size());
  for (NodeState& node : nodes) {
    if (parameter_dim(node.loss) != static_cast<int>(n)) {
      throw std::runtime_error("checkpoint: dimension mismatch on resume");
    }
    by_id.push_back(&node);
  }
  std::sort(by_id.begin(), by_id.end(),
            [](const NodeState* a, const NodeState* b) { return a->id < b->id; });
  for (std::size_t i = 0; i < by_id.size(); ++i) {
    if (by_id[i]->id != ck.nodes[i].id) {
      throw std::runtime_error("checkpoint: node id mismatch on resume");
    }
  }

  platform.theta = ck.theta;
  platform.round = ck.round;
  platform.reg = ck.reg_kind == MirrorMapKind::kSquaredEuclidean
                     ? make_squared_euclidean(ck.prior, ck.lambda)
                     : make_diagonal_quadratic(ck.prior, ck.reg_weights, ck.lambda);
  for (std::size_t i = 0; i < by_id.size(); ++i) {
    by_id[i]->theta_local = ck.nodes[i].theta_local;
    by_id[i]->dual = ck.nodes[i].dual;
    by_id[i]->rho = ck.nodes[i].rho;
    by_id[i]->weight = ck.nodes[i].weight;
  }
}

const char* algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kAdmmFedMeta: return "admm-fedmeta";
    case Algorithm::kExactAdmm: return "exact-admm";
    case Algorithm::kFedAvg: return "fedavg";
    case Algorithm::kPerFedAvg: return "per-fedavg";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "admm-fedmeta") return Algorithm::kAdmmFedMeta;
  if (name == "exact-admm") return Algorithm::kExactAdmm;
  if (name == "fedavg") return Algorithm::kFedAvg;
  if (name == "per-fedavg") return Algorithm::kPerFedAvg;
  throw std::invalid_argument("unknown algorithm '" + name + "'");
}

const char* weight_mode_name(WeightMode mode) {
  return mode == WeightMode::kDataProportional ? "data-proportional" : "uniform";
}

WeightMode parse_weight_mode(const std::string& name) {
  if (name == "data-proportional") return WeightMode::kDataProportional;
  if (name == "uniform") return WeightMode::kUniform;
  throw std::invalid_argument("unknown weight mode '" + name + "'");
}

namespace {

void validate_plan(const ExperimentPlan& plan) {
  if (plan.rounds < 0) throw std::invalid_argument("run_experiment: negative round count");
  if (!(plan.alpha > 0)) throw std::invalid_argument("run_experiment: alpha must be positive");
  if (plan.lambda < 0) throw std::invalid_argument("run_experiment: negative lambda");
  if (plan.algorithm == Algorithm::kAdmmFedMeta || plan.algorithm == Algorithm::kExactAdmm) {
    if (!(plan.rho > 0)) throw std::invalid_argument("run_experiment: rho must be positive");
  }
  if (plan.algorithm == Algorithm::kFedAvg && plan.local_steps < 1) {
    throw std::invalid_argument("run_experiment: fedavg needs at least one local step");
  }
  if (plan.algorithm == Algorithm::kPerFedAvg && plan.beta_outer < 0) {
    throw std::invalid_argument("run_experiment: negative outer stepsize");
  }
  for (int s : plan.adapt_steps) {
    if (s < 1) throw std::invalid_argument("run_experiment: adaptation steps must be positive");
  }
}

RoundRecord build_record(const std::vector<NodeState>& nodes, const PlatformState& platform,
                         Scalar alpha, bool record_fosp,
                         const std::vector<ParamVector>& prev_duals) {
  RoundRecord rec;
  rec.round = platform.round;
  rec.primal_residuals.resize(nodes.size());
  rec.dual_deltas.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    rec.primal_residuals[i] = (nodes[i].theta_local - platform.theta).norm();
    rec.dual_deltas[i] = (nodes[i].dual - prev_duals[i]).norm();
  }
  rec.lagrangian = lagrangian_value(nodes, platform, alpha);
  rec.objective = objective_value(platform.theta, nodes, platform, alpha);
  rec.fosp_gap = record_fosp ? fosp_gap(platform.theta, nodes, platform, alpha)
                             : std::numeric_limits<Scalar>::quiet_NaN();
  Scalar train_loss = 0.0;
  for (const NodeState& node : nodes) {
    const Scalar ls = loss_value(node.loss, platform.theta, node.support);
    const Scalar lq = loss_value(node.loss, platform.theta, node.query);
    const Scalar ns = node.support.size(), nq = node.query.size();
    train_loss += node.weight * (ns * ls + nq * lq) / (ns + nq);
  }
  rec.mean_train_loss = train_loss;
  return rec;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentPlan& plan, std::vector<NodeState>& nodes,
                            std::vector<NodeState>& targets, PlatformState& platform,
                            const RunHooks& hooks) {
  validate_plan(plan);
  if (nodes.empty()) throw std::invalid_argument("run_experiment: no training nodes");

  const int n = parameter_dim(nodes.front().loss);
  if (platform.theta.size() != n) {
    throw std::invalid_argument("run_experiment: platform dimension mismatch");
  }

  // Stamp plan hyperparameters onto the nodes.
  Scalar total_size = 0.0;
  for (const NodeState& node : nodes) total_size += node.support.size() + node.query.size();
  for (NodeState& node : nodes) {
    node.rho = plan.rho;
    node.delta = plan.delta;
    node.weight = plan.weight_mode == WeightMode::kUniform
                      ? 1.0 / static_cast<Scalar>(nodes.size())
                      : (node.support.size() + node.query.size()) / total_size;
    if (node.theta_local.size() == 0) node.theta_local = ParamVector::Zero(n);
    if (node.dual.size() == 0) node.dual = ParamVector::Zero(n);
  }

  if (platform.reg.prior.size() != n) {
    platform.reg = make_squared_euclidean(ParamVector::Zero(n), plan.lambda);
  }
  platform.reg.lambda = plan.lambda;
  if (!plan.prior_checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(plan.prior_checkpoint);
    if (ck.theta.size() != n) {
      throw std::runtime_error("run_experiment: prior checkpoint dimension mismatch");
    }
    platform.theta = ck.theta;
    platform.reg.prior = ck.theta;
  }

  RunArtifacts artifacts;
  if (plan.algorithm == Algorithm::kAdmmFedMeta) {
    RunOptions opts;
    opts.alpha = plan.alpha;
    opts.rounds = plan.rounds;
    opts.threads = plan.threads;
    opts.record_fosp = plan.record_fosp;
    opts.record_wallclock = plan.record_wallclock;
    RunResult res = run_admm_fedmeta(nodes, platform, opts, hooks);
    artifacts.trace = std::move(res.trace);
  } else {
    artifacts.trace.reserve(static_cast<std::size_t>(plan.rounds));
    for (int step = 0; step < plan.rounds; ++step) {
      const auto started = std::chrono::steady_clock::now();
      const int round = platform.round;
      const ParamVector theta = platform.theta;
      std::vector<ParamVector> prev_duals(nodes.size());
      for (std::size_t i = 0; i < nodes.size(); ++i) prev_duals[i] = nodes[i].dual;

      try {
        switch (plan.algorithm) {
          case Algorithm::kExactAdmm: {
            for (NodeState& node : nodes) {
              exact_admm_node_update(node, theta, plan.alpha, plan.inner_tol, plan.inner_iters);
            }
            platform.theta = platform_aggregate(nodes, platform);
            break;
          }
          case Algorithm::kFedAvg: {
            platform.theta = fedavg_round(nodes, theta, plan.alpha, plan.local_steps);
            for (NodeState& node : nodes) {
              node.theta_local = platform.theta;
              node.dual.setZero();
            }
            break;
          }
          case Algorithm::kPerFedAvg: {
            platform.theta =
                perfedavg_round(nodes, theta, plan.alpha, plan.beta_outer, round);
            for (NodeState& node : nodes) {
              node.theta_local = platform.theta;
              node.dual.setZero();
            }
            break;
          }
          default: break;
        }
        if (!platform.theta.allFinite()) throw NumericError("non-finite global parameters");
        platform.round = round + 1;
        RoundRecord rec =
            build_record(nodes, platform, plan.alpha, plan.record_fosp, prev_duals);
        if (plan.record_wallclock) {
          rec.wallclock_s =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        }
        artifacts.trace.push_back(std::move(rec));
      } catch (const DivergenceError&) {
        throw;
      } catch (const NumericError& e) {
        throw DivergenceError(round, -1, e.what());
      }
      if (hooks.on_round) hooks.on_round(artifacts.trace.back(), nodes, platform);
    }
  }
  artifacts.theta_final = platform.theta;

  for (const NodeState& target : targets) {
    if (target.loss.family == LossFamily::kCubicQuadratic) continue;  // no adaptation contract
    AdaptationConfig pre_cfg{0.0, 1};
    const AdaptationResult pre = adaptation_eval(artifacts.theta_final, target, pre_cfg);
    for (int steps : plan.adapt_steps) {
      AdaptationConfig cfg{plan.alpha, steps};
      const AdaptationResult post = adaptation_eval(artifacts.theta_final, target, cfg);
      artifacts.adaptation.push_back(
          {target.id, steps, pre.loss, post.loss, pre.accuracy, post.accuracy});
    }
  }

  if (plan.prior_task) {
    artifacts.prior_forgetting =
        forgetting_eval(artifacts.theta_final, plan.prior_task->loss, plan.prior_task->data);
  }
  return artifacts;
}

}  // namespace fedmeta
