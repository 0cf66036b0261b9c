#include "fedmeta/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fedmeta {

namespace {

namespace fs = std::filesystem;

constexpr const char* kTraceHeader =
    "round,lagrangian,objective_F,fosp_gap,max_primal_residual,max_dual_delta,"
    "mean_train_loss,wallclock_s";

std::string trace_row(const RoundRecord& rec) {
  std::ostringstream out;
  out << rec.round << ',' << format_double(rec.lagrangian) << ','
      << format_double(rec.objective) << ',' << format_double(rec.fosp_gap) << ','
      << format_double(max_primal_residual(rec)) << ',' << format_double(max_dual_delta(rec))
      << ',' << format_double(rec.mean_train_loss) << ',' << format_double(rec.wallclock_s);
  return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write '" + path.string() + "'");
  file << text;
}

void echo_config(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  write_text(fs::path(cfg.output_dir) / "effective.cfg", format_config(cfg));
}

ExperimentPlan plan_from_config(const RunConfig& cfg) {
  ExperimentPlan plan;
  plan.algorithm = parse_algorithm(cfg.algorithm);
  plan.rounds = cfg.rounds;
  plan.alpha = cfg.alpha;
  plan.lambda = cfg.lambda;
  plan.rho = cfg.rho;
  plan.delta = DeltaSchedule{cfg.delta_slope, cfg.delta_offset};
  plan.weight_mode = parse_weight_mode(cfg.weight_mode);
  plan.adapt_steps = cfg.adapt_steps;
  plan.prior_checkpoint = cfg.prior_checkpoint;
  plan.beta_outer = cfg.beta_outer;
  plan.local_steps = cfg.local_steps;
  plan.inner_tol = cfg.inner_tol;
  plan.inner_iters = cfg.inner_iters;
  plan.threads = cfg.threads;
  plan.record_fosp = cfg.record_fosp;
  plan.record_wallclock = cfg.record_wallclock;
  return plan;
}

std::pair<int, int> parse_class_filter(const std::string& filter) {
  const std::size_t colon = filter.find(':');
  return {std::stoi(filter.substr(0, colon)), std::stoi(filter.substr(colon + 1))};
}

Dataset filter_classes(const Dataset& data, int lo, int hi) {
  std::vector<int> keep;
  for (int r = 0; r < data.size(); ++r) {
    if (data.labels[r] >= lo && data.labels[r] < hi) keep.push_back(r);
  }
  if (keep.empty()) throw std::invalid_argument("class_filter keeps no samples");
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(keep.size()), data.features.cols());
  out.labels.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = data.features.row(keep[i]);
    out.labels[static_cast<Eigen::Index>(i)] = data.labels[keep[i]] - lo;
  }
  return out;
}

int count_classes(const Dataset& data) {
  int c = 0;
  for (Eigen::Index r = 0; r < data.labels.size(); ++r) c = std::max(c, data.labels[r] + 1);
  return c;
}

TaskLoss classification_loss(const RunConfig& cfg, int input_dim, int num_classes) {
  if (cfg.model == "logistic") {
    if (num_classes != 2) {
      throw std::invalid_argument("logistic model needs exactly two classes, dataset has " +
                                  std::to_string(num_classes));
    }
    return make_logistic(input_dim);
  }
  if (cfg.model == "softmax") return make_softmax(input_dim, num_classes);
  MlpShape shape;
  shape.input_dim = input_dim;
  shape.hidden = cfg.hidden;
  shape.num_classes = num_classes;
  return make_mlp(shape);
}

// Mixture tasks get the same seeded source/target shuffle nodes get.
std::pair<std::vector<int>, std::vector<int>> split_roles(int count, Scalar source_fraction,
                                                          std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  RngStream rng = RngStream(seed).split("roles");
  for (std::size_t j = order.size(); j > 1; --j) {
    const auto k = static_cast<std::size_t>(rng.next_int(0, static_cast<std::int64_t>(j) - 1));
    std::swap(order[j - 1], order[k]);
  }
  const int sources = static_cast<int>(std::ceil(source_fraction * static_cast<Scalar>(count)));
  std::vector<int> src(order.begin(), order.begin() + sources);
  std::vector<int> tgt(order.begin() + sources, order.end());
  std::sort(src.begin(), src.end());
  std::sort(tgt.begin(), tgt.end());
  return {src, tgt};
}

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.dataset.rfind("idx:", 0) == 0) {
    const std::size_t second = cfg.dataset.find(':', 4);
    return load_idx(cfg.dataset.substr(4, second - 4), cfg.dataset.substr(second + 1));
  }
  if (cfg.dataset.rfind("csv:", 0) == 0) return load_csv(cfg.dataset.substr(4));
  SyntheticParams params;
  params.dim = cfg.model_dim;
  params.spread = cfg.spread;
  params.noise = cfg.noise;
  params.num_classes = cfg.num_classes;
  params.samples_per_class = cfg.samples_per_class;
  return generate_synthetic(SyntheticKind::kGaussianClasses, params, cfg.seed).samples;
}

}  // namespace

Experiment build_experiment(const RunConfig& cfg) {
  validate_config(cfg);
  Experiment ex;
  ex.plan = plan_from_config(cfg);

  if (cfg.dataset == "synthetic-quadratic" || cfg.dataset == "synthetic-cubic") {
    SyntheticParams params;
    params.num_tasks = cfg.num_nodes;
    params.dim = cfg.model_dim;
    params.spread = cfg.spread;
    params.curvature_diag = ParamVector::Constant(cfg.model_dim, cfg.curvature);
    params.cubic_coeff = cfg.cubic_coeff;
    params.rows_per_set = cfg.rows_per_set;
    const SyntheticKind kind = cfg.dataset == "synthetic-quadratic"
                                   ? SyntheticKind::kQuadraticMixture
                                   : SyntheticKind::kCubicMixture;
    const SyntheticData gen = generate_synthetic(kind, params, cfg.seed);

    const auto [source_ids, target_ids] =
        split_roles(cfg.num_nodes, cfg.source_fraction, cfg.seed);
    auto make_node = [&](int id) {
      const SyntheticTask& task = gen.tasks[static_cast<std::size_t>(id)];
      NodeState node;
      node.id = id;
      node.loss = task.loss;
      node.support = task.support;
      node.query = task.query;
      return node;
    };
    for (int id : source_ids) ex.nodes.push_back(make_node(id));
    for (int id : target_ids) ex.targets.push_back(make_node(id));
  } else {
    Dataset data = load_dataset(cfg);
    if (!cfg.class_filter.empty()) {
      const auto [lo, hi] = parse_class_filter(cfg.class_filter);
      data = filter_classes(data, lo, hi);
    }
    PartitionSpec spec;
    spec.num_nodes = cfg.num_nodes;
    spec.classes_per_node = cfg.classes_per_node;
    spec.size_low = cfg.size_low;
    spec.size_high = cfg.size_high;
    spec.source_fraction = cfg.source_fraction;
    spec.split_fraction = cfg.split_fraction;
    spec.seed = cfg.seed;
    PartitionResult parts = partition(data, spec);

    const TaskLoss loss =
        classification_loss(cfg, data.feature_dim(), count_classes(data));
    for (NodeState& node : parts.sources) node.loss = loss;
    for (NodeState& node : parts.targets) node.loss = loss;
    ex.nodes = std::move(parts.sources);
    ex.targets = std::move(parts.targets);
  }

  const TaskLoss& model = ex.nodes.empty() ? ex.targets.front().loss : ex.nodes.front().loss;
  const int n = parameter_dim(model);
  RngStream init_rng = RngStream(cfg.seed).split("init");
  ex.platform.theta = init_parameters(model, init_rng);
  ex.platform.reg = make_squared_euclidean(ParamVector::Zero(n), cfg.lambda);
  ex.platform.round = 0;
  return ex;
}

int cmd_train(const RunConfig& cfg) {
  try {
    Experiment ex = build_experiment(cfg);
    echo_config(cfg);
    const fs::path dir(cfg.output_dir);

    std::ofstream trace(dir / "trace.csv", std::ios::binary | std::ios::trunc);
    if (!trace) throw std::runtime_error("cannot write trace.csv");
    trace << kTraceHeader << '\n';
    trace.flush();
    RunHooks hooks;
    hooks.on_round = [&trace](const RoundRecord& rec, const std::vector<NodeState>&,
                              const PlatformState&) {
      trace << trace_row(rec) << '\n';
      trace.flush();
    };

    try {
      run_experiment(ex.plan, ex.nodes, ex.targets, ex.platform, hooks);
    } catch (const DivergenceError& e) {
      std::cerr << "fedmeta train: diverged at round " << e.round() << ": " << e.what() << "\n";
      return 1;
    }
    save_checkpoint(make_checkpoint(ex.nodes, ex.platform), (dir / "checkpoint.bin").string());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fedmeta train: " << e.what() << "\n";
    return 1;
  }
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path) {
  try {
    Experiment ex = build_experiment(cfg);
    echo_config(cfg);
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.theta.size() != ex.platform.theta.size()) {
      throw std::runtime_error("checkpoint dimension mismatch: model has " +
                               std::to_string(ex.platform.theta.size()) + " parameters, " +
                               "checkpoint " + std::to_string(ck.theta.size()));
    }

    std::ostringstream out;
    out << "target_id,steps,pre_loss,post_loss,pre_acc,post_acc\n";
    for (const NodeState& target : ex.targets) {
      const AdaptationResult pre = adaptation_eval(ck.theta, target, {0.0, 1});
      for (int steps : cfg.adapt_steps) {
        const AdaptationResult post = adaptation_eval(ck.theta, target, {cfg.alpha, steps});
        out << target.id << ',' << steps << ',' << format_double(pre.loss) << ','
            << format_double(post.loss) << ',' << format_double(pre.accuracy) << ','
            << format_double(post.accuracy) << '\n';
      }
    }
    write_text(fs::path(cfg.output_dir) / "adaptation.csv", out.str());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fedmeta evaluate: " << e.what() << "\n";
    return 1;
  }
}

int cmd_forgetting(const RunConfig& cfg) {
  try {
    if (cfg.prior_checkpoint.empty()) {
      std::cerr << "fedmeta forgetting: missing prior checkpoint (set prior_checkpoint)\n";
      return 1;
    }
    validate_config(cfg);
    if (cfg.dataset != "synthetic-classes") {
      throw std::invalid_argument("forgetting runs on dataset = synthetic-classes");
    }
    if (cfg.num_classes % 2 != 0 || cfg.num_classes < 4) {
      throw std::invalid_argument("forgetting needs an even class count of at least 4");
    }
    echo_config(cfg);

    const Checkpoint prior_ck = load_checkpoint(cfg.prior_checkpoint);
    const Dataset full = load_dataset(cfg);
    const int half = cfg.num_classes / 2;
    const Dataset prior_data = filter_classes(full, 0, half);
    const Dataset new_data = filter_classes(full, half, cfg.num_classes);
    const TaskLoss prior_loss = classification_loss(cfg, full.feature_dim(), half);
    const TaskLoss new_loss = classification_loss(cfg, full.feature_dim(), half);
    if (prior_ck.theta.size() != parameter_dim(prior_loss)) {
      throw std::runtime_error("prior checkpoint dimension mismatch");
    }

    std::ostringstream out;
    out << "phase,task,loss,grad_norm,accuracy\n";
    auto emit = [&out](const std::string& phase, const std::string& task,
                       const ForgettingResult& r) {
      out << phase << ',' << task << ',' << format_double(r.loss) << ','
          << format_double(r.grad_norm) << ',' << format_double(r.accuracy) << '\n';
    };
    emit("prior", "prior", forgetting_eval(prior_ck.theta, prior_loss, prior_data));

    PartitionSpec spec;
    spec.num_nodes = cfg.num_nodes;
    spec.classes_per_node = cfg.classes_per_node;
    spec.size_low = cfg.size_low;
    spec.size_high = cfg.size_high;
    spec.source_fraction = cfg.source_fraction;
    spec.split_fraction = cfg.split_fraction;
    spec.seed = cfg.seed;

    for (Scalar lambda : cfg.forgetting_lambdas) {
      PartitionResult parts = partition(new_data, spec);
      for (NodeState& node : parts.sources) node.loss = new_loss;
      for (NodeState& node : parts.targets) node.loss = new_loss;

      PlatformState platform;
      platform.theta = ParamVector::Zero(parameter_dim(new_loss));
      platform.reg = make_squared_euclidean(platform.theta, lambda);

      ExperimentPlan plan = plan_from_config(cfg);
      plan.lambda = lambda;
      plan.prior_checkpoint = cfg.prior_checkpoint;  // start at and anchor to the prior

      run_experiment(plan, parts.sources, parts.targets, platform);
      const std::string phase = "lambda=" + format_double(lambda);
      emit(phase, "prior", forgetting_eval(platform.theta, prior_loss, prior_data));
      emit(phase, "new", forgetting_eval(platform.theta, new_loss, new_data));
    }
    write_text(fs::path(cfg.output_dir) / "forgetting.csv", out.str());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fedmeta forgetting: " << e.what() << "\n";
    return 1;
  }
}

int cmd_diagnose(const RunConfig& cfg, const std::string& checkpoint_path) {
  try {
    Experiment ex = build_experiment(cfg);
    echo_config(cfg);
    if (!checkpoint_path.empty()) {
      apply_checkpoint(load_checkpoint(checkpoint_path), ex.nodes, ex.platform);
    } else {
      // Diagnose the round-zero plan: the weights and penalties training
      // would use.
      Scalar total = 0.0;
      for (const NodeState& node : ex.nodes) total += node.support.size() + node.query.size();
      for (NodeState& node : ex.nodes) {
        node.rho = cfg.rho;
        node.weight = ex.plan.weight_mode == WeightMode::kUniform
                          ? 1.0 / static_cast<Scalar>(ex.nodes.size())
                          : (node.support.size() + node.query.size()) / total;
      }
    }

    const int probes = 64;
    const Scalar radius = 2.0;
    RngStream diag_rng = RngStream(cfg.seed).split("diagnose");

    std::vector<ConstantsEstimate> constants;
    std::vector<Scalar> nus, rhos, weights;
    for (const NodeState& node : ex.nodes) {
      RngStream node_rng = diag_rng.split(static_cast<std::uint64_t>(node.id));
      const ConstantsEstimate est =
          estimate_constants(node.loss, node.support, probes, radius, node_rng);
      constants.push_back(est);
      nus.push_back(nu_constant(est.mu, est.beta, est.zeta, cfg.alpha));
      rhos.push_back(node.rho);
      weights.push_back(node.weight);
    }
    const DeltaSchedule schedule{cfg.delta_slope, cfg.delta_offset};
    const Assumption5Report report =
        assumption5_check(rhos, nus, weights, cfg.lambda, ex.platform.reg.mu_r,
                          static_cast<int>(ex.nodes.size()), schedule);

    std::ostringstream csv;
    csv << "node_id,mu,beta,zeta,constants_mode,nu,local_descent_margin,"
           "global_descent_margin,dual_control_margin,holds\n";
    std::cout << "smoothness constants (" << probes << " probes, radius "
              << format_double(radius) << "):\n";
    for (std::size_t i = 0; i < ex.nodes.size(); ++i) {
      const ConstantsEstimate& est = constants[i];
      const auto& verdict = report.nodes[i];
      const char* mode = est.analytic ? "analytic" : "estimated";
      std::cout << "  node " << ex.nodes[i].id << ": mu=" << format_double(est.mu)
                << " beta=" << format_double(est.beta) << " zeta=" << format_double(est.zeta)
                << " (" << mode << "), nu=" << format_double(nus[i]) << "\n";
      csv << ex.nodes[i].id << ',' << format_double(est.mu) << ',' << format_double(est.beta)
          << ',' << format_double(est.zeta) << ',' << mode << ',' << format_double(nus[i])
          << ',' << format_double(verdict.local_descent_margin) << ','
          << format_double(verdict.global_descent_margin) << ','
          << format_double(verdict.dual_control_margin) << ','
          << (verdict.all() ? "true" : "false") << '\n';
    }

    std::cout << "penalty conditions (lambda=" << format_double(cfg.lambda) << "):\n";
    for (std::size_t i = 0; i < ex.nodes.size(); ++i) {
      const auto& v = report.nodes[i];
      std::cout << "  node " << ex.nodes[i].id << ": local-descent margin "
                << format_double(v.local_descent_margin) << (v.local_descent ? " ok" : " FAIL")
                << ", global-descent margin " << format_double(v.global_descent_margin)
                << (v.global_descent ? " ok" : " FAIL") << ", dual-control margin "
                << format_double(v.dual_control_margin) << (v.dual_control ? " ok" : " FAIL")
                << "\n";
    }
    std::cout << "all penalty conditions hold: " << (report.all_hold ? "yes" : "no") << "\n";
    std::cout << "delta schedule 1/(" << format_double(cfg.delta_slope) << "*t+"
              << format_double(cfg.delta_offset) << "): "
              << (report.delta_summable
                      ? "finite sum"
                      : "diverging sum, so the dual-error control leans on its decay alone")
              << "\n";
    if (ex.platform.round > 0) {
      std::cout << "checkpoint state: round " << ex.platform.round << ", objective "
                << format_double(objective_value(ex.platform.theta, ex.nodes, ex.platform,
                                                 cfg.alpha))
                << ", stationarity gap "
                << format_double(fosp_gap(ex.platform.theta, ex.nodes, ex.platform, cfg.alpha))
                << "\n";
    }
    write_text(fs::path(cfg.output_dir) / "diagnostics.csv", csv.str());

    if (!ex.targets.empty()) {
      RngStream sim_rng = diag_rng.split("similarity");
      const SimilarityEstimate sim =
          estimate_similarity(ex.nodes, ex.targets.front(), probes, radius, sim_rng);
      std::ostringstream sim_csv;
      sim_csv << "node_id,psi_g,psi_h\n";
      std::cout << "similarity to target " << ex.targets.front().id << " (probe maxima):\n";
      for (std::size_t i = 0; i < sim.node_ids.size(); ++i) {
        std::cout << "  node " << sim.node_ids[i] << ": gradient "
                  << format_double(sim.psi_g[i]) << ", curvature "
                  << format_double(sim.psi_h[i]) << "\n";
        sim_csv << sim.node_ids[i] << ',' << format_double(sim.psi_g[i]) << ','
                << format_double(sim.psi_h[i]) << '\n';
      }
      write_text(fs::path(cfg.output_dir) / "similarity.csv", sim_csv.str());
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fedmeta diagnose: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fedmeta
