#pragma once

#include "fedmeta/diagnostics.hpp"

#include <optional>
#include <string>

namespace fedmeta {

// Node-building recipe: how many nodes, how many classes each sees, the
// per-node sample-count range [size_low, size_high], and how nodes and
// samples are split into roles and support/query sets.
struct PartitionSpec {
  int num_nodes = 0;
  int classes_per_node = 2;
  int size_low = 20;
  int size_high = 40;
  Scalar source_fraction = 0.8;  // share of nodes that train
  Scalar split_fraction = 0.5;   // share of each node's data used as support
  std::uint64_t seed = 0;
};

struct PartitionResult {
  std::vector<NodeState> sources;  // skeletons: id + data, no loss attached
  std::vector<NodeState> targets;
};

// Deterministically assembles nodes from a labeled dataset. Each node draws
// classes_per_node distinct classes and a uniform size in [size_low,
// size_high], then samples that many points from its classes without local
// repeats (nodes may share samples). Support gets the extra sample on odd
// splits. A seeded shuffle assigns the first ceil(source_fraction * I) nodes
// as sources. Classes too small for a node's quota are redrawn up to 10
// times, then the partition fails.
PartitionResult partition(const Dataset& dataset, const PartitionSpec& spec);

// Resumable training state: the global and prior parameter vectors plus each
// node's iterates and scalars, but not tasks or data (those are rebuilt from
// the run configuration). Serialized round trips are bit-exact.
struct Checkpoint {
  int round = 0;
  ParamVector theta;
  ParamVector prior;
  MirrorMapKind reg_kind = MirrorMapKind::kSquaredEuclidean;
  ParamVector reg_weights;  // diagonal maps only
  Scalar lambda = 0.0;

  struct NodeEntry {
    int id = 0;
    ParamVector theta_local;
    ParamVector dual;
    Scalar rho = 0.0;
    Scalar weight = 0.0;
  };
  std::vector<NodeEntry> nodes;  // ascending id
};

Checkpoint make_checkpoint(const std::vector<NodeState>& nodes, const PlatformState& platform);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Restores a checkpoint into live state. Node ids and parameter dimensions
// must match what the checkpoint recorded.
void apply_checkpoint(const Checkpoint& ck, std::vector<NodeState>& nodes,
                      PlatformState& platform);

enum class Algorithm { kAdmmFedMeta, kExactAdmm, kFedAvg, kPerFedAvg };
enum class WeightMode { kDataProportional, kUniform };

const char* algorithm_name(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);
const char* weight_mode_name(WeightMode mode);
WeightMode parse_weight_mode(const std::string& name);

// A previously learned task to score the final parameters against.
struct PriorTask {
  TaskLoss loss;
  Dataset data;
};

struct ExperimentPlan {
  Algorithm algorithm = Algorithm::kAdmmFedMeta;
  int rounds = 0;
  Scalar alpha = 0.01;
  Scalar lambda = 0.0;
  Scalar rho = 1.0;
  DeltaSchedule delta;
  WeightMode weight_mode = WeightMode::kDataProportional;
  std::vector<int> adapt_steps = {1};  // evaluation step counts per target
  std::string prior_checkpoint;        // empty: start from the platform's theta
  Scalar beta_outer = 0.01;            // per-fedavg outer stepsize
  int local_steps = 1;                 // fedavg local epoch count
  Scalar inner_tol = 1e-10;            // exact-admm subproblem tolerance
  int inner_iters = 100000;
  int threads = 1;
  bool record_fosp = true;
  bool record_wallclock = false;
  std::optional<PriorTask> prior_task;  // scored at the final parameters
};

struct TargetMetrics {
  int target_id = 0;
  int steps = 0;
  Scalar pre_loss = 0.0;
  Scalar post_loss = 0.0;
  Scalar pre_acc = 0.0;
  Scalar post_acc = 0.0;
};

struct RunArtifacts {
  std::vector<RoundRecord> trace;
  ParamVector theta_final;
  std::vector<TargetMetrics> adaptation;
  std::optional<ForgettingResult> prior_forgetting;
};

// Trains per the plan (mutating nodes and platform), then scores each target
// before and after adaptation at every configured step count. Weights, rho,
// and the delta schedule are stamped onto the nodes from the plan. When the
// plan names a prior checkpoint, its parameters become both the starting
// point and the regularizer's prior. Training errors propagate; rows already
// emitted through hooks are the caller's to keep.
RunArtifacts run_experiment(const ExperimentPlan& plan, std::vector<NodeState>& nodes,
                            std::vector<NodeState>& targets, PlatformState& platform,
                            const RunHooks& hooks = {});

}  // namespace fedmeta
