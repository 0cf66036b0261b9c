#pragma once

#include "fedmeta/config.hpp"
#include "fedmeta/data_io.hpp"
#include "fedmeta/federation.hpp"

namespace fedmeta {

// Everything a command needs, assembled deterministically from one config:
// source and target nodes with tasks attached, the platform state at round
// zero, and the training plan.
struct Experiment {
  std::vector<NodeState> nodes;
  std::vector<NodeState> targets;
  PlatformState platform;
  ExperimentPlan plan;
};

Experiment build_experiment(const RunConfig& cfg);

// Commands return process exit codes: 0 on success, 1 with a message on
// stderr otherwise. Each writes the resolved config to
// <output_dir>/effective.cfg before any other work.
//
// train: <output_dir>/trace.csv (one row per round, flushed as rounds finish,
// so aborted runs keep their partial trace) and <output_dir>/checkpoint.bin.
int cmd_train(const RunConfig& cfg);

// evaluate: <output_dir>/adaptation.csv with one row per target node per
// configured adaptation step count, scored from the checkpoint's parameters.
int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path);

// forgetting: <output_dir>/forgetting.csv. Splits the configured classes in
// half, treats the prior checkpoint (trained on the lower half) as both
// starting point and regularizer prior, trains the upper half once per
// configured lambda, and scores both halves each time.
int cmd_forgetting(const RunConfig& cfg);

// diagnose: <output_dir>/diagnostics.csv (and similarity.csv when targets
// exist) plus a readable report on stdout: per-node smoothness constants,
// the penalty-condition margins, and the delta-schedule summability note.
// With a checkpoint, the diagnosis reflects that training state.
int cmd_diagnose(const RunConfig& cfg, const std::string& checkpoint_path);

}  // namespace fedmeta
