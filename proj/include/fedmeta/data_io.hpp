#pragma once

#include "fedmeta/losses.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedmeta {

// Big-endian IDX pair: image file with magic 0x00000803 and dims
// [count, rows, cols], label file with magic 0x00000801 and [count]. Pixels
// land in [0, 1] as byte / 255. Counts must agree.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Comma-separated numeric rows, no header; the last column is an integer
// class label, the rest are features.
Dataset load_csv(const std::string& path);

enum class SyntheticKind { kQuadraticMixture, kCubicMixture, kGaussianClasses };

struct SyntheticParams {
  // mixtures
  int num_tasks = 4;
  int dim = 5;
  Scalar spread = 1.0;          // center scale; also the class-mean scale
  ParamVector curvature_diag;   // empty: identity curvature
  Scalar cubic_coeff = 1.0;
  int rows_per_set = 5;
  // gaussian classes
  int num_classes = 2;
  int samples_per_class = 50;
  Scalar noise = 0.1;           // within-class standard deviation
};

struct SyntheticTask {
  ParamVector center;
  TaskLoss loss;
  Dataset support;
  Dataset query;
};

struct SyntheticData {
  std::vector<SyntheticTask> tasks;  // mixture kinds
  Dataset samples;                   // gaussian classes, class-major rows
  Matrix class_means;                // one row per class
};

// Seed-deterministic test problems: per-task quadratic (or cubic-perturbed)
// bowls with Gaussian centers, or labeled Gaussian blobs for classification.
SyntheticData generate_synthetic(SyntheticKind kind, const SyntheticParams& params,
                                 std::uint64_t seed);

}  // namespace fedmeta
