#pragma once

#include "fedmeta/numkit.hpp"

#include <string>
#include <vector>

namespace fedmeta {

// One run, fully described: dataset source, model, node-building recipe,
// training plan, and output location. Parsed from a flat key = value file
// ('#' starts a comment). Unknown or repeated keys are hard errors.
struct RunConfig {
  // run
  std::string dataset = "synthetic-quadratic";  // synthetic-quadratic | synthetic-cubic |
                                                // synthetic-classes | idx:<images>:<labels> |
                                                // csv:<path>
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;

  // model
  std::string model = "quadratic";  // quadratic | cubic | logistic | softmax | mlp
  int model_dim = 5;
  int num_classes = 2;
  std::vector<int> hidden;  // mlp layer sizes
  Scalar cubic_coeff = 1.0;
  Scalar curvature = 1.0;  // uniform diagonal curvature of synthetic bowls

  // synthetic data
  Scalar spread = 1.0;
  Scalar noise = 0.1;
  int samples_per_class = 50;
  int rows_per_set = 5;
  std::string class_filter;  // "lo:hi" keeps labels in [lo, hi), relabeled from 0

  // node building
  int num_nodes = 4;
  int classes_per_node = 2;
  int size_low = 20;
  int size_high = 40;
  Scalar source_fraction = 0.8;
  Scalar split_fraction = 0.5;

  // training plan
  std::string algorithm = "admm-fedmeta";
  int rounds = 100;
  Scalar alpha = 0.01;
  Scalar lambda = 0.0;
  Scalar rho = 1.0;
  Scalar delta_slope = 10.0;
  Scalar delta_offset = 100.0;
  std::string weight_mode = "data-proportional";
  std::vector<int> adapt_steps = {1};
  std::string prior_checkpoint;
  Scalar beta_outer = 0.01;
  int local_steps = 1;
  Scalar inner_tol = 1e-10;
  int inner_iters = 100000;
  bool record_fosp = true;
  bool record_wallclock = false;
  std::vector<Scalar> forgetting_lambdas = {0.0, 0.5};
};

// Parses and value-checks config text. Every key unknown to RunConfig, and
// every duplicate, fails before any other work.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Cross-field validation (dataset/model compatibility, ranges). parse_config
// calls this; it is exposed for configs built in code.
void validate_config(const RunConfig& cfg);

// Canonical echo with every default resolved; parsing it back reproduces the
// config exactly, and formatting that reproduces the same bytes.
std::string format_config(const RunConfig& cfg);

// Shortest decimal string that parses back to exactly the same double.
// Locale-independent; used for config echo and all CSV output.
std::string format_double(Scalar x);

}  // namespace fedmeta
