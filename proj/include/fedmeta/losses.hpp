#pragma once

#include "fedmeta/numkit.hpp"

#include <vector>

namespace fedmeta {

// Labeled sample set. Classification families read integer labels in
// [0, num_classes); the quadratic families ignore labels and treat each
// feature row as the target the parameters are pulled toward.
struct Dataset {
  Matrix features;         // rows are samples
  Eigen::VectorXi labels;  // empty or one label per row

  int size() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

Dataset concat(const Dataset& a, const Dataset& b);

// count identical rows equal to center, no labels. Handy for building
// quadratic tasks whose exact optimum is known.
Dataset make_center_dataset(const ParamVector& center, int count);

enum class LossFamily {
  kQuadratic,       // 0.5 (theta - x)' A (theta - x)
  kCubicQuadratic,  // quadratic plus (kappa/6) sum_j theta_j^3
  kLogisticBinary,
  kSoftmaxLinear,
  kMlp,
};

const char* family_name(LossFamily family);

struct MlpShape {
  int input_dim = 0;
  std::vector<int> hidden;  // at most two layers of at most 64 units
  int num_classes = 0;
};

// A task's loss function. Parameters are always carried as one flat vector;
// parameter_dim() gives its length for the family at hand.
struct TaskLoss {
  LossFamily family = LossFamily::kQuadratic;

  // quadratic / cubic-quadratic
  ParamVector curvature_diag;   // diagonal A when curvature_dense is empty
  Matrix curvature_dense;       // symmetric positive definite A, optional
  ParamVector center;           // nominal task center used by generators
  Scalar cubic_coeff = 0.0;     // kappa; also the third-derivative bound

  // classification
  int input_dim = 0;
  int num_classes = 0;
  MlpShape mlp;
};

TaskLoss make_quadratic(ParamVector center, ParamVector curvature_diag);
TaskLoss make_quadratic_dense(ParamVector center, Matrix curvature);
TaskLoss make_cubic_quadratic(ParamVector curvature_diag, Scalar kappa);
TaskLoss make_logistic(int input_dim);
TaskLoss make_softmax(int input_dim, int num_classes);
TaskLoss make_mlp(MlpShape shape);

int parameter_dim(const TaskLoss& loss);

// Mean per-sample loss / gradient over the dataset. Both reject empty data,
// dimension mismatches, and out-of-range labels.
Scalar loss_value(const TaskLoss& loss, const ParamVector& theta, const Dataset& data);
ParamVector loss_gradient(const TaskLoss& loss, const ParamVector& theta, const Dataset& data);

// Exact Hessian-vector product of the mean loss. Unsupported for the MLP
// family, which only exposes gradients.
ParamVector hessian_vector_exact(const TaskLoss& loss, const ParamVector& theta,
                                 const ParamVector& v, const Dataset& data);
bool has_exact_hessian(const TaskLoss& loss);

// Fraction of samples classified correctly; classification families only.
Scalar predict_accuracy(const TaskLoss& loss, const ParamVector& theta, const Dataset& data);
bool is_classification(const TaskLoss& loss);

// Zero for the convex families, N(0, 0.1^2) entries for the MLP.
ParamVector init_parameters(const TaskLoss& loss, RngStream& rng);

}  // namespace fedmeta
