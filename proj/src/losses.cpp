#include "fedmeta/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedmeta {

namespace {

using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajorMatrix>;
using ConstVecMap = Eigen::Map<const ParamVector>;

Scalar elu(Scalar x) { return x > 0 ? x : std::expm1(x); }
Scalar elu_deriv(Scalar x) { return x > 0 ? 1.0 : std::exp(x); }

void require_features(const TaskLoss& loss, const Dataset& data, const char* op) {
  if (data.size() == 0) {
    throw std::invalid_argument(std::string(op) + ": empty dataset");
  }
  int want = 0;
  switch (loss.family) {
    case LossFamily::kQuadratic:
    case LossFamily::kCubicQuadratic:
      want = static_cast<int>(loss.curvature_diag.size());
      if (loss.curvature_dense.size() > 0) want = static_cast<int>(loss.curvature_dense.rows());
      break;
    case LossFamily::kLogisticBinary:
    case LossFamily::kSoftmaxLinear:
      want = loss.input_dim;
      break;
    case LossFamily::kMlp:
      want = loss.mlp.input_dim;
      break;
  }
  if (data.feature_dim() != want) {
    throw std::invalid_argument(std::string(op) + ": feature dimension " +
                                std::to_string(data.feature_dim()) + ", expected " +
                                std::to_string(want));
  }
  if (is_classification(loss)) {
    if (data.labels.size() != data.size()) {
      throw std::invalid_argument(std::string(op) + ": missing labels");
    }
    const int c = loss.family == LossFamily::kLogisticBinary
                      ? 2
                      : (loss.family == LossFamily::kSoftmaxLinear ? loss.num_classes
                                                                   : loss.mlp.num_classes);
    for (int i = 0; i < data.size(); ++i) {
      if (data.labels[i] < 0 || data.labels[i] >= c) {
        throw std::invalid_argument(std::string(op) + ": label out of range");
      }
    }
  }
}

void require_theta(const TaskLoss& loss, const ParamVector& theta, const char* op) {
  if (theta.size() != parameter_dim(loss)) {
    throw std::invalid_argument(std::string(op) + ": parameter length " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(parameter_dim(loss)));
  }
  ensure_finite(theta, op);
}

// A * v for either curvature representation.
ParamVector apply_curvature(const TaskLoss& loss, const ParamVector& v) {
  if (loss.curvature_dense.size() > 0) return loss.curvature_dense * v;
  return loss.curvature_diag.cwiseProduct(v);
}

// Row-stochastic softmax probabilities for a matrix of logits.
Matrix softmax_rows(const Matrix& logits) {
  Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Matrix expo = shifted.array().exp().matrix();
  return expo.array().colwise() / expo.rowwise().sum().array();
}

Scalar cross_entropy_mean(const Matrix& logits, const Eigen::VectorXi& labels) {
  const auto rowmax = logits.rowwise().maxCoeff();
  Eigen::VectorXd lse =
      rowmax.array() + (logits.colwise() - rowmax).array().exp().rowwise().sum().log();
  Scalar total = 0.0;
  for (int i = 0; i < logits.rows(); ++i) {
    total += lse[i] - logits(i, labels[i]);
  }
  return total / static_cast<Scalar>(logits.rows());
}

struct MlpLayout {
  std::vector<int> dims;  // input, hidden..., classes
  std::vector<int> w_off, b_off;
  int total = 0;
};

MlpLayout mlp_layout(const MlpShape& shape) {
  MlpLayout lay;
  lay.dims.push_back(shape.input_dim);
  for (int h : shape.hidden) lay.dims.push_back(h);
  lay.dims.push_back(shape.num_classes);
  int off = 0;
  for (std::size_t l = 0; l + 1 < lay.dims.size(); ++l) {
    lay.w_off.push_back(off);
    off += lay.dims[l + 1] * lay.dims[l];
    lay.b_off.push_back(off);
    off += lay.dims[l + 1];
  }
  lay.total = off;
  return lay;
}

// Forward pass over the whole batch; activations[l] is the input to layer l.
struct MlpForward {
  std::vector<Matrix> activations;  // size layers + 1, last entry is logits
  std::vector<Matrix> pre;          // pre-activation of each hidden layer
};

MlpForward mlp_forward(const MlpLayout& lay, const ParamVector& theta, const Matrix& x) {
  MlpForward fwd;
  fwd.activations.push_back(x);
  const std::size_t layers = lay.dims.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    ConstMatMap w(theta.data() + lay.w_off[l], lay.dims[l + 1], lay.dims[l]);
    ConstVecMap b(theta.data() + lay.b_off[l], lay.dims[l + 1]);
    Matrix z = (fwd.activations.back() * w.transpose()).rowwise() + b.transpose();
    if (l + 1 < layers) {
      fwd.pre.push_back(z);
      fwd.activations.push_back(z.unaryExpr([](Scalar v) { return elu(v); }));
    } else {
      fwd.activations.push_back(std::move(z));  // logits stay linear
    }
  }
  return fwd;
}

ParamVector mlp_gradient(const MlpLayout& lay, const ParamVector& theta, const Dataset& data) {
  const MlpForward fwd = mlp_forward(lay, theta, data.features);
  const std::size_t layers = lay.dims.size() - 1;
  const int batch = data.size();

  Matrix delta = softmax_rows(fwd.activations.back());
  for (int i = 0; i < batch; ++i) delta(i, data.labels[i]) -= 1.0;
  delta /= static_cast<Scalar>(batch);

  ParamVector grad = ParamVector::Zero(lay.total);
  for (std::size_t l = layers; l-- > 0;) {
    RowMajorMatrix gw = delta.transpose() * fwd.activations[l];
    Eigen::Map<RowMajorMatrix>(grad.data() + lay.w_off[l], gw.rows(), gw.cols()) = gw;
    Eigen::Map<ParamVector>(grad.data() + lay.b_off[l], lay.dims[l + 1]) =
        delta.colwise().sum().transpose();
    if (l > 0) {
      ConstMatMap w(theta.data() + lay.w_off[l], lay.dims[l + 1], lay.dims[l]);
      delta = (delta * w).cwiseProduct(
          fwd.pre[l - 1].unaryExpr([](Scalar v) { return elu_deriv(v); }));
    }
  }
  return grad;
}

}  // namespace

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.feature_dim() != b.feature_dim()) {
    throw std::invalid_argument("concat: feature dimension mismatch");
  }
  Dataset out;
  out.features.resize(a.size() + b.size(), a.feature_dim());
  out.features << a.features, b.features;
  if (a.labels.size() > 0 || b.labels.size() > 0) {
    if (a.labels.size() != a.size() || b.labels.size() != b.size()) {
      throw std::invalid_argument("concat: one side is missing labels");
    }
    out.labels.resize(a.size() + b.size());
    out.labels << a.labels, b.labels;
  }
  return out;
}

Dataset make_center_dataset(const ParamVector& center, int count) {
  if (count <= 0) {
    throw std::invalid_argument("make_center_dataset: count must be positive");
  }
  Dataset d;
  d.features = center.transpose().replicate(count, 1);
  return d;
}

const char* family_name(LossFamily family) {
  switch (family) {
    case LossFamily::kQuadratic: return "quadratic";
    case LossFamily::kCubicQuadratic: return "cubic-quadratic";
    case LossFamily::kLogisticBinary: return "logistic";
    case LossFamily::kSoftmaxLinear: return "softmax";
    case LossFamily::kMlp: return "mlp";
  }
  return "unknown";
}

TaskLoss make_quadratic(ParamVector center, ParamVector curvature_diag) {
  if (center.size() != curvature_diag.size()) {
    throw std::invalid_argument("make_quadratic: center and curvature sizes differ");
  }
  if ((curvature_diag.array() <= 0).any()) {
    throw std::invalid_argument("make_quadratic: curvature must be positive");
  }
  TaskLoss loss;
  loss.family = LossFamily::kQuadratic;
  loss.center = std::move(center);
  loss.curvature_diag = std::move(curvature_diag);
  return loss;
}

TaskLoss make_quadratic_dense(ParamVector center, Matrix curvature) {
  if (curvature.rows() != curvature.cols() || curvature.rows() != center.size()) {
    throw std::invalid_argument("make_quadratic_dense: curvature shape mismatch");
  }
  const Scalar scale = std::max(1.0, curvature.cwiseAbs().maxCoeff());
  if ((curvature - curvature.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("make_quadratic_dense: curvature not symmetric");
  }
  if (Eigen::LLT<Matrix>(curvature).info() != Eigen::Success) {
    throw std::invalid_argument("make_quadratic_dense: curvature not positive definite");
  }
  TaskLoss loss;
  loss.family = LossFamily::kQuadratic;
  loss.center = std::move(center);
  loss.curvature_dense = std::move(curvature);
  return loss;
}

TaskLoss make_cubic_quadratic(ParamVector curvature_diag, Scalar kappa) {
  if ((curvature_diag.array() <= 0).any()) {
    throw std::invalid_argument("make_cubic_quadratic: curvature must be positive");
  }
  if (kappa < 0) {
    throw std::invalid_argument("make_cubic_quadratic: kappa must be nonnegative");
  }
  TaskLoss loss;
  loss.family = LossFamily::kCubicQuadratic;
  loss.center = ParamVector::Zero(curvature_diag.size());
  loss.curvature_diag = std::move(curvature_diag);
  loss.cubic_coeff = kappa;
  return loss;
}

TaskLoss make_logistic(int input_dim) {
  if (input_dim < 1) throw std::invalid_argument("make_logistic: input_dim must be positive");
  TaskLoss loss;
  loss.family = LossFamily::kLogisticBinary;
  loss.input_dim = input_dim;
  loss.num_classes = 2;
  return loss;
}

TaskLoss make_softmax(int input_dim, int num_classes) {
  if (input_dim < 1) throw std::invalid_argument("make_softmax: input_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("make_softmax: need at least two classes");
  TaskLoss loss;
  loss.family = LossFamily::kSoftmaxLinear;
  loss.input_dim = input_dim;
  loss.num_classes = num_classes;
  return loss;
}

TaskLoss make_mlp(MlpShape shape) {
  if (shape.input_dim < 1) throw std::invalid_argument("make_mlp: input_dim must be positive");
  if (shape.num_classes < 2) throw std::invalid_argument("make_mlp: need at least two classes");
  if (shape.hidden.empty() || shape.hidden.size() > 2) {
    throw std::invalid_argument("make_mlp: one or two hidden layers required");
  }
  for (int h : shape.hidden) {
    if (h < 1 || h > 64) throw std::invalid_argument("make_mlp: hidden width out of range");
  }
  TaskLoss loss;
  loss.family = LossFamily::kMlp;
  loss.mlp = std::move(shape);
  return loss;
}

int parameter_dim(const TaskLoss& loss) {
  switch (loss.family) {
    case LossFamily::kQuadratic:
    case LossFamily::kCubicQuadratic:
      return loss.curvature_dense.size() > 0 ? static_cast<int>(loss.curvature_dense.rows())
                                             : static_cast<int>(loss.curvature_diag.size());
    case LossFamily::kLogisticBinary:
      return loss.input_dim;
    case LossFamily::kSoftmaxLinear:
      return loss.input_dim * loss.num_classes;
    case LossFamily::kMlp:
      return mlp_layout(loss.mlp).total;
  }
  return 0;
}

bool is_classification(const TaskLoss& loss) {
  return loss.family == LossFamily::kLogisticBinary ||
         loss.family == LossFamily::kSoftmaxLinear || loss.family == LossFamily::kMlp;
}

bool has_exact_hessian(const TaskLoss& loss) { return loss.family != LossFamily::kMlp; }

Scalar loss_value(const TaskLoss& loss, const ParamVector& theta, const Dataset& data) {
  require_theta(loss, theta, "loss_value");
  require_features(loss, data, "loss_value");
  const int batch = data.size();
  Scalar value = 0.0;
  switch (loss.family) {
    case LossFamily::kQuadratic:
    case LossFamily::kCubicQuadratic: {
      Matrix diff = (-data.features).rowwise() + theta.transpose();  // theta - x per row
      for (int i = 0; i < batch; ++i) {
        const ParamVector d = diff.row(i).transpose();
        value += 0.5 * d.dot(apply_curvature(loss, d));
      }
      value /= static_cast<Scalar>(batch);
      if (loss.family == LossFamily::kCubicQuadratic) {
        value += loss.cubic_coeff / 6.0 * theta.array().cube().sum();
      }
      break;
    }
    case LossFamily::kLogisticBinary: {
      const Eigen::VectorXd z = data.features * theta;
      for (int i = 0; i < batch; ++i) {
        const Scalar m = (2.0 * data.labels[i] - 1.0) * z[i];
        value += std::log1p(std::exp(-std::abs(m))) + std::max(0.0, -m);
      }
      value /= static_cast<Scalar>(batch);
      break;
    }
    case LossFamily::kSoftmaxLinear: {
      ConstMatMap w(theta.data(), loss.num_classes, loss.input_dim);
      value = cross_entropy_mean(data.features * w.transpose(), data.labels);
      break;
    }
    case LossFamily::kMlp: {
      const MlpLayout lay = mlp_layout(loss.mlp);
      value = cross_entropy_mean(mlp_forward(lay, theta, data.features).activations.back(),
                                 data.labels);
      break;
    }
  }
  ensure_finite(value, "loss_value");
  return value;
}

ParamVector loss_gradient(const TaskLoss& loss, const ParamVector& theta, const Dataset& data) {
  require_theta(loss, theta, "loss_gradient");
  require_features(loss, data, "loss_gradient");
  const int batch = data.size();
  ParamVector grad;
  switch (loss.family) {
    case LossFamily::kQuadratic:
    case LossFamily::kCubicQuadratic: {
      const ParamVector mean_diff =
          theta - data.features.colwise().mean().transpose();
      grad = apply_curvature(loss, mean_diff);
      if (loss.family == LossFamily::kCubicQuadratic) {
        grad += 0.5 * loss.cubic_coeff * theta.cwiseProduct(theta);
      }
      break;
    }
    case LossFamily::kLogisticBinary: {
      const Eigen::VectorXd z = data.features * theta;
      Eigen::VectorXd coeff(batch);
      for (int i = 0; i < batch; ++i) {
        const Scalar s = 2.0 * data.labels[i] - 1.0;
        coeff[i] = -s / (1.0 + std::exp(s * z[i]));  // -s * sigmoid(-s z)
      }
      grad = data.features.transpose() * coeff / static_cast<Scalar>(batch);
      break;
    }
    case LossFamily::kSoftmaxLinear: {
      ConstMatMap w(theta.data(), loss.num_classes, loss.input_dim);
      Matrix p = softmax_rows(data.features * w.transpose());
      for (int i = 0; i < batch; ++i) p(i, data.labels[i]) -= 1.0;
      RowMajorMatrix gw = p.transpose() * data.features / static_cast<Scalar>(batch);
      grad = ConstVecMap(gw.data(), gw.size());
      break;
    }
    case LossFamily::kMlp:
      grad = mlp_gradient(mlp_layout(loss.mlp), theta, data);
      break;
  }
  ensure_finite(grad, "loss_gradient");
  return grad;
}

ParamVector hessian_vector_exact(const TaskLoss& loss, const ParamVector& theta,
                                 const ParamVector& v, const Dataset& data) {
  require_theta(loss, theta, "hessian_vector_exact");
  require_features(loss, data, "hessian_vector_exact");
  if (v.size() != theta.size()) {
    throw std::invalid_argument("hessian_vector_exact: direction length mismatch");
  }
  const int batch = data.size();
  ParamVector out;
  switch (loss.family) {
    case LossFamily::kQuadratic:
      out = apply_curvature(loss, v);
      break;
    case LossFamily::kCubicQuadratic:
      out = apply_curvature(loss, v) + loss.cubic_coeff * theta.cwiseProduct(v);
      break;
    case LossFamily::kLogisticBinary: {
      const Eigen::VectorXd z = data.features * theta;
      const Eigen::VectorXd xv = data.features * v;
      Eigen::VectorXd coeff(batch);
      for (int i = 0; i < batch; ++i) {
        const Scalar sig = 1.0 / (1.0 + std::exp(-z[i]));
        coeff[i] = sig * (1.0 - sig) * xv[i];
      }
      out = data.features.transpose() * coeff / static_cast<Scalar>(batch);
      break;
    }
    case LossFamily::kSoftmaxLinear: {
      ConstMatMap w(theta.data(), loss.num_classes, loss.input_dim);
      ConstMatMap vw(v.data(), loss.num_classes, loss.input_dim);
      const Matrix p = softmax_rows(data.features * w.transpose());
      const Matrix a = data.features * vw.transpose();  // batch x classes
      Matrix coeff = p.cwiseProduct(a);
      const Eigen::VectorXd dot = coeff.rowwise().sum();
      coeff -= (p.array().colwise() * dot.array()).matrix();
      RowMajorMatrix hw = coeff.transpose() * data.features / static_cast<Scalar>(batch);
      out = ConstVecMap(hw.data(), hw.size());
      break;
    }
    case LossFamily::kMlp:
      throw std::invalid_argument("hessian_vector_exact: unsupported for the mlp family");
  }
  ensure_finite(out, "hessian_vector_exact");
  return out;
}

Scalar predict_accuracy(const TaskLoss& loss, const ParamVector& theta, const Dataset& data) {
  if (!is_classification(loss)) {
    throw std::invalid_argument("predict_accuracy: not a classification family");
  }
  require_theta(loss, theta, "predict_accuracy");
  require_features(loss, data, "predict_accuracy");
  const int batch = data.size();
  int hits = 0;
  switch (loss.family) {
    case LossFamily::kLogisticBinary: {
      const Eigen::VectorXd z = data.features * theta;
      for (int i = 0; i < batch; ++i) {
        hits += (z[i] > 0 ? 1 : 0) == data.labels[i];
      }
      break;
    }
    case LossFamily::kSoftmaxLinear:
    case LossFamily::kMlp: {
      Matrix logits;
      if (loss.family == LossFamily::kSoftmaxLinear) {
        ConstMatMap w(theta.data(), loss.num_classes, loss.input_dim);
        logits = data.features * w.transpose();
      } else {
        logits = mlp_forward(mlp_layout(loss.mlp), theta, data.features).activations.back();
      }
      for (int i = 0; i < batch; ++i) {
        Eigen::Index best;
        logits.row(i).maxCoeff(&best);
        hits += static_cast<int>(best) == data.labels[i];
      }
      break;
    }
    default:
      break;
  }
  return static_cast<Scalar>(hits) / static_cast<Scalar>(batch);
}

ParamVector init_parameters(const TaskLoss& loss, RngStream& rng) {
  const int n = parameter_dim(loss);
  if (loss.family == LossFamily::kMlp) {
    return draw_gaussian(rng, n, 0.0, 0.1);
  }
  return ParamVector::Zero(n);
}

}  // namespace fedmeta
