#pragma once

// Shared helpers for the test suites: reference implementations written as
// plain scalar loops, finite-difference oracles, and error metrics. These are
// deliberately independent of the library internals they check.

#include "fedmeta/numkit.hpp"

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace testsup {

using fedmeta::ParamVector;
using fedmeta::Scalar;

// |a - b| / max(floor, |a|, |b|). With floor = 1 this behaves like absolute
// error near zero and relative error for large magnitudes.
inline Scalar rel_err(Scalar a, Scalar b, Scalar floor = 1.0) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

inline Scalar max_rel_err(const ParamVector& a, const ParamVector& b, Scalar floor = 1.0) {
  Scalar worst = 0.0;
  for (int j = 0; j < a.size(); ++j) {
    worst = std::max(worst, rel_err(a[j], b[j], floor));
  }
  return worst;
}

inline Scalar loop_l2(const ParamVector& v) {
  Scalar s = 0.0;
  for (int j = 0; j < v.size(); ++j) s += v[j] * v[j];
  return std::sqrt(s);
}

inline ParamVector loop_combine(const std::vector<std::pair<Scalar, ParamVector>>& terms) {
  ParamVector out = ParamVector::Zero(terms.front().second.size());
  for (const auto& [c, v] : terms) {
    for (int j = 0; j < v.size(); ++j) out[j] += c * v[j];
  }
  return out;
}

// Central-difference gradient of a scalar function.
inline ParamVector fd_gradient(const std::function<Scalar(const ParamVector&)>& f,
                               const ParamVector& x, Scalar h = 1e-6) {
  ParamVector g(x.size());
  for (int j = 0; j < x.size(); ++j) {
    ParamVector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    g[j] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

// Central-difference directional derivative of a vector function, used as a
// Hessian-vector oracle when the vector function is a gradient.
inline ParamVector fd_jvp(const std::function<ParamVector(const ParamVector&)>& g,
                          const ParamVector& x, const ParamVector& v, Scalar h = 1e-6) {
  return (g(x + h * v) - g(x - h * v)) / (2.0 * h);
}

inline fedmeta::Matrix random_points(fedmeta::RngStream& rng, int rows, int cols,
                                     Scalar scale = 1.0) {
  fedmeta::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.next_gaussian();
  }
  return m;
}

inline Eigen::VectorXi random_labels(fedmeta::RngStream& rng, int rows, int classes) {
  Eigen::VectorXi y(rows);
  for (int i = 0; i < rows; ++i) y[i] = static_cast<int>(rng.next_int(0, classes - 1));
  return y;
}

inline fedmeta::Matrix random_spd(fedmeta::RngStream& rng, int n) {
  fedmeta::Matrix b = random_points(rng, n, n);
  return b * b.transpose() + 0.5 * fedmeta::Matrix::Identity(n, n);
}

// Positive entries bounded away from zero, for curvature diagonals.
inline ParamVector random_positive(fedmeta::RngStream& rng, int n, Scalar lo = 0.5,
                                   Scalar hi = 2.0) {
  ParamVector v(n);
  for (int j = 0; j < n; ++j) v[j] = lo + (hi - lo) * rng.next_double();
  return v;
}

}  // namespace testsup
