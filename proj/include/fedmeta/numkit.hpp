#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedmeta {

using Scalar = double;
using ParamVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Thrown when a computation produces NaN/Inf or violates a numeric precondition.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void ensure_finite(Scalar x, std::string_view what);
void ensure_finite(const ParamVector& v, std::string_view what);

// Sum of coeff * vec accumulated strictly in list order, so results are
// bit-reproducible for a given term order. Throws on an empty list, on
// mismatched dimensions, and on a non-finite result.
ParamVector linear_combine(const std::vector<std::pair<Scalar, ParamVector>>& terms);

// Euclidean norm; rejects non-finite input.
Scalar l2_norm(const ParamVector& v);

// Counter-based stream: the k-th output depends only on (key, k). split()
// derives an unrelated key, so sub-streams never share draws with the parent
// regardless of how many values either side has consumed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  RngStream split(std::string_view label) const;
  RngStream split(std::uint64_t index) const;

  std::uint64_t next_u64();
  double next_double();    // uniform in [0, 1)
  double next_gaussian();  // standard normal; always consumes two u64 draws

  // Uniform integer in [lo, hi] via rejection sampling; requires lo <= hi.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi);

 private:
  RngStream(std::uint64_t key, std::uint64_t counter);

  std::uint64_t key_;
  std::uint64_t counter_;
};

// dim iid draws from N(mean, stddev^2); requires dim >= 0 and stddev >= 0.
ParamVector draw_gaussian(RngStream& rng, int dim, Scalar mean, Scalar stddev);

}  // namespace fedmeta
