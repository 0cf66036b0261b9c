#pragma once

#include "fedmeta/numkit.hpp"

namespace fedmeta {

enum class MirrorMapKind {
  kSquaredEuclidean,   // h(x) = |x|^2
  kDiagonalQuadratic,  // h(x) = sum_j a_j x_j^2 with a_j > 0
};

struct MirrorMap {
  MirrorMapKind kind = MirrorMapKind::kSquaredEuclidean;
  ParamVector weights;  // per-coordinate a_j, only for the diagonal kind
};

Scalar mirror_value(const MirrorMap& map, const ParamVector& x);
ParamVector mirror_gradient(const MirrorMap& map, const ParamVector& x);

// Bregman penalty D_h(x, prior) = h(x) - h(prior) - <grad h(prior), x - prior>
// toward a prior model, with its scale lambda carried alongside. For these
// quadratic maps D_h collapses to a weighted squared distance; mu_r is the
// largest curvature of D_h(., prior) and strong_convexity the smallest.
struct BregmanRegularizer {
  MirrorMap map;
  ParamVector prior;
  Scalar lambda = 0.0;
  Scalar mu_r = 2.0;
  Scalar strong_convexity = 2.0;
};

BregmanRegularizer make_squared_euclidean(ParamVector prior, Scalar lambda);
BregmanRegularizer make_diagonal_quadratic(ParamVector prior, ParamVector weights, Scalar lambda);

// D_h(x, prior) and its gradient in x. Callers apply the lambda factor.
Scalar bregman_value(const BregmanRegularizer& reg, const ParamVector& x);
ParamVector bregman_gradient(const BregmanRegularizer& reg, const ParamVector& x);

// Process-wide count of bregman_value/bregman_gradient calls. Lets tests pin
// down which code paths touch the regularizer (only the platform side should).
std::uint64_t bregman_eval_count();

}  // namespace fedmeta
