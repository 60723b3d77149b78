// Mirror-map geometries and their Bregman divergences.
//
// euclidean:         R(x) = 0.5 * ||x||_2^2,  Breg(x||y) = 0.5 * ||x - y||_2^2
// negative_entropy:  R(x) = sum_j x_j log x_j, Breg(x||y) = sum_j [x_j log(x_j/y_j) - x_j + y_j]
//
// Both regularizers are 1-strongly convex in the geometry's norm (l2 resp. l1
// on the simplex), so Breg(x||y) >= 0.5 * ||x - y||^2 in that norm.
#pragma once

#include "aruba/types.hpp"

#include <cmath>

namespace aruba {

enum class Geometry { euclidean, negative_entropy };

inline const char* to_string(Geometry g) {
  return g == Geometry::euclidean ? "euclidean" : "negative_entropy";
}

inline double bregman(Geometry geom, const Vec& x, const Vec& y) {
  require(x.size() == y.size(), "bregman: dimension mismatch");
  require_finite(x, "bregman: x");
  require_finite(y, "bregman: y");
  if (geom == Geometry::euclidean) {
    return 0.5 * (x - y).squaredNorm();
  }
  double acc = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    if (x[j] <= 0.0 || y[j] <= 0.0) {
      throw BoundaryError("bregman: negative_entropy requires strictly positive coordinates");
    }
    acc += x[j] * std::log(x[j] / y[j]) - x[j] + y[j];
  }
  return acc;
}

// Gradient of Breg(.||y) at x; infinite near the entropy boundary.
inline Vec bregman_grad(Geometry geom, const Vec& x, const Vec& y) {
  require(x.size() == y.size(), "bregman_grad: dimension mismatch");
  if (geom == Geometry::euclidean) return x - y;
  Vec g(x.size());
  for (int j = 0; j < x.size(); ++j) {
    if (y[j] <= 0.0) throw BoundaryError("bregman_grad: reference has a zero coordinate");
    // Clamp keeps the tie-break term usable arbitrarily close to the boundary.
    g[j] = std::log(std::max(x[j], 1e-300) / y[j]);
  }
  return g;
}

// Norm in which the geometry's regularizer is 1-strongly convex.
inline double geometry_norm(Geometry geom, const Vec& v) {
  return geom == Geometry::euclidean ? v.norm() : v.lpNorm<1>();
}

}  // namespace aruba
