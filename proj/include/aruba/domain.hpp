// Feasible sets and exact projections.
//
// Each domain carries a diameter bound D with D^2 >= max Bregman divergence
// between the points the environments actually place in it; scale learners use
// [eps, sqrt(D^2 + eps^2)] as their search interval.
#pragma once

#include "aruba/geometry.hpp"
#include "aruba/rng.hpp"
#include "aruba/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace aruba {

struct Domain {
  enum class Kind { unconstrained, euclidean_ball, box, simplex };

  Kind kind = Kind::unconstrained;
  int dim = 0;
  Vec center;        // euclidean_ball
  double radius = 0; // euclidean_ball
  Vec lo, hi;        // box
  double diameter_bound = 0;

  static Domain unconstrained(int dim, double diameter_bound) {
    require(dim > 0, "domain: dim must be positive");
    require(diameter_bound > 0, "domain: unconstrained needs an explicit diameter bound");
    Domain d;
    d.kind = Kind::unconstrained;
    d.dim = dim;
    d.diameter_bound = diameter_bound;
    return d;
  }

  static Domain ball(Vec center, double radius, std::optional<double> diameter = {}) {
    require(radius > 0, "domain: ball radius must be positive");
    require_finite(center, "domain: ball center");
    Domain d;
    d.kind = Kind::euclidean_ball;
    d.dim = static_cast<int>(center.size());
    d.center = std::move(center);
    d.radius = radius;
    // max Breg = 0.5 * (2r)^2 = 2 r^2.
    d.diameter_bound = diameter.value_or(radius * std::sqrt(2.0));
    return d;
  }

  static Domain box(Vec lo, Vec hi, std::optional<double> diameter = {}) {
    require(lo.size() == hi.size(), "domain: box bounds dimension mismatch");
    require_finite(lo, "domain: box lo");
    require_finite(hi, "domain: box hi");
    for (int j = 0; j < lo.size(); ++j) {
      require(lo[j] < hi[j], "domain: box needs lo < hi in every coordinate");
    }
    Domain d;
    d.kind = Kind::box;
    d.dim = static_cast<int>(lo.size());
    d.lo = std::move(lo);
    d.hi = std::move(hi);
    d.diameter_bound = diameter.value_or((d.hi - d.lo).norm() / std::sqrt(2.0));
    return d;
  }

  static Domain simplex(int dim, std::optional<double> diameter = {}) {
    require(dim >= 2, "domain: simplex needs dim >= 2");
    Domain d;
    d.kind = Kind::simplex;
    d.dim = dim;
    // Covers KL between members kept a factor >= 1e-3/dim away from the faces.
    d.diameter_bound = diameter.value_or(std::sqrt(2.0 * std::log(1000.0 * dim)));
    return d;
  }
};

inline const char* to_string(Domain::Kind k) {
  switch (k) {
    case Domain::Kind::unconstrained: return "unconstrained";
    case Domain::Kind::euclidean_ball: return "euclidean_ball";
    case Domain::Kind::box: return "box";
    default: return "simplex";
  }
}

// Default Bregman reference point: center for balls/boxes, uniform for the
// simplex, the origin otherwise.
inline Vec domain_origin(const Domain& d) {
  switch (d.kind) {
    case Domain::Kind::euclidean_ball: return d.center;
    case Domain::Kind::box: return 0.5 * (d.lo + d.hi);
    case Domain::Kind::simplex: return Vec::Constant(d.dim, 1.0 / d.dim);
    default: return Vec::Zero(d.dim);
  }
}

inline bool contains(const Domain& d, const Vec& x, double tol = 1e-9) {
  require(x.size() == d.dim, "contains: dimension mismatch");
  switch (d.kind) {
    case Domain::Kind::unconstrained:
      return true;
    case Domain::Kind::euclidean_ball:
      return (x - d.center).norm() <= d.radius + tol;
    case Domain::Kind::box:
      for (int j = 0; j < d.dim; ++j) {
        if (x[j] < d.lo[j] - tol || x[j] > d.hi[j] + tol) return false;
      }
      return true;
    default: {
      double s = 0.0;
      for (int j = 0; j < d.dim; ++j) {
        if (x[j] < -tol) return false;
        s += x[j];
      }
      return std::abs(s - 1.0) <= tol;
    }
  }
}

namespace detail {
// Euclidean projection onto the probability simplex (sort-and-threshold).
inline Vec project_simplex_euclidean(const Vec& y) {
  const int n = static_cast<int>(y.size());
  std::vector<double> u(y.data(), y.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  for (int j = 0; j < n; ++j) {
    cum += u[j];
    double t = (cum - 1.0) / (j + 1);
    if (u[j] - t > 0) tau = t;
  }
  Vec x(n);
  for (int j = 0; j < n; ++j) x[j] = std::max(y[j] - tau, 0.0);
  return x;
}
}  // namespace detail

// Projection onto the domain.
//
// geometry selects the divergence being minimized at the boundary; weight, if
// given, is the diagonal of H^{-1} for projections under ||.||_{H^{-1}} and is
// only exact on separable domains (boxes), so other weighted cases are
// rejected rather than silently approximated.
inline Vec project(const Domain& d, Geometry geom, const Vec& x,
                   const std::optional<Vec>& weight = {}) {
  require(x.size() == d.dim, "project: dimension mismatch");
  require_finite(x, "project: x");
  if (weight) {
    require(weight->size() == d.dim, "project: weight dimension mismatch");
    for (int j = 0; j < d.dim; ++j) require((*weight)[j] > 0, "project: weight must be positive");
  }
  switch (d.kind) {
    case Domain::Kind::unconstrained:
      return x;
    case Domain::Kind::euclidean_ball: {
      if (weight) throw UnsupportedError("project: weighted projection onto a ball has no exact form");
      Vec r = x - d.center;
      double n = r.norm();
      if (n <= d.radius) return x;
      return d.center + r * (d.radius / n);
    }
    case Domain::Kind::box: {
      // Separable, so any diagonal weight yields plain clipping.
      Vec out(d.dim);
      for (int j = 0; j < d.dim; ++j) out[j] = std::clamp(x[j], d.lo[j], d.hi[j]);
      return out;
    }
    default: {
      if (weight) throw UnsupportedError("project: weighted projection onto the simplex is not supported");
      if (geom == Geometry::negative_entropy) {
        // Bregman (KL) projection of a positive vector is normalization.
        double s = 0.0;
        for (int j = 0; j < d.dim; ++j) {
          if (x[j] <= 0.0) throw BoundaryError("project: entropy projection needs positive coordinates");
          s += x[j];
        }
        return x / s;
      }
      return detail::project_simplex_euclidean(x);
    }
  }
}

// Uniform-ish sample used by tests and environment construction.
inline Vec sample_point(const Domain& d, Rng& rng, double interior_margin = 0.0) {
  switch (d.kind) {
    case Domain::Kind::unconstrained:
      return rng.normal_vec(d.dim);
    case Domain::Kind::euclidean_ball: {
      Vec u = rng.on_sphere(d.dim);
      double r = d.radius * (1.0 - interior_margin) * std::pow(rng.uniform01(), 1.0 / d.dim);
      return d.center + r * u;
    }
    case Domain::Kind::box: {
      Vec x(d.dim);
      for (int j = 0; j < d.dim; ++j) {
        double w = (d.hi[j] - d.lo[j]) * 0.5 * interior_margin;
        x[j] = rng.uniform(d.lo[j] + w, d.hi[j] - w);
      }
      return x;
    }
    default: {
      // Exponential spacings give a uniform Dirichlet(1) draw; the floor keeps
      // samples inside the region the diameter bound is stated for.
      Vec x(d.dim);
      double s = 0.0;
      for (int j = 0; j < d.dim; ++j) {
        x[j] = -std::log(std::max(rng.uniform01(), 1e-16));
        s += x[j];
      }
      x /= s;
      double floor = std::max(interior_margin, 1e-3 / d.dim);
      x = (x.array() + floor).matrix();
      return x / x.sum();
    }
  }
}

}  // namespace aruba
