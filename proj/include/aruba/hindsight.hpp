// Best-in-hindsight action for a completed task.
//
// Minimizes sum_i l_i(theta) + lambda * Breg(theta||phi_ref) over the domain
// with lambda = 1e-8, so among near-minimizers the one closest to the
// reference point in the geometry's divergence is returned.  All-quadratic
// tasks under euclidean tie-break reduce to a projected weighted mean; every
// other case runs projected gradient descent with backtracking.
#pragma once

#include "aruba/domain.hpp"
#include "aruba/geometry.hpp"
#include "aruba/losses.hpp"

#include <cmath>
#include <functional>
#include <optional>

namespace aruba {

inline constexpr double kHindsightTieBreak = 1e-8;
inline constexpr double kHindsightResidualTol = 1e-10;
inline constexpr int kHindsightIterCap = 100000;

namespace detail {

// Breg(x||y) extended continuously to zero coordinates (entropy limit), so
// line searches can evaluate the tie-break term at simplex faces.
inline double bregman_extended(Geometry geom, const Vec& x, const Vec& y) {
  if (geom == Geometry::euclidean) return 0.5 * (x - y).squaredNorm();
  double acc = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    if (y[j] <= 0.0) throw BoundaryError("bregman: reference has a zero coordinate");
    if (x[j] > 0.0) acc += x[j] * std::log(x[j] / y[j]) - x[j] + y[j];
    else acc += y[j];
  }
  return acc;
}

struct PgdResult {
  Vec x;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Projected gradient descent in two phases.  Armijo backtracking globalizes
// until the unit-probe fixed-point gap ||x - P(x - grad(x))|| is small; a
// fixed-step polish then contracts to the target residual without consulting
// function values, whose differences fall below double resolution long before
// the iterate stops moving.
inline PgdResult pgd_minimize(const Domain& domain, const Vec& x0,
                              const std::function<double(const Vec&)>& value,
                              const std::function<Vec(const Vec&)>& grad,
                              double tol = kHindsightResidualTol,
                              int iter_cap = kHindsightIterCap) {
  PgdResult res;
  Vec x = project(domain, Geometry::euclidean, x0);
  double fx = value(x);
  double step = 1.0;
  auto residual_at = [&](const Vec& p, const Vec& gp) {
    return (p - project(domain, Geometry::euclidean, p - gp)).norm();
  };
  Vec gx = grad(x);
  const double coarse_tol = std::max(tol, 1e-6);
  int it = 0;
  for (; it < iter_cap; ++it) {
    if (residual_at(x, gx) <= coarse_tol) break;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      Vec cand = project(domain, Geometry::euclidean, x - step * gx);
      Vec diff = cand - x;
      double fc = value(cand);
      if (fc <= fx + gx.dot(diff) + diff.squaredNorm() / (2.0 * step) + 1e-18) {
        x = cand;
        fx = fc;
        gx = grad(x);
        step *= 1.6;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // decreases no longer measurable in double
  }
  double r = residual_at(x, gx);
  step = std::max(step, 1e-6);
  for (; it < iter_cap && r > tol; ++it) {
    Vec cand = project(domain, Geometry::euclidean, x - step * gx);
    Vec gc = grad(cand);
    double rc = residual_at(cand, gc);
    if (rc < r * 0.9999) {  // strict progress, else the step is at or past
      x = cand;             // the oscillation boundary for the local curvature
      gx = gc;
      r = rc;
    } else {
      step *= 0.5;
      if (step < 1e-18) break;
    }
  }
  res.x = x;
  res.residual = r;
  res.iterations = it;
  res.converged = r <= tol;
  return res;
}

}  // namespace detail

// Exact minimizer of the tie-broken objective for all-quadratic tasks under
// euclidean tie-break: the objective is an isotropic quadratic, so the
// constrained minimizer is the euclidean projection of its center.
inline Vec hindsight_quadratic_closed_form(const Task& task, const Domain& domain,
                                           const Vec& phi_ref, double lambda) {
  double wsum = lambda;
  Vec num = lambda * phi_ref;
  for (const auto& l : task.losses) {
    const auto& q = std::get<QuadraticLoss>(l.family());
    wsum += q.weight;
    num += q.weight * q.target;
  }
  return project(domain, Geometry::euclidean, num / wsum);
}

inline Vec hindsight_optimum(const Task& task, Geometry geom, const Domain& domain,
                             std::optional<Vec> anchor = {}) {
  require(task.m() > 0, "hindsight_optimum: empty task");
  require(task.dim() == domain.dim, "hindsight_optimum: dimension mismatch");
  const Vec phi_ref = anchor.value_or(domain_origin(domain));
  const double lambda = kHindsightTieBreak;

  if (task.all_quadratic() && geom == Geometry::euclidean) {
    return hindsight_quadratic_closed_form(task, domain, phi_ref, lambda);
  }

  auto value = [&](const Vec& x) {
    double f = lambda * detail::bregman_extended(geom, x, phi_ref);
    for (const auto& l : task.losses) f += l.value(x);
    return f;
  };
  auto grad = [&](const Vec& x) {
    Vec g = lambda * bregman_grad(geom, x, phi_ref);
    for (const auto& l : task.losses) g += l.subgradient(x);
    return g;
  };

  // Warm start from the quadratic part's mean when available.
  Vec x0 = phi_ref;
  if (task.all_quadratic()) {
    x0 = hindsight_quadratic_closed_form(task, domain, phi_ref, lambda);
  }
  auto res = detail::pgd_minimize(domain, x0, value, grad);
  if (!res.converged) {
    throw ConvergenceError("hindsight_optimum: projected gradient descent did not reach tolerance",
                           res.residual);
  }
  return res.x;
}

}  // namespace aruba
