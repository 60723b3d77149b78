#pragma once
// Deterministic adaptive Simpson quadrature on a fixed interval.  Purely
// functional, no randomness, so repeated calls reproduce bit-identical
// results.

#include <cmath>
#include <functional>

#include "aruba/types.hpp"

namespace aruba {

namespace detail {

inline double simpson_rule(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

}  // namespace detail

// Integrates f over [a, b] by recursive interval halving with Richardson
// correction.  Each panel is accepted once its refinement error is small
// relative to its own mass, so sharply concentrated integrands are resolved
// even when a coarse global estimate would miss them; for integrands of one
// sign the panel-relative control bounds the total relative error.  Depth is
// capped at 20 halvings (2^20 leaf panels); a panel that still disagrees at
// the cap raises a numeric error rather than returning a degraded value.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double rel_tol = 1e-10) {
  require(std::isfinite(a) && std::isfinite(b) && a <= b, "integrate: bad interval");
  require(rel_tol > 0.0, "integrate: tolerance must be positive");
  if (a == b) return 0.0;

  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double s,
          int depth) -> double {
    double mid = 0.5 * (lo + hi);
    double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    double flm = f(lm), frm = f(rm);
    require(std::isfinite(flm) && std::isfinite(frm), "integrate: integrand not finite");
    double sl = detail::simpson_rule(lo, mid, flo, flm, fmid);
    double sr = detail::simpson_rule(mid, hi, fmid, frm, fhi);
    double s2 = sl + sr;
    double err = std::abs(s2 - s);
    if (err <= 15.0 * rel_tol * std::abs(s2) || err < 1e-300) return s2 + (s2 - s) / 15.0;
    if (depth == 0) throw NumericError("integrate: subdivision cap exceeded");
    return rec(lo, mid, flo, flm, fmid, sl, depth - 1) +
           rec(mid, hi, fmid, frm, fhi, sr, depth - 1);
  };

  double m0 = 0.5 * (a + b);
  double fa = f(a), fm = f(m0), fb = f(b);
  require(std::isfinite(fa) && std::isfinite(fm) && std::isfinite(fb),
          "integrate: integrand not finite");
  return rec(a, b, fa, fm, fb, detail::simpson_rule(a, b, fa, fm, fb), 20);
}

}  // namespace aruba
