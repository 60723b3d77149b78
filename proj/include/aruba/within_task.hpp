// Within-task online learners.
//
// The core iterate is lazy linearized mirror descent: the i-th play minimizes
// Breg(theta||phi) + eta * <sum of past subgradients, theta> over the domain,
// which for euclidean geometry is a projected offset step and for entropy on
// the simplex a multiplicative-weights update.  An FTRL variant substitutes
// the full past losses; the two coincide on linear losses.
//
// Scaling comes in three shapes: a scalar rate eta, a per-coordinate rate
// vector, or a full SPD matrix H (play = phi - H * gradient_sum under the
// ||.||_{H^{-1}} norm).  Weighted projections are only exact on separable
// domains, so diagonal/matrix scales require box or unconstrained domains.
#pragma once

#include "aruba/domain.hpp"
#include "aruba/geometry.hpp"
#include "aruba/hindsight.hpp"
#include "aruba/losses.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

namespace aruba {

struct ScalarScale {
  double eta = 0.0;
};
struct DiagScale {
  Vec eta;
};
struct MatrixScale {
  Mat H;
};
using Scale = std::variant<ScalarScale, DiagScale, MatrixScale>;

enum class WithinMode { omd_linearized, ftrl_full };

struct WithinTaskConfig {
  Geometry geometry = Geometry::euclidean;
  Domain domain;
  Vec phi;
  Scale scale{ScalarScale{0.1}};
  WithinMode mode = WithinMode::omd_linearized;
};

namespace detail {

inline bool is_separable(const Domain& d) {
  return d.kind == Domain::Kind::box || d.kind == Domain::Kind::unconstrained;
}

// Exact minimizer of 0.5*(x-y)' W (x-y) over a box, W SPD, by cyclic
// coordinate descent; each 1-D subproblem is solved exactly, so the sweep is
// a monotone contraction to the unique optimum.
inline Vec box_qp_project(const Vec& y, const Mat& W, const Vec& lo, const Vec& hi) {
  const int n = static_cast<int>(y.size());
  Vec x(n);
  for (int j = 0; j < n; ++j) x[j] = std::clamp(y[j], lo[j], hi[j]);
  Vec r = W * (x - y);
  for (int sweep = 0; sweep < 20000; ++sweep) {
    double max_move = 0.0;
    for (int j = 0; j < n; ++j) {
      double target = std::clamp(x[j] - r[j] / W(j, j), lo[j], hi[j]);
      double delta = target - x[j];
      if (delta != 0.0) {
        x[j] = target;
        r += delta * W.col(j);
        max_move = std::max(max_move, std::abs(delta));
      }
    }
    if (max_move <= 1e-14 * std::max(1.0, x.lpNorm<Eigen::Infinity>())) return x;
  }
  throw ConvergenceError("box_qp_project: coordinate descent did not converge", 0.0);
}

}  // namespace detail

inline void validate(const WithinTaskConfig& cfg) {
  require(cfg.domain.dim > 0, "within_task: domain has no dimension");
  require(cfg.phi.size() == cfg.domain.dim, "within_task: phi dimension mismatch");
  require(contains(cfg.domain, cfg.phi, 1e-9), "within_task: phi outside the domain");
  require(cfg.mode == WithinMode::omd_linearized || std::holds_alternative<ScalarScale>(cfg.scale),
          "within_task: the full-loss mode supports scalar scale only");
  if (cfg.geometry == Geometry::negative_entropy) {
    require(cfg.domain.kind == Domain::Kind::simplex,
            "within_task: negative_entropy needs a simplex domain");
    require(std::holds_alternative<ScalarScale>(cfg.scale),
            "within_task: negative_entropy supports scalar scale only");
    for (int j = 0; j < cfg.phi.size(); ++j) {
      require(cfg.phi[j] > 0, "within_task: entropy initialization must be strictly positive");
    }
  }
  if (const auto* s = std::get_if<ScalarScale>(&cfg.scale)) {
    require(s->eta > 0 && std::isfinite(s->eta), "within_task: eta must be positive");
  } else if (const auto* d = std::get_if<DiagScale>(&cfg.scale)) {
    require(d->eta.size() == cfg.domain.dim, "within_task: rate vector dimension mismatch");
    for (int j = 0; j < d->eta.size(); ++j) {
      require(d->eta[j] > 0 && std::isfinite(d->eta[j]), "within_task: rates must be positive");
    }
    require(detail::is_separable(cfg.domain),
            "within_task: per-coordinate scale needs a box or unconstrained domain");
  } else {
    const auto& H = std::get<MatrixScale>(cfg.scale).H;
    require(H.rows() == cfg.domain.dim && H.cols() == cfg.domain.dim,
            "within_task: H dimension mismatch");
    require((H - H.transpose()).lpNorm<Eigen::Infinity>() <=
                1e-10 * std::max(1.0, H.lpNorm<Eigen::Infinity>()),
            "within_task: H must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    require(es.eigenvalues().minCoeff() > 0, "within_task: H must be positive definite");
    require(detail::is_separable(cfg.domain),
            "within_task: matrix scale needs a box or unconstrained domain");
  }
}

// Play given the sum of past subgradients (lazy linearized step).
inline Vec omd_iterate(const WithinTaskConfig& cfg, const Vec& gradient_sum) {
  require(gradient_sum.size() == cfg.domain.dim, "omd_iterate: gradient dimension mismatch");
  require_finite(gradient_sum, "omd_iterate: gradient_sum");

  if (const auto* s = std::get_if<ScalarScale>(&cfg.scale)) {
    if (cfg.geometry == Geometry::negative_entropy) {
      // argmin over the simplex of KL(theta||phi) + eta<g, theta>:
      // theta_j proportional to phi_j * exp(-eta g_j).
      Vec logw = cfg.phi.array().log().matrix() - s->eta * gradient_sum;
      double mx = logw.maxCoeff();
      Vec w = (logw.array() - mx).exp().matrix();
      return w / w.sum();
    }
    return project(cfg.domain, cfg.geometry, cfg.phi - s->eta * gradient_sum);
  }
  if (const auto* d = std::get_if<DiagScale>(&cfg.scale)) {
    Vec y = cfg.phi - d->eta.cwiseProduct(gradient_sum);
    Vec weight = d->eta.cwiseInverse();
    return project(cfg.domain, cfg.geometry, y, weight);
  }
  const auto& H = std::get<MatrixScale>(cfg.scale).H;
  Vec y = cfg.phi - H * gradient_sum;
  if (cfg.domain.kind == Domain::Kind::unconstrained) return y;
  return detail::box_qp_project(y, H.inverse(), cfg.domain.lo, cfg.domain.hi);
}

namespace detail {

// FTRL play against the full loss prefix: argmin Breg(theta||phi) + eta*sum.
inline Vec ftrl_iterate(const WithinTaskConfig& cfg, const std::vector<LossOracle>& prefix) {
  const auto& s = std::get<ScalarScale>(cfg.scale);
  if (prefix.empty()) return cfg.phi;
  bool all_linear = true, all_quadratic = true;
  for (const auto& l : prefix) {
    all_linear = all_linear && std::holds_alternative<LinearLoss>(l.family());
    all_quadratic = all_quadratic && l.is_quadratic();
  }
  if (all_linear) {
    Vec gsum = Vec::Zero(cfg.domain.dim);
    for (const auto& l : prefix) gsum += std::get<LinearLoss>(l.family()).g;
    return omd_iterate(cfg, gsum);
  }
  if (all_quadratic && cfg.geometry == Geometry::euclidean) {
    // Isotropic quadratic objective: projected closed form.
    double denom = 1.0;
    Vec num = cfg.phi;
    for (const auto& l : prefix) {
      const auto& q = std::get<QuadraticLoss>(l.family());
      denom += s.eta * q.weight;
      num += s.eta * q.weight * q.target;
    }
    return project(cfg.domain, cfg.geometry, num / denom);
  }
  auto value = [&](const Vec& x) {
    double f = bregman_extended(cfg.geometry, x, cfg.phi);
    for (const auto& l : prefix) f += s.eta * l.value(x);
    return f;
  };
  auto grad = [&](const Vec& x) {
    Vec g = bregman_grad(cfg.geometry, x, cfg.phi);
    for (const auto& l : prefix) g += s.eta * l.subgradient(x);
    return g;
  };
  auto res = pgd_minimize(cfg.domain, cfg.phi, value, grad, 1e-11);
  if (!res.converged) {
    throw ConvergenceError("ftrl_iterate: inner solve did not converge", res.residual);
  }
  return res.x;
}

}  // namespace detail

// Everything observed while running one task, plus the hindsight quantities
// needed by the meta level.
struct TaskTrace {
  std::vector<Vec> iterates;  // plays theta_1..theta_m
  std::vector<Vec> grads;     // subgradients at the plays
  Vec loss_values;            // l_i(theta_i)
  Vec theta_star;             // tie-broken hindsight optimum
  Vec avg_iterate;            // (1/m) sum of plays
  Vec final_play;             // play the learner would make at round m+1
  Vec grad_sq_coord;          // sum_i grad_i^2, elementwise
  Mat grad_outer;             // sum_i grad_i grad_i' (matrix scale only)
  double grad_sq_norm = 0.0;  // sum_i ||grad_i||^2
  double loss_sum = 0.0;
  double regret = 0.0;          // R_t
  double breg_init = 0.0;       // Breg(theta_star || phi)
  double u_declared = 0.0;      // bound using the task's declared G_t
  double u_empirical = 0.0;     // bound using the observed gradient RMS
  double lip_declared = 0.0;    // G_t
  double lip_empirical = 0.0;   // sqrt(mean ||grad||^2)
  int m = 0;
};

// Value of the regret upper bound for the scalar path:
// Breg(theta*||phi)/eta + eta * G^2 * m.
inline double regret_upper_bound(double breg_init, double eta, double lipschitz, int m) {
  require(eta > 0, "regret_upper_bound: eta must be positive");
  require(breg_init >= 0 && lipschitz >= 0 && m >= 0, "regret_upper_bound: negative input");
  return breg_init / eta + eta * lipschitz * lipschitz * static_cast<double>(m);
}

// Per-coordinate path: 0.5*||theta*-phi||^2_{H^-1} + sum_i ||grad_i||^2_H
// with H = diag(eta).
inline double regret_upper_bound(const Vec& theta_star, const Vec& phi, const Vec& eta,
                                 const Vec& grad_sq_coord) {
  require(theta_star.size() == phi.size() && eta.size() == phi.size() &&
              grad_sq_coord.size() == phi.size(),
          "regret_upper_bound: dimension mismatch");
  double acc = 0.0;
  for (int j = 0; j < eta.size(); ++j) {
    require(eta[j] > 0, "regret_upper_bound: rates must be positive");
    double d = theta_star[j] - phi[j];
    acc += 0.5 * d * d / eta[j] + eta[j] * grad_sq_coord[j];
  }
  return acc;
}

// Full-matrix path: 0.5*||theta*-phi||^2_{H^-1} + sum_i grad_i' H grad_i.
inline double regret_upper_bound(const Vec& theta_star, const Vec& phi, const Mat& H,
                                 const Mat& grad_outer) {
  Vec d = theta_star - phi;
  double quad = 0.5 * d.dot(H.ldlt().solve(d));
  return quad + (H * grad_outer).trace();
}

inline TaskTrace run_task(const WithinTaskConfig& cfg, const Task& task) {
  validate(cfg);
  require(task.dim() == cfg.domain.dim, "run_task: task dimension mismatch");
  const int m = task.m();
  const bool matrix_scale = std::holds_alternative<MatrixScale>(cfg.scale);

  TaskTrace tr;
  tr.m = m;
  tr.iterates.reserve(m);
  tr.grads.reserve(m);
  tr.loss_values = Vec::Zero(m);
  tr.grad_sq_coord = Vec::Zero(cfg.domain.dim);
  if (matrix_scale) tr.grad_outer = Mat::Zero(cfg.domain.dim, cfg.domain.dim);

  Vec gsum = Vec::Zero(cfg.domain.dim);
  std::vector<LossOracle> prefix;
  prefix.reserve(m);
  Vec avg = Vec::Zero(cfg.domain.dim);
  for (int i = 0; i < m; ++i) {
    Vec theta = cfg.mode == WithinMode::omd_linearized ? omd_iterate(cfg, gsum)
                                                       : detail::ftrl_iterate(cfg, prefix);
    Vec g = task.losses[i].subgradient(theta);
    tr.loss_values[i] = task.losses[i].value(theta);
    tr.loss_sum += tr.loss_values[i];
    tr.grad_sq_norm += g.squaredNorm();
    tr.grad_sq_coord += g.cwiseProduct(g);
    if (matrix_scale) tr.grad_outer += g * g.transpose();
    gsum += g;
    avg += theta;
    tr.iterates.push_back(std::move(theta));
    tr.grads.push_back(std::move(g));
    if (cfg.mode == WithinMode::ftrl_full) prefix.push_back(task.losses[i]);
  }
  tr.avg_iterate = avg / std::max(m, 1);
  tr.final_play = cfg.mode == WithinMode::omd_linearized ? omd_iterate(cfg, gsum)
                                                         : detail::ftrl_iterate(cfg, prefix);

  tr.theta_star = hindsight_optimum(task, cfg.geometry, cfg.domain);
  double star_sum = 0.0;
  for (const auto& l : task.losses) star_sum += l.value(tr.theta_star);
  tr.regret = tr.loss_sum - star_sum;
  // The comparator may sit on the boundary (zero simplex coordinates), where
  // the divergence extends continuously even though its gradient blows up.
  tr.breg_init = detail::bregman_extended(cfg.geometry, tr.theta_star, cfg.phi);
  tr.lip_declared = task.lipschitz_rms;
  tr.lip_empirical = std::sqrt(tr.grad_sq_norm / std::max(m, 1));
  if (const auto* s = std::get_if<ScalarScale>(&cfg.scale)) {
    tr.u_declared = regret_upper_bound(tr.breg_init, s->eta, tr.lip_declared, m);
    tr.u_empirical = regret_upper_bound(tr.breg_init, s->eta, tr.lip_empirical, m);
  } else if (const auto* d = std::get_if<DiagScale>(&cfg.scale)) {
    tr.u_declared = regret_upper_bound(tr.theta_star, cfg.phi, d->eta, tr.grad_sq_coord);
    tr.u_empirical = tr.u_declared;  // data-dependent bound, no declared constant
  } else {
    const auto& H = std::get<MatrixScale>(cfg.scale).H;
    tr.u_declared = regret_upper_bound(tr.theta_star, cfg.phi, H, tr.grad_outer);
    tr.u_empirical = tr.u_declared;
  }
  return tr;
}

}  // namespace aruba
