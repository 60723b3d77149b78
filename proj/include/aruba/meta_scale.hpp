#pragma once
// Learning the within-task step scale across tasks.  Scalar strategies keep
// a single v_t: a fixed constant, an epsilon-regularized running mean, or an
// exponentially weighted average computed by 1-D quadrature.  Vector and
// matrix variants accumulate squared distances and squared gradients and
// expose the per-coordinate ratio or the Riccati solution.

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "aruba/quadrature.hpp"
#include "aruba/types.hpp"

namespace aruba {

enum class ScalarScaleStrategy { fixed, eps_ftl, eps_ewoo };

inline const char* to_string(ScalarScaleStrategy s) {
  switch (s) {
    case ScalarScaleStrategy::fixed: return "fixed";
    case ScalarScaleStrategy::eps_ftl: return "eps_ftl";
    case ScalarScaleStrategy::eps_ewoo: return "eps_ewoo";
  }
  return "?";
}

// Horizon-tuned defaults for the regularizers.
inline double default_scalar_epsilon(int num_tasks) {
  require(num_tasks >= 1, "default_scalar_epsilon: need a positive horizon");
  return std::pow(static_cast<double>(num_tasks), -0.25);
}
inline double default_matrix_epsilon(int num_tasks) {
  require(num_tasks >= 1, "default_matrix_epsilon: need a positive horizon");
  return std::pow(static_cast<double>(num_tasks), -0.125);
}
inline double default_matrix_zeta(int steps_per_task, int num_tasks) {
  require(steps_per_task >= 1, "default_matrix_zeta: need positive task length");
  return std::sqrt(static_cast<double>(steps_per_task)) * default_matrix_epsilon(num_tasks);
}

// Scalar scale.  History enters only through two running sums, so both
// learned strategies are invariant to permutations of the observations:
//   sum_wb = sum_s sigma_s (B_s^2 + eps^2),   sum_w = sum_s sigma_s.
class ScalarScaleState {
 public:
  static ScalarScaleState fixed(double v) {
    require(v > 0.0 && std::isfinite(v), "ScalarScaleState: fixed v must be positive");
    ScalarScaleState s;
    s.strategy_ = ScalarScaleStrategy::fixed;
    s.v_fixed_ = v;
    return s;
  }

  static ScalarScaleState eps_ftl(double epsilon, double diameter) {
    require(epsilon >= 0.0 && std::isfinite(epsilon), "ScalarScaleState: epsilon must be >= 0");
    require(diameter > 0.0 && std::isfinite(diameter),
            "ScalarScaleState: diameter must be positive");
    ScalarScaleState s;
    s.strategy_ = ScalarScaleStrategy::eps_ftl;
    s.epsilon_ = epsilon;
    s.diameter_ = diameter;
    return s;
  }

  static ScalarScaleState eps_ewoo(double epsilon, double diameter, double lipschitz,
                                   int steps_per_task) {
    require(epsilon > 0.0 && std::isfinite(epsilon), "ScalarScaleState: epsilon must be > 0");
    require(diameter > 0.0 && std::isfinite(diameter),
            "ScalarScaleState: diameter must be positive");
    require(lipschitz > 0.0 && std::isfinite(lipschitz),
            "ScalarScaleState: lipschitz must be positive");
    require(steps_per_task >= 1, "ScalarScaleState: task length must be >= 1");
    ScalarScaleState s;
    s.strategy_ = ScalarScaleStrategy::eps_ewoo;
    s.epsilon_ = epsilon;
    s.diameter_ = diameter;
    double d2 = diameter * diameter;
    s.gamma_ = 2.0 / (diameter * lipschitz * std::sqrt(static_cast<double>(steps_per_task))) *
               std::min(epsilon * epsilon / d2, 1.0);
    return s;
  }

  ScalarScaleStrategy strategy() const { return strategy_; }
  double gamma() const { return gamma_; }
  int tasks_seen() const { return t_; }
  double interval_lo() const { return epsilon_; }
  double interval_hi() const {
    return std::sqrt(diameter_ * diameter_ + epsilon_ * epsilon_);
  }

  // Records one finished task: its initial squared divergence and weight.
  void observe(double breg_sq, double sigma) {
    require(breg_sq >= 0.0 && std::isfinite(breg_sq), "observe: divergence must be >= 0");
    require(sigma > 0.0 && std::isfinite(sigma), "observe: sigma must be positive");
    sum_wb_ += sigma * (breg_sq + epsilon_ * epsilon_);
    sum_w_ += sigma;
    ++t_;
  }

  double v() const {
    switch (strategy_) {
      case ScalarScaleStrategy::fixed:
        return v_fixed_;
      case ScalarScaleStrategy::eps_ftl:
        if (t_ == 0) return 0.5 * (interval_lo() + interval_hi());
        return std::sqrt(sum_wb_ / sum_w_);
      case ScalarScaleStrategy::eps_ewoo:
        return ewoo_v();
    }
    return v_fixed_;
  }

 private:
  ScalarScaleState() = default;

  // Posterior mean of v under the density exp(-gamma sum_s f_s(v)) on the
  // fixed interval, where sum_s f_s(v) collapses to sum_wb / v + sum_w * v.
  // The exponent is shifted by its interior minimum so exp stays in range.
  double ewoo_v() const {
    double lo = interval_lo(), hi = interval_hi();
    if (t_ == 0) return 0.5 * (lo + hi);
    auto h = [&](double v) { return gamma_ * (sum_wb_ / v + sum_w_ * v); };
    double v_hat = std::sqrt(sum_wb_ / sum_w_);
    double shift = h(std::clamp(v_hat, lo, hi));
    auto density = [&](double v) { return std::exp(shift - h(v)); };
    double mass = integrate(density, lo, hi);
    double moment = integrate([&](double v) { return v * density(v); }, lo, hi);
    require(mass > 0.0, "ewoo_v: degenerate density");
    return moment / mass;
  }

  ScalarScaleStrategy strategy_ = ScalarScaleStrategy::fixed;
  double v_fixed_ = 1.0;
  double epsilon_ = 0.0;
  double diameter_ = 1.0;
  double gamma_ = 0.0;
  double sum_wb_ = 0.0;
  double sum_w_ = 0.0;
  int t_ = 0;
};

// Per-coordinate accumulators: b tracks halved squared distances between the
// initialization and the task summary point, g tracks summed squared
// gradients, and each update adds a decaying regularizer eps^2 / (t+1)^p
// (resp. zeta^2 / (t+1)^p).  The step vector is sqrt(b / g) elementwise.
class DiagScaleState {
 public:
  DiagScaleState(int dim, double epsilon, double zeta, double p)
      : epsilon_(epsilon), zeta_(zeta), p_(p), t_(1) {
    require(dim >= 1, "DiagScaleState: dim must be >= 1");
    require(epsilon > 0.0 && std::isfinite(epsilon), "DiagScaleState: epsilon must be > 0");
    require(zeta > 0.0 && std::isfinite(zeta), "DiagScaleState: zeta must be > 0");
    require(p >= 0.0 && std::isfinite(p), "DiagScaleState: p must be >= 0");
    b_ = Vec::Constant(dim, epsilon * epsilon);
    g_ = Vec::Constant(dim, zeta * zeta);
  }

  const Vec& b() const { return b_; }
  const Vec& g() const { return g_; }
  int tasks_seen() const { return t_ - 1; }
  Vec eta() const { return (b_.cwiseQuotient(g_)).cwiseSqrt(); }

  // grad_sq is the coordinate-wise sum of squared gradients over the task.
  void accumulate(const Vec& phi, const Vec& theta_hat, const Vec& grad_sq) {
    require(phi.size() == b_.size() && theta_hat.size() == b_.size() &&
                grad_sq.size() == b_.size(),
            "DiagScaleState::accumulate: dimension mismatch");
    require(grad_sq.minCoeff() >= 0.0, "DiagScaleState::accumulate: negative squared gradient");
    require_finite(phi, "phi");
    require_finite(theta_hat, "theta_hat");
    require_finite(grad_sq, "grad_sq");
    double decay = std::pow(static_cast<double>(t_ + 1), -p_);
    b_ += epsilon_ * epsilon_ * decay * Vec::Ones(b_.size()) +
          0.5 * (phi - theta_hat).cwiseAbs2();
    g_ += zeta_ * zeta_ * decay * Vec::Ones(g_.size()) + grad_sq;
    ++t_;
  }

  // Same update fed with a precomputed squared-displacement statistic, for
  // callers that aggregate several learners into one task (disp_sq replaces
  // (phi - theta_hat)^2 coordinate-wise).
  void accumulate_displacement(const Vec& disp_sq, const Vec& grad_sq) {
    require(disp_sq.size() == b_.size() && grad_sq.size() == b_.size(),
            "DiagScaleState::accumulate_displacement: dimension mismatch");
    require(disp_sq.minCoeff() >= 0.0,
            "DiagScaleState::accumulate_displacement: negative squared displacement");
    require(grad_sq.minCoeff() >= 0.0,
            "DiagScaleState::accumulate_displacement: negative squared gradient");
    require_finite(disp_sq, "disp_sq");
    require_finite(grad_sq, "grad_sq");
    double decay = std::pow(static_cast<double>(t_ + 1), -p_);
    b_ += epsilon_ * epsilon_ * decay * Vec::Ones(b_.size()) + 0.5 * disp_sq;
    g_ += zeta_ * zeta_ * decay * Vec::Ones(g_.size()) + grad_sq;
    ++t_;
  }

 private:
  Vec b_, g_;
  double epsilon_, zeta_, p_;
  int t_;
};

// Scalar counterpart of DiagScaleState: b tracks half squared distances,
// g tracks summed squared gradient norms, eta = sqrt(b / g).
class IsotropicScaleState {
 public:
  IsotropicScaleState(double epsilon, double zeta, double p)
      : epsilon_(epsilon), zeta_(zeta), p_(p), t_(1) {
    require(epsilon > 0.0 && std::isfinite(epsilon), "IsotropicScaleState: epsilon must be > 0");
    require(zeta > 0.0 && std::isfinite(zeta), "IsotropicScaleState: zeta must be > 0");
    require(p >= 0.0 && std::isfinite(p), "IsotropicScaleState: p must be >= 0");
    b_ = epsilon * epsilon;
    g_ = zeta * zeta;
  }

  double b() const { return b_; }
  double g() const { return g_; }
  int tasks_seen() const { return t_ - 1; }
  double eta() const { return std::sqrt(b_ / g_); }

  // grad_sq_norm is the sum over the task of squared gradient norms.
  void accumulate(const Vec& phi, const Vec& theta_hat, double grad_sq_norm) {
    require(phi.size() == theta_hat.size(), "IsotropicScaleState::accumulate: dim mismatch");
    require(grad_sq_norm >= 0.0 && std::isfinite(grad_sq_norm),
            "IsotropicScaleState::accumulate: bad squared gradient norm");
    require_finite(phi, "phi");
    require_finite(theta_hat, "theta_hat");
    double decay = std::pow(static_cast<double>(t_ + 1), -p_);
    b_ += epsilon_ * epsilon_ * decay + 0.5 * (phi - theta_hat).squaredNorm();
    g_ += zeta_ * zeta_ * decay + grad_sq_norm;
    ++t_;
  }

  // Same update fed with a precomputed squared-displacement statistic
  // (replaces ||phi - theta_hat||^2).
  void accumulate_displacement(double disp_sq_norm, double grad_sq_norm) {
    require(disp_sq_norm >= 0.0 && std::isfinite(disp_sq_norm),
            "IsotropicScaleState::accumulate_displacement: bad squared displacement");
    require(grad_sq_norm >= 0.0 && std::isfinite(grad_sq_norm),
            "IsotropicScaleState::accumulate_displacement: bad squared gradient norm");
    double decay = std::pow(static_cast<double>(t_ + 1), -p_);
    b_ += epsilon_ * epsilon_ * decay + 0.5 * disp_sq_norm;
    g_ += zeta_ * zeta_ * decay + grad_sq_norm;
    ++t_;
  }

 private:
  double b_, g_;
  double epsilon_, zeta_, p_;
  int t_;
};

// Unique symmetric positive definite H with H * Gsq * H = Bsq, computed as
// G^{-1} (G Bsq G)^{1/2} G^{-1} with G = Gsq^{1/2} via symmetric
// eigendecompositions.
inline Mat riccati_H(const Mat& Bsq, const Mat& Gsq) {
  require(Bsq.rows() == Bsq.cols() && Gsq.rows() == Gsq.cols() && Bsq.rows() == Gsq.rows(),
          "riccati_H: need square matrices of equal dimension");
  double b_scale = std::max(Bsq.norm(), 1e-300);
  double g_scale = std::max(Gsq.norm(), 1e-300);
  require((Bsq - Bsq.transpose()).norm() <= 1e-12 * b_scale, "riccati_H: Bsq not symmetric");
  require((Gsq - Gsq.transpose()).norm() <= 1e-12 * g_scale, "riccati_H: Gsq not symmetric");

  Eigen::SelfAdjointEigenSolver<Mat> eg(Gsq);
  require(eg.info() == Eigen::Success, "riccati_H: eigensolve failed");
  require(eg.eigenvalues().minCoeff() > 0.0, "riccati_H: Gsq must be positive definite");
  Vec root_g = eg.eigenvalues().cwiseSqrt();
  Mat G = eg.eigenvectors() * root_g.asDiagonal() * eg.eigenvectors().transpose();
  Mat Ginv = eg.eigenvectors() * root_g.cwiseInverse().asDiagonal() * eg.eigenvectors().transpose();

  Mat M = G * Bsq * G;
  M = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> em(M);
  require(em.info() == Eigen::Success, "riccati_H: eigensolve failed");
  require(em.eigenvalues().minCoeff() >= -1e-10 * std::max(M.norm(), 1e-300),
          "riccati_H: Bsq must be positive semidefinite");
  Vec root_m = em.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Mat sqrt_m = em.eigenvectors() * root_m.asDiagonal() * em.eigenvectors().transpose();

  Mat H = Ginv * sqrt_m * Ginv;
  H = 0.5 * (H + H.transpose());
  double residual = (H * Gsq * H - Bsq).norm() / b_scale;
  if (!(residual <= 1e-8)) {
    throw NumericError("riccati_H: residual " + std::to_string(residual) + " exceeds 1e-8");
  }
  return H;
}

// Full-matrix accumulators: Bsq collects eps^2 I + half distance outer
// products, Gsq collects zeta^2 I + gradient outer products.  H() solves the
// Riccati equation for the matrix step.
class MatrixScaleState {
 public:
  MatrixScaleState(int dim, double epsilon, double zeta) : epsilon_(epsilon), zeta_(zeta) {
    require(dim >= 1, "MatrixScaleState: dim must be >= 1");
    require(epsilon > 0.0 && std::isfinite(epsilon), "MatrixScaleState: epsilon must be > 0");
    require(zeta > 0.0 && std::isfinite(zeta), "MatrixScaleState: zeta must be > 0");
    b_sq_ = epsilon * epsilon * Mat::Identity(dim, dim);
    g_sq_ = zeta * zeta * Mat::Identity(dim, dim);
  }

  const Mat& b_sq() const { return b_sq_; }
  const Mat& g_sq() const { return g_sq_; }
  int tasks_seen() const { return t_; }
  Mat H() const { return riccati_H(b_sq_, g_sq_); }

  // grad_outer is the sum over the task of gradient outer products.
  void accumulate(const Vec& phi, const Vec& theta_hat, const Mat& grad_outer) {
    const auto d = b_sq_.rows();
    require(phi.size() == d && theta_hat.size() == d && grad_outer.rows() == d &&
                grad_outer.cols() == d,
            "MatrixScaleState::accumulate: dimension mismatch");
    require_finite(phi, "phi");
    require_finite(theta_hat, "theta_hat");
    double go_scale = std::max(grad_outer.norm(), 1e-300);
    if ((grad_outer - grad_outer.transpose()).norm() > 1e-10 * go_scale) {
      throw NumericError("MatrixScaleState::accumulate: gradient outer sum not symmetric");
    }
    Vec diff = theta_hat - phi;
    b_sq_ += epsilon_ * epsilon_ * Mat::Identity(d, d) + 0.5 * diff * diff.transpose();
    g_sq_ += zeta_ * zeta_ * Mat::Identity(d, d) + grad_outer;
    ++t_;
  }

 private:
  Mat b_sq_, g_sq_;
  double epsilon_, zeta_;
  int t_ = 0;
};

}  // namespace aruba
