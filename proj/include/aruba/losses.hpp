// Convex loss oracles and within-task loss sequences.
#pragma once

#include "aruba/types.hpp"

#include <cmath>
#include <variant>
#include <vector>

namespace aruba {

// 0.5 * weight * ||theta - target||^2
struct QuadraticLoss {
  Vec target;
  double weight = 1.0;
};

// <g, theta>
struct LinearLoss {
  Vec g;
};

// log(1 + exp(-y * <x, theta>)), y in {-1, +1}
struct LogisticLoss {
  Vec x;
  double y = 1.0;
};

class LossOracle {
 public:
  using Family = std::variant<QuadraticLoss, LinearLoss, LogisticLoss>;

  // lipschitz: declared bound on the subgradient norm over the domain in use.
  static LossOracle quadratic(Vec target, double weight, double lipschitz) {
    require_finite(target, "quadratic: target");
    require(weight > 0, "quadratic: weight must be positive");
    return LossOracle(QuadraticLoss{std::move(target), weight}, lipschitz);
  }

  static LossOracle linear(Vec g) {
    require_finite(g, "linear: g");
    double lip = g.norm();
    return LossOracle(LinearLoss{std::move(g)}, lip);
  }

  static LossOracle logistic(Vec x, double y) {
    require_finite(x, "logistic: x");
    require(y == 1.0 || y == -1.0, "logistic: label must be +-1");
    double lip = x.norm();  // |sigmoid'| <= 1
    return LossOracle(LogisticLoss{std::move(x), y}, lip);
  }

  double value(const Vec& theta) const {
    if (const auto* q = std::get_if<QuadraticLoss>(&family_)) {
      return 0.5 * q->weight * (theta - q->target).squaredNorm();
    }
    if (const auto* l = std::get_if<LinearLoss>(&family_)) {
      return l->g.dot(theta);
    }
    const auto& lg = std::get<LogisticLoss>(family_);
    double z = -lg.y * lg.x.dot(theta);
    // log1p(exp(z)) without overflow for large z.
    return z > 30.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }

  Vec subgradient(const Vec& theta) const {
    if (const auto* q = std::get_if<QuadraticLoss>(&family_)) {
      return q->weight * (theta - q->target);
    }
    if (const auto* l = std::get_if<LinearLoss>(&family_)) {
      return l->g;
    }
    const auto& lg = std::get<LogisticLoss>(family_);
    double z = -lg.y * lg.x.dot(theta);
    double s = z > 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return (-lg.y * s) * lg.x;
  }

  double lipschitz_bound() const { return lipschitz_; }
  const Family& family() const { return family_; }
  bool is_quadratic() const { return std::holds_alternative<QuadraticLoss>(family_); }
  int dim() const {
    if (const auto* q = std::get_if<QuadraticLoss>(&family_)) return static_cast<int>(q->target.size());
    if (const auto* l = std::get_if<LinearLoss>(&family_)) return static_cast<int>(l->g.size());
    return static_cast<int>(std::get<LogisticLoss>(family_).x.size());
  }

 private:
  LossOracle(Family f, double lipschitz) : family_(std::move(f)), lipschitz_(lipschitz) {
    require(lipschitz >= 0, "loss: lipschitz bound must be nonnegative");
  }

  Family family_;
  double lipschitz_;
};

// One task: an ordered loss sequence plus its declared gradient-scale bound.
// lipschitz_rms is G_t with G_t^2 >= mean of the per-loss squared bounds.
struct Task {
  std::vector<LossOracle> losses;
  double lipschitz_rms = 0.0;

  int m() const { return static_cast<int>(losses.size()); }
  int dim() const { return losses.empty() ? 0 : losses.front().dim(); }
  bool all_quadratic() const {
    for (const auto& l : losses) {
      if (!l.is_quadratic()) return false;
    }
    return true;
  }
};

inline Task make_task(std::vector<LossOracle> losses) {
  require(!losses.empty(), "task: needs at least one loss");
  double ms = 0.0;
  for (const auto& l : losses) ms += l.lipschitz_bound() * l.lipschitz_bound();
  Task t;
  t.lipschitz_rms = std::sqrt(ms / static_cast<double>(losses.size()));
  t.losses = std::move(losses);
  return t;
}

inline Task make_task(std::vector<LossOracle> losses, double lipschitz_rms) {
  require(!losses.empty(), "task: needs at least one loss");
  double ms = 0.0;
  for (const auto& l : losses) ms += l.lipschitz_bound() * l.lipschitz_bound();
  double rms = std::sqrt(ms / static_cast<double>(losses.size()));
  require(lipschitz_rms >= rms * (1.0 - 1e-12), "task: declared G_t below per-loss RMS bound");
  Task t;
  t.losses = std::move(losses);
  t.lipschitz_rms = lipschitz_rms;
  return t;
}

}  // namespace aruba
