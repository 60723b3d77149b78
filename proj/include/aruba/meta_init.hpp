#pragma once
// Meta-level update of the within-task initialization phi across a task
// stream.  Three strategies: the weighted running mean (exact follow-the-
// leader on the divergence objective, valid in both geometries), adaptive
// projected gradient descent with step sigma_t / sigma_{1:t}, and damped
// jump-to-last with factor lambda.

#include <string>
#include <utility>

#include "aruba/domain.hpp"
#include "aruba/geometry.hpp"
#include "aruba/types.hpp"

namespace aruba {

enum class InitStrategy { ftl_mean, aogd, ogd_dynamic };

inline const char* to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::ftl_mean: return "ftl_mean";
    case InitStrategy::aogd: return "aogd";
    case InitStrategy::ogd_dynamic: return "ogd_dynamic";
  }
  return "?";
}

struct InitConfig {
  InitStrategy strategy = InitStrategy::ftl_mean;
  Geometry geometry = Geometry::euclidean;
  Domain domain;
  double lambda = 1.0;  // ogd_dynamic damping in (0, 1]
};

// Holds phi_t and the running sums each strategy needs.  Single-threaded
// mutable; movable between threads between updates.
class InitState {
 public:
  explicit InitState(InitConfig cfg) : InitState(cfg, domain_origin(cfg.domain)) {}

  InitState(InitConfig cfg, Vec phi1) : cfg_(std::move(cfg)), phi_(std::move(phi1)) {
    require(phi_.size() == cfg_.domain.dim, "InitState: phi dimension mismatch");
    require(contains(cfg_.domain, phi_), "InitState: phi outside domain");
    require_finite(phi_, "phi");
    if (cfg_.strategy != InitStrategy::ftl_mean && cfg_.geometry != Geometry::euclidean) {
      throw UnsupportedError("InitState: " + std::string(to_string(cfg_.strategy)) +
                             " requires the euclidean geometry");
    }
    if (cfg_.strategy == InitStrategy::ogd_dynamic) {
      require(cfg_.lambda > 0.0 && cfg_.lambda <= 1.0, "InitState: lambda must lie in (0, 1]");
    }
    weighted_sum_ = Vec::Zero(cfg_.domain.dim);
  }

  const Vec& phi() const { return phi_; }
  int tasks_seen() const { return t_; }
  const InitConfig& config() const { return cfg_; }

  // Consumes the summary point of one finished task together with its
  // weight sigma_t.  The dynamic strategy ignores the weight.
  void update(const Vec& theta_hat, double sigma) {
    require(theta_hat.size() == phi_.size(), "InitState::update: dimension mismatch");
    require_finite(theta_hat, "theta_hat");
    require(sigma > 0.0 && std::isfinite(sigma), "InitState::update: sigma must be positive");
    ++t_;
    switch (cfg_.strategy) {
      case InitStrategy::ftl_mean:
        // Weighted mean minimizes the sigma-weighted divergence sum in both
        // geometries; convexity keeps it inside the domain without projecting.
        weighted_sum_ += sigma * theta_hat;
        weight_sum_ += sigma;
        phi_ = weighted_sum_ / weight_sum_;
        break;
      case InitStrategy::aogd:
        weight_sum_ += sigma;
        phi_ = project(cfg_.domain, Geometry::euclidean,
                       phi_ - (sigma / weight_sum_) * (phi_ - theta_hat));
        break;
      case InitStrategy::ogd_dynamic:
        phi_ = project(cfg_.domain, Geometry::euclidean,
                       phi_ - cfg_.lambda * (phi_ - theta_hat));
        break;
    }
  }

 private:
  InitConfig cfg_;
  Vec phi_;
  Vec weighted_sum_;
  double weight_sum_ = 0.0;
  int t_ = 0;
};

}  // namespace aruba
