// Shared scalar/vector aliases and error types.
#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace aruba {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Input lies on (or past) a boundary where the requested quantity diverges,
// e.g. a zero coordinate under the entropy mirror map.
class BoundaryError : public std::domain_error {
 public:
  explicit BoundaryError(const std::string& what) : std::domain_error(what) {}
};

// Operation is well defined mathematically but deliberately not provided,
// e.g. weighted-norm projection onto a domain where it has no exact form.
class UnsupportedError : public std::invalid_argument {
 public:
  explicit UnsupportedError(const std::string& what) : std::invalid_argument(what) {}
};

// Iterative solver stopped before reaching its target residual.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Numeric procedure failed (overflow, singular matrix, quadrature cap, ...).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline void require_finite(const Vec& v, const std::string& name) {
  if (!v.allFinite()) throw std::invalid_argument(name + " has non-finite entries");
}

}  // namespace aruba
