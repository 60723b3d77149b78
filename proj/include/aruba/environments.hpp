#pragma once
// Synthetic task-stream generators.  Four kinds: optima clustered near a
// fixed point, a drifting reference path (piecewise phases or a bounded
// random walk), anisotropic per-coordinate spread with an optional plane
// rotation, and i.i.d. task sampling with held-out losses for risk
// estimation.  Generation is a pure function of (spec, task index), so
// streams regenerate bit-identically and tasks can be built concurrently.

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "aruba/domain.hpp"
#include "aruba/losses.hpp"
#include "aruba/rng.hpp"
#include "aruba/types.hpp"

namespace aruba {

enum class EnvKind { static_similar, dynamic_drift, coordinate_geometry, distributional };
enum class LossFamily { quadratic, logistic };

inline const char* to_string(EnvKind k) {
  switch (k) {
    case EnvKind::static_similar: return "static_similar";
    case EnvKind::dynamic_drift: return "dynamic_drift";
    case EnvKind::coordinate_geometry: return "coordinate_geometry";
    case EnvKind::distributional: return "distributional";
  }
  return "?";
}

inline const char* to_string(LossFamily f) {
  return f == LossFamily::quadratic ? "quadratic" : "logistic";
}

struct DriftPhase {
  Vec center;
  int length = 0;
};

struct EnvSpec {
  EnvKind kind = EnvKind::static_similar;
  int d = 1;
  int m = 1;
  int num_tasks = 1;
  LossFamily family = LossFamily::quadratic;
  Domain domain;
  double lipschitz = 1.0;
  std::uint64_t seed = 0;

  Vec phi_star;             // cluster / path anchor; empty means domain origin
  double deviation = 0.0;   // radius of task optima around the reference point
  double task_noise = 0.0;  // within-task spread of loss targets

  std::vector<DriftPhase> phases;  // drifting kind: piecewise-constant path
  double walk_step = 0.0;          // drifting kind: random walk instead

  Vec coord_dev;               // anisotropic kind: per-coordinate deviations
  double rotation_deg = 0.0;   // anisotropic kind: rotation in coordinates (0,1)

  double dispersion = 0.0;  // sampling kind: radius of task optima around phi_star
};

struct TaskInstance {
  Task task;
  Vec optimum_center;  // unconstrained optimum of the quadratic family
  Vec reference;       // reference-path point the task was drawn around
  int index = 0;
};

namespace detail {

// Distance from x to the domain boundary (infinite when unconstrained).
inline double interior_distance(const Domain& d, const Vec& x) {
  switch (d.kind) {
    case Domain::Kind::unconstrained:
      return std::numeric_limits<double>::infinity();
    case Domain::Kind::euclidean_ball:
      return d.radius - (x - d.center).norm();
    case Domain::Kind::box: {
      double slack = std::numeric_limits<double>::infinity();
      for (int j = 0; j < d.dim; ++j) {
        slack = std::min(slack, std::min(x[j] - d.lo[j], d.hi[j] - x[j]));
      }
      return slack;
    }
    default:
      throw UnsupportedError("environments: domain kind not supported");
  }
}

inline double euclid_diameter(const Domain& d) {
  switch (d.kind) {
    case Domain::Kind::euclidean_ball:
      return 2.0 * d.radius;
    case Domain::Kind::box:
      return (d.hi - d.lo).norm();
    default:
      throw UnsupportedError("environments: need a ball or box domain");
  }
}

}  // namespace detail

// Root-mean-square distance of the points from their best common center.
inline double empirical_deviation(const std::vector<Vec>& points) {
  require(!points.empty(), "empirical_deviation: empty set");
  Vec mean = Vec::Zero(points.front().size());
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  double s = 0.0;
  for (const auto& p : points) s += (p - mean).squaredNorm();
  return std::sqrt(s / static_cast<double>(points.size()));
}

class Environment {
 public:
  explicit Environment(EnvSpec spec) : spec_(std::move(spec)) {
    require(spec_.d >= 1, "EnvSpec: d must be >= 1");
    require(spec_.m >= 1, "EnvSpec: m must be >= 1");
    require(spec_.num_tasks >= 1, "EnvSpec: num_tasks must be >= 1");
    require(spec_.lipschitz > 0.0 && std::isfinite(spec_.lipschitz),
            "EnvSpec: lipschitz must be positive");
    require(spec_.domain.dim == spec_.d, "EnvSpec: domain dimension mismatch");
    require(spec_.deviation >= 0.0, "EnvSpec: deviation must be >= 0");
    require(spec_.task_noise >= 0.0, "EnvSpec: task_noise must be >= 0");
    require(spec_.dispersion >= 0.0, "EnvSpec: dispersion must be >= 0");
    double diam = detail::euclid_diameter(spec_.domain);  // also gates domain kind
    weight_ = spec_.lipschitz / (diam + 2.0 * spec_.task_noise);

    if (spec_.phi_star.size() == 0) spec_.phi_star = domain_origin(spec_.domain);
    require(spec_.phi_star.size() == spec_.d, "EnvSpec: phi_star dimension mismatch");
    require(contains(spec_.domain, spec_.phi_star), "EnvSpec: phi_star outside domain");

    rot_ = Mat::Identity(spec_.d, spec_.d);
    if (spec_.rotation_deg != 0.0) {
      require(spec_.kind == EnvKind::coordinate_geometry,
              "EnvSpec: rotation applies to the anisotropic kind");
      require(spec_.d >= 2, "EnvSpec: rotation needs d >= 2");
      double a = spec_.rotation_deg * M_PI / 180.0;
      rot_(0, 0) = std::cos(a);
      rot_(0, 1) = -std::sin(a);
      rot_(1, 0) = std::sin(a);
      rot_(1, 1) = std::cos(a);
    }

    switch (spec_.kind) {
      case EnvKind::static_similar:
        require(detail::interior_distance(spec_.domain, spec_.phi_star) + 1e-12 >=
                    spec_.deviation,
                "EnvSpec: deviation exceeds the room around phi_star");
        psi_.assign(spec_.num_tasks, spec_.phi_star);
        break;
      case EnvKind::dynamic_drift:
        build_drift_path();
        break;
      case EnvKind::coordinate_geometry: {
        require(spec_.coord_dev.size() == spec_.d, "EnvSpec: coord_dev dimension mismatch");
        require(spec_.coord_dev.minCoeff() >= 0.0, "EnvSpec: coord_dev must be >= 0");
        double reach = std::sqrt(3.0) * spec_.coord_dev.norm();
        require(detail::interior_distance(spec_.domain, spec_.phi_star) + 1e-12 >= reach,
                "EnvSpec: coord_dev exceeds the room around phi_star");
        psi_.assign(spec_.num_tasks, spec_.phi_star);
        break;
      }
      case EnvKind::distributional:
        require(detail::interior_distance(spec_.domain, spec_.phi_star) + 1e-12 >=
                    spec_.dispersion,
                "EnvSpec: dispersion exceeds the room around phi_star");
        psi_.assign(spec_.num_tasks, spec_.phi_star);
        break;
    }
    for (size_t t = 1; t < psi_.size(); ++t) path_length_ += (psi_[t] - psi_[t - 1]).norm();
  }

  const EnvSpec& spec() const { return spec_; }
  int num_tasks() const { return spec_.num_tasks; }
  const std::vector<Vec>& reference_path() const { return psi_; }
  double path_length() const { return path_length_; }

  TaskInstance task_at(int t) const {
    require(t >= 0 && t < spec_.num_tasks, "task_at: index out of range");
    Rng base(spec_.seed);
    return build_task(psi_[t], base.split2(kOffsetStream, t), base.split2(kLossStream, t), t,
                      spec_.m);
  }

  std::vector<TaskInstance> stream() const {
    std::vector<TaskInstance> out;
    out.reserve(spec_.num_tasks);
    for (int t = 0; t < spec_.num_tasks; ++t) out.push_back(task_at(t));
    return out;
  }

  // Fresh task draws disjoint from the training stream, for risk estimation.
  // A positive m_override requests that many within-task samples; the task
  // center is unaffected (it comes from a separate stream).
  TaskInstance sample_test_task(int k, int m_override = -1) const {
    require(k >= 0, "sample_test_task: index must be >= 0");
    Rng base(spec_.seed);
    return build_task(spec_.phi_star, base.split2(kTestOffsetStream, k),
                      base.split2(kTestLossStream, k), k,
                      m_override > 0 ? m_override : spec_.m);
  }

  // Held-out losses from the same task distribution P as sample_test_task(k):
  // the optimum center is re-derived from the same offset stream, the loss
  // draws are fresh and uncentered (an i.i.d. sample from P).
  std::vector<LossOracle> heldout_losses(int k, int n) const {
    require(k >= 0 && n >= 1, "heldout_losses: bad arguments");
    Rng base(spec_.seed);
    Rng offset_rng = base.split2(kTestOffsetStream, k);
    Vec c = project(spec_.domain, Geometry::euclidean, spec_.phi_star + draw_offset(offset_rng));
    Rng loss_rng = base.split2(kHeldoutStream, k);
    std::vector<LossOracle> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(draw_loss(c, loss_rng));
    return out;
  }

  // Ground-truth dispersion of the m-sample task optimum around phi_star for
  // the sampling kind with quadratic losses: optima sit at c + noise_mean,
  // so the squared radius is dispersion^2 + task_noise^2 / m.
  double v_q() const {
    require(spec_.kind == EnvKind::distributional, "v_q: sampling kind only");
    if (spec_.family != LossFamily::quadratic) {
      throw UnsupportedError("v_q: closed form requires quadratic losses");
    }
    return std::sqrt(spec_.dispersion * spec_.dispersion +
                     spec_.task_noise * spec_.task_noise / static_cast<double>(spec_.m));
  }

 private:
  static constexpr std::uint64_t kOffsetStream = 0x6f666673;      // task-center offsets
  static constexpr std::uint64_t kLossStream = 0x6c6f7373;        // within-task losses
  static constexpr std::uint64_t kWalkStream = 0x77616c6b;        // drift path
  static constexpr std::uint64_t kTestOffsetStream = 0x746f6673;  // test-task offsets
  static constexpr std::uint64_t kTestLossStream = 0x746c6f73;    // test-task losses
  static constexpr std::uint64_t kHeldoutStream = 0x686f7574;     // held-out losses

  void build_drift_path() {
    bool has_phases = !spec_.phases.empty();
    bool has_walk = spec_.walk_step > 0.0;
    require(has_phases != has_walk, "EnvSpec: drifting kind needs phases or a walk step");
    psi_.clear();
    psi_.reserve(spec_.num_tasks);
    if (has_phases) {
      int total = 0;
      for (const auto& ph : spec_.phases) {
        require(ph.length >= 1, "EnvSpec: phase length must be >= 1");
        require(ph.center.size() == spec_.d, "EnvSpec: phase center dimension mismatch");
        require(detail::interior_distance(spec_.domain, ph.center) + 1e-12 >= spec_.deviation,
                "EnvSpec: phase center too close to the boundary for the deviation");
        total += ph.length;
        for (int i = 0; i < ph.length && static_cast<int>(psi_.size()) < spec_.num_tasks; ++i) {
          psi_.push_back(ph.center);
        }
      }
      require(total == spec_.num_tasks, "EnvSpec: phase lengths must sum to num_tasks");
    } else {
      // Bounded walk: each step is projected back into the margin region so
      // every reference point keeps deviation-sized room inside the domain.
      Domain margin_dom = shrunk_domain();
      Rng walk = Rng(spec_.seed).split(kWalkStream);
      Vec cur = project(margin_dom, Geometry::euclidean, spec_.phi_star);
      psi_.push_back(cur);
      for (int t = 1; t < spec_.num_tasks; ++t) {
        Vec cand = cur + spec_.walk_step * walk.on_sphere(spec_.d);
        cur = project(margin_dom, Geometry::euclidean, cand);
        psi_.push_back(cur);
      }
    }
  }

  Domain shrunk_domain() const {
    double v = spec_.deviation;
    if (v == 0.0) return spec_.domain;
    switch (spec_.domain.kind) {
      case Domain::Kind::euclidean_ball:
        require(spec_.domain.radius > v, "EnvSpec: deviation swallows the whole ball");
        return Domain::ball(spec_.domain.center, spec_.domain.radius - v);
      case Domain::Kind::box: {
        Vec lo = spec_.domain.lo + Vec::Constant(spec_.d, v);
        Vec hi = spec_.domain.hi - Vec::Constant(spec_.d, v);
        require((hi - lo).minCoeff() > 0.0, "EnvSpec: deviation swallows the whole box");
        return Domain::box(lo, hi);
      }
      default:
        return spec_.domain;
    }
  }

  Vec draw_offset(Rng& r) const {
    switch (spec_.kind) {
      case EnvKind::static_similar:
      case EnvKind::dynamic_drift:
        return spec_.deviation * r.on_sphere(spec_.d);
      case EnvKind::coordinate_geometry: {
        Vec u(spec_.d);
        double lim = std::sqrt(3.0);  // unit variance per coordinate
        for (int j = 0; j < spec_.d; ++j) u[j] = r.uniform(-lim, lim);
        return rot_ * spec_.coord_dev.cwiseProduct(u).eval();
      }
      case EnvKind::distributional:
        return spec_.dispersion * r.on_sphere(spec_.d);
    }
    return Vec::Zero(spec_.d);
  }

  // One uncentered loss draw around the given optimum center.
  LossOracle draw_loss(const Vec& center, Rng& r) const {
    if (spec_.family == LossFamily::quadratic) {
      Vec target = center;
      if (spec_.task_noise > 0.0) target += spec_.task_noise * r.on_sphere(spec_.d);
      return LossOracle::quadratic(target, weight_, spec_.lipschitz);
    }
    Vec x = spec_.lipschitz * r.on_sphere(spec_.d);
    double cn = std::max(center.norm(), 1e-9);
    double p = 1.0 / (1.0 + std::exp(-4.0 * x.dot(center) / (spec_.lipschitz * cn)));
    double y = r.uniform01() < p ? 1.0 : -1.0;
    return LossOracle::logistic(std::move(x), y);
  }

  TaskInstance build_task(const Vec& psi, Rng offset_rng, Rng loss_rng, int index,
                          int m_use) const {
    Vec c = project(spec_.domain, Geometry::euclidean, psi + draw_offset(offset_rng));
    std::vector<LossOracle> ls;
    ls.reserve(m_use);
    bool center_noise =
        spec_.kind != EnvKind::distributional && spec_.family == LossFamily::quadratic &&
        spec_.task_noise > 0.0;
    if (center_noise) {
      // Centered target noise: subtract the mean offset so the hindsight
      // optimum equals the drawn center exactly.
      std::vector<Vec> dirs;
      dirs.reserve(m_use);
      Vec mean = Vec::Zero(spec_.d);
      for (int i = 0; i < m_use; ++i) {
        dirs.push_back(loss_rng.on_sphere(spec_.d));
        mean += dirs.back();
      }
      mean /= static_cast<double>(m_use);
      for (int i = 0; i < m_use; ++i) {
        Vec target = c + spec_.task_noise * (dirs[i] - mean);
        ls.push_back(LossOracle::quadratic(std::move(target), weight_, spec_.lipschitz));
      }
    } else {
      for (int i = 0; i < m_use; ++i) ls.push_back(draw_loss(c, loss_rng));
    }
    TaskInstance inst;
    inst.task = make_task(std::move(ls), spec_.lipschitz);
    inst.optimum_center = std::move(c);
    inst.reference = psi;
    inst.index = index;
    return inst;
  }

  EnvSpec spec_;
  std::vector<Vec> psi_;
  Mat rot_;
  double path_length_ = 0.0;
  double weight_ = 0.0;
};

}  // namespace aruba
