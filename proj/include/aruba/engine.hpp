#pragma once
// Outer loop over a task stream.  Each task runs the within-task learner from
// the current initialization and scale, then its summary vector feeds the
// initialization and scale states for the next task.  Also houses the
// gradient-driven practical variant, test-time rate refinement, the
// online-to-batch conversion, and Monte-Carlo transfer-risk estimation.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "aruba/environments.hpp"
#include "aruba/meta_init.hpp"
#include "aruba/meta_scale.hpp"
#include "aruba/within_task.hpp"

namespace aruba {

// Which per-task summary vector drives the meta-updates.  optimal_action is
// the mode the average-regret guarantees are stated for; the other two avoid
// the hindsight computation and stay close under quadratic growth.
enum class MetaVector { optimal_action, last_iterate, average_iterate };

inline const char* to_string(MetaVector v) {
  switch (v) {
    case MetaVector::optimal_action: return "optimal_action";
    case MetaVector::last_iterate: return "last_iterate";
    case MetaVector::average_iterate: return "average_iterate";
  }
  return "?";
}

enum class ScaleMode { fixed_scalar, eps_ftl, eps_ewoo, per_coordinate, isotropic, full_matrix };

inline const char* to_string(ScaleMode s) {
  switch (s) {
    case ScaleMode::fixed_scalar: return "fixed_scalar";
    case ScaleMode::eps_ftl: return "eps_ftl";
    case ScaleMode::eps_ewoo: return "eps_ewoo";
    case ScaleMode::per_coordinate: return "per_coordinate";
    case ScaleMode::isotropic: return "isotropic";
    case ScaleMode::full_matrix: return "full_matrix";
  }
  return "?";
}

struct MetaRunConfig {
  InitStrategy init = InitStrategy::ftl_mean;
  double lambda = 1.0;  // damping for the ogd_dynamic initialization update
  ScaleMode scale = ScaleMode::eps_ftl;
  double fixed_v = 0.0;    // fixed_scalar only; must be positive there
  double epsilon = -1.0;   // negative selects the mode default
  double zeta = -1.0;      // negative selects the mode default
  double decay = 0.4;      // perturbation decay for per_coordinate / isotropic
  WithinMode within = WithinMode::omd_linearized;
  MetaVector vector = MetaVector::optimal_action;
  Geometry geometry = Geometry::euclidean;
};

struct LedgerRow {
  int t = 0;               // 1-based task index
  double regret = 0.0;     // R_t against the task's hindsight optimum
  double ub = 0.0;         // U_t at the played (phi_t, scale_t)
  double tar = 0.0;        // (1/t) sum of regrets so far
  double rub = 0.0;        // (1/t) sum of bounds so far
  double v = 0.0;          // played scalar scale (scalar modes, else 0)
  double eta_min = 0.0;    // played rate spectrum
  double eta_mean = 0.0;
  double eta_max = 0.0;
  double phi_drift = 0.0;  // ||phi_{t+1} - phi_t||
};

struct MetaRunResult {
  MetaRunConfig config;
  std::vector<LedgerRow> ledger;
  std::vector<Vec> phi_history;   // initialization each task was run from
  std::vector<double> v_history;  // played v_t (scalar modes)
  std::vector<Vec> eta_history;   // played rates (per_coordinate, isotropic)
  Mat h_sum;                      // sum of played preconditioners (full_matrix)
  Vec phi_next;                   // state the next task would receive
  double v_next = 0.0;
};

using TaskSource = std::function<TaskInstance(int)>;

namespace detail {

inline Vec meta_vector(MetaVector choice, const TaskTrace& trace) {
  switch (choice) {
    case MetaVector::optimal_action: return trace.theta_star;
    case MetaVector::last_iterate: return trace.final_play;
    case MetaVector::average_iterate: return trace.avg_iterate;
  }
  return trace.theta_star;
}

inline bool scalar_scale_mode(ScaleMode s) {
  return s == ScaleMode::fixed_scalar || s == ScaleMode::eps_ftl || s == ScaleMode::eps_ewoo;
}

}  // namespace detail

// Runs the meta-learner over num_tasks tasks drawn from the source.  Rows are
// appended to *flush (when given) as they complete, so a mid-stream failure
// still leaves the finished prefix behind while the error propagates.
inline MetaRunResult run_meta_stream(const MetaRunConfig& config, const Domain& domain,
                                     int num_tasks, const TaskSource& source,
                                     std::vector<LedgerRow>* flush = nullptr) {
  require(num_tasks >= 1, "run_meta_stream: need at least one task");
  require(static_cast<bool>(source), "run_meta_stream: empty task source");
  if (config.scale == ScaleMode::fixed_scalar) {
    require(config.fixed_v > 0.0, "run_meta_stream: fixed scale needs a positive v");
  }
  if (config.geometry != Geometry::euclidean && !detail::scalar_scale_mode(config.scale)) {
    throw UnsupportedError("run_meta_stream: non-euclidean geometry supports scalar scales only");
  }

  InitState init(InitConfig{config.init, config.geometry, domain, config.lambda});
  const int dim = domain.dim;

  std::optional<ScalarScaleState> scalar;
  std::optional<DiagScaleState> diag;
  std::optional<IsotropicScaleState> iso;
  std::optional<MatrixScaleState> matrix;
  if (config.scale == ScaleMode::fixed_scalar) {
    scalar = ScalarScaleState::fixed(config.fixed_v);
  } else if (config.scale == ScaleMode::eps_ftl) {
    double eps = config.epsilon >= 0.0 ? config.epsilon : default_scalar_epsilon(num_tasks);
    scalar = ScalarScaleState::eps_ftl(eps, domain.diameter_bound);
  }
  // The remaining modes need the first task's gradient bound or length, so
  // their states are built on first contact with the stream.

  MetaRunResult out;
  out.config = config;
  out.ledger.reserve(num_tasks);
  out.phi_history.reserve(num_tasks);

  double sum_regret = 0.0, sum_ub = 0.0;
  for (int i = 0; i < num_tasks; ++i) {
    TaskInstance inst = source(i);
    const Task& task = inst.task;
    require(task.dim() == dim, "run_meta_stream: task dimension mismatch");
    const int m = task.m();
    const double lip = task.lipschitz_rms;
    require(m >= 1 && lip > 0.0, "run_meta_stream: task needs samples and a gradient bound");
    const double sigma = lip * std::sqrt(static_cast<double>(m));

    if (i == 0) {
      double eps = config.epsilon, zeta = config.zeta;
      switch (config.scale) {
        case ScaleMode::eps_ewoo:
          if (eps < 0.0) eps = default_scalar_epsilon(num_tasks);
          scalar = ScalarScaleState::eps_ewoo(eps, domain.diameter_bound, lip, m);
          break;
        case ScaleMode::per_coordinate:
          if (eps < 0.0) eps = 1.0;
          if (zeta < 0.0) zeta = std::sqrt(static_cast<double>(m));
          diag = DiagScaleState(dim, eps, zeta, config.decay);
          break;
        case ScaleMode::isotropic:
          if (eps < 0.0) eps = 1.0;
          if (zeta < 0.0) zeta = std::sqrt(static_cast<double>(m));
          iso = IsotropicScaleState(eps, zeta, config.decay);
          break;
        case ScaleMode::full_matrix:
          if (eps < 0.0) eps = default_matrix_epsilon(num_tasks);
          if (zeta < 0.0) zeta = default_matrix_zeta(m, num_tasks);
          matrix = MatrixScaleState(dim, eps, zeta);
          break;
        default:
          break;
      }
    }

    const Vec phi = init.phi();
    WithinTaskConfig wcfg;
    wcfg.geometry = config.geometry;
    wcfg.domain = domain;
    wcfg.phi = phi;
    wcfg.mode = config.within;

    LedgerRow row;
    row.t = i + 1;
    if (scalar) {
      double v = scalar->v();
      double eta = v / sigma;
      wcfg.scale = ScalarScale{eta};
      row.v = v;
      row.eta_min = row.eta_mean = row.eta_max = eta;
    } else if (diag) {
      Vec eta = diag->eta();
      row.eta_min = eta.minCoeff();
      row.eta_mean = eta.mean();
      row.eta_max = eta.maxCoeff();
      wcfg.scale = DiagScale{std::move(eta)};
    } else if (iso) {
      double eta = iso->eta();
      wcfg.scale = ScalarScale{eta};
      row.eta_min = row.eta_mean = row.eta_max = eta;
    } else {
      Mat H = matrix->H();
      Eigen::SelfAdjointEigenSolver<Mat> es(H);
      row.eta_min = es.eigenvalues().minCoeff();
      row.eta_max = es.eigenvalues().maxCoeff();
      row.eta_mean = es.eigenvalues().mean();
      wcfg.scale = MatrixScale{std::move(H)};
    }

    TaskTrace trace = run_task(wcfg, task);
    Vec theta_hat = detail::meta_vector(config.vector, trace);

    switch (config.scale) {
      case ScaleMode::fixed_scalar:
        break;
      case ScaleMode::eps_ftl:
      case ScaleMode::eps_ewoo:
        scalar->observe(detail::bregman_extended(config.geometry, theta_hat, phi), sigma);
        break;
      case ScaleMode::per_coordinate:
        diag->accumulate(phi, theta_hat, trace.grad_sq_coord);
        break;
      case ScaleMode::isotropic:
        iso->accumulate(phi, theta_hat, trace.grad_sq_norm);
        break;
      case ScaleMode::full_matrix:
        matrix->accumulate(phi, theta_hat, trace.grad_outer);
        break;
    }
    init.update(theta_hat, sigma);

    sum_regret += trace.regret;
    sum_ub += trace.u_declared;
    row.regret = trace.regret;
    row.ub = trace.u_declared;
    row.tar = sum_regret / row.t;
    row.rub = sum_ub / row.t;
    row.phi_drift = (init.phi() - phi).norm();

    out.phi_history.push_back(phi);
    if (scalar && detail::scalar_scale_mode(config.scale)) out.v_history.push_back(row.v);
    if (diag) out.eta_history.push_back(std::get<DiagScale>(wcfg.scale).eta);
    if (iso) out.eta_history.push_back(Vec::Constant(dim, row.eta_mean));
    if (matrix) {
      if (out.h_sum.size() == 0) out.h_sum = Mat::Zero(dim, dim);
      out.h_sum += std::get<MatrixScale>(wcfg.scale).H;
    }
    out.ledger.push_back(row);
    if (flush) flush->push_back(row);
  }

  out.phi_next = init.phi();
  if (scalar) out.v_next = scalar->v();
  return out;
}

inline MetaRunResult run_meta_stream(const MetaRunConfig& config, const Environment& env,
                                     std::vector<LedgerRow>* flush = nullptr) {
  return run_meta_stream(config, env.spec().domain, env.spec().num_tasks,
                         [&env](int t) { return env.task_at(t); }, flush);
}

// Reference point for the meta-learner: every task runs from the same
// initialization and rate, with no state carried between tasks.
inline MetaRunResult run_fixed_baseline(const Environment& env, const Vec& phi, double eta,
                                        WithinMode within = WithinMode::omd_linearized,
                                        Geometry geometry = Geometry::euclidean) {
  const EnvSpec& spec = env.spec();
  require(eta > 0.0 && std::isfinite(eta), "run_fixed_baseline: eta must be positive");
  require(phi.size() == spec.domain.dim, "run_fixed_baseline: phi dimension mismatch");

  MetaRunResult out;
  out.config.scale = ScaleMode::fixed_scalar;
  out.config.within = within;
  out.config.geometry = geometry;
  out.ledger.reserve(spec.num_tasks);
  double sum_regret = 0.0, sum_ub = 0.0;
  WithinTaskConfig wcfg;
  wcfg.geometry = geometry;
  wcfg.domain = spec.domain;
  wcfg.phi = phi;
  wcfg.scale = ScalarScale{eta};
  wcfg.mode = within;
  for (int i = 0; i < spec.num_tasks; ++i) {
    TaskTrace trace = run_task(wcfg, env.task_at(i).task);
    sum_regret += trace.regret;
    sum_ub += trace.u_declared;
    LedgerRow row;
    row.t = i + 1;
    row.regret = trace.regret;
    row.ub = trace.u_declared;
    row.tar = sum_regret / row.t;
    row.rub = sum_ub / row.t;
    row.eta_min = row.eta_mean = row.eta_max = eta;
    out.phi_history.push_back(phi);
    out.ledger.push_back(row);
  }
  out.phi_next = phi;
  return out;
}

// Gradient-driven practical variant.  The runner performs the within-task
// descent; only its endpoint and per-coordinate squared gradients feed back.
struct DescentTrace {
  Vec theta_hat;          // final within-task parameter
  Vec grad_sq_coord;      // elementwise sum of squared gradients
  double loss_sum = 0.0;  // losses evaluated along the path
};

using DescentRunner =
    std::function<DescentTrace(const Task&, const Domain&, const Vec& phi, const Vec& eta)>;

// Plain projected SGD over the task's losses in presentation order.
inline DescentTrace sgd_descent(const Task& task, const Domain& domain, const Vec& phi,
                                const Vec& eta) {
  require(phi.size() == domain.dim && eta.size() == domain.dim, "sgd_descent: dimension mismatch");
  DescentTrace tr;
  tr.grad_sq_coord = Vec::Zero(domain.dim);
  Vec x = project(domain, Geometry::euclidean, phi);
  for (const auto& loss : task.losses) {
    tr.loss_sum += loss.value(x);
    Vec g = loss.subgradient(x);
    tr.grad_sq_coord += g.cwiseProduct(g);
    x = project(domain, Geometry::euclidean, (x - eta.cwiseProduct(g)).eval());
  }
  tr.theta_hat = std::move(x);
  return tr;
}

struct PracticalResult {
  Vec phi;  // initialization after the final update
  Vec eta;  // rate the next task would receive
  Vec b;    // accumulator state, reusable for test-time refinement
  Vec g;
  std::vector<LedgerRow> ledger;
};

// Learns a per-coordinate rate from observed gradients only; no gradient
// bound enters the updates.  The initialization follows the plain mean of the
// returned task parameters (hindsight optima are computed for reporting, not
// for learning).
inline PracticalResult aruba_practical(const Environment& env, const DescentRunner& runner,
                                       double epsilon, double zeta, double p,
                                       InitStrategy strategy = InitStrategy::ftl_mean,
                                       double lambda = 1.0) {
  require(static_cast<bool>(runner), "aruba_practical: empty descent runner");
  const EnvSpec& spec = env.spec();
  const int dim = spec.domain.dim;
  DiagScaleState state(dim, epsilon, zeta, p);
  InitState init(InitConfig{strategy, Geometry::euclidean, spec.domain, lambda});

  PracticalResult out;
  out.ledger.reserve(spec.num_tasks);
  double sum_regret = 0.0, sum_ub = 0.0;
  for (int i = 0; i < spec.num_tasks; ++i) {
    TaskInstance inst = env.task_at(i);
    const Vec phi = init.phi();
    const Vec eta = state.eta();
    DescentTrace tr = runner(inst.task, spec.domain, phi, eta);
    require(tr.theta_hat.size() == dim && tr.grad_sq_coord.size() == dim,
            "aruba_practical: runner returned wrong dimensions");
    state.accumulate(phi, tr.theta_hat, tr.grad_sq_coord);
    init.update(tr.theta_hat, 1.0);

    Vec star = hindsight_optimum(inst.task, Geometry::euclidean, spec.domain);
    double star_sum = 0.0;
    for (const auto& l : inst.task.losses) star_sum += l.value(star);
    LedgerRow row;
    row.t = i + 1;
    row.regret = tr.loss_sum - star_sum;
    row.ub = regret_upper_bound(star, phi, eta, tr.grad_sq_coord);
    sum_regret += row.regret;
    sum_ub += row.ub;
    row.tar = sum_regret / row.t;
    row.rub = sum_ub / row.t;
    row.eta_min = eta.minCoeff();
    row.eta_mean = eta.mean();
    row.eta_max = eta.maxCoeff();
    row.phi_drift = (init.phi() - phi).norm();
    out.ledger.push_back(row);
  }
  out.phi = init.phi();
  out.eta = state.eta();
  out.b = state.b();
  out.g = state.g();
  return out;
}

// Test-time refinement: the learned numerator is frozen while the denominator
// keeps growing with a damped share of the incoming squared gradients, so the
// rate decays along the deployment task.
class RefineState {
 public:
  RefineState(Vec b, Vec g, double c) : b_(std::move(b)), g_(std::move(g)), c_(c) {
    require(c_ > 0.0 && std::isfinite(c_), "RefineState: c must be positive");
    require(b_.size() == g_.size() && b_.size() > 0, "RefineState: dimension mismatch");
    require((b_.array() > 0.0).all() && (g_.array() > 0.0).all(),
            "RefineState: accumulators must be positive");
  }

  Vec eta() const { return (b_.cwiseQuotient(g_)).cwiseSqrt(); }

  void observe(const Vec& grad) {
    require(grad.size() == g_.size(), "RefineState: gradient dimension mismatch");
    require_finite(grad, "grad");
    g_ += c_ * grad.cwiseProduct(grad);
  }

 private:
  Vec b_, g_;
  double c_;
};

// Rate sequence along a gradient stream: the entry at position i is the rate
// in force before gradient i arrives (so the result has one extra entry).
inline std::vector<Vec> aruba_plusplus_refine(const Vec& b, const Vec& g, double c,
                                              const std::vector<Vec>& grads) {
  if (c <= 0.0 || !std::isfinite(c)) {
    throw std::invalid_argument("aruba_plusplus_refine: c must be positive");
  }
  RefineState state(b, g, c);
  std::vector<Vec> out;
  out.reserve(grads.size() + 1);
  out.push_back(state.eta());
  for (const auto& grad : grads) {
    state.observe(grad);
    out.push_back(state.eta());
  }
  return out;
}

// Uniform average of the per-task meta-states, the deployment state for the
// batch setting.
struct BatchState {
  Vec phi;
  double v = 0.0;  // scalar modes
  Vec eta;         // per-coordinate / isotropic modes
  Mat H;           // full-matrix mode
};

inline BatchState online_to_batch(const MetaRunResult& run) {
  const auto T = run.phi_history.size();
  if (T == 0) throw std::invalid_argument("online_to_batch: empty run");
  BatchState out;
  out.phi = Vec::Zero(run.phi_history[0].size());
  for (const auto& phi : run.phi_history) out.phi += phi;
  out.phi /= static_cast<double>(T);
  if (!run.v_history.empty()) {
    double s = 0.0;
    for (double v : run.v_history) s += v;
    out.v = s / static_cast<double>(run.v_history.size());
  }
  if (!run.eta_history.empty()) {
    out.eta = Vec::Zero(run.eta_history[0].size());
    for (const auto& eta : run.eta_history) out.eta += eta;
    out.eta /= static_cast<double>(run.eta_history.size());
  }
  if (run.h_sum.size() != 0) out.H = run.h_sum / static_cast<double>(T);
  return out;
}

struct RiskEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int tasks = 0;
};

namespace detail {

// Runs the within-task learner and returns the average of its plays.
inline Vec deploy_average_iterate(const WithinTaskConfig& cfg, const Task& task) {
  validate(cfg);
  require(task.dim() == cfg.domain.dim, "deploy_average_iterate: dimension mismatch");
  Vec gsum = Vec::Zero(cfg.domain.dim);
  Vec avg = Vec::Zero(cfg.domain.dim);
  std::vector<LossOracle> prefix;
  if (cfg.mode == WithinMode::ftrl_full) prefix.reserve(task.m());
  for (const auto& loss : task.losses) {
    Vec theta = cfg.mode == WithinMode::omd_linearized ? omd_iterate(cfg, gsum)
                                                       : detail::ftrl_iterate(cfg, prefix);
    gsum += loss.subgradient(theta);
    avg += theta;
    if (cfg.mode == WithinMode::ftrl_full) prefix.push_back(loss);
  }
  return avg / std::max(task.m(), 1);
}

}  // namespace detail

// Monte-Carlo estimate of the expected deployment loss: fresh tasks are
// sampled from the environment, the learner runs from phi with the scale v,
// and the averaged iterate is scored on held-out losses from the same task.
inline RiskEstimate transfer_risk_estimate(const Vec& phi, double v, const Environment& env,
                                           int n_test_tasks, int m, int n_risk_samples,
                                           WithinMode within = WithinMode::omd_linearized,
                                           Geometry geometry = Geometry::euclidean) {
  if (n_test_tasks < 1) {
    throw std::invalid_argument("transfer_risk_estimate: need at least one test task");
  }
  require(m >= 1, "transfer_risk_estimate: need at least one within-task sample");
  require(n_risk_samples >= 1, "transfer_risk_estimate: need held-out losses");
  require(v > 0.0 && std::isfinite(v), "transfer_risk_estimate: scale must be positive");
  const Domain& domain = env.spec().domain;
  require(phi.size() == domain.dim, "transfer_risk_estimate: phi dimension mismatch");

  double sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < n_test_tasks; ++k) {
    TaskInstance inst = env.sample_test_task(k, m);
    WithinTaskConfig cfg;
    cfg.geometry = geometry;
    cfg.domain = domain;
    cfg.phi = phi;
    cfg.scale = ScalarScale{v / (inst.task.lipschitz_rms * std::sqrt(static_cast<double>(m)))};
    cfg.mode = within;
    Vec theta_bar = detail::deploy_average_iterate(cfg, inst.task);
    double risk = 0.0;
    for (const auto& loss : env.heldout_losses(k, n_risk_samples)) risk += loss.value(theta_bar);
    risk /= static_cast<double>(n_risk_samples);
    sum += risk;
    sum_sq += risk * risk;
  }
  RiskEstimate out;
  out.tasks = n_test_tasks;
  out.mean = sum / n_test_tasks;
  if (n_test_tasks > 1) {
    double var = std::max(0.0, sum_sq / n_test_tasks - out.mean * out.mean);
    out.std_error = std::sqrt(var / (n_test_tasks - 1));
  }
  return out;
}

}  // namespace aruba
