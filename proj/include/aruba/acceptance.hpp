#pragma once
// Exit-gate suite: ten self-contained checks, each pinning one behavioral
// guarantee of the library at a stated tolerance.  Every check runs on fixed
// seeds and reports its measured numbers so a failure is diagnosable from the
// one-line result alone.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "aruba/engine.hpp"
#include "aruba/environments.hpp"
#include "aruba/experiment.hpp"
#include "aruba/federated.hpp"
#include "aruba/hindsight.hpp"

namespace aruba {

struct CriterionResult {
  int number = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteOptions {
  std::string only;     // substring filter on criterion names; empty runs all
  std::string out_dir;  // when set, determinism CSVs are written here
};

struct SuiteReport {
  std::vector<CriterionResult> results;
  bool all_passed() const {
    for (const auto& r : results) {
      if (!r.passed) return false;
    }
    return true;
  }
};

namespace acceptance {

inline std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return std::string(buf);
}

// ---------------------------------------------------------------- criterion 1

// Every tracked run in exact-update mode keeps realized regret under its
// declared bound at every prefix.
inline CriterionResult bound_soundness() {
  CriterionResult res{1, "bound-soundness", false, ""};
  struct Combo {
    EnvSpec env;
    MetaRunConfig meta;
  };
  std::vector<Combo> combos;

  auto ball_env = [](int d, double radius, double dev, double noise) {
    EnvSpec es;
    es.kind = EnvKind::static_similar;
    es.d = d;
    es.m = 8;
    es.num_tasks = 40;
    es.domain = Domain::ball(Vec::Zero(d), radius);
    es.deviation = dev;
    es.task_noise = noise;
    return es;
  };
  auto box_env = [](int d, double half, double dev, double noise) {
    EnvSpec es;
    es.kind = EnvKind::static_similar;
    es.d = d;
    es.m = 8;
    es.num_tasks = 40;
    es.domain = Domain::box(Vec::Constant(d, -half), Vec::Constant(d, half));
    es.deviation = dev;
    es.task_noise = noise;
    return es;
  };
  auto meta = [](ScaleMode scale, WithinMode within, InitStrategy init) {
    MetaRunConfig mc;
    mc.scale = scale;
    mc.within = within;
    mc.init = init;
    return mc;
  };

  // static similar tasks, ball domain, scalar scale learners
  for (ScaleMode s : {ScaleMode::eps_ftl, ScaleMode::eps_ewoo}) {
    for (WithinMode w : {WithinMode::omd_linearized, WithinMode::ftrl_full}) {
      combos.push_back({ball_env(3, 1.0, 0.2, 0.1), meta(s, w, InitStrategy::ftl_mean)});
    }
  }
  {
    MetaRunConfig mc = meta(ScaleMode::fixed_scalar, WithinMode::omd_linearized,
                            InitStrategy::ftl_mean);
    mc.fixed_v = 0.5;
    combos.push_back({ball_env(3, 1.0, 0.2, 0.1), mc});
  }
  // box domain unlocks the separable scale learners
  for (ScaleMode s : {ScaleMode::eps_ftl, ScaleMode::per_coordinate, ScaleMode::isotropic,
                      ScaleMode::full_matrix}) {
    combos.push_back({box_env(3, 1.2, 0.3, 0.2),
                      meta(s, WithinMode::omd_linearized, InitStrategy::ftl_mean)});
  }
  // drifting reference path, tracking and averaging initializations
  auto drift_env = [&](bool walk) {
    EnvSpec es = box_env(2, 1.6, 0.1, 0.05);
    es.kind = EnvKind::dynamic_drift;
    if (walk) {
      es.walk_step = 0.02;
    } else {
      DriftPhase a, b;
      a.center = Vec::Zero(2);
      a.center[0] = -0.8;
      a.length = 20;
      b.center = Vec::Zero(2);
      b.center[0] = 0.8;
      b.length = 20;
      es.phases = {a, b};
    }
    return es;
  };
  for (InitStrategy init : {InitStrategy::ftl_mean, InitStrategy::ogd_dynamic,
                            InitStrategy::aogd}) {
    combos.push_back({drift_env(false), meta(ScaleMode::eps_ftl, WithinMode::omd_linearized, init)});
  }
  combos.push_back({drift_env(false),
                    meta(ScaleMode::eps_ewoo, WithinMode::omd_linearized, InitStrategy::ogd_dynamic)});
  combos.push_back({drift_env(false),
                    meta(ScaleMode::per_coordinate, WithinMode::omd_linearized,
                         InitStrategy::ogd_dynamic)});
  combos.push_back({drift_env(true),
                    meta(ScaleMode::eps_ftl, WithinMode::omd_linearized, InitStrategy::aogd)});
  // anisotropic coordinate geometry
  {
    EnvSpec es = box_env(4, 1.9, 0.0, 0.0);
    es.kind = EnvKind::coordinate_geometry;
    es.coord_dev = Vec::Zero(4);
    es.coord_dev << 1.0, 0.3, 0.01, 0.01;
    es.rotation_deg = 30.0;
    for (ScaleMode s : {ScaleMode::per_coordinate, ScaleMode::full_matrix, ScaleMode::isotropic}) {
      combos.push_back({es, meta(s, WithinMode::omd_linearized, InitStrategy::ftl_mean)});
    }
  }
  // distributional sampling
  {
    EnvSpec es = ball_env(3, 1.0, 0.0, 0.15);
    es.kind = EnvKind::distributional;
    es.dispersion = 0.2;
    for (ScaleMode s : {ScaleMode::eps_ftl, ScaleMode::eps_ewoo}) {
      combos.push_back({es, meta(s, WithinMode::omd_linearized, InitStrategy::ftl_mean)});
    }
  }
  // noisy static run and a plain scalar box run round out the battery
  combos.push_back({ball_env(5, 1.2, 0.25, 0.3),
                    meta(ScaleMode::eps_ftl, WithinMode::omd_linearized, InitStrategy::ftl_mean)});
  combos.push_back({box_env(3, 1.0, 0.2, 0.1),
                    meta(ScaleMode::eps_ftl, WithinMode::omd_linearized, InitStrategy::ftl_mean)});

  const double rel = 1e-9;
  double worst = -1e300;
  int runs = 0;
  int violations = 0;
  for (const Combo& combo : combos) {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      EnvSpec es = combo.env;
      es.seed = seed;
      Environment env(es);
      MetaRunResult run = run_meta_stream(combo.meta, env);
      ++runs;
      for (const LedgerRow& row : run.ledger) {
        double slack_task = row.regret - row.ub * (1.0 + rel) - 1e-12;
        double slack_avg = row.tar - row.rub * (1.0 + rel) - 1e-12;
        worst = std::max(worst, std::max(row.regret - row.ub, row.tar - row.rub));
        if (slack_task > 0.0 || slack_avg > 0.0) ++violations;
      }
    }
  }
  res.passed = violations == 0 && combos.size() >= 20;
  res.detail = fmt("%zu configs x 3 seeds (%d runs), every prefix TAR <= RUB; violations=%d, "
                   "worst margin=%.3g",
                   combos.size(), runs, violations, worst);
  return res;
}

// ---------------------------------------------------------------- criterion 2

// Learning both the initialization and the scale beats a single-task rate
// tuned only for the domain size, and the win grows with D/V.
inline CriterionResult similarity_adaptation() {
  CriterionResult res{2, "similarity-adaptation", false, ""};
  const int d = 5, m = 50, T = 2000;
  const double V = 0.1, G = 1.0;
  const std::vector<double> Ds = {1.0, 2.0, 4.0};

  std::vector<double> gap(Ds.size(), 0.0);
  double tar_aruba_d2 = 0.0, tar_base_d2 = 0.0;
  for (size_t k = 0; k < Ds.size(); ++k) {
    double D = Ds[k];
    double aruba_sum = 0.0, base_sum = 0.0;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      EnvSpec es;
      es.kind = EnvKind::static_similar;
      es.d = d;
      es.m = m;
      es.num_tasks = T;
      es.lipschitz = G;
      es.domain = Domain::ball(Vec::Zero(d), D / std::sqrt(2.0));
      es.deviation = V;
      Vec anchor = Vec::Zero(d);
      anchor[0] = 0.35 * D;
      es.phi_star = anchor;
      es.seed = seed;
      Environment env(es);

      MetaRunConfig mc;
      mc.init = InitStrategy::ftl_mean;
      mc.scale = ScaleMode::eps_ewoo;
      MetaRunResult learned = run_meta_stream(mc, env);
      double eta_fixed = D / (G * std::sqrt(2.0 * m));
      MetaRunResult fixed = run_fixed_baseline(env, Vec::Zero(d), eta_fixed);
      aruba_sum += learned.ledger.back().tar;
      base_sum += fixed.ledger.back().tar;
    }
    aruba_sum /= 3.0;
    base_sum /= 3.0;
    gap[k] = base_sum - aruba_sum;
    if (Ds[k] == 2.0) {
      tar_aruba_d2 = aruba_sum;
      tar_base_d2 = base_sum;
    }
  }
  bool headline = tar_aruba_d2 <= 0.7 * tar_base_d2;
  bool widening = gap[0] < gap[1] && gap[1] < gap[2];
  res.passed = headline && widening;
  res.detail = fmt("D=2: TAR %.4f vs fixed-rate %.4f (%.0f%% below, need >=30%%); "
                   "gap over D={1,2,4}: %.4f < %.4f < %.4f %s",
                   tar_aruba_d2, tar_base_d2,
                   100.0 * (1.0 - tar_aruba_d2 / tar_base_d2), gap[0], gap[1], gap[2],
                   widening ? "(widens)" : "(NOT monotone)");
  return res;
}

// ---------------------------------------------------------------- criterion 3

// Scale-learner regret against the best fixed scale on a dense grid grows
// sublinearly in the horizon.
inline CriterionResult sim_regret_sublinear() {
  CriterionResult res{3, "sim-regret-sublinear", false, ""};
  const double D = 1.0;
  const double eps = 0.25;  // fixed shift: the slope check isolates learning
  const std::vector<int> horizons = {100, 215, 464, 1000, 2154, 5000};
  const int grid_n = 10000;

  auto slope_for = [&](std::uint64_t seq_seed, bool ewoo) {
    Rng rng(seq_seed);
    std::vector<double> bsq(5000);
    for (double& b : bsq) {
      double x = D * rng.uniform01();
      b = x * x;
    }
    std::vector<double> xs, ys;
    for (int T : horizons) {
      auto st = ewoo ? ScalarScaleState::eps_ewoo(eps, D, 1.0, 1)
                     : ScalarScaleState::eps_ftl(eps, D);
      double played = 0.0, sum_bsq = 0.0;
      for (int t = 0; t < T; ++t) {
        double v = st.v();
        played += (bsq[t] + eps * eps) / v + v;
        st.observe(bsq[t], 1.0);
        sum_bsq += bsq[t] + eps * eps;
      }
      double lo = eps, hi = std::sqrt(D * D + eps * eps);
      double best = 1e300;
      for (int i = 0; i <= grid_n; ++i) {
        double v = lo + (hi - lo) * static_cast<double>(i) / grid_n;
        best = std::min(best, sum_bsq / v + v * T);
      }
      xs.push_back(std::log(static_cast<double>(T)));
      ys.push_back(std::log(std::max(played - best, 1e-12)));
    }
    double n = static_cast<double>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
      sx += xs[i];
      sy += ys[i];
      sxx += xs[i] * xs[i];
      sxy += xs[i] * ys[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };

  double worst_ewoo = -1e300, worst_ftl = -1e300;
  for (std::uint64_t seq = 101; seq <= 105; ++seq) {
    worst_ewoo = std::max(worst_ewoo, slope_for(seq, true));
    worst_ftl = std::max(worst_ftl, slope_for(seq, false));
  }
  res.passed = worst_ewoo < 0.8 && worst_ftl < 0.9;
  res.detail = fmt("log-log regret slope over T in [100,5000], 5 sequences: "
                   "ewoo max %.3f (< 0.8), ftl max %.3f (< 0.9)",
                   worst_ewoo, worst_ftl);
  return res;
}

// ---------------------------------------------------------------- criterion 4

// A tracking initialization wins under drift and concedes under none.
inline CriterionResult dynamic_tracking() {
  CriterionResult res{4, "dynamic-tracking", false, ""};
  const int d = 2, m = 10, T = 1000;

  auto run_pair = [&](bool drifting, std::uint64_t seed) {
    EnvSpec es;
    es.kind = EnvKind::dynamic_drift;
    es.d = d;
    es.m = m;
    es.num_tasks = T;
    es.domain = Domain::box(Vec::Constant(d, -1.5), Vec::Constant(d, 1.5));
    es.deviation = 0.05;
    es.seed = seed;
    if (drifting) {
      DriftPhase a, b;
      a.center = Vec::Zero(d);
      a.center[0] = -1.0;
      a.length = T / 2;
      b.center = Vec::Zero(d);
      b.center[0] = 1.0;
      b.length = T / 2;
      es.phases = {a, b};
    } else {
      DriftPhase only;
      only.center = Vec::Zero(d);
      only.center[0] = 0.3;
      only.center[1] = -0.2;
      only.length = T;
      es.phases = {only};
    }
    Environment env(es);
    MetaRunConfig tracker;
    tracker.init = InitStrategy::ogd_dynamic;
    tracker.scale = ScaleMode::eps_ftl;
    MetaRunConfig averager = tracker;
    averager.init = InitStrategy::ftl_mean;
    double tar_track = run_meta_stream(tracker, env).ledger.back().tar;
    double tar_mean = run_meta_stream(averager, env).ledger.back().tar;
    return std::make_pair(tar_track, tar_mean);
  };

  double drift_track = 0.0, drift_mean = 0.0, flat_track = 0.0, flat_mean = 0.0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto [dt, dm] = run_pair(true, seed);
    drift_track += dt / 3.0;
    drift_mean += dm / 3.0;
    auto [ft, fm] = run_pair(false, seed);
    flat_track += ft / 3.0;
    flat_mean += fm / 3.0;
  }
  bool drift_win = drift_track <= 0.6 * drift_mean;
  bool flat_concede = flat_mean <= 1.05 * flat_track;
  res.passed = drift_win && flat_concede;
  res.detail = fmt("drift: tracking TAR %.4f vs averaging %.4f (ratio %.2f, need <= 0.60); "
                   "no drift: averaging %.4f vs tracking %.4f (ratio %.3f, need <= 1.05)",
                   drift_track, drift_mean, drift_track / drift_mean, flat_mean, flat_track,
                   flat_mean / flat_track);
  return res;
}

// ---------------------------------------------------------------- criterion 5

// Per-coordinate rates separate loud from quiet coordinates, and the learned
// rate is exactly the closed-form minimizer of the accumulated surrogate.
inline CriterionResult per_coordinate_rates() {
  CriterionResult res{5, "per-coordinate-rates", false, ""};
  const int d = 10, m = 20, T = 500;

  double min_ratio = 1e300;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    EnvSpec es;
    es.kind = EnvKind::coordinate_geometry;
    es.d = d;
    es.m = m;
    es.num_tasks = T;
    es.domain = Domain::box(Vec::Constant(d, -1.8), Vec::Constant(d, 1.8));
    es.coord_dev = Vec::Constant(d, 1e-3);
    es.coord_dev[0] = 1.0;
    es.seed = seed;
    Environment env(es);

    MetaRunConfig mc;
    mc.scale = ScaleMode::per_coordinate;
    mc.epsilon = 0.05;
    mc.zeta = 0.05 * std::sqrt(static_cast<double>(m));
    mc.decay = 1.0;
    MetaRunResult run = run_meta_stream(mc, env);
    Vec eta = run.eta_history.back();
    std::vector<double> quiet(eta.data() + 1, eta.data() + d);
    std::nth_element(quiet.begin(), quiet.begin() + 4, quiet.end());
    double med = 0.5 * (quiet[4] + *std::max_element(quiet.begin(), quiet.begin() + 4));
    min_ratio = std::min(min_ratio, eta[0] / med);
  }

  // Closed form vs. brute force: the running rate must minimize the summed
  // surrogate b_t/x + g_t x in every coordinate at every step.
  double worst_gap = 0.0;
  {
    const int dim = 4;
    const double eps = 0.3, zeta = 0.7, p = 0.6;
    DiagScaleState state(dim, eps, zeta, p);
    // raw per-step surrogate coefficients, kept so the reference route never
    // touches the state's accumulators
    std::vector<std::pair<Vec, Vec>> steps;
    steps.push_back({Vec::Constant(dim, eps * eps), Vec::Constant(dim, zeta * zeta)});
    Rng rng(404);
    for (int t = 1; t <= 12; ++t) {
      Vec phi = rng.on_sphere(dim);
      Vec theta = rng.on_sphere(dim) * 0.8;
      Vec gsq = rng.on_sphere(dim).cwiseAbs() * rng.uniform(0.1, 2.0);
      state.accumulate(phi, theta, gsq);
      double tp = std::pow(static_cast<double>(t + 1), p);
      steps.push_back({Vec(Vec::Constant(dim, eps * eps / tp) +
                           0.5 * (phi - theta).cwiseProduct(phi - theta)),
                       Vec(Vec::Constant(dim, zeta * zeta / tp) + gsq)});
      for (int j = 0; j < dim; ++j) {
        // locate the minimizer of x -> sum_s (b_s/x + g_s x) by bisecting the
        // sign of its derivative, re-summing the raw per-step surrogates at
        // every probe (the curvature makes function-value search too flat
        // near the optimum for a 1e-8 check)
        auto slope_at = [&](double x) {
          double acc = 0.0;
          for (const auto& s : steps) acc += -s.first[j] / (x * x) + s.second[j];
          return acc;
        };
        double lo = 1e-6, hi = 1e3;
        for (int it = 0; it < 200; ++it) {
          double mid = 0.5 * (lo + hi);
          (slope_at(mid) < 0.0 ? lo : hi) = mid;
        }
        double brute = 0.5 * (lo + hi);
        worst_gap = std::max(worst_gap, std::abs(state.eta()[j] - brute));
      }
    }
  }
  bool separation = min_ratio >= 10.0;
  bool closed_form = worst_gap <= 1e-8;
  res.passed = separation && closed_form;
  res.detail = fmt("rate separation eta_1/median(eta_2..10) min over seeds %.1f (need >= 10); "
                   "closed form vs brute-force minimizer max gap %.2e (need <= 1e-8)",
                   min_ratio, worst_gap);
  return res;
}

// ---------------------------------------------------------------- criterion 6

// The matrix square-root solve is exact, and the full-matrix method is no
// worse than the diagonal one on rotated geometry.
inline CriterionResult matrix_geometry() {
  CriterionResult res{6, "matrix-geometry", false, ""};

  auto random_spd = [](int d, Rng& rng) {
    Mat M(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) M(i, j) = rng.normal();
    }
    Eigen::HouseholderQR<Mat> qr(M);
    Mat Q = qr.householderQ();
    Vec lam(d);
    for (int i = 0; i < d; ++i) lam[i] = rng.uniform(0.1, 3.0);
    Mat A = Q * lam.asDiagonal() * Q.transpose();
    return Mat(0.5 * (A + A.transpose()));
  };

  double worst_residual = 0.0;
  Rng rng(606);
  for (int trial = 0; trial < 100; ++trial) {
    int d = 2 + trial % 15;
    Mat Bsq = random_spd(d, rng);
    Mat Gsq = random_spd(d, rng);
    Mat H = riccati_H(Bsq, Gsq);
    double residual = (H * Gsq * H - Bsq).norm() / Bsq.norm();
    worst_residual = std::max(worst_residual, residual);
  }

  double worst_ratio = 0.0;
  const int d = 8, m = 20, T = 500;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    EnvSpec es;
    es.kind = EnvKind::coordinate_geometry;
    es.d = d;
    es.m = m;
    es.num_tasks = T;
    es.domain = Domain::box(Vec::Constant(d, -1.8), Vec::Constant(d, 1.8));
    es.coord_dev = Vec::Constant(d, 0.05);
    es.coord_dev[0] = 1.0;
    es.coord_dev[1] = 0.08;
    es.rotation_deg = 45.0;
    es.seed = seed;
    Environment env(es);

    // identical small regularizer paths: the matrix state adds eps^2 I per
    // task with no decay, so the diagonal run uses decay 0 to match, and the
    // magnitudes are kept far below the data terms so geometry decides
    MetaRunConfig diag;
    diag.scale = ScaleMode::per_coordinate;
    diag.epsilon = 0.01;
    diag.zeta = 0.05;
    diag.decay = 0.0;
    MetaRunConfig matrix = diag;
    matrix.scale = ScaleMode::full_matrix;
    double rub_diag = run_meta_stream(diag, env).ledger.back().rub;
    double rub_matrix = run_meta_stream(matrix, env).ledger.back().rub;
    worst_ratio = std::max(worst_ratio, rub_matrix / rub_diag);
  }
  bool riccati_ok = worst_residual <= 1e-8;
  bool geometry_ok = worst_ratio <= 1.0;
  res.passed = riccati_ok && geometry_ok;
  res.detail = fmt("riccati residual max %.2e over 100 SPD pairs (need <= 1e-8); "
                   "rotated env matrix/diag final RUB ratio max %.3f (need <= 1)",
                   worst_residual, worst_ratio);
  return res;
}

// ---------------------------------------------------------------- criterion 7

// Averaged meta-state transfer risk improves with experience and lands within
// a small factor of the distribution-oracle initialization and rate.
inline CriterionResult online_to_batch_risk() {
  CriterionResult res{7, "online-to-batch", false, ""};
  const int d = 3, m = 25;
  // Large sample noise in a small ball makes the early, oversized learned
  // scale visibly expensive (noise amplification in the deployed average),
  // so maturing the meta-state has a measurable payoff.
  const double noise = 0.45;
  const double radius = 0.5;
  const double vq_target = 0.1;
  // distributional similarity v_q^2 splits into spread^2 plus noise^2 / m
  const double rho = std::sqrt(vq_target * vq_target - noise * noise / m);

  int improved = 0;
  double mean_excess_learned = 0.0, mean_excess_oracle = 0.0;
  double risk10_mean = 0.0, risk1000_mean = 0.0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    EnvSpec es;
    es.kind = EnvKind::distributional;
    es.d = d;
    es.m = m;
    es.num_tasks = 1000;
    es.domain = Domain::ball(Vec::Zero(d), radius);
    es.dispersion = rho;
    es.task_noise = noise;
    Vec anchor = Vec::Zero(d);
    anchor[0] = 0.4;
    es.phi_star = anchor;
    es.seed = seed;
    Environment env(es);

    MetaRunConfig mc;
    mc.scale = ScaleMode::eps_ewoo;
    auto source = [&](int t) { return env.task_at(t); };
    auto risk_at = [&](int T) {
      MetaRunConfig pref = mc;
      pref.epsilon = std::pow(static_cast<double>(T), -0.25);
      MetaRunResult run = run_meta_stream(pref, es.domain, T, source);
      BatchState batch = online_to_batch(run);
      return transfer_risk_estimate(batch.phi, batch.v, env, 40, m, 400).mean;
    };
    double risk10 = risk_at(10);
    double risk1000 = risk_at(1000);
    if (risk1000 < risk10) ++improved;
    risk10_mean += risk10 / 3.0;
    risk1000_mean += risk1000 / 3.0;

    double oracle_risk = transfer_risk_estimate(anchor, env.v_q(), env, 40, m, 400).mean;
    // irreducible risk: noise variance scaled by the per-sample loss weight
    double weight = 1.0 / (2.0 * radius + 2.0 * noise);
    double floor = 0.5 * weight * noise * noise;
    mean_excess_learned += (risk1000 - floor) / 3.0;
    mean_excess_oracle += (oracle_risk - floor) / 3.0;
  }
  bool monotone = improved == 3;
  bool ballpark = mean_excess_learned <= 3.0 * mean_excess_oracle;
  res.passed = monotone && ballpark;
  res.detail = fmt("risk T=10 %.4f -> T=1000 %.4f (3/3 seeds improved: %s); "
                   "excess %.4f vs oracle excess %.4f (ratio %.2f, need <= 3)",
                   risk10_mean, risk1000_mean, monotone ? "yes" : "NO", mean_excess_learned,
                   mean_excess_oracle,
                   mean_excess_learned / std::max(mean_excess_oracle, 1e-12));
  return res;
}

// ---------------------------------------------------------------- criterion 8

// Learned federated rates match the best tuned fixed rate without tuning, and
// the message ledger shows the exact advertised overheads.
inline CriterionResult federated_adaptation() {
  CriterionResult res{8, "federated-adaptation", false, ""};
  const int d = 10, rounds = 200;
  const std::vector<double> grid = {0.03, 0.1, 0.3, 1.0, 3.0};

  double aruba_post = 0.0, best_fixed = 1e300;
  std::vector<double> fixed_posts(grid.size(), 0.0);
  bool ledger_ok = true;
  long long iso_up = -1, coord_up = -1, vanilla_up = -1;

  const std::vector<std::uint64_t> seeds = {1ULL, 2ULL};
  for (std::uint64_t seed : seeds) {
    ClientPopulationSpec pop;
    pop.num_clients = 100;
    pop.d = d;
    pop.samples = 40;
    pop.train_fraction = 0.8;
    pop.dispersion = 0.5;
    pop.sample_noise = 0.2;
    pop.center = Vec::Zero(d);
    pop.center[0] = 1.0;
    pop.seed = seed;
    std::vector<Client> pool = make_clients(pop);
    auto [meta_clients, heldout] = split_clients(pool, 0.8);

    FedConfig base;
    base.clients_per_round = 10;
    base.local_steps = 10;
    base.batch_size = 10;
    base.epsilon = 0.05;
    base.zeta = 0.05;
    base.p = 1.0;

    FedConfig learned = base;
    learned.mode = FedScaleMode::per_coordinate;
    FedRunResult learned_run = run_federated(meta_clients, learned, rounds, seed);
    auto learned_recs = personalize_eval(learned_run.server, learned, heldout, 10);
    double post = 0.0;
    for (const auto& r : learned_recs) post += r.post;
    aruba_post += post / learned_recs.size() / seeds.size();

    for (size_t gi = 0; gi < grid.size(); ++gi) {
      FedConfig fixed = base;
      fixed.mode = FedScaleMode::vanilla;
      fixed.fixed_eta = grid[gi];
      FedRunResult run = run_federated(meta_clients, fixed, rounds, seed);
      auto recs = personalize_eval(run.server, fixed, heldout, 10);
      double fp = 0.0;
      for (const auto& r : recs) fp += r.post;
      fixed_posts[gi] += fp / recs.size() / seeds.size();
    }

    // bit-exact message accounting, checked on every round of all variants
    FedConfig iso = base;
    iso.mode = FedScaleMode::isotropic;
    FedRunResult iso_run = run_federated(meta_clients, iso, rounds, seed);
    FedConfig vanilla = base;
    vanilla.mode = FedScaleMode::vanilla;
    FedRunResult vanilla_run = run_federated(meta_clients, vanilla, rounds, seed);
    for (int r = 0; r < rounds; ++r) {
      const RoundRecord& ri = iso_run.server.ledger[r];
      const RoundRecord& rc = learned_run.server.ledger[r];
      const RoundRecord& rv = vanilla_run.server.ledger[r];
      ledger_ok = ledger_ok && ri.uplink_scalars == ri.clients * (d + 3LL);
      ledger_ok = ledger_ok && rc.uplink_scalars == rc.clients * (2LL * d + 1);
      ledger_ok = ledger_ok && rv.uplink_scalars == rv.clients * (d + 1LL);
      ledger_ok = ledger_ok &&
                  (ri.uplink_scalars / ri.clients - rv.uplink_scalars / rv.clients) == 2;
      ledger_ok = ledger_ok &&
                  (rc.uplink_scalars / rc.clients - rv.uplink_scalars / rv.clients) == d;
    }
    iso_up = iso_run.uplink_total;
    coord_up = learned_run.uplink_total;
    vanilla_up = vanilla_run.uplink_total;
  }
  for (double fp : fixed_posts) best_fixed = std::min(best_fixed, fp);

  bool competitive = aruba_post <= 1.10 * best_fixed;
  res.passed = competitive && ledger_ok;
  res.detail = fmt("post-refinement loss: learned %.4f vs best of 5 fixed rates %.4f "
                   "(ratio %.3f, need <= 1.10); payload/client/round: vanilla %lld, iso +2, "
                   "per-coord +%d scalars, all rounds exact: %s",
                   aruba_post, best_fixed, aruba_post / best_fixed,
                   vanilla_up >= 0 ? (d + 1LL) : -1LL, d, ledger_ok ? "yes" : "NO");
  (void)iso_up;
  (void)coord_up;
  return res;
}

// ---------------------------------------------------------------- criterion 9

// Closed forms and independent numerical routes agree with the
// implementations they shadow.
inline CriterionResult oracle_equivalences() {
  CriterionResult res{9, "oracle-equivalences", false, ""};

  // (a) lazy mirror descent vs. an independent projected-offset recurrence
  double omd_gap = 0.0;
  {
    Rng rng(911);
    for (int trial = 0; trial < 5; ++trial) {
      const int d = 4, m = 30;
      Domain dom = Domain::ball(Vec::Zero(d), 1.0);
      std::vector<LossOracle> losses;
      for (int i = 0; i < m; ++i) {
        if (i % 3 == 2) {
          losses.push_back(LossOracle::linear(0.7 * rng.on_sphere(d)));
        } else {
          losses.push_back(LossOracle::quadratic(0.9 * rng.on_sphere(d), 1.0, 4.0));
        }
      }
      Task task = make_task(losses, 4.0);
      Vec phi = 0.3 * rng.on_sphere(d);
      const double eta = 0.17;
      WithinTaskConfig cfg;
      cfg.domain = dom;
      cfg.phi = phi;
      cfg.scale = ScalarScale{eta};
      TaskTrace trace = run_task(cfg, task);

      Vec gsum = Vec::Zero(d);
      for (int i = 0; i < m; ++i) {
        Vec x = phi - eta * gsum;
        if (x.norm() > 1.0) x *= 1.0 / x.norm();
        omd_gap = std::max(omd_gap, (x - trace.iterates[i]).norm());
        gsum += task.losses[i].subgradient(x);
      }
    }
  }

  // (b) weighted Bregman mean vs. brute-force numerical minimization
  double init_gap = 0.0;
  {
    Rng rng(912);
    const int d = 3;
    Domain ball = Domain::ball(Vec::Zero(d), 1.0);
    InitConfig euclid_cfg;
    euclid_cfg.strategy = InitStrategy::ftl_mean;
    euclid_cfg.geometry = Geometry::euclidean;
    euclid_cfg.domain = ball;
    InitState euclid(euclid_cfg);
    std::vector<std::pair<Vec, double>> hist;
    for (int t = 0; t < 8; ++t) {
      Vec theta = 0.8 * rng.on_sphere(d);
      double sigma = rng.uniform(0.5, 2.0);
      hist.push_back({theta, sigma});
      euclid.update(theta, sigma);
    }
    Vec x = Vec::Zero(d);  // projected gradient descent on the weighted sum
    for (int it = 0; it < 20000; ++it) {
      Vec g = Vec::Zero(d);
      for (const auto& [theta, sigma] : hist) g += sigma * (x - theta);
      x -= 0.05 / (1.0 + 0.001 * it) * g;
      if (x.norm() > 1.0) x *= 1.0 / x.norm();
    }
    init_gap = std::max(init_gap, (euclid.phi() - x).norm());

    Domain simplex = Domain::simplex(d);
    InitConfig ent_cfg = euclid_cfg;
    ent_cfg.geometry = Geometry::negative_entropy;
    ent_cfg.domain = simplex;
    InitState entropy(ent_cfg);
    std::vector<std::pair<Vec, double>> ehist;
    for (int t = 0; t < 8; ++t) {
      Vec raw = rng.on_sphere(d).cwiseAbs() + Vec::Constant(d, 0.2);
      Vec theta = raw / raw.sum();
      double sigma = rng.uniform(0.5, 2.0);
      ehist.push_back({theta, sigma});
      entropy.update(theta, sigma);
    }
    Vec p = Vec::Constant(d, 1.0 / d);  // exponentiated gradient on the simplex
    for (int it = 0; it < 60000; ++it) {
      Vec g(d);
      double wsum = 0.0;
      for (const auto& [theta, sigma] : ehist) wsum += sigma;
      for (int j = 0; j < d; ++j) {
        double gj = 0.0;
        for (const auto& [theta, sigma] : ehist) gj += -sigma * theta[j] / p[j];
        g[j] = gj + wsum;
      }
      Vec lp = p.array().log().matrix() - 0.001 * g;
      Vec np = (lp.array() - lp.maxCoeff()).exp().matrix();
      p = np / np.sum();
    }
    init_gap = std::max(init_gap, (entropy.phi() - p).norm());
  }

  // (c) exponentially weighted scale vs. a dense trapezoid of its definition
  double ewoo_gap = 0.0;
  {
    const double eps = 0.4, diam = 1.2, lip = 1.5;
    const int m = 6;
    auto st = ScalarScaleState::eps_ewoo(eps, diam, lip, m);
    std::vector<std::pair<double, double>> obs = {{0.3, 1.2}, {0.05, 0.8}, {0.6, 1.0}};
    for (const auto& [bsq, sigma] : obs) st.observe(bsq, sigma);
    double gamma = 2.0 / (diam * lip * std::sqrt(static_cast<double>(m))) *
                   std::min(eps * eps / (diam * diam), 1.0);
    double lo = eps, hi = std::sqrt(diam * diam + eps * eps);
    auto total = [&](double v) {
      double s = 0.0;
      for (const auto& [bsq, sigma] : obs) s += ((bsq + eps * eps) / v + v) * sigma;
      return s;
    };
    const long n = 1000000;
    double num = 0.0, den = 0.0;
    for (long i = 0; i <= n; ++i) {
      double v = lo + (hi - lo) * static_cast<double>(i) / n;
      double w = (i == 0 || i == n) ? 0.5 : 1.0;
      double dens = std::exp(-gamma * total(v));
      num += w * v * dens;
      den += w * dens;
    }
    ewoo_gap = std::abs(st.v() - num / den);
  }

  // (d) hindsight optimum vs. the tie-broken closed form on quadratics
  double hindsight_gap = 0.0;
  {
    Rng rng(913);
    const int d = 3;
    Domain dom = Domain::ball(Vec::Zero(d), 0.8);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<LossOracle> losses;
      double wsum = kHindsightTieBreak;
      Vec num = Vec::Zero(d);
      int m = 3 + trial % 4;
      for (int i = 0; i < m; ++i) {
        Vec target = (trial % 2 == 0 ? 0.5 : 1.4) * rng.on_sphere(d);
        double w = rng.uniform(0.4, 2.0);
        losses.push_back(LossOracle::quadratic(target, w, 8.0));
        wsum += w;
        num += w * target;
      }
      Task task = make_task(losses, 8.0);
      Vec closed = num / wsum;
      if (closed.norm() > 0.8) closed *= 0.8 / closed.norm();
      Vec solved = hindsight_optimum(task, Geometry::euclidean, dom);
      hindsight_gap = std::max(hindsight_gap, (solved - closed).norm());
    }
  }

  bool ok = omd_gap <= 1e-12 && init_gap <= 1e-6 && ewoo_gap <= 1e-8 && hindsight_gap <= 1e-10;
  res.passed = ok;
  res.detail = fmt("mirror-descent replay %.1e (<=1e-12); bregman mean vs numeric %.1e (<=1e-6); "
                   "ewoo vs 1e6-point trapezoid %.1e (<=1e-8); hindsight vs closed form %.1e "
                   "(<=1e-10)",
                   omd_gap, init_gap, ewoo_gap, hindsight_gap);
  return res;
}

// --------------------------------------------------------------- criterion 10

// Re-running any experiment with the same config and seeds reproduces the CSV
// byte for byte, independent of worker count.
inline CriterionResult byte_determinism(const std::string& out_dir) {
  CriterionResult res{10, "byte-determinism", false, ""};
  std::vector<std::string> configs = {
      R"({"experiment":"det-static","kind":"static","seeds":[1,2],
          "env":{"dimensions":3,"tasks":40,"samples_per_task":8,"deviation":0.2,
                  "task_noise":0.1,"domain":{"shape":"ball","radius":1.0}},
          "meta":{"scale":"eps_ewoo"}})",
      R"({"experiment":"det-dynamic","kind":"dynamic","seeds":[3],
          "env":{"dimensions":2,"tasks":40,"samples_per_task":6,"deviation":0.05,
                  "domain":{"shape":"box","half_width":1.5},
                  "phases":[{"center":[-0.8,0.0],"length":20},
                             {"center":[0.8,0.0],"length":20}]},
          "meta":{"init":"ogd_dynamic","scale":"eps_ftl"}})",
      R"({"experiment":"det-geometry","kind":"geometry","seeds":[4],
          "env":{"dimensions":4,"tasks":50,"samples_per_task":8,
                  "coordinate_deviations":[1.0,0.3,0.01,0.01],
                  "domain":{"shape":"box","half_width":1.9}},
          "meta":{"scale":"per_coordinate"}})",
      R"({"experiment":"det-batch","kind":"batch","seeds":[5],
          "heldout_tasks":6,"risk_samples":80,
          "env":{"dimensions":3,"tasks":30,"samples_per_task":10,"dispersion":0.15,
                  "task_noise":0.2,"domain":{"shape":"ball","radius":1.0}},
          "meta":{"scale":"eps_ftl"}})",
      R"({"experiment":"det-federated","kind":"federated","seeds":[6],
          "federated":{"clients":12,"dimensions":4,"samples_per_client":16,
                        "dispersion":0.4,"sample_noise":0.15,"rounds":12,
                        "clients_per_round":4,"local_steps":5,"batch_size":4,
                        "epsilon":0.05,"zeta":0.05,"p":1.0,"refine_steps":5}})"};

  int checked = 0;
  bool identical = true;
  for (const std::string& text : configs) {
    ExperimentConfig cfg = parse_config(text);
    ExperimentOutcome first = run_experiment(cfg, 1);
    ExperimentOutcome second = run_experiment(cfg, 1);
    ExperimentOutcome parallel = run_experiment(cfg, 3);
    bool same = first.ok && first.csv == second.csv && first.csv == parallel.csv &&
                first.summary.dump() == second.summary.dump();
    identical = identical && same;
    ++checked;
    if (!out_dir.empty()) {
      write_experiment_files(cfg, first,
                             (std::filesystem::path(out_dir) / (cfg.id + ".csv")).string());
    }
  }
  res.passed = identical;
  res.detail = fmt("%d configs re-run twice plus a 3-worker pass: %s", checked,
                   identical ? "all CSV and summary bytes identical" : "DIVERGENCE detected");
  return res;
}

}  // namespace acceptance

inline SuiteReport run_acceptance_suite(const SuiteOptions& opt = {}) {
  SuiteReport report;
  using Fn = CriterionResult (*)();
  struct Entry {
    const char* name;
    Fn fn;
  };
  const std::vector<Entry> entries = {
      {"bound-soundness", &acceptance::bound_soundness},
      {"similarity-adaptation", &acceptance::similarity_adaptation},
      {"sim-regret-sublinear", &acceptance::sim_regret_sublinear},
      {"dynamic-tracking", &acceptance::dynamic_tracking},
      {"per-coordinate-rates", &acceptance::per_coordinate_rates},
      {"matrix-geometry", &acceptance::matrix_geometry},
      {"online-to-batch", &acceptance::online_to_batch_risk},
      {"federated-adaptation", &acceptance::federated_adaptation},
      {"oracle-equivalences", &acceptance::oracle_equivalences},
  };
  auto wanted = [&](const char* name) {
    return opt.only.empty() || std::string(name).find(opt.only) != std::string::npos;
  };
  for (const Entry& e : entries) {
    if (!wanted(e.name)) continue;
    report.results.push_back(e.fn());
  }
  if (wanted("byte-determinism")) {
    report.results.push_back(acceptance::byte_determinism(opt.out_dir));
  }
  return report;
}

}  // namespace aruba
