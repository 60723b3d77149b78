#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "aruba/engine.hpp"

using namespace aruba;

namespace {

EnvSpec quad_spec(int d, int m, int T, double radius, double dev, double noise) {
  EnvSpec s;
  s.d = d;
  s.m = m;
  s.num_tasks = T;
  s.domain = Domain::ball(Vec::Zero(d), radius);
  s.lipschitz = 1.0;
  s.seed = 31;
  s.deviation = dev;
  s.task_noise = noise;
  return s;
}

// Per-coordinate and full-matrix scales need a separable domain.
EnvSpec quad_box_spec(int d, int m, int T, double half_width, double dev, double noise) {
  EnvSpec s = quad_spec(d, m, T, 1.0, dev, noise);
  s.domain = Domain::box(Vec::Constant(d, -half_width), Vec::Constant(d, half_width));
  return s;
}

TaskInstance simple_instance(const Vec& target, int m, double weight, double lipschitz) {
  std::vector<LossOracle> ls;
  for (int i = 0; i < m; ++i) ls.push_back(LossOracle::quadratic(target, weight, lipschitz));
  TaskInstance inst;
  inst.task = make_task(std::move(ls), lipschitz);
  inst.optimum_center = target;
  inst.reference = target;
  inst.index = 0;
  return inst;
}

}  // namespace

TEST_CASE("a single task is its own average", "[engine]") {
  EnvSpec s = quad_spec(2, 5, 1, 1.0, 0.0, 0.3);
  s.phi_star = Vec::Zero(2);
  s.phi_star << 0.2, -0.1;
  Environment env(s);
  MetaRunConfig cfg;
  cfg.scale = ScaleMode::eps_ftl;
  MetaRunResult run = run_meta_stream(cfg, env);
  REQUIRE(run.ledger.size() == 1);
  const LedgerRow& row = run.ledger[0];
  CHECK(row.t == 1);
  CHECK(row.tar == row.regret);
  CHECK(row.rub == row.ub);
  CHECK(row.regret <= row.ub + 1e-9);
  CHECK(run.phi_history.size() == 1);
  CHECK(run.v_history.size() == 1);
  CHECK(row.phi_drift == Catch::Approx((run.phi_next - run.phi_history[0]).norm()));
}

TEST_CASE("identical tasks pin the initialization after one update", "[engine]") {
  // Three bitwise-identical tasks; every quantity below is recomputed from
  // scratch and the run must reproduce it.
  EnvSpec s = quad_spec(2, 4, 3, 1.0, 0.0, 0.0);
  s.phi_star = Vec::Zero(2);
  s.phi_star << 0.3, -0.2;
  Environment env(s);

  const double eps = 0.25, G = 1.0;
  const int m = 4;
  const double sigma = G * std::sqrt(static_cast<double>(m));
  const double D = s.domain.diameter_bound;
  CHECK(D == Catch::Approx(std::sqrt(2.0)).margin(1e-15));

  Vec star = hindsight_optimum(env.task_at(0).task, Geometry::euclidean, s.domain);
  CHECK((star - s.phi_star).norm() < 1e-6);
  double b1 = 0.5 * star.squaredNorm();  // phi_1 is the ball center

  double lo = eps, hi = std::sqrt(D * D + eps * eps);
  double v1 = 0.5 * (lo + hi);
  double u1 = b1 / (v1 / sigma) + (v1 / sigma) * G * G * m;
  double v2 = std::sqrt(b1 + eps * eps);
  CHECK(v2 > lo);
  CHECK(v2 < hi);
  double u2 = (v2 / sigma) * G * G * m;  // divergence term vanishes
  double v3 = std::sqrt((b1 + 2.0 * eps * eps) / 2.0);
  double u3 = (v3 / sigma) * G * G * m;

  MetaRunConfig cfg;
  cfg.scale = ScaleMode::eps_ftl;
  cfg.epsilon = eps;
  MetaRunResult run = run_meta_stream(cfg, env);
  REQUIRE(run.ledger.size() == 3);

  CHECK(run.v_history[0] == Catch::Approx(v1).epsilon(1e-12));
  CHECK(run.v_history[1] == Catch::Approx(v2).epsilon(1e-12));
  CHECK(run.v_history[2] == Catch::Approx(v3).epsilon(1e-12));
  CHECK(run.ledger[0].ub == Catch::Approx(u1).epsilon(1e-9));
  CHECK(run.ledger[1].ub == Catch::Approx(u2).epsilon(1e-9));
  CHECK(run.ledger[2].ub == Catch::Approx(u3).epsilon(1e-9));
  CHECK(run.ledger[2].ub < run.ledger[1].ub);

  // One update moves the initialization onto the shared optimum and keeps it.
  CHECK((run.phi_history[1] - star).norm() < 1e-15);
  CHECK((run.phi_history[2] - star).norm() < 1e-15);
  CHECK(run.ledger[1].phi_drift < 1e-15);

  double tar = (run.ledger[0].regret + run.ledger[1].regret + run.ledger[2].regret) / 3.0;
  double rub = (run.ledger[0].ub + run.ledger[1].ub + run.ledger[2].ub) / 3.0;
  CHECK(run.ledger[2].tar == Catch::Approx(tar).margin(1e-15));
  CHECK(run.ledger[2].rub == Catch::Approx(rub).margin(1e-15));
}

TEST_CASE("summary vector choices stay close on smooth tasks", "[engine]") {
  // Long tasks with strong curvature relative to the learned rate, so the
  // last iterate nearly reaches the hindsight optimum.
  EnvSpec s = quad_spec(3, 100, 50, 0.5, 0.15, 0.05);
  Environment env(s);
  MetaRunConfig a;
  a.scale = ScaleMode::eps_ftl;
  a.vector = MetaVector::optimal_action;
  MetaRunConfig b = a;
  b.vector = MetaVector::last_iterate;
  MetaRunConfig c = a;
  c.vector = MetaVector::average_iterate;
  double tar_a = run_meta_stream(a, env).ledger.back().tar;
  double tar_b = run_meta_stream(b, env).ledger.back().tar;
  double tar_c = run_meta_stream(c, env).ledger.back().tar;
  CHECK(std::abs(tar_a - tar_b) <= 0.05 * std::abs(tar_a));
  // The averaged iterate is biased toward the initialization, so it only
  // tracks the exact meta-updates loosely.
  CHECK(std::abs(tar_a - tar_c) <= 0.15 * std::abs(tar_a));
}

TEST_CASE("average regret stays below the averaged bound", "[engine]") {
  EnvSpec s = quad_box_spec(3, 10, 40, 2.0, 0.3, 0.2);
  Environment env(s);
  struct Combo {
    ScaleMode scale;
    WithinMode within;
  };
  std::vector<Combo> combos = {
      {ScaleMode::eps_ftl, WithinMode::omd_linearized},
      {ScaleMode::eps_ewoo, WithinMode::omd_linearized},
      {ScaleMode::per_coordinate, WithinMode::omd_linearized},
      {ScaleMode::isotropic, WithinMode::omd_linearized},
      {ScaleMode::full_matrix, WithinMode::omd_linearized},
      {ScaleMode::eps_ftl, WithinMode::ftrl_full},
      {ScaleMode::eps_ewoo, WithinMode::ftrl_full},
  };
  for (const auto& combo : combos) {
    MetaRunConfig cfg;
    cfg.scale = combo.scale;
    cfg.within = combo.within;
    MetaRunResult run = run_meta_stream(cfg, env);
    REQUIRE(run.ledger.size() == 40);
    for (const auto& row : run.ledger) {
      CHECK(row.regret <= row.ub + 1e-9);
      CHECK(row.tar <= row.rub + 1e-9);
      CHECK(row.eta_min > 0.0);
      CHECK(row.eta_min <= row.eta_mean);
      CHECK(row.eta_mean <= row.eta_max);
    }
  }

  SECTION("ledger columns are self-consistent") {
    MetaRunConfig cfg;
    cfg.scale = ScaleMode::eps_ftl;
    MetaRunResult run = run_meta_stream(cfg, env);
    double sr = 0.0, su = 0.0;
    for (size_t i = 0; i < run.ledger.size(); ++i) {
      sr += run.ledger[i].regret;
      su += run.ledger[i].ub;
      CHECK(run.ledger[i].tar == Catch::Approx(sr / (i + 1)).margin(1e-12));
      CHECK(run.ledger[i].rub == Catch::Approx(su / (i + 1)).margin(1e-12));
      CHECK(run.ledger[i].v == run.v_history[i]);
      Vec next = i + 1 < run.phi_history.size() ? run.phi_history[i + 1] : run.phi_next;
      CHECK(run.ledger[i].phi_drift == Catch::Approx((next - run.phi_history[i]).norm()));
    }
  }
}

TEST_CASE("simplex streams run under the entropy mirror", "[engine]") {
  Domain domain = Domain::simplex(3);
  std::vector<Vec> targets(3, Vec::Zero(3));
  targets[0] << 0.5, 0.3, 0.2;
  targets[1] << 0.6, 0.2, 0.2;
  targets[2] << 0.4, 0.4, 0.2;
  TaskSource source = [&](int t) { return simple_instance(targets[t], 2, 0.25, 0.75); };

  MetaRunConfig cfg;
  cfg.scale = ScaleMode::eps_ftl;
  cfg.geometry = Geometry::negative_entropy;
  MetaRunResult run = run_meta_stream(cfg, domain, 3, source);
  REQUIRE(run.ledger.size() == 3);
  for (const auto& row : run.ledger) {
    CHECK(row.regret <= row.ub + 1e-9);
    CHECK(row.tar <= row.rub + 1e-9);
  }
  for (const auto& phi : run.phi_history) {
    CHECK(phi.sum() == Catch::Approx(1.0).margin(1e-9));
    CHECK(phi.minCoeff() > 0.0);
  }

  SECTION("non-scalar scales are rejected off the euclidean geometry") {
    MetaRunConfig bad = cfg;
    bad.scale = ScaleMode::per_coordinate;
    CHECK_THROWS_AS(run_meta_stream(bad, domain, 3, source), UnsupportedError);
  }
}

TEST_CASE("runs regenerate bit-identically", "[engine]") {
  EnvSpec s = quad_spec(3, 8, 15, 2.0, 0.4, 0.2);
  Environment env(s);
  MetaRunConfig cfg;
  cfg.scale = ScaleMode::eps_ewoo;
  MetaRunResult a = run_meta_stream(cfg, env);
  MetaRunResult b = run_meta_stream(cfg, env);
  REQUIRE(a.ledger.size() == b.ledger.size());
  for (size_t i = 0; i < a.ledger.size(); ++i) {
    CHECK(a.ledger[i].regret == b.ledger[i].regret);
    CHECK(a.ledger[i].ub == b.ledger[i].ub);
    CHECK(a.ledger[i].v == b.ledger[i].v);
    CHECK(a.ledger[i].eta_mean == b.ledger[i].eta_mean);
    CHECK((a.phi_history[i] - b.phi_history[i]).norm() == 0.0);
  }
  CHECK((a.phi_next - b.phi_next).norm() == 0.0);
  CHECK(a.v_next == b.v_next);
}

TEST_CASE("averaged bound approaches the best fixed meta-parameters", "[engine]") {
  // min over fixed (phi, v) of the averaged bound has the closed form
  // 2 G sqrt(m) sqrt(mean_t 0.5 ||c_t - mean c||^2); the run's averaged bound
  // must settle near it.
  EnvSpec s = quad_spec(3, 10, 2000, 2.0, 0.5, 0.2);
  s.seed = 77;
  Environment env(s);

  std::vector<Vec> centers;
  centers.reserve(s.num_tasks);
  for (int t = 0; t < s.num_tasks; ++t) centers.push_back(env.task_at(t).optimum_center);
  double dev = empirical_deviation(centers);
  double grid_min = 2.0 * s.lipschitz * std::sqrt(static_cast<double>(s.m)) *
                    std::sqrt(0.5 * dev * dev);

  MetaRunConfig cfg;
  cfg.scale = ScaleMode::eps_ftl;
  MetaRunResult run = run_meta_stream(cfg, env);

  // The running average of the bound trends down; checkpoints are spaced so
  // task-level noise cannot mask the trend.
  std::vector<int> checkpoints = {10, 50, 200, 800, 2000};
  for (size_t i = 1; i < checkpoints.size(); ++i) {
    CHECK(run.ledger[checkpoints[i] - 1].rub <= run.ledger[checkpoints[i - 1] - 1].rub + 1e-9);
  }
  double final_rub = run.ledger.back().rub;
  CHECK(final_rub <= 1.15 * grid_min);
  CHECK(final_rub >= 0.95 * grid_min);
}

TEST_CASE("batch conversion averages the played states", "[engine]") {
  SECTION("frozen arithmetic") {
    MetaRunResult run;
    run.phi_history = {Vec::Zero(2), Vec::Zero(2)};
    run.phi_history[1] << 2.0, 0.0;
    run.v_history = {0.1, 0.3};
    BatchState batch = online_to_batch(run);
    CHECK(batch.phi[0] == Catch::Approx(1.0).margin(1e-15));
    CHECK(batch.phi[1] == 0.0);
    CHECK(batch.v == Catch::Approx(0.2).margin(1e-15));
  }
  SECTION("constant states are fixed points") {
    Vec phi(2);
    phi << 0.4, -0.7;
    MetaRunResult run;
    run.phi_history = {phi, phi, phi};
    run.v_history = {0.5, 0.5, 0.5};
    BatchState batch = online_to_batch(run);
    CHECK((batch.phi - phi).norm() < 1e-15);
    CHECK(batch.v == 0.5);
  }
  SECTION("empty runs are rejected") {
    MetaRunResult run;
    CHECK_THROWS_AS(online_to_batch(run), std::invalid_argument);
  }
  SECTION("the output stays in the hull of the run") {
    EnvSpec s = quad_spec(3, 6, 25, 2.0, 0.4, 0.1);
    Environment env(s);
    MetaRunConfig cfg;
    cfg.scale = ScaleMode::eps_ftl;
    MetaRunResult run = run_meta_stream(cfg, env);
    BatchState batch = online_to_batch(run);
    for (int j = 0; j < 3; ++j) {
      double lo = run.phi_history[0][j], hi = lo;
      for (const auto& phi : run.phi_history) {
        lo = std::min(lo, phi[j]);
        hi = std::max(hi, phi[j]);
      }
      CHECK(batch.phi[j] >= lo - 1e-12);
      CHECK(batch.phi[j] <= hi + 1e-12);
    }
    double vlo = run.v_history[0], vhi = run.v_history[0];
    for (double v : run.v_history) {
      vlo = std::min(vlo, v);
      vhi = std::max(vhi, v);
    }
    CHECK(batch.v >= vlo - 1e-12);
    CHECK(batch.v <= vhi + 1e-12);
  }
  SECTION("per-coordinate runs average the played rates") {
    EnvSpec s = quad_box_spec(2, 5, 7, 1.5, 0.2, 0.1);
    Environment env(s);
    MetaRunConfig cfg;
    cfg.scale = ScaleMode::per_coordinate;
    MetaRunResult run = run_meta_stream(cfg, env);
    BatchState batch = online_to_batch(run);
    REQUIRE(run.eta_history.size() == 7);
    Vec mean = Vec::Zero(2);
    for (const auto& eta : run.eta_history) mean += eta;
    mean /= 7.0;
    CHECK((batch.eta - mean).norm() < 1e-15);
  }
}

TEST_CASE("the fixed baseline keeps its parameters", "[engine]") {
  EnvSpec s = quad_spec(2, 6, 12, 1.0, 0.2, 0.1);
  Environment env(s);
  Vec phi = Vec::Zero(2);
  MetaRunResult run = run_fixed_baseline(env, phi, 0.05);
  REQUIRE(run.ledger.size() == 12);
  for (const auto& row : run.ledger) {
    CHECK(row.eta_min == 0.05);
    CHECK(row.eta_max == 0.05);
    CHECK(row.regret <= row.ub + 1e-9);
    CHECK(row.tar <= row.rub + 1e-9);
    CHECK(row.phi_drift == 0.0);
  }
  CHECK((run.phi_next - phi).norm() == 0.0);
  CHECK_THROWS_AS(run_fixed_baseline(env, phi, 0.0), std::invalid_argument);
}

TEST_CASE("practical rates separate active from quiet coordinates", "[engine]") {
  // Task optima vary along coordinate 0 with unit variance and are nearly
  // fixed elsewhere; sample noise gives the quiet coordinates a gradient
  // floor, so their rates must collapse while coordinate 0 keeps a large one.
  EnvSpec s;
  s.kind = EnvKind::coordinate_geometry;
  s.d = 10;
  s.m = 20;
  s.num_tasks = 500;
  s.domain = Domain::ball(Vec::Zero(10), 3.0);
  s.lipschitz = 1.0;
  s.seed = 5;
  s.task_noise = 0.3;
  s.coord_dev = Vec::Constant(10, std::sqrt(1e-3));
  s.coord_dev[0] = 1.0;
  Environment env(s);

  PracticalResult res = aruba_practical(env, sgd_descent, 0.05, 0.05, 1.0);
  REQUIRE(res.ledger.size() == 500);
  CHECK(res.ledger[0].eta_min == 1.0);  // first rate is epsilon / zeta
  CHECK(res.ledger[0].eta_max == 1.0);
  double quiet_max = 0.0;
  for (int j = 1; j < 10; ++j) quiet_max = std::max(quiet_max, res.eta[j]);
  CHECK(res.eta[0] >= 10.0 * quiet_max);

  SECTION("identical drift terms give a unit first rate in any dimension") {
    EnvSpec tiny = quad_spec(4, 3, 1, 1.0, 0.0, 0.1);
    Environment e2(tiny);
    PracticalResult r2 = aruba_practical(e2, sgd_descent, 0.7, 0.7, 0.4);
    CHECK(r2.ledger[0].eta_mean == 1.0);
  }
  SECTION("the trajectory is deterministic") {
    PracticalResult again = aruba_practical(env, sgd_descent, 0.05, 0.05, 1.0);
    CHECK((again.eta - res.eta).norm() == 0.0);
    CHECK((again.phi - res.phi).norm() == 0.0);
    for (size_t i = 0; i < again.ledger.size(); ++i) {
      CHECK(again.ledger[i].ub == res.ledger[i].ub);
    }
  }
}

TEST_CASE("rate refinement follows the accumulated gradients", "[engine]") {
  SECTION("frozen one-dimensional sequence") {
    Vec b = Vec::Ones(1), g = Vec::Ones(1);
    std::vector<Vec> grads(2, Vec::Ones(1));
    auto etas = aruba_plusplus_refine(b, g, 1.0, grads);
    REQUIRE(etas.size() == 3);
    CHECK(etas[0][0] == Catch::Approx(1.0).margin(1e-15));
    CHECK(etas[1][0] == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-15));
    CHECK(etas[2][0] == Catch::Approx(1.0 / std::sqrt(3.0)).margin(1e-15));
  }
  SECTION("zero gradients freeze the rate") {
    Vec b = Vec::Constant(3, 0.5), g = Vec::Constant(3, 2.0);
    std::vector<Vec> grads(5, Vec::Zero(3));
    auto etas = aruba_plusplus_refine(b, g, 2.0, grads);
    for (const auto& eta : etas) CHECK((eta - Vec::Constant(3, 0.5)).norm() == 0.0);
  }
  SECTION("rates never increase along a stream") {
    Rng rng(3);
    Vec b = Vec::Constant(4, 0.9), g = Vec::Constant(4, 0.3);
    RefineState state(b, g, 0.7);
    Vec prev = state.eta();
    for (int i = 0; i < 30; ++i) {
      state.observe(rng.normal_vec(4));
      Vec cur = state.eta();
      for (int j = 0; j < 4; ++j) CHECK(cur[j] <= prev[j] + 1e-15);
      prev = cur;
    }
  }
  SECTION("the damping must be positive") {
    Vec b = Vec::Ones(2), g = Vec::Ones(2);
    CHECK_THROWS_AS(aruba_plusplus_refine(b, g, 0.0, {}), std::invalid_argument);
    CHECK_THROWS_AS(aruba_plusplus_refine(b, g, -1.0, {}), std::invalid_argument);
    Vec bad = Vec::Zero(2);
    CHECK_THROWS_AS(RefineState(bad, g, 1.0), std::invalid_argument);
  }
}

TEST_CASE("risk estimation tracks the closed form", "[engine]") {
  SECTION("a point-mass distribution drives the excess risk to zero") {
    EnvSpec s = quad_spec(3, 25, 4, 1.0, 0.0, 0.5);
    s.kind = EnvKind::distributional;
    s.dispersion = 0.0;
    s.phi_star = Vec::Zero(3);
    s.phi_star << 0.4, 0.0, 0.0;
    Environment env(s);
    double w = s.lipschitz / (2.0 + 2.0 * s.task_noise);
    // Held-out losses are 0.5 w ||x - c - noise*s||^2 with unit-norm s, so the
    // population risk bottoms out at 0.5 w noise^2.
    double floor_risk = 0.5 * w * s.task_noise * s.task_noise;
    Vec phi = Vec::Zero(3);
    phi << -0.2, 0.3, 0.0;
    RiskEstimate coarse = transfer_risk_estimate(phi, 1.0, env, 10, 10, 4000);
    RiskEstimate fine = transfer_risk_estimate(phi, 1.0, env, 10, 200, 4000);
    CHECK(fine.mean - floor_risk <= 1e-2);
    CHECK(fine.mean - floor_risk >= -2e-3);
    CHECK(coarse.mean > fine.mean);
  }
  SECTION("deploying from the population center beats a far corner at every length") {
    EnvSpec s = quad_spec(3, 5, 4, 1.0, 0.0, 0.3);
    s.kind = EnvKind::distributional;
    s.dispersion = 0.0;
    s.phi_star = Vec::Zero(3);
    s.phi_star << 0.2, 0.1, 0.0;
    Environment env(s);
    Vec center = s.phi_star;
    Vec far(3);
    far << -0.7, -0.5, 0.0;
    for (int m : {1, 5, 25, 125}) {
      RiskEstimate good = transfer_risk_estimate(center, 0.5, env, 8, m, 2000);
      RiskEstimate bad = transfer_risk_estimate(far, 0.5, env, 8, m, 2000);
      CHECK(good.mean <= bad.mean + 1e-12);
    }
  }
  SECTION("losses that are identically zero give zero risk") {
    EnvSpec s = quad_spec(3, 5, 2, 1.0, 0.0, 0.0);
    s.kind = EnvKind::distributional;
    s.dispersion = 0.0;
    Environment env(s);
    RiskEstimate est = transfer_risk_estimate(Vec::Zero(3), 0.5, env, 4, 5, 100);
    CHECK(est.mean == 0.0);
    CHECK(est.std_error == 0.0);
  }
  SECTION("at least one test task is required") {
    EnvSpec s = quad_spec(2, 5, 2, 1.0, 0.0, 0.1);
    s.kind = EnvKind::distributional;
    Environment env(s);
    CHECK_THROWS_AS(transfer_risk_estimate(Vec::Zero(2), 0.5, env, 0, 5, 10),
                    std::invalid_argument);
  }
}

TEST_CASE("a failing task flushes the completed rows", "[engine]") {
  Domain domain = Domain::ball(Vec::Zero(2), 1.0);
  Vec target(2);
  target << 0.3, 0.1;
  TaskSource source = [&](int t) -> TaskInstance {
    if (t == 2) throw std::runtime_error("stream interrupted");
    return simple_instance(target, 3, 0.25, 1.0);
  };
  MetaRunConfig cfg;
  cfg.scale = ScaleMode::eps_ftl;
  std::vector<LedgerRow> flushed;
  CHECK_THROWS_AS(run_meta_stream(cfg, domain, 5, source, &flushed), std::runtime_error);
  REQUIRE(flushed.size() == 2);
  CHECK(flushed[0].t == 1);
  CHECK(flushed[1].t == 2);

  MetaRunConfig bad;
  bad.scale = ScaleMode::fixed_scalar;
  bad.fixed_v = 0.0;
  CHECK_THROWS_AS(run_meta_stream(bad, domain, 5, source), std::invalid_argument);
}
