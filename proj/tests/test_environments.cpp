#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "aruba/environments.hpp"
#include "aruba/hindsight.hpp"

using namespace aruba;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

EnvSpec base_spec(int d, int m, int T) {
  EnvSpec s;
  s.d = d;
  s.m = m;
  s.num_tasks = T;
  s.domain = Domain::ball(Vec::Zero(d), 2.0);
  s.lipschitz = 1.0;
  s.seed = 11;
  return s;
}

}  // namespace

TEST_CASE("clustered stream places optima around the anchor", "[environments]") {
  SECTION("zero deviation pins every optimum to the anchor") {
    EnvSpec s = base_spec(3, 4, 6);
    s.deviation = 0.0;
    Environment env(s);
    for (const auto& inst : env.stream()) {
      CHECK((inst.optimum_center - domain_origin(s.domain)).norm() == 0.0);
      Vec star = hindsight_optimum(inst.task, Geometry::euclidean, s.domain);
      CHECK((star - inst.optimum_center).norm() < 1e-7);
    }
    CHECK(env.path_length() == 0.0);
  }
  SECTION("measured deviation tracks the requested radius") {
    EnvSpec s = base_spec(5, 1, 500);
    s.deviation = 0.1;
    Environment env(s);
    std::vector<Vec> centers;
    for (const auto& inst : env.stream()) centers.push_back(inst.optimum_center);
    double dev = empirical_deviation(centers);
    CHECK(dev >= 0.08);
    CHECK(dev <= 0.12);
  }
  SECTION("centered target noise keeps the optimum exact") {
    EnvSpec s = base_spec(3, 8, 4);
    s.deviation = 0.3;
    s.task_noise = 0.5;
    Environment env(s);
    for (const auto& inst : env.stream()) {
      Vec mean = Vec::Zero(3);
      for (const auto& l : inst.task.losses) {
        mean += std::get<QuadraticLoss>(l.family()).target;
      }
      mean /= static_cast<double>(inst.task.m());
      CHECK((mean - inst.optimum_center).norm() < 1e-13);
      Vec star = hindsight_optimum(inst.task, Geometry::euclidean, s.domain);
      CHECK((star - inst.optimum_center).norm() < 1e-7);
    }
  }
  SECTION("a single short task gives a stream of length one") {
    EnvSpec s = base_spec(2, 1, 1);
    Environment env(s);
    CHECK(env.stream().size() == 1);
    CHECK(env.task_at(0).task.m() == 1);
  }
  SECTION("deviation larger than the room is rejected") {
    EnvSpec s = base_spec(2, 1, 1);
    s.deviation = 3.0;  // ball radius is 2
    CHECK_THROWS_AS(Environment(s), std::invalid_argument);
  }
}

TEST_CASE("drifting stream follows the reference path", "[environments]") {
  SECTION("single phase reduces to the clustered stream bit for bit") {
    EnvSpec stat = base_spec(3, 5, 8);
    stat.deviation = 0.2;
    stat.task_noise = 0.1;
    EnvSpec dyn = stat;
    dyn.kind = EnvKind::dynamic_drift;
    dyn.phases = {{domain_origin(stat.domain), 8}};
    Environment a(stat), b(dyn);
    CHECK(b.path_length() == 0.0);
    for (int t = 0; t < 8; ++t) {
      TaskInstance ia = a.task_at(t), ib = b.task_at(t);
      CHECK((ia.optimum_center - ib.optimum_center).norm() == 0.0);
      for (int i = 0; i < ia.task.m(); ++i) {
        const auto& qa = std::get<QuadraticLoss>(ia.task.losses[i].family());
        const auto& qb = std::get<QuadraticLoss>(ib.task.losses[i].family());
        CHECK((qa.target - qb.target).norm() == 0.0);
        CHECK(qa.weight == qb.weight);
      }
    }
  }
  SECTION("two phases give the single-jump path length") {
    EnvSpec s;
    s.kind = EnvKind::dynamic_drift;
    s.d = 2;
    s.m = 3;
    s.num_tasks = 10;
    s.domain = Domain::box(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
    s.deviation = 0.05;
    s.phases = {{vec2(-1.0, 0.0), 5}, {vec2(1.0, 0.0), 5}};
    Environment env(s);
    CHECK(env.path_length() == Catch::Approx(2.0).margin(1e-15));
    CHECK((env.reference_path()[0] - vec2(-1, 0)).norm() == 0.0);
    CHECK((env.reference_path()[9] - vec2(1, 0)).norm() == 0.0);
  }
  SECTION("walk path length equals the summed step norms") {
    EnvSpec s = base_spec(3, 1, 1000);
    s.kind = EnvKind::dynamic_drift;
    s.walk_step = 0.01;
    Environment env(s);
    double total = 0.0;
    const auto& path = env.reference_path();
    for (size_t t = 1; t < path.size(); ++t) {
      double step = (path[t] - path[t - 1]).norm();
      CHECK(step <= 0.01 + 1e-12);
      total += step;
    }
    CHECK(env.path_length() == total);
    CHECK(total > 0.0);
  }
  SECTION("invalid schedules are rejected") {
    EnvSpec s = base_spec(2, 1, 10);
    s.kind = EnvKind::dynamic_drift;
    CHECK_THROWS_AS(Environment(s), std::invalid_argument);  // neither phases nor walk
    s.phases = {{vec2(0, 0), 4}};
    CHECK_THROWS_AS(Environment(s), std::invalid_argument);  // lengths do not cover
    s.phases = {{vec2(5.0, 0.0), 10}};
    CHECK_THROWS_AS(Environment(s), std::invalid_argument);  // path exits the domain
  }
}

TEST_CASE("anisotropic stream spreads chosen coordinates", "[environments]") {
  SECTION("single active coordinate varies alone") {
    EnvSpec s = base_spec(4, 2, 40);
    s.kind = EnvKind::coordinate_geometry;
    s.coord_dev = Vec::Zero(4);
    s.coord_dev[0] = 1.0;
    Environment env(s);
    bool moved = false;
    for (const auto& inst : env.stream()) {
      for (int j = 1; j < 4; ++j) CHECK(inst.optimum_center[j] == 0.0);
      if (std::abs(inst.optimum_center[0]) > 0.2) moved = true;
    }
    CHECK(moved);
  }
  SECTION("zero deviations reduce to the fixed anchor") {
    EnvSpec s = base_spec(3, 2, 5);
    s.kind = EnvKind::coordinate_geometry;
    s.coord_dev = Vec::Zero(3);
    Environment env(s);
    for (const auto& inst : env.stream()) {
      CHECK((inst.optimum_center - domain_origin(s.domain)).norm() == 0.0);
    }
  }
  SECTION("rotated spread aligns the covariance with the rotated axis") {
    EnvSpec s = base_spec(3, 1, 500);
    s.kind = EnvKind::coordinate_geometry;
    s.coord_dev = Vec::Constant(3, 0.05);
    s.coord_dev[0] = 1.0;
    s.rotation_deg = 45.0;
    Environment env(s);
    Mat cov = Mat::Zero(3, 3);
    for (const auto& inst : env.stream()) {
      Vec c = inst.optimum_center;
      cov += c * c.transpose();
    }
    cov /= 500.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    Vec top = es.eigenvectors().col(2);
    Vec axis(3);
    axis << std::sqrt(0.5), std::sqrt(0.5), 0.0;
    double cosang = std::abs(top.dot(axis));
    CHECK(cosang >= std::cos(5.0 * M_PI / 180.0));
  }
}

TEST_CASE("sampling stream supports fresh tasks and held-out losses", "[environments]") {
  EnvSpec s = base_spec(4, 25, 10);
  s.kind = EnvKind::distributional;
  s.dispersion = 0.1;
  s.task_noise = 0.5;

  SECTION("dispersion radius closed form") {
    Environment env(s);
    CHECK(env.v_q() == Catch::Approx(std::sqrt(0.01 + 0.25 / 25.0)).margin(1e-15));
  }
  SECTION("closed form matches the sampled second moment") {
    Environment env(s);
    double acc = 0.0;
    const int n = 2000;
    for (int k = 0; k < n; ++k) {
      TaskInstance inst = env.sample_test_task(k);
      Vec erm = Vec::Zero(4);
      for (const auto& l : inst.task.losses) erm += std::get<QuadraticLoss>(l.family()).target;
      erm /= static_cast<double>(inst.task.m());
      acc += (erm - domain_origin(s.domain)).squaredNorm();
    }
    double vq2 = env.v_q() * env.v_q();
    CHECK(acc / n == Catch::Approx(vq2).epsilon(0.10));
  }
  SECTION("degenerate distribution collapses to identical tasks") {
    EnvSpec z = s;
    z.dispersion = 0.0;
    z.task_noise = 0.0;
    Environment env(z);
    TaskInstance a = env.sample_test_task(0), b = env.sample_test_task(7);
    const auto& qa = std::get<QuadraticLoss>(a.task.losses[0].family());
    const auto& qb = std::get<QuadraticLoss>(b.task.losses[3].family());
    CHECK((qa.target - qb.target).norm() == 0.0);
  }
  SECTION("train, test and held-out draws are distinct streams with a shared center") {
    Environment env(s);
    TaskInstance train = env.task_at(0);
    TaskInstance test = env.sample_test_task(0);
    const auto& qtr = std::get<QuadraticLoss>(train.task.losses[0].family());
    const auto& qte = std::get<QuadraticLoss>(test.task.losses[0].family());
    CHECK((qtr.target - qte.target).norm() > 0.0);

    auto held = env.heldout_losses(0, 400);
    Vec mean = Vec::Zero(4);
    for (const auto& l : held) mean += std::get<QuadraticLoss>(l.family()).target;
    mean /= 400.0;
    // Held-out targets average to the same task center, noise / sqrt(n) away.
    CHECK((mean - test.optimum_center).norm() < 3.0 * 0.5 / std::sqrt(400.0));
  }
}

TEST_CASE("generated losses respect the declared gradient bound", "[environments]") {
  Rng rng(99);
  std::vector<EnvSpec> specs;
  {
    EnvSpec q = base_spec(3, 10, 20);
    q.deviation = 0.5;
    q.task_noise = 0.4;
    specs.push_back(q);
    EnvSpec lg = base_spec(3, 10, 20);
    lg.family = LossFamily::logistic;
    lg.deviation = 0.5;
    lg.lipschitz = 2.0;
    specs.push_back(lg);
  }
  for (const auto& s : specs) {
    Environment env(s);
    for (int probe = 0; probe < 5000; ++probe) {
      int t = static_cast<int>(rng.next_u64() % s.num_tasks);
      TaskInstance inst = env.task_at(t);
      int i = static_cast<int>(rng.next_u64() % inst.task.m());
      Vec x = sample_point(s.domain, rng);
      CHECK(inst.task.losses[i].subgradient(x).norm() <= s.lipschitz + 1e-9);
    }
  }
}

TEST_CASE("streams regenerate bit-identically", "[environments]") {
  EnvSpec s = base_spec(4, 6, 12);
  s.deviation = 0.3;
  s.task_noise = 0.2;
  s.seed = 20260815;
  Environment a(s), b(s);
  for (int t : {0, 5, 11}) {
    TaskInstance ia = a.task_at(t), ib = b.task_at(t);
    CHECK((ia.optimum_center - ib.optimum_center).norm() == 0.0);
    for (int i = 0; i < ia.task.m(); ++i) {
      const auto& qa = std::get<QuadraticLoss>(ia.task.losses[i].family());
      const auto& qb = std::get<QuadraticLoss>(ib.task.losses[i].family());
      CHECK((qa.target - qb.target).norm() == 0.0);
    }
  }
  TaskInstance first = a.task_at(3);
  TaskInstance again = a.task_at(3);
  const auto& q1 = std::get<QuadraticLoss>(first.task.losses[2].family());
  const auto& q2 = std::get<QuadraticLoss>(again.task.losses[2].family());
  CHECK((q1.target - q2.target).norm() == 0.0);
}
