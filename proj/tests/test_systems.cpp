#include "latent_verify/systems.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <set>

using namespace lv;

namespace {

Vec v3(double a, double b, double c) {
  Vec x(3);
  x << a, b, c;
  return x;
}

// Ray marching with a fixed step; independent of the slab intersection code.
double march(const Vec& pos, double heading, const LidarEnv& env, double step = 1e-4) {
  const double dx = std::cos(heading), dy = std::sin(heading);
  for (double t = 0.0; t <= env.max_range; t += step) {
    const double x = pos[0] + t * dx, y = pos[1] + t * dy;
    if (!env.bounds.contains(x, y)) return t;
    for (const auto& o : env.obstacles)
      if (o.contains(x, y)) return t;
  }
  return env.max_range;
}

}  // namespace

TEST(Step3d, OriginFixed) { EXPECT_EQ(step_3d(v3(0, 0, 0)).norm(), 0.0); }

TEST(Step3d, ThetaAtZero) { EXPECT_NEAR(theta_3d(0.0), 0.44880, 1e-5); }

TEST(Step3d, UnitX) {
  const Vec y = step_3d(v3(1, 0, 0));
  EXPECT_NEAR(y[0], 0.6306782075316933, 1e-15);
  EXPECT_NEAR(y[1], 0.30371861738229067, 1e-15);
  EXPECT_EQ(y[2], 0.0);
}

TEST(Step3d, ContractionProperty) {
  Rng rng(7);
  const Box X = Box::cube(3, -1, 1);
  for (int i = 0; i < 1000; ++i) {
    const Vec x = X.sample(rng);
    EXPECT_LE(step_3d(x).norm(), 0.7 * x.norm() + 1e-12);
  }
}

TEST(Step6d, AgreesWithStep3dOnLiftedStates) {
  Rng rng(11);
  const Box X = Box::cube(3, -1, 1);
  for (int i = 0; i < 1000; ++i) {
    const Vec s = X.sample(rng);
    const Vec y6 = step_6d(lift_6d(s));
    const Vec y3 = step_3d(s);
    EXPECT_LE((y6.head(3) - y3).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((y6 - lift_6d(y3)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Step6d, ThirdRowLinear) {
  Vec x = lift_6d(v3(0.3, -0.2, 0.9));
  EXPECT_DOUBLE_EQ(step_6d(x)[2], 0.7 * x[2]);
}

TEST(Step6d, DomainError) {
  Vec x = Vec::Zero(6);
  x[3] = 1.5;
  EXPECT_THROW(step_6d(x), lv::DomainError);
}

TEST(Step6d, ObstacleMembership) {
  const SystemSpec s = make_nonlinear6d(true);
  const Vec x = lift_6d(v3(0.45, -0.5, 0.0));
  EXPECT_TRUE(s.in_region(s.region("unsafe"), x));
  EXPECT_FALSE(s.in_region(s.region("unsafe"), lift_6d(v3(0.0, 0.0, 0.0))));
}

TEST(Raycast, EmptyEnvironmentFarFromWalls) {
  LidarEnv env;
  env.bounds = {-100, -100, 100, 100};
  Vec p(2);
  p << 0, 0;
  const Vec r = raycast(p, env);
  for (int k = 0; k < 24; ++k) EXPECT_EQ(r[k], 5.0);
}

TEST(Raycast, WallAhead) {
  LidarEnv env;
  env.bounds = {-100, -100, 100, 100};
  env.obstacles.push_back({1.0, -1.0, 2.0, 1.0});
  Vec p(2);
  p << 0, 0;
  EXPECT_DOUBLE_EQ(raycast(p, env)[0], 1.0);
}

TEST(Raycast, SymmetricLayoutMatchesMarchingOracle) {
  LidarEnv env;
  env.obstacles.push_back({6.0, 4.3, 7.0, 5.8});
  env.obstacles.push_back({3.0, 4.3, 4.0, 5.8});
  Vec p(2);
  p << 5.0, 5.0;
  const Vec r = raycast(p, env);
  for (int k = 0; k < 24; ++k) {
    EXPECT_NEAR(r[k], march(p, beam_heading(k, 24), env), 2e-4) << "beam " << k;
    // reflection across the vertical axis maps heading h to pi - h
    const int km = (12 - k + 24) % 24;
    EXPECT_NEAR(r[k], r[km], 1e-12);
  }
}

TEST(Raycast, RangesWithinBoundsRandom) {
  const SystemSpec s = make_lidar_reach();
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Vec p = s.base_box.sample(rng);
    const Vec r = raycast(p, s.env);
    EXPECT_GE(r.minCoeff(), 0.0);
    EXPECT_LE(r.maxCoeff(), 5.0);
    for (int k = 0; k < 24; k += 5) EXPECT_NEAR(r[k], march(p, beam_heading(k, 24), s.env, 1e-3), 2e-3);
  }
}

TEST(StepLidar, AtGoalNoMotion) {
  LidarEnv env;
  Vec p(2);
  p << env.goal[0], env.goal[1];
  const Vec y = step_lidar(lidar_lift(p, env), env);
  EXPECT_NEAR((y.head(2) - p).norm(), 0.0, 1e-6);
}

TEST(StepLidar, RangesConsistent) {
  const SystemSpec s = make_lidar_reach();
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec x = s.lift(s.base_box.sample(rng));
    const Vec y = s.step(x);
    EXPECT_TRUE((y.tail(24) - raycast(y.head(2), s.env)).isZero(0.0));
    EXPECT_LE((y.head(2) - x.head(2)).norm(), s.env.dt * s.env.u_max + 1e-12);
  }
}

TEST(StepLidar, ReachesGoalInEmptyEnv) {
  LidarEnv env;
  Vec p(2);
  p << env.goal[0] - 2.0, env.goal[1];
  Vec x = lidar_lift(p, env);
  int k = 0;
  for (; k < 100; ++k) {
    if (std::hypot(x[0] - env.goal[0], x[1] - env.goal[1]) < 0.2) break;
    x = step_lidar(x, env);
  }
  EXPECT_LT(k, 100);
}

TEST(Dataset, DeterministicAndNormalized) {
  const SystemSpec s = make_nonlinear3d();
  const Dataset a = sample_dataset(s, 500, 42), b = sample_dataset(s, 500, 42);
  EXPECT_TRUE(a.x == b.x);
  EXPECT_TRUE(a.xp == b.xp);
  const Normalizer nz = s.normalizer();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    EXPECT_LE(a.x.col(i).norm(), 1.0);
    const Vec raw = nz.invert(a.x.col(i));
    EXPECT_LE((a.xp.col(i) - nz.apply(step_3d(raw))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Dataset, LidarNormalized) {
  const SystemSpec s = make_lidar_reach();
  const Dataset a = sample_dataset(s, 200, 1);
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_LE(a.x.col(i).norm(), 1.0 + 1e-12);
}

TEST(Dataset, SplitSizes) {
  const Dataset d = sample_dataset(make_nonlinear3d(), 1000, 1);
  const auto parts = split_dataset(d, 0.5, 0.4, 0.1);
  EXPECT_EQ(parts[0].size(), 500);
  EXPECT_EQ(parts[1].size(), 400);
  EXPECT_EQ(parts[2].size(), 100);
  std::set<std::vector<double>> seen;
  for (const auto& p : parts)
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      std::vector<double> key(p.x.col(i).data(), p.x.col(i).data() + 3);
      EXPECT_TRUE(seen.insert(key).second);
    }
  EXPECT_THROW(split_dataset(d, 0.6, 0.4, 0.1), InvalidFractions);
  EXPECT_THROW(split_dataset(d, 0.0, 0.4, 0.1), InvalidFractions);
}

TEST(Dataset, CsvRoundTripExact) {
  const Dataset d = sample_dataset(make_nonlinear6d(false), 50, 9);
  const auto path = (std::filesystem::temp_directory_path() / "lv_ds_test.csv").string();
  write_dataset_csv(d, path);
  const Dataset e = read_dataset_csv(path);
  EXPECT_TRUE(d.x == e.x);
  EXPECT_TRUE(d.xp == e.xp);
  std::remove(path.c_str());
}

TEST(Regions, ComplementBoxesCoverExactly) {
  const Box X = Box::cube(3, -1, 1);
  const Box r = Box::cube(3, -0.2, 0.2);
  const auto parts = complement_boxes(X, r);
  EXPECT_EQ(parts.size(), 6u);
  Rng rng(2);
  for (int i = 0; i < 20000; ++i) {
    const Vec x = X.sample(rng);
    bool in_part = false;
    for (const auto& p : parts) in_part = in_part || p.contains(x);
    EXPECT_TRUE(in_part || r.contains(x));
    if (!r.contains(x)) EXPECT_TRUE(in_part);
  }
}

TEST(Systems, ValidateRejectsBadRegion) {
  SystemSpec s = make_nonlinear3d();
  s.regions.push_back({"bad", Box::cube(3, 0.5, 1.5), false});
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_NO_THROW(make_lidar_two_goals().validate());
}
