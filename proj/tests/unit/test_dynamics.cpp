#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "asmplan/dynamics.hpp"
#include "oracles.hpp"

namespace asmplan {
namespace {

TEST(KinematicMap, IdentityBlocks) {
  const Mat76 Q = kinematic_map(Pose::identity());
  Mat76 expected = Mat76::Zero();
  expected.topLeftCorner<3, 3>().setIdentity();
  expected.bottomRightCorner<3, 3>() = 0.5 * Mat3::Identity();
  EXPECT_EQ(Q, expected);
}

TEST(KinematicMap, RateMatrixIsQuaternionProduct) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 50; ++i) {
    const Quat xi = testing::random_unit_quaternion(rng);
    const Vec3 w(u(rng), u(rng), u(rng));
    const Mat43 O = quaternion_rate_matrix(xi);
    EXPECT_LE((O * w - quat_multiply(xi, Quat(0, w[0], w[1], w[2]))).norm(), 1e-14);
    EXPECT_LE((O.transpose() * O - Mat3::Identity()).norm(), 1e-12);
    EXPECT_LE((O.transpose() * xi).norm(), 1e-14);
  }
}

// Small box above a wide slab whose top face is z = 0.
struct DropScene {
  BodySpec body;
  std::vector<ContactPair> pairs;
  IpSettings collision;
  static constexpr double kHalf = 0.02;

  DropScene() {
    body.mass = 1.0;
    body.inertia = Vec3::Constant(1e6);  // suppress rotation from edge contacts
    body.actuated.push_back(Polytope::box(Vec3::Constant(kHalf)));
    Pose slab;
    slab.position = Vec3(0, 0, -0.5);
    body.environment.push_back(Polytope::box(Vec3(1, 1, 0.5), slab));
    body.pairs.push_back({0, 0});
    pairs = make_contact_pairs(body);
    collision.tau = 1e-12;
  }
};

TEST(SimulateStep, CubeDropMatchesScalarOracle) {
  DropScene s;
  const double dt = 0.01, sigma = 1e-3, f = -9.81;
  RigidState x;
  x.q.position = Vec3(0, 0, 0.05);
  Vec6 U = Vec6::Zero();
  U[2] = f;
  double z = 0.05, v = 0.0;
  for (int k = 0; k < 40; ++k) {
    StepSettings tight;
    tight.tolerance = 1e-12;  // the default residual tolerance bounds lambda only to ~1e-9 / sigma
    const StepResult r = simulate_step(s.body, s.pairs, x, WrenchModel::constant(U), dt, s.collision, sigma, tight);
    const auto o = testing::scalar_smoothed_step(z, v, DropScene::kHalf, f, 1.0, dt, sigma);
    z = o.z_next;
    v = o.v_next;
    EXPECT_NEAR(r.x_next.q.position.z(), z, 1e-8) << "step " << k;
    EXPECT_NEAR(r.x_next.v[2], v, 1e-8) << "step " << k;
    EXPECT_NEAR(r.lambda[0], o.lambda, 1e-8 * std::max(1.0, o.lambda)) << "step " << k;
    EXPECT_LE(r.residual, 1e-12);
    x = r.x_next;
  }
}


// Zero applied wrench, approaching the slab at 1 m/s. The smoothed force
// sigma / a keeps pushing after the gap closes, so kinetic energy can rise
// within a step; over the contact episode it is dissipated, and the rebound
// energy shrinks linearly with sigma.
TEST(Rollout, ContactEpisodeDissipatesWithZeroWrench) {
  DropScene s;
  StepSettings tight;
  tight.tolerance = 1e-12;
  const double dt = 0.01;
  RigidState x0;
  x0.q.position = Vec3(0, 0, 0.05);
  x0.v[2] = -1.0;
  std::vector<double> ratio;
  for (double sigma : {1e-2, 1e-3, 1e-4}) {
    const Rollout r = rollout(s.body, s.pairs, x0, WrenchModel::constant(Vec6::Zero()), dt, s.collision, sigma, 40,
                              tight);
    ASSERT_FALSE(r.failed_step) << r.failure;
    double z = 0.05, v = -1.0;
    for (int k = 0; k < 40; ++k) {
      const auto o = testing::scalar_smoothed_step(z, v, DropScene::kHalf, 0.0, 1.0, dt, sigma);
      z = o.z_next;
      v = o.v_next;
      EXPECT_NEAR(r.states[k + 1].v[2], v, 1e-8) << "sigma " << sigma << " step " << k;
    }
    const double v_end = r.states.back().v[2];
    EXPECT_GT(v_end, 0.0);  // moving away, contact released
    ratio.push_back(v_end * v_end);
  }
  EXPECT_LT(ratio[0], 1.0);
  EXPECT_NEAR(ratio[0] / ratio[1], 10.0, 2.0);
  EXPECT_NEAR(ratio[1] / ratio[2], 10.0, 2.0);
}

TEST(SimulateStep, RestingGapScalesWithSigma) {
  DropScene s;
  Vec6 U = Vec6::Zero();
  U[2] = -9.81;
  std::vector<double> gaps;
  for (double sigma : {1e-2, 1e-3, 1e-4}) {
    RigidState x0;
    x0.q.position = Vec3(0, 0, 0.05);
    const Rollout r = rollout(s.body, s.pairs, x0, WrenchModel::constant(U), 0.01, s.collision, sigma, 200);
    ASSERT_FALSE(r.failed_step.has_value()) << r.failure;
    // at rest the contact force carries the weight, so a = sigma / (m g)
    EXPECT_NEAR(r.gaps.back()[0], sigma / 9.81, 1e-3 * sigma);
    EXPECT_GE(r.states.back().v[2], -1e-6);
    gaps.push_back(r.gaps.back()[0]);
  }
  EXPECT_NEAR(gaps[0] / gaps[1], 10.0, 0.5);
  EXPECT_NEAR(gaps[1] / gaps[2], 10.0, 0.5);
}

TEST(SimulateStep, FreeFlightHasNoGyroscopicTerm) {
  DropScene s;
  s.body.inertia = Vec3(0.1, 0.2, 0.3);
  RigidState x;
  x.q.position = Vec3(0, 0, 0.5);
  x.v << 0, 0, 0, 1.0, 2.0, 3.0;
  const StepResult r = simulate_step(s.body, s.pairs, x, WrenchModel::constant(Vec6::Zero()), 0.01, s.collision, 1e-8);
  EXPECT_LE((r.x_next.v.tail<3>() - x.v.tail<3>()).norm(), 1e-9);
}

TEST(StepResiduals, FreeFlightExactStep) {
  DropScene s;
  RigidState x;
  x.q.position = Vec3(0, 0, 0.5);
  x.v << 0.1, 0, -0.2, 0, 0, 0;
  const double dt = 0.01, sigma = 1e-3;
  Vec6 U = Vec6::Zero();
  U[2] = -9.81;
  RigidState next = x;
  next.v[2] += dt * U[2];
  next.q.position += dt * next.v.head<3>();
  std::vector<ContactInfo> contacts{
      evaluate_contact(s.pairs[0], normalize_pose(x.q), s.collision, DerivativeLevel::kNominal).info};
  const Eigen::VectorXd lambda = Eigen::VectorXd::Zero(1);

  const StepResiduals sm = step_residuals(s.body, x, next, U, lambda, contacts, dt, ComplementarityMode::kSmoothing, sigma);
  ASSERT_EQ(sm.H.size(), 14);
  EXPECT_LE(sm.H.head<13>().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(sm.H[13], -sigma, 1e-15);

  const StepResiduals rx = step_residuals(s.body, x, next, U, lambda, contacts, dt, ComplementarityMode::kRelaxation, sigma);
  EXPECT_LE(rx.H.head<13>().cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(rx.G.maxCoeff(), 0.0);
}

TEST(Rollout, CsvFailureLine) {
  Rollout r;
  r.states.resize(2);
  r.forces.push_back(Eigen::VectorXd::Zero(1));
  r.gaps.push_back(Eigen::VectorXd::Ones(1));
  r.failed_step = 1;
  r.failure = "no convergence";
  std::ostringstream os;
  write_rollout_csv(os, r, 1);
  EXPECT_NE(os.str().find("# failed at step 1"), std::string::npos);
}

TEST(Rollout, RejectsEmptyHorizon) {
  DropScene s;
  EXPECT_THROW(rollout(s.body, s.pairs, RigidState{}, WrenchModel::constant(Vec6::Zero()), 0.01, s.collision, 1e-3, 0),
               ConfigError);
}

}  // namespace
}  // namespace asmplan
