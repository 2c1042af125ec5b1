#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "asmplan/geometry.hpp"
#include "oracles.hpp"

namespace asmplan {
namespace {

constexpr double kHalf = 0.70710678118654752440;

TEST(QuatMultiply, IdentityIsTwoSided) {
  std::mt19937_64 rng(1);
  const Quat id(1, 0, 0, 0);
  for (int i = 0; i < 20; ++i) {
    const Quat q = testing::random_unit_quaternion(rng) * 1.7;
    EXPECT_LE((quat_multiply(id, q) - q).norm(), 1e-12);
    EXPECT_LE((quat_multiply(q, id) - q).norm(), 1e-12);
  }
}

TEST(QuatMultiply, HalfTurnsAboutZCompose) {
  const Quat a(kHalf, 0, 0, kHalf);
  EXPECT_LE((quat_multiply(a, a) - Quat(0, 0, 0, 1)).norm(), 1e-15);
}

TEST(QuatMultiply, InverseAndAssociativity) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Quat a = testing::random_unit_quaternion(rng);
    const Quat b = testing::random_unit_quaternion(rng);
    const Quat c = testing::random_unit_quaternion(rng);
    EXPECT_LE((quat_multiply(a, quat_inverse(a)) - Quat(1, 0, 0, 0)).norm(), 1e-12);
    EXPECT_LE((quat_multiply(quat_multiply(a, b), c) - quat_multiply(a, quat_multiply(b, c))).norm(), 1e-12);
  }
}

TEST(RotationMatrix, KnownValues) {
  EXPECT_LE((rotation_matrix(Quat(1, 0, 0, 0)) - Mat3::Identity()).norm(), 0.0);
  const Vec3 y = rotation_matrix(Quat(kHalf, 0, 0, kHalf)) * Vec3::UnitX();
  EXPECT_LE((y - Vec3::UnitY()).norm(), 1e-15);
}

TEST(RotationMatrix, OrthogonalAndHomomorphic) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Quat a = testing::random_unit_quaternion(rng);
    const Quat b = testing::random_unit_quaternion(rng);
    const Mat3 R = rotation_matrix(a);
    EXPECT_LE((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
    EXPECT_LE((rotation_matrix(quat_multiply(a, b)) - R * rotation_matrix(b)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(RotationMatrix, RejectsNonUnit) {
  EXPECT_THROW(rotation_matrix(Quat(1.1, 0, 0, 0)), InvalidQuaternion);
  EXPECT_NO_THROW(rotation_matrix(Quat(1.0 + 5e-7, 0, 0, 0)));
}

TEST(RotationMatrix, UncheckedMatchesQuadraticForm) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const Quat q = testing::random_unit_quaternion(rng) * 1.3;
    EXPECT_LE((rotation_matrix_unchecked(q) - testing::quadratic_rotation(q)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(PosePerturb, IdentityOffsetAndTranslation) {
  std::mt19937_64 rng(5);
  const Pose q = testing::random_pose(rng, 1.0);
  const Pose p = pose_perturb(q, Pose::identity());
  EXPECT_LE((p.vector() - q.vector()).norm(), 1e-15);

  Pose offset;
  offset.position = Vec3(0.1, 0, 0);
  const Pose t = pose_perturb(Pose::identity(), offset);
  EXPECT_LE((t.position - Vec3(0.1, 0, 0)).norm(), 0.0);
  EXPECT_LE((t.orientation - Quat(1, 0, 0, 0)).norm(), 0.0);
}

TEST(PosePerturb, RoundTrip) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const Pose q = testing::random_pose(rng, 2.0);
    const Pose off = testing::random_pose(rng, 0.5);
    EXPECT_LE((pose_perturb(pose_perturb_inverse(q, off), off).vector() - q.vector()).norm(), 1e-12);
  }
}

TEST(PosePerturb, StateLiftPassesVelocity) {
  std::mt19937_64 rng(7);
  RigidState x;
  x.q = testing::random_pose(rng, 1.0);
  x.v << 1, 2, 3, 4, 5, 6;
  const Pose off = testing::random_pose(rng, 0.3);
  EXPECT_EQ(state_perturb(x, off).v, x.v);
  EXPECT_EQ(state_perturb_inverse(x, off).v, x.v);
}

TEST(NormalizePose, Examples) {
  Pose q;
  q.orientation = Quat(2, 0, 0, 0);
  EXPECT_LE((normalize_pose(q).orientation - Quat(1, 0, 0, 0)).norm(), 1e-15);
  q.orientation = Quat(1, 1, 0, 0);
  EXPECT_LE((normalize_pose(q).orientation - Quat(kHalf, kHalf, 0, 0)).norm(), 1e-15);
  q.orientation = Quat(0, 0, 0, 1e-9);
  EXPECT_THROW(normalize_pose(q), DegeneratePose);
}

TEST(WorldSubshapePose, Examples) {
  std::mt19937_64 rng(8);
  const Pose off = testing::random_pose(rng, 1.0);
  EXPECT_LE((world_subshape_pose(Pose::identity(), off).vector() - off.vector()).norm(), 1e-15);
  const Pose q = testing::random_pose(rng, 1.0);
  EXPECT_LE((world_subshape_pose(q, Pose::identity()).vector() - q.vector()).norm(), 1e-15);

  Pose rz;
  rz.position = Vec3(0.5, -0.2, 1.0);
  rz.orientation = Quat(kHalf, 0, 0, kHalf);
  Pose shift;
  shift.position = Vec3(1, 0, 0);
  EXPECT_LE((world_subshape_pose(rz, shift).position - (rz.position + Vec3(0, 1, 0))).norm(), 1e-15);
}

TEST(ValidatePolytope, UnitCubeAccepted) {
  Eigen::MatrixX3d G(6, 3);
  G << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  const Polytope P = validate_polytope(G, Eigen::VectorXd::Constant(6, 0.5));
  EXPECT_EQ(P.num_faces(), 6);
  // extents come from barrier LP solves: interior, within the barrier gap
  for (int i = 0; i < 3; ++i) {
    EXPECT_LE(P.upper_extent()[i], 0.5);
    EXPECT_GE(P.upper_extent()[i], 0.5 - 1e-5);
    EXPECT_GE(P.lower_extent()[i], -0.5);
    EXPECT_LE(P.lower_extent()[i], -0.5 + 1e-5);
  }
}

TEST(ValidatePolytope, RenormalizesRows) {
  Eigen::MatrixX3d G(6, 3);
  G << 2, 0, 0, -1, 0, 0, 0, 3, 0, 0, -1, 0, 0, 0, 1, 0, 0, -4;
  Eigen::VectorXd h(6);
  h << 1.0, 0.5, 1.5, 0.5, 0.5, 2.0;
  const Polytope P = validate_polytope(G, h);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(P.G().row(i).norm(), 1.0, 1e-12);
  EXPECT_LE((P.h() - Eigen::VectorXd::Constant(6, 0.5)).norm(), 1e-15);
}

TEST(ValidatePolytope, Idempotent) {
  Eigen::MatrixX3d G(4, 3);
  G << 1, 1, 1, -1, 0, 0, 0, -1, 0, 0, 0, -1;
  Eigen::VectorXd h(4);
  h << 1.0, 0.2, 0.3, 0.4;
  const Polytope a = validate_polytope(G, h);
  const Polytope b = validate_polytope(a);
  EXPECT_EQ(a.G(), b.G());
  EXPECT_EQ(a.h(), b.h());
  EXPECT_EQ(a.lower_extent(), b.lower_extent());
  EXPECT_EQ(a.upper_extent(), b.upper_extent());
}

PolytopeError::Kind failure_kind(const Eigen::MatrixX3d& G, const Eigen::VectorXd& h) {
  try {
    validate_polytope(G, h);
  } catch (const PolytopeError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return PolytopeError::Kind::kShape;
}

TEST(ValidatePolytope, Errors) {
  Eigen::MatrixX3d half(1, 3);
  half << 0, 0, 1;
  EXPECT_EQ(failure_kind(half, Eigen::VectorXd::Constant(1, 1.0)), PolytopeError::Kind::kUnbounded);

  Eigen::MatrixX3d G(6, 3);
  G << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  Eigen::VectorXd shifted(6);
  shifted << 2.5, -1.5, 0.5, 0.5, 0.5, 0.5;
  EXPECT_EQ(failure_kind(G, shifted), PolytopeError::Kind::kOriginNotInterior);

  Eigen::MatrixX3d zero = G;
  zero.row(2).setZero();
  EXPECT_EQ(failure_kind(zero, Eigen::VectorXd::Constant(6, 0.5)), PolytopeError::Kind::kDegenerateFace);
}

TEST(BodySpec, MassMatrixAndValidation) {
  BodySpec b;
  b.mass = 2.0;
  b.inertia = Vec3(1, 2, 3);
  b.actuated.push_back(Polytope::box(Vec3::Constant(0.5)));
  b.environment.push_back(Polytope::box(Vec3::Constant(0.5)));
  EXPECT_THROW(b.validate(), ConfigError);  // no pairs
  b.pairs.push_back({0, 0});
  EXPECT_NO_THROW(b.validate());
  Vec6 diag;
  diag << 2, 2, 2, 1, 2, 3;
  EXPECT_EQ(Vec6(b.mass_matrix().diagonal()), diag);
  b.pairs.push_back({0, 1});
  EXPECT_THROW(b.validate(), ConfigError);
}

}  // namespace
}  // namespace asmplan
