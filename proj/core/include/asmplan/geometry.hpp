#pragma once

#include <utility>
#include <vector>

#include "asmplan/types.hpp"

namespace asmplan {

struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat(1.0, 0.0, 0.0, 0.0);

  static Pose identity() { return {}; }
  static Pose from_vector(const Vec7& q);
  Vec7 vector() const;
};

struct RigidState {
  Pose q;
  Vec6 v = Vec6::Zero();  // (linear velocity, body angular velocity)

  static RigidState from_vector(const Vec13& x);
  Vec13 vector() const;
};

Quat quat_multiply(const Quat& a, const Quat& b);
Quat quat_conjugate(const Quat& a);
/// Inverse for any nonzero quaternion (conjugate / squared norm).
Quat quat_inverse(const Quat& a);

/// Rotation matrix of a unit quaternion; throws InvalidQuaternion if
/// | |xi| - 1 | > 1e-6.
Mat3 rotation_matrix(const Quat& xi);

/// Homogeneous quadratic form of the rotation matrix, defined for any
/// quaternion and equal to rotation_matrix on the unit sphere.
Mat3 rotation_matrix_unchecked(const Quat& xi);

/// P_q(q, offset) = (rho + R(xi) rho_hat, xi * xi_hat).
Pose pose_perturb(const Pose& q, const Pose& offset);
/// Inverse of pose_perturb in its first argument.
Pose pose_perturb_inverse(const Pose& q, const Pose& offset);
RigidState state_perturb(const RigidState& x, const Pose& offset);
RigidState state_perturb_inverse(const RigidState& x, const Pose& offset);

/// (rho, xi / |xi|); throws DegeneratePose when |xi| <= 1e-8.
Pose normalize_pose(const Pose& q);

/// World placement of an actuated sub-polytope with parent pose q.
Pose world_subshape_pose(const Pose& q, const Pose& offset);

/// Bounded convex polytope {p : G p <= h} with unit-norm rows and h > 0,
/// placed by `offset` in its parent frame. Only constructible through
/// validate_polytope, so every instance satisfies these invariants.
class Polytope {
 public:
  const Eigen::MatrixX3d& G() const { return G_; }
  const Eigen::VectorXd& h() const { return h_; }
  const Pose& offset() const { return offset_; }
  int num_faces() const { return static_cast<int>(h_.size()); }

  /// Axis-aligned extents of {G p <= h} in the polytope frame from the
  /// boundedness LPs; barrier solutions, so they sit inside by the barrier gap.
  const Vec3& lower_extent() const { return lower_; }
  const Vec3& upper_extent() const { return upper_; }

  /// Axis-aligned box with the given half extents centered at the origin.
  static Polytope box(const Vec3& half_extents, const Pose& offset = Pose{});

 private:
  friend Polytope validate_polytope(const Eigen::MatrixX3d& G, const Eigen::VectorXd& h,
                                    const Pose& offset);
  Eigen::MatrixX3d G_;
  Eigen::VectorXd h_;
  Pose offset_;
  Vec3 lower_ = Vec3::Zero();
  Vec3 upper_ = Vec3::Zero();
};

/// Normalizes the rows of G (scaling the matching h entries), checks h > 0
/// and certifies boundedness with six axis-extent LPs. Idempotent.
Polytope validate_polytope(const Eigen::MatrixX3d& G, const Eigen::VectorXd& h,
                           const Pose& offset = Pose{});
Polytope validate_polytope(const Polytope& P);

struct ContactPairIndex {
  int actuated = 0;
  int environment = 0;
};

struct BodySpec {
  double mass = 1.0;
  Vec3 inertia = Vec3::Ones();  // body-frame principal moments about the CoM
  std::vector<Polytope> actuated;
  std::vector<Polytope> environment;
  std::vector<ContactPairIndex> pairs;
  Vec6 gravity_wrench = Vec6::Zero();

  /// blockdiag(m I3, diag(inertia)).
  Mat6 mass_matrix() const;
  Vec6 inverse_mass_diagonal() const;
  /// Throws ConfigError when mass/inertia are nonpositive, pairs are empty or
  /// reference missing polytopes.
  void validate() const;
  int num_pairs() const { return static_cast<int>(pairs.size()); }
};

}  // namespace asmplan
