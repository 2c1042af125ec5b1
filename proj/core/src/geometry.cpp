#include "asmplan/geometry.hpp"

#include <cmath>
#include <sstream>

#include "asmplan/lp_solver.hpp"
#include "asmplan/quat_ops.hpp"

namespace asmplan {

namespace {

qops::Q4<double> to_q4(const Quat& q) { return {q[0], q[1], q[2], q[3]}; }
Quat from_q4(const qops::Q4<double>& q) { return Quat(q[0], q[1], q[2], q[3]); }

}  // namespace

Pose Pose::from_vector(const Vec7& q) {
  Pose p;
  p.position = q.head<3>();
  p.orientation = q.tail<4>();
  return p;
}

Vec7 Pose::vector() const {
  Vec7 q;
  q << position, orientation;
  return q;
}

RigidState RigidState::from_vector(const Vec13& x) {
  RigidState s;
  s.q = Pose::from_vector(x.head<7>());
  s.v = x.tail<6>();
  return s;
}

Vec13 RigidState::vector() const {
  Vec13 x;
  x << q.vector(), v;
  return x;
}

Quat quat_multiply(const Quat& a, const Quat& b) {
  return from_q4(qops::mul(to_q4(a), to_q4(b)));
}

Quat quat_conjugate(const Quat& a) { return Quat(a[0], -a[1], -a[2], -a[3]); }

Quat quat_inverse(const Quat& a) { return quat_conjugate(a) / a.squaredNorm(); }

Mat3 rotation_matrix_unchecked(const Quat& xi) {
  const auto r = qops::rotation(to_q4(xi));
  Mat3 R;
  R << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
  return R;
}

Mat3 rotation_matrix(const Quat& xi) {
  const double n = xi.norm();
  if (!(std::abs(n - 1.0) <= 1e-6)) {
    std::ostringstream os;
    os << "rotation_matrix: quaternion norm " << n << " is not 1";
    throw InvalidQuaternion(os.str());
  }
  return rotation_matrix_unchecked(xi);
}

Pose pose_perturb(const Pose& q, const Pose& offset) {
  Pose out;
  out.position = q.position + rotation_matrix(q.orientation) * offset.position;
  out.orientation = quat_multiply(q.orientation, offset.orientation);
  return out;
}

Pose pose_perturb_inverse(const Pose& q, const Pose& offset) {
  Pose out;
  out.orientation = quat_multiply(q.orientation, quat_conjugate(offset.orientation));
  out.position = q.position - rotation_matrix(out.orientation) * offset.position;
  return out;
}

RigidState state_perturb(const RigidState& x, const Pose& offset) {
  return {pose_perturb(x.q, offset), x.v};
}

RigidState state_perturb_inverse(const RigidState& x, const Pose& offset) {
  return {pose_perturb_inverse(x.q, offset), x.v};
}

Pose normalize_pose(const Pose& q) {
  const double n = q.orientation.norm();
  if (!(n > 1e-8)) throw DegeneratePose("normalize_pose: quaternion norm too small");
  return {q.position, q.orientation / n};
}

Pose world_subshape_pose(const Pose& q, const Pose& offset) { return pose_perturb(q, offset); }

Polytope Polytope::box(const Vec3& half_extents, const Pose& offset) {
  Eigen::MatrixX3d G(6, 3);
  G << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  Eigen::VectorXd h(6);
  h << half_extents[0], half_extents[0], half_extents[1], half_extents[1], half_extents[2],
      half_extents[2];
  return validate_polytope(G, h, offset);
}

Polytope validate_polytope(const Eigen::MatrixX3d& G, const Eigen::VectorXd& h,
                           const Pose& offset) {
  using Kind = PolytopeError::Kind;
  if (G.rows() != h.size() || G.rows() == 0) {
    throw PolytopeError(Kind::kShape, "polytope: G and h must be nonempty with matching rows");
  }
  if (!G.allFinite() || !h.allFinite()) {
    throw PolytopeError(Kind::kShape, "polytope: non-finite entries");
  }
  Polytope P;
  P.G_ = G;
  P.h_ = h;
  P.offset_ = offset;
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    const double n = G.row(i).norm();
    if (!(n > 1e-12)) {
      std::ostringstream os;
      os << "polytope: row " << i << " of G is zero";
      throw PolytopeError(Kind::kDegenerateFace, os.str());
    }
    // Rows already unit to rounding are left untouched so that validation is
    // idempotent bit-for-bit.
    if (std::abs(n - 1.0) > 1e-14) {
      P.G_.row(i) /= n;
      P.h_[i] /= n;
    }
  }
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    if (!(P.h_[i] > 0.0)) {
      std::ostringstream os;
      os << "polytope: h[" << i << "] = " << P.h_[i]
         << " <= 0, the origin must lie strictly inside; re-center the vertices";
      throw PolytopeError(Kind::kOriginNotInterior, os.str());
    }
  }

  LpData lp;
  lp.A = P.G_;
  lp.b = P.h_;
  IpSettings settings;
  settings.tau = 1e-6;
  settings.max_iterations = 100;
  const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(3);
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign : {-1, 1}) {
      lp.c = Eigen::VectorXd::Zero(3);
      lp.c[axis] = -sign;
      const IpResult r = solve_lp_barrier(lp, z0, settings);
      if (!r.ok() || !(r.gamma.z.norm() < 1e6)) {
        std::ostringstream os;
        os << "polytope: unbounded along " << (sign > 0 ? "+" : "-") << "xyz"[axis];
        throw PolytopeError(Kind::kUnbounded, os.str());
      }
      (sign > 0 ? P.upper_ : P.lower_)[axis] = r.gamma.z[axis];
    }
  }
  return P;
}

Polytope validate_polytope(const Polytope& P) {
  return validate_polytope(P.G(), P.h(), P.offset());
}

Mat6 BodySpec::mass_matrix() const {
  Mat6 M = Mat6::Zero();
  M.diagonal() << mass, mass, mass, inertia;
  return M;
}

Vec6 BodySpec::inverse_mass_diagonal() const {
  Vec6 d;
  d << 1.0 / mass, 1.0 / mass, 1.0 / mass, inertia.cwiseInverse();
  return d;
}

void BodySpec::validate() const {
  if (!(mass > 0.0)) throw ConfigError("body: mass must be positive");
  if (!(inertia.array() > 0.0).all()) throw ConfigError("body: inertia must be positive");
  if (pairs.empty()) throw ConfigError("body: contact pair list is empty");
  for (const auto& p : pairs) {
    if (p.actuated < 0 || p.actuated >= static_cast<int>(actuated.size()) ||
        p.environment < 0 || p.environment >= static_cast<int>(environment.size())) {
      throw ConfigError("body: contact pair references a missing polytope");
    }
  }
  if (!gravity_wrench.allFinite()) throw ConfigError("body: gravity wrench not finite");
}

}  // namespace asmplan
