#pragma once

// Independent reference computations for the tests. Nothing here calls into
// the collision LP solver: distance LPs are assembled from box data directly,
// solved by vertex enumeration (tau = 0) or by a damped Newton method on the
// log-barrier objective (tau > 0).

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "asmplan/geometry.hpp"

namespace asmplan::testing {

inline Pose random_pose(std::mt19937_64& rng, double range) {
  std::uniform_real_distribution<double> u(-range, range);
  std::normal_distribution<double> g;
  Pose q;
  q.position = Vec3(u(rng), u(rng), u(rng));
  q.orientation = Quat(g(rng), g(rng), g(rng), g(rng)).normalized();
  return q;
}

inline Quat random_unit_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Quat(g(rng), g(rng), g(rng), g(rng)).normalized();
}

// Rotation of a (not necessarily unit) quaternion by its homogeneous
// quadratic form; equals the rotation matrix on the unit sphere.
inline Mat3 quadratic_rotation(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 R;
  R << w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z;
  return R;
}

struct BoxLp {
  Eigen::MatrixXd A;  // rows (g^T, -1)
  Eigen::VectorXd b;
  Eigen::Vector4d c = Eigen::Vector4d(0, 0, 0, 2);
};

// Growth-distance LP of an actuated box (half extents `ha`, body pose q given
// as a 7-vector with free quaternion coordinates) against a fixed world box
// (half extents `he` centered at `ce`).
inline BoxLp box_pair_lp(const Vec3& ha, const Vec7& q, const Vec3& he, const Vec3& ce) {
  const Vec3 rho = q.head<3>();
  const Mat3 R = quadratic_rotation(q.tail<4>());
  BoxLp lp;
  lp.A.resize(12, 4);
  lp.b.resize(12);
  int r = 0;
  for (int axis = 0; axis < 3; ++axis)
    for (double sign : {1.0, -1.0}) {
      // g^T R^T (p - rho) <= h + alpha
      Vec3 g = Vec3::Zero();
      g[axis] = sign;
      const Vec3 row = R * g;
      lp.A.row(r) << row.transpose(), -1.0;
      lp.b[r] = ha[axis] + row.dot(rho);
      ++r;
    }
  for (int axis = 0; axis < 3; ++axis)
    for (double sign : {1.0, -1.0}) {
      Vec3 g = Vec3::Zero();
      g[axis] = sign;
      lp.A.row(r) << g.transpose(), -1.0;
      lp.b[r] = he[axis] + g.dot(ce);
      ++r;
    }
  return lp;
}

// min c^T z s.t. A z <= b by enumerating every basis of four active rows.
inline double lp_vertex_enumeration(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                    const Eigen::Vector4d& c) {
  const int m = static_cast<int>(b.size());
  double best = std::numeric_limits<double>::infinity();
  Eigen::Matrix4d B;
  Eigen::Vector4d rhs;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      for (int k = j + 1; k < m; ++k)
        for (int l = k + 1; l < m; ++l) {
          const int idx[4] = {i, j, k, l};
          for (int r = 0; r < 4; ++r) {
            B.row(r) = A.row(idx[r]);
            rhs[r] = b[idx[r]];
          }
          Eigen::FullPivLU<Eigen::Matrix4d> lu(B);
          if (lu.rank() < 4) continue;
          const Eigen::Vector4d z = lu.solve(rhs);
          if (((A * z - b).array() > 1e-10).any()) continue;
          best = std::min(best, c.dot(z));
        }
  return best;
}

// Barrier objective c^T z - tau sum log(b - A z).
inline double barrier_value(const BoxLp& lp, const Eigen::Vector4d& z, double tau) {
  const Eigen::VectorXd s = lp.b - lp.A * z;
  if ((s.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
  return lp.c.dot(z) - tau * s.array().log().sum();
}

// Damped Newton on the barrier objective from a strictly feasible point.
inline Eigen::Vector4d barrier_minimizer(const BoxLp& lp, double tau) {
  Eigen::Vector4d z = Eigen::Vector4d::Zero();
  z[3] = (lp.A.leftCols<3>() * z.head<3>() - lp.b).maxCoeff() + 1.0;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd s = lp.b - lp.A * z;
    const Eigen::VectorXd inv = s.cwiseInverse();
    const Eigen::Vector4d grad = lp.c + tau * lp.A.transpose() * inv;
    const Eigen::Matrix4d H = tau * lp.A.transpose() * inv.cwiseAbs2().asDiagonal() * lp.A;
    const Eigen::Vector4d dz = -H.ldlt().solve(grad);
    const double decrement = -grad.dot(dz);
    if (decrement < 1e-24) break;
    double t = 1.0;
    const double f0 = barrier_value(lp, z, tau);
    while (barrier_value(lp, z + t * dz, tau) > f0 - 0.25 * t * decrement) t *= 0.5;
    z += t * dz;
  }
  return z;
}

// Central finite differences of a vector function of a 7-vector.
template <class F>
Eigen::MatrixXd central_jacobian(const F& f, const Vec7& x, double h) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), 7);
  for (int k = 0; k < 7; ++k) {
    Vec7 xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    J.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

// Scalar 1-DoF smoothed time step: body at height z with velocity v above a
// plane at gap phi = z - z_contact, applied force f, mass m. Solves
// (phi + dt v+) lambda = sigma with v+ = v + dt (f + lambda) / m in closed form.
struct ScalarStep {
  double v_next = 0.0;
  double z_next = 0.0;
  double lambda = 0.0;
};

inline ScalarStep scalar_smoothed_step(double z, double v, double z_contact, double f, double m, double dt,
                                       double sigma) {
  const double phi = z - z_contact;
  // a(lambda) = c1 + c2 lambda, with c2 = dt^2 / m
  const double c2 = dt * dt / m;
  const double c1 = phi + dt * v + dt * dt * f / m;
  const double lambda = (-c1 + std::sqrt(c1 * c1 + 4.0 * c2 * sigma)) / (2.0 * c2);
  ScalarStep s;
  s.lambda = lambda;
  s.v_next = v + dt * (f + lambda) / m;
  s.z_next = z + dt * s.v_next;
  return s;
}

}  // namespace asmplan::testing
