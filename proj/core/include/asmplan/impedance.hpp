#pragma once

// Cartesian impedance law with isotropic stiffness:
//
//   J(x_r, x_c) = ( k_t (rho_r - rho_c) + D_t (nu_r - nu_c),
//                   2 eta k_r eps + D_r (omega_r - omega_c) ),
//   (eta, eps) = xi_c^-1 * xi_r.
//
// Force in the world frame, torque in the body frame.

#include <array>
#include <utility>

#include "asmplan/geometry.hpp"
#include "asmplan/quat_ops.hpp"

namespace asmplan {

struct ImpedanceGains {
  double k_t = 1.0;
  double k_r = 1.0;
  Mat3 D_t = Mat3::Zero();
  Mat3 D_r = Mat3::Zero();

  /// k_t, k_r > 0 and symmetric positive definite damping.
  void validate() const;

  /// Gains with critical_damping() for the given body.
  static ImpedanceGains critically_damped(double k_t, double k_r, const BodySpec& body);
};

/// D_t = 2 sqrt(k_t m) I, D_r = 2 sqrt(k_r i_mean) I.
std::pair<Mat3, Mat3> critical_damping(double k_t, double k_r, const BodySpec& body);

Vec6 impedance_wrench(const RigidState& x_r, const RigidState& x_c, const ImpedanceGains& gains);

/// Scalar-generic form on packed 13-vectors (rho, xi, nu, omega); inputs are
/// expected to carry unit quaternions.
template <class T>
std::array<T, 6> impedance_wrench_t(const std::array<T, 13>& xr, const std::array<T, 13>& xc,
                                    const ImpedanceGains& gains) {
  const qops::Q4<T> xi_r{xr[3], xr[4], xr[5], xr[6]};
  const qops::Q4<T> xi_c{xc[3], xc[4], xc[5], xc[6]};
  const qops::Q4<T> d = qops::mul(qops::conj(xi_c), xi_r);
  std::array<T, 6> out;
  for (int i = 0; i < 3; ++i) {
    T f = gains.k_t * (xr[i] - xc[i]);
    T t = 2.0 * gains.k_r * d[0] * d[1 + i];
    for (int j = 0; j < 3; ++j) {
      f = f + gains.D_t(i, j) * (xr[7 + j] - xc[7 + j]);
      t = t + gains.D_r(i, j) * (xr[10 + j] - xc[10 + j]);
    }
    out[i] = f;
    out[3 + i] = t;
  }
  return out;
}

/// J(N x_r, P_x(N x_c, q_hat)) where N normalizes the quaternion of a packed
/// state; this is the wrench used inside the planning problem, valid for
/// iterates whose quaternions have drifted off the unit sphere.
template <class T>
std::array<T, 6> perturbed_impedance_wrench_t(const std::array<T, 13>& xr,
                                              const std::array<T, 13>& xc, const Pose& q_hat,
                                              const ImpedanceGains& gains) {
  std::array<T, 13> r = xr;
  std::array<T, 13> c = xc;
  const qops::Q4<T> xi_r = qops::normalized(qops::Q4<T>{xr[3], xr[4], xr[5], xr[6]});
  const qops::Q4<T> xi_c = qops::normalized(qops::Q4<T>{xc[3], xc[4], xc[5], xc[6]});
  const qops::V3<double> rho_hat{q_hat.position[0], q_hat.position[1], q_hat.position[2]};
  const qops::Q4<T> xi_hat{T(q_hat.orientation[0]), T(q_hat.orientation[1]),
                           T(q_hat.orientation[2]), T(q_hat.orientation[3])};
  const qops::V3<T> shift = qops::rotate(xi_c, rho_hat);
  const qops::Q4<T> xi_p = qops::mul(xi_c, xi_hat);
  for (int i = 0; i < 4; ++i) {
    r[3 + i] = xi_r[i];
    c[3 + i] = xi_p[i];
  }
  for (int i = 0; i < 3; ++i) c[i] = xc[i] + shift[i];
  return impedance_wrench_t(r, c, gains);
}

}  // namespace asmplan
