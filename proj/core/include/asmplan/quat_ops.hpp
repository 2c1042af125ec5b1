#pragma once

// Scalar-generic quaternion and small-vector helpers. Quaternions are
// scalar-first (w, x, y, z) with the Hamilton product. These templates are
// instantiated with double for the public geometry API and with the jet types
// of autodiff.hpp wherever exact derivatives are assembled.

#include <array>

#include "asmplan/autodiff.hpp"

namespace asmplan::qops {

template <class T>
using V3 = std::array<T, 3>;
template <class T>
using Q4 = std::array<T, 4>;

template <class T>
Q4<T> mul(const Q4<T>& a, const Q4<T>& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

template <class T>
Q4<T> conj(const Q4<T>& a) {
  return {a[0], -a[1], -a[2], -a[3]};
}

template <class T>
T norm_sq(const Q4<T>& a) {
  return a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3];
}

template <class T>
Q4<T> normalized(const Q4<T>& a) {
  using std::sqrt;
  using ad::sqrt;
  const T inv = ad::reciprocal(sqrt(norm_sq(a)));
  return {a[0] * inv, a[1] * inv, a[2] * inv, a[3] * inv};
}

// Rotation by the homogeneous quadratic form (eta^2 - |eps|^2) v +
// 2 eps (eps . v) + 2 eta (eps x v). For unit quaternions this is R(xi) v; for
// any quaternion it equals xi (0, v) xi*, so it stays multiplicative.
template <class T, class U>
V3<T> rotate(const Q4<T>& q, const V3<U>& v) {
  const T& w = q[0];
  const T& x = q[1];
  const T& y = q[2];
  const T& z = q[3];
  const T s = w * w - x * x - y * y - z * z;
  const T d = x * v[0] + y * v[1] + z * v[2];
  const T cx = y * v[2] - z * v[1];
  const T cy = z * v[0] - x * v[2];
  const T cz = x * v[1] - y * v[0];
  return {s * v[0] + 2.0 * x * d + 2.0 * w * cx,
          s * v[1] + 2.0 * y * d + 2.0 * w * cy,
          s * v[2] + 2.0 * z * d + 2.0 * w * cz};
}

// Row-major 3x3 matrix of rotate(q, .).
template <class T>
std::array<T, 9> rotation(const Q4<T>& q) {
  const T& w = q[0];
  const T& x = q[1];
  const T& y = q[2];
  const T& z = q[3];
  const T s = w * w - x * x - y * y - z * z;
  return {s + 2.0 * x * x,       2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
          2.0 * (x * y + w * z), s + 2.0 * y * y,       2.0 * (y * z - w * x),
          2.0 * (x * z - w * y), 2.0 * (y * z + w * x), s + 2.0 * z * z};
}

// Quaternion rate xi_dot = 1/2 xi (0, omega): returns Omega(xi) omega.
template <class T, class U>
Q4<T> rate_map(const Q4<T>& xi, const V3<U>& omega) {
  const Q4<T> pure{T(0.0), T(omega[0]), T(omega[1]), T(omega[2])};
  return mul(xi, pure);
}

// Transposed map Omega(xi)^T n for a 4-vector n.
template <class T, class U>
V3<T> rate_map_transpose(const Q4<T>& xi, const Q4<U>& n) {
  const T& w = xi[0];
  const T& x = xi[1];
  const T& y = xi[2];
  const T& z = xi[3];
  // Omega(xi) = [-x -y -z; w -z y; z w -x; -y x w]
  return {-x * n[0] + w * n[1] + z * n[2] - y * n[3],
          -y * n[0] - z * n[1] + w * n[2] + x * n[3],
          -z * n[0] + y * n[1] - x * n[2] + w * n[3]};
}

}  // namespace asmplan::qops
