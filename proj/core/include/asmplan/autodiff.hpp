#pragma once

// Forward-mode dual numbers carrying a dense gradient (Jet1) or a dense
// gradient plus Hessian (Jet2) over N local inputs. Used for the small
// algebraic pieces of the OCP (impedance law, kinematics, cost terms) whose
// exact Jacobians and Lagrangian Hessians are assembled from local blocks.

#include <cmath>

#include <Eigen/Core>

namespace asmplan::ad {

template <int N>
struct Jet1 {
  using Grad = Eigen::Matrix<double, N, 1>;

  double v = 0.0;
  Grad g = Grad::Zero();

  Jet1() = default;
  Jet1(double value) : v(value) {}  // NOLINT: implicit constant lift
  Jet1(double value, const Grad& grad) : v(value), g(grad) {}

  static Jet1 variable(double value, int index) {
    Jet1 j(value);
    j.g[index] = 1.0;
    return j;
  }
};

template <int N>
struct Jet2 {
  using Grad = Eigen::Matrix<double, N, 1>;
  using Hess = Eigen::Matrix<double, N, N>;

  double v = 0.0;
  Grad g = Grad::Zero();
  Hess h = Hess::Zero();

  Jet2() = default;
  Jet2(double value) : v(value) {}  // NOLINT: implicit constant lift

  static Jet2 variable(double value, int index) {
    Jet2 j(value);
    j.g[index] = 1.0;
    return j;
  }
};

// ---- Jet1 arithmetic -------------------------------------------------------

template <int N>
inline Jet1<N> operator+(const Jet1<N>& a, const Jet1<N>& b) {
  return {a.v + b.v, a.g + b.g};
}
template <int N>
inline Jet1<N> operator-(const Jet1<N>& a, const Jet1<N>& b) {
  return {a.v - b.v, a.g - b.g};
}
template <int N>
inline Jet1<N> operator-(const Jet1<N>& a) {
  return {-a.v, -a.g};
}
template <int N>
inline Jet1<N> operator*(const Jet1<N>& a, const Jet1<N>& b) {
  return {a.v * b.v, a.v * b.g + b.v * a.g};
}
template <int N>
inline Jet1<N> operator/(const Jet1<N>& a, const Jet1<N>& b) {
  const double inv = 1.0 / b.v;
  return {a.v * inv, (a.g - (a.v * inv) * b.g) * inv};
}
template <int N>
inline Jet1<N> operator+(const Jet1<N>& a, double b) {
  return {a.v + b, a.g};
}
template <int N>
inline Jet1<N> operator+(double a, const Jet1<N>& b) {
  return {a + b.v, b.g};
}
template <int N>
inline Jet1<N> operator-(const Jet1<N>& a, double b) {
  return {a.v - b, a.g};
}
template <int N>
inline Jet1<N> operator-(double a, const Jet1<N>& b) {
  return {a - b.v, -b.g};
}
template <int N>
inline Jet1<N> operator*(const Jet1<N>& a, double b) {
  return {a.v * b, a.g * b};
}
template <int N>
inline Jet1<N> operator*(double a, const Jet1<N>& b) {
  return {a * b.v, a * b.g};
}
template <int N>
inline Jet1<N> operator/(const Jet1<N>& a, double b) {
  return {a.v / b, a.g / b};
}
template <int N>
inline Jet1<N> sqrt(const Jet1<N>& a) {
  const double s = std::sqrt(a.v);
  return {s, a.g * (0.5 / s)};
}

// ---- Jet2 arithmetic -------------------------------------------------------

template <int N>
inline Jet2<N> operator+(const Jet2<N>& a, const Jet2<N>& b) {
  Jet2<N> r;
  r.v = a.v + b.v;
  r.g = a.g + b.g;
  r.h = a.h + b.h;
  return r;
}
template <int N>
inline Jet2<N> operator-(const Jet2<N>& a, const Jet2<N>& b) {
  Jet2<N> r;
  r.v = a.v - b.v;
  r.g = a.g - b.g;
  r.h = a.h - b.h;
  return r;
}
template <int N>
inline Jet2<N> operator-(const Jet2<N>& a) {
  Jet2<N> r;
  r.v = -a.v;
  r.g = -a.g;
  r.h = -a.h;
  return r;
}
template <int N>
inline Jet2<N> operator*(const Jet2<N>& a, const Jet2<N>& b) {
  Jet2<N> r;
  r.v = a.v * b.v;
  r.g = a.v * b.g + b.v * a.g;
  r.h.noalias() = a.v * b.h + b.v * a.h;
  r.h.noalias() += a.g * b.g.transpose();
  r.h.noalias() += b.g * a.g.transpose();
  return r;
}
template <int N>
inline Jet2<N> operator+(const Jet2<N>& a, double b) {
  Jet2<N> r = a;
  r.v += b;
  return r;
}
template <int N>
inline Jet2<N> operator+(double a, const Jet2<N>& b) {
  return b + a;
}
template <int N>
inline Jet2<N> operator-(const Jet2<N>& a, double b) {
  Jet2<N> r = a;
  r.v -= b;
  return r;
}
template <int N>
inline Jet2<N> operator-(double a, const Jet2<N>& b) {
  Jet2<N> r = -b;
  r.v += a;
  return r;
}
template <int N>
inline Jet2<N> operator*(const Jet2<N>& a, double b) {
  Jet2<N> r;
  r.v = a.v * b;
  r.g = a.g * b;
  r.h = a.h * b;
  return r;
}
template <int N>
inline Jet2<N> operator*(double a, const Jet2<N>& b) {
  return b * a;
}
template <int N>
inline Jet2<N> operator/(const Jet2<N>& a, double b) {
  return a * (1.0 / b);
}

// Smooth scalar map f applied to a Jet2 given f(v), f'(v), f''(v).
template <int N>
inline Jet2<N> chain(const Jet2<N>& a, double f, double df, double ddf) {
  Jet2<N> r;
  r.v = f;
  r.g = df * a.g;
  r.h.noalias() = df * a.h;
  r.h.noalias() += ddf * a.g * a.g.transpose();
  return r;
}

template <int N>
inline Jet2<N> sqrt(const Jet2<N>& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}

template <int N>
inline Jet2<N> reciprocal(const Jet2<N>& a) {
  const double inv = 1.0 / a.v;
  return chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

template <int N>
inline Jet2<N> operator/(const Jet2<N>& a, const Jet2<N>& b) {
  return a * reciprocal(b);
}

inline double reciprocal(double a) { return 1.0 / a; }
template <int N>
inline Jet1<N> reciprocal(const Jet1<N>& a) {
  const double inv = 1.0 / a.v;
  return {inv, (-inv * inv) * a.g};
}

// Value accessors so templated code can read the primal value of any scalar.
inline double value(double a) { return a; }
template <int N>
inline double value(const Jet1<N>& a) {
  return a.v;
}
template <int N>
inline double value(const Jet2<N>& a) {
  return a.v;
}

}  // namespace asmplan::ad
