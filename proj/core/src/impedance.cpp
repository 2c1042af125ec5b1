#include "asmplan/impedance.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace asmplan {

namespace {

bool symmetric_positive_definite(const Mat3& D) {
  if (!D.allFinite() || (D - D.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + D.norm())) {
    return false;
  }
  return Eigen::SelfAdjointEigenSolver<Mat3>(D, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() >
         0.0;
}

std::array<double, 13> pack(const RigidState& x) {
  std::array<double, 13> a;
  const Vec13 v = x.vector();
  for (int i = 0; i < 13; ++i) a[i] = v[i];
  return a;
}

}  // namespace

void ImpedanceGains::validate() const {
  if (!(k_t > 0.0) || !(k_r > 0.0)) throw ConfigError("impedance: k_t and k_r must be positive");
  if (!symmetric_positive_definite(D_t) || !symmetric_positive_definite(D_r)) {
    throw ConfigError("impedance: damping matrices must be symmetric positive definite");
  }
}

std::pair<Mat3, Mat3> critical_damping(double k_t, double k_r, const BodySpec& body) {
  const double i_mean = body.inertia.mean();
  return {2.0 * std::sqrt(k_t * body.mass) * Mat3::Identity(),
          2.0 * std::sqrt(k_r * i_mean) * Mat3::Identity()};
}

ImpedanceGains ImpedanceGains::critically_damped(double k_t, double k_r, const BodySpec& body) {
  ImpedanceGains g;
  g.k_t = k_t;
  g.k_r = k_r;
  std::tie(g.D_t, g.D_r) = critical_damping(k_t, k_r, body);
  return g;
}

Vec6 impedance_wrench(const RigidState& x_r, const RigidState& x_c, const ImpedanceGains& gains) {
  const auto J = impedance_wrench_t<double>(pack(x_r), pack(x_c), gains);
  Vec6 out;
  for (int i = 0; i < 6; ++i) out[i] = J[i];
  return out;
}

}  // namespace asmplan
