#include "asmplan/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <Eigen/LU>

#include "asmplan/autodiff.hpp"

namespace asmplan {

Mat43 quaternion_rate_matrix(const Quat& xi) {
  const double w = xi[0], x = xi[1], y = xi[2], z = xi[3];
  Mat43 W;
  W << -x, -y, -z, w, -z, y, z, w, -x, -y, x, w;
  return W;
}

Mat76 kinematic_map(const Pose& q) {
  Mat76 Q = Mat76::Zero();
  Q.topLeftCorner<3, 3>().setIdentity();
  Q.bottomRightCorner<4, 3>() = 0.5 * quaternion_rate_matrix(q.orientation);
  return Q;
}

const char* to_string(ComplementarityMode mode) {
  return mode == ComplementarityMode::kSmoothing ? "smoothing" : "relaxation";
}

Vec6 velocity_normal(const Pose& q_normalized, const ContactInfo& contact) {
  return kinematic_map(q_normalized).transpose() * contact.normal();
}

StepResiduals step_residuals(const BodySpec& body, const RigidState& x_k,
                             const RigidState& x_next, const Vec6& U,
                             const Eigen::VectorXd& lambda,
                             const std::vector<ContactInfo>& contacts, double dt,
                             ComplementarityMode mode, double sigma) {
  const int m = static_cast<int>(contacts.size());
  if (lambda.size() != m) throw ConfigError("step_residuals: one force per contact required");
  const Pose q_tilde = normalize_pose(x_k.q);
  const Mat76 Qt = kinematic_map(q_tilde);

  Vec6 force = U;
  Eigen::VectorXd a(m);
  for (int l = 0; l < m; ++l) {
    const Vec6 nt = Qt.transpose() * contacts[l].normal();
    force += nt * lambda[l];
    a[l] = contacts[l].phi() + dt * nt.dot(x_next.v);
  }

  StepResiduals r;
  const bool smoothing = mode == ComplementarityMode::kSmoothing;
  r.H.resize(13 + (smoothing ? m : 0));
  r.H.head<7>() = x_next.q.vector() - x_k.q.vector() - dt * kinematic_map(x_next.q) * x_next.v;
  r.H.segment<6>(7) =
      x_next.v - x_k.v - dt * body.inverse_mass_diagonal().cwiseProduct(force);
  r.G.resize((smoothing ? 2 : 3) * m);
  r.G.head(m) = -a;
  r.G.segment(m, m) = -lambda;
  const Eigen::VectorXd comp = (a.array() * lambda.array() - sigma).matrix();
  if (smoothing) {
    r.H.tail(m) = comp;
  } else {
    r.G.tail(m) = comp;
  }
  return r;
}

Vec6 impedance_wrench_normalized(const Vec13& x_r, const Vec13& x_c, const Pose& q_hat,
                                 const ImpedanceGains& gains, Eigen::Matrix<double, 6, 13>* d_xr,
                                 Eigen::Matrix<double, 6, 13>* d_xc) {
  Vec6 out;
  if (!d_xr && !d_xc) {
    std::array<double, 13> r, c;
    for (int i = 0; i < 13; ++i) {
      r[i] = x_r[i];
      c[i] = x_c[i];
    }
    const auto J = perturbed_impedance_wrench_t(r, c, q_hat, gains);
    for (int i = 0; i < 6; ++i) out[i] = J[i];
    return out;
  }
  using Jet = ad::Jet1<26>;
  std::array<Jet, 13> r, c;
  for (int i = 0; i < 13; ++i) {
    r[i] = Jet::variable(x_r[i], i);
    c[i] = Jet::variable(x_c[i], 13 + i);
  }
  const auto J = perturbed_impedance_wrench_t(r, c, q_hat, gains);
  for (int i = 0; i < 6; ++i) {
    out[i] = J[i].v;
    if (d_xr) d_xr->row(i) = J[i].g.head<13>().transpose();
    if (d_xc) d_xc->row(i) = J[i].g.tail<13>().transpose();
  }
  return out;
}

WrenchModel WrenchModel::constant(const Vec6& U) {
  return {[U](const Vec13&, Eigen::Matrix<double, 6, 13>* jac) {
    if (jac) jac->setZero();
    return U;
  }};
}

WrenchModel WrenchModel::impedance(const Vec13& x_r, const Pose& q_hat,
                                   const ImpedanceGains& gains, const Vec6& extra) {
  return {[x_r, q_hat, gains, extra](const Vec13& x_next, Eigen::Matrix<double, 6, 13>* jac) {
    return Vec6(impedance_wrench_normalized(x_r, x_next, q_hat, gains, nullptr, jac) + extra);
  }};
}

namespace {

// xi * (0, omega) = W(omega) xi.
Mat4 right_rate_matrix(const Vec3& w) {
  Mat4 W;
  W << 0, -w[0], -w[1], -w[2],
       w[0], 0, w[2], -w[1],
       w[1], -w[2], 0, w[0],
       w[2], w[1], -w[0], 0;
  return W;
}

std::string describe(const char* what, int iterations, double residual) {
  std::ostringstream os;
  os << "simulate_step: " << what << " after " << iterations << " iterations, residual "
     << residual;
  return os.str();
}

}  // namespace

StepResult simulate_step(const BodySpec& body, const std::vector<ContactPair>& pairs,
                         const RigidState& x_k, const WrenchModel& wrench, double dt,
                         const IpSettings& collision, double sigma,
                         const StepSettings& settings) {
  if (!(sigma > 0.0) || !(dt > 0.0)) throw ConfigError("simulate_step: need sigma, dt > 0");
  const int m = static_cast<int>(pairs.size());
  const Pose q_tilde = normalize_pose(x_k.q);
  const Mat76 Qt = kinematic_map(q_tilde);
  const Vec6 minv = body.inverse_mass_diagonal();

  StepResult out;
  out.contacts.resize(m);
  Eigen::MatrixXd Nt(6, m);
  Eigen::VectorXd phi(m);
  for (int l = 0; l < m; ++l) {
    ContactEvaluation ev = evaluate_contact(pairs[l], q_tilde, collision,
                                            DerivativeLevel::kNominal, {}, item_seed(0, l));
    if (!ev.ok()) throw StepFailure("simulate_step: collision evaluation failed", -1);
    out.contacts[l] = ev.info;
    Nt.col(l) = Qt.transpose() * ev.info.normal();
    phi[l] = ev.info.phi();
  }

  const int n = 13 + 2 * m;
  Eigen::VectorXd y(n);
  y.head<7>() = x_k.q.vector() + dt * kinematic_map(x_k.q) * x_k.v;
  y.segment<6>(7) = x_k.v;
  for (int l = 0; l < m; ++l) {
    const double a0 = phi[l] + dt * Nt.col(l).dot(x_k.v);
    const double a = std::max(a0, std::sqrt(sigma));
    y[13 + m + l] = a;
    y[13 + l] = sigma / a;
  }

  Eigen::Matrix<double, 6, 13> dU;
  auto residual = [&](const Eigen::VectorXd& yy, double target, Eigen::MatrixXd* J) {
    const Vec7 q1 = yy.head<7>();
    const Vec6 v1 = yy.segment<6>(7);
    const auto lam = yy.segment(13, m);
    const auto a = yy.segment(13 + m, m);
    const Vec6 U = wrench.eval(yy.head<13>(), J ? &dU : nullptr);
    Eigen::VectorXd F(n);
    const Pose p1 = Pose::from_vector(q1);
    F.head<7>() = q1 - x_k.q.vector() - dt * kinematic_map(p1) * v1;
    F.segment<6>(7) = v1 - x_k.v - dt * minv.cwiseProduct(U + Nt * lam);
    F.segment(13, m) = a - phi - dt * Nt.transpose() * v1;
    F.segment(13 + m, m) = (a.array() * lam.array() - target).matrix();
    if (J) {
      J->setZero(n, n);
      J->topLeftCorner<7, 7>().setIdentity();
      J->block<3, 3>(0, 7) = -dt * Mat3::Identity();
      J->block<4, 4>(3, 3) -= 0.5 * dt * right_rate_matrix(v1.tail<3>());
      J->block<4, 3>(3, 10) = -0.5 * dt * quaternion_rate_matrix(p1.orientation);
      J->block<6, 6>(7, 7).setIdentity();
      J->block<6, 13>(7, 0) -= dt * minv.asDiagonal() * dU;
      J->block(7, 13, 6, m) = -dt * minv.asDiagonal() * Nt;
      J->block(13, 7, m, 6) = -dt * Nt.transpose();
      J->block(13, 13 + m, m, m).setIdentity();
      for (int l = 0; l < m; ++l) {
        (*J)(13 + m + l, 13 + l) = a[l];
        (*J)(13 + m + l, 13 + m + l) = lam[l];
      }
    }
    return F;
  };

  Eigen::MatrixXd J;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  double res = 0.0;
  for (int it = 0;; ++it) {
    const double mean_comp =
        m > 0 ? (y.segment(13, m).array() * y.segment(13 + m, m).array()).mean() : sigma;
    const double target = std::max(sigma, 0.1 * mean_comp);
    Eigen::VectorXd F = residual(y, target, &J);
    const double res_final =
        target == sigma ? F.lpNorm<Eigen::Infinity>() : residual(y, sigma, nullptr).lpNorm<Eigen::Infinity>();
    res = res_final;
    out.iterations = it;
    if (!std::isfinite(res)) throw StepFailure(describe("non-finite iterate", it, res), -1);
    if (res <= settings.tolerance) break;
    if (it >= settings.max_iterations) throw StepFailure(describe("no convergence", it, res), -1);

    lu.compute(J);
    const Eigen::VectorXd d = lu.solve(-F);
    if (!d.allFinite()) throw StepFailure(describe("singular Newton matrix", it, res), -1);
    double alpha = 1.0;
    for (int i = 13; i < n; ++i) {
      if (d[i] < 0.0) alpha = std::min(alpha, -settings.interior_fraction * y[i] / d[i]);
    }
    const double f0 = F.norm();
    for (int ls = 0; ls < 40; ++ls) {
      const Eigen::VectorXd trial = y + alpha * d;
      if (residual(trial, target, nullptr).norm() <= (1.0 - 1e-4 * alpha) * f0) break;
      alpha *= 0.5;
    }
    y += alpha * d;
  }

  out.x_next = RigidState::from_vector(y.head<13>());
  out.lambda = y.segment(13, m);
  out.gaps = y.segment(13 + m, m);
  out.residual = res;
  return out;
}

namespace {

template <class WrenchAt>
Rollout run_rollout(const BodySpec& body, const std::vector<ContactPair>& pairs, const RigidState& x0,
                    const WrenchAt& wrench_at, double dt, const IpSettings& collision, double sigma, int N,
                    const StepSettings& settings) {
  Rollout out;
  out.states.push_back(x0);
  for (int k = 0; k < N; ++k) {
    try {
      const StepResult s =
          simulate_step(body, pairs, out.states.back(), wrench_at(k), dt, collision, sigma, settings);
      out.states.push_back(s.x_next);
      out.forces.push_back(s.lambda);
      out.gaps.push_back(s.gaps);
    } catch (const Error& e) {
      out.failed_step = k;
      out.failure = e.what();
      break;
    }
  }
  return out;
}

}  // namespace

Rollout rollout(const BodySpec& body, const std::vector<ContactPair>& pairs,
                const RigidState& x0, const std::vector<Vec13>& reference,
                const ImpedanceGains& gains, const Pose& q_hat, double dt,
                const IpSettings& collision, double sigma, int N,
                const StepSettings& settings) {
  if (N < 1 || static_cast<int>(reference.size()) != N + 1) {
    throw ConfigError("rollout: reference must hold N + 1 states");
  }
  return run_rollout(
      body, pairs, x0,
      [&](int k) { return WrenchModel::impedance(reference[k + 1], q_hat, gains, body.gravity_wrench); }, dt,
      collision, sigma, N, settings);
}

Rollout rollout(const BodySpec& body, const std::vector<ContactPair>& pairs,
                const RigidState& x0, const WrenchModel& wrench, double dt,
                const IpSettings& collision, double sigma, int N,
                const StepSettings& settings) {
  if (N < 1) throw ConfigError("rollout: N must be positive");
  return run_rollout(body, pairs, x0, [&](int) -> const WrenchModel& { return wrench; }, dt, collision, sigma,
                     N, settings);
}

void write_rollout_csv(std::ostream& os, const Rollout& r, int num_pairs) {
  static const char* names[13] = {"rho_x", "rho_y", "rho_z", "xi_w", "xi_x", "xi_y", "xi_z",
                                  "nu_x",  "nu_y",  "nu_z",  "omega_x", "omega_y", "omega_z"};
  os << "step";
  for (const char* n : names) os << ',' << n;
  for (int l = 0; l < num_pairs; ++l) os << ",lambda_" << l;
  for (int l = 0; l < num_pairs; ++l) os << ",gap_" << l;
  os << '\n';
  char buf[64];
  for (std::size_t k = 0; k < r.states.size(); ++k) {
    os << k;
    const Vec13 x = r.states[k].vector();
    for (int i = 0; i < 13; ++i) {
      std::snprintf(buf, sizeof buf, ",%.17g", x[i]);
      os << buf;
    }
    // forces and gaps of the interval ending at this state; empty for step 0
    for (int block = 0; block < 2; ++block) {
      for (int l = 0; l < num_pairs; ++l) {
        if (k == 0) {
          os << ',';
          continue;
        }
        const Eigen::VectorXd& v = block == 0 ? r.forces[k - 1] : r.gaps[k - 1];
        std::snprintf(buf, sizeof buf, ",%.17g", v[l]);
        os << buf;
      }
    }
    os << '\n';
  }
  if (r.failed_step) os << "# failed at step " << *r.failed_step << ": " << r.failure << '\n';
}

}  // namespace asmplan
