#pragma once

// Frictionless semi-implicit Euler time stepping of one actuated rigid body
// against a static environment:
//
//   q+ = q + dt Q(q+) v+
//   v+ = v + dt M^-1 (U + sum_l n~_l lambda_l),   n~_l = Q(q~)^T n_l(q~)
//   0 <= a_l = Phi_l(q~) + dt n~_l^T v+  _|_  lambda_l >= 0
//
// with the complementarity smoothed (a_l lambda_l = sigma) or relaxed
// (a_l lambda_l <= sigma). Contact data is evaluated at the normalized pose q~.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "asmplan/collision.hpp"
#include "asmplan/geometry.hpp"
#include "asmplan/impedance.hpp"

namespace asmplan {

/// Q(q) = blockdiag(I3, 1/2 Omega(xi)); valid for any xi.
Mat76 kinematic_map(const Pose& q);

/// Omega(xi) with Omega(xi) omega = xi * (0, omega).
Mat43 quaternion_rate_matrix(const Quat& xi);

enum class ComplementarityMode { kSmoothing, kRelaxation };

const char* to_string(ComplementarityMode mode);

struct StepResiduals {
  Eigen::VectorXd H;  // pose (7), velocity (6), then a*lambda - sigma per pair (smoothing)
  Eigen::VectorXd G;  // -a, -lambda, then a*lambda - sigma (relaxation); feasible when <= 0
};

/// n~_l = Q(q~)^T n_l.
Vec6 velocity_normal(const Pose& q_normalized, const ContactInfo& contact);

/// Residuals of one step. `contacts` are evaluated at normalize_pose(x_k.q);
/// U is the total applied wrench.
StepResiduals step_residuals(const BodySpec& body, const RigidState& x_k,
                             const RigidState& x_next, const Vec6& U,
                             const Eigen::VectorXd& lambda,
                             const std::vector<ContactInfo>& contacts, double dt,
                             ComplementarityMode mode, double sigma);

/// Applied wrench as a function of the next state, with its 6 x 13 Jacobian.
struct WrenchModel {
  std::function<Vec6(const Vec13& x_next, Eigen::Matrix<double, 6, 13>* jacobian)> eval;

  static WrenchModel constant(const Vec6& U);
  /// U = J(x_r, P_x(x~_next, q_hat)) + extra, quaternions normalized inside.
  static WrenchModel impedance(const Vec13& x_r, const Pose& q_hat, const ImpedanceGains& gains,
                               const Vec6& extra = Vec6::Zero());
};

/// Impedance wrench on normalized states and its Jacobians with respect to
/// both packed states (exact, forward-mode).
Vec6 impedance_wrench_normalized(const Vec13& x_r, const Vec13& x_c, const Pose& q_hat,
                                 const ImpedanceGains& gains,
                                 Eigen::Matrix<double, 6, 13>* d_xr = nullptr,
                                 Eigen::Matrix<double, 6, 13>* d_xc = nullptr);

struct StepSettings {
  double tolerance = 1e-9;   // on ||H||_inf
  int max_iterations = 100;
  double interior_fraction = 0.9;
};

class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct StepResult {
  RigidState x_next;
  Eigen::VectorXd lambda;
  Eigen::VectorXd gaps;  // a_l at the solution
  std::vector<ContactInfo> contacts;
  int iterations = 0;
  double residual = 0.0;
};

/// Smoothed step solved by Newton's method on (x+, lambda, a) with interior
/// safeguarding of (a, lambda) and backtracking on the residual norm.
StepResult simulate_step(const BodySpec& body, const std::vector<ContactPair>& pairs,
                         const RigidState& x_k, const WrenchModel& wrench, double dt,
                         const IpSettings& collision, double sigma,
                         const StepSettings& settings = {});

struct Rollout {
  std::vector<RigidState> states;           // N + 1
  std::vector<Eigen::VectorXd> forces;      // N, per pair
  std::vector<Eigen::VectorXd> gaps;        // N, a_l per pair
  std::optional<int> failed_step;
  std::string failure;
};

/// Compliant rollout tracking `reference` (N + 1 states) through the impedance
/// law with offset q_hat; U_k = J(x_r,k+1, P_x(x_c,k+1, q_hat)) + gravity.
/// Step failures are recorded (not thrown) so partial results survive.
Rollout rollout(const BodySpec& body, const std::vector<ContactPair>& pairs,
                const RigidState& x0, const std::vector<Vec13>& reference,
                const ImpedanceGains& gains, const Pose& q_hat, double dt,
                const IpSettings& collision, double sigma, int N,
                const StepSettings& settings = {});

/// Rollout under a fixed wrench model (total applied wrench, gravity
/// included by the caller).
Rollout rollout(const BodySpec& body, const std::vector<ContactPair>& pairs,
                const RigidState& x0, const WrenchModel& wrench, double dt,
                const IpSettings& collision, double sigma, int N,
                const StepSettings& settings = {});

/// CSV: step, 13 state columns, one force and one gap column per pair.
/// A failed rollout ends with a "# failed at step k: ..." line.
void write_rollout_csv(std::ostream& os, const Rollout& r, int num_pairs);

}  // namespace asmplan
