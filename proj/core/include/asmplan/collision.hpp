#pragma once

// Smooth growth-distance signed distance between an actuated polytope and an
// environment polytope. The distance LP
//
//   min 2 alpha   s.t.   A(q) (p, alpha) <= b(q)
//
// is solved to a fixed barrier parameter tau; Phi_tau = 2 alpha_tau and the
// contact normal n_tau = d_q g(z, q)^T lambda, g = A z - b, form the contact
// information w = (Phi_tau, n_tau) in R^8. Pose derivatives treat the four
// quaternion entries as free coordinates; off the unit sphere the rotation is
// extended by its homogeneous quadratic form.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "asmplan/geometry.hpp"
#include "asmplan/lp_solver.hpp"

namespace asmplan {

using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

/// Distance LP with a strictly interior starting point for the solver.
struct DistanceLp : LpData {
  Vec3 p_start = Vec3::Zero();
  int actuated_rows = 0;

  int rows() const { return static_cast<int>(b.size()); }
};

/// Pair of polytopes with the pose-independent row data precomputed. The
/// actuated polytope moves with the body pose q; the environment is fixed.
class ContactPair {
 public:
  ContactPair(const Polytope& actuated, const Polytope& environment);

  int rows() const { return n_act_ + n_env_; }
  int actuated_rows() const { return n_act_; }

  struct ActuatedRow {
    Vec3 g;                 // face normal rotated into the body frame
    double e = 0.0;         // g^T rho_offset
    double h = 0.0;
    std::array<Mat4, 3> B;  // u_a(xi) = xi^T B_a xi with u = R(xi) g
  };
  struct EnvironmentRow {
    Vec3 n;  // world face normal
    double b = 0.0;
  };

  const std::vector<ActuatedRow>& actuated() const { return act_; }
  const std::vector<EnvironmentRow>& environment() const { return env_; }
  const Pose& actuated_offset() const { return act_offset_; }
  const Vec3& environment_position() const { return env_position_; }

 private:
  int n_act_ = 0;
  int n_env_ = 0;
  std::vector<ActuatedRow> act_;
  std::vector<EnvironmentRow> env_;
  Pose act_offset_;
  Vec3 env_position_ = Vec3::Zero();
};

/// One ContactPair per entry of body.pairs, in order.
std::vector<ContactPair> make_contact_pairs(const BodySpec& body);

/// A(q), b(q), c = (0, 0, 0, 2); actuated rows first.
DistanceLp assemble_lp(const ContactPair& pair, const Pose& q);

/// Fixed-barrier solve of the distance LP from its interior starting point
/// (or from `warm_start` when it is strictly interior for this LP).
IpResult ip_solve(const DistanceLp& lp, const IpSettings& settings,
                  const std::optional<PrimalDual>& warm_start = std::nullopt);

struct ContactInfo {
  Vec8 w = Vec8::Zero();          // (Phi_tau, n_tau)
  std::optional<Mat87> jacobian;  // D_q w
  std::vector<Mat7> hessians;     // <s_w, D_q^2 w> per requested seed

  double phi() const { return w[0]; }
  Vec7 normal() const { return w.tail<7>(); }
};

/// Implicit-function sensitivities at a solved primal-dual point.
struct FirstOrder {
  Eigen::MatrixXd D_gamma;                   // (4 + n_g) x 7
  Mat87 D_w = Mat87::Zero();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;   // factors of d_gamma F_tau
  Eigen::MatrixXd dq_F;                      // d_q F_tau, (4 + n_g) x 7
};

/// w = (2 alpha, n) at a solved gamma.
ContactInfo contact_info(const PrimalDual& gamma, const ContactPair& pair, const Pose& q);

/// d_q F_tau at gamma; its complementarity block gives n = -d_q F^T (0, 1).
Eigen::MatrixXd kkt_pose_jacobian(const PrimalDual& gamma, const ContactPair& pair,
                                  const Pose& q);

/// Throws NumericFailure when d_gamma F_tau is singular.
FirstOrder first_derivatives(const PrimalDual& gamma, const ContactPair& pair, const Pose& q);

/// Directional Hessian <s_w, D_q^2 w>, reusing the factorization in `first`.
Mat7 second_derivatives(const PrimalDual& gamma, const ContactPair& pair, const Pose& q,
                        const FirstOrder& first, const Vec8& s_w);

/// Row scaling zeta applied to the LP as diag(zeta)^-1 (A, b); the solution
/// maps back through z = z~, lambda = diag(zeta)^-1 lambda~.
DistanceLp scale_rows(const DistanceLp& lp, const Eigen::VectorXd& zeta);
PrimalDual unscale_solution(const PrimalDual& scaled, const Eigen::VectorXd& zeta);

/// Up to settings.n_tries solves of randomly row-scaled LPs with
/// zeta ~ U[kappa_min, kappa_max]^{n_g}; returns the first that converges with
/// the mapped-back residual within 10x tolerance.
IpResult rescale_retry(const ContactPair& pair, const Pose& q, const IpSettings& settings,
                       std::uint64_t seed);

enum class DerivativeLevel { kNominal, kFirst, kSecond };

struct ContactEvaluation {
  IpStatus status = IpStatus::kNumericFailure;
  int attempts = 0;  // 1 for a nominal success, 1 + retries otherwise
  PrimalDual gamma;
  ContactInfo info;
  std::optional<FirstOrder> first;

  bool ok() const { return status == IpStatus::kConverged; }
};

/// Nominal solve, rescale retries on failure, then the requested derivatives.
/// `seeds` are the s_w directions for the second-order level.
ContactEvaluation evaluate_contact(const ContactPair& pair, const Pose& q,
                                   const IpSettings& settings, DerivativeLevel level,
                                   const std::vector<Vec8>& seeds = {},
                                   std::uint64_t rng_seed = 0);

struct ContactQuery {
  const ContactPair* pair = nullptr;
  Pose q;
  std::vector<Vec8> seeds;
};

/// Per-item evaluation, possibly in parallel; item i uses the rescale seed
/// derived from (batch_seed, i), so results do not depend on scheduling.
std::vector<ContactEvaluation> batch_contact_info(const std::vector<ContactQuery>& queries,
                                                  const IpSettings& settings,
                                                  DerivativeLevel level,
                                                  std::uint64_t batch_seed = 0);

std::uint64_t item_seed(std::uint64_t batch_seed, std::uint64_t index);

/// Worker threads for batched contact evaluation; n <= 0 keeps the default.
/// Returns the count in effect (1 without OpenMP).
int set_thread_count(int n);

}  // namespace asmplan
