#pragma once

// Primal-dual interior-point solver for small dense LPs
//
//   min c^T z   s.t.   A z <= b
//
// solved only up to a fixed barrier parameter tau > 0, i.e. to a root of
//
//   F_tau(z, lambda) = [ c + A^T lambda ; diag(lambda)(b - A z) - tau 1 ]
//
// with lambda > 0 and b - A z > 0. The barrier is driven from a centred
// starting point down to tau with Mehrotra predictor-corrector steps; once the
// target is reached the same steps reduce to Newton's method on F_tau.

#include <optional>

#include <Eigen/Core>
#include <Eigen/LU>

namespace asmplan {

struct IpSettings {
  double tau = 1e-3;               // fixed target barrier parameter
  double tolerance = 1e-10;        // on ||F_tau||_inf
  int max_iterations = 50;
  double fraction_to_boundary = 0.995;
  // Rescaling retry parameters.
  double kappa_min = 1.0;
  double kappa_max = 10.0;
  int n_tries = 20;

  void validate() const;
};

enum class IpStatus {
  kConverged,
  kIterationLimit,
  kNumericFailure,
};

const char* to_string(IpStatus status);

struct LpData {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
};

/// Primal-dual iterate gamma = (z, lambda) for barrier parameter tau.
struct PrimalDual {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;
  double tau = 0.0;
};

struct IpResult {
  IpStatus status = IpStatus::kNumericFailure;
  PrimalDual gamma;
  int iterations = 0;
  double residual = 0.0;  // ||F_tau||_inf at return

  bool ok() const { return status == IpStatus::kConverged; }
};

/// F_tau(gamma) stacked as (dual residual, complementarity residual).
Eigen::VectorXd kkt_residual(const LpData& lp, const PrimalDual& gamma, double tau);

/// Jacobian d F_tau / d gamma = [0 A^T; -diag(lambda) A  diag(b - A z)].
Eigen::MatrixXd kkt_jacobian(const LpData& lp, const PrimalDual& gamma);

/// Solves the LP to barrier parameter settings.tau. `z_start` must be strictly
/// feasible (b - A z_start > 0); the multipliers start centred. A warm start,
/// when given and strictly interior, replaces the default start entirely.
IpResult solve_lp_barrier(const LpData& lp, const Eigen::VectorXd& z_start,
                          const IpSettings& settings,
                          const std::optional<PrimalDual>& warm_start = std::nullopt);

}  // namespace asmplan
