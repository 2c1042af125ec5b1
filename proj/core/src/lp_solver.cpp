#include "asmplan/lp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asmplan/types.hpp"

namespace asmplan {

void IpSettings::validate() const {
  if (!(tau > 0.0)) throw ConfigError("IpSettings: tau must be positive");
  if (!(fraction_to_boundary > 0.0 && fraction_to_boundary < 1.0))
    throw ConfigError("IpSettings: fraction_to_boundary must lie in (0, 1)");
  if (!(kappa_min > 0.0 && kappa_max >= kappa_min))
    throw ConfigError("IpSettings: need kappa_max >= kappa_min > 0");
  if (max_iterations < 1 || n_tries < 0) throw ConfigError("IpSettings: bad iteration limits");
}

const char* to_string(IpStatus status) {
  switch (status) {
    case IpStatus::kConverged:
      return "converged";
    case IpStatus::kIterationLimit:
      return "iteration-limit";
    case IpStatus::kNumericFailure:
      return "numeric-failure";
  }
  return "unknown";
}

Eigen::VectorXd kkt_residual(const LpData& lp, const PrimalDual& gamma, double tau) {
  const Eigen::Index nz = lp.A.cols();
  const Eigen::Index ng = lp.A.rows();
  Eigen::VectorXd F(nz + ng);
  F.head(nz) = lp.c + lp.A.transpose() * gamma.lambda;
  F.tail(ng) = (gamma.lambda.array() * (lp.b - lp.A * gamma.z).array() - tau).matrix();
  return F;
}

Eigen::MatrixXd kkt_jacobian(const LpData& lp, const PrimalDual& gamma) {
  const Eigen::Index nz = lp.A.cols();
  const Eigen::Index ng = lp.A.rows();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nz + ng, nz + ng);
  J.topRightCorner(nz, ng) = lp.A.transpose();
  J.bottomLeftCorner(ng, nz) = -(gamma.lambda.asDiagonal() * lp.A);
  J.bottomRightCorner(ng, ng).diagonal() = lp.b - lp.A * gamma.z;
  return J;
}

namespace {

double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& dx, double ftb) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (dx[i] < 0.0) alpha = std::min(alpha, -ftb * x[i] / dx[i]);
  }
  return alpha;
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

IpResult solve_lp_barrier(const LpData& lp, const Eigen::VectorXd& z_start,
                          const IpSettings& settings,
                          const std::optional<PrimalDual>& warm_start) {
  const Eigen::Index nz = lp.A.cols();
  const Eigen::Index ng = lp.A.rows();
  const double tau = settings.tau;

  IpResult result;
  PrimalDual& g = result.gamma;
  g.tau = tau;

  bool warm_ok = false;
  if (warm_start && warm_start->z.size() == nz && warm_start->lambda.size() == ng) {
    const Eigen::VectorXd s = lp.b - lp.A * warm_start->z;
    warm_ok = (s.array() > 0.0).all() && (warm_start->lambda.array() > 0.0).all();
  }

  Eigen::VectorXd s;
  if (warm_ok) {
    g.z = warm_start->z;
    g.lambda = warm_start->lambda;
    s = lp.b - lp.A * g.z;
  } else {
    g.z = z_start;
    s = lp.b - lp.A * g.z;
    if (!((s.array() > 0.0).all())) {
      result.status = IpStatus::kNumericFailure;
      return result;
    }
    // Centred start: lambda_l s_l = mu0 for all rows, with mu0 chosen so the
    // multipliers carry the scale of the cost vector.
    const double mu0 = std::max(tau, lp.c.lpNorm<1>() / s.cwiseInverse().sum());
    g.lambda = (mu0 * s.cwiseInverse().array()).matrix();
  }

  const int n_total = static_cast<int>(nz + ng);
  Eigen::MatrixXd K(n_total, n_total);
  Eigen::VectorXd rhs(n_total);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;

  for (int it = 0;; ++it) {
    s = lp.b - lp.A * g.z;
    const Eigen::VectorXd rd = lp.c + lp.A.transpose() * g.lambda;
    const Eigen::VectorXd comp = (g.lambda.array() * s.array()).matrix();
    const double res = std::max(rd.lpNorm<Eigen::Infinity>(),
                                (comp.array() - tau).abs().maxCoeff());
    result.iterations = it;
    result.residual = res;
    if (!std::isfinite(res) || !all_finite(g.z) || !all_finite(g.lambda)) {
      result.status = IpStatus::kNumericFailure;
      return result;
    }
    if (res <= settings.tolerance) {
      result.status = IpStatus::kConverged;
      return result;
    }
    if (it >= settings.max_iterations) {
      result.status = IpStatus::kIterationLimit;
      return result;
    }

    // Newton matrix of F_mu: identical for predictor and corrector.
    K.setZero();
    K.topRightCorner(nz, ng) = lp.A.transpose();
    K.bottomLeftCorner(ng, nz) = -(g.lambda.asDiagonal() * lp.A);
    K.bottomRightCorner(ng, ng).diagonal() = s;
    lu.compute(K);

    const double mu = comp.mean();

    // Affine-scaling predictor.
    rhs.head(nz) = -rd;
    rhs.tail(ng) = -comp;
    Eigen::VectorXd d_aff = lu.solve(rhs);
    if (!all_finite(d_aff)) {
      result.status = IpStatus::kNumericFailure;
      return result;
    }
    const Eigen::VectorXd ds_aff = -lp.A * d_aff.head(nz);
    const Eigen::VectorXd dl_aff = d_aff.tail(ng);
    const double ap = max_step(s, ds_aff, 1.0);
    const double ad = max_step(g.lambda, dl_aff, 1.0);
    const double mu_aff =
        ((s + ap * ds_aff).array() * (g.lambda + ad * dl_aff).array()).mean();
    const double centering = std::pow(std::max(mu_aff, 0.0) / mu, 3);
    const double mu_target = std::max(centering * mu, tau);

    // Centred corrector targeting mu_target (pure Newton on F_tau once the
    // target has reached tau and the second-order term becomes negligible).
    rhs.tail(ng) = -(comp.array() + ds_aff.array() * dl_aff.array() - mu_target).matrix();
    if (mu_target <= tau && mu < 10.0 * tau) {
      rhs.tail(ng) = -(comp.array() - tau).matrix();
    }
    Eigen::VectorXd d = lu.solve(rhs);
    if (!all_finite(d)) {
      result.status = IpStatus::kNumericFailure;
      return result;
    }
    const Eigen::VectorXd ds = -lp.A * d.head(nz);
    const Eigen::VectorXd dl = d.tail(ng);
    const double ftb = settings.fraction_to_boundary;
    const double step_p = max_step(s, ds, ftb);
    const double step_d = max_step(g.lambda, dl, ftb);
    g.z += step_p * d.head(nz);
    g.lambda += step_d * dl;
  }
}

}  // namespace asmplan
