#pragma once

// Primal-dual interior-point solver for sparse NLPs of the form
//
//   min f(x)   s.t.   c(x) = 0,   d(x) >= 0,   x_i >= l_i  (i in bounded set)
//
// Inequalities are slacked (d(x) - s = 0, s >= 0) and handled together with
// the bounds by a log-barrier whose parameter decreases monotonically. Each
// iteration solves the reduced primal-dual Newton system with a sparse LDL^T
// factorization, corrects its inertia by regularization, and globalizes with
// a filter line search (second-order corrections, feasibility restoration).

#include <functional>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace asmplan {

using SpMat = Eigen::SparseMatrix<double>;

enum class HessianMode { kExact, kGaussNewton, kLbfgs };

const char* to_string(HessianMode mode);
/// Accepts "exact", "gauss-newton"/"gn", "lbfgs"; throws ConfigError otherwise.
HessianMode parse_hessian_mode(const std::string& name);

struct NlpEvaluation {
  double f = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd c;
  Eigen::VectorXd d;
  SpMat Jc;
  SpMat Jd;
};

struct EvalTimes {
  double collision = 0.0;  // seconds spent in contact-information evaluation
  double other = 0.0;      // remaining callback time
};

class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_variables() const = 0;
  virtual int num_equalities() const = 0;
  virtual int num_inequalities() const = 0;

  /// Lower variable bounds; -infinity marks a free variable.
  virtual Eigen::VectorXd lower_bounds() const {
    return Eigen::VectorXd::Constant(num_variables(), -std::numeric_limits<double>::infinity());
  }

  /// Values, and first derivatives when `derivatives` is set.
  virtual void evaluate(const Eigen::VectorXd& x, bool derivatives, NlpEvaluation& out) = 0;

  /// Lower triangle of obj_factor * H_f + sum y_c,i H_c,i + sum y_d,i H_d,i.
  /// The sparsity pattern must not depend on x or the multipliers.
  virtual void lagrangian_hessian(const Eigen::VectorXd& x, double obj_factor,
                                  const Eigen::VectorXd& y_c, const Eigen::VectorXd& y_d,
                                  SpMat& H) = 0;

  /// Lower triangle of a positive semidefinite approximation of H_f.
  virtual void gauss_newton_hessian(const Eigen::VectorXd& x, SpMat& H) = 0;

  virtual EvalTimes eval_times() const { return {}; }
};

struct NlpSettings {
  double tol = 1e-8;            // scaled KKT error
  int max_iterations = 3000;
  double mu_init = 0.1;
  HessianMode hessian = HessianMode::kExact;
  double kappa_eps = 10.0;
  double kappa_mu = 0.2;
  double theta_mu = 1.5;
  double tau_min = 0.995;       // fraction-to-boundary
  double bound_push = 1e-2;     // cold start
  double warm_bound_push = 1e-9;
  double warm_mult_push = 1e-9;
  double s_max = 100.0;
  double max_gradient = 100.0;  // gradient-based scaling threshold
  int lbfgs_memory = 20;
  bool verbose = false;
};

/// Primal-dual point for warm starts and results. Multiplier signs follow the
/// Lagrangian f + y_c^T c - z_d^T d - z_x^T (x - l), so z_d, z_x >= 0.
struct NlpPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd y_c;
  Eigen::VectorXd z_d;
  Eigen::VectorXd z_x;  // zero for unbounded variables
};

enum class NlpStatus { kConverged, kIterationLimit, kLineSearchFailure, kNumericFailure };

const char* to_string(NlpStatus status);

struct NlpResult {
  NlpStatus status = NlpStatus::kNumericFailure;
  NlpPoint point;
  int iterations = 0;
  double objective = 0.0;
  double kkt_error = 0.0;          // scaled, as used for termination
  double constraint_violation = 0.0;  // unscaled max |c|, max(0, -d)
  double time_collision = 0.0;
  double time_other = 0.0;
  double time_solver = 0.0;
  double time_total = 0.0;
  std::string message;

  bool converged() const { return status == NlpStatus::kConverged; }
};

struct IterationLog {
  int iteration = 0;
  double objective = 0.0;
  double mu = 0.0;
  double infeasibility = 0.0;
  double kkt_error = 0.0;
  double step = 0.0;
  double regularization = 0.0;
};

NlpResult solve_nlp(NlpProblem& problem, const NlpPoint& start, const NlpSettings& settings,
                    const std::function<void(const IterationLog&)>& log = {});

}  // namespace asmplan
