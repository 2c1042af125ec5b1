#pragma once

// Multi-scenario robust contact-implicit optimal control problem. One
// reference trajectory (the effective control) drives n_s compliant copies of
// the body through the impedance law; copy l sees the reference through the
// constant offset q_hat_l and is simulated with the smoothed or relaxed
// time-stepping constraints against the environment.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "asmplan/collision.hpp"
#include "asmplan/dynamics.hpp"
#include "asmplan/geometry.hpp"
#include "asmplan/impedance.hpp"
#include "asmplan/nlp_solver.hpp"

namespace asmplan {

struct OcpConfig {
  int N = 50;
  double dt = 0.04;
  int n_s = 3;
  std::vector<Vec3> rho_dir;  // unit directions, or zero for the nominal copy
  double delta_hat = 0.02;
  RigidState x0;
  Pose goal;
  std::array<double, 4> beta_r{1.0, 0.1, 100.0, 10.0};
  std::array<double, 4> beta_c{1.0, 0.1, 10000.0, 1000.0};
  double k_t = 50.0;
  double k_r = 5.0;

  int n_hom = 5;
  double tau_1 = 0.0025;
  double sigma_1 = 0.00125;
  double mu_init_1 = 1.0;
  double kappa_tau = 0.5;
  double kappa_sigma = 0.5;
  double kappa_mu = 0.1;

  ComplementarityMode mode = ComplementarityMode::kSmoothing;
  HessianMode hessian = HessianMode::kExact;
  double tol = 1e-6;
  int max_iterations = 3000;      // per stage
  int iteration_budget = 0;       // over all stages; 0 for none
  bool continue_on_failure = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError on violated invariants.
  void validate() const;
  /// q_hat_l = (delta_hat rho_dir_l, identity).
  std::vector<Pose> offsets() const;
};

/// Variable ordering: all reference states, then the compliant states of
/// each scenario, then the contact forces (scenario, interval, pair).
class DecisionLayout {
 public:
  DecisionLayout() = default;
  DecisionLayout(int N, int n_s, int num_pairs);

  int N() const { return N_; }
  int num_scenarios() const { return n_s_; }
  int num_pairs() const { return P_; }
  int num_variables() const { return force_base_ + N_ * n_s_ * P_; }
  int num_state_variables() const { return force_base_; }

  int reference(int k) const { return 13 * k; }
  int compliant(int l, int k) const { return 13 * (N_ + 1) * (1 + l) + 13 * k; }
  int force(int l, int k, int j) const { return force_base_ + (l * N_ + k) * P_ + j; }

  enum class Kind { kReference, kCompliant, kForce };
  struct Entry {
    Kind kind = Kind::kReference;
    int scenario = -1;  // -1 for the reference
    int step = 0;       // state index k, or interval index for forces
    int component = 0;  // 0..12 within a state, pair index for forces
  };
  Entry describe(int index) const;

  Vec13 state(const Eigen::VectorXd& x, int scenario, int k) const;  // scenario -1: reference
  Eigen::VectorXd forces(const Eigen::VectorXd& x, int scenario, int k) const;

 private:
  int N_ = 0, n_s_ = 0, P_ = 0;
  int force_base_ = 0;
};

struct CostValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
  SpMat hessian;  // lower triangle
};

/// Total cost with its gradient and (exact or Gauss-Newton) Hessian.
CostValue cost_eval(const Eigen::VectorXd& x, const DecisionLayout& layout, const OcpConfig& config,
                    bool gauss_newton = false);

class OcpProblem final : public NlpProblem {
 public:
  OcpProblem(const OcpConfig& config, const BodySpec& body);

  const DecisionLayout& layout() const { return layout_; }
  const OcpConfig& config() const { return config_; }
  const BodySpec& body() const { return body_; }
  const std::vector<ContactPair>& pairs() const { return pairs_; }
  const std::vector<Pose>& offsets() const { return offsets_; }
  const ImpedanceGains& gains() const { return gains_; }

  /// Collision barrier and complementarity smoothing of the current stage.
  void set_parameters(double tau, double sigma);
  double tau() const { return tau_; }
  double sigma() const { return sigma_; }

  int num_variables() const override { return layout_.num_variables(); }
  int num_equalities() const override;
  int num_inequalities() const override;
  Eigen::VectorXd lower_bounds() const override;

  void evaluate(const Eigen::VectorXd& x, bool derivatives, NlpEvaluation& out) override;
  void lagrangian_hessian(const Eigen::VectorXd& x, double obj_factor, const Eigen::VectorXd& y_c,
                          const Eigen::VectorXd& y_d, SpMat& H) override;
  void gauss_newton_hessian(const Eigen::VectorXd& x, SpMat& H) override;
  EvalTimes eval_times() const override { return times_; }

  /// Gap a_l = Phi(q~_k) + dt n~^T v_k+1 for every (scenario, interval, pair).
  Eigen::VectorXd gaps(const Eigen::VectorXd& x);

  IpSettings collision_settings() const;

 private:
  struct StepContacts {
    Pose q;  // normalized pose the contacts were evaluated at
    std::vector<ContactEvaluation> eval;
    bool first = false;
  };
  void update_contacts(const Eigen::VectorXd& x, bool first_order);
  int scenario_eq_base(int l, int k) const;
  int scenario_ineq_base(int l, int k) const;

  OcpConfig config_;
  BodySpec body_;
  std::vector<ContactPair> pairs_;
  std::vector<Pose> offsets_;
  ImpedanceGains gains_;
  DecisionLayout layout_;
  Vec6 minv_ = Vec6::Ones();
  double tau_ = 0.0;
  double sigma_ = 0.0;
  std::vector<StepContacts> contacts_;  // (l * N + k)
  bool contacts_valid_ = false;
  EvalTimes times_;
};

/// All states at their initial values with zero velocities; forces at
/// sigma_1 / max(Phi_tau1(q~_0), 0.01).
Eigen::VectorXd initial_guess(const OcpProblem& problem);

struct SolutionMetrics {
  std::vector<double> terminal_position_error;  // per scenario
  std::vector<double> terminal_rotation_error;  // Frobenius
  double complementarity = 0.0;                 // max a lambda
  double constraint_violation = 0.0;
  double rollout_deviation = 0.0;  // max per-step state deviation, smoothing mode only
  bool rollout_ok = true;
};

/// Evaluates the metrics at the problem's current (tau, sigma).
SolutionMetrics validate_solution(const Eigen::VectorXd& x, OcpProblem& problem,
                                  bool rollout_check = true);

/// Reference and compliant trajectories as CSV (step, t, 13 state columns),
/// forces as (scenario, step, lambda per pair).
void write_trajectory_csv(std::ostream& os, const Eigen::VectorXd& x, const DecisionLayout& layout,
                          int scenario, double dt);
void write_forces_csv(std::ostream& os, const Eigen::VectorXd& x, const DecisionLayout& layout);

}  // namespace asmplan
