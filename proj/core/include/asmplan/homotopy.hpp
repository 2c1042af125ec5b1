#pragma once

// Sequence of planning solves with geometrically decreasing collision barrier
// tau, complementarity smoothing sigma and initial NLP barrier mu_init; each
// stage starts from the previous stage's primal-dual solution.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "asmplan/nlp_solver.hpp"
#include "asmplan/ocp.hpp"

namespace asmplan {

struct HomotopyStage {
  int index = 1;  // 1-based
  double tau = 0.0;
  double sigma = 0.0;
  double mu_init = 0.0;
};

/// tau_n = tau_1 kappa_tau^(n-1), likewise for sigma and mu_init.
std::vector<HomotopyStage> homotopy_schedule(const OcpConfig& config);

struct StageReport {
  HomotopyStage stage;
  NlpStatus status = NlpStatus::kNumericFailure;
  std::string message;
  int iterations = 0;
  double objective = 0.0;
  double kkt_error = 0.0;
  double complementarity = 0.0;
  double constraint_violation = 0.0;
  std::vector<double> terminal_position_error;
  std::vector<double> terminal_rotation_error;
  double time_collision = 0.0;
  double time_other = 0.0;
  double time_solver = 0.0;
  double time_total = 0.0;
};

struct SolveReport {
  std::string hessian;
  std::string mode;
  double tol = 0.0;
  std::vector<StageReport> stages;
  bool completed = false;
  int failed_stage = 0;  // 1-based; 0 when every stage converged
  double total_time = 0.0;

  int total_iterations() const;
  /// Deterministic fields only unless `timing` is set.
  nlohmann::json to_json(bool timing) const;
};

struct HomotopyResult {
  NlpPoint solution;
  SolveReport report;
};

/// One stage from an arbitrary start; a start without multipliers is cold.
/// `iteration_limit` > 0 tightens the configured per-stage limit.
NlpResult solve_stage(OcpProblem& problem, const HomotopyStage& stage, const NlpPoint& start,
                      bool verbose = false, int iteration_limit = 0);

StageReport make_stage_report(const HomotopyStage& stage, const NlpResult& result, OcpProblem& problem);

/// Full homotopy from initial_guess. With an iteration budget, a stage that
/// exhausts it ends with kIterationLimit. `on_stage` observes every finished stage.
HomotopyResult homotopy_solve(const OcpConfig& config, const BodySpec& body, bool verbose = false,
                              const std::function<void(const StageReport&)>& on_stage = {});

}  // namespace asmplan
