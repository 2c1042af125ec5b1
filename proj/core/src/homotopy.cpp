#include "asmplan/homotopy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace asmplan {

std::vector<HomotopyStage> homotopy_schedule(const OcpConfig& config) {
  config.validate();
  std::vector<HomotopyStage> out;
  for (int n = 1; n <= config.n_hom; ++n) {
    // closed form rather than repeated products, so every stage is one rounding away
    out.push_back({n, config.tau_1 * std::pow(config.kappa_tau, n - 1),
                   config.sigma_1 * std::pow(config.kappa_sigma, n - 1),
                   config.mu_init_1 * std::pow(config.kappa_mu, n - 1)});
  }
  return out;
}

int SolveReport::total_iterations() const {
  int total = 0;
  for (const StageReport& s : stages) total += s.iterations;
  return total;
}

nlohmann::json SolveReport::to_json(bool timing) const {
  nlohmann::json j;
  j["hessian"] = hessian;
  j["mode"] = mode;
  j["tol"] = tol;
  j["completed"] = completed;
  j["failed_stage"] = failed_stage;
  j["total_iterations"] = total_iterations();
  nlohmann::json stages_json = nlohmann::json::array();
  for (const StageReport& s : stages) {
    nlohmann::json e;
    e["stage"] = s.stage.index;
    e["tau"] = s.stage.tau;
    e["sigma"] = s.stage.sigma;
    e["mu_init"] = s.stage.mu_init;
    e["status"] = to_string(s.status);
    e["iterations"] = s.iterations;
    e["objective"] = s.objective;
    e["kkt_error"] = s.kkt_error;
    e["complementarity"] = s.complementarity;
    e["constraint_violation"] = s.constraint_violation;
    e["terminal_position_error"] = s.terminal_position_error;
    e["terminal_rotation_error"] = s.terminal_rotation_error;
    if (!s.message.empty()) e["message"] = s.message;
    if (timing) {
      e["time_collision"] = s.time_collision;
      e["time_other"] = s.time_other;
      e["time_solver"] = s.time_solver;
      e["time_total"] = s.time_total;
      e["time_per_iteration"] = s.iterations ? s.time_total / s.iterations : 0.0;
    }
    stages_json.push_back(e);
  }
  j["stages"] = stages_json;
  if (timing) j["total_time"] = total_time;
  return j;
}

NlpResult solve_stage(OcpProblem& problem, const HomotopyStage& stage, const NlpPoint& start, bool verbose,
                      int iteration_limit) {
  problem.set_parameters(stage.tau, stage.sigma);
  const OcpConfig& cfg = problem.config();
  NlpSettings s;
  s.tol = cfg.tol;
  s.max_iterations = iteration_limit > 0 ? std::min(iteration_limit, cfg.max_iterations) : cfg.max_iterations;
  s.mu_init = stage.mu_init;
  s.hessian = cfg.hessian;
  s.verbose = verbose;
  return solve_nlp(problem, start, s);
}

StageReport make_stage_report(const HomotopyStage& stage, const NlpResult& result, OcpProblem& problem) {
  StageReport r;
  r.stage = stage;
  r.status = result.status;
  r.message = result.message;
  r.iterations = result.iterations;
  r.objective = result.objective;
  r.kkt_error = result.kkt_error;
  r.time_collision = result.time_collision;
  r.time_other = result.time_other;
  r.time_solver = result.time_solver;
  r.time_total = result.time_total;
  try {
    const SolutionMetrics m = validate_solution(result.point.x, problem, false);
    r.complementarity = m.complementarity;
    r.constraint_violation = m.constraint_violation;
    r.terminal_position_error = m.terminal_position_error;
    r.terminal_rotation_error = m.terminal_rotation_error;
  } catch (const Error&) {
    r.complementarity = std::nan("");
    r.constraint_violation = std::nan("");
  }
  return r;
}

HomotopyResult homotopy_solve(const OcpConfig& config, const BodySpec& body, bool verbose,
                              const std::function<void(const StageReport&)>& on_stage) {
  const auto t0 = std::chrono::steady_clock::now();
  OcpProblem problem(config, body);
  HomotopyResult out;
  out.report.hessian = to_string(config.hessian);
  out.report.mode = to_string(config.mode);
  out.report.tol = config.tol;
  NlpPoint start;
  start.x = initial_guess(problem);
  out.solution = start;
  out.report.completed = true;
  for (const HomotopyStage& stage : homotopy_schedule(config)) {
    if (verbose)
      std::fprintf(stderr, "stage %d: tau=%.6g sigma=%.6g mu_init=%.6g\n", stage.index, stage.tau, stage.sigma,
                   stage.mu_init);
    int limit = 0;
    if (config.iteration_budget > 0) {
      limit = config.iteration_budget - out.report.total_iterations();
      if (limit <= 0) {
        StageReport rep;
        rep.stage = stage;
        rep.status = NlpStatus::kIterationLimit;
        rep.message = "iteration budget exhausted";
        out.report.stages.push_back(rep);
        if (on_stage) on_stage(rep);
        if (out.report.completed) out.report.failed_stage = stage.index;
        out.report.completed = false;
        break;
      }
    }
    const NlpResult res = solve_stage(problem, stage, start, verbose, limit);
    StageReport rep = make_stage_report(stage, res, problem);
    out.report.stages.push_back(rep);
    if (on_stage) on_stage(rep);
    if (res.point.x.size() == start.x.size()) {
      start = res.point;
      out.solution = res.point;
    }
    if (!res.converged()) {
      if (out.report.completed) out.report.failed_stage = stage.index;
      out.report.completed = false;
      if (!config.continue_on_failure) break;
    }
  }
  out.report.total_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace asmplan
