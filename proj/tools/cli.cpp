#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "asmplan/collision.hpp"
#include "asmplan/config_io.hpp"
#include "asmplan/dynamics.hpp"
#include "asmplan/homotopy.hpp"
#include "asmplan/impedance.hpp"
#include "asmplan/ocp.hpp"
#include "asmplan/sdf2d.hpp"

namespace asmplan::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("ASMPLAN_THREADS")) threads = std::atoi(env);
  }
  set_thread_count(threads);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  return os;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os = open_output(path);
  os << j.dump(2) << '\n';
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory '" + out.string() + "'");
}

// "body" is either an inline object or a path relative to the config file.
BodySpec resolve_body(const json& j, const fs::path& config_path) {
  if (!j.contains("body")) throw ConfigError("missing key 'body'");
  const json& b = j.at("body");
  if (b.is_object()) return body_from_json(b);
  if (!b.is_string()) throw ConfigError("'body' must be an object or a file path");
  fs::path p = b.get<std::string>();
  if (p.is_relative()) p = config_path.parent_path() / p;
  return body_from_json(load_json_file(p.string()));
}

// Runs `body` and maps escaping exceptions to exit codes.
template <class F>
int guarded(const char* command, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s: config error: %s\n", command, e.what());
    return kConfigError;
  } catch (const PolytopeError& e) {
    std::fprintf(stderr, "%s: config error: %s\n", command, e.what());
    return kConfigError;
  } catch (const InvalidQuaternion& e) {
    std::fprintf(stderr, "%s: config error: %s\n", command, e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s: numeric failure: %s\n", command, e.what());
    return kNumericFailure;
  }
}

std::string tau_file_name(std::size_t index, double tau) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "sdf_%zu_tau_%g.csv", index, tau);
  return buf;
}

struct ScenarioSetup {
  OcpConfig config;
  BodySpec body;
};

ScenarioSetup load_scenario(const fs::path& path, const std::optional<std::uint64_t>& seed) {
  const json j = load_json_file(path.string());
  ScenarioSetup s{ocp_config_from_json(j), resolve_body(j, path)};
  if (seed) s.config.seed = *seed;
  return s;
}

json metrics_to_json(const SolutionMetrics& m) {
  return {{"terminal_position_error", m.terminal_position_error},
          {"terminal_rotation_error", m.terminal_rotation_error},
          {"complementarity", m.complementarity},
          {"constraint_violation", m.constraint_violation},
          {"rollout_deviation", m.rollout_deviation},
          {"rollout_ok", m.rollout_ok}};
}

int exit_code_for(const SolveReport& report) {
  if (report.completed) return kSuccess;
  for (const StageReport& s : report.stages)
    if (s.stage.index == report.failed_stage && s.status == NlpStatus::kNumericFailure) return kNumericFailure;
  return kNonConvergence;
}

}  // namespace

int cmd_sdf_grid(const CommonOptions& opts) {
  return guarded("sdf-grid", [&] {
    apply_threads(opts.threads);
    const SdfGridConfig cfg = sdf_grid_config_from_json(load_json_file(opts.config.string()));
    prepare_out(opts.out);
    for (std::size_t i = 0; i < cfg.taus.size(); ++i) {
      const std::vector<GridSample> samples = sdf_grid_2d(cfg.polygon, cfg.grid, cfg.taus[i]);
      std::ofstream os = open_output(opts.out / tau_file_name(i, cfg.taus[i]));
      write_sdf_csv(os, samples);
    }
    return static_cast<int>(kSuccess);
  });
}

int cmd_simulate(const CommonOptions& opts) {
  return guarded("simulate", [&] {
    apply_threads(opts.threads);
    const json j = load_json_file(opts.config.string());
    const SimulationConfig cfg = simulation_config_from_json(j);
    const BodySpec body = resolve_body(j, opts.config);
    const std::vector<ContactPair> pairs = make_contact_pairs(body);
    IpSettings collision;
    collision.tau = cfg.tau;
    collision.validate();

    Rollout r;
    if (cfg.impedance) {
      const ImpedanceGains gains = ImpedanceGains::critically_damped(cfg.k_t, cfg.k_r, body);
      const std::vector<Vec13> reference(cfg.N + 1, cfg.reference.vector());
      r = rollout(body, pairs, cfg.x0, reference, gains, cfg.offset, cfg.dt, collision, cfg.sigma, cfg.N);
    } else {
      const WrenchModel wrench = WrenchModel::constant(cfg.wrench + body.gravity_wrench);
      r = rollout(body, pairs, cfg.x0, wrench, cfg.dt, collision, cfg.sigma, cfg.N);
    }
    prepare_out(opts.out);
    std::ofstream os = open_output(opts.out / "rollout.csv");
    write_rollout_csv(os, r, body.num_pairs());
    if (r.failed_step) {
      std::fprintf(stderr, "simulate: step %d failed: %s\n", *r.failed_step, r.failure.c_str());
      return static_cast<int>(kNumericFailure);
    }
    return static_cast<int>(kSuccess);
  });
}

int cmd_solve(const CommonOptions& opts, const SolveOptions& solve) {
  return guarded("solve", [&] {
    apply_threads(opts.threads);
    ScenarioSetup sc = load_scenario(opts.config, opts.seed);
    if (solve.hessian) sc.config.hessian = parse_hessian_mode(*solve.hessian);
    if (solve.mode) sc.config.mode = parse_complementarity_mode(*solve.mode);
    if (solve.iteration_budget) sc.config.iteration_budget = *solve.iteration_budget;
    sc.config.validate();
    prepare_out(opts.out);

    const HomotopyResult result = homotopy_solve(sc.config, sc.body, opts.verbose);
    const SolveReport& report = result.report;

    OcpProblem problem(sc.config, sc.body);
    const DecisionLayout& layout = problem.layout();
    json report_json = report.to_json(false);
    report_json["seed"] = sc.config.seed;
    if (!report.stages.empty()) {
      const HomotopyStage& last = report.stages.back().stage;
      problem.set_parameters(last.tau, last.sigma);
      try {
        const bool rollout_check = sc.config.mode == ComplementarityMode::kSmoothing;
        report_json["validation"] = metrics_to_json(validate_solution(result.solution.x, problem, rollout_check));
      } catch (const Error& e) {
        report_json["validation"] = {{"error", e.what()}};
      }
    }
    write_json(opts.out / "report.json", report_json);
    write_json(opts.out / "timing.json", report.to_json(true));

    {
      std::ofstream os = open_output(opts.out / "reference.csv");
      write_trajectory_csv(os, result.solution.x, layout, -1, sc.config.dt);
    }
    for (int l = 0; l < sc.config.n_s; ++l) {
      std::ofstream os = open_output(opts.out / ("scenario_" + std::to_string(l) + ".csv"));
      write_trajectory_csv(os, result.solution.x, layout, l, sc.config.dt);
    }
    {
      std::ofstream os = open_output(opts.out / "forces.csv");
      write_forces_csv(os, result.solution.x, layout);
    }
    const int code = exit_code_for(report);
    if (code != kSuccess)
      std::fprintf(stderr, "solve: stage %d did not converge\n", report.failed_stage);
    return code;
  });
}

ContactTiming time_contact_info(int samples, double tau, std::uint64_t seed) {
  const Polytope cube = Polytope::box(Vec3::Constant(0.5));
  const ContactPair pair(cube, cube);
  IpSettings settings;
  settings.tau = tau;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-1.5, 1.5);
  std::normal_distribution<double> gauss;

  ContactTiming t;
  t.samples = samples;
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    Pose q;
    q.position = Vec3(pos(rng), pos(rng), pos(rng));
    Quat xi(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.orientation = xi.normalized();
    Vec8 s_w;
    for (int k = 0; k < 8; ++k) s_w[k] = gauss(rng);
    const auto t0 = Clock::now();
    const ContactEvaluation ev = evaluate_contact(pair, q, settings, DerivativeLevel::kSecond, {s_w},
                                                  item_seed(seed, static_cast<std::uint64_t>(i)));
    const double us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
    if (!ev.ok()) ++t.failures;
    total += us;
    t.max_us = std::max(t.max_us, us);
  }
  t.mean_us = samples > 0 ? total / samples : 0.0;
  return t;
}

int cmd_bench(const CommonOptions& opts) {
  return guarded("bench", [&] {
    if (!opts.seed) throw ConfigError("bench requires --seed");
    apply_threads(opts.threads);
    const json j = load_json_file(opts.config.string());
    if (!j.contains("scenarios") || !j.at("scenarios").is_array() || j.at("scenarios").empty())
      throw ConfigError("'scenarios' must be a nonempty list of scenario files");
    const std::vector<std::string> hessians = j.value("hessian", std::vector<std::string>{"exact"});
    const std::vector<std::string> modes = j.value("modes", std::vector<std::string>{"smoothing"});
    const int contact_samples = j.value("contact_samples", 1000);
    const double contact_tau = j.value("contact_tau", 1e-3);
    const int budget = j.value("iteration_budget", 0);
    for (const std::string& h : hessians) parse_hessian_mode(h);
    for (const std::string& m : modes) parse_complementarity_mode(m);

    std::vector<std::pair<std::string, ScenarioSetup>> scenarios;
    for (const json& s : j.at("scenarios")) {
      if (!s.is_string()) throw ConfigError("'scenarios' entries must be file paths");
      fs::path p = s.get<std::string>();
      if (p.is_relative()) p = opts.config.parent_path() / p;
      scenarios.emplace_back(p.stem().string(), load_scenario(p, opts.seed));
    }
    prepare_out(opts.out);

    std::ofstream iters = open_output(opts.out / "bench_iterations.csv");
    std::ofstream totals = open_output(opts.out / "bench_totals.csv");
    std::ofstream timing = open_output(opts.out / "bench_timing.csv");
    iters << "scenario,hessian,mode,stage,tau,sigma,mu_init,status,iterations\n";
    totals << "scenario,hessian,mode,completed,failed_stage,total_iterations\n";
    timing << "scenario,hessian,mode,stage,iterations,time_collision,time_other,time_solver,time_total,"
              "time_per_iteration\n";
    char buf[512];
    int code = kSuccess;
    for (const auto& [name, setup] : scenarios)
      for (const std::string& h : hessians)
        for (const std::string& m : modes) {
          OcpConfig cfg = setup.config;
          cfg.hessian = parse_hessian_mode(h);
          cfg.mode = parse_complementarity_mode(m);
          if (budget > 0) cfg.iteration_budget = budget;
          const auto t0 = Clock::now();
          const HomotopyResult res = homotopy_solve(cfg, setup.body, opts.verbose);
          const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
          const char* hn = to_string(cfg.hessian);
          const char* mn = to_string(cfg.mode);
          for (const StageReport& s : res.report.stages) {
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%.17g,%.17g,%.17g,%s,%d\n", name.c_str(), hn, mn,
                          s.stage.index, s.stage.tau, s.stage.sigma, s.stage.mu_init, to_string(s.status),
                          s.iterations);
            iters << buf;
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", name.c_str(), hn, mn,
                          s.stage.index, s.iterations, s.time_collision, s.time_other, s.time_solver,
                          s.time_total, s.iterations ? s.time_total / s.iterations : 0.0);
            timing << buf;
          }
          double col = 0.0, oth = 0.0, sol = 0.0;
          for (const StageReport& s : res.report.stages) {
            col += s.time_collision;
            oth += s.time_other;
            sol += s.time_solver;
          }
          const int total = res.report.total_iterations();
          std::snprintf(buf, sizeof buf, "%s,%s,%s,total,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", name.c_str(), hn, mn,
                        total, col, oth, sol, wall, total ? wall / total : 0.0);
          timing << buf;
          std::snprintf(buf, sizeof buf, "%s,%s,%s,%d,%d,%d\n", name.c_str(), hn, mn,
                        res.report.completed ? 1 : 0, res.report.failed_stage, total);
          totals << buf;
          if (!res.report.completed && code == kSuccess) code = exit_code_for(res.report);
        }

    const ContactTiming ct = time_contact_info(contact_samples, contact_tau, *opts.seed);
    std::ofstream contact = open_output(opts.out / "bench_contact_timing.csv");
    contact << "samples,failures,tau,mean_us,max_us\n";
    std::snprintf(buf, sizeof buf, "%d,%d,%g,%.3f,%.3f\n", ct.samples, ct.failures, contact_tau, ct.mean_us,
                  ct.max_us);
    contact << buf;
    return code;
  });
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Robust contact-implicit assembly planning"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::uint64_t seed = 0;
  SolveOptions solve;
  std::string hessian, mode;
  int budget = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "JSON config file")->required();
    sub->add_option("--out", opts.out, "output directory");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_option("--threads", opts.threads, "worker threads (default: $ASMPLAN_THREADS)");
    sub->add_flag("-v,--verbose", opts.verbose, "print solver iterations");
  };
  CLI::App* sdf = app.add_subcommand("sdf-grid", "sample the smooth 2D point-polygon distance on a grid");
  CLI::App* sim = app.add_subcommand("simulate", "forward time-stepping rollout");
  CLI::App* sol = app.add_subcommand("solve", "homotopy solve of a planning scenario");
  CLI::App* bench = app.add_subcommand("bench", "iteration and timing benchmark");
  for (CLI::App* sub : {sdf, sim, sol, bench}) add_common(sub);
  sol->add_option("--hessian", hessian, "exact | gn | lbfgs")
      ->check(CLI::IsMember({"exact", "gn", "gauss-newton", "lbfgs"}));
  sol->add_option("--mode", mode, "smoothing | relaxation")->check(CLI::IsMember({"smoothing", "relaxation"}));
  sol->add_option("--iteration-budget", budget, "total iteration limit over all stages")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? static_cast<int>(kSuccess) : static_cast<int>(kConfigError);
  }
  if (app.get_subcommands().front()->count("--seed")) opts.seed = seed;
  if (!hessian.empty()) solve.hessian = hessian;
  if (!mode.empty()) solve.mode = mode;
  if (sol->count("--iteration-budget")) solve.iteration_budget = budget;

  if (*sdf) return cmd_sdf_grid(opts);
  if (*sim) return cmd_simulate(opts);
  if (*sol) return cmd_solve(opts, solve);
  return cmd_bench(opts);
}

}  // namespace asmplan::cli
