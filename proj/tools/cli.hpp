#pragma once

// Command implementations behind the asmplan executable. Each command reads a
// JSON config, writes its outputs into an output directory and returns a
// process exit code.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace asmplan::cli {

enum ExitCode : int {
  kSuccess = 0,
  kConfigError = 2,
  kNonConvergence = 3,
  kNumericFailure = 4,
};

struct CommonOptions {
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  int threads = 0;  // 0: ASMPLAN_THREADS or the runtime default
  bool verbose = false;
};

struct SolveOptions {
  std::optional<std::string> hessian;
  std::optional<std::string> mode;
  std::optional<int> iteration_budget;
};

int cmd_sdf_grid(const CommonOptions& opts);
int cmd_simulate(const CommonOptions& opts);
int cmd_solve(const CommonOptions& opts, const SolveOptions& solve);
int cmd_bench(const CommonOptions& opts);

/// Parses argv and dispatches; usage errors map to kConfigError.
int run(int argc, const char* const* argv);
inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

struct ContactTiming {
  int samples = 0;
  int failures = 0;
  double mean_us = 0.0;
  double max_us = 0.0;
};

/// Average wall time of one cube-cube contact-information evaluation with
/// first and second derivatives over random relative poses.
ContactTiming time_contact_info(int samples, double tau, std::uint64_t seed);

}  // namespace asmplan::cli
