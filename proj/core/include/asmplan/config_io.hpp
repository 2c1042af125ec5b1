#pragma once

// JSON documents for bodies, planning scenarios, 2D SDF grids and simulation
// runs. Every parser throws ConfigError with the offending key on bad input.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asmplan/dynamics.hpp"
#include "asmplan/geometry.hpp"
#include "asmplan/ocp.hpp"
#include "asmplan/sdf2d.hpp"

namespace asmplan {

nlohmann::json load_json_file(const std::string& path);

/// Polytope entry: {"box": [hx, hy, hz]} or {"G": [[..]..], "h": [..]}, with
/// optional "position" and "orientation" (w, x, y, z) placement.
Polytope polytope_from_json(const nlohmann::json& j);

/// {"mass", "inertia", "gravity"?, "actuated": [...], "environment": [...],
///  "pairs": [[a, e], ...] or "all"}
BodySpec body_from_json(const nlohmann::json& j);

/// {"position", "orientation", "velocity"?}
RigidState state_from_json(const nlohmann::json& j);

/// Keys as in the parameter tables: N, dt, n_s, k_t, k_r, n_hom, tau_1,
/// sigma_1, mu_init_1, kappa_tau, kappa_sigma, kappa_mu, beta_r_1..4,
/// beta_c_1..4, delta_hat, rho_dir, mode, hessian, tol; plus x0 and goal.
OcpConfig ocp_config_from_json(const nlohmann::json& j);
nlohmann::json ocp_config_to_json(const OcpConfig& c);

ComplementarityMode parse_complementarity_mode(const std::string& name);

struct SdfGridConfig {
  Polygon2d polygon;
  GridSpec grid;
  std::vector<double> taus;
};

/// {"polygon": {"G", "h"} or {"square": half}, "grid": {...}, "tau": [...]}
SdfGridConfig sdf_grid_config_from_json(const nlohmann::json& j);

struct SimulationConfig {
  RigidState x0;
  double dt = 0.01;
  int N = 100;
  double sigma = 1e-3;
  double tau = 1e-3;
  // Either a constant applied wrench or impedance tracking of a fixed
  // reference pose (with an offset) is simulated.
  bool impedance = false;
  Vec6 wrench = Vec6::Zero();
  RigidState reference;
  Pose offset;
  double k_t = 50.0;
  double k_r = 5.0;
};

SimulationConfig simulation_config_from_json(const nlohmann::json& j);

}  // namespace asmplan
