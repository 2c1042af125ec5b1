#include "asmplan/config_io.hpp"

#include <fstream>

namespace asmplan {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing key '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number()) throw ConfigError(std::string("key '") + key + "' must be a number");
  return v.get<double>();
}

double number_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? number(j, key) : fallback;
}

int integer(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_number_integer()) throw ConfigError(std::string("key '") + key + "' must be an integer");
  return v.get<int>();
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_vector(const json& v, const char* key) {
  if (!v.is_array() || v.size() != N)
    throw ConfigError(std::string("key '") + key + "' must be an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    if (!v[i].is_number()) throw ConfigError(std::string("key '") + key + "' must hold numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

template <int N>
Eigen::Matrix<double, N, 1> vector_or(const json& j, const char* key, const Eigen::Matrix<double, N, 1>& fallback) {
  return j.contains(key) ? fixed_vector<N>(j.at(key), key) : fallback;
}

Eigen::VectorXd dynamic_vector(const json& v, const char* key) {
  if (!v.is_array() || v.empty()) throw ConfigError(std::string("key '") + key + "' must be a nonempty array");
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(std::string("key '") + key + "' must hold numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

Pose pose_from_json(const json& j) {
  Pose p;
  p.position = vector_or<3>(j, "position", Vec3::Zero());
  p.orientation = vector_or<4>(j, "orientation", Quat(1, 0, 0, 0));
  if (std::abs(p.orientation.norm() - 1.0) > 1e-9) throw ConfigError("orientation must be a unit quaternion");
  return p;
}

json pose_to_json(const Pose& p) {
  return {{"position", {p.position[0], p.position[1], p.position[2]}},
          {"orientation", {p.orientation[0], p.orientation[1], p.orientation[2], p.orientation[3]}}};
}

}  // namespace

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

Polytope polytope_from_json(const json& j) {
  const Pose offset = pose_from_json(j);
  if (j.contains("box")) return Polytope::box(fixed_vector<3>(j.at("box"), "box"), offset);
  const json& G = require(j, "G");
  const Eigen::VectorXd h = dynamic_vector(require(j, "h"), "h");
  if (!G.is_array() || G.size() != static_cast<std::size_t>(h.size()))
    throw ConfigError("'G' must have one row per entry of 'h'");
  Eigen::MatrixX3d M(h.size(), 3);
  for (std::size_t i = 0; i < G.size(); ++i) M.row(static_cast<Eigen::Index>(i)) = fixed_vector<3>(G[i], "G").transpose();
  return validate_polytope(M, h, offset);
}

BodySpec body_from_json(const json& j) {
  BodySpec b;
  b.mass = number(j, "mass");
  b.inertia = fixed_vector<3>(require(j, "inertia"), "inertia");
  b.gravity_wrench = vector_or<6>(j, "gravity", Vec6::Zero());
  for (const json& p : require(j, "actuated")) b.actuated.push_back(polytope_from_json(p));
  for (const json& p : require(j, "environment")) b.environment.push_back(polytope_from_json(p));
  const json& pairs = require(j, "pairs");
  if (pairs.is_string() && pairs.get<std::string>() == "all") {
    for (int a = 0; a < static_cast<int>(b.actuated.size()); ++a)
      for (int e = 0; e < static_cast<int>(b.environment.size()); ++e) b.pairs.push_back({a, e});
  } else if (pairs.is_array()) {
    for (const json& p : pairs) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
        throw ConfigError("'pairs' entries must be [actuated, environment] index pairs");
      b.pairs.push_back({p[0].get<int>(), p[1].get<int>()});
    }
  } else {
    throw ConfigError("'pairs' must be \"all\" or a list of index pairs");
  }
  b.validate();
  return b;
}

RigidState state_from_json(const json& j) {
  RigidState s;
  s.q = pose_from_json(j);
  s.v = vector_or<6>(j, "velocity", Vec6::Zero());
  return s;
}

ComplementarityMode parse_complementarity_mode(const std::string& name) {
  if (name == "smoothing") return ComplementarityMode::kSmoothing;
  if (name == "relaxation") return ComplementarityMode::kRelaxation;
  throw ConfigError("unknown mode '" + name + "'");
}

OcpConfig ocp_config_from_json(const json& j) {
  OcpConfig c;
  c.N = integer(j, "N");
  c.dt = number(j, "dt");
  c.n_s = integer(j, "n_s");
  c.k_t = number(j, "k_t");
  c.k_r = number(j, "k_r");
  c.n_hom = integer(j, "n_hom");
  c.tau_1 = number(j, "tau_1");
  c.sigma_1 = number(j, "sigma_1");
  c.mu_init_1 = number(j, "mu_init_1");
  c.kappa_tau = number(j, "kappa_tau");
  c.kappa_sigma = number(j, "kappa_sigma");
  c.kappa_mu = number(j, "kappa_mu");
  for (int i = 0; i < 4; ++i) {
    const std::string r = "beta_r_" + std::to_string(i + 1);
    const std::string cc = "beta_c_" + std::to_string(i + 1);
    c.beta_r[i] = number(j, r.c_str());
    c.beta_c[i] = number(j, cc.c_str());
  }
  c.delta_hat = number(j, "delta_hat");
  c.rho_dir.clear();
  for (const json& d : require(j, "rho_dir")) c.rho_dir.push_back(fixed_vector<3>(d, "rho_dir"));
  c.mode = parse_complementarity_mode(j.value("mode", std::string("smoothing")));
  c.hessian = parse_hessian_mode(j.value("hessian", std::string("exact")));
  c.tol = number_or(j, "tol", 1e-6);
  c.max_iterations = j.contains("max_iterations") ? integer(j, "max_iterations") : 3000;
  c.iteration_budget = j.contains("iteration_budget") ? integer(j, "iteration_budget") : 0;
  c.continue_on_failure = j.value("continue_on_failure", false);
  c.seed = j.value("seed", static_cast<std::uint64_t>(0));
  c.x0 = state_from_json(require(j, "x0"));
  c.goal = pose_from_json(require(j, "goal"));
  c.validate();
  return c;
}

json ocp_config_to_json(const OcpConfig& c) {
  json j;
  j["N"] = c.N;
  j["dt"] = c.dt;
  j["n_s"] = c.n_s;
  j["k_t"] = c.k_t;
  j["k_r"] = c.k_r;
  j["n_hom"] = c.n_hom;
  j["tau_1"] = c.tau_1;
  j["sigma_1"] = c.sigma_1;
  j["mu_init_1"] = c.mu_init_1;
  j["kappa_tau"] = c.kappa_tau;
  j["kappa_sigma"] = c.kappa_sigma;
  j["kappa_mu"] = c.kappa_mu;
  for (int i = 0; i < 4; ++i) {
    j["beta_r_" + std::to_string(i + 1)] = c.beta_r[i];
    j["beta_c_" + std::to_string(i + 1)] = c.beta_c[i];
  }
  j["delta_hat"] = c.delta_hat;
  j["rho_dir"] = json::array();
  for (const Vec3& d : c.rho_dir) j["rho_dir"].push_back({d[0], d[1], d[2]});
  j["mode"] = to_string(c.mode);
  j["hessian"] = to_string(c.hessian);
  j["tol"] = c.tol;
  j["max_iterations"] = c.max_iterations;
  j["iteration_budget"] = c.iteration_budget;
  j["continue_on_failure"] = c.continue_on_failure;
  j["seed"] = c.seed;
  json x0 = pose_to_json(c.x0.q);
  x0["velocity"] = {c.x0.v[0], c.x0.v[1], c.x0.v[2], c.x0.v[3], c.x0.v[4], c.x0.v[5]};
  j["x0"] = x0;
  j["goal"] = pose_to_json(c.goal);
  return j;
}

SdfGridConfig sdf_grid_config_from_json(const json& j) {
  SdfGridConfig c;
  const json& poly = require(j, "polygon");
  if (poly.contains("square")) {
    c.polygon = Polygon2d::square(number(poly, "square"));
  } else {
    const json& G = require(poly, "G");
    const Eigen::VectorXd h = dynamic_vector(require(poly, "h"), "h");
    if (!G.is_array() || G.size() != static_cast<std::size_t>(h.size()))
      throw ConfigError("'G' must have one row per entry of 'h'");
    Eigen::MatrixX2d M(h.size(), 2);
    for (std::size_t i = 0; i < G.size(); ++i)
      M.row(static_cast<Eigen::Index>(i)) = fixed_vector<2>(G[i], "G").transpose();
    c.polygon = validate_polygon(M, h);
  }
  const json& g = require(j, "grid");
  c.grid.x_min = number(g, "x_min");
  c.grid.x_max = number(g, "x_max");
  c.grid.y_min = number(g, "y_min");
  c.grid.y_max = number(g, "y_max");
  c.grid.nx = integer(g, "nx");
  c.grid.ny = integer(g, "ny");
  c.grid.validate();
  const Eigen::VectorXd taus = dynamic_vector(require(j, "tau"), "tau");
  for (int i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0)) throw ConfigError("tau values must be positive");
    c.taus.push_back(taus[i]);
  }
  return c;
}

SimulationConfig simulation_config_from_json(const json& j) {
  SimulationConfig c;
  c.x0 = state_from_json(require(j, "x0"));
  c.dt = number(j, "dt");
  c.N = integer(j, "N");
  c.sigma = number(j, "sigma");
  c.tau = number(j, "tau");
  if (!(c.dt > 0.0) || c.N < 1 || !(c.sigma > 0.0) || !(c.tau > 0.0))
    throw ConfigError("dt, N, sigma and tau must be positive");
  if (j.contains("reference")) {
    c.impedance = true;
    c.reference = state_from_json(j.at("reference"));
    c.offset = j.contains("offset") ? pose_from_json(j.at("offset")) : Pose{};
    c.k_t = number_or(j, "k_t", c.k_t);
    c.k_r = number_or(j, "k_r", c.k_r);
  } else {
    c.wrench = vector_or<6>(j, "wrench", Vec6::Zero());
  }
  return c;
}

}  // namespace asmplan
