#include "asmplan/ocp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "asmplan/autodiff.hpp"
#include "asmplan/quat_ops.hpp"

namespace asmplan {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Triplets = std::vector<Eigen::Triplet<double>>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Omega(e_a) for the four unit quaternion axes.
const std::array<Mat43, 4>& omega_basis() {
  static const std::array<Mat43, 4> basis = [] {
    std::array<Mat43, 4> b;
    for (int a = 0; a < 4; ++a) b[a] = quaternion_rate_matrix(Quat::Unit(a));
    return b;
  }();
  return basis;
}

// d/dxi [Omega(xi) omega] (Omega is linear in xi).
Eigen::Matrix4d omega_xi_jacobian(const Vec3& omega) {
  Eigen::Matrix4d M;
  for (int a = 0; a < 4; ++a) M.col(a) = omega_basis()[a] * omega;
  return M;
}

// d^2/dxi domega [y^T Omega(xi) omega], 4 x 3.
Mat43 omega_cross_hessian(const Vec4& y) {
  Mat43 C;
  for (int a = 0; a < 4; ++a) C.row(a) = (omega_basis()[a].transpose() * y).transpose();
  return C;
}

// Dense symmetric block over distinct global indices, emitted as lower
// triangle triplets (all entries, so the pattern never changes).
void emit_block(Triplets& t, const std::vector<int>& idx, const MatrixXd& B) {
  const int n = static_cast<int>(idx.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (idx[i] >= idx[j]) t.emplace_back(idx[i], idx[j], B(i, j));
    }
}

template <class T>
std::array<T, 9> rotation_of_normalized(const qops::Q4<T>& xi) {
  return qops::rotation(qops::normalized(xi));
}

// Contact contributions of one pair for one interval, on local inputs
// u = (xi 4, v_next 6, lambda 1, w 8): the velocity-row terms
// -dt M^-1 n~ lambda (6) and the gap a = Phi + dt n~^T v_next.
template <class T>
std::array<T, 7> contact_terms(const std::array<T, 19>& u, double dt, const Vec6& minv) {
  const qops::Q4<T> xi = qops::normalized(qops::Q4<T>{u[0], u[1], u[2], u[3]});
  const qops::Q4<T> n_xi{u[15], u[16], u[17], u[18]};
  const qops::V3<T> rot = qops::rate_map_transpose(xi, n_xi);
  std::array<T, 6> nt{u[12], u[13], u[14], 0.5 * rot[0], 0.5 * rot[1], 0.5 * rot[2]};
  std::array<T, 7> out;
  T a = u[11];
  for (int i = 0; i < 6; ++i) {
    out[i] = (-dt * minv[i]) * nt[i] * u[10];
    a = a + dt * nt[i] * u[4 + i];
  }
  out[6] = a;
  return out;
}

// d N(q) / dq for N(q) = (rho, xi / |xi|).
Mat7 normalization_jacobian(const Quat& xi) {
  Mat7 D = Mat7::Zero();
  D.topLeftCorner<3, 3>().setIdentity();
  const double n = xi.norm();
  const Quat u = xi / n;
  D.bottomRightCorner<4, 4>() = (Eigen::Matrix4d::Identity() - u * u.transpose()) / n;
  return D;
}

// sum_m c_m d^2 N_m / dq^2 (only the quaternion block is nonzero).
Mat7 normalization_curvature(const Quat& xi, const Vec7& c) {
  using J = ad::Jet2<4>;
  qops::Q4<J> q{J::variable(xi[0], 0), J::variable(xi[1], 1), J::variable(xi[2], 2),
                J::variable(xi[3], 3)};
  const qops::Q4<J> u = qops::normalized(q);
  Mat7 H = Mat7::Zero();
  for (int m = 0; m < 4; ++m) H.bottomRightCorner<4, 4>() += c[3 + m] * u[m].h;
  return H;
}

}  // namespace

// ---------------------------------------------------------------------------
// OcpConfig

void OcpConfig::validate() const {
  if (N < 1) throw ConfigError("N must be >= 1");
  if (n_s < 1) throw ConfigError("n_s must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (static_cast<int>(rho_dir.size()) != n_s)
    throw ConfigError("rho_dir must list one direction per scenario");
  for (const Vec3& d : rho_dir) {
    const double n = d.norm();
    if (n != 0.0 && std::abs(n - 1.0) > 1e-3) throw ConfigError("rho_dir entries must be unit vectors or zero");
  }
  if (!(delta_hat >= 0.0)) throw ConfigError("delta_hat must be nonnegative");
  for (double b : beta_r)
    if (!(b >= 0.0)) throw ConfigError("beta_r weights must be nonnegative");
  for (double b : beta_c)
    if (!(b >= 0.0)) throw ConfigError("beta_c weights must be nonnegative");
  if (!(k_t > 0.0) || !(k_r > 0.0)) throw ConfigError("k_t and k_r must be positive");
  if (n_hom < 1) throw ConfigError("n_hom must be >= 1");
  if (!(tau_1 > 0.0) || !(sigma_1 > 0.0) || !(mu_init_1 > 0.0))
    throw ConfigError("tau_1, sigma_1 and mu_init_1 must be positive");
  for (double k : {kappa_tau, kappa_sigma, kappa_mu})
    if (!(k > 0.0 && k < 1.0)) throw ConfigError("kappa values must lie in (0, 1)");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  if (iteration_budget < 0) throw ConfigError("iteration_budget must be >= 0");
  if (std::abs(x0.q.orientation.norm() - 1.0) > 1e-9 || std::abs(goal.orientation.norm() - 1.0) > 1e-9)
    throw ConfigError("initial and goal orientations must be unit quaternions");
}

std::vector<Pose> OcpConfig::offsets() const {
  std::vector<Pose> out;
  for (const Vec3& d : rho_dir) {
    Pose p;
    p.position = delta_hat * d;
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// DecisionLayout

DecisionLayout::DecisionLayout(int N, int n_s, int num_pairs)
    : N_(N), n_s_(n_s), P_(num_pairs), force_base_(13 * (N + 1) * (n_s + 1)) {
  if (N < 1 || n_s < 1 || num_pairs < 0) throw ConfigError("inconsistent layout dimensions");
}

DecisionLayout::Entry DecisionLayout::describe(int index) const {
  if (index < 0 || index >= num_variables()) throw ConfigError("variable index out of range");
  Entry e;
  if (index >= force_base_) {
    const int r = index - force_base_;
    e.kind = Kind::kForce;
    e.component = r % P_;
    e.step = (r / P_) % N_;
    e.scenario = r / (P_ * N_);
    return e;
  }
  const int block = index / (13 * (N_ + 1));
  const int r = index % (13 * (N_ + 1));
  e.kind = block == 0 ? Kind::kReference : Kind::kCompliant;
  e.scenario = block - 1;
  e.step = r / 13;
  e.component = r % 13;
  return e;
}

Vec13 DecisionLayout::state(const VectorXd& x, int scenario, int k) const {
  const int base = scenario < 0 ? reference(k) : compliant(scenario, k);
  return x.segment<13>(base);
}

VectorXd DecisionLayout::forces(const VectorXd& x, int scenario, int k) const {
  return x.segment(force(scenario, k, 0), P_);
}

// ---------------------------------------------------------------------------
// Cost

CostValue cost_eval(const VectorXd& x, const DecisionLayout& layout, const OcpConfig& config,
                    bool gauss_newton) {
  const int n = layout.num_variables();
  if (x.size() != n) throw ConfigError("cost_eval: variable vector has wrong size");
  CostValue out;
  out.gradient = VectorXd::Zero(n);
  Triplets t;
  const Mat3 Rg = rotation_matrix(config.goal.orientation);

  auto add_trajectory = [&](int scenario, const std::array<double, 4>& beta) {
    for (int k = 1; k <= layout.N(); ++k) {
      const int base = scenario < 0 ? layout.reference(k) : layout.compliant(scenario, k);
      for (int i = 0; i < 6; ++i) {
        const double w = i < 3 ? beta[0] : beta[1];
        const double v = x[base + 7 + i];
        out.value += w * v * v;
        out.gradient[base + 7 + i] += 2.0 * w * v;
        t.emplace_back(base + 7 + i, base + 7 + i, 2.0 * w);
      }
    }
    const int base = scenario < 0 ? layout.reference(layout.N()) : layout.compliant(scenario, layout.N());
    for (int i = 0; i < 3; ++i) {
      const double e = x[base + i] - config.goal.position[i];
      out.value += beta[2] * e * e;
      out.gradient[base + i] += 2.0 * beta[2] * e;
      t.emplace_back(base + i, base + i, 2.0 * beta[2]);
    }
    using J = ad::Jet2<4>;
    qops::Q4<J> xi{J::variable(x[base + 3], 0), J::variable(x[base + 4], 1), J::variable(x[base + 5], 2),
                   J::variable(x[base + 6], 3)};
    const auto R = rotation_of_normalized(xi);
    J f(0.0);
    Eigen::Matrix<double, 9, 4> Jr;
    for (int i = 0; i < 9; ++i) {
      const J d = R[i] - Rg(i / 3, i % 3);
      f = f + d * d;
      Jr.row(i) = d.g.transpose();
    }
    out.value += beta[3] * f.v;
    out.gradient.segment<4>(base + 3) += beta[3] * f.g;
    const Eigen::Matrix4d H = gauss_newton ? Eigen::Matrix4d(2.0 * Jr.transpose() * Jr) : f.h;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j <= i; ++j) t.emplace_back(base + 3 + i, base + 3 + j, beta[3] * H(i, j));
  };

  add_trajectory(-1, config.beta_r);
  for (int l = 0; l < layout.num_scenarios(); ++l) add_trajectory(l, config.beta_c);
  out.hessian.resize(n, n);
  out.hessian.setFromTriplets(t.begin(), t.end());
  return out;
}

// ---------------------------------------------------------------------------
// OcpProblem

OcpProblem::OcpProblem(const OcpConfig& config, const BodySpec& body)
    : config_(config), body_(body) {
  config_.validate();
  body_.validate();
  pairs_ = make_contact_pairs(body_);
  offsets_ = config_.offsets();
  gains_ = ImpedanceGains::critically_damped(config_.k_t, config_.k_r, body_);
  layout_ = DecisionLayout(config_.N, config_.n_s, body_.num_pairs());
  minv_ = body_.inverse_mass_diagonal();
  set_parameters(config_.tau_1, config_.sigma_1);
}

void OcpProblem::set_parameters(double tau, double sigma) {
  if (!(tau > 0.0) || !(sigma > 0.0)) throw ConfigError("tau and sigma must be positive");
  if (tau != tau_) contacts_valid_ = false;
  tau_ = tau;
  sigma_ = sigma;
}

IpSettings OcpProblem::collision_settings() const {
  IpSettings s;
  s.tau = tau_;
  return s;
}

int OcpProblem::num_equalities() const {
  const int N = config_.N, P = layout_.num_pairs();
  const int per = 13 + (config_.mode == ComplementarityMode::kSmoothing ? P : 0);
  return 13 + 7 * N + 13 * config_.n_s + config_.n_s * N * per;
}

int OcpProblem::num_inequalities() const {
  const int P = layout_.num_pairs();
  const int per = P * (config_.mode == ComplementarityMode::kRelaxation ? 2 : 1);
  return config_.n_s * config_.N * per;
}

int OcpProblem::scenario_eq_base(int l, int k) const {
  const int N = config_.N, P = layout_.num_pairs();
  const int per = 13 + (config_.mode == ComplementarityMode::kSmoothing ? P : 0);
  return 13 + 7 * N + 13 * config_.n_s + (l * N + k) * per;
}

int OcpProblem::scenario_ineq_base(int l, int k) const {
  const int P = layout_.num_pairs();
  const int per = P * (config_.mode == ComplementarityMode::kRelaxation ? 2 : 1);
  return (l * config_.N + k) * per;
}

VectorXd OcpProblem::lower_bounds() const {
  VectorXd lb = VectorXd::Constant(num_variables(), -std::numeric_limits<double>::infinity());
  lb.tail(num_variables() - layout_.num_state_variables()).setZero();
  return lb;
}

void OcpProblem::update_contacts(const VectorXd& x, bool first_order) {
  const int N = config_.N, S = config_.n_s, P = layout_.num_pairs();
  if (static_cast<int>(contacts_.size()) != N * S) {
    contacts_.assign(N * S, StepContacts{});
    contacts_valid_ = false;
  }
  std::vector<int> todo;
  for (int l = 0; l < S; ++l)
    for (int k = 0; k < N; ++k) {
      const int idx = l * N + k;
      const Pose q = normalize_pose(Pose::from_vector(x.segment<7>(layout_.compliant(l, k))));
      StepContacts& sc = contacts_[idx];
      const bool same = contacts_valid_ && static_cast<int>(sc.eval.size()) == P &&
                        sc.q.vector() == q.vector() && (sc.first || !first_order);
      if (same) continue;
      sc.q = q;
      sc.first = first_order;
      sc.eval.assign(P, ContactEvaluation{});
      todo.push_back(idx);
    }
  contacts_valid_ = true;
  if (todo.empty()) return;
  const auto t0 = Clock::now();
  const IpSettings settings = collision_settings();
  const DerivativeLevel level = first_order ? DerivativeLevel::kFirst : DerivativeLevel::kNominal;
  const long items = static_cast<long>(todo.size()) * P;
  bool failed = false;
#if defined(ASMPLAN_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic, 4)
#endif
  for (long it = 0; it < items; ++it) {
    const int idx = todo[it / P];
    const int j = static_cast<int>(it % P);
    StepContacts& sc = contacts_[idx];
    const std::uint64_t key = static_cast<std::uint64_t>(idx) * P + j;
    try {
      sc.eval[j] = evaluate_contact(pairs_[j], sc.q, settings, level, {}, item_seed(config_.seed, key));
    } catch (const std::exception&) {
      sc.eval[j] = ContactEvaluation{};
    }
  }
  for (int idx : todo)
    for (int j = 0; j < P; ++j)
      if (!contacts_[idx].eval[j].ok() || (first_order && !contacts_[idx].eval[j].first)) failed = true;
  times_.collision += seconds_since(t0);
  if (failed) {
    contacts_valid_ = false;
    throw CollisionFailure("collision evaluation failed inside the planning problem");
  }
}

void OcpProblem::evaluate(const VectorXd& x, bool derivatives, NlpEvaluation& out) {
  const int n = num_variables();
  if (x.size() != n) throw ConfigError("variable vector has wrong size");
  const auto t_start = Clock::now();
  const double collision_before = times_.collision;
  update_contacts(x, derivatives);

  const int N = config_.N, S = config_.n_s, P = layout_.num_pairs();
  const double dt = config_.dt;
  const bool smoothing = config_.mode == ComplementarityMode::kSmoothing;
  out.c = VectorXd::Zero(num_equalities());
  out.d = VectorXd::Zero(num_inequalities());
  Triplets tc, td;

  const CostValue cost = cost_eval(x, layout_, config_, false);
  out.f = cost.value;
  if (derivatives) out.grad = cost.gradient;

  // Initial reference state.
  const Vec13 x0 = config_.x0.vector();
  out.c.head<13>() = x.segment<13>(layout_.reference(0)) - x0;
  if (derivatives)
    for (int i = 0; i < 13; ++i) tc.emplace_back(i, layout_.reference(0) + i, 1.0);

  // Reference integration with Q(q_r,k).
  for (int k = 0; k < N; ++k) {
    const int row = 13 + 7 * k;
    const int a = layout_.reference(k), b = layout_.reference(k + 1);
    const Quat xi = x.segment<4>(a + 3);
    const Vec3 om = x.segment<3>(b + 10);
    out.c.segment<3>(row) = x.segment<3>(b) - x.segment<3>(a) - dt * x.segment<3>(b + 7);
    out.c.segment<4>(row + 3) = x.segment<4>(b + 3) - xi - 0.5 * dt * quaternion_rate_matrix(xi) * om;
    if (derivatives) {
      for (int i = 0; i < 3; ++i) {
        tc.emplace_back(row + i, b + i, 1.0);
        tc.emplace_back(row + i, a + i, -1.0);
        tc.emplace_back(row + i, b + 7 + i, -dt);
      }
      const Eigen::Matrix4d dxi = -Eigen::Matrix4d::Identity() - 0.5 * dt * omega_xi_jacobian(om);
      const Mat43 dom = -0.5 * dt * quaternion_rate_matrix(xi);
      for (int i = 0; i < 4; ++i) {
        tc.emplace_back(row + 3 + i, b + 3 + i, 1.0);
        for (int j = 0; j < 4; ++j) tc.emplace_back(row + 3 + i, a + 3 + j, dxi(i, j));
        for (int j = 0; j < 3; ++j) tc.emplace_back(row + 3 + i, b + 10 + j, dom(i, j));
      }
    }
  }

  // Compliant initial states.
  for (int l = 0; l < S; ++l) {
    const int row = 13 + 7 * N + 13 * l;
    const Vec13 xc0 = state_perturb_inverse(config_.x0, offsets_[l]).vector();
    out.c.segment<13>(row) = x.segment<13>(layout_.compliant(l, 0)) - xc0;
    if (derivatives)
      for (int i = 0; i < 13; ++i) tc.emplace_back(row + i, layout_.compliant(l, 0) + i, 1.0);
  }

  // Time stepping per scenario and interval.
  for (int l = 0; l < S; ++l) {
    for (int k = 0; k < N; ++k) {
      const int row = scenario_eq_base(l, k);
      const int irow = scenario_ineq_base(l, k);
      const int a = layout_.compliant(l, k), b = layout_.compliant(l, k + 1);
      const int r1 = layout_.reference(k + 1);
      const Quat xi1 = x.segment<4>(b + 3);
      const Vec3 om1 = x.segment<3>(b + 10);

      out.c.segment<3>(row) = x.segment<3>(b) - x.segment<3>(a) - dt * x.segment<3>(b + 7);
      out.c.segment<4>(row + 3) = xi1 - x.segment<4>(a + 3) - 0.5 * dt * quaternion_rate_matrix(xi1) * om1;
      if (derivatives) {
        for (int i = 0; i < 3; ++i) {
          tc.emplace_back(row + i, b + i, 1.0);
          tc.emplace_back(row + i, a + i, -1.0);
          tc.emplace_back(row + i, b + 7 + i, -dt);
        }
        const Eigen::Matrix4d dxi = Eigen::Matrix4d::Identity() - 0.5 * dt * omega_xi_jacobian(om1);
        const Mat43 dom = -0.5 * dt * quaternion_rate_matrix(xi1);
        for (int i = 0; i < 4; ++i) {
          tc.emplace_back(row + 3 + i, a + 3 + i, -1.0);
          for (int j = 0; j < 4; ++j) tc.emplace_back(row + 3 + i, b + 3 + j, dxi(i, j));
          for (int j = 0; j < 3; ++j) tc.emplace_back(row + 3 + i, b + 10 + j, dom(i, j));
        }
      }

      // Velocity rows: v+ - v - dt M^-1 (U + sum n~ lambda).
      Eigen::Matrix<double, 6, 13> dUr, dUc;
      const Vec6 U = impedance_wrench_normalized(x.segment<13>(r1), x.segment<13>(b), offsets_[l], gains_,
                                                 derivatives ? &dUr : nullptr, derivatives ? &dUc : nullptr) +
                     body_.gravity_wrench;
      Vec6 hv = x.segment<6>(b + 7) - x.segment<6>(a + 7) - dt * minv_.cwiseProduct(U);
      if (derivatives) {
        for (int i = 0; i < 6; ++i) {
          tc.emplace_back(row + 7 + i, b + 7 + i, 1.0);
          tc.emplace_back(row + 7 + i, a + 7 + i, -1.0);
          for (int j = 0; j < 13; ++j) {
            tc.emplace_back(row + 7 + i, r1 + j, -dt * minv_[i] * dUr(i, j));
            tc.emplace_back(row + 7 + i, b + j, -dt * minv_[i] * dUc(i, j));
          }
        }
      }

      const StepContacts& sc = contacts_[l * N + k];
      const Quat xi0 = x.segment<4>(a + 3);
      const Mat7 DN = derivatives ? normalization_jacobian(xi0) : Mat7::Zero();
      for (int j = 0; j < P; ++j) {
        const ContactEvaluation& ev = sc.eval[j];
        const int lam_idx = layout_.force(l, k, j);
        const double lam = x[lam_idx];
        using J1 = ad::Jet1<19>;
        std::array<J1, 19> u;
        for (int i = 0; i < 4; ++i) u[i] = J1::variable(xi0[i], i);
        for (int i = 0; i < 6; ++i) u[4 + i] = J1::variable(x[b + 7 + i], 4 + i);
        u[10] = J1::variable(lam, 10);
        for (int i = 0; i < 8; ++i) u[11 + i] = J1::variable(ev.info.w[i], 11 + i);
        const auto terms = contact_terms(u, dt, minv_);
        for (int i = 0; i < 6; ++i) hv[i] += terms[i].v;
        const double gap = terms[6].v;
        out.d[irow + j] = gap;
        if (smoothing) {
          out.c[row + 13 + j] = gap * lam - sigma_;
        } else {
          out.d[irow + P + j] = sigma_ - gap * lam;
        }
        if (!derivatives) continue;
        // Chain through u = u(q_k, v_k+1, lambda): w = w(N(q_k)).
        const Eigen::Matrix<double, 8, 7> Dw = ev.first->D_w * DN;
        auto local = [&](const J1& f, Eigen::Matrix<double, 7, 1>& dq, Vec6& dv, double& dl) {
          dq = Dw.transpose() * f.g.tail<8>();
          dq.tail<4>() += f.g.head<4>();
          dv = f.g.segment<6>(4);
          dl = f.g[10];
        };
        Eigen::Matrix<double, 7, 1> dq;
        Vec6 dv;
        double dl = 0.0;
        for (int i = 0; i < 6; ++i) {
          local(terms[i], dq, dv, dl);
          for (int m = 0; m < 7; ++m) tc.emplace_back(row + 7 + i, a + m, dq[m]);
          tc.emplace_back(row + 7 + i, lam_idx, dl);
        }
        local(terms[6], dq, dv, dl);
        for (int m = 0; m < 7; ++m) td.emplace_back(irow + j, a + m, dq[m]);
        for (int m = 0; m < 6; ++m) td.emplace_back(irow + j, b + 7 + m, dv[m]);
        if (smoothing) {
          for (int m = 0; m < 7; ++m) tc.emplace_back(row + 13 + j, a + m, lam * dq[m]);
          for (int m = 0; m < 6; ++m) tc.emplace_back(row + 13 + j, b + 7 + m, lam * dv[m]);
          tc.emplace_back(row + 13 + j, lam_idx, gap);
        } else {
          for (int m = 0; m < 7; ++m) td.emplace_back(irow + P + j, a + m, -lam * dq[m]);
          for (int m = 0; m < 6; ++m) td.emplace_back(irow + P + j, b + 7 + m, -lam * dv[m]);
          td.emplace_back(irow + P + j, lam_idx, -gap);
        }
      }
      out.c.segment<6>(row + 7) = hv;
    }
  }

  if (derivatives) {
    out.Jc.resize(num_equalities(), n);
    out.Jc.setFromTriplets(tc.begin(), tc.end());
    out.Jd.resize(num_inequalities(), n);
    out.Jd.setFromTriplets(td.begin(), td.end());
  }
  times_.other += seconds_since(t_start) - (times_.collision - collision_before);
}

void OcpProblem::lagrangian_hessian(const VectorXd& x, double obj_factor, const VectorXd& y_c,
                                    const VectorXd& y_d, SpMat& H) {
  const int n = num_variables();
  const auto t_start = Clock::now();
  const double collision_before = times_.collision;
  update_contacts(x, true);

  const int N = config_.N, S = config_.n_s, P = layout_.num_pairs();
  const double dt = config_.dt;
  const bool smoothing = config_.mode == ComplementarityMode::kSmoothing;

  Triplets t;
  const CostValue cost = cost_eval(x, layout_, config_, false);
  for (int k = 0; k < cost.hessian.outerSize(); ++k)
    for (SpMat::InnerIterator it(cost.hessian, k); it; ++it)
      t.emplace_back(it.row(), it.col(), obj_factor * it.value());

  // Reference integration: bilinear xi_k / omega_k+1 terms.
  for (int k = 0; k < N; ++k) {
    const int row = 13 + 7 * k;
    const int a = layout_.reference(k), b = layout_.reference(k + 1);
    const Mat43 C = -0.5 * dt * omega_cross_hessian(y_c.segment<4>(row + 3));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) t.emplace_back(b + 10 + j, a + 3 + i, C(i, j));
  }

  // Per interval: local contact Jets, then the normalization chain.
  struct Local {
    Vec8 g_w = Vec8::Zero();
    Mat7 S = Mat7::Zero();
  };
  std::vector<Local> locals(static_cast<std::size_t>(S) * N * P);
  std::vector<Eigen::Matrix<double, 19, 19>> huu(locals.size());
  std::vector<Eigen::Matrix<double, 19, 1>> gu(locals.size());
  for (int l = 0; l < S; ++l)
    for (int k = 0; k < N; ++k) {
      const int row = scenario_eq_base(l, k);
      const int irow = scenario_ineq_base(l, k);
      const int a = layout_.compliant(l, k), b = layout_.compliant(l, k + 1);
      const StepContacts& sc = contacts_[l * N + k];
      for (int j = 0; j < P; ++j) {
        const std::size_t id = (static_cast<std::size_t>(l) * N + k) * P + j;
        using J2 = ad::Jet2<19>;
        std::array<J2, 19> u;
        for (int i = 0; i < 4; ++i) u[i] = J2::variable(x[a + 3 + i], i);
        for (int i = 0; i < 6; ++i) u[4 + i] = J2::variable(x[b + 7 + i], 4 + i);
        u[10] = J2::variable(x[layout_.force(l, k, j)], 10);
        for (int i = 0; i < 8; ++i) u[11 + i] = J2::variable(sc.eval[j].info.w[i], 11 + i);
        const auto terms = contact_terms(u, dt, minv_);
        J2 f(0.0);
        for (int i = 0; i < 6; ++i) f = f + y_c[row + 7 + i] * terms[i];
        f = f + y_d[irow + j] * terms[6];
        if (smoothing) {
          f = f + y_c[row + 13 + j] * (terms[6] * u[10]);
        } else {
          f = f - y_d[irow + P + j] * (terms[6] * u[10]);
        }
        huu[id] = f.h;
        gu[id] = f.g;
        locals[id].g_w = f.g.tail<8>();
      }
    }

  const auto t_col = Clock::now();
  const long items = static_cast<long>(locals.size());
#if defined(ASMPLAN_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic, 8)
#endif
  for (long id = 0; id < items; ++id) {
    const int j = static_cast<int>(id % P);
    const int idx = static_cast<int>(id / P);
    const StepContacts& sc = contacts_[idx];
    const ContactEvaluation& ev = sc.eval[j];
    locals[id].S = second_derivatives(ev.gamma, pairs_[j], sc.q, *ev.first, locals[id].g_w);
  }
  times_.collision += seconds_since(t_col);

  std::vector<int> idx(13 + P);
  MatrixXd B(13 + P, 13 + P);
  for (int l = 0; l < S; ++l)
    for (int k = 0; k < N; ++k) {
      const int a = layout_.compliant(l, k), b = layout_.compliant(l, k + 1);
      const StepContacts& sc = contacts_[l * N + k];
      const Quat xi0 = x.segment<4>(a + 3);
      const Mat7 DN = normalization_jacobian(xi0);
      for (int m = 0; m < 7; ++m) idx[m] = a + m;
      for (int m = 0; m < 6; ++m) idx[7 + m] = b + 7 + m;
      for (int j = 0; j < P; ++j) idx[13 + j] = layout_.force(l, k, j);
      B.setZero();
      for (int j = 0; j < P; ++j) {
        const std::size_t id = (static_cast<std::size_t>(l) * N + k) * P + j;
        const ContactEvaluation& ev = sc.eval[j];
        const Eigen::Matrix<double, 8, 7> Dw = ev.first->D_w * DN;
        // A maps z = (q_k 7, v 6, lambda_j 1) to u.
        Eigen::Matrix<double, 19, 14> A = Eigen::Matrix<double, 19, 14>::Zero();
        A.block<4, 4>(0, 3).setIdentity();
        A.block<6, 6>(4, 7).setIdentity();
        A(10, 13) = 1.0;
        A.block<8, 7>(11, 0) = Dw;
        Eigen::Matrix<double, 14, 14> Hz = A.transpose() * huu[id] * A;
        const Vec7 c = ev.first->D_w.transpose() * locals[id].g_w;
        Hz.topLeftCorner<7, 7>() += DN.transpose() * locals[id].S * DN + normalization_curvature(xi0, c);
        std::array<int, 14> map;
        for (int m = 0; m < 13; ++m) map[m] = m;
        map[13] = 13 + j;
        for (int r = 0; r < 14; ++r)
          for (int s = 0; s < 14; ++s) B(map[r], map[s]) += Hz(r, s);
      }
      emit_block(t, idx, B);
    }

  // Impedance wrench in the velocity rows and the compliant pose bilinear terms.
  std::vector<int> idx26(26);
  MatrixXd B26(26, 26);
  for (int l = 0; l < S; ++l)
    for (int k = 0; k < N; ++k) {
      const int row = scenario_eq_base(l, k);
      const int b = layout_.compliant(l, k + 1), r1 = layout_.reference(k + 1);
      using J2 = ad::Jet2<26>;
      std::array<J2, 13> xr, xc;
      for (int i = 0; i < 13; ++i) {
        xr[i] = J2::variable(x[r1 + i], i);
        xc[i] = J2::variable(x[b + i], 13 + i);
      }
      const auto U = perturbed_impedance_wrench_t(xr, xc, offsets_[l], gains_);
      J2 f(0.0);
      for (int i = 0; i < 6; ++i) f = f + (-dt * minv_[i] * y_c[row + 7 + i]) * U[i];
      B26 = f.h;
      const Mat43 C = -0.5 * dt * omega_cross_hessian(y_c.segment<4>(row + 3));
      B26.block<4, 3>(16, 23) += C;
      B26.block<3, 4>(23, 16) += C.transpose();
      for (int i = 0; i < 13; ++i) {
        idx26[i] = r1 + i;
        idx26[13 + i] = b + i;
      }
      emit_block(t, idx26, B26);
    }

  H.resize(n, n);
  H.setFromTriplets(t.begin(), t.end());
  times_.other += seconds_since(t_start) - (times_.collision - collision_before);
}

void OcpProblem::gauss_newton_hessian(const VectorXd& x, SpMat& H) {
  const auto t0 = Clock::now();
  H = cost_eval(x, layout_, config_, true).hessian;
  times_.other += seconds_since(t0);
}

VectorXd OcpProblem::gaps(const VectorXd& x) {
  NlpEvaluation e;
  evaluate(x, false, e);
  const int P = layout_.num_pairs();
  VectorXd g(config_.n_s * config_.N * P);
  for (int l = 0; l < config_.n_s; ++l)
    for (int k = 0; k < config_.N; ++k)
      g.segment((l * config_.N + k) * P, P) = e.d.segment(scenario_ineq_base(l, k), P);
  return g;
}

// ---------------------------------------------------------------------------

VectorXd initial_guess(const OcpProblem& problem) {
  const OcpConfig& cfg = problem.config();
  const DecisionLayout& L = problem.layout();
  VectorXd x = VectorXd::Zero(L.num_variables());
  RigidState x0 = cfg.x0;
  x0.v.setZero();
  for (int k = 0; k <= cfg.N; ++k) x.segment<13>(L.reference(k)) = x0.vector();
  IpSettings settings;
  settings.tau = cfg.tau_1;
  for (int l = 0; l < cfg.n_s; ++l) {
    const RigidState xc = state_perturb_inverse(x0, problem.offsets()[l]);
    for (int k = 0; k <= cfg.N; ++k) x.segment<13>(L.compliant(l, k)) = xc.vector();
    const Pose q = normalize_pose(xc.q);
    for (int j = 0; j < L.num_pairs(); ++j) {
      const ContactEvaluation ev = evaluate_contact(problem.pairs()[j], q, settings, DerivativeLevel::kNominal, {},
                                                    item_seed(cfg.seed, static_cast<std::uint64_t>(l * L.num_pairs() + j)));
      if (!ev.ok()) throw CollisionFailure("collision evaluation failed at the initial pose");
      const double lam = cfg.sigma_1 / std::max(ev.info.phi(), 0.01);
      for (int k = 0; k < cfg.N; ++k) x[L.force(l, k, j)] = lam;
    }
  }
  return x;
}

SolutionMetrics validate_solution(const VectorXd& x, OcpProblem& problem, bool rollout_check) {
  const OcpConfig& cfg = problem.config();
  const DecisionLayout& L = problem.layout();
  SolutionMetrics m;
  const Mat3 Rg = rotation_matrix(cfg.goal.orientation);
  for (int l = 0; l < cfg.n_s; ++l) {
    const Vec13 xN = L.state(x, l, cfg.N);
    m.terminal_position_error.push_back((xN.head<3>() - cfg.goal.position).norm());
    const Quat xi = xN.segment<4>(3);
    m.terminal_rotation_error.push_back((rotation_matrix_unchecked(xi / xi.norm()) - Rg).norm());
  }
  NlpEvaluation e;
  problem.evaluate(x, false, e);
  double viol = e.c.size() ? e.c.lpNorm<Eigen::Infinity>() : 0.0;
  for (int i = 0; i < e.d.size(); ++i) viol = std::max(viol, -e.d[i]);
  for (int i = L.num_state_variables(); i < L.num_variables(); ++i) viol = std::max(viol, -x[i]);
  m.constraint_violation = viol;
  const VectorXd g = problem.gaps(x);
  const int P = L.num_pairs();
  for (int l = 0; l < cfg.n_s; ++l)
    for (int k = 0; k < cfg.N; ++k)
      for (int j = 0; j < P; ++j)
        m.complementarity = std::max(m.complementarity, g[(l * cfg.N + k) * P + j] * x[L.force(l, k, j)]);

  if (rollout_check && cfg.mode == ComplementarityMode::kSmoothing) {
    std::vector<Vec13> ref;
    for (int k = 0; k <= cfg.N; ++k) ref.push_back(L.state(x, -1, k));
    for (int l = 0; l < cfg.n_s; ++l) {
      const RigidState xc0 = RigidState::from_vector(L.state(x, l, 0));
      const Rollout r = rollout(problem.body(), problem.pairs(), xc0, ref, problem.gains(), problem.offsets()[l],
                                cfg.dt, problem.collision_settings(), problem.sigma(), cfg.N);
      if (r.failed_step) m.rollout_ok = false;
      for (std::size_t k = 0; k < r.states.size(); ++k) {
        const double d = (r.states[k].vector() - L.state(x, l, static_cast<int>(k))).lpNorm<Eigen::Infinity>();
        m.rollout_deviation = std::max(m.rollout_deviation, d);
      }
    }
  }
  return m;
}

namespace {

void write_row(std::ostream& os, const double* v, int n) {
  char buf[40];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, ",%.17g", v[i]);
    os << buf;
  }
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const VectorXd& x, const DecisionLayout& layout, int scenario,
                          double dt) {
  os << "step,t,rho_x,rho_y,rho_z,xi_w,xi_x,xi_y,xi_z,nu_x,nu_y,nu_z,omega_x,omega_y,omega_z\n";
  char buf[40];
  for (int k = 0; k <= layout.N(); ++k) {
    std::snprintf(buf, sizeof buf, "%d,%.17g", k, k * dt);
    os << buf;
    const Vec13 s = layout.state(x, scenario, k);
    write_row(os, s.data(), 13);
    os << '\n';
  }
}

void write_forces_csv(std::ostream& os, const VectorXd& x, const DecisionLayout& layout) {
  os << "scenario,step";
  for (int j = 0; j < layout.num_pairs(); ++j) os << ",lambda_" << j;
  os << '\n';
  for (int l = 0; l < layout.num_scenarios(); ++l)
    for (int k = 0; k < layout.N(); ++k) {
      os << l << ',' << k;
      const VectorXd f = layout.forces(x, l, k);
      write_row(os, f.data(), layout.num_pairs());
      os << '\n';
    }
}

}  // namespace asmplan
