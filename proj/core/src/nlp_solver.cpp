#include "asmplan/nlp_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include <Eigen/LU>
#include <Eigen/SparseCholesky>

#include "asmplan/types.hpp"

namespace asmplan {

const char* to_string(HessianMode mode) {
  switch (mode) {
    case HessianMode::kExact: return "exact";
    case HessianMode::kGaussNewton: return "gauss-newton";
    case HessianMode::kLbfgs: return "lbfgs";
  }
  return "unknown";
}

HessianMode parse_hessian_mode(const std::string& name) {
  if (name == "exact") return HessianMode::kExact;
  if (name == "gauss-newton" || name == "gn") return HessianMode::kGaussNewton;
  if (name == "lbfgs" || name == "l-bfgs") return HessianMode::kLbfgs;
  throw ConfigError("unknown hessian mode '" + name + "'");
}

const char* to_string(NlpStatus status) {
  switch (status) {
    case NlpStatus::kConverged: return "converged";
    case NlpStatus::kIterationLimit: return "iteration_limit";
    case NlpStatus::kLineSearchFailure: return "line_search_failure";
    case NlpStatus::kNumericFailure: return "numeric_failure";
  }
  return "unknown";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }
double one_norm(const VectorXd& v) { return v.size() ? v.lpNorm<1>() : 0.0; }

SpMat scale_rows(const SpMat& J, const VectorXd& d) {
  SpMat out = J;
  for (int k = 0; k < out.outerSize(); ++k)
    for (SpMat::InnerIterator it(out, k); it; ++it) it.valueRef() *= d[it.row()];
  return out;
}

VectorXd row_max_abs(const SpMat& J) {
  VectorXd m = VectorXd::Zero(J.rows());
  for (int k = 0; k < J.outerSize(); ++k)
    for (SpMat::InnerIterator it(J, k); it; ++it)
      m[it.row()] = std::max(m[it.row()], std::abs(it.value()));
  return m;
}

// Scaled problem functions at one point.
struct Eval {
  double f = 0.0;
  VectorXd grad, c, d;
  SpMat Jc, Jd;
  bool has_derivatives = false;
};

// Compact limited-memory BFGS approximation B = gamma I + U C U^T.
class Lbfgs {
 public:
  explicit Lbfgs(int memory) : memory_(memory) {}

  int pairs() const { return static_cast<int>(s_.size()); }
  double gamma() const { return gamma_; }

  void update(const VectorXd& s, VectorXd y) {
    double ss = s.squaredNorm();
    if (!(ss > 1e-20)) return;
    VectorXd Bs = apply(s);
    double sBs = s.dot(Bs);
    double sy = s.dot(y);
    if (sy < 0.2 * sBs) {
      double theta = 0.8 * sBs / (sBs - sy);
      y = theta * y + (1.0 - theta) * Bs;
      sy = s.dot(y);
    }
    if (!(sy > 1e-14 * ss)) return;
    s_.push_back(s);
    y_.push_back(y);
    if (pairs() > memory_) {
      s_.erase(s_.begin());
      y_.erase(y_.begin());
    }
    gamma_ = std::clamp(y.squaredNorm() / sy, 1e-8, 1e8);
    rebuild();
  }

  VectorXd apply(const VectorXd& v) const {
    VectorXd out = gamma_ * v;
    if (pairs() == 0) return out;
    VectorXd t = U_.transpose() * v;
    out -= U_ * M_lu_.solve(t);
    return out;
  }

  const MatrixXd& U() const { return U_; }
  const MatrixXd& M() const { return M_; }

 private:
  void rebuild() {
    int m = pairs();
    int n = static_cast<int>(s_[0].size());
    MatrixXd S(n, m), Y(n, m);
    for (int i = 0; i < m; ++i) {
      S.col(i) = s_[i];
      Y.col(i) = y_[i];
    }
    MatrixXd SY = S.transpose() * Y;
    MatrixXd L = MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < i; ++j) L(i, j) = SY(i, j);
    M_.resize(2 * m, 2 * m);
    M_.topLeftCorner(m, m) = gamma_ * S.transpose() * S;
    M_.topRightCorner(m, m) = L;
    M_.bottomLeftCorner(m, m) = L.transpose();
    M_.bottomRightCorner(m, m) = -SY.diagonal().asDiagonal().toDenseMatrix();
    U_.resize(n, 2 * m);
    U_.leftCols(m) = gamma_ * S;
    U_.rightCols(m) = Y;
    M_lu_.compute(M_);
  }

  int memory_;
  double gamma_ = 1.0;
  std::vector<VectorXd> s_, y_;
  MatrixXd U_, M_;
  Eigen::FullPivLU<MatrixXd> M_lu_;
};

// Reduced primal-dual system
//   [W + Sx + dw I   Jc^T     Jd^T         ] [dx ]
//   [Jc              -dc I    0            ] [dyc]
//   [Jd              0        -Ss^-1 - dc I] [dyd]
class KktSystem {
 public:
  void assemble(const SpMat* W, double w_diag, const VectorXd& sigma_x, const SpMat& Jc,
                const SpMat& Jd, const VectorXd& sigma_s_inv, double delta_w, double delta_c) {
    int n = static_cast<int>(sigma_x.size());
    int mc = static_cast<int>(Jc.rows());
    int md = static_cast<int>(Jd.rows());
    n_ = n;
    m_ = mc + md;
    trip_.clear();
    trip_.reserve((W ? W->nonZeros() : 0) + Jc.nonZeros() + Jd.nonZeros() + n + m_);
    if (W) {
      for (int k = 0; k < W->outerSize(); ++k)
        for (SpMat::InnerIterator it(*W, k); it; ++it) {
          if (it.row() < it.col()) throw NumericFailure("Hessian callback returned upper-triangular entries");
          trip_.emplace_back(it.row(), it.col(), it.value());
        }
    }
    for (int i = 0; i < n; ++i) trip_.emplace_back(i, i, w_diag + sigma_x[i] + delta_w);
    for (int k = 0; k < Jc.outerSize(); ++k)
      for (SpMat::InnerIterator it(Jc, k); it; ++it) trip_.emplace_back(n + it.row(), it.col(), it.value());
    for (int k = 0; k < Jd.outerSize(); ++k)
      for (SpMat::InnerIterator it(Jd, k); it; ++it)
        trip_.emplace_back(n + mc + it.row(), it.col(), it.value());
    for (int i = 0; i < mc; ++i) trip_.emplace_back(n + i, n + i, -delta_c);
    for (int i = 0; i < md; ++i) trip_.emplace_back(n + mc + i, n + mc + i, -sigma_s_inv[i] - delta_c);
    K_.resize(n + m_, n + m_);
    K_.setFromTriplets(trip_.begin(), trip_.end());
    K_.makeCompressed();
  }

  // Returns true when the factorization succeeded with inertia (n, m, 0).
  bool factorize() {
    bool same = analyzed_ && K_.nonZeros() == pattern_nnz_ && K_.rows() == pattern_rows_ &&
                std::equal(K_.outerIndexPtr(), K_.outerIndexPtr() + K_.outerSize() + 1, outer_.begin()) &&
                std::equal(K_.innerIndexPtr(), K_.innerIndexPtr() + K_.nonZeros(), inner_.begin());
    if (!same) {
      ldlt_.analyzePattern(K_);
      analyzed_ = true;
      pattern_nnz_ = K_.nonZeros();
      pattern_rows_ = K_.rows();
      outer_.assign(K_.outerIndexPtr(), K_.outerIndexPtr() + K_.outerSize() + 1);
      inner_.assign(K_.innerIndexPtr(), K_.innerIndexPtr() + K_.nonZeros());
    }
    ldlt_.factorize(K_);
    if (ldlt_.info() != Eigen::Success) return false;
    const VectorXd& D = ldlt_.vectorD();
    int pos = 0, neg = 0;
    for (int i = 0; i < D.size(); ++i) {
      if (!std::isfinite(D[i]) || D[i] == 0.0) return false;
      (D[i] > 0 ? pos : neg)++;
    }
    return pos == n_ && neg == m_;
  }

  VectorXd solve(const VectorXd& rhs) const {
    VectorXd x = ldlt_.solve(rhs);
    for (int it = 0; it < 3; ++it) {
      VectorXd r = rhs - K_.selfadjointView<Eigen::Lower>() * x;
      if (inf_norm(r) <= 1e-14 * std::max(1.0, inf_norm(rhs))) break;
      x += ldlt_.solve(r);
    }
    return x;
  }

 private:
  int n_ = 0, m_ = 0;
  std::vector<Eigen::Triplet<double>> trip_;
  SpMat K_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
  bool analyzed_ = false;
  Eigen::Index pattern_nnz_ = -1, pattern_rows_ = -1;
  std::vector<int> outer_, inner_;
};

// Filter line search constants (Waechter and Biegler defaults).
constexpr double kGammaTheta = 1e-5;
constexpr double kGammaPhi = 1e-5;
constexpr double kEtaPhi = 1e-4;
constexpr double kSTheta = 1.1;
constexpr double kSPhi = 2.3;
constexpr double kKappaSoc = 0.99;
constexpr double kAlphaMinFrac = 0.05;
constexpr double kObjMaxInc = 5.0;

struct Reference {
  double theta, phi, gphi_d;
};

// Feasibility restoration problem over (x, p_c, n_c, n_d):
//   min rho sum(p_c + n_c + n_d) + zeta/2 |D (x - x_ref)|^2
//   s.t. c(x) - p_c + n_c = 0,  d(x) + n_d >= 0,  p, n >= 0,
// posed on the outer solver's scaled functions.
class RestorationProblem final : public NlpProblem {
 public:
  using EvalFn = std::function<void(const VectorXd&, bool, Eval&)>;
  using HessFn = std::function<void(const VectorXd&, const VectorXd&, const VectorXd&, SpMat&)>;

  RestorationProblem(NlpProblem& outer, EvalFn eval, HessFn hess, VectorXd x_ref, double zeta, double rho, int mc,
                     int md)
      : outer_(outer), eval_(std::move(eval)), hess_(std::move(hess)), xr_(std::move(x_ref)), zeta_(zeta), rho_(rho),
        n_(static_cast<int>(xr_.size())), mc_(mc), md_(md) {
    dr_ = VectorXd(n_);
    for (int i = 0; i < n_; ++i) dr_[i] = std::abs(xr_[i]) > 1.0 ? 1.0 / std::abs(xr_[i]) : 1.0;
  }

  int num_variables() const override { return n_ + 2 * mc_ + md_; }
  int num_equalities() const override { return mc_; }
  int num_inequalities() const override { return md_; }
  VectorXd lower_bounds() const override {
    VectorXd l = VectorXd::Zero(num_variables());
    l.head(n_) = outer_.lower_bounds();
    return l;
  }

  void evaluate(const VectorXd& z, bool derivatives, NlpEvaluation& out) override {
    const VectorXd x = z.head(n_);
    Eval e;
    eval_(x, derivatives, e);
    const VectorXd dx = dr_.cwiseProduct(x - xr_);
    out.f = rho_ * z.tail(2 * mc_ + md_).sum() + 0.5 * zeta_ * dx.squaredNorm();
    out.c = e.c - z.segment(n_, mc_) + z.segment(n_ + mc_, mc_);
    out.d = e.d + z.tail(md_);
    if (!derivatives) return;
    const int nz = num_variables();
    out.grad = VectorXd::Constant(nz, rho_);
    out.grad.head(n_) = zeta_ * dr_.cwiseProduct(dx);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(e.Jc.nonZeros() + 2 * mc_);
    for (int k = 0; k < e.Jc.outerSize(); ++k)
      for (SpMat::InnerIterator it(e.Jc, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < mc_; ++i) {
      t.emplace_back(i, n_ + i, -1.0);
      t.emplace_back(i, n_ + mc_ + i, 1.0);
    }
    out.Jc.resize(mc_, nz);
    out.Jc.setFromTriplets(t.begin(), t.end());
    t.clear();
    for (int k = 0; k < e.Jd.outerSize(); ++k)
      for (SpMat::InnerIterator it(e.Jd, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < md_; ++i) t.emplace_back(i, n_ + 2 * mc_ + i, 1.0);
    out.Jd.resize(md_, nz);
    out.Jd.setFromTriplets(t.begin(), t.end());
  }

  void lagrangian_hessian(const VectorXd& z, double obj_factor, const VectorXd& y_c, const VectorXd& y_d,
                          SpMat& H) override {
    SpMat Hx;
    hess_(z.head(n_), y_c, y_d, Hx);
    embed(Hx, obj_factor, H);
  }

  void gauss_newton_hessian(const VectorXd&, SpMat& H) override { embed(SpMat(n_, n_), 1.0, H); }

  EvalTimes eval_times() const override { return outer_.eval_times(); }

 private:
  void embed(const SpMat& Hx, double obj_factor, SpMat& H) const {
    const int nz = num_variables();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(Hx.nonZeros() + nz);
    for (int k = 0; k < Hx.outerSize(); ++k)
      for (SpMat::InnerIterator it(Hx, k); it; ++it)
        if (it.row() >= it.col()) t.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < n_; ++i) t.emplace_back(i, i, obj_factor * zeta_ * dr_[i] * dr_[i]);
    for (int i = n_; i < nz; ++i) t.emplace_back(i, i, 0.0);
    H.resize(nz, nz);
    H.setFromTriplets(t.begin(), t.end());
  }

  NlpProblem& outer_;
  EvalFn eval_;
  HessFn hess_;
  VectorXd xr_, dr_;
  double zeta_, rho_;
  int n_, mc_, md_;
};

class Solver {
 public:
  Solver(NlpProblem& problem, const NlpSettings& settings,
         const std::function<void(const IterationLog&)>& log)
      : p_(problem), set_(settings), log_(log), lbfgs_(settings.lbfgs_memory) {
    n_ = p_.num_variables();
    mc_ = p_.num_equalities();
    md_ = p_.num_inequalities();
    VectorXd lower = p_.lower_bounds();
    if (lower.size() != n_) throw ConfigError("lower_bounds size mismatch");
    for (int i = 0; i < n_; ++i)
      if (std::isfinite(lower[i])) {
        bidx_.push_back(i);
        lb_.push_back(lower[i]);
      }
    nb_ = static_cast<int>(bidx_.size());
  }

  NlpResult run(const NlpPoint& start) {
    auto t0 = Clock::now();
    EvalTimes e0 = p_.eval_times();
    NlpResult res;
    try {
      iterate(start, res);
    } catch (const NumericFailure& e) {
      res.status = NlpStatus::kNumericFailure;
      res.message = e.what();
    } catch (const CollisionFailure& e) {
      res.status = NlpStatus::kNumericFailure;
      res.message = e.what();
    } catch (const DegeneratePose& e) {
      res.status = NlpStatus::kNumericFailure;
      res.message = e.what();
    }
    if (x_.size() == n_) fill_point(res);
    EvalTimes e1 = p_.eval_times();
    res.iterations = iter_;
    res.time_total = seconds_since(t0);
    res.time_collision = e1.collision - e0.collision;
    res.time_other = e1.other - e0.other;
    res.time_solver = std::max(0.0, res.time_total - res.time_collision - res.time_other);
    return res;
  }

 private:
  // ---- evaluation -------------------------------------------------------
  void evaluate(const VectorXd& x, bool derivatives, Eval& e) {
    NlpEvaluation raw;
    p_.evaluate(x, derivatives, raw);
    if (raw.c.size() != mc_ || raw.d.size() != md_) throw NumericFailure("constraint size mismatch");
    if (!std::isfinite(raw.f) || !raw.c.allFinite() || !raw.d.allFinite())
      throw NumericFailure("non-finite problem values");
    e.f = sf_ * raw.f;
    e.c = dc_.cwiseProduct(raw.c);
    e.d = dd_.cwiseProduct(raw.d);
    e.has_derivatives = derivatives;
    if (derivatives) {
      if (!raw.grad.allFinite()) throw NumericFailure("non-finite gradient");
      e.grad = sf_ * raw.grad;
      e.Jc = scale_rows(raw.Jc, dc_);
      e.Jd = scale_rows(raw.Jd, dd_);
    }
  }

  void compute_scaling(const NlpEvaluation& raw) {
    double g = inf_norm(raw.grad);
    sf_ = g > set_.max_gradient ? set_.max_gradient / g : 1.0;
    dc_ = VectorXd::Ones(mc_);
    dd_ = VectorXd::Ones(md_);
    VectorXd rc = row_max_abs(raw.Jc), rd = row_max_abs(raw.Jd);
    for (int i = 0; i < mc_; ++i)
      if (rc[i] > set_.max_gradient) dc_[i] = set_.max_gradient / rc[i];
    for (int i = 0; i < md_; ++i)
      if (rd[i] > set_.max_gradient) dd_[i] = set_.max_gradient / rd[i];
  }

  // ---- residual pieces --------------------------------------------------
  VectorXd bound_gap(const VectorXd& x) const {
    VectorXd g(nb_);
    for (int j = 0; j < nb_; ++j) g[j] = x[bidx_[j]] - lb_[j];
    return g;
  }

  VectorXd grad_lagrangian(const Eval& e, const VectorXd& yc, const VectorXd& yd) const {
    VectorXd r = e.grad;
    if (mc_) r += e.Jc.transpose() * yc;
    if (md_) r += e.Jd.transpose() * yd;
    return r;
  }

  double theta(const Eval& e, const VectorXd& s) const { return one_norm(e.c) + one_norm(e.d - s); }

  double barrier(const Eval& e, const VectorXd& x, const VectorXd& s) const {
    double phi = e.f;
    for (int i = 0; i < md_; ++i) phi -= mu_ * std::log(s[i]);
    for (int j = 0; j < nb_; ++j) phi -= mu_ * std::log(x[bidx_[j]] - lb_[j]);
    return phi;
  }

  double kkt_error(double mu) const {
    VectorXd rx = grad_lagrangian(ev_, yc_, yd_);
    for (int j = 0; j < nb_; ++j) rx[bidx_[j]] -= zx_[j];
    VectorXd rs = -yd_ - zs_;
    double sum_mult = one_norm(yc_) + one_norm(yd_) + one_norm(zs_) + one_norm(zx_);
    int cnt_mult = mc_ + 2 * md_ + nb_;
    double sum_z = one_norm(zs_) + one_norm(zx_);
    int cnt_z = md_ + nb_;
    double smax = set_.s_max;
    double sd = cnt_mult ? std::max(smax, sum_mult / cnt_mult) / smax : 1.0;
    double sc = cnt_z ? std::max(smax, sum_z / cnt_z) / smax : 1.0;
    double dual = std::max(inf_norm(rx), inf_norm(rs)) / sd;
    double primal = std::max(inf_norm(ev_.c), inf_norm(ev_.d - s_));
    VectorXd gap = bound_gap(x_);
    double comp = 0.0;
    for (int i = 0; i < md_; ++i) comp = std::max(comp, std::abs(s_[i] * zs_[i] - mu));
    for (int j = 0; j < nb_; ++j) comp = std::max(comp, std::abs(gap[j] * zx_[j] - mu));
    return std::max({dual, primal, comp / sc});
  }

  // ---- initialization ---------------------------------------------------
  void initialize(const NlpPoint& start) {
    bool warm = start.y_c.size() == mc_ && start.z_d.size() == md_ && start.z_x.size() == n_;
    double push = warm ? set_.warm_bound_push : set_.bound_push;
    if (start.x.size() != n_) throw ConfigError("start point has wrong dimension");
    x_ = start.x;
    for (int j = 0; j < nb_; ++j) {
      double l = lb_[j];
      x_[bidx_[j]] = std::max(x_[bidx_[j]], l + push * std::max(1.0, std::abs(l)));
    }
    NlpEvaluation raw;
    p_.evaluate(x_, true, raw);
    if (!raw.grad.allFinite() || !std::isfinite(raw.f)) throw NumericFailure("non-finite values at the start point");
    compute_scaling(raw);
    evaluate(x_, true, ev_);

    s_.resize(md_);
    for (int i = 0; i < md_; ++i) s_[i] = std::max(ev_.d[i], push * std::max(1.0, std::abs(ev_.d[i])));
    mu_ = set_.mu_init;
    double theta0 = theta(ev_, s_);
    theta_max_ = 1e4 * std::max(1.0, theta0);
    theta_min_ = 1e-4 * std::max(1.0, theta0);
    filter_.clear();

    if (warm) {
      yc_ = start.y_c.cwiseQuotient(dc_) * sf_;
      zs_ = (start.z_d.cwiseQuotient(dd_) * sf_).cwiseMax(set_.warm_mult_push);
      yd_ = -zs_;
      zx_.resize(nb_);
      for (int j = 0; j < nb_; ++j) zx_[j] = std::max(start.z_x[bidx_[j]] * sf_, set_.warm_mult_push);
    } else {
      zs_ = VectorXd::Ones(md_);
      zx_ = VectorXd::Ones(nb_);
      least_squares_multipliers();
    }
  }

  void least_squares_multipliers() {
    yc_ = VectorXd::Zero(mc_);
    yd_ = VectorXd::Zero(md_);
    if (mc_ + md_ == 0) return;
    kkt_.assemble(nullptr, 1.0, VectorXd::Zero(n_), ev_.Jc, ev_.Jd, VectorXd::Ones(md_), 0.0, 1e-8);
    if (!kkt_.factorize()) return;
    VectorXd g = ev_.grad;
    for (int j = 0; j < nb_; ++j) g[bidx_[j]] -= zx_[j];
    VectorXd rhs(n_ + mc_ + md_);
    rhs << -g, VectorXd::Zero(mc_), zs_;
    VectorXd sol = kkt_.solve(rhs);
    VectorXd y = sol.tail(mc_ + md_);
    if (!y.allFinite() || inf_norm(y) > 1e3) return;
    yc_ = y.head(mc_);
    yd_ = y.tail(md_);
  }

  // ---- Hessian ----------------------------------------------------------
  void compute_hessian() {
    switch (set_.hessian) {
      case HessianMode::kExact:
        p_.lagrangian_hessian(x_, sf_, dc_.cwiseProduct(yc_), dd_.cwiseProduct(yd_), W_);
        break;
      case HessianMode::kGaussNewton:
        p_.gauss_newton_hessian(x_, W_);
        W_ *= sf_;
        break;
      case HessianMode::kLbfgs:
        break;
    }
  }

  // ---- main loop --------------------------------------------------------
  void iterate(const NlpPoint& start, NlpResult& res) {
    initialize(start);
    double mu_min = set_.tol / 10.0;
    double delta_w_last = 0.0;

    for (iter_ = 0;; ++iter_) {
      double err0 = kkt_error(0.0);
      res.kkt_error = err0;
      if (stop_ && iter_ > 0 && stop_(x_, s_.cwiseQuotient(dd_))) {
        res.status = NlpStatus::kConverged;
        return;
      }
      if (log_) {
        IterationLog l;
        l.iteration = iter_;
        l.objective = ev_.f / sf_;
        l.mu = mu_;
        l.infeasibility = std::max(inf_norm(ev_.c), inf_norm(ev_.d - s_));
        l.kkt_error = err0;
        l.step = alpha_last_;
        l.regularization = delta_w_last;
        log_(l);
      }
      if (set_.verbose)
        std::fprintf(stderr, "%4d%c f=% .6e inf=%.2e err=%.2e mu=%.1e a=%.2e dw=%.1e\n", iter_, restoration_ ? 'r' : ' ', ev_.f / sf_,
                     std::max(inf_norm(ev_.c), inf_norm(ev_.d - s_)), err0, mu_, alpha_last_, delta_w_last);
      if (err0 <= set_.tol) {
        res.status = NlpStatus::kConverged;
        return;
      }
      if (iter_ >= set_.max_iterations) {
        res.status = NlpStatus::kIterationLimit;
        res.message = "iteration limit reached";
        return;
      }
      while (mu_ > mu_min && kkt_error(mu_) <= set_.kappa_eps * mu_) {
        mu_ = std::max(mu_min, std::min(set_.kappa_mu * mu_, std::pow(mu_, set_.theta_mu)));
        filter_.clear();
      }

      compute_hessian();
      VectorXd gap = bound_gap(x_);
      VectorXd sigma_x = VectorXd::Zero(n_);
      for (int j = 0; j < nb_; ++j) sigma_x[bidx_[j]] = zx_[j] / gap[j];
      VectorXd sigma_s_inv = s_.cwiseQuotient(zs_);

      bool lbfgs = set_.hessian == HessianMode::kLbfgs;
      double w_diag = lbfgs ? lbfgs_.gamma() : 0.0;
      const SpMat* W = lbfgs ? nullptr : &W_;
      double delta_c = 1e-9 * std::min(1.0, std::pow(mu_, 0.25));

      VectorXd rhat = grad_lagrangian(ev_, yc_, yd_);
      for (int j = 0; j < nb_; ++j) rhat[bidx_[j]] -= mu_ / gap[j];
      VectorXd rhs(n_ + mc_ + md_);
      rhs << -rhat, -ev_.c, -(ev_.d - s_) + sigma_s_inv.cwiseProduct(yd_ + mu_ * s_.cwiseInverse());

      double delta_w = 0.0;
      bool accepted = false;
      for (int attempt = 0; attempt < 6 && !accepted; ++attempt) {
        delta_w = factorize_with_inertia(W, w_diag, sigma_x, sigma_s_inv, delta_c, delta_w_last, delta_w);
        delta_w_last = delta_w;
        VectorXd sol = solve_step(rhs);
        VectorXd dx = sol.head(n_);
        VectorXd dyc = sol.segment(n_, mc_);
        VectorXd dyd = sol.tail(md_);
        VectorXd ds = sigma_s_inv.cwiseProduct(dyd + yd_ + mu_ * s_.cwiseInverse());
        if (!dx.allFinite() || !ds.allFinite()) throw NumericFailure("non-finite Newton step");

        double theta0 = theta(ev_, s_);
        double phi0 = barrier(ev_, x_, s_);
        VectorXd gphi_x = ev_.grad;
        for (int j = 0; j < nb_; ++j) gphi_x[bidx_[j]] -= mu_ / gap[j];
        double gphi_d = gphi_x.dot(dx) - mu_ * s_.cwiseInverse().dot(ds);

        double tau = std::max(set_.tau_min, 1.0 - mu_);
        double alpha_max = max_step(s_, ds, tau);
        VectorXd dxb(nb_);
        for (int j = 0; j < nb_; ++j) dxb[j] = dx[bidx_[j]];
        alpha_max = std::min(alpha_max, max_step(gap, dxb, tau));

        double alpha_min = kGammaTheta;
        if (gphi_d < 0.0) {
          alpha_min = std::min(kGammaTheta, kGammaPhi * theta0 / -gphi_d);
          if (theta0 <= theta_min_)
            alpha_min = std::min(alpha_min, std::pow(theta0, kSTheta) / std::pow(-gphi_d, kSPhi));
        }
        alpha_min *= kAlphaMinFrac;

        const Reference ref{theta0, phi0, gphi_d};
        double alpha = alpha_max;
        Eval trial;
        VectorXd xt, st;
        bool ok = false, armijo = false;
        for (int bt = 0; alpha >= alpha_min; ++bt) {
          xt = x_ + alpha * dx;
          st = s_ + alpha * ds;
          if (try_eval(xt, trial)) {
            double th = theta(trial, st);
            if (acceptable(ref, alpha, th, barrier(trial, xt, st), armijo)) {
              ok = true;
              break;
            }
            if (bt == 0 && th >= theta0 && mc_ + md_ > 0 &&
                second_order_correction(rhs, sigma_s_inv, alpha, ref, th, trial, xt, st, tau, gap, armijo)) {
              ok = true;
              break;
            }
          }
          alpha *= 0.5;
        }
        if (!ok) {
          if (!restoration_ && theta0 > set_.tol) {
            if (!restore(theta0, phi0, res)) return;
            accepted = true;
            break;
          }
          delta_w = std::max(1e-4, 10.0 * delta_w);
          continue;
        }
        if (!(armijo && is_ftype(ref, alpha))) filter_.push_back({(1.0 - kGammaTheta) * theta0, phi0 - kGammaPhi * theta0});
        accepted = true;

        VectorXd dzs = mu_ * s_.cwiseInverse() - zs_ - zs_.cwiseQuotient(s_).cwiseProduct(ds);
        VectorXd dzx(nb_);
        for (int j = 0; j < nb_; ++j) dzx[j] = mu_ / gap[j] - zx_[j] - zx_[j] / gap[j] * dx[bidx_[j]];
        double alpha_z = std::min(max_step(zs_, dzs, tau), max_step(zx_, dzx, tau));

        VectorXd x_old = x_;
        Eval ev_old = ev_;
        yc_ += alpha * dyc;
        yd_ += alpha * dyd;
        zs_ += alpha_z * dzs;
        zx_ += alpha_z * dzx;
        x_ = xt;
        s_ = st;
        evaluate(x_, true, ev_);
        const double kappa_sigma = 1e10;
        for (int i = 0; i < md_; ++i)
          zs_[i] = std::clamp(zs_[i], mu_ / (kappa_sigma * s_[i]), kappa_sigma * mu_ / s_[i]);
        VectorXd gap_new = bound_gap(x_);
        for (int j = 0; j < nb_; ++j)
          zx_[j] = std::clamp(zx_[j], mu_ / (kappa_sigma * gap_new[j]), kappa_sigma * mu_ / gap_new[j]);
        alpha_last_ = alpha;
        if (lbfgs) {
          VectorXd y = grad_lagrangian(ev_, yc_, yd_) - grad_lagrangian(ev_old, yc_, yd_);
          lbfgs_.update(x_ - x_old, y);
        }
      }
      if (!accepted) {
        res.status = NlpStatus::kLineSearchFailure;
        res.message = "line search failed to find an acceptable step";
        return;
      }
      if (!x_.allFinite() || inf_norm(x_) > 1e20) throw NumericFailure("iterates diverged");
    }
  }

  bool try_eval(const VectorXd& x, Eval& e) {
    try {
      evaluate(x, false, e);
      return true;
    } catch (const Error&) {
    }
    return false;
  }

  bool second_order_correction(const VectorXd& rhs, const VectorXd& sigma_s_inv, double alpha, const Reference& ref,
                               double theta_trial, Eval& trial, VectorXd& xt, VectorXd& st, double tau,
                               const VectorXd& gap, bool& armijo) {
    VectorXd c_soc = alpha * ev_.c + trial.c;
    VectorXd d_soc = alpha * (ev_.d - s_) + (trial.d - st);
    double theta_old = theta_trial;
    for (int k = 0; k < 4; ++k) {
      VectorXd r = rhs;
      r.segment(n_, mc_) = -c_soc;
      r.tail(md_) = -d_soc + sigma_s_inv.cwiseProduct(yd_ + mu_ * s_.cwiseInverse());
      VectorXd sol = solve_step(r);
      VectorXd dx = sol.head(n_);
      VectorXd ds = sigma_s_inv.cwiseProduct(sol.tail(md_) + yd_ + mu_ * s_.cwiseInverse());
      VectorXd dxb(nb_);
      for (int j = 0; j < nb_; ++j) dxb[j] = dx[bidx_[j]];
      double a = std::min(max_step(s_, ds, tau), max_step(gap, dxb, tau));
      VectorXd xs = x_ + a * dx, ss = s_ + a * ds;
      Eval e;
      if (!try_eval(xs, e)) return false;
      double th = theta(e, ss);
      if (acceptable(ref, alpha, th, barrier(e, xs, ss), armijo)) {
        trial = e;
        xt = xs;
        st = ss;
        return true;
      }
      if (th > kKappaSoc * theta_old) return false;
      theta_old = th;
      c_soc = a * c_soc + e.c;
      d_soc = a * d_soc + (e.d - ss);
    }
    return false;
  }

  // ---- feasibility restoration -----------------------------------------
  // Returns false with `res` filled when the restoration phase fails.
  bool restore(double theta0, double phi0, NlpResult& res) {
    filter_.push_back({(1.0 - kGammaTheta) * theta0, phi0 - kGammaPhi * theta0});
    const double rho = 1000.0;
    const double mu_r = std::max(mu_, std::max(inf_norm(ev_.c), inf_norm(ev_.d - s_)));
    RestorationProblem R(
        p_, [this](const VectorXd& x, bool der, Eval& e) { evaluate(x, der, e); },
        [this](const VectorXd& x, const VectorXd& yc, const VectorXd& yd, SpMat& H) {
          p_.lagrangian_hessian(x, 0.0, dc_.cwiseProduct(yc), dd_.cwiseProduct(yd), H);
        },
        x_, std::sqrt(mu_), rho, mc_, md_);

    // Elastic variables at the minimizers of the restoration barrier for fixed x.
    auto elastic = [&](double c) {
      double a = (mu_r - rho * c) / (2.0 * rho);
      return a + std::sqrt(a * a + mu_r * c / (2.0 * rho));
    };
    const int nz = R.num_variables();
    NlpPoint start;
    start.x.resize(nz);
    start.x.head(n_) = x_;
    VectorXd s0(md_);
    for (int i = 0; i < mc_; ++i) {
      double nn = elastic(ev_.c[i]);
      start.x[n_ + i] = ev_.c[i] + nn;
      start.x[n_ + mc_ + i] = nn;
    }
    for (int i = 0; i < md_; ++i) {
      double nn = elastic(ev_.d[i]);
      start.x[n_ + 2 * mc_ + i] = nn;
      s0[i] = ev_.d[i] + nn;
    }
    start.y_c = VectorXd::Zero(mc_);
    start.z_d = s0.cwiseInverse() * mu_r;
    start.z_x = VectorXd::Zero(nz);
    VectorXd gap = bound_gap(x_);
    for (int j = 0; j < nb_; ++j) start.z_x[bidx_[j]] = mu_r / gap[j];
    for (int i = n_; i < nz; ++i) start.z_x[i] = mu_r / start.x[i];

    NlpSettings rs = set_;
    rs.mu_init = mu_r;
    rs.max_iterations = std::max(1, set_.max_iterations - iter_);
    VectorXd s_found;
    bool found = false;
    Solver inner(R, rs, {});
    inner.restoration_ = true;
    inner.stop_ = [&](const VectorXd& z, const VectorXd& s) {
      VectorXd x = z.head(n_);
      Eval e;
      if (!try_eval(x, e)) return false;
      double th = theta(e, s);
      double ph = barrier(e, x, s);
      if (!std::isfinite(th) || !std::isfinite(ph) || th > 0.9 * theta0 || th > theta_max_) return false;
      for (const auto& [ft, fp] : filter_)
        if (th >= ft && ph >= fp) return false;
      s_found = s;
      return found = true;
    };
    NlpResult r = inner.run(start);
    iter_ += r.iterations;
    if (!found) {
      res.status = NlpStatus::kLineSearchFailure;
      res.message = std::string("restoration phase failed (") + to_string(r.status) + ")";
      return false;
    }
    x_ = r.point.x.head(n_);
    s_ = s_found;
    evaluate(x_, true, ev_);
    zs_ = r.point.z_d;
    zx_.resize(nb_);
    for (int j = 0; j < nb_; ++j) zx_[j] = r.point.z_x[bidx_[j]];
    if (std::max(inf_norm(zs_), inf_norm(zx_)) > 1e3) {
      zs_.setOnes();
      zx_.setOnes();
    }
    least_squares_multipliers();
    const double kappa_sigma = 1e10;
    for (int i = 0; i < md_; ++i) zs_[i] = std::clamp(zs_[i], mu_ / (kappa_sigma * s_[i]), kappa_sigma * mu_ / s_[i]);
    VectorXd gap_new = bound_gap(x_);
    for (int j = 0; j < nb_; ++j)
      zx_[j] = std::clamp(zx_[j], mu_ / (kappa_sigma * gap_new[j]), kappa_sigma * mu_ / gap_new[j]);
    alpha_last_ = 0.0;
    return true;
  }

  // ---- filter -----------------------------------------------------------
  bool is_ftype(const Reference& ref, double alpha) const {
    return ref.gphi_d < 0.0 && alpha * std::pow(-ref.gphi_d, kSPhi) > std::pow(ref.theta, kSTheta);
  }

  bool acceptable(const Reference& ref, double alpha, double th, double ph, bool& armijo) const {
    armijo = false;
    if (!std::isfinite(th) || !std::isfinite(ph) || th > theta_max_) return false;
    if (ph - ref.phi > 0.0 && std::log10(ph - ref.phi) > kObjMaxInc + std::max(1.0, std::log10(std::abs(ref.phi))))
      return false;
    bool ok;
    if (is_ftype(ref, alpha) && ref.theta <= theta_min_) {
      ok = armijo = ph <= ref.phi + kEtaPhi * alpha * ref.gphi_d;
    } else {
      ok = th <= (1.0 - kGammaTheta) * ref.theta || ph <= ref.phi - kGammaPhi * ref.theta;
    }
    if (!ok) return false;
    for (const auto& [ft, fp] : filter_)
      if (th >= ft && ph >= fp) return false;
    return true;
  }

  static double max_step(const VectorXd& v, const VectorXd& dv, double tau) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i)
      if (dv[i] < 0.0) a = std::min(a, -tau * v[i] / dv[i]);
    return a;
  }

  double factorize_with_inertia(const SpMat* W, double w_diag, const VectorXd& sigma_x,
                                const VectorXd& sigma_s_inv, double delta_c, double delta_w_last,
                                double delta_w_min) {
    double delta_w = delta_w_min;
    auto attempt = [&](double dw) {
      kkt_.assemble(W, w_diag, sigma_x, ev_.Jc, ev_.Jd, sigma_s_inv, dw, delta_c);
      return kkt_.factorize();
    };
    if (attempt(delta_w)) return delta_w;
    delta_w = std::max(delta_w, delta_w_last == 0.0 ? 1e-4 : std::max(1e-20, delta_w_last / 3.0));
    while (!attempt(delta_w)) {
      delta_w *= delta_w_last == 0.0 ? 100.0 : 8.0;
      if (delta_w > 1e40) throw NumericFailure("inertia correction failed");
    }
    return delta_w;
  }

  VectorXd hessian_times(const VectorXd& v) const {
    if (set_.hessian == HessianMode::kLbfgs) return lbfgs_.apply(v);
    return W_.selfadjointView<Eigen::Lower>() * v;
  }

  // K^{-1} rhs with the limited-memory low-rank term folded in by
  // Sherman-Morrison-Woodbury on top of the factorized gamma I system.
  VectorXd solve_step(const VectorXd& rhs) {
    VectorXd sol = kkt_.solve(rhs);
    if (set_.hessian != HessianMode::kLbfgs || lbfgs_.pairs() == 0) return sol;
    const MatrixXd& U = lbfgs_.U();
    int k = static_cast<int>(U.cols());
    MatrixXd KU(n_ + mc_ + md_, k);
    for (int j = 0; j < k; ++j) {
      VectorXd col = VectorXd::Zero(n_ + mc_ + md_);
      col.head(n_) = U.col(j);
      KU.col(j) = kkt_.solve(col);
    }
    MatrixXd small = -lbfgs_.M() + U.transpose() * KU.topRows(n_);
    VectorXd t = small.fullPivLu().solve(U.transpose() * sol.head(n_));
    return sol - KU * t;
  }

  void fill_point(NlpResult& res) {
    NlpPoint& pt = res.point;
    pt.x = x_;
    pt.y_c = yc_.cwiseProduct(dc_) / sf_;
    pt.z_d = zs_.cwiseProduct(dd_) / sf_;
    pt.z_x = VectorXd::Zero(n_);
    for (int j = 0; j < nb_; ++j) pt.z_x[bidx_[j]] = zx_[j] / sf_;
    res.objective = ev_.f / sf_;
    VectorXd c = ev_.c.cwiseQuotient(dc_);
    VectorXd d = ev_.d.cwiseQuotient(dd_);
    double viol = inf_norm(c);
    for (int i = 0; i < md_; ++i) viol = std::max(viol, -d[i]);
    res.constraint_violation = viol;
  }

  NlpProblem& p_;
  NlpSettings set_;
  std::function<void(const IterationLog&)> log_;
  int n_ = 0, mc_ = 0, md_ = 0, nb_ = 0;
  std::vector<int> bidx_;
  std::vector<double> lb_;
  double sf_ = 1.0;
  VectorXd dc_, dd_;
  VectorXd x_, s_, yc_, yd_, zs_, zx_;
  Eval ev_;
  SpMat W_;
  double mu_ = 0.1;
  double alpha_last_ = 0.0;
  std::vector<std::pair<double, double>> filter_;  // (theta, phi) margins
  double theta_max_ = 0.0, theta_min_ = 0.0;
  int iter_ = 0;
  bool restoration_ = false;
  // Restoration phase only: stops the solve once the outer iterate is acceptable.
  std::function<bool(const VectorXd& x, const VectorXd& s)> stop_;
  KktSystem kkt_;
  Lbfgs lbfgs_;
};

}  // namespace

NlpResult solve_nlp(NlpProblem& problem, const NlpPoint& start, const NlpSettings& settings,
                    const std::function<void(const IterationLog&)>& log) {
  Solver solver(problem, settings, log);
  return solver.run(start);
}

}  // namespace asmplan
