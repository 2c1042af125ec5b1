#include <vector>

#include <gtest/gtest.h>

#include "asmplan/nlp_solver.hpp"
#include "asmplan/types.hpp"

namespace asmplan {
namespace {

using Eigen::VectorXd;
using Triplets = std::vector<Eigen::Triplet<double>>;

// Hock-Schittkowski problem 71 with the product constraint as an inequality
// and the upper bounds 5 - x_i >= 0 as general inequalities.
class Hs071 final : public NlpProblem {
 public:
  int num_variables() const override { return 4; }
  int num_equalities() const override { return 1; }
  int num_inequalities() const override { return 5; }
  VectorXd lower_bounds() const override { return VectorXd::Ones(4); }

  void evaluate(const VectorXd& x, bool derivatives, NlpEvaluation& o) override {
    o.f = x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2];
    o.c.resize(1);
    o.c[0] = x.squaredNorm() - 40.0;
    o.d.resize(5);
    o.d[0] = x.prod() - 25.0;
    for (int i = 0; i < 4; ++i) o.d[1 + i] = 5.0 - x[i];
    if (!derivatives) return;
    o.grad.resize(4);
    o.grad << x[3] * (2 * x[0] + x[1] + x[2]), x[0] * x[3], x[0] * x[3] + 1, x[0] * (x[0] + x[1] + x[2]);
    Triplets t;
    for (int i = 0; i < 4; ++i) t.emplace_back(0, i, 2 * x[i]);
    o.Jc.resize(1, 4);
    o.Jc.setFromTriplets(t.begin(), t.end());
    t.clear();
    for (int i = 0; i < 4; ++i) t.emplace_back(0, i, x.prod() / x[i]);
    for (int i = 0; i < 4; ++i) t.emplace_back(1 + i, i, -1.0);
    o.Jd.resize(5, 4);
    o.Jd.setFromTriplets(t.begin(), t.end());
  }

  void lagrangian_hessian(const VectorXd& x, double of, const VectorXd& yc, const VectorXd& yd,
                          SpMat& H) override {
    Eigen::Matrix4d h = Eigen::Matrix4d::Zero();
    h(0, 0) = 2 * x[3];
    h(1, 0) = x[3];
    h(2, 0) = x[3];
    h(3, 0) = 2 * x[0] + x[1] + x[2];
    h(3, 1) = x[0];
    h(3, 2) = x[0];
    h *= of;
    h.diagonal().array() += 2 * yc[0];
    h(1, 0) += yd[0] * x[2] * x[3];
    h(2, 0) += yd[0] * x[1] * x[3];
    h(3, 0) += yd[0] * x[1] * x[2];
    h(2, 1) += yd[0] * x[0] * x[3];
    h(3, 1) += yd[0] * x[0] * x[2];
    h(3, 2) += yd[0] * x[0] * x[1];
    Triplets t;
    for (int j = 0; j < 4; ++j)
      for (int i = j; i < 4; ++i) t.emplace_back(i, j, h(i, j));
    H.resize(4, 4);
    H.setFromTriplets(t.begin(), t.end());
  }

  void gauss_newton_hessian(const VectorXd&, SpMat& H) override { H.resize(4, 4); }
};

// Separable convex quadratic sum (i + 1)(x_i - i)^2.
class DiagonalQp final : public NlpProblem {
 public:
  explicit DiagonalQp(int n) : n_(n) {}
  int num_variables() const override { return n_; }
  int num_equalities() const override { return 0; }
  int num_inequalities() const override { return 0; }
  void evaluate(const VectorXd& x, bool, NlpEvaluation& o) override {
    o.f = 0.0;
    o.grad.resize(n_);
    for (int i = 0; i < n_; ++i) {
      o.f += (i + 1) * (x[i] - i) * (x[i] - i);
      o.grad[i] = 2.0 * (i + 1) * (x[i] - i);
    }
    o.c.resize(0);
    o.d.resize(0);
    o.Jc.resize(0, n_);
    o.Jd.resize(0, n_);
  }
  void lagrangian_hessian(const VectorXd&, double of, const VectorXd&, const VectorXd&, SpMat& H) override {
    Triplets t;
    for (int i = 0; i < n_; ++i) t.emplace_back(i, i, of * 2.0 * (i + 1));
    H.resize(n_, n_);
    H.setFromTriplets(t.begin(), t.end());
  }
  void gauss_newton_hessian(const VectorXd& x, SpMat& H) override { lagrangian_hessian(x, 1.0, {}, {}, H); }

 private:
  int n_;
};

NlpPoint hs071_start() {
  NlpPoint p;
  p.x.resize(4);
  p.x << 1, 5, 5, 1;
  return p;
}

void expect_hs071_solution(const NlpResult& r) {
  ASSERT_TRUE(r.converged()) << r.message;
  EXPECT_NEAR(r.objective, 17.0140173, 1e-6);
  VectorXd xs(4);
  xs << 1.0, 4.7429994, 3.8211503, 1.3794082;
  EXPECT_LE((r.point.x - xs).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(r.constraint_violation, 1e-8);
  EXPECT_GE(r.point.z_d.minCoeff(), 0.0);
  EXPECT_GE(r.point.z_x.minCoeff(), 0.0);
}

TEST(SolveNlp, Hs071Exact) {
  Hs071 p;
  NlpSettings s;
  const NlpResult r = solve_nlp(p, hs071_start(), s);
  expect_hs071_solution(r);
  EXPECT_LE(r.iterations, 15);
}

TEST(SolveNlp, Hs071Lbfgs) {
  Hs071 p;
  NlpSettings s;
  s.hessian = HessianMode::kLbfgs;
  const NlpResult r = solve_nlp(p, hs071_start(), s);
  expect_hs071_solution(r);
  EXPECT_LE(r.iterations, 75);  // within five times the exact count bound
}

TEST(SolveNlp, WarmResolveIsImmediate) {
  Hs071 p;
  NlpSettings s;
  const NlpResult first = solve_nlp(p, hs071_start(), s);
  ASSERT_TRUE(first.converged());
  NlpSettings warm = s;
  warm.mu_init = 1e-9;
  const NlpResult again = solve_nlp(p, first.point, warm);
  ASSERT_TRUE(again.converged());
  EXPECT_LE(again.iterations, 5);
  EXPECT_LE((again.point.x - first.point.x).norm(), 1e-6);
}

TEST(SolveNlp, UnconstrainedQuadratic) {
  DiagonalQp p(50);
  NlpSettings s;
  s.tol = 1e-10;
  NlpPoint start;
  start.x = VectorXd::Zero(50);
  const NlpResult r = solve_nlp(p, start, s);
  ASSERT_TRUE(r.converged());
  EXPECT_LE(r.iterations, 15);
  for (int i = 0; i < 50; ++i) EXPECT_NEAR(r.point.x[i], i, 1e-8);
}

TEST(SolveNlp, IterationLimitReported) {
  Hs071 p;
  NlpSettings s;
  s.max_iterations = 2;
  const NlpResult r = solve_nlp(p, hs071_start(), s);
  EXPECT_EQ(r.status, NlpStatus::kIterationLimit);
  EXPECT_EQ(r.iterations, 2);
}

TEST(HessianModeNames, ParseAndPrint) {
  EXPECT_EQ(parse_hessian_mode("exact"), HessianMode::kExact);
  EXPECT_EQ(parse_hessian_mode("gn"), HessianMode::kGaussNewton);
  EXPECT_EQ(parse_hessian_mode("gauss-newton"), HessianMode::kGaussNewton);
  EXPECT_EQ(parse_hessian_mode("lbfgs"), HessianMode::kLbfgs);
  EXPECT_THROW(parse_hessian_mode("bfgs"), ConfigError);
  EXPECT_EQ(parse_hessian_mode(to_string(HessianMode::kLbfgs)), HessianMode::kLbfgs);
}

}  // namespace
}  // namespace asmplan
