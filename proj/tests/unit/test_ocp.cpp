#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "asmplan/ocp.hpp"
#include "scenes.hpp"

namespace asmplan {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd full_symmetric(const SpMat& lower) {
  const MatrixXd L = MatrixXd(lower);
  MatrixXd F = L + L.transpose();
  F.diagonal() = L.diagonal();
  return F;
}

TEST(DecisionLayout, Sizes) {
  const DecisionLayout L(10, 2, 1);
  EXPECT_EQ(L.num_state_variables(), 429);
  EXPECT_EQ(L.num_variables(), 449);
  EXPECT_EQ(L.reference(10), 130);
  EXPECT_EQ(L.compliant(0, 0), 143);
  EXPECT_EQ(L.compliant(1, 0), 286);
  EXPECT_EQ(L.force(0, 0, 0), 429);
  EXPECT_EQ(L.force(1, 9, 0), 448);
}

TEST(DecisionLayout, DescribeInvertsIndexing) {
  const DecisionLayout L(4, 3, 2);
  for (int l = -1; l < 3; ++l)
    for (int k = 0; k <= 4; ++k)
      for (int c = 0; c < 13; ++c) {
        const int idx = (l < 0 ? L.reference(k) : L.compliant(l, k)) + c;
        const auto e = L.describe(idx);
        EXPECT_EQ(e.kind, l < 0 ? DecisionLayout::Kind::kReference : DecisionLayout::Kind::kCompliant);
        EXPECT_EQ(e.scenario, l);
        EXPECT_EQ(e.step, k);
        EXPECT_EQ(e.component, c);
      }
  for (int l = 0; l < 3; ++l)
    for (int k = 0; k < 4; ++k)
      for (int j = 0; j < 2; ++j) {
        const auto e = L.describe(L.force(l, k, j));
        EXPECT_EQ(e.kind, DecisionLayout::Kind::kForce);
        EXPECT_EQ(e.scenario, l);
        EXPECT_EQ(e.step, k);
        EXPECT_EQ(e.component, j);
      }
}

struct CostFixture {
  OcpConfig cfg = testing::short_slide(1);
  DecisionLayout L{cfg.N, 1, 1};
  VectorXd x = VectorXd::Zero(L.num_variables());

  CostFixture() {
    cfg.beta_r = {1.0, 1.0, 1.0, 1.0};
    cfg.beta_c = {1.0, 1.0, 1.0, 1.0};
    RigidState at_goal;
    at_goal.q = cfg.goal;
    for (int l = -1; l < 1; ++l)
      for (int k = 0; k <= cfg.N; ++k)
        x.segment<13>(l < 0 ? L.reference(k) : L.compliant(l, k)) = at_goal.vector();
  }
};

TEST(CostEval, Examples) {
  CostFixture f;
  EXPECT_EQ(cost_eval(f.x, f.L, f.cfg).value, 0.0);

  VectorXd x = f.x;
  x[f.L.reference(f.cfg.N)] += 1.0;  // one unit off in x
  EXPECT_NEAR(cost_eval(x, f.L, f.cfg).value, 1.0, 1e-15);

  x = f.x;
  x.segment<4>(f.L.reference(f.cfg.N) + 3) = Vec4(0, 0, 0, 1);  // half turn about z
  EXPECT_NEAR(cost_eval(x, f.L, f.cfg).value, 8.0, 1e-12);

  x = f.x;
  x[f.L.compliant(0, 2) + 7] = 2.0;  // translational velocity
  x[f.L.compliant(0, 3) + 12] = 3.0;  // angular velocity
  EXPECT_NEAR(cost_eval(x, f.L, f.cfg).value, 13.0, 1e-15);
}

TEST(CostEval, DerivativesMatchDifferences) {
  CostFixture f;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 0.3);
  VectorXd x = f.x;
  for (int i = 0; i < f.L.num_state_variables(); ++i) x[i] += g(rng);
  const CostValue c = cost_eval(x, f.L, f.cfg);
  const MatrixXd H = full_symmetric(c.hessian);
  const double h = 1e-6;
  for (int i = 0; i < f.L.num_state_variables(); ++i) {
    VectorXd p = x, m = x;
    p[i] += h;
    m[i] -= h;
    const CostValue cp = cost_eval(p, f.L, f.cfg), cm = cost_eval(m, f.L, f.cfg);
    EXPECT_NEAR((cp.value - cm.value) / (2 * h), c.gradient[i], 1e-6 * (1.0 + std::abs(c.gradient[i])));
    EXPECT_LE(((cp.gradient - cm.gradient) / (2 * h) - H.col(i)).norm(), 1e-5 * (1.0 + H.col(i).norm()));
  }
  const MatrixXd G = full_symmetric(cost_eval(x, f.L, f.cfg, true).hessian);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(G).eigenvalues().minCoeff(), -1e-10);
}

// Gradient of obj_factor f + y_c^T c + y_d^T d.
VectorXd lagrangian_gradient(OcpProblem& p, const VectorXd& x, double of, const VectorXd& yc, const VectorXd& yd) {
  NlpEvaluation e;
  p.evaluate(x, true, e);
  return of * e.grad + e.Jc.transpose() * yc + e.Jd.transpose() * yd;
}

class OcpProblemTest : public ::testing::TestWithParam<ComplementarityMode> {};

TEST_P(OcpProblemTest, HessianVectorProductsMatchDifferences) {
  OcpConfig cfg = testing::short_slide(2);
  cfg.mode = GetParam();
  OcpProblem p(cfg, testing::cube_on_ground());
  std::mt19937_64 rng(32);
  std::normal_distribution<double> g;
  VectorXd x = initial_guess(p);
  for (int i = 0; i < p.layout().num_state_variables(); ++i) x[i] += 0.005 * g(rng);
  VectorXd yc(p.num_equalities()), yd(p.num_inequalities());
  for (auto& v : yc) v = g(rng);
  for (auto& v : yd) v = g(rng);
  SpMat Hl;
  p.lagrangian_hessian(x, 0.7, yc, yd, Hl);
  const MatrixXd H = full_symmetric(Hl);
  const double h = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    VectorXd v(x.size());
    for (auto& e : v) e = g(rng);
    const VectorXd fd =
        (lagrangian_gradient(p, x + h * v, 0.7, yc, yd) - lagrangian_gradient(p, x - h * v, 0.7, yc, yd)) / (2 * h);
    const VectorXd hv = H * v;
    EXPECT_LE((fd - hv).norm(), 1e-4 * (1.0 + hv.norm())) << "trial " << trial;
  }
}

TEST_P(OcpProblemTest, GaussNewtonHessianIsPsd) {
  OcpConfig cfg = testing::short_slide(2);
  cfg.mode = GetParam();
  OcpProblem p(cfg, testing::cube_on_ground());
  VectorXd x = initial_guess(p);
  x.segment<4>(p.layout().reference(cfg.N) + 3) = Vec4(0.9, 0.1, -0.3, 0.2);
  SpMat H;
  p.gauss_newton_hessian(x, H);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(full_symmetric(H)).eigenvalues().minCoeff(), -1e-10);
}

TEST_P(OcpProblemTest, RolloutPointIsFeasible) {
  OcpConfig cfg = testing::short_slide(2);
  cfg.mode = GetParam();
  OcpProblem p(cfg, testing::cube_on_ground());
  const DecisionLayout& L = p.layout();
  VectorXd x = VectorXd::Zero(L.num_variables());
  // reference at rest at x0; each copy simulated under the impedance law
  std::vector<Vec13> ref(cfg.N + 1, cfg.x0.vector());
  for (int k = 0; k <= cfg.N; ++k) x.segment<13>(L.reference(k)) = ref[k];
  for (int l = 0; l < cfg.n_s; ++l) {
    const RigidState xc0 = state_perturb_inverse(cfg.x0, p.offsets()[l]);
    const Rollout r = rollout(p.body(), p.pairs(), xc0, ref, p.gains(), p.offsets()[l], cfg.dt,
                              p.collision_settings(), cfg.sigma_1, cfg.N);
    ASSERT_FALSE(r.failed_step.has_value()) << r.failure;
    for (int k = 0; k <= cfg.N; ++k) x.segment<13>(L.compliant(l, k)) = r.states[k].vector();
    for (int k = 0; k < cfg.N; ++k) x.segment(L.force(l, k, 0), L.num_pairs()) = r.forces[k];
  }
  NlpEvaluation e;
  p.evaluate(x, false, e);
  // the relaxed form holds a lambda = sigma with equality, which is admissible
  EXPECT_LE(e.c.cwiseAbs().maxCoeff(), 1e-8);
  if (e.d.size() > 0) EXPECT_GE(e.d.minCoeff(), -1e-8);
}

INSTANTIATE_TEST_SUITE_P(Modes, OcpProblemTest,
                         ::testing::Values(ComplementarityMode::kSmoothing, ComplementarityMode::kRelaxation),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(InitialGuess, Properties) {
  const OcpConfig cfg = testing::short_slide(2);
  OcpProblem p(cfg, testing::cube_on_ground());
  const DecisionLayout& L = p.layout();
  const VectorXd x = initial_guess(p);
  RigidState rest = cfg.x0;
  rest.v.setZero();
  for (int k = 0; k <= cfg.N; ++k) EXPECT_EQ(Vec13(L.state(x, -1, k)), rest.vector());
  for (int l = 0; l < cfg.n_s; ++l) {
    const Vec13 xc = state_perturb_inverse(rest, p.offsets()[l]).vector();
    for (int k = 0; k <= cfg.N; ++k) EXPECT_EQ(Vec13(L.state(x, l, k)), xc);
    for (int k = 0; k < cfg.N; ++k) {
      EXPECT_GT(x[L.force(l, k, 0)], 0.0);
      EXPECT_EQ(x[L.force(l, k, 0)], x[L.force(l, 0, 0)]);
    }
  }
  // gap 0.01 above ground: lambda = sigma_1 / max(Phi, 0.01)
  EXPECT_LE(x[L.force(0, 0, 0)], cfg.sigma_1 / 0.01 + 1e-12);
}

TEST(OcpConfig, Validation) {
  OcpConfig c = testing::short_slide(2);
  EXPECT_NO_THROW(c.validate());
  c.rho_dir.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  c = testing::short_slide(2);
  c.kappa_mu = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = testing::short_slide(2);
  c.goal.orientation = Quat(1, 1, 0, 0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = testing::short_slide(2);
  c.iteration_budget = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(OcpConfig, Offsets) {
  const OcpConfig c = testing::short_slide(2);
  const auto q = c.offsets();
  ASSERT_EQ(q.size(), 2u);
  EXPECT_EQ(q[0].position, Vec3::Zero());
  EXPECT_EQ(q[1].position, Vec3(0, 0.01, 0));
  EXPECT_EQ(q[1].orientation, Quat(1, 0, 0, 0));
}

}  // namespace
}  // namespace asmplan
