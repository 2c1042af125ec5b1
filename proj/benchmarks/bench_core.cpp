#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "asmplan/collision.hpp"
#include "asmplan/dynamics.hpp"
#include "asmplan/ocp.hpp"
#include "asmplan/sdf2d.hpp"
#include "scenes.hpp"

namespace {

using namespace asmplan;
using testing::cube_on_ground;

const ContactPair& cube_pair() {
  static const ContactPair pair(Polytope::box(Vec3::Constant(0.5)), Polytope::box(Vec3::Constant(0.5)));
  return pair;
}

std::vector<Pose> random_poses(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::normal_distribution<double> g;
  std::vector<Pose> out(n);
  for (Pose& q : out) {
    q.position = Vec3(u(rng), u(rng), u(rng));
    q.orientation = Quat(g(rng), g(rng), g(rng), g(rng)).normalized();
  }
  return out;
}

void BM_ContactInfo(benchmark::State& state) {
  const auto level = static_cast<DerivativeLevel>(state.range(0));
  const auto poses = random_poses(256, 1);
  IpSettings s;
  s.tau = 1e-3;
  const std::vector<Vec8> seeds{Vec8::Ones()};
  size_t i = 0;
  for (auto _ : state) {
    const ContactEvaluation ev =
        evaluate_contact(cube_pair(), poses[i++ % poses.size()], s, level,
                         level == DerivativeLevel::kSecond ? seeds : std::vector<Vec8>{});
    benchmark::DoNotOptimize(ev.info.w);
  }
}
BENCHMARK(BM_ContactInfo)->Arg(0)->Arg(1)->Arg(2)->ArgNames({"level"});

void BM_ContactInfoTau(benchmark::State& state) {
  const auto poses = random_poses(256, 2);
  IpSettings s;
  s.tau = std::pow(10.0, -static_cast<double>(state.range(0)));
  size_t i = 0;
  for (auto _ : state) {
    const ContactEvaluation ev = evaluate_contact(cube_pair(), poses[i++ % poses.size()], s, DerivativeLevel::kNominal);
    benchmark::DoNotOptimize(ev.info.w);
  }
}
BENCHMARK(BM_ContactInfoTau)->DenseRange(2, 12, 2)->ArgNames({"neg_log_tau"});

void BM_BatchContactInfo(benchmark::State& state) {
  const auto poses = random_poses(static_cast<int>(state.range(0)), 3);
  std::vector<ContactQuery> queries;
  for (const Pose& q : poses) queries.push_back({&cube_pair(), q, {}});
  IpSettings s;
  s.tau = 1e-3;
  for (auto _ : state) {
    auto out = batch_contact_info(queries, s, DerivativeLevel::kFirst, 7);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchContactInfo)->Arg(150)->Arg(600);

void BM_PointPolygonSdf(benchmark::State& state) {
  const Polygon2d sq = Polygon2d::square(1.0);
  IpSettings s;
  s.tau = 1e-3;
  double x = -2.0;
  for (auto _ : state) {
    const PointSdf r = point_polygon_sdf(sq, {x, 0.3}, s);
    benchmark::DoNotOptimize(r.phi);
    x = x > 2.0 ? -2.0 : x + 0.01;
  }
}
BENCHMARK(BM_PointPolygonSdf);

void BM_SimulateStep(benchmark::State& state) {
  const BodySpec body = cube_on_ground();
  const auto pairs = make_contact_pairs(body);
  IpSettings col;
  col.tau = 1e-3;
  RigidState x;
  x.q.position = Vec3(0, 0, 0.5001);
  const WrenchModel w = WrenchModel::constant(body.gravity_wrench);
  for (auto _ : state) {
    const StepResult r = simulate_step(body, pairs, x, w, 0.01, col, 1e-4);
    benchmark::DoNotOptimize(r.x_next.v);
  }
}
BENCHMARK(BM_SimulateStep);

// Constraints, Jacobian and Lagrangian Hessian of the slide problem; x is
// nudged every time so the contact cache never hits.
void BM_OcpEvaluate(benchmark::State& state) {
  OcpConfig c = testing::short_slide(3);
  c.N = static_cast<int>(state.range(0));
  OcpProblem p(c, cube_on_ground());
  p.set_parameters(c.tau_1, c.sigma_1);
  Eigen::VectorXd x = initial_guess(p);
  const Eigen::VectorXd yc = Eigen::VectorXd::Ones(p.num_equalities());
  const Eigen::VectorXd yd = Eigen::VectorXd::Ones(p.num_inequalities());
  NlpEvaluation e;
  SpMat H;
  double nudge = 1e-9;
  for (auto _ : state) {
    x[2] += nudge;
    nudge = -nudge;
    p.evaluate(x, true, e);
    p.lagrangian_hessian(x, 1.0, yc, yd, H);
    benchmark::DoNotOptimize(H.nonZeros());
  }
}
BENCHMARK(BM_OcpEvaluate)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
