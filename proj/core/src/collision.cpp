#include "asmplan/collision.hpp"

#if defined(ASMPLAN_HAVE_OPENMP)
#include <omp.h>
#endif

#include <cmath>
#include <random>

#include "asmplan/types.hpp"

namespace asmplan {

namespace {

using ActuatedRow = ContactPair::ActuatedRow;

Mat4 b_combination(const ActuatedRow& row, const Vec3& x) {
  return x[0] * row.B[0] + x[1] * row.B[1] + x[2] * row.B[2];
}

// Pose-dependent quantities of one actuated row at (p, q):
// u = R(xi) g, U = du/dxi, grad = grad_q phi with phi = u^T (p - rho) - |xi|^4 e.
struct RowEval {
  Vec3 u;
  Mat34 U;
  Vec7 grad;
};

RowEval eval_row(const ActuatedRow& row, const Quat& xi, const Vec3& r) {
  RowEval out;
  for (int a = 0; a < 3; ++a) {
    const Vec4 Bx = row.B[a] * xi;
    out.u[a] = xi.dot(Bx);
    out.U.row(a) = 2.0 * Bx.transpose();
  }
  out.grad.head<3>() = -out.u;
  out.grad.tail<4>() = out.U.transpose() * r - 4.0 * row.e * xi.squaredNorm() * xi;
  return out;
}

Vec3 actuated_reference(const ContactPair& pair, const Pose& q) {
  return q.position + rotation_matrix_unchecked(q.orientation) * pair.actuated_offset().position;
}

}  // namespace

ContactPair::ContactPair(const Polytope& actuated, const Polytope& environment)
    : n_act_(actuated.num_faces()),
      n_env_(environment.num_faces()),
      act_offset_(actuated.offset()),
      env_position_(environment.offset().position) {
  const Mat3 Ri = rotation_matrix(actuated.offset().orientation);
  act_.resize(n_act_);
  for (int l = 0; l < n_act_; ++l) {
    ActuatedRow& row = act_[l];
    row.g = Ri * actuated.G().row(l).transpose();
    row.e = row.g.dot(actuated.offset().position);
    row.h = actuated.h()[l];
    const Vec3& v = row.g;
    for (int a = 0; a < 3; ++a) {
      Mat4 B = Mat4::Zero();
      B(0, 0) = v[a];
      Mat3 eps = -v[a] * Mat3::Identity();
      eps.row(a) += v.transpose();
      eps.col(a) += v;
      B.bottomRightCorner<3, 3>() = eps;
      const Vec3 cross = v.cross(Vec3::Unit(a));
      B.block<1, 3>(0, 1) = cross.transpose();
      B.block<3, 1>(1, 0) = cross;
      row.B[a] = B;
    }
  }
  const Mat3 Re = rotation_matrix(environment.offset().orientation);
  env_.resize(n_env_);
  for (int l = 0; l < n_env_; ++l) {
    env_[l].n = Re * environment.G().row(l).transpose();
    env_[l].b = environment.h()[l] + env_[l].n.dot(env_position_);
  }
}

std::vector<ContactPair> make_contact_pairs(const BodySpec& body) {
  body.validate();
  std::vector<ContactPair> out;
  out.reserve(body.pairs.size());
  for (const ContactPairIndex& p : body.pairs) {
    out.emplace_back(body.actuated[p.actuated], body.environment[p.environment]);
  }
  return out;
}

DistanceLp assemble_lp(const ContactPair& pair, const Pose& q) {
  const int ng = pair.rows();
  const int na = pair.actuated_rows();
  DistanceLp lp;
  lp.A.resize(ng, 4);
  lp.b.resize(ng);
  lp.c = Eigen::Vector4d(0.0, 0.0, 0.0, 2.0);
  lp.actuated_rows = na;
  const Quat& xi = q.orientation;
  const double xi4 = xi.squaredNorm() * xi.squaredNorm();
  for (int l = 0; l < na; ++l) {
    const ActuatedRow& row = pair.actuated()[l];
    Vec3 u;
    for (int a = 0; a < 3; ++a) u[a] = xi.dot(row.B[a] * xi);
    lp.A.block<1, 3>(l, 0) = u.transpose();
    lp.b[l] = row.h + u.dot(q.position) + xi4 * row.e;
  }
  for (int l = 0; l < ng - na; ++l) {
    const auto& row = pair.environment()[l];
    lp.A.block<1, 3>(na + l, 0) = row.n.transpose();
    lp.b[na + l] = row.b;
  }
  lp.A.col(3).setConstant(-1.0);
  lp.p_start = 0.5 * (actuated_reference(pair, q) + pair.environment_position());
  return lp;
}

IpResult ip_solve(const DistanceLp& lp, const IpSettings& settings,
                  const std::optional<PrimalDual>& warm_start) {
  Eigen::VectorXd z0(4);
  z0.head<3>() = lp.p_start;
  z0[3] = 0.0;
  z0[3] = (lp.A * z0 - lp.b).maxCoeff() + 1.0;
  return solve_lp_barrier(lp, z0, settings, warm_start);
}

ContactInfo contact_info(const PrimalDual& gamma, const ContactPair& pair, const Pose& q) {
  ContactInfo info;
  info.w[0] = 2.0 * gamma.z[3];
  const Vec3 r = gamma.z.head<3>() - q.position;
  Vec7 n = Vec7::Zero();
  for (int l = 0; l < pair.actuated_rows(); ++l) {
    n += gamma.lambda[l] * eval_row(pair.actuated()[l], q.orientation, r).grad;
  }
  info.w.tail<7>() = n;
  return info;
}

Eigen::MatrixXd kkt_pose_jacobian(const PrimalDual& gamma, const ContactPair& pair,
                                  const Pose& q) {
  const int ng = pair.rows();
  Eigen::MatrixXd dqF = Eigen::MatrixXd::Zero(4 + ng, 7);
  const Vec3 r = gamma.z.head<3>() - q.position;
  for (int l = 0; l < pair.actuated_rows(); ++l) {
    const RowEval re = eval_row(pair.actuated()[l], q.orientation, r);
    const double lam = gamma.lambda[l];
    dqF.block<3, 4>(0, 3) += lam * re.U;
    dqF.row(4 + l) = -lam * re.grad.transpose();
  }
  return dqF;
}

FirstOrder first_derivatives(const PrimalDual& gamma, const ContactPair& pair, const Pose& q) {
  const DistanceLp lp = assemble_lp(pair, q);
  FirstOrder out;
  out.dq_F = kkt_pose_jacobian(gamma, pair, q);
  out.lu.compute(kkt_jacobian(lp, gamma));
  out.D_gamma = -out.lu.solve(out.dq_F);
  if (!out.D_gamma.allFinite()) {
    throw NumericFailure("first_derivatives: singular KKT matrix");
  }

  const Eigen::MatrixXd& D = out.D_gamma;
  const Eigen::Matrix<double, 3, 7> Dp = D.topRows<3>();
  out.D_w.row(0) = 2.0 * D.row(3);

  const Quat& xi = q.orientation;
  const double xi2 = xi.squaredNorm();
  const Vec3 r = gamma.z.head<3>() - q.position;
  Mat7 Dn = Mat7::Zero();
  for (int l = 0; l < pair.actuated_rows(); ++l) {
    const ActuatedRow& row = pair.actuated()[l];
    const RowEval re = eval_row(row, xi, r);
    const double lam = gamma.lambda[l];
    Dn += re.grad * D.row(4 + l);
    // lambda (d2_qp phi Dp + d2_qq phi)
    Mat7 local = Mat7::Zero();
    local.bottomRows<4>() = re.U.transpose() * Dp;
    local.block<3, 4>(0, 3) -= re.U;
    local.block<4, 3>(3, 0) -= re.U.transpose();
    local.block<4, 4>(3, 3) += 2.0 * b_combination(row, r) -
                               4.0 * row.e * (xi2 * Mat4::Identity() + 2.0 * xi * xi.transpose());
    Dn += lam * local;
  }
  out.D_w.bottomRows<7>() = Dn;
  return out;
}

Mat7 second_derivatives(const PrimalDual& gamma, const ContactPair& pair, const Pose& q,
                        const FirstOrder& first, const Vec8& s_w) {
  const int ng = pair.rows();
  const int na = pair.actuated_rows();
  const int iL = 4;
  const int iR = 4 + ng;
  const int iX = 7 + ng;
  const int dim = 11 + ng;

  const Quat& xi = q.orientation;
  const double xi2 = xi.squaredNorm();
  const Vec3 r = gamma.z.head<3>() - q.position;
  const double s0 = s_w[0];
  const Vec3 s_rho = s_w.segment<3>(1);
  const Vec4 s_xi = s_w.segment<4>(4);

  std::vector<RowEval> rows(na);
  for (int l = 0; l < na; ++l) rows[l] = eval_row(pair.actuated()[l], xi, r);

  // s_gamma = d_gamma w^T s_w.
  Eigen::VectorXd s_gamma = Eigen::VectorXd::Zero(4 + ng);
  for (int l = 0; l < na; ++l) {
    s_gamma.head<3>() += gamma.lambda[l] * (rows[l].U * s_xi);
    s_gamma[iL + l] = rows[l].grad.tail<4>().dot(s_xi) + rows[l].grad.head<3>().dot(s_rho);
  }
  s_gamma[3] = 2.0 * s0;

  // Adjoint: d_gamma F^T r = -s_gamma.
  const Eigen::VectorXd adj = first.lu.transpose().solve(-s_gamma);
  if (!adj.allFinite()) throw NumericFailure("second_derivatives: singular adjoint system");
  const Vec3 rp = adj.head<3>();

  // Hessian of <s_w, w> + <adj, F> in (p, alpha, lambda, rho, xi).
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
  auto sym_add = [&H](int i, int j, double v) {
    H(i, j) += v;
    if (i != j) H(j, i) += v;
  };
  for (int l = 0; l < na; ++l) {
    const ActuatedRow& row = pair.actuated()[l];
    const RowEval& re = rows[l];
    const double lam = gamma.lambda[l];
    const double rc = adj[iL + l];
    const double e = row.e;

    Eigen::Matrix<double, 3, 4> V;
    for (int a = 0; a < 3; ++a) V.row(a) = 2.0 * (row.B[a] * s_xi).transpose();

    const Vec3 cross_p = re.U * s_xi - rc * re.u;
    const Vec4 cross_xi = -re.U.transpose() * s_rho + 2.0 * b_combination(row, r) * s_xi -
                          4.0 * e * (2.0 * xi.dot(s_xi) * xi + xi2 * s_xi) +
                          re.U.transpose() * rp - rc * re.grad.tail<4>();
    const int li = iL + l;
    sym_add(li, 3, rc);
    for (int a = 0; a < 3; ++a) {
      sym_add(li, a, cross_p[a]);
      sym_add(li, iR + a, -cross_p[a]);
    }
    for (int a = 0; a < 4; ++a) sym_add(li, iX + a, cross_xi[a]);

    const Mat34 W = lam * (V - rc * re.U);
    const Mat4 Hxx =
        lam * (2.0 * b_combination(row, rp - s_rho - rc * r) -
               4.0 * e *
                   (2.0 * xi.dot(s_xi) * Mat4::Identity() + 2.0 * xi * s_xi.transpose() +
                    2.0 * s_xi * xi.transpose()) +
               4.0 * e * rc * (xi2 * Mat4::Identity() + 2.0 * xi * xi.transpose()));
    H.block<3, 4>(0, iX) += W;
    H.block<4, 3>(iX, 0) += W.transpose();
    H.block<3, 4>(iR, iX) -= W;
    H.block<4, 3>(iX, iR) -= W.transpose();
    H.block<4, 4>(iX, iX) += Hxx;
  }
  for (int l = na; l < ng; ++l) {
    const double rc = adj[iL + l];
    const Vec3& n = pair.environment()[l - na].n;
    sym_add(iL + l, 3, rc);
    for (int a = 0; a < 3; ++a) sym_add(iL + l, a, -rc * n[a]);
  }

  Eigen::MatrixXd Z(dim, 7);
  Z.topRows(4 + ng) = first.D_gamma;
  Z.bottomRows<7>().setIdentity();
  Mat7 out = Z.transpose() * H * Z;
  return 0.5 * (out + out.transpose());
}

DistanceLp scale_rows(const DistanceLp& lp, const Eigen::VectorXd& zeta) {
  DistanceLp out = lp;
  const Eigen::VectorXd inv = zeta.cwiseInverse();
  out.A = inv.asDiagonal() * lp.A;
  out.b = inv.asDiagonal() * lp.b;
  return out;
}

PrimalDual unscale_solution(const PrimalDual& scaled, const Eigen::VectorXd& zeta) {
  PrimalDual out = scaled;
  out.lambda = scaled.lambda.cwiseQuotient(zeta);
  return out;
}

namespace {

IpResult rescale_retry_impl(const DistanceLp& lp, const IpSettings& settings,
                            std::uint64_t seed, int* attempts) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(settings.kappa_min, settings.kappa_max);
  IpResult last;
  last.status = IpStatus::kIterationLimit;
  for (int t = 0; t < settings.n_tries; ++t) {
    Eigen::VectorXd zeta(lp.rows());
    for (Eigen::Index i = 0; i < zeta.size(); ++i) zeta[i] = dist(rng);
    if (attempts) ++*attempts;
    IpResult r = ip_solve(scale_rows(lp, zeta), settings);
    if (!r.ok()) {
      last = r;
      continue;
    }
    r.gamma = unscale_solution(r.gamma, zeta);
    r.residual = kkt_residual(lp, r.gamma, settings.tau).lpNorm<Eigen::Infinity>();
    if (r.residual <= 10.0 * settings.tolerance) return r;
    r.status = IpStatus::kNumericFailure;
    last = r;
  }
  return last;
}

}  // namespace

IpResult rescale_retry(const ContactPair& pair, const Pose& q, const IpSettings& settings,
                       std::uint64_t seed) {
  return rescale_retry_impl(assemble_lp(pair, q), settings, seed, nullptr);
}

ContactEvaluation evaluate_contact(const ContactPair& pair, const Pose& q,
                                   const IpSettings& settings, DerivativeLevel level,
                                   const std::vector<Vec8>& seeds, std::uint64_t rng_seed) {
  ContactEvaluation ev;
  const DistanceLp lp = assemble_lp(pair, q);
  IpResult r = ip_solve(lp, settings);
  ev.attempts = 1;
  bool retried = false;
  if (!r.ok()) {
    r = rescale_retry_impl(lp, settings, rng_seed, &ev.attempts);
    retried = true;
  }
  ev.status = r.status;
  if (!r.ok()) return ev;

  for (;;) {
    ev.gamma = r.gamma;
    ev.info = contact_info(ev.gamma, pair, q);
    if (level == DerivativeLevel::kNominal) return ev;
    try {
      ev.first = first_derivatives(ev.gamma, pair, q);
      ev.info.jacobian = ev.first->D_w;
      if (level == DerivativeLevel::kSecond) {
        ev.info.hessians.clear();
        for (const Vec8& s : seeds) {
          ev.info.hessians.push_back(second_derivatives(ev.gamma, pair, q, *ev.first, s));
        }
      }
      return ev;
    } catch (const NumericFailure&) {
      ev.first.reset();
      ev.info.jacobian.reset();
      if (retried) {
        ev.status = IpStatus::kNumericFailure;
        return ev;
      }
      r = rescale_retry_impl(lp, settings, rng_seed, &ev.attempts);
      retried = true;
      ev.status = r.status;
      if (!r.ok()) return ev;
    }
  }
}

std::uint64_t item_seed(std::uint64_t batch_seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = batch_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<ContactEvaluation> batch_contact_info(const std::vector<ContactQuery>& queries,
                                                  const IpSettings& settings,
                                                  DerivativeLevel level,
                                                  std::uint64_t batch_seed) {
  const long n = static_cast<long>(queries.size());
  std::vector<ContactEvaluation> out(queries.size());
#if defined(ASMPLAN_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic, 8)
#endif
  for (long i = 0; i < n; ++i) {
    const ContactQuery& item = queries[i];
    try {
      out[i] = evaluate_contact(*item.pair, item.q, settings, level, item.seeds,
                                item_seed(batch_seed, static_cast<std::uint64_t>(i)));
    } catch (const std::exception&) {
      out[i] = ContactEvaluation{};
      out[i].status = IpStatus::kNumericFailure;
    }
  }
  return out;
}

int set_thread_count(int n) {
#if defined(ASMPLAN_HAVE_OPENMP)
  if (n > 0) omp_set_num_threads(n);
  return omp_get_max_threads();
#else
  (void)n;
  return 1;
#endif
}

}  // namespace asmplan
