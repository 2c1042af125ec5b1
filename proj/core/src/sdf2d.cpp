#include "asmplan/sdf2d.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "asmplan/types.hpp"

namespace asmplan {

Polygon2d Polygon2d::square(double half_extent) {
  Eigen::MatrixX2d G(4, 2);
  G << 1, 0, -1, 0, 0, 1, 0, -1;
  return validate_polygon(G, Eigen::VectorXd::Constant(4, half_extent));
}

Polygon2d validate_polygon(const Eigen::MatrixX2d& G, const Eigen::VectorXd& h) {
  using Kind = PolytopeError::Kind;
  if (G.rows() == 0 || G.rows() != h.size() || !G.allFinite() || !h.allFinite()) {
    throw PolytopeError(Kind::kShape, "polygon: G and h must be finite with matching rows");
  }
  Polygon2d P{G, h};
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    const double n = G.row(i).norm();
    if (!(n > 1e-12)) throw PolytopeError(Kind::kDegenerateFace, "polygon: zero row in G");
    if (std::abs(n - 1.0) > 1e-14) {
      P.G.row(i) /= n;
      P.h[i] /= n;
    }
    if (!(P.h[i] > 0.0)) {
      throw PolytopeError(Kind::kOriginNotInterior,
                          "polygon: origin must lie strictly inside (h > 0)");
    }
  }
  LpData lp{P.G, P.h, Eigen::VectorXd::Zero(2)};
  IpSettings settings;
  settings.tau = 1e-6;
  settings.max_iterations = 100;
  for (int axis = 0; axis < 2; ++axis) {
    for (double sign : {-1.0, 1.0}) {
      lp.c.setZero();
      lp.c[axis] = -sign;
      const IpResult r = solve_lp_barrier(lp, Eigen::VectorXd::Zero(2), settings);
      if (!r.ok() || !(r.gamma.z.norm() < 1e6)) {
        throw PolytopeError(Kind::kUnbounded, "polygon: unbounded");
      }
    }
  }
  return P;
}

PointSdf point_polygon_sdf(const Polygon2d& poly, const Eigen::Vector2d& point,
                           const IpSettings& settings) {
  const Eigen::Index ng = poly.h.size();
  LpData lp;
  lp.A = Eigen::MatrixXd::Constant(ng, 1, -1.0);
  lp.b = poly.h - poly.G * point;
  lp.c = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd z0(1);
  z0[0] = (-lp.b).maxCoeff() + 1.0;
  const IpResult r = solve_lp_barrier(lp, z0, settings);
  PointSdf out;
  out.status = r.status;
  if (!r.ok()) return out;
  out.phi = r.gamma.z[0];
  out.normal = poly.G.transpose() * r.gamma.lambda;
  return out;
}

void GridSpec::validate() const {
  if (nx < 1 || ny < 1) throw ConfigError("grid: nx and ny must be at least 1");
  if (!(x_max >= x_min) || !(y_max >= y_min)) throw ConfigError("grid: inverted bounds");
  if ((nx > 1 && !(x_max > x_min)) || (ny > 1 && !(y_max > y_min))) {
    throw ConfigError("grid: zero-width range with more than one sample");
  }
}

double GridSpec::x(int i) const {
  return nx == 1 ? x_min : x_min + (x_max - x_min) * i / (nx - 1);
}

double GridSpec::y(int j) const {
  return ny == 1 ? y_min : y_min + (y_max - y_min) * j / (ny - 1);
}

std::vector<GridSample> sdf_grid_2d(const Polygon2d& poly, const GridSpec& grid, double tau) {
  grid.validate();
  IpSettings settings;
  settings.tau = tau;
  settings.validate();
  std::vector<GridSample> out;
  out.reserve(static_cast<std::size_t>(grid.nx) * grid.ny);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const Eigen::Vector2d p(grid.x(i), grid.y(j));
      const PointSdf s = point_polygon_sdf(poly, p, settings);
      if (s.status != IpStatus::kConverged) {
        std::ostringstream os;
        os << "sdf_grid_2d: solve failed at (" << p.x() << ", " << p.y() << ")";
        throw NumericFailure(os.str());
      }
      out.push_back({p.x(), p.y(), s.phi, s.normal.x(), s.normal.y()});
    }
  }
  return out;
}

void write_sdf_csv(std::ostream& os, const std::vector<GridSample>& samples) {
  os << "x,y,phi,n_x,n_y\n";
  char buf[160];
  for (const GridSample& s : samples) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", s.x, s.y, s.phi, s.n_x,
                  s.n_y);
    os << buf;
  }
}

}  // namespace asmplan
