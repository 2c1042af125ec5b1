#pragma once

// Point-to-polygon variant of the smooth distance in the plane:
//
//   min alpha   s.t.   G rho <= h + alpha 1
//
// for a fixed point rho, solved to barrier parameter tau. Phi = alpha (no
// factor two) and n = G^T lambda.

#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "asmplan/lp_solver.hpp"

namespace asmplan {

/// Bounded polygon {p : G p <= h} with unit rows and h > 0.
struct Polygon2d {
  Eigen::MatrixX2d G;
  Eigen::VectorXd h;

  static Polygon2d square(double half_extent);
};

/// Row normalization, h > 0 and boundedness checks (PolytopeError on failure).
Polygon2d validate_polygon(const Eigen::MatrixX2d& G, const Eigen::VectorXd& h);

struct PointSdf {
  IpStatus status = IpStatus::kNumericFailure;
  double phi = 0.0;
  Eigen::Vector2d normal = Eigen::Vector2d::Zero();
};

PointSdf point_polygon_sdf(const Polygon2d& poly, const Eigen::Vector2d& point,
                           const IpSettings& settings);

struct GridSpec {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
  int nx = 0;
  int ny = 0;

  /// Throws ConfigError for an empty or inverted grid.
  void validate() const;
  double x(int i) const;
  double y(int j) const;
};

struct GridSample {
  double x = 0.0;
  double y = 0.0;
  double phi = 0.0;
  double n_x = 0.0;
  double n_y = 0.0;
};

/// Row-major samples (y outer, x inner). Throws NumericFailure when a grid
/// point cannot be solved.
std::vector<GridSample> sdf_grid_2d(const Polygon2d& poly, const GridSpec& grid, double tau);

/// CSV with header x,y,phi,n_x,n_y.
void write_sdf_csv(std::ostream& os, const std::vector<GridSample>& samples);

}  // namespace asmplan
