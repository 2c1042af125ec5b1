#include <sstream>

#include <gtest/gtest.h>

#include "asmplan/sdf2d.hpp"
#include "asmplan/types.hpp"

namespace asmplan {
namespace {

IpSettings tight(double tau) {
  IpSettings s;
  s.tau = tau;
  return s;
}

TEST(PointSdf, SquareValues) {
  const Polygon2d sq = Polygon2d::square(1.0);
  const IpSettings s = tight(1e-8);

  const PointSdf centre = point_polygon_sdf(sq, {0.0, 0.0}, s);
  ASSERT_EQ(centre.status, IpStatus::kConverged);
  EXPECT_LT(centre.phi, 0.0);
  EXPECT_NEAR(centre.phi, -1.0, 1e-6);

  const PointSdf edge = point_polygon_sdf(sq, {1.0, 0.3}, s);
  EXPECT_NEAR(edge.phi, 0.0, 1e-6);

  // one unit out along the +x face normal
  const PointSdf out = point_polygon_sdf(sq, {2.0, 0.0}, s);
  EXPECT_NEAR(out.phi, 1.0, 1e-6);
  EXPECT_NEAR(out.normal.x(), 1.0, 1e-6);
  EXPECT_NEAR(out.normal.y(), 0.0, 1e-6);
}

TEST(PointSdf, SmoothingRaisesValue) {
  const Polygon2d sq = Polygon2d::square(1.0);
  double prev = -1e300;
  for (double tau : {1e-6, 1e-4, 1e-2}) {
    const PointSdf r = point_polygon_sdf(sq, {2.0, 2.0}, tight(tau));
    EXPECT_GT(r.phi, prev);
    prev = r.phi;
  }
}

TEST(SdfGrid, ZeroLevelOnBoundary) {
  const Polygon2d sq = Polygon2d::square(1.0);
  GridSpec g;
  g.x_min = g.y_min = -2.0;
  g.x_max = g.y_max = 2.0;
  g.nx = g.ny = 41;
  const auto samples = sdf_grid_2d(sq, g, 1e-6);
  ASSERT_EQ(samples.size(), 41u * 41u);
  for (const auto& p : samples) {
    const double inf_norm = std::max(std::abs(p.x), std::abs(p.y));
    // Chebyshev distance to the square boundary
    EXPECT_NEAR(p.phi, inf_norm - 1.0, 1e-4) << p.x << "," << p.y;
  }
}

TEST(SdfGrid, EmptyGridRejected) {
  GridSpec g;
  g.nx = 0;
  g.ny = 5;
  EXPECT_THROW(g.validate(), ConfigError);
  EXPECT_THROW(sdf_grid_2d(Polygon2d::square(1.0), g, 1e-3), ConfigError);
  g.nx = 5;
  g.x_max = g.x_min - 1.0;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(SdfGrid, CsvHeader) {
  GridSpec g;
  g.nx = g.ny = 2;
  std::ostringstream os;
  write_sdf_csv(os, sdf_grid_2d(Polygon2d::square(0.5), g, 1e-3));
  EXPECT_EQ(os.str().substr(0, 15), "x,y,phi,n_x,n_y");
}

}  // namespace
}  // namespace asmplan
