#pragma once

// Small planning scenes that solve in well under a second.

#include "asmplan/geometry.hpp"
#include "asmplan/ocp.hpp"

namespace asmplan::testing {

// Unit cube over a wide ground slab (top face at z = 0), with gravity.
inline BodySpec cube_on_ground() {
  BodySpec b;
  b.mass = 1.0;
  b.inertia = Vec3::Constant(1.0 / 6.0);
  b.gravity_wrench[2] = -9.81;
  b.actuated.push_back(Polytope::box(Vec3::Constant(0.5)));
  Pose slab;
  slab.position = Vec3(0, 0, -0.5);
  b.environment.push_back(Polytope::box(Vec3(5, 5, 0.5), slab));
  b.pairs.push_back({0, 0});
  return b;
}

// Slide the cube 0.1 along x while it rests on the ground.
inline OcpConfig short_slide(int n_s = 2) {
  OcpConfig c;
  c.N = 6;
  c.dt = 0.05;
  c.n_s = n_s;
  c.rho_dir.clear();
  for (int l = 0; l < n_s; ++l) c.rho_dir.push_back(l == 0 ? Vec3(Vec3::Zero()) : Vec3(Vec3::UnitY()));
  c.delta_hat = 0.01;
  c.x0.q.position = Vec3(0, 0, 0.51);
  c.goal.position = Vec3(0.1, 0, 0.51);
  c.n_hom = 2;
  c.tau_1 = 1e-2;
  c.sigma_1 = 1e-2;
  c.mu_init_1 = 0.1;
  c.tol = 1e-6;
  c.max_iterations = 300;
  c.seed = 3;
  return c;
}

}  // namespace asmplan::testing
