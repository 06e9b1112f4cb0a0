#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vlab/brake.hpp"
#include "vlab/families.hpp"
#include "vlab/rng.hpp"

using namespace vlab;

namespace {

MassSystem planar3(double m1 = 1.0, double m2 = 1.0, double m3 = 1.0) {
  MassSystem sys;
  sys.masses = {m1, m2, m3};
  sys.dim = 2;
  return sys;
}

}  // namespace

TEST_CASE("equilateral equal-mass brake start collapses homothetically") {
  MassSystem sys = planar3();
  Config q = lagrange_cc(sys).q;
  q = scale_to_level(q, sys, 1.0);  // U = h = 1, boundary brake point

  auto orbit = brake_start(q, sys, 20.0);
  CHECK(orbit.h == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(orbit.forward.stop == StopReason::collision_proximity);
  CHECK(orbit.backward.stop == StopReason::collision_proximity);

  // min r_ab decreases monotonically and the shape stays equilateral
  double prev = std::numeric_limits<double>::infinity();
  double t_end = orbit.forward.t_end();
  for (int i = 0; i <= 100; ++i) {
    State s = orbit.forward.state_at(t_end * i / 100.0);
    double r = min_pair_distance(s.q, sys);
    CHECK(r < prev + 1e-12);
    prev = r;
    double r01 = pair_distance(s.q, 0, 1, 2);
    double r02 = pair_distance(s.q, 0, 2, 2);
    CHECK(std::abs(r01 - r02) < 1e-9 + 1e-6 * r01);
  }
  CHECK(orbit.closest_approach < 2e-4);

  // collision configuration rejected outright
  Config col = {0.0, 0.0, 0.0, 0.0, 1.0, 1.0};
  CHECK_THROWS_AS(brake_start(col, sys, 1.0), std::domain_error);
}

TEST_CASE("two-body brake start falls to collision in the radial Kepler time") {
  MassSystem two;
  two.masses = {1.0, 1.0};
  two.dim = 2;
  double r0 = 1.3;
  Config q = {-r0 / 2, 0.0, r0 / 2, 0.0};

  PropagateOptions opts;
  opts.rtol = 1e-12;
  opts.atol = 1e-12;
  opts.r_prox = 1e-6;
  auto orbit = brake_start(q, two, 10.0, opts);
  CHECK(orbit.forward.stop == StopReason::collision_proximity);

  double t_c = oracle::radial_fall_time(1.0, 1.0, r0, two.G);
  CHECK(orbit.forward.t_end() == doctest::Approx(t_c).epsilon(1e-3));
  CHECK(orbit.closest_approach <= 2e-6);
}

TEST_CASE("generic brake start crosses the virial surface before closest approach") {
  MassSystem sys = planar3(1.0, 1.3, 0.7);
  Config q = {-1.1, 0.2, 0.9, -0.4, 0.3, 1.2};
  com_normalize(q, sys);
  q = scale_to_level(q, sys, 1.0);

  PropagateOptions opts;
  opts.r_prox = 1e-6;
  auto orbit = brake_start(q, sys, 30.0, opts);

  double t_end = orbit.forward.t_end();
  double t_closest = 0.0, r_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 2000; ++i) {
    double t = t_end * i / 2000.0;
    double r = min_pair_distance(orbit.forward.state_at(t).q, sys);
    if (r < r_min) {
      r_min = r;
      t_closest = t;
    }
  }
  bool crossed_before = false;
  for (const Event& ev : orbit.forward.events)
    if (ev.kind == EventKind::virial_crossing && !ev.degenerate && ev.t < t_closest)
      crossed_before = true;
  CHECK(crossed_before);
}

TEST_CASE("brake symmetry holds, scales with tolerance, and detects non-brake starts") {
  MassSystem sys = planar3(1.0, 0.9, 1.4);
  Config q = {-1.0, 0.1, 1.1, 0.3, -0.1, -1.0};
  com_normalize(q, sys);
  q = scale_to_level(q, sys, 1.0);

  PropagateOptions tight;
  tight.rtol = 1e-12;
  tight.atol = 1e-12;
  auto orbit = brake_start(q, sys, 4.0, tight);
  double span = 0.95 * std::min(orbit.forward.t_end(), -orbit.backward.t_end());
  double asym_tight = verify_brake_symmetry(orbit, span);
  CHECK(asym_tight < 1e-8);

  PropagateOptions loose;
  loose.rtol = 1e-6;
  loose.atol = 1e-6;
  auto orbit_loose = brake_start(q, sys, 4.0, loose);
  double span_l = 0.95 * std::min(orbit_loose.forward.t_end(), -orbit_loose.backward.t_end());
  double asym_loose = verify_brake_symmetry(orbit_loose, std::min(span, span_l));
  CHECK(asym_tight < asym_loose);

  // negative control: v != 0 start is not reflection-symmetric
  State moving;
  moving.q = q;
  moving.v = Config(q.size(), 0.0);
  moving.v[0] = 0.3;
  moving.v[3] = -0.2;
  com_normalize(moving, sys);
  BrakeOrbit fake;
  fake.q_star = q;
  fake.h = potential_U(q, sys);
  fake.forward = propagate(moving, sys, 4.0, tight);
  fake.backward = propagate(moving, sys, -4.0, tight);
  double span_f = 0.9 * std::min(fake.forward.t_end(), -fake.backward.t_end());
  CHECK(verify_brake_symmetry(fake, span_f) > 1e-2);

  CHECK_THROWS_AS(verify_brake_symmetry(orbit, 100.0), std::invalid_argument);
}

TEST_CASE("orbits leave the Hill boundary along the gradient of U") {
  MassSystem sys = planar3(1.0, 0.8, 0.6);
  Rng rng(7);
  int tested = 0;
  while (tested < 5) {
    Config q(6);
    for (double& x : q) x = rng.normal();
    com_normalize(q, sys);
    if (min_pair_distance(q, sys) < 0.3) continue;
    q = scale_to_level(q, sys, 1.0);
    PropagateOptions opts;
    opts.rtol = 1e-12;
    opts.atol = 1e-12;
    auto orbit = brake_start(q, sys, 0.5, opts);
    State s = orbit.forward.state_at(0.01);
    CHECK(boundary_hit_alignment(s, sys) > 1.0 - 1e-6);
    ++tested;
  }
}

TEST_CASE("shooting reports collision-bound seeds instead of failing") {
  // collinear two-body bounce: regularizable but a collision for us
  MassSystem two;
  two.masses = {1.0, 1.0};
  two.dim = 2;
  Config q2 = scale_to_level(Config{-0.5, 0.0, 0.5, 0.0}, two, 1.0);
  auto ev2 = brake_shoot_eval(q2, two, EnergyLevel(1.0), 10.0);
  CHECK_FALSE(ev2.second_approach);
  CHECK(ev2.stop == StopReason::collision_proximity);

  // homothetic triple collapse: K rises monotonically into the collision
  MassSystem sys = planar3();
  Config q3 = scale_to_level(lagrange_cc(sys).q, sys, 1.0);
  auto ev3 = brake_shoot_eval(q3, sys, EnergyLevel(1.0), 10.0);
  CHECK_FALSE(ev3.second_approach);
  CHECK(ev3.stop == StopReason::collision_proximity);
}

TEST_CASE("periodic brake orbit: local search converges and the orbit closes") {
  MassSystem sys = planar3(1.0, 0.8, 0.6);
  EnergyLevel level(1.0);
  Config seed = {-0.5, 0.0, 0.5, 0.0, 0.1, 0.185};
  com_normalize(seed, sys);

  BrakeShootOptions opts;
  opts.t_max = 20.0;
  opts.sim_step = 0.01;
  opts.max_evals = 3000;
  opts.propagate.rtol = 1e-12;
  opts.propagate.atol = 1e-12;
  opts.propagate.r_prox = 1e-5;

  double seed_residual =
      brake_shoot_eval(scale_to_level(seed, sys, level.h), sys, level, opts.t_max,
                       opts.propagate)
          .residual;

  auto orb = periodic_brake_shoot(seed, sys, level, opts);
  CHECK(orb.residual < 1e-3 * seed_residual);  // local search made real progress
  REQUIRE(orb.converged);
  CHECK(orb.residual < 1e-6);
  CHECK(orb.closure < 1e-6);
  CHECK(orb.avg_U == doctest::Approx(2.0 * level.h).epsilon(1e-4));
  CHECK(orb.virial_crossings >= 2);

  // starting boundary point is an orthogonal hit by construction (v = 0);
  // the midpoint boundary approach is orthogonal within the residual
  State near_hit = orb.orbit.state_at(orb.period / 2.0 - 1e-3);
  CHECK(boundary_hit_alignment(near_hit, sys) > 0.999);
}
