#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "vlab/brake.hpp"
#include "vlab/families.hpp"
#include "vlab/rng.hpp"
#include "vlab/shape.hpp"

using namespace vlab;

namespace {

MassSystem planar3(double m1 = 1.0, double m2 = 1.0, double m3 = 1.0) {
  MassSystem sys;
  sys.masses = {m1, m2, m3};
  sys.dim = 2;
  return sys;
}

double wnorm(const std::array<double, 3>& w) {
  return std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
}

Config rotated(const Config& q, double th) {
  Config r(q.size());
  double c = std::cos(th), s = std::sin(th);
  for (std::size_t a = 0; a < q.size() / 2; ++a) {
    r[a * 2] = c * q[a * 2] - s * q[a * 2 + 1];
    r[a * 2 + 1] = s * q[a * 2] + c * q[a * 2 + 1];
  }
  return r;
}

// the converged periodic zero-velocity start found by the shooting search
// (masses 1, 0.8, 0.6, level h = 1); closure is a few 1e-8
const Config kPeriodicBrakeQ = {-1.385685140150, -0.128870750884, 1.473353582637,
                                -0.126193992711, 0.345003790067, 0.383043241755};
const double kPeriodicBrakeP = 21.44614982;

}  // namespace

TEST_CASE("shape projection: poles, equator, collision rays, shell radius") {
  MassSystem sys = planar3();

  // equilateral triangles sit at the poles: |w3| = |w|
  Config eq = lagrange_cc(sys).q;
  auto p = shape_project(eq, sys);
  CHECK(std::abs(p.w[2]) == doctest::Approx(wnorm(p.w)).epsilon(1e-12));
  CHECK(wnorm(p.w) == doctest::Approx(0.5 * moment_I(eq, sys)).epsilon(1e-12));
  CHECK(p.r == doctest::Approx(std::sqrt(moment_I(eq, sys))).epsilon(1e-12));

  // collinear configurations land on the equator
  Config col = {-1.0, 0.0, 0.3, 0.0, 1.2, 0.0};
  com_normalize(col, sys);
  CHECK(std::abs(shape_project(col, sys).w[2]) < 1e-14);

  // binary collisions map to their designated equatorial rays
  Config c12 = {0.5, 0.5, 0.5, 0.5, -1.0, -1.0};
  com_normalize(c12, sys);
  auto pc = shape_project(c12, sys);
  CHECK(pc.w[0] < 0.0);
  CHECK(std::abs(pc.w[1]) < 1e-14);
  CHECK(std::abs(pc.w[2]) < 1e-14);

  // all three rays are equatorial; equal masses place them 120 degrees apart
  auto r01 = collision_ray(0, 1, sys);
  auto r12 = collision_ray(1, 2, sys);
  auto r02 = collision_ray(0, 2, sys);
  auto angle = [](const std::array<double, 3>& r) { return std::atan2(r[1], r[0]); };
  CHECK(angle(r01) == doctest::Approx(M_PI));
  CHECK(std::abs(std::remainder(angle(r12) - angle(r01), 2.0 * M_PI)) ==
        doctest::Approx(2.0 * M_PI / 3.0).epsilon(1e-10));
  CHECK(std::abs(std::remainder(angle(r02) - angle(r01), 2.0 * M_PI)) ==
        doctest::Approx(2.0 * M_PI / 3.0).epsilon(1e-10));
}

TEST_CASE("shape projection is rotation-invariant") {
  MassSystem sys = planar3(1.0, 0.8, 0.6);
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    Config q(6);
    for (double& x : q) x = rng.normal();
    com_normalize(q, sys);
    auto p0 = shape_project(q, sys);
    auto p1 = shape_project(rotated(q, rng.uniform(0.0, 2.0 * M_PI)), sys);
    for (int k = 0; k < 3; ++k)
      CHECK(p0.w[k] == doctest::Approx(p1.w[k]).epsilon(1e-10));
    CHECK(p0.r == doctest::Approx(p1.r).epsilon(1e-12));
  }
}

TEST_CASE("potential on shape space: round trip and the scaling map") {
  MassSystem sys = planar3(1.0, 1.2, 0.5);
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    Config q(6);
    for (double& x : q) x = rng.normal();
    com_normalize(q, sys);
    auto p = shape_project(q, sys);
    CHECK(shape_U(p.w, sys) == doctest::Approx(potential_U(q, sys)).epsilon(1e-12));

    // q -> lambda q sends w -> lambda^2 w and U -> U / lambda
    double lam = rng.uniform(0.2, 3.0);
    std::array<double, 3> ws = {lam * lam * p.w[0], lam * lam * p.w[1],
                                lam * lam * p.w[2]};
    CHECK(shape_U(ws, sys) ==
          doctest::Approx(potential_U(q, sys) / lam).epsilon(1e-12));
  }
}

TEST_CASE("syzygy words: relative equilibria") {
  MassSystem sys = planar3();
  EnergyLevel level(1.0);
  PropagateOptions opts;
  opts.rtol = 1e-11;
  opts.atol = 1e-11;

  // never collinear: empty word, not degenerate
  Trajectory lag = propagate(lagrange_equilateral(sys, level), sys, 20.0, opts);
  auto w_lag = syzygy_sequence(lag);
  CHECK(w_lag.symbols.empty());
  CHECK_FALSE(w_lag.degenerate);
  CHECK_FALSE(w_lag.truncated);

  // always collinear: flagged degenerate, no letters
  Trajectory eul = propagate(euler_collinear(sys, {0, 1, 2}, level), sys, 20.0, opts);
  auto w_eul = syzygy_sequence(eul);
  CHECK(w_eul.degenerate);
  CHECK(w_eul.symbols.empty());
}

TEST_CASE("periodic orbit: the two-period word is the square of the one-period word") {
  MassSystem sys = planar3(1.0, 0.8, 0.6);
  PropagateOptions opts;
  opts.rtol = 1e-12;
  opts.atol = 1e-12;
  State s0;
  s0.q = kPeriodicBrakeQ;
  s0.v = Config(6, 0.0);
  Trajectory one = propagate(s0, sys, kPeriodicBrakeP, opts);
  Trajectory two = propagate(s0, sys, 2.0 * kPeriodicBrakeP, opts);

  auto w1 = syzygy_sequence(one);
  auto w2 = syzygy_sequence(two);
  REQUIRE(!w1.symbols.empty());
  REQUIRE(w2.symbols.size() == 2 * w1.symbols.size());
  for (std::size_t i = 0; i < w1.symbols.size(); ++i) {
    CHECK(w2.symbols[i] == w1.symbols[i]);
    CHECK(w2.symbols[i + w1.symbols.size()] == w1.symbols[i]);
  }
  for (std::size_t i = 0; i + 1 < w2.times.size(); ++i)
    CHECK(w2.times[i] < w2.times[i + 1]);

  // re-sampling at a coarser tolerance leaves the word unchanged
  PropagateOptions loose;
  loose.rtol = 1e-9;
  loose.atol = 1e-9;
  auto w1_loose = syzygy_sequence(propagate(s0, sys, kPeriodicBrakeP, loose));
  CHECK(w1_loose.symbols == w1.symbols);
}

TEST_CASE("collision stop truncates the word and flags it") {
  MassSystem sys = planar3();
  double th = 0.3;  // isosceles rest start: middle-body-3 crossings, then a
                    // pair collision
  Config q = {-std::cos(th), 0.0, std::cos(th), 0.0, 0.0, std::sin(th)};
  com_normalize(q, sys);
  q = scale_to_level(q, sys, 1.0);
  PropagateOptions opts;
  opts.r_prox = 1e-4;
  auto orbit = brake_start(q, sys, 40.0, opts);
  REQUIRE(orbit.forward.stop == StopReason::collision_proximity);

  auto word = syzygy_sequence(orbit.forward);
  CHECK(word.truncated);
  REQUIRE(!word.symbols.empty());
  for (int s : word.symbols) CHECK(s == 2);
}

TEST_CASE("isosurface mesh: vertex values, tubes, symmetry, scaling") {
  MassSystem sys = planar3();
  double h = 1.0;
  auto mesh = hill_mesh(sys, h, 48, 8.0);
  REQUIRE(!mesh.vertices.empty());
  CHECK(mesh.vertices.size() == 3 * mesh.faces.size());

  double worst = 0.0;
  for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(shape_U(v, sys) - h));
  CHECK(worst < 5e-3 * h);

  // far vertices belong to three tubes, one per tight binary pair
  int tube_count[3] = {0, 0, 0};
  for (const auto& v : mesh.vertices) {
    if (wnorm(v) < 9.0) continue;  // past the central lobe and neck region
    Config q = detail::config_of_shape(v, sys);
    double shell = std::sqrt(moment_I(q, sys));
    double best = std::numeric_limits<double>::infinity();
    int pair = -1, id = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b, ++id)
        if (pair_distance(q, a, b, 2) < best) {
          best = pair_distance(q, a, b, 2);
          pair = id;
        }
    CHECK(best < 0.45 * shell);  // someone is tight out in the tubes
    ++tube_count[pair];
    id = 0;
  }
  CHECK(tube_count[0] > 0);
  CHECK(tube_count[1] > 0);
  CHECK(tube_count[2] > 0);

  // equal masses: the potential on shape space has three-fold symmetry
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    std::array<double, 3> w = {rng.normal(), rng.normal(), rng.normal()};
    double c = std::cos(2.0 * M_PI / 3.0), s = std::sin(2.0 * M_PI / 3.0);
    std::array<double, 3> wr = {c * w[0] - s * w[1], s * w[0] + c * w[1], w[2]};
    CHECK(shape_U(wr, sys) == doctest::Approx(shape_U(w, sys)).epsilon(1e-10));
  }

  // homogeneity: the U = 2h mesh is the U = h mesh scaled by 1/2 in r,
  // so scaling its vertices by 4 in w lands them back on {U = h}
  auto mesh2 = hill_mesh(sys, 2.0 * h, 48, 2.0);
  REQUIRE(!mesh2.vertices.empty());
  double worst2 = 0.0;
  for (const auto& v : mesh2.vertices) {
    std::array<double, 3> w4 = {4.0 * v[0], 4.0 * v[1], 4.0 * v[2]};
    worst2 = std::max(worst2, std::abs(shape_U(w4, sys) - h));
  }
  CHECK(worst2 < 5e-3 * h);

  CHECK_THROWS_AS(hill_mesh(sys, h, 1, 8.0), std::invalid_argument);
  CHECK_THROWS_AS(hill_mesh(sys, h, 4096, 8.0), std::invalid_argument);

  std::ostringstream obj;
  write_obj(mesh2, obj);
  std::string text = obj.str();
  CHECK(text.substr(0, 2) == "v ");
  CHECK(text.find("\nf ") != std::string::npos);
}
