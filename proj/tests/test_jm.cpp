#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "vlab/families.hpp"
#include "vlab/jm.hpp"
#include "vlab/rng.hpp"

using namespace vlab;

namespace {

MassSystem planar3(double m1 = 1.0, double m2 = 1.0, double m3 = 1.0) {
  MassSystem sys;
  sys.masses = {m1, m2, m3};
  sys.dim = 2;
  return sys;
}

MassSystem two_body() {
  MassSystem sys;
  sys.masses = {1.0, 1.0};
  sys.dim = 2;
  return sys;
}

// rigid-rotation loop of a configuration: constant I and U along the loop
std::vector<Config> rotation_loop(const Config& q, const MassSystem& sys, int M) {
  std::vector<Config> loop;
  loop.reserve(M + 1);
  for (int i = 0; i <= M; ++i) {
    double th = 2.0 * M_PI * i / M;
    double c = std::cos(th), s = std::sin(th);
    Config r(q.size());
    for (std::size_t a = 0; a < sys.n(); ++a) {
      r[a * 2] = c * q[a * 2] - s * q[a * 2 + 1];
      r[a * 2 + 1] = s * q[a * 2] + c * q[a * 2 + 1];
    }
    loop.push_back(std::move(r));
  }
  return loop;
}

// closed-form radial length between separations r_a < r_b at level h
double radial_length_oracle(double mu, double gm1m2, double h, double r_a, double r_b,
                            int n = 400000) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double r = r_a + (r_b - r_a) * (i + 0.5) / n;
    total += std::sqrt(2.0 * std::max(0.0, gm1m2 / r - h) * mu) * (r_b - r_a) / n;
  }
  return total;
}

}  // namespace

TEST_CASE("boundary-band paths have zero length; membership is enforced") {
  MassSystem sys = planar3();
  EnergyLevel level(1.0);

  // walk along the boundary: every node scaled to U = h exactly
  Rng rng(5);
  std::vector<Config> band;
  Config q = scale_to_level(lagrange_cc(sys).q, sys, level.h);
  for (int i = 0; i < 20; ++i) {
    band.push_back(q);
    for (double& x : q) x += 0.02 * rng.normal();
    com_normalize(q, sys);
    q = scale_to_level(q, sys, level.h);
  }
  double L = jm_length(band, sys, level.h);
  CHECK(L < 1e-3);  // chord midpoints sit near the degenerate factor

  auto path = make_jm_path(band, sys, level, 1e-7);
  CHECK(path.tag_begin == EndpointTag::brake_point);
  CHECK(path.tag_end == EndpointTag::brake_point);
  CHECK(path.length == doctest::Approx(L));

  // node strictly outside the Hill region is rejected
  std::vector<Config> bad = band;
  for (double& x : bad[3]) x *= 1.5;  // U drops below h
  CHECK_THROWS_AS(jm_length(bad, sys, level.h), std::domain_error);
}

TEST_CASE("on-shell identity: path length equals the action integral 2 int K dt") {
  for (double e : {0.0, 0.3, 0.6}) {
    auto tb = oracle::make_two_body(1.0, 1.0, 0.5, e);
    State s0 = oracle::two_body_state_at_perihelion(tb);
    PropagateOptions opts;
    opts.rtol = 1e-12;
    opts.atol = 1e-12;
    Trajectory traj = propagate(s0, tb.sys, tb.period, opts);
    double action = 2.0 * (traj.integral_K_at(tb.period) - traj.integral_K_at(0.0));
    double L = jm_length(sample_path(traj, 0.0, tb.period, 4000), tb.sys, tb.h);
    CHECK(L == doctest::Approx(action).epsilon(1e-6));
  }
}

TEST_CASE("midpoint rule: halving segment lengths converges at second order") {
  auto tb = oracle::make_two_body(1.0, 1.0, 0.5, 0.3);
  State s0 = oracle::two_body_state_at_perihelion(tb);
  PropagateOptions opts;
  opts.rtol = 1e-12;
  opts.atol = 1e-12;
  Trajectory traj = propagate(s0, tb.sys, tb.period, opts);
  double l1 = jm_length(sample_path(traj, 0.0, tb.period, 250), tb.sys, tb.h);
  double l2 = jm_length(sample_path(traj, 0.0, tb.period, 500), tb.sys, tb.h);
  double l4 = jm_length(sample_path(traj, 0.0, tb.period, 1000), tb.sys, tb.h);
  double ratio = (l1 - l2) / (l2 - l4);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("scaling a loop toward total collision shrinks length like sqrt(lambda)") {
  MassSystem sys = planar3();
  double h = 0.1;  // small against U = 3 on the unit shell: h-term negligible
  // loop on the unit shell I = 1, bounded away from collision
  Config q = lagrange_cc(sys).q;
  double s = 1.0 / std::sqrt(moment_I(q, sys));
  for (double& x : q) x *= s;
  std::vector<Config> loop = rotation_loop(q, sys, 64);

  CHECK(scaling_length_ratio(loop, sys, h, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  double lam = 0.01;
  CHECK(scaling_length_ratio(loop, sys, h, lam) / std::sqrt(lam) > 0.9);
  CHECK(scaling_length_ratio(loop, sys, h, lam) / std::sqrt(lam) < 1.1);

  // h = 0: the ratio is sqrt(lambda) exactly, at any lambda
  for (double l2 : {0.7, 0.2, 0.01})
    CHECK(scaling_length_ratio(loop, sys, 0.0, l2) ==
          doctest::Approx(std::sqrt(l2)).epsilon(1e-12));

  CHECK_THROWS_AS(scaling_length_ratio(loop, sys, h, 1e-9), std::domain_error);
}

TEST_CASE("two-body minimizer is the radial segment and re-integrates through q0") {
  MassSystem sys = two_body();
  EnergyLevel level(1.0);
  Config q0 = {-0.25, 0.0, 0.25, 0.0};  // r = 1/2, U = 2h
  REQUIRE(potential_U(q0, sys) == doctest::Approx(2.0 * level.h));

  auto res = geodesic_to_brake(q0, sys, level);
  CHECK(res.converged);
  CHECK_FALSE(res.collision_flagged);
  CHECK(res.verify_distance < 1e-4);

  // closed-form radial length from r = 1/2 to the boundary r = 1 (mu = 1/2)
  double oracle_len = radial_length_oracle(0.5, 1.0, level.h, 0.5, 1.0);
  CHECK(res.path.length == doctest::Approx(oracle_len).epsilon(1e-3));

  // the minimizer stays on the radial ray: transverse components vanish
  for (const Config& node : res.path.nodes) {
    CHECK(std::abs(node[1]) < 1e-8);
    CHECK(std::abs(node[3]) < 1e-8);
  }
  CHECK(res.path.tag_end == EndpointTag::brake_point);
}

TEST_CASE("point already in the boundary band yields the zero-length path") {
  MassSystem sys = planar3();
  EnergyLevel level(1.0);
  Config q = scale_to_level(lagrange_cc(sys).q, sys, level.h);
  auto res = geodesic_to_brake(q, sys, level);
  CHECK(res.path.length == 0.0);
  CHECK(res.path.tag_end == EndpointTag::brake_point);
  CHECK(res.verify_distance == 0.0);
  CHECK(kinetic_K(res.brake_state.v, sys) == 0.0);

  // outside the Hill region: rejected
  Config out = q;
  for (double& x : out) x *= 1.5;
  CHECK_THROWS_AS(geodesic_to_brake(out, sys, level), std::domain_error);
}

TEST_CASE("three-body minimizer: collision-free, below the radial upper bound") {
  MassSystem sys = planar3();
  EnergyLevel level(1.0);
  Config q0 = scale_to_level(lagrange_cc(sys).q, sys, 2.0 * level.h);
  q0[0] += 0.13;
  q0[3] -= 0.07;
  com_normalize(q0, sys);

  auto res = geodesic_to_brake(q0, sys, level);
  CHECK(res.converged);
  CHECK_FALSE(res.collision_flagged);
  CHECK(res.verify_distance < 1e-3);

  GeodesicOptions opts;
  Config start = q0;
  com_normalize(start, sys);
  double upper = jm_length(
      detail::init_boundary_chain(start, sys, level.h, opts.band_tol, opts.n_nodes),
      sys, level.h);
  CHECK(res.path.length <= upper + 1e-12);

  double r_chain = std::numeric_limits<double>::infinity();
  for (const Config& node : res.path.nodes)
    r_chain = std::min(r_chain, min_pair_distance(node, sys));
  CHECK(r_chain > opts.r_pen * std::sqrt(moment_I(start, sys)));
}

TEST_CASE("first variation: perturbing a converged minimizer cannot shorten it") {
  MassSystem sys = planar3();
  EnergyLevel level(1.0);
  Config q0 = scale_to_level(lagrange_cc(sys).q, sys, 2.5 * level.h);
  q0[2] += 0.1;
  com_normalize(q0, sys);
  GeodesicOptions opts;
  opts.shoot_evals = 60;  // the path, not the re-integration, is under test
  auto res = geodesic_to_brake(q0, sys, level, opts);

  Rng rng(12);
  auto perturbed_gain = [&](double delta) {
    double worst_drop = 0.0, sum = 0.0;
    int n_trials = 20;
    for (int trial = 0; trial < n_trials; ++trial) {
      std::vector<Config> nodes = res.path.nodes;
      // perturb interior nodes of the first half, safely inside the region
      for (std::size_t i = 1; i < nodes.size() / 2; ++i)
        for (double& x : nodes[i]) x += delta * rng.normal();
      double dl = jm_length(nodes, sys, level.h, 1e-6) - res.path.length;
      worst_drop = std::min(worst_drop, dl);
      sum += dl;
    }
    CHECK(worst_drop > -1e-8);  // no first-order decrease
    return sum / n_trials;
  };
  double g_coarse = perturbed_gain(3e-3);
  double g_fine = perturbed_gain(1e-3);
  double ratio = g_coarse / g_fine;  // second-order growth: about (3)^2
  CHECK(ratio > 3.0);
  CHECK(ratio < 30.0);
}

TEST_CASE("two-body diameter evidence: shell extension adds diminishing length") {
  MassSystem sys = two_body();
  EnergyLevel level(1.0);
  // route from the boundary toward collision along the radial ray; the
  // closed-form integrand sqrt(2 mu (1/r - h)) is integrable at r -> 0
  auto radial_to_depth = [&](double c) {
    Config q = scale_to_level(Config{-0.5, 0.0, 0.5, 0.0}, sys, c * level.h);
    return detail::boundary_chain_length(q, sys, level, GeodesicOptions{});
  };
  double d2 = radial_to_depth(2.0);
  double d10 = radial_to_depth(10.0);
  double d100 = radial_to_depth(100.0);
  CHECK(d2 < d10);
  CHECK(d10 < d100);
  CHECK(d100 - d10 < d10 - d2);  // diminishing increments

  double r_at = [&](double c) { return 1.0 / (c * level.h); }(100.0);
  double oracle_len = radial_length_oracle(0.5, 1.0, level.h, r_at, 1.0);
  CHECK(d100 == doctest::Approx(oracle_len).epsilon(0.01));

  // sampled diameters are finite, positive, and failures are counted
  auto sample = diameter_sample(sys, level, 4, 99, 20.0);
  CHECK(sample.failed == 0);
  CHECK(sample.lengths.size() == 4);
  CHECK(sample.max_length > 0.0);
  CHECK(std::isfinite(sample.max_length));

  // a pair drawn in the boundary band is at distance about zero
  Config qa = scale_to_level(Config{-0.5, 0.0, 0.5, 0.0}, sys, 1.0000001 * level.h);
  Config qb = scale_to_level(Config{0.0, -0.7, 0.0, 0.7}, sys, 1.0000001 * level.h);
  CHECK(detail::pair_distance_jm(qa, qb, sys, level, GeodesicOptions{}) < 1e-3);
}

TEST_CASE("mountain pass over the scaling family peaks on the virial surface") {
  MassSystem sys = two_body();
  EnergyLevel level(2.0);
  Config q = {-0.5, 0.0, 0.5, 0.0};
  // fine polygon: the discrete length of the boundary loop itself must sit
  // well below the peak for the valley condition to register
  auto family = scaling_family(rotation_loop(q, sys, 8192), sys, level);

  auto prof = mountain_pass_profile(family, sys, level, 40, 1e-7);
  CHECK(prof.lambda_star == doctest::Approx(0.5).epsilon(5e-3));
  CHECK(prof.argmax_crosses_virial);

  // closed form: L(lambda) = sqrt(2h lambda (1 - lambda)) x mass length
  std::vector<Config> base = family(1.0);
  double mass_len = 0.0;
  for (std::size_t i = 0; i + 1 < base.size(); ++i)
    mass_len += mdist(base[i], base[i + 1], sys);
  double expected = std::sqrt(2.0 * level.h * 0.25) * mass_len;
  CHECK(prof.max_length == doctest::Approx(expected).epsilon(1e-3));

  // grid profile is unimodal: rises to the peak, then falls
  std::size_t arg = 0;
  for (std::size_t i = 0; i < prof.samples.size(); ++i)
    if (prof.samples[i].second > prof.samples[arg].second) arg = i;
  for (std::size_t i = 0; i + 1 <= arg; ++i)
    CHECK(prof.samples[i].second <= prof.samples[i + 1].second + 1e-12);
  for (std::size_t i = arg; i + 1 < prof.samples.size(); ++i)
    CHECK(prof.samples[i].second >= prof.samples[i + 1].second - 1e-12);

  // a family without zero-length valleys at the ends is rejected
  std::vector<Config> interior_loop =
      rotation_loop(scale_to_level(q, sys, 2.0 * level.h), sys, 32);
  auto flat = [&](double) { return interior_loop; };
  CHECK_THROWS_AS(mountain_pass_profile(flat, sys, level, 20, 1e-7),
                  std::invalid_argument);
}
