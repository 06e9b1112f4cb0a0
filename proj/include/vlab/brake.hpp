#pragma once

// Brake orbits: zero-velocity starts in the Hill region, reflection-symmetry
// verification, and shooting for periodic brake-to-brake orbits over the
// Hill-boundary manifold.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vlab/core.hpp"
#include "vlab/integrate.hpp"
#include "vlab/opt.hpp"
#include "vlab/virial.hpp"

namespace vlab {

struct BrakeOrbit {
  Config q_star;        // brake configuration, U(q_star) = h
  double h;             // energy level: E = -h
  Trajectory forward;   // [0, +T]
  Trajectory backward;  // [0, -T]
  double closest_approach;
};

// Integrate a zero-velocity start in both time directions.
inline BrakeOrbit brake_start(const Config& q_star, const MassSystem& sys, double T,
                              PropagateOptions opts = {}) {
  double u = potential_U(q_star, sys);
  if (std::isinf(u)) throw std::domain_error("brake_start: collision configuration");
  BrakeOrbit orbit{q_star, u, {}, {}, 0.0};
  opts.level_h = u;
  if (opts.event_mask == 0) opts.event_mask = kAllEvents;
  State s0;
  s0.t = 0.0;
  s0.q = q_star;
  s0.v = Config(q_star.size(), 0.0);
  orbit.forward = propagate(s0, sys, T, opts);
  // decorrelate the backward step sequence from the forward one: with v = 0
  // the two legs otherwise mirror each other bitwise, which would make the
  // symmetry check vacuous as an accuracy probe
  PropagateOptions opts_b = opts;
  if (opts_b.initial_step == 0.0 && !orbit.forward.steps.empty())
    opts_b.initial_step = 0.77 * std::abs(orbit.forward.steps.front().h);
  orbit.backward = propagate(s0, sys, -T, opts_b);
  orbit.closest_approach =
      std::min(orbit.forward.closest_approach, orbit.backward.closest_approach);
  return orbit;
}

// Max mass-metric asymmetry between q(+s) and q(-s) over [0, T].
inline double verify_brake_symmetry(const BrakeOrbit& orbit, double T,
                                    int n_samples = 200) {
  double span_f = std::abs(orbit.forward.t_end() - orbit.forward.t_begin());
  double span_b = std::abs(orbit.backward.t_end() - orbit.backward.t_begin());
  if (T > std::min(span_f, span_b))
    throw std::invalid_argument("verify_brake_symmetry: span too short");
  double worst = 0.0;
  const MassSystem& sys = orbit.forward.sys;
  for (int i = 1; i <= n_samples; ++i) {
    double s = T * i / n_samples;
    Config qf = orbit.forward.state_at(s).q;
    Config qb = orbit.backward.state_at(-s).q;
    worst = std::max(worst, mdist(qf, qb, sys));
  }
  return worst;
}

struct ShootEval {
  bool second_approach = false;  // found a brake-band approach after launch
  double t_approach = 0.0;
  double residual = std::numeric_limits<double>::infinity();  // speed at approach
  StopReason stop = StopReason::reached_t_final;
};

// Shooting residual for one boundary point: integrate the brake orbit
// forward, collect the local minima of K after the orbit has left the
// boundary band, and take the deepest one as the next brake-band
// approach.  The residual is the remaining mass-metric speed there; an
// orthogonal boundary hit has residual 0 and doubles to a periodic orbit
// by reflection symmetry.
inline ShootEval brake_shoot_eval(const Config& q_boundary, const MassSystem& sys,
                                  const EnergyLevel& level, double t_max,
                                  PropagateOptions opts = {}) {
  ShootEval out;
  State s0;
  s0.q = q_boundary;
  s0.v = Config(q_boundary.size(), 0.0);
  opts.level_h = level.h;
  Trajectory traj;
  try {
    traj = propagate(s0, sys, t_max, opts);
  } catch (const std::domain_error&) {
    return out;  // immediate-collision start: no residual
  }
  out.stop = traj.stop;

  auto K_at = [&](double tt) { return kinetic_K(traj.state_at(tt).v, sys); };
  const double armed_level = 0.2 * level.h;
  bool armed = false;
  double t0 = traj.t_begin(), t1 = traj.t_end();
  const int n = 2000;
  double kp = 0.0, kpp = 0.0;
  double best_k = std::numeric_limits<double>::infinity(), best_t = 0.0;
  for (int i = 1; i <= n; ++i) {
    double t = t0 + (t1 - t0) * i / n;
    double k = K_at(t);
    if (k > armed_level) armed = true;
    if (i >= 2 && armed && kp <= kpp && kp <= k) {
      // golden-section polish around the sampled minimum
      double lo = t0 + (t1 - t0) * (i - 2) / n, hi = t;
      const double gr = 0.6180339887498949;
      double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
      double f1 = K_at(x1), f2 = K_at(x2);
      for (int it = 0; it < 60; ++it) {
        if (f1 < f2) {
          hi = x2; x2 = x1; f2 = f1;
          x1 = hi - gr * (hi - lo); f1 = K_at(x1);
        } else {
          lo = x1; x1 = x2; f1 = f2;
          x2 = lo + gr * (hi - lo); f2 = K_at(x2);
        }
      }
      double tm = 0.5 * (lo + hi), km = K_at(tm);
      if (km < best_k) {
        best_k = km;
        best_t = tm;
      }
    }
    kpp = kp;
    kp = k;
  }
  if (std::isfinite(best_k)) {
    out.second_approach = true;
    out.t_approach = best_t;
    out.residual = std::sqrt(2.0 * best_k);
  }
  return out;
}

struct PeriodicBrakeOrbit {
  Config q_star;       // converged boundary brake point
  double period;       // 2 * t_approach (reflection doubling)
  double residual;
  bool converged;
  double closure;      // phase-space distance after one period
  double avg_U;        // one-period <U>
  int virial_crossings;
  Trajectory orbit;    // one full period
};

struct BrakeShootOptions {
  double t_max = 30.0;
  double residual_tol = 1e-6;
  double sim_step = 0.02;       // initial simplex size on the boundary chart
  int max_evals = 4000;
  PropagateOptions propagate;
};

// Local derivative-free search over the Hill-boundary manifold for a
// periodic brake orbit.  Seeds are projected onto {U = h} by the scaling
// map, which also makes the radial direction of the chart neutral.
inline PeriodicBrakeOrbit periodic_brake_shoot(const Config& seed, const MassSystem& sys,
                                               const EnergyLevel& level,
                                               BrakeShootOptions opts = {}) {
  Config seed_b = scale_to_level(seed, sys, level.h);
  com_normalize(seed_b, sys);
  double scale = std::sqrt(moment_I(seed_b, sys));

  auto boundary_point = [&](const std::vector<double>& u) {
    Config q = seed_b;
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += scale * u[i];
    com_normalize(q, sys);
    return scale_to_level(q, sys, level.h);
  };

  auto objective = [&](const std::vector<double>& u) {
    Config q = boundary_point(u);
    auto ev = brake_shoot_eval(q, sys, level, opts.t_max, opts.propagate);
    if (!ev.second_approach) return 1e6;
    return ev.residual;
  };

  std::vector<double> u0(seed_b.size(), 0.0);
  auto res = nelder_mead(objective, u0, opts.sim_step, 1e-14, 1e-12, opts.max_evals);
  // restart with a shrunken simplex to squeeze out the last digits
  for (int round = 0; round < 2 && res.f > 0.01 * opts.residual_tol; ++round)
    res = nelder_mead(objective, res.x, opts.sim_step * std::pow(1e-2, round + 1),
                      1e-14, 1e-12, opts.max_evals);

  PeriodicBrakeOrbit out;
  out.q_star = boundary_point(res.x);
  auto ev = brake_shoot_eval(out.q_star, sys, level, opts.t_max, opts.propagate);
  out.residual = ev.second_approach ? ev.residual : std::numeric_limits<double>::infinity();
  out.converged = ev.second_approach && ev.residual < opts.residual_tol;
  out.period = 2.0 * ev.t_approach;
  out.closure = std::numeric_limits<double>::infinity();
  out.avg_U = 0.0;
  out.virial_crossings = 0;
  if (ev.second_approach) {
    State s0;
    s0.q = out.q_star;
    s0.v = Config(out.q_star.size(), 0.0);
    PropagateOptions popts = opts.propagate;
    popts.level_h = level.h;
    out.orbit = propagate(s0, sys, out.period, popts);
    State end = out.orbit.state_at(out.orbit.t_end());
    out.closure = mdist(end.q, s0.q, sys) + mnorm(end.v, sys);
    out.avg_U = windowed_averages(out.orbit).avg_U;
    out.virial_crossings = count_virial_crossings(out.orbit, level);
  }
  return out;
}

// Velocity/gradient alignment at the boundary approach: brake orbits hit
// the Hill boundary orthogonally, i.e. along the gradient of U.
inline double boundary_hit_alignment(const State& s, const MassSystem& sys) {
  Config g = grad_U(s.q, sys);
  double num = std::abs(mdot(s.v, g, sys));
  double den = mnorm(s.v, sys) * mnorm(g, sys);
  if (den == 0.0) return 1.0;
  return num / den;  // |cos angle|, 1 = aligned
}

}  // namespace vlab
