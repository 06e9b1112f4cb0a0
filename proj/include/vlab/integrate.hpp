#pragma once

// Adaptive Dormand-Prince 5(4) propagation of Newton's equations with dense
// output and an event engine (brake instants, virial crossings, turn-around
// points, collision proximity, Hill-band exits).
//
// The integrated state vector is [q, v, SK, SU] where SK' = K and SU' = U,
// so windowed time-averages of K and U come out at integrator accuracy.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vlab/core.hpp"

namespace vlab {

enum class EventKind : std::uint32_t {
  brake_instant = 1u << 0,
  virial_crossing = 1u << 1,
  turn_around = 1u << 2,
  collision_proximity = 1u << 3,
  hill_band_exit = 1u << 4,
};

inline std::uint32_t operator|(EventKind a, EventKind b) {
  return static_cast<std::uint32_t>(a) | static_cast<std::uint32_t>(b);
}
inline std::uint32_t operator|(std::uint32_t a, EventKind b) {
  return a | static_cast<std::uint32_t>(b);
}
inline bool has_kind(std::uint32_t mask, EventKind k) {
  return (mask & static_cast<std::uint32_t>(k)) != 0;
}

constexpr std::uint32_t kAllEvents = 0xffffffffu;

struct Event {
  EventKind kind;
  double t;
  State state;
  int direction;    // sign of d(event fn)/dt at the root
  double value;     // residual |f(t)| after polishing
  bool degenerate;  // tangential / grazing zero
};

enum class StopReason {
  reached_t_final,
  collision_proximity,
  step_underflow,
  max_steps,
  u_threshold,
};

struct PropagateOptions {
  double rtol = 1e-10;
  double atol = 1e-10;
  double r_min = 1e-8;                       // hard proximity stop
  double r_prox = 1e-4;                      // collision-proximity event radius
  std::uint32_t event_mask = 0;
  std::optional<double> level_h;             // enables virial / brake / band events
  double brake_threshold_rel = 1e-12;        // brake if K < rel * h (or * |E|)
  std::optional<double> u_stop;              // stop when U rises through this value
  std::size_t max_steps = 50'000'000;
  double initial_step = 0.0;                 // 0 = automatic
};

namespace detail {

// Dormand-Prince 5(4) tableau
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0;
constexpr double d3 = 87487479700.0 / 32700410799.0;
constexpr double d4 = -10690763975.0 / 1880347072.0;
constexpr double d5 = 701980252875.0 / 199316789632.0;
constexpr double d6 = -1453857185.0 / 822651844.0;
constexpr double d7 = 69997945.0 / 29380423.0;

}  // namespace detail

// One accepted integrator step with its dense-output polynomial.
struct DenseStep {
  double t0;
  double h;  // signed
  std::array<std::vector<double>, 5> rcont;

  void eval(double t, std::vector<double>& y) const {
    double th = (t - t0) / h;
    double th1 = 1.0 - th;
    std::size_t n = rcont[0].size();
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = rcont[0][i] +
             th * (rcont[1][i] +
                   th1 * (rcont[2][i] + th * (rcont[3][i] + th1 * rcont[4][i])));
  }
};

class Trajectory {
 public:
  MassSystem sys;
  std::vector<DenseStep> steps;
  std::vector<Event> events;
  StopReason stop = StopReason::reached_t_final;
  double rtol = 0.0, atol = 0.0;
  double energy0 = 0.0;
  double max_energy_drift = 0.0;
  double closest_approach = std::numeric_limits<double>::infinity();
  std::optional<double> level_h;

  double t_begin() const { return steps.front().t0; }
  double t_end() const { return steps.back().t0 + steps.back().h; }
  bool forward() const { return steps.front().h > 0.0; }

  bool contains(double t) const {
    double a = t_begin(), b = t_end();
    if (a > b) std::swap(a, b);
    double slack = 1e-12 * (1.0 + std::abs(a) + std::abs(b));
    return t >= a - slack && t <= b + slack;
  }

  // Raw integrated vector [q, v, SK, SU] at time t.
  void eval(double t, std::vector<double>& y) const {
    const DenseStep& s = step_at(t);
    s.eval(t, y);
  }

  State state_at(double t) const {
    std::vector<double> y;
    eval(t, y);
    std::size_t nd = sys.dof();
    State s;
    s.t = t;
    s.q.assign(y.begin(), y.begin() + nd);
    s.v.assign(y.begin() + nd, y.begin() + 2 * nd);
    return s;
  }

  // Cumulative integrals of K and U from t_begin to t.
  double integral_K_at(double t) const {
    std::vector<double> y;
    eval(t, y);
    return y[2 * sys.dof()];
  }
  double integral_U_at(double t) const {
    std::vector<double> y;
    eval(t, y);
    return y[2 * sys.dof() + 1];
  }

 private:
  const DenseStep& step_at(double t) const {
    if (!contains(t)) throw std::out_of_range("Trajectory: time outside span");
    // binary search over step start times (monotone in integration direction)
    bool fwd = forward();
    std::size_t lo = 0, hi = steps.size();
    while (hi - lo > 1) {
      std::size_t mid = (lo + hi) / 2;
      bool left = fwd ? (t < steps[mid].t0) : (t > steps[mid].t0);
      if (left)
        hi = mid;
      else
        lo = mid;
    }
    return steps[lo];
  }
};

namespace detail {

struct Rhs {
  const MassSystem* sys;
  mutable Config g;

  void operator()(const std::vector<double>& y, std::vector<double>& dy) const {
    std::size_t nd = sys->dof();
    dy.resize(2 * nd + 2);
    Config q(y.begin(), y.begin() + nd);
    double u = grad_U_and_U(q, *sys, g);
    double k = 0.0;
    const int d = sys->dim;
    for (std::size_t a = 0; a < sys->n(); ++a) {
      double s2 = 0.0;
      for (int kk = 0; kk < d; ++kk) {
        double vi = y[nd + a * d + kk];
        dy[a * d + kk] = vi;
        s2 += vi * vi;
      }
      k += sys->masses[a] * s2;
    }
    for (std::size_t i = 0; i < nd; ++i) dy[nd + i] = g[i];
    dy[2 * nd] = 0.5 * k;
    dy[2 * nd + 1] = u;
  }
};

inline double error_norm(const std::vector<double>& err, const std::vector<double>& y0,
                         const std::vector<double>& y1, double atol, double rtol) {
  double s = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    double e = err[i] / sc;
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(err.size()));
}

// Root of f on [ta, tb] with f(ta), f(tb) of opposite sign; Illinois method.
template <class F>
double bracket_root(F&& f, double ta, double tb, double fa, double fb) {
  for (int it = 0; it < 200; ++it) {
    double tm = (tb * fa - ta * fb) / (fa - fb);
    if (!std::isfinite(tm) || tm <= std::min(ta, tb) || tm >= std::max(ta, tb))
      tm = 0.5 * (ta + tb);
    double fm = f(tm);
    if (fm == 0.0 || std::abs(tb - ta) < 1e-15 * (1.0 + std::abs(tm))) return tm;
    if ((fm > 0) == (fa > 0)) {
      ta = tm;
      fa = fm;
      fb *= 0.5;  // Illinois damping
    } else {
      tb = tm;
      fb = fm;
      fa *= 0.5;
    }
  }
  return 0.5 * (ta + tb);
}

}  // namespace detail

// Propagate Newton's equations from s0 to t_final (either time direction).
inline Trajectory propagate(const State& s0, const MassSystem& sys, double t_final,
                            const PropagateOptions& opts = {}) {
  sys.validate();
  if (!all_finite(s0.q) || !all_finite(s0.v))
    throw std::invalid_argument("propagate: non-finite initial state");
  if (t_final == s0.t) throw std::invalid_argument("propagate: t_final == t0");
  if (min_pair_distance(s0.q, sys) <= opts.r_min)
    throw std::domain_error("propagate: initial state at collision proximity");

  const std::size_t nd = sys.dof();
  const std::size_t ny = 2 * nd + 2;
  const double dir = t_final > s0.t ? 1.0 : -1.0;

  detail::Rhs rhs{&sys, {}};

  Trajectory traj;
  traj.sys = sys;
  traj.rtol = opts.rtol;
  traj.atol = opts.atol;
  traj.level_h = opts.level_h;
  traj.energy0 = energy_E(s0, sys);

  std::vector<double> y(ny, 0.0), y1(ny), err(ny), k1(ny), k2(ny), k3(ny), k4(ny),
      k5(ny), k6(ny), k7(ny), ytmp(ny);
  std::copy(s0.q.begin(), s0.q.end(), y.begin());
  std::copy(s0.v.begin(), s0.v.end(), y.begin() + nd);

  double t = s0.t;
  rhs(y, k1);

  // initial step size
  double h;
  if (opts.initial_step > 0.0) {
    h = dir * opts.initial_step;
  } else {
    double ny0 = 0.0, nf0 = 0.0;
    for (std::size_t i = 0; i < ny; ++i) {
      ny0 += y[i] * y[i];
      nf0 += k1[i] * k1[i];
    }
    double scale = std::sqrt(ny0 / (nf0 + 1e-300));
    h = dir * std::min(1e-2 * (scale + 1e-6), std::abs(t_final - t));
  }

  auto min_r_of = [&](const std::vector<double>& yv) {
    Config q(yv.begin(), yv.begin() + nd);
    return min_pair_distance(q, sys);
  };

  traj.closest_approach = min_r_of(y);

  // --- event sampling helpers over a dense step ---
  const double h_level = opts.level_h.value_or(0.0);
  const bool want_virial = has_kind(opts.event_mask, EventKind::virial_crossing) &&
                           opts.level_h.has_value();
  const bool want_brake = has_kind(opts.event_mask, EventKind::brake_instant);
  const bool want_turn = has_kind(opts.event_mask, EventKind::turn_around);
  const bool want_prox = has_kind(opts.event_mask, EventKind::collision_proximity);
  const bool want_band = has_kind(opts.event_mask, EventKind::hill_band_exit) &&
                         opts.u_stop.has_value();
  const bool any_events = want_virial || want_brake || want_turn || want_prox ||
                          want_band || opts.u_stop.has_value();

  double brake_K_floor =
      opts.brake_threshold_rel * std::max(std::abs(traj.energy0), h_level);

  std::vector<double> yq;
  auto U_of = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    Config q(yq.begin(), yq.begin() + nd);
    return potential_U(q, sys);
  };
  auto K_of = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    double s = 0.0;
    for (std::size_t a = 0; a < sys.n(); ++a) {
      double s2 = 0.0;
      for (int kk = 0; kk < sys.dim; ++kk) {
        double vi = yq[nd + a * sys.dim + kk];
        s2 += vi * vi;
      }
      s += sys.masses[a] * s2;
    }
    return 0.5 * s;
  };
  auto Idot_of = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    double s = 0.0;
    for (std::size_t a = 0; a < sys.n(); ++a) {
      double s2 = 0.0;
      for (int kk = 0; kk < sys.dim; ++kk)
        s2 += yq[a * sys.dim + kk] * yq[nd + a * sys.dim + kk];
      s += sys.masses[a] * s2;
    }
    return 2.0 * s;
  };
  auto minr_of_t = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    Config q(yq.begin(), yq.begin() + nd);
    return min_pair_distance(q, sys);
  };

  auto state_of = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    State s;
    s.t = tt;
    s.q.assign(yq.begin(), yq.begin() + nd);
    s.v.assign(yq.begin() + nd, yq.begin() + 2 * nd);
    return s;
  };

  constexpr int kSamples = 9;  // dense samples per step for sign-change hunting

  // scan f over the step, append an Event for each transverse sign change
  auto scan_scalar = [&](const DenseStep& ds, auto&& f, EventKind kind, double scale,
                         bool record) -> std::optional<double> {
    double ta = ds.t0, tb = ds.t0 + ds.h;
    std::array<double, kSamples> ts, fs;
    for (int i = 0; i < kSamples; ++i) {
      ts[i] = ta + (tb - ta) * static_cast<double>(i) / (kSamples - 1);
      fs[i] = f(ts[i], ds);
    }
    std::optional<double> first_root;
    for (int i = 0; i + 1 < kSamples; ++i) {
      if (fs[i] == 0.0 && i == 0 && ds.t0 != s0.t) continue;  // counted in prev step
      bool change = (fs[i] <= 0.0 && fs[i + 1] > 0.0) || (fs[i] >= 0.0 && fs[i + 1] < 0.0);
      if (!change) continue;
      double tr = fs[i] == 0.0
                      ? ts[i]
                      : detail::bracket_root([&](double tt) { return f(tt, ds); },
                                             ts[i], ts[i + 1], fs[i], fs[i + 1]);
      double dt = 1e-7 * (std::abs(ds.h) + 1.0);
      double fm = f(std::max(ta, std::min(tb, tr - dt)), ds);
      double fp = f(std::max(ta, std::min(tb, tr + dt)), ds);
      double slope = (fp - fm) / (2 * dt);
      bool degenerate = std::abs(slope) * std::abs(ds.h) < 1e-7 * scale;
      if (record) {
        Event ev;
        ev.kind = kind;
        ev.t = tr;
        ev.state = state_of(tr, ds);
        ev.direction = slope > 0 ? 1 : (slope < 0 ? -1 : 0);
        ev.value = std::abs(f(tr, ds));
        ev.degenerate = degenerate;
        traj.events.push_back(ev);
      }
      if (!first_root) first_root = tr;
    }
    return first_root;
  };

  std::size_t step_count = 0;
  bool done = false;

  while (!done) {
    if (++step_count > opts.max_steps) {
      traj.stop = StopReason::max_steps;
      break;
    }
    if ((dir > 0 && t + h > t_final) || (dir < 0 && t + h < t_final)) h = t_final - t;

    // stages
    for (std::size_t i = 0; i < ny; ++i) ytmp[i] = y[i] + h * detail::a21 * k1[i];
    rhs(ytmp, k2);
    for (std::size_t i = 0; i < ny; ++i)
      ytmp[i] = y[i] + h * (detail::a31 * k1[i] + detail::a32 * k2[i]);
    rhs(ytmp, k3);
    for (std::size_t i = 0; i < ny; ++i)
      ytmp[i] = y[i] + h * (detail::a41 * k1[i] + detail::a42 * k2[i] + detail::a43 * k3[i]);
    rhs(ytmp, k4);
    for (std::size_t i = 0; i < ny; ++i)
      ytmp[i] = y[i] + h * (detail::a51 * k1[i] + detail::a52 * k2[i] +
                            detail::a53 * k3[i] + detail::a54 * k4[i]);
    rhs(ytmp, k5);
    for (std::size_t i = 0; i < ny; ++i)
      ytmp[i] = y[i] + h * (detail::a61 * k1[i] + detail::a62 * k2[i] +
                            detail::a63 * k3[i] + detail::a64 * k4[i] +
                            detail::a65 * k5[i]);
    rhs(ytmp, k6);
    for (std::size_t i = 0; i < ny; ++i)
      y1[i] = y[i] + h * (detail::b1 * k1[i] + detail::b3 * k3[i] + detail::b4 * k4[i] +
                          detail::b5 * k5[i] + detail::b6 * k6[i]);
    rhs(y1, k7);
    for (std::size_t i = 0; i < ny; ++i)
      err[i] = h * (detail::e1 * k1[i] + detail::e3 * k3[i] + detail::e4 * k4[i] +
                    detail::e5 * k5[i] + detail::e6 * k6[i] + detail::e7 * k7[i]);

    double en = detail::error_norm(err, y, y1, opts.atol, opts.rtol);
    if (en > 1.0) {
      // reject
      double fac = std::max(0.2, 0.9 * std::pow(en, -0.2));
      h *= fac;
      if (std::abs(h) < 1e-14 * (std::abs(t) + 1.0)) {
        traj.stop = StopReason::step_underflow;
        break;
      }
      continue;
    }

    // accept: build dense output
    DenseStep ds;
    ds.t0 = t;
    ds.h = h;
    ds.rcont[0] = y;
    ds.rcont[1].resize(ny);
    ds.rcont[2].resize(ny);
    ds.rcont[3].resize(ny);
    ds.rcont[4].resize(ny);
    for (std::size_t i = 0; i < ny; ++i) {
      double ydiff = y1[i] - y[i];
      double bspl = h * k1[i] - ydiff;
      ds.rcont[1][i] = ydiff;
      ds.rcont[2][i] = bspl;
      ds.rcont[3][i] = ydiff - h * k7[i] - bspl;
      ds.rcont[4][i] = h * (detail::d1 * k1[i] + detail::d3 * k3[i] + detail::d4 * k4[i] +
                            detail::d5 * k5[i] + detail::d6 * k6[i] + detail::d7 * k7[i]);
    }
    traj.steps.push_back(ds);

    double t_new = t + h;
    std::optional<double> t_cut;
    StopReason cut_reason = StopReason::reached_t_final;

    if (any_events) {
      const DenseStep& d = traj.steps.back();
      if (want_virial)
        scan_scalar(d, [&](double tt, const DenseStep& s) { return U_of(tt, s) - 2.0 * h_level; },
                    EventKind::virial_crossing, h_level, true);
      if (want_turn)
        scan_scalar(d, Idot_of, EventKind::turn_around, 1.0, true);
      if (want_brake) {
        // brake = local minimum of K below floor; minima of K are zeros of dK/dt
        // with positive slope. Sample K, bracket interior minima.
        double ta = d.t0, tb = d.t0 + d.h;
        double prev = K_of(ta, d);
        double tprev = ta;
        for (int i = 1; i < kSamples; ++i) {
          double ti = ta + (tb - ta) * static_cast<double>(i) / (kSamples - 1);
          double ki = K_of(ti, d);
          if (i >= 2) {
            // local-minimum bracket on the sample triple
            double tm2 = ta + (tb - ta) * static_cast<double>(i - 2) / (kSamples - 1);
            double km2 = K_of(tm2, d);
            if (prev <= km2 && prev <= ki && prev < brake_K_floor) {
              // golden-section polish on [tm2, ti]
              double lo = tm2, hi = ti;
              if (lo > hi) std::swap(lo, hi);
              const double gr = 0.6180339887498949;
              double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
              double f1 = K_of(x1, d), f2 = K_of(x2, d);
              for (int it = 0; it < 80 && hi - lo > 1e-14 * (1 + std::abs(lo)); ++it) {
                if (f1 < f2) {
                  hi = x2; x2 = x1; f2 = f1;
                  x1 = hi - gr * (hi - lo); f1 = K_of(x1, d);
                } else {
                  lo = x1; x1 = x2; f1 = f2;
                  x2 = lo + gr * (hi - lo); f2 = K_of(x2, d);
                }
              }
              double tr = 0.5 * (lo + hi);
              Event ev;
              ev.kind = EventKind::brake_instant;
              ev.t = tr;
              ev.state = state_of(tr, d);
              ev.direction = 1;
              ev.value = K_of(tr, d);
              ev.degenerate = false;
              traj.events.push_back(ev);
            }
          }
          prev = ki;
          tprev = ti;
        }
        (void)tprev;
        // brake exactly at the initial sample
        if (traj.steps.size() == 1 && K_of(ta, d) < brake_K_floor) {
          Event ev;
          ev.kind = EventKind::brake_instant;
          ev.t = ta;
          ev.state = state_of(ta, d);
          ev.direction = 0;
          ev.value = K_of(ta, d);
          ev.degenerate = false;
          traj.events.push_back(ev);
        }
      }
      if (want_prox)
        scan_scalar(d, [&](double tt, const DenseStep& s) { return minr_of_t(tt, s) - opts.r_prox; },
                    EventKind::collision_proximity, opts.r_prox, true);
      if (opts.u_stop) {
        auto root = scan_scalar(
            d, [&](double tt, const DenseStep& s) { return U_of(tt, s) - *opts.u_stop; },
            EventKind::hill_band_exit, *opts.u_stop, want_band);
        if (root) {
          t_cut = *root;
          cut_reason = StopReason::u_threshold;
        }
      }
    }

    // hard collision-proximity stop
    {
      double rmin_step = std::min(min_r_of(y), min_r_of(y1));
      for (int i = 1; i < 4; ++i)
        rmin_step = std::min(rmin_step, minr_of_t(t + h * i / 4.0, traj.steps.back()));
      traj.closest_approach = std::min(traj.closest_approach, rmin_step);
      if (rmin_step <= opts.r_min) {
        const DenseStep& d = traj.steps.back();
        double ta = d.t0, tb = d.t0 + d.h;
        double fa = minr_of_t(ta, d) - opts.r_min;
        double fb = minr_of_t(tb, d) - opts.r_min;
        double tr = tb;
        if (fa > 0 && fb <= 0)
          tr = detail::bracket_root(
              [&](double tt) { return minr_of_t(tt, d) - opts.r_min; }, ta, tb, fa, fb);
        if (!t_cut || std::abs(tr - t) < std::abs(*t_cut - t)) {
          t_cut = tr;
          cut_reason = StopReason::collision_proximity;
        }
      }
    }

    if (t_cut) {
      // truncate the last step at the cut time and stop
      DenseStep& d = traj.steps.back();
      d.eval(*t_cut, y1);
      d.h = *t_cut - d.t0;
      if (d.h == 0.0) traj.steps.pop_back();
      t_new = *t_cut;
      traj.stop = cut_reason;
      done = true;
    }

    // energy drift bookkeeping at step end
    {
      Config q1(y1.begin(), y1.begin() + nd);
      Config v1(y1.begin() + nd, y1.begin() + 2 * nd);
      double u = potential_U(q1, sys);
      if (!std::isinf(u)) {
        double e = kinetic_K(v1, sys) - u;
        traj.max_energy_drift = std::max(traj.max_energy_drift, std::abs(e - traj.energy0));
      }
    }

    t = t_new;
    y.swap(y1);
    k1.swap(k7);  // FSAL
    if (t_cut) {
      rhs(y, k1);  // k7 was for the untruncated step
    }

    if (!done && t == t_final) {
      traj.stop = StopReason::reached_t_final;
      done = true;
    }
    if (!done) {
      double fac = std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(en, 1e-10), -0.2)));
      h *= fac;
    }
  }

  if (traj.steps.empty()) throw std::runtime_error("propagate: no steps accepted");
  std::sort(traj.events.begin(), traj.events.end(),
            [dir](const Event& a, const Event& b) { return dir > 0 ? a.t < b.t : a.t > b.t; });
  return traj;
}

// Post-hoc event extraction from an existing trajectory: all zeros of the
// selected event functions over the stored dense steps, bracketed and
// polished.  Tangential zeros come back with the degeneracy flag set.
inline std::vector<Event> detect_events(const Trajectory& traj, std::uint32_t kinds,
                                        std::optional<double> level_h = {},
                                        double r_prox = 1e-4,
                                        double brake_threshold_rel = 1e-12) {
  const MassSystem& sys = traj.sys;
  const std::size_t nd = sys.dof();
  if (!level_h) level_h = traj.level_h;
  const double hl = level_h.value_or(0.0);
  std::vector<Event> out;

  std::vector<double> yq;
  auto state_of = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    State s;
    s.t = tt;
    s.q.assign(yq.begin(), yq.begin() + nd);
    s.v.assign(yq.begin() + nd, yq.begin() + 2 * nd);
    return s;
  };
  auto U_of = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    Config q(yq.begin(), yq.begin() + nd);
    return potential_U(q, sys);
  };
  auto K_of = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    Config v(yq.begin() + nd, yq.begin() + 2 * nd);
    return kinetic_K(v, sys);
  };
  auto Idot_of = [&](double tt, const DenseStep& ds) {
    State s = state_of(tt, ds);
    return moment_I_dot(s, sys);
  };
  auto minr_of = [&](double tt, const DenseStep& ds) {
    ds.eval(tt, yq);
    Config q(yq.begin(), yq.begin() + nd);
    return min_pair_distance(q, sys);
  };

  constexpr int kSamples = 9;
  double t_first = traj.t_begin();

  auto scan = [&](const DenseStep& ds, auto&& f, EventKind kind, double scale) {
    double ta = ds.t0, tb = ds.t0 + ds.h;
    std::array<double, kSamples> ts, fs;
    for (int i = 0; i < kSamples; ++i) {
      ts[i] = ta + (tb - ta) * static_cast<double>(i) / (kSamples - 1);
      fs[i] = f(ts[i], ds);
    }
    for (int i = 0; i + 1 < kSamples; ++i) {
      if (fs[i] == 0.0 && !(i == 0 && ds.t0 == t_first)) continue;
      bool change = (fs[i] <= 0.0 && fs[i + 1] > 0.0) || (fs[i] >= 0.0 && fs[i + 1] < 0.0);
      if (!change) continue;
      double tr = fs[i] == 0.0
                      ? ts[i]
                      : detail::bracket_root([&](double tt) { return f(tt, ds); },
                                             ts[i], ts[i + 1], fs[i], fs[i + 1]);
      double dt = 1e-7 * (std::abs(ds.h) + 1.0);
      double lo = std::min(ta, tb), hi = std::max(ta, tb);
      double fm = f(std::clamp(tr - dt, lo, hi), ds);
      double fp = f(std::clamp(tr + dt, lo, hi), ds);
      double slope = (fp - fm) / (2 * dt);
      Event ev;
      ev.kind = kind;
      ev.t = tr;
      ev.state = state_of(tr, ds);
      ev.direction = slope > 0 ? 1 : (slope < 0 ? -1 : 0);
      ev.value = std::abs(f(tr, ds));
      ev.degenerate = std::abs(slope) * std::abs(ds.h) < 1e-7 * scale;
      out.push_back(ev);
    }
  };

  double brake_floor = brake_threshold_rel * std::max(std::abs(traj.energy0), hl);

  for (const DenseStep& ds : traj.steps) {
    if (has_kind(kinds, EventKind::virial_crossing) && hl > 0.0)
      scan(ds, [&](double tt, const DenseStep& s) { return U_of(tt, s) - 2.0 * hl; },
           EventKind::virial_crossing, hl);
    if (has_kind(kinds, EventKind::turn_around))
      scan(ds, Idot_of, EventKind::turn_around, 1.0);
    if (has_kind(kinds, EventKind::collision_proximity))
      scan(ds, [&](double tt, const DenseStep& s) { return minr_of(tt, s) - r_prox; },
           EventKind::collision_proximity, r_prox);
    if (has_kind(kinds, EventKind::brake_instant)) {
      double ta = ds.t0, tb = ds.t0 + ds.h;
      std::array<double, kSamples> ts, ks;
      for (int i = 0; i < kSamples; ++i) {
        ts[i] = ta + (tb - ta) * static_cast<double>(i) / (kSamples - 1);
        ks[i] = K_of(ts[i], ds);
      }
      if (ds.t0 == t_first && ks[0] < brake_floor) {
        Event ev{EventKind::brake_instant, ts[0], state_of(ts[0], ds), 0, ks[0], false};
        out.push_back(ev);
      }
      for (int i = 1; i + 1 < kSamples; ++i) {
        if (!(ks[i] <= ks[i - 1] && ks[i] <= ks[i + 1] && ks[i] < brake_floor)) continue;
        double lo = std::min(ts[i - 1], ts[i + 1]), hi = std::max(ts[i - 1], ts[i + 1]);
        const double gr = 0.6180339887498949;
        double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
        double f1 = K_of(x1, ds), f2 = K_of(x2, ds);
        for (int it = 0; it < 80 && hi - lo > 1e-14 * (1 + std::abs(lo)); ++it) {
          if (f1 < f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - gr * (hi - lo); f1 = K_of(x1, ds);
          } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + gr * (hi - lo); f2 = K_of(x2, ds);
          }
        }
        double tr = 0.5 * (lo + hi);
        Event ev{EventKind::brake_instant, tr, state_of(tr, ds), 1, K_of(tr, ds), false};
        out.push_back(ev);
      }
    }
  }
  std::sort(out.begin(), out.end(), [&](const Event& a, const Event& b) {
    return traj.forward() ? a.t < b.t : a.t > b.t;
  });
  return out;
}

// Generic adaptive RK45 driver for small auxiliary systems (reduced
// subsystems, scans).  No dense output; optional per-step callback.
template <class F>
inline std::vector<double> ode45(F&& f, std::vector<double> y, double t0, double t1,
                                 double rtol = 1e-10, double atol = 1e-10,
                                 const std::function<void(double, const std::vector<double>&)>&
                                     on_step = nullptr) {
  using namespace detail;
  const std::size_t ny = y.size();
  const double dir = t1 > t0 ? 1.0 : -1.0;
  std::vector<double> k1(ny), k2(ny), k3(ny), k4(ny), k5(ny), k6(ny), k7(ny),
      ytmp(ny), y1(ny), err(ny);
  f(t0, y, k1);
  double ny0 = 0, nf0 = 0;
  for (std::size_t i = 0; i < ny; ++i) {
    ny0 += y[i] * y[i];
    nf0 += k1[i] * k1[i];
  }
  double h = dir * std::min(1e-2 * (std::sqrt(ny0 / (nf0 + 1e-300)) + 1e-6),
                            std::abs(t1 - t0));
  double t = t0;
  if (on_step) on_step(t, y);
  std::size_t guard = 0;
  while (t != t1) {
    if (++guard > 100'000'000) throw std::runtime_error("ode45: step budget exhausted");
    if ((dir > 0 && t + h > t1) || (dir < 0 && t + h < t1)) h = t1 - t;
    for (std::size_t i = 0; i < ny; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
    f(t + h / 5, ytmp, k2);
    for (std::size_t i = 0; i < ny; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    f(t + 3 * h / 10, ytmp, k3);
    for (std::size_t i = 0; i < ny; ++i)
      ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    f(t + 4 * h / 5, ytmp, k4);
    for (std::size_t i = 0; i < ny; ++i)
      ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    f(t + 8 * h / 9, ytmp, k5);
    for (std::size_t i = 0; i < ny; ++i)
      ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                            a65 * k5[i]);
    f(t + h, ytmp, k6);
    for (std::size_t i = 0; i < ny; ++i)
      y1[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    f(t + h, y1, k7);
    for (std::size_t i = 0; i < ny; ++i)
      err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                    e7 * k7[i]);
    double en = error_norm(err, y, y1, atol, rtol);
    if (en > 1.0) {
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
      if (std::abs(h) < 1e-14 * (std::abs(t) + 1.0))
        throw std::runtime_error("ode45: step underflow");
      continue;
    }
    t += h;
    y.swap(y1);
    k1.swap(k7);
    if (on_step) on_step(t, y);
    h *= std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(en, 1e-10), -0.2)));
  }
  return y;
}

struct CollarExit {
  bool exited = false;
  double epsilon = 0.0;   // U(q0) - h
  double t_exit = 0.0;
  State exit_state;
  double dUdt_exit = 0.0;  // transversality measure
};

// First exit of {U <= h + K_mult * eps} for a state starting with
// U(q0) in (h, h + eps]; eps is measured from the state itself.
inline CollarExit hill_collar_exit_time(const State& s0, const MassSystem& sys,
                                        const EnergyLevel& level, double k_mult = 2.0,
                                        double t_max = 100.0,
                                        const PropagateOptions& base_opts = {}) {
  CollarExit out;
  double u0 = potential_U(s0.q, sys);
  out.epsilon = u0 - level.h;
  if (!(out.epsilon > 0.0))
    throw std::invalid_argument("hill_collar_exit_time: state not inside the collar");
  PropagateOptions opts = base_opts;
  opts.level_h = level.h;
  opts.u_stop = level.h + k_mult * out.epsilon;
  Trajectory traj = propagate(s0, sys, s0.t + t_max, opts);
  if (traj.stop != StopReason::u_threshold) return out;  // counterexample candidate
  out.exited = true;
  out.t_exit = traj.t_end() - s0.t;
  out.exit_state = traj.state_at(traj.t_end());
  // dU/dt = <v, grad U> in the mass metric
  Config g = grad_U(out.exit_state.q, sys);
  out.dUdt_exit = mdot(out.exit_state.v, g, sys);
  return out;
}

}  // namespace vlab
