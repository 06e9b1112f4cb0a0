#pragma once

// Averaged and pointwise virial diagnostics: windowed averages, the virial
// residual 2<K> - <U>, transverse-crossing counts, orbit thickness, the
// k-ruler, virial-annulus membership, I(t)-growth classification and
// hyperbolic-elliptic escape energetics.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlab/core.hpp"
#include "vlab/integrate.hpp"

namespace vlab {

class ClassificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WindowAverages {
  double t_lo, t_hi;
  double avg_K;
  double avg_U;
  double residual;  // 2 avg_K - avg_U
};

// Time-averages of K and U over [t_lo, t_hi], read off the trajectory's
// integrated quadrature states.
inline WindowAverages windowed_averages(const Trajectory& traj, double t_lo, double t_hi) {
  if (!traj.contains(t_lo) || !traj.contains(t_hi) || t_lo == t_hi)
    throw std::invalid_argument("windowed_averages: window outside trajectory span");
  WindowAverages w;
  w.t_lo = t_lo;
  w.t_hi = t_hi;
  double dt = t_hi - t_lo;
  w.avg_K = (traj.integral_K_at(t_hi) - traj.integral_K_at(t_lo)) / dt;
  w.avg_U = (traj.integral_U_at(t_hi) - traj.integral_U_at(t_lo)) / dt;
  w.residual = 2.0 * w.avg_K - w.avg_U;
  return w;
}

inline WindowAverages windowed_averages(const Trajectory& traj) {
  return windowed_averages(traj, traj.t_begin(), traj.t_end());
}

// k-ruler coordinate: k = 2h/U - 1.  Maps collisions to -1, the virial
// surface to 0 and the Hill boundary to 1.
inline double k_ruler(double u_value, const EnergyLevel& level) {
  if (u_value < level.h * (1.0 - 1e-12))
    throw std::invalid_argument("k_ruler: U below the Hill boundary value");
  return 2.0 * level.h / u_value - 1.0;
}

enum class AnnulusRegion { inside, boundary_side, collision_side };

// Classify U(q) against the virial annulus 2h/(1+k) <= U <= 2h/(1-k).
inline AnnulusRegion annulus_membership(const Config& q, const MassSystem& sys,
                                        const EnergyLevel& level, double k) {
  if (!(k >= 0.0 && k < 1.0))
    throw std::invalid_argument("annulus_membership: k must lie in [0, 1)");
  double u = potential_U(q, sys);
  double lo = 2.0 * level.h / (1.0 + k);
  double hi = 2.0 * level.h / (1.0 - k);
  if (u < lo) return AnnulusRegion::boundary_side;
  if (u > hi) return AnnulusRegion::collision_side;
  return AnnulusRegion::inside;
}

namespace detail {

// dU/dt along the trajectory (equals dK/dt by energy conservation)
inline double u_dot(const State& s, const MassSystem& sys) {
  return mdot(s.v, grad_U(s.q, sys), sys);
}

// extrema of U over the window: polished zeros of dU/dt plus the endpoints
inline void u_range(const Trajectory& traj, double t_lo, double t_hi, double& u_min,
                    double& u_max) {
  const MassSystem& sys = traj.sys;
  u_min = std::numeric_limits<double>::infinity();
  u_max = 0.0;
  auto consider = [&](double t) {
    double u = potential_U(traj.state_at(t).q, sys);
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
  };
  consider(t_lo);
  consider(t_hi);
  double a = std::min(t_lo, t_hi), b = std::max(t_lo, t_hi);
  auto f = [&](double t) { return u_dot(traj.state_at(t), sys); };
  for (const DenseStep& ds : traj.steps) {
    double s0 = ds.t0, s1 = ds.t0 + ds.h;
    double lo = std::max(a, std::min(s0, s1));
    double hi = std::min(b, std::max(s0, s1));
    if (!(lo < hi)) continue;
    constexpr int kSamples = 9;
    double tp = lo, fp = f(tp);
    for (int i = 1; i < kSamples; ++i) {
      double ti = lo + (hi - lo) * i / (kSamples - 1);
      double fi = f(ti);
      consider(ti);
      if ((fp <= 0 && fi > 0) || (fp >= 0 && fi < 0))
        consider(vlab::detail::bracket_root(f, tp, ti, fp, fi));
      tp = ti;
      fp = fi;
    }
  }
}

}  // namespace detail

struct Thickness {
  double k;          // clipped to [0, 1]
  bool exceeds_one;  // orbit left the unit annulus (exterior excursion)
};

// Windowed thickness: smallest k with 2h/(1+k) <= U <= 2h/(1-k) over the
// window, i.e. max |2h/U - 1| over the orbit segment.  A lower bound for the
// full orbit's thickness.
inline Thickness thickness(const Trajectory& traj, const EnergyLevel& level,
                           double t_lo, double t_hi) {
  double u_min, u_max;
  detail::u_range(traj, t_lo, t_hi, u_min, u_max);
  if (u_min < level.h * (1.0 - 1e-6))
    throw std::domain_error("thickness: U dropped below h (inconsistent energy level)");
  u_min = std::max(u_min, level.h);  // boundary-touching orbits dip below by roundoff
  double k_hi = std::abs(2.0 * level.h / u_min - 1.0);
  double k_lo = std::abs(2.0 * level.h / u_max - 1.0);
  double k = std::max(k_hi, k_lo);
  Thickness out;
  out.exceeds_one = k > 1.0;
  out.k = std::min(k, 1.0);
  return out;
}

inline Thickness thickness(const Trajectory& traj, const EnergyLevel& level) {
  return thickness(traj, level, traj.t_begin(), traj.t_end());
}

enum class GrowthClass { bounded, subquadratic, quadratic };

struct GrowthRecord {
  GrowthClass cls;
  double exponent;     // least-squares slope of log I vs log t on the tail
  double coefficient;  // fitted C for I ~ C t^2 (quadratic class only)
  bool low_confidence;
};

// Pollard growth classifier: tail fit of log I against log t.
inline GrowthRecord pollard_classify(const Trajectory& traj, double t_min = 50.0,
                                     double tail_fraction = 0.5, double margin = 0.25) {
  const MassSystem& sys = traj.sys;
  double t0 = traj.t_begin(), t1 = traj.t_end();
  double span = std::abs(t1 - t0);
  GrowthRecord rec;
  rec.low_confidence = span < t_min;

  // sample I on the tail (times measured from the window start)
  double tail_start = t0 + (t1 - t0) * (1.0 - tail_fraction);
  const int n = 200;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double c_sum = 0.0;
  double i_min = std::numeric_limits<double>::infinity(), i_max = 0.0;
  for (int i = 0; i < n; ++i) {
    double t = tail_start + (t1 - tail_start) * (i + 1) / static_cast<double>(n);
    double tau = std::abs(t - t0);
    if (tau <= 0.0) continue;
    double I = moment_I(traj.state_at(t).q, sys);
    i_min = std::min(i_min, I);
    i_max = std::max(i_max, I);
    double x = std::log(tau), y = std::log(std::max(I, 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    c_sum += I / (tau * tau);
  }
  rec.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  rec.coefficient = c_sum / n;
  (void)i_min;
  (void)i_max;
  if (rec.exponent < 0.25)
    rec.cls = GrowthClass::bounded;
  else if (rec.exponent < 2.0 - margin)
    rec.cls = GrowthClass::subquadratic;
  else
    rec.cls = GrowthClass::quadratic;
  if (rec.cls != GrowthClass::quadratic) rec.coefficient = 0.0;
  return rec;
}

struct JacobiSplit {
  std::size_t pair_a, pair_b;  // bound pair
  std::size_t escaper;
  double mu;  // reduced mass of the (pair CoM, escaper) split
};

struct EscapeRecord {
  JacobiSplit split;
  double v_inf;    // tail-fitted speed of the Jacobi vector
  double k_hyper;  // mu v_inf^2 / 2
  double avg_K, avg_U;
  double residual;           // 2<K> - <U>
  double relative_mismatch;  // |residual - 2 k_hyper| / (2 k_hyper)
};

namespace detail {

inline double jacobi_separation(const State& s, const MassSystem& sys,
                                const JacobiSplit& sp) {
  const int d = sys.dim;
  double ma = sys.masses[sp.pair_a], mb = sys.masses[sp.pair_b];
  double s2 = 0.0;
  for (int k = 0; k < d; ++k) {
    double com = (ma * s.q[sp.pair_a * d + k] + mb * s.q[sp.pair_b * d + k]) / (ma + mb);
    double dx = s.q[sp.escaper * d + k] - com;
    s2 += dx * dx;
  }
  return std::sqrt(s2);
}

}  // namespace detail

// Identify the bound pair / escaper split of a 3-body state.
inline JacobiSplit jacobi_split(const State& s, const MassSystem& sys) {
  if (sys.n() != 3) throw std::invalid_argument("jacobi_split: three bodies required");
  double best = std::numeric_limits<double>::infinity();
  JacobiSplit sp{0, 1, 2, 0.0};
  const std::size_t pairs[3][3] = {{0, 1, 2}, {0, 2, 1}, {1, 2, 0}};
  for (auto& p : pairs) {
    double r = pair_distance(s.q, p[0], p[1], sys.dim);
    if (r < best) {
      best = r;
      sp.pair_a = p[0];
      sp.pair_b = p[1];
      sp.escaper = p[2];
    }
  }
  double mp = sys.masses[sp.pair_a] + sys.masses[sp.pair_b];
  sp.mu = sys.masses[sp.escaper] * mp / (sys.masses[sp.escaper] + mp);
  return sp;
}

// Modified hyperbolic virial: one-sided averages over the escaping
// half-trajectory against K_hyper = mu |v_inf|^2 / 2.
inline EscapeRecord hyperbolic_virial(const Trajectory& traj,
                                      double escape_ratio = 50.0) {
  const MassSystem& sys = traj.sys;
  double t0 = traj.t_begin(), t1 = traj.t_end();
  State end = traj.state_at(t1);
  JacobiSplit sp = jacobi_split(end, sys);

  // bound-pair semi-major axis from the pair's two-body energy
  const int d = sys.dim;
  double ma = sys.masses[sp.pair_a], mb = sys.masses[sp.pair_b];
  double mu_ab = ma * mb / (ma + mb);
  double r_ab = pair_distance(end.q, sp.pair_a, sp.pair_b, d);
  double v2 = 0.0;
  for (int k = 0; k < d; ++k) {
    double dv = end.v[sp.pair_a * d + k] - end.v[sp.pair_b * d + k];
    v2 += dv * dv;
  }
  double e_pair = 0.5 * mu_ab * v2 - sys.G * ma * mb / r_ab;
  if (!(e_pair < 0.0))
    throw ClassificationError("hyperbolic_virial: no bound pair at the trajectory end");
  double a_pair = -sys.G * ma * mb / (2.0 * e_pair);

  double R_end = detail::jacobi_separation(end, sys, sp);
  if (R_end < escape_ratio * a_pair)
    throw ClassificationError("hyperbolic_virial: Jacobi separation below escape threshold");

  // v_inf: least-squares slope of |xi|(t) over the last 30%, must be positive
  // and sustained
  const int n = 64;
  double tail = t0 + (t1 - t0) * 0.7;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double prev_r = -1.0;
  int decreases = 0;
  for (int i = 0; i < n; ++i) {
    double t = tail + (t1 - tail) * i / static_cast<double>(n - 1);
    double r = detail::jacobi_separation(traj.state_at(t), sys, sp);
    if (prev_r >= 0.0 && r < prev_r) ++decreases;
    prev_r = r;
    sx += t;
    sy += r;
    sxx += t * t;
    sxy += t * r;
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (!(slope > 0.0) || decreases > n / 8)
    throw ClassificationError("hyperbolic_virial: Jacobi separation not growing");

  EscapeRecord rec;
  rec.split = sp;
  rec.v_inf = std::abs(slope);
  rec.k_hyper = 0.5 * sp.mu * rec.v_inf * rec.v_inf;
  auto w = windowed_averages(traj);
  rec.avg_K = w.avg_K;
  rec.avg_U = w.avg_U;
  rec.residual = w.residual;
  rec.relative_mismatch = std::abs(rec.residual - 2.0 * rec.k_hyper) / (2.0 * rec.k_hyper);
  return rec;
}

// Two-sided variant: forward and backward halves from the same event,
// residual over the union window against K_hyper^+ + K_hyper^-.
struct TwoSidedEscape {
  EscapeRecord forward, backward;
  double residual;  // 2<K> - <U> over the union of both windows
  double relative_mismatch;
};

inline TwoSidedEscape hyperbolic_virial_two_sided(const Trajectory& fwd,
                                                  const Trajectory& bwd,
                                                  double escape_ratio = 50.0) {
  TwoSidedEscape out;
  out.forward = hyperbolic_virial(fwd, escape_ratio);
  out.backward = hyperbolic_virial(bwd, escape_ratio);
  double span_f = std::abs(fwd.t_end() - fwd.t_begin());
  double span_b = std::abs(bwd.t_end() - bwd.t_begin());
  auto wf = windowed_averages(fwd);
  auto wb = windowed_averages(bwd);
  double total = span_f + span_b;
  double avg_K = (wf.avg_K * span_f + wb.avg_K * span_b) / total;
  double avg_U = (wf.avg_U * span_f + wb.avg_U * span_b) / total;
  out.residual = 2.0 * avg_K - avg_U;
  double expect = out.forward.k_hyper + out.backward.k_hyper;
  out.relative_mismatch = std::abs(out.residual - expect) / expect;
  return out;
}

// Transverse virial-crossing count over the trajectory.
inline int count_virial_crossings(const Trajectory& traj, const EnergyLevel& level) {
  auto evs = detect_events(traj, static_cast<std::uint32_t>(EventKind::virial_crossing),
                           level.h);
  int n = 0;
  for (const Event& ev : evs)
    if (!ev.degenerate) ++n;
  return n;
}

struct VirialReport {
  WindowAverages window;
  int crossings = 0;
  Thickness thick{0.0, false};
  GrowthRecord growth{GrowthClass::bounded, 0.0, 0.0, true};
  std::optional<EscapeRecord> escape;
};

inline VirialReport virial_report(const Trajectory& traj, const EnergyLevel& level) {
  VirialReport rep;
  rep.window = windowed_averages(traj);
  rep.crossings = count_virial_crossings(traj, level);
  rep.thick = thickness(traj, level);
  rep.growth = pollard_classify(traj);
  try {
    rep.escape = hyperbolic_virial(traj);
  } catch (const ClassificationError&) {
    rep.escape.reset();
  } catch (const std::invalid_argument&) {
    rep.escape.reset();  // not a three-body trajectory
  }
  return rep;
}

}  // namespace vlab
