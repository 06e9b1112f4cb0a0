#pragma once

// Exact solution families and escape criteria: central configurations
// (Lagrange equilateral, Euler collinear), the homographic Keplerian family
// with thickness k(J), the Birkhoff-Moeckel escape condition and the
// reduced spatial isosceles (unrestricted Sitnikov) subsystem.

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vlab/core.hpp"
#include "vlab/integrate.hpp"

namespace vlab {

struct CentralConfiguration {
  Config q;        // CoM-normalized
  double lambda;   // grad_U(q) = -lambda q
  double residual; // ||grad_U(q) + lambda q|| in the mass metric
};

namespace detail {

inline CentralConfiguration make_cc(Config q, const MassSystem& sys) {
  com_normalize(q, sys);
  CentralConfiguration cc;
  cc.q = q;
  // lambda from the Euler identity: <q, grad U> = -alpha U and
  // <q, -lambda q> = -lambda I
  double I = moment_I(q, sys);
  cc.lambda = sys.alpha * potential_U(q, sys) / I;
  Config g = grad_U(q, sys);
  Config r(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) r[i] = g[i] + cc.lambda * q[i];
  cc.residual = mnorm(r, sys);
  return cc;
}

// Rigid-rotation state from a planar central configuration scaled to U = 2h.
inline State spin_up(const CentralConfiguration& cc, const MassSystem& sys,
                     const EnergyLevel& level) {
  Config q = scale_to_level(cc.q, sys, 2.0 * level.h);
  double omega = std::sqrt(sys.alpha * potential_U(q, sys) / moment_I(q, sys));
  State s;
  s.t = 0.0;
  s.q = q;
  s.v.resize(q.size());
  for (std::size_t a = 0; a < sys.n(); ++a) {
    s.v[a * 2] = -omega * q[a * 2 + 1];
    s.v[a * 2 + 1] = omega * q[a * 2];
  }
  return s;
}

}  // namespace detail

// The Lagrange equilateral central configuration (any masses, N = 3).
inline CentralConfiguration lagrange_cc(const MassSystem& sys) {
  if (sys.n() != 3 || sys.dim != 2)
    throw std::invalid_argument("lagrange_cc: planar three-body only");
  double s3 = std::sqrt(3.0) / 2.0;
  Config q = {0.0, 0.0, 1.0, 0.0, 0.5, s3};
  return detail::make_cc(q, sys);
}

// Relative-equilibrium state on the equilateral configuration with U = 2h,
// energy exactly -h.
inline State lagrange_equilateral(const MassSystem& sys, const EnergyLevel& level) {
  return detail::spin_up(lagrange_cc(sys), sys, level);
}

// Euler's collinear central configuration for a given ordering
// (left, middle, right) of body indices.  The distance ratio
// x = r(mid,right)/r(left,mid) solves the classical quintic; the root is
// isolated by bisection and polished by Newton.
inline CentralConfiguration euler_cc(const MassSystem& sys,
                                     const std::array<int, 3>& ordering) {
  if (sys.n() != 3 || sys.dim != 2)
    throw std::invalid_argument("euler_cc: planar three-body only");
  double m1 = sys.masses[ordering[0]];
  double m2 = sys.masses[ordering[1]];
  double m3 = sys.masses[ordering[2]];
  auto quintic = [&](double x) {
    return ((((m1 + m2) * x + (3 * m1 + 2 * m2)) * x + (3 * m1 + m2)) * x * x * x) -
           ((m2 + 3 * m3) * x * x + (2 * m2 + 3 * m3) * x + (m2 + m3));
  };
  double lo = 1e-9, hi = 1.0;
  while (quintic(hi) < 0.0) {
    hi *= 2.0;
    if (hi > 1e12) throw std::runtime_error("euler_cc: no quintic root in bracket");
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (quintic(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double x = 0.5 * (lo + hi);

  Config q(6, 0.0);
  q[ordering[0] * 2] = 0.0;
  q[ordering[1] * 2] = 1.0;
  q[ordering[2] * 2] = 1.0 + x;
  return detail::make_cc(q, sys);
}

inline State euler_collinear(const MassSystem& sys, const std::array<int, 3>& ordering,
                             const EnergyLevel& level) {
  return detail::spin_up(euler_cc(sys, ordering), sys, level);
}

struct HomographicOrbit {
  CentralConfiguration cc;
  double h;
  double J;       // signed angular momentum of the orbit
  double e;       // eccentricity of the equivalent Kepler scale-factor problem
  double k;       // thickness k(J) = e
  double period;
  double u_min, u_max;  // 2h/(1+k), 2h/(1-k); u_max = +inf at k = 1
  State initial;  // at pericenter of the scale factor
};

inline double homographic_J_max(const CentralConfiguration& cc, const MassSystem& sys,
                                const EnergyLevel& level) {
  double u0 = potential_U(cc.q, sys);
  double i0 = moment_I(cc.q, sys);
  return u0 * std::sqrt(i0 / (2.0 * level.h));
}

// Keplerian homographic family member with angular momentum J at energy -h.
// The configuration evolves as z(t) * cc.q with z solving a planar Kepler
// problem; k(J) is the eccentricity of that problem.
inline HomographicOrbit homographic_orbit(const CentralConfiguration& cc,
                                          const MassSystem& sys, double J,
                                          const EnergyLevel& level) {
  if (sys.dim != 2)
    throw std::invalid_argument("homographic_orbit: planar configurations only");
  double u0 = potential_U(cc.q, sys);
  double i0 = moment_I(cc.q, sys);
  double j_max = homographic_J_max(cc, sys, level);
  if (std::abs(J) > j_max * (1.0 + 1e-12))
    throw std::invalid_argument("homographic_orbit: |J| exceeds the elliptic family maximum");

  HomographicOrbit orb;
  orb.cc = cc;
  orb.h = level.h;
  orb.J = J;
  double e2 = 1.0 - 2.0 * level.h * J * J / (i0 * u0 * u0);
  orb.e = std::sqrt(std::max(0.0, e2));
  orb.k = orb.e;
  orb.u_min = 2.0 * level.h / (1.0 + orb.k);
  orb.u_max = orb.k < 1.0 ? 2.0 * level.h / (1.0 - orb.k)
                          : std::numeric_limits<double>::infinity();

  // equivalent Kepler problem for the complex scale z: zdd = -gm z/|z|^3
  double gm = u0 / i0;
  double a_z = u0 / (2.0 * level.h);
  orb.period = 2.0 * M_PI * std::sqrt(a_z * a_z * a_z / gm);

  double sp = a_z * (1.0 - orb.e);  // pericenter scale
  double vp = orb.e < 1.0 ? std::sqrt(gm * (1.0 + orb.e) / sp) : 0.0;
  if (orb.e >= 1.0) {
    // J = 0: homothetic brake-collapse member; start at the brake scale
    sp = 2.0 * a_z;  // apocenter of the degenerate ellipse, U = h there
    vp = 0.0;
  }
  State s;
  s.t = 0.0;
  s.q.resize(cc.q.size());
  s.v.resize(cc.q.size());
  double sgn = J >= 0.0 ? 1.0 : -1.0;
  for (std::size_t a = 0; a < sys.n(); ++a) {
    double qx = cc.q[a * 2], qy = cc.q[a * 2 + 1];
    s.q[a * 2] = sp * qx;
    s.q[a * 2 + 1] = sp * qy;
    // zdot = i vp (rotate by 90 degrees)
    s.v[a * 2] = -sgn * vp * qy;
    s.v[a * 2 + 1] = sgn * vp * qx;
  }
  orb.initial = s;
  return orb;
}

struct BirkhoffMoeckelCheck {
  double I0;
  double J_sq;
  double h;          // -E of the state (the energy normalization used)
  double threshold;  // J^2 / (2h)
  bool hypothesis;   // I0 < threshold
  double I_ddot;     // Lagrange-Jacobi value 4K - 2U
  bool conclusion;   // I_ddot > 0
};

// Escape condition at a turn-around point: if I0 < J^2/(2h) then Iddot > 0.
// Takes the state's own energy as the normalization and reports it.
inline BirkhoffMoeckelCheck birkhoff_moeckel_check(const State& s, const MassSystem& sys,
                                                   double idot_tol = 1e-9) {
  double idot = moment_I_dot(s, sys);
  double scale = std::sqrt(moment_I(s.q, sys) * std::max(kinetic_K(s.v, sys), 1e-300));
  if (std::abs(idot) > idot_tol * std::max(1.0, scale))
    throw std::invalid_argument("birkhoff_moeckel_check: not a turn-around point");
  BirkhoffMoeckelCheck out;
  out.I0 = moment_I(s.q, sys);
  auto j = angular_momentum_J(s, sys);
  out.J_sq = 0.0;
  for (double ji : j) out.J_sq += ji * ji;
  double E = energy_E(s, sys);
  if (!(E < 0.0))
    throw std::invalid_argument("birkhoff_moeckel_check: state must have negative energy");
  out.h = -E;
  out.threshold = out.J_sq / (2.0 * out.h);
  out.hypothesis = out.I0 < out.threshold;
  out.I_ddot = lagrange_jacobi_rhs(s, sys);
  out.conclusion = out.I_ddot > 0.0;
  return out;
}

// ---- spatial isosceles (unrestricted Sitnikov) subsystem ----
//
// m1 = m2 = m, bodies 1 and 2 opposite each other about the z-axis at radius
// rho, body 3 on the axis.  Reduced coordinates: rho, eta = z3 - z_pair, the
// pair angle phi, with the conserved z-angular momentum ell as parameter.

struct IsoscelesState {
  double t = 0.0;
  double rho, eta;
  double rho_dot, eta_dot;
  double phi = 0.0;
  double ell;  // J_z = 2 m rho^2 phi_dot
};

namespace detail {

inline void isosceles_masses(const MassSystem& sys, double& m, double& m3, double& mu) {
  if (sys.n() != 3 || sys.dim != 3)
    throw std::invalid_argument("isosceles: spatial three-body required");
  if (std::abs(sys.masses[0] - sys.masses[1]) > 1e-14 * sys.masses[0])
    throw std::invalid_argument("isosceles: m1 must equal m2");
  m = sys.masses[0];
  m3 = sys.masses[2];
  mu = 2.0 * m * m3 / (2.0 * m + m3);
}

}  // namespace detail

inline double isosceles_U(const IsoscelesState& r, const MassSystem& sys) {
  double m, m3, mu;
  detail::isosceles_masses(sys, m, m3, mu);
  double d13 = std::sqrt(r.rho * r.rho + r.eta * r.eta);
  return sys.G * (m * m / (2.0 * r.rho) + 2.0 * m * m3 / d13);
}

inline double isosceles_energy(const IsoscelesState& r, const MassSystem& sys) {
  double m, m3, mu;
  detail::isosceles_masses(sys, m, m3, mu);
  double k = m * r.rho_dot * r.rho_dot + 0.5 * mu * r.eta_dot * r.eta_dot +
             r.ell * r.ell / (4.0 * m * r.rho * r.rho);
  return k - isosceles_U(r, sys);
}

// Project a symmetry-compatible full spatial state to reduced coordinates.
inline IsoscelesState isosceles_reduce(const State& s, const MassSystem& sys,
                                       double sym_tol = 1e-10) {
  double m, m3, mu;
  detail::isosceles_masses(sys, m, m3, mu);
  // symmetry: q2 = R_pi q1 (x, y negated; z equal), body 3 on the axis
  double scale = std::max(1.0, mnorm(s.q, sys) + mnorm(s.v, sys));
  auto bad = [&](double x) { return std::abs(x) > sym_tol * scale; };
  if (bad(s.q[0] + s.q[3]) || bad(s.q[1] + s.q[4]) || bad(s.q[2] - s.q[5]) ||
      bad(s.v[0] + s.v[3]) || bad(s.v[1] + s.v[4]) || bad(s.v[2] - s.v[5]) ||
      bad(s.q[6]) || bad(s.q[7]) || bad(s.v[6]) || bad(s.v[7]))
    throw std::invalid_argument("isosceles_reduce: state violates the isosceles symmetry");

  IsoscelesState r;
  r.t = s.t;
  double x = s.q[0], y = s.q[1];
  r.rho = std::sqrt(x * x + y * y);
  r.phi = std::atan2(y, x);
  r.eta = s.q[8] - s.q[2];
  r.rho_dot = (x * s.v[0] + y * s.v[1]) / r.rho;
  double phi_dot = (x * s.v[1] - y * s.v[0]) / (r.rho * r.rho);
  r.ell = 2.0 * m * r.rho * r.rho * phi_dot;
  r.eta_dot = s.v[8] - s.v[2];
  return r;
}

// Embed reduced coordinates back into the full spatial state (CoM at rest
// at the origin).
inline State isosceles_embed(const IsoscelesState& r, const MassSystem& sys) {
  double m, m3, mu;
  detail::isosceles_masses(sys, m, m3, mu);
  double M = 2.0 * m + m3;
  double zb = -m3 * r.eta / M, z3 = 2.0 * m * r.eta / M;
  double zb_dot = -m3 * r.eta_dot / M, z3_dot = 2.0 * m * r.eta_dot / M;
  double c = std::cos(r.phi), s_ = std::sin(r.phi);
  double phi_dot = r.ell / (2.0 * m * r.rho * r.rho);
  State s;
  s.t = r.t;
  s.q = {r.rho * c, r.rho * s_, zb, -r.rho * c, -r.rho * s_, zb, 0.0, 0.0, z3};
  double vx = r.rho_dot * c - r.rho * phi_dot * s_;
  double vy = r.rho_dot * s_ + r.rho * phi_dot * c;
  s.v = {vx, vy, zb_dot, -vx, -vy, zb_dot, 0.0, 0.0, z3_dot};
  return s;
}

// Propagate the reduced two-degree-of-freedom system.
inline IsoscelesState isosceles_propagate(
    const IsoscelesState& r0, const MassSystem& sys, double t_final,
    double rtol = 1e-12, double atol = 1e-12,
    const std::function<void(const IsoscelesState&)>& on_step = nullptr) {
  double m, m3, mu;
  detail::isosceles_masses(sys, m, m3, mu);
  const double G = sys.G;
  const double ell = r0.ell;
  auto rhs = [&](double /*t*/, const std::vector<double>& y, std::vector<double>& dy) {
    // y = [rho, eta, rho_dot, eta_dot, phi]
    double rho = y[0], eta = y[1];
    double d2 = rho * rho + eta * eta;
    double d32 = d2 * std::sqrt(d2);
    double dU_drho = G * (-m * m / (2.0 * rho * rho) - 2.0 * m * m3 * rho / d32);
    double dU_deta = -2.0 * G * m * m3 * eta / d32;
    dy.resize(5);
    dy[0] = y[2];
    dy[1] = y[3];
    dy[2] = (ell * ell / (2.0 * m * rho * rho * rho) + dU_drho) / (2.0 * m);
    dy[3] = dU_deta / mu;
    dy[4] = ell / (2.0 * m * rho * rho);
  };
  std::vector<double> y0 = {r0.rho, r0.eta, r0.rho_dot, r0.eta_dot, r0.phi};
  auto wrap = [&](double t, const std::vector<double>& y) {
    if (!on_step) return;
    IsoscelesState r;
    r.t = t;
    r.rho = y[0];
    r.eta = y[1];
    r.rho_dot = y[2];
    r.eta_dot = y[3];
    r.phi = y[4];
    r.ell = ell;
    on_step(r);
  };
  auto yf = ode45(rhs, y0, r0.t, t_final, rtol, atol,
                  on_step ? std::function<void(double, const std::vector<double>&)>(wrap)
                          : nullptr);
  IsoscelesState r;
  r.t = t_final;
  r.rho = yf[0];
  r.eta = yf[1];
  r.rho_dot = yf[2];
  r.eta_dot = yf[3];
  r.phi = yf[4];
  r.ell = ell;
  return r;
}

// Candidate scan for the Sitnikov-type escape question: seeds whose binary
// asymptotes to a circle of radius `a`, scanned for two-sided escape while
// U stays above an explicit threshold (the paper leaves the normalization
// of "U >= 2m/a" open, so the threshold is a parameter).
struct IsoscelesScanRecord {
  IsoscelesState seed;
  double u_threshold;
  double min_U;            // over the integrated span
  bool stayed_above;       // min_U >= u_threshold
  bool escape_forward;     // |eta| growing at the forward horizon
  bool escape_backward;
  double horizon;
};

inline IsoscelesScanRecord isosceles_escape_probe(const IsoscelesState& seed,
                                                  const MassSystem& sys,
                                                  double u_threshold, double horizon,
                                                  double rtol = 1e-9) {
  IsoscelesScanRecord rec;
  rec.seed = seed;
  rec.u_threshold = u_threshold;
  rec.horizon = horizon;
  rec.min_U = std::numeric_limits<double>::infinity();
  double eta_max_fwd = 0.0, eta_end_fwd = 0.0;
  auto track = [&](const IsoscelesState& r) {
    rec.min_U = std::min(rec.min_U, isosceles_U(r, sys));
    eta_max_fwd = std::max(eta_max_fwd, std::abs(r.eta));
    eta_end_fwd = std::abs(r.eta);
  };
  IsoscelesState f = isosceles_propagate(seed, sys, seed.t + horizon, rtol, rtol, track);
  rec.escape_forward = std::abs(f.eta) > 0.9 * eta_max_fwd &&
                       f.eta * f.eta_dot > 0.0 && std::abs(f.eta) > 5.0 * seed.rho;
  eta_max_fwd = 0.0;
  IsoscelesState b = isosceles_propagate(seed, sys, seed.t - horizon, rtol, rtol, track);
  rec.escape_backward = std::abs(b.eta) > 0.9 * eta_max_fwd &&
                        b.eta * b.eta_dot < 0.0 && std::abs(b.eta) > 5.0 * seed.rho;
  rec.stayed_above = rec.min_U >= u_threshold;
  return rec;
}

}  // namespace vlab
