#pragma once

// Test-only oracles, independent of the library's computation paths:
// closed-form Kepler two-body motion, radial free fall, and finite
// differences.  Expected values in the test suites are frozen against these.

#include <cmath>
#include <stdexcept>

#include "vlab/core.hpp"

namespace oracle {

struct TwoBody {
  vlab::MassSystem sys;   // dim = 2
  double a;               // semi-major axis of the relative orbit
  double e;
  double period;
  double h;               // -E of the pair
};

// Planar two-body at eccentricity e and energy -h, starting at perihelion
// on the x-axis, CoM at the origin.
inline TwoBody make_two_body(double m1, double m2, double h, double e, double G = 1.0) {
  TwoBody tb;
  tb.sys.masses = {m1, m2};
  tb.sys.G = G;
  tb.sys.dim = 2;
  tb.h = h;
  tb.e = e;
  double M = m1 + m2;
  tb.a = G * m1 * m2 / (2.0 * h);
  tb.period = 2.0 * M_PI * std::sqrt(tb.a * tb.a * tb.a / (G * M));
  return tb;
}

inline vlab::State two_body_state_at_perihelion(const TwoBody& tb) {
  double M = tb.sys.masses[0] + tb.sys.masses[1];
  double rp = tb.a * (1.0 - tb.e);
  double vp = std::sqrt(tb.sys.G * M * (1.0 + tb.e) / rp);
  double f1 = tb.sys.masses[1] / M, f2 = tb.sys.masses[0] / M;
  vlab::State s;
  s.t = 0.0;
  s.q = {-f1 * rp, 0.0, f2 * rp, 0.0};
  s.v = {0.0, -f1 * vp, 0.0, f2 * vp};
  return s;
}

// Solve Kepler's equation M = E - e sin E by Newton iteration.
inline double eccentric_anomaly(double mean_anom, double e) {
  double E = mean_anom;
  for (int i = 0; i < 100; ++i) {
    double f = E - e * std::sin(E) - mean_anom;
    double fp = 1.0 - e * std::cos(E);
    double dE = f / fp;
    E -= dE;
    if (std::abs(dE) < 1e-15) break;
  }
  return E;
}

// Relative-orbit position and velocity at time t (perihelion passage at t=0).
inline void relative_orbit_at(const TwoBody& tb, double t, double rel_q[2],
                              double rel_v[2]) {
  double M = tb.sys.masses[0] + tb.sys.masses[1];
  double n = 2.0 * M_PI / tb.period;
  double E = eccentric_anomaly(n * t, tb.e);
  double cE = std::cos(E), sE = std::sin(E);
  double b = tb.a * std::sqrt(1.0 - tb.e * tb.e);
  rel_q[0] = tb.a * (cE - tb.e);
  rel_q[1] = b * sE;
  double Edot = n / (1.0 - tb.e * cE);
  rel_v[0] = -tb.a * sE * Edot;
  rel_v[1] = b * cE * Edot;
  (void)M;
}

inline vlab::State two_body_state_at(const TwoBody& tb, double t) {
  double rq[2], rv[2];
  relative_orbit_at(tb, t, rq, rv);
  double M = tb.sys.masses[0] + tb.sys.masses[1];
  double f1 = tb.sys.masses[1] / M, f2 = tb.sys.masses[0] / M;
  vlab::State s;
  s.t = t;
  s.q = {-f1 * rq[0], -f1 * rq[1], f2 * rq[0], f2 * rq[1]};
  s.v = {-f1 * rv[0], -f1 * rv[1], f2 * rv[0], f2 * rv[1]};
  return s;
}

// |J| of a circular two-body orbit of relative radius r: mu sqrt(G M r).
inline double circular_angular_momentum(double m1, double m2, double r, double G = 1.0) {
  double M = m1 + m2;
  double mu = m1 * m2 / M;
  return mu * std::sqrt(G * M * r);
}

// Time of radial free fall from rest at relative separation r0 to collision.
inline double radial_fall_time(double m1, double m2, double r0, double G = 1.0) {
  double M = m1 + m2;
  return M_PI * std::sqrt(r0 * r0 * r0 / (8.0 * G * M));
}

// Central finite differences of U in the mass metric (component a of the
// gradient is (1/m_a) dU/dq_a).
inline vlab::Config grad_U_fd(const vlab::Config& q, const vlab::MassSystem& sys,
                              double step = 1e-5) {
  vlab::Config g(q.size());
  vlab::Config qp = q, qm = q;
  for (std::size_t i = 0; i < q.size(); ++i) {
    qp[i] = q[i] + step;
    qm[i] = q[i] - step;
    double up = vlab::potential_U(qp, sys);
    double um = vlab::potential_U(qm, sys);
    g[i] = (up - um) / (2.0 * step) / sys.masses[i / sys.dim];
    qp[i] = q[i];
    qm[i] = q[i];
  }
  return g;
}

}  // namespace oracle
