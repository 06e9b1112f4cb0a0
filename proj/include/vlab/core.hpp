#pragma once

// Configuration space, mass metric, potential and the pointwise dynamical
// quantities (K, U, E, I, Lagrange-Jacobi right-hand side, angular momentum)
// that everything else in the library consumes.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlab {

// Flat row-major n_bodies x dim array.
using Config = std::vector<double>;

struct MassSystem {
  std::vector<double> masses;
  double G = 1.0;
  int dim = 2;
  double alpha = 1.0;  // homogeneity degree of the pair potential, 1 = Newtonian

  std::size_t n() const { return masses.size(); }
  std::size_t dof() const { return masses.size() * static_cast<std::size_t>(dim); }
  double total_mass() const {
    double m = 0.0;
    for (double mi : masses) m += mi;
    return m;
  }

  void validate() const {
    if (masses.size() < 2) throw std::invalid_argument("MassSystem: need at least 2 bodies");
    for (double m : masses)
      if (!(m > 0.0)) throw std::invalid_argument("MassSystem: masses must be positive");
    if (!(G > 0.0)) throw std::invalid_argument("MassSystem: G must be positive");
    if (dim != 2 && dim != 3) throw std::invalid_argument("MassSystem: dim must be 2 or 3");
    if (!(alpha > 0.0)) throw std::invalid_argument("MassSystem: alpha must be positive");
  }
};

struct State {
  double t = 0.0;
  Config q;
  Config v;
};

// Fixed negative energy E = -h with h > 0.  Hill region {U >= h},
// Hill boundary {U = h}, virial surface {U = 2h}.
struct EnergyLevel {
  double h;
  explicit EnergyLevel(double h_) : h(h_) {
    if (!(h > 0.0)) throw std::invalid_argument("EnergyLevel: h must be positive");
  }
};

inline bool all_finite(const Config& x) {
  for (double xi : x)
    if (!std::isfinite(xi)) return false;
  return true;
}

inline void check_shape(const Config& q, const MassSystem& sys, const char* what) {
  if (q.size() != sys.dof())
    throw std::invalid_argument(std::string(what) + ": wrong shape");
}

// Mass-metric inner product <a, b> = sum_a m_a a_a . b_a
inline double mdot(const Config& a, const Config& b, const MassSystem& sys) {
  double s = 0.0;
  const int d = sys.dim;
  for (std::size_t i = 0; i < sys.n(); ++i) {
    double acc = 0.0;
    for (int k = 0; k < d; ++k) acc += a[i * d + k] * b[i * d + k];
    s += sys.masses[i] * acc;
  }
  return s;
}

inline double mnorm(const Config& a, const MassSystem& sys) {
  return std::sqrt(mdot(a, a, sys));
}

inline double mdist(const Config& a, const Config& b, const MassSystem& sys) {
  Config d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return mnorm(d, sys);
}

inline double pair_distance(const Config& q, std::size_t a, std::size_t b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    double d = q[a * dim + k] - q[b * dim + k];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double min_pair_distance(const Config& q, const MassSystem& sys) {
  double r = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < sys.n(); ++a)
    for (std::size_t b = a + 1; b < sys.n(); ++b)
      r = std::min(r, pair_distance(q, a, b, sys.dim));
  return r;
}

// U(q) = G sum_{a<b} m_a m_b / r_ab^alpha.  Returns +inf at exact collision.
inline double potential_U(const Config& q, const MassSystem& sys) {
  check_shape(q, sys, "potential_U");
  if (!all_finite(q)) throw std::invalid_argument("potential_U: non-finite input");
  double u = 0.0;
  for (std::size_t a = 0; a < sys.n(); ++a)
    for (std::size_t b = a + 1; b < sys.n(); ++b) {
      double r = pair_distance(q, a, b, sys.dim);
      if (r == 0.0) return std::numeric_limits<double>::infinity();
      double inv = sys.alpha == 1.0 ? 1.0 / r : std::pow(r, -sys.alpha);
      u += sys.masses[a] * sys.masses[b] * inv;
    }
  return sys.G * u;
}

// Mass-metric gradient of U, i.e. the acceleration field: qddot = grad_U(q).
// Component a is (1/m_a) dU/dq_a = -alpha G sum_b m_b (q_a - q_b) / r^{alpha+2}.
inline Config grad_U(const Config& q, const MassSystem& sys) {
  check_shape(q, sys, "grad_U");
  const int d = sys.dim;
  Config g(q.size(), 0.0);
  for (std::size_t a = 0; a < sys.n(); ++a)
    for (std::size_t b = a + 1; b < sys.n(); ++b) {
      double r = pair_distance(q, a, b, d);
      if (r == 0.0) throw std::domain_error("grad_U: collision");
      double c = sys.alpha * sys.G / std::pow(r, sys.alpha + 2.0);
      for (int k = 0; k < d; ++k) {
        double dq = q[a * d + k] - q[b * d + k];
        g[a * d + k] -= c * sys.masses[b] * dq;
        g[b * d + k] += c * sys.masses[a] * dq;
      }
    }
  return g;
}

// One-pass evaluation of the acceleration field and U; the integrator's
// right-hand side needs both at every stage.
inline double grad_U_and_U(const Config& q, const MassSystem& sys, Config& g) {
  const int d = sys.dim;
  g.assign(q.size(), 0.0);
  double u = 0.0;
  const bool newtonian = sys.alpha == 1.0;
  for (std::size_t a = 0; a < sys.n(); ++a)
    for (std::size_t b = a + 1; b < sys.n(); ++b) {
      double r = pair_distance(q, a, b, d);
      if (r == 0.0) throw std::domain_error("grad_U_and_U: collision");
      double inv_r_alpha = newtonian ? 1.0 / r : std::pow(r, -sys.alpha);
      u += sys.masses[a] * sys.masses[b] * inv_r_alpha;
      double c = sys.alpha * sys.G * inv_r_alpha / (r * r);
      for (int k = 0; k < d; ++k) {
        double dq = q[a * d + k] - q[b * d + k];
        g[a * d + k] -= c * sys.masses[b] * dq;
        g[b * d + k] += c * sys.masses[a] * dq;
      }
    }
  return sys.G * u;
}

inline double kinetic_K(const Config& v, const MassSystem& sys) {
  check_shape(v, sys, "kinetic_K");
  return 0.5 * mdot(v, v, sys);
}

inline double energy_E(const State& s, const MassSystem& sys) {
  double u = potential_U(s.q, sys);
  if (std::isinf(u)) throw std::domain_error("energy_E: collision");
  return kinetic_K(s.v, sys) - u;
}

// Moment of inertia I = <q, q> in the mass metric.
inline double moment_I(const Config& q, const MassSystem& sys) {
  check_shape(q, sys, "moment_I");
  return mdot(q, q, sys);
}

// dI/dt = 2 <q, v>
inline double moment_I_dot(const State& s, const MassSystem& sys) {
  return 2.0 * mdot(s.q, s.v, sys);
}

// Lagrange-Jacobi identity: d^2 I / dt^2 = 4K + 2<q, grad U> = 4K - 2 alpha U.
// For alpha = 1 this is 4K - 2U; for alpha = 2 it equals 4E.
inline double lagrange_jacobi_rhs(const State& s, const MassSystem& sys) {
  double u = potential_U(s.q, sys);
  if (std::isinf(u)) throw std::domain_error("lagrange_jacobi_rhs: collision");
  return 4.0 * kinetic_K(s.v, sys) - 2.0 * sys.alpha * u;
}

// Total angular momentum.  dim=2: scalar z-component in [0]; dim=3: 3-vector.
inline std::vector<double> angular_momentum_J(const State& s, const MassSystem& sys) {
  const int d = sys.dim;
  if (d == 2) {
    double jz = 0.0;
    for (std::size_t a = 0; a < sys.n(); ++a)
      jz += sys.masses[a] * (s.q[a * 2] * s.v[a * 2 + 1] - s.q[a * 2 + 1] * s.v[a * 2]);
    return {jz};
  }
  std::vector<double> j(3, 0.0);
  for (std::size_t a = 0; a < sys.n(); ++a) {
    const double* q = &s.q[a * 3];
    const double* v = &s.v[a * 3];
    j[0] += sys.masses[a] * (q[1] * v[2] - q[2] * v[1]);
    j[1] += sys.masses[a] * (q[2] * v[0] - q[0] * v[2]);
    j[2] += sys.masses[a] * (q[0] * v[1] - q[1] * v[0]);
  }
  return j;
}

inline double angular_momentum_mag(const State& s, const MassSystem& sys) {
  auto j = angular_momentum_J(s, sys);
  double s2 = 0.0;
  for (double ji : j) s2 += ji * ji;
  return std::sqrt(s2);
}

enum class HillRegion { exterior, interior, boundary_band, collision_band };

struct HillMembership {
  HillRegion region;
  int virial_side;  // sign of U - 2h
};

// Classify U(q) against the level h, with a relative band tolerance around
// the boundary and a collision-proximity band r_min.
inline HillMembership hill_membership(const Config& q, const MassSystem& sys,
                                      const EnergyLevel& level,
                                      double band_tol = 1e-9, double r_min = 1e-8) {
  double u = potential_U(q, sys);
  HillMembership m;
  double du = u - 2.0 * level.h;
  m.virial_side = (du > 0.0) - (du < 0.0);
  if (std::isinf(u) || min_pair_distance(q, sys) < r_min)
    m.region = HillRegion::collision_band;
  else if (std::abs(u - level.h) <= band_tol * level.h)
    m.region = HillRegion::boundary_band;
  else if (u < level.h)
    m.region = HillRegion::exterior;
  else
    m.region = HillRegion::interior;
  return m;
}

// ---- center-of-mass helpers ----

inline std::vector<double> center_of_mass(const Config& q, const MassSystem& sys) {
  const int d = sys.dim;
  std::vector<double> c(d, 0.0);
  double M = sys.total_mass();
  for (std::size_t a = 0; a < sys.n(); ++a)
    for (int k = 0; k < d; ++k) c[k] += sys.masses[a] * q[a * d + k];
  for (int k = 0; k < d; ++k) c[k] /= M;
  return c;
}

inline void com_normalize(Config& q, const MassSystem& sys) {
  auto c = center_of_mass(q, sys);
  const int d = sys.dim;
  for (std::size_t a = 0; a < sys.n(); ++a)
    for (int k = 0; k < d; ++k) q[a * d + k] -= c[k];
}

inline void com_normalize(State& s, const MassSystem& sys) {
  com_normalize(s.q, sys);
  com_normalize(s.v, sys);
}

// Scaling map q -> lambda q placing q exactly on the level set {U = c}.
// Uses U(lambda q) = lambda^{-alpha} U(q).
inline Config scale_to_level(const Config& q, const MassSystem& sys, double c) {
  double u = potential_U(q, sys);
  if (!(u > 0.0) || std::isinf(u))
    throw std::domain_error("scale_to_level: degenerate configuration");
  double lambda = std::pow(u / c, 1.0 / sys.alpha);
  Config out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = lambda * q[i];
  return out;
}

}  // namespace vlab
