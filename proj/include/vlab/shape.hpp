#pragma once

// Three-body shape space: mass-weighted Jacobi coordinates followed by the
// Hopf map, syzygy-sequence extraction, and isosurface meshes of U on shape
// space for figure export.

#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlab/core.hpp"
#include "vlab/integrate.hpp"

namespace vlab {

struct ShapePoint {
  std::array<double, 3> w{};  // w3 = 0 is the collinear equator
  double r = 0.0;             // shell radius sqrt(I)
};

namespace detail {

struct Jacobi2 {
  double x1, y1;  // mass-weighted pair vector
  double x2, y2;  // mass-weighted third-body vector
};

inline Jacobi2 jacobi_coords(const Config& q, const MassSystem& sys) {
  if (sys.n() != 3 || sys.dim != 2)
    throw std::invalid_argument("shape space requires a planar 3-body system");
  double m1 = sys.masses[0], m2 = sys.masses[1], m3 = sys.masses[2];
  double mu1 = m1 * m2 / (m1 + m2);
  double mu2 = (m1 + m2) * m3 / (m1 + m2 + m3);
  double cx = (m1 * q[0] + m2 * q[2]) / (m1 + m2);
  double cy = (m1 * q[1] + m2 * q[3]) / (m1 + m2);
  Jacobi2 j;
  j.x1 = std::sqrt(mu1) * (q[2] - q[0]);
  j.y1 = std::sqrt(mu1) * (q[3] - q[1]);
  j.x2 = std::sqrt(mu2) * (q[4] - cx);
  j.y2 = std::sqrt(mu2) * (q[5] - cy);
  return j;
}

// representative configuration for a shape-space point (CoM at the origin,
// pair vector aligned with the x-axis)
inline Config config_of_shape(const std::array<double, 3>& w, const MassSystem& sys) {
  double m1 = sys.masses[0], m2 = sys.masses[1], m3 = sys.masses[2];
  double M = m1 + m2 + m3;
  double mu1 = m1 * m2 / (m1 + m2);
  double mu2 = (m1 + m2) * m3 / M;
  double norm = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
  double a = norm + w[0];  // |xi1|^2
  double x1, y1, x2, y2;
  if (a > 1e-14 * norm && a > 0.0) {
    x1 = std::sqrt(a);
    y1 = 0.0;
    x2 = w[1] / x1;
    y2 = w[2] / x1;
  } else {  // pair collision shape: all weight on the third-body vector
    x1 = 0.0;
    y1 = 0.0;
    x2 = std::sqrt(std::max(0.0, 2.0 * norm));
    y2 = 0.0;
  }
  double rx = x1 / std::sqrt(mu1), ry = y1 / std::sqrt(mu1);       // q2 - q1
  double sx = x2 / std::sqrt(mu2), sy = y2 / std::sqrt(mu2);       // q3 - c12
  double c12x = -(m3 / M) * sx, c12y = -(m3 / M) * sy;
  Config q(6);
  q[0] = c12x - (m2 / (m1 + m2)) * rx;
  q[1] = c12y - (m2 / (m1 + m2)) * ry;
  q[2] = c12x + (m1 / (m1 + m2)) * rx;
  q[3] = c12y + (m1 / (m1 + m2)) * ry;
  q[4] = ((m1 + m2) / M) * sx;
  q[5] = ((m1 + m2) / M) * sy;
  return q;
}

}  // namespace detail

inline ShapePoint shape_project(const Config& q, const MassSystem& sys) {
  auto j = detail::jacobi_coords(q, sys);
  ShapePoint p;
  double n1 = j.x1 * j.x1 + j.y1 * j.y1;
  double n2 = j.x2 * j.x2 + j.y2 * j.y2;
  p.w[0] = 0.5 * (n1 - n2);
  p.w[1] = j.x1 * j.x2 + j.y1 * j.y2;        // Re(conj(xi1) xi2)
  p.w[2] = j.x1 * j.y2 - j.y1 * j.x2;        // Im(conj(xi1) xi2)
  p.r = std::sqrt(n1 + n2);                  // = sqrt(I) in the CoM frame
  return p;
}

// potential restricted to shape space (well defined: U is rotation-invariant)
inline double shape_U(const std::array<double, 3>& w, const MassSystem& sys) {
  return potential_U(detail::config_of_shape(w, sys), sys);
}

// equatorial direction of the binary-collision ray for a body pair
inline std::array<double, 3> collision_ray(int a, int b, const MassSystem& sys) {
  Config q(6, 0.0);
  int c = 3 - a - b;
  q[a * 2] = q[b * 2] = -1.0;
  q[c * 2] = 2.0;  // CoM-free for equal masses; normalized below anyway
  com_normalize(q, sys);
  ShapePoint p = shape_project(q, sys);
  double n = std::sqrt(p.w[0] * p.w[0] + p.w[1] * p.w[1]);
  return {p.w[0] / n, p.w[1] / n, 0.0};
}

struct SyzygyWord {
  std::vector<int> symbols;   // middle-body labels, 0-based
  std::vector<double> times;  // strictly increasing transverse crossing times
  int grazes = 0;             // tangential contacts, excluded from the word
  bool degenerate = false;    // identically collinear trajectory
  bool truncated = false;     // trajectory ended at a collision stop
};

namespace detail {

inline int middle_body(const Config& q, std::size_t dim) {
  for (int a = 0; a < 3; ++a) {
    int b = (a + 1) % 3, c = (a + 2) % 3;
    double dot = 0.0;
    for (std::size_t k = 0; k < dim; ++k)
      dot += (q[b * dim + k] - q[a * dim + k]) * (q[c * dim + k] - q[a * dim + k]);
    if (dot < 0.0) return a;
  }
  return 0;  // ties (exact collision) default to the first body
}

}  // namespace detail

inline SyzygyWord syzygy_sequence(const Trajectory& traj, double graze_rel = 1e-6) {
  const MassSystem& sys = traj.sys;
  SyzygyWord word;
  word.truncated = traj.stop == StopReason::collision_proximity;

  auto w3_at = [&](double t) { return shape_project(traj.state_at(t).q, sys).w[2]; };
  double t0 = traj.t_begin(), t1 = traj.t_end();
  const int per_step = 8;
  std::vector<double> ts;
  for (const auto& st : traj.steps)
    for (int i = 0; i < per_step; ++i) ts.push_back(st.t0 + st.h * i / per_step);
  ts.push_back(t1);
  if (!traj.forward()) std::reverse(ts.begin(), ts.end());

  double w3_max = 0.0, shell_max = 0.0;
  std::vector<double> w3s(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    ShapePoint p = shape_project(traj.state_at(ts[i]).q, sys);
    w3s[i] = p.w[2];
    w3_max = std::max(w3_max, std::abs(p.w[2]));
    shell_max = std::max(shell_max, 0.5 * p.r * p.r);
  }
  if (w3_max < 1e-9 * shell_max) {
    word.degenerate = true;
    return word;
  }

  double span = std::abs(t1 - t0);
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    double fa = w3s[i], fb = w3s[i + 1];
    if (fa == 0.0) continue;  // counted at the previous interval's root
    if (fa * fb < 0.0) {
      // bisection to the crossing time
      double lo = ts[i], hi = ts[i + 1], flo = fa;
      for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi), fm = w3_at(mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if (flo * fm < 0.0)
          hi = mid;
        else {
          lo = mid;
          flo = fm;
        }
      }
      double tc = 0.5 * (lo + hi);
      // transversality: compare the crossing slope against the full
      // shape-velocity scale; tangencies are grazes, not letters
      double dt = 1e-6 * span + 1e-12;
      ShapePoint pa = shape_project(traj.state_at(std::max(t0, tc - dt)).q, sys);
      ShapePoint pb = shape_project(traj.state_at(std::min(t1, tc + dt)).q, sys);
      double slope = std::abs(pb.w[2] - pa.w[2]);
      double wspeed = std::abs(pb.w[0] - pa.w[0]) + std::abs(pb.w[1] - pa.w[1]) +
                      std::abs(pb.w[2] - pa.w[2]);
      if (slope < graze_rel * wspeed) {
        ++word.grazes;
        continue;
      }
      word.symbols.push_back(detail::middle_body(traj.state_at(tc).q, sys.dim));
      word.times.push_back(tc);
    } else if (std::abs(fb) < 1e-12 * w3_max && i + 2 < ts.size() &&
               fa * w3s[i + 2] > 0.0 && w3s[i + 2] != 0.0) {
      ++word.grazes;  // touch-and-return contact with the equator
    }
  }
  return word;
}

struct Mesh {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 3>> faces;
};

namespace detail {

inline std::array<double, 3> edge_cross(const std::array<double, 3>& a, double fa,
                                        const std::array<double, 3>& b, double fb) {
  double t = fa / (fa - fb);
  return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
}

inline void emit_tet(Mesh& mesh, const std::array<double, 3>* p, const double* f) {
  int inside[4], n_in = 0, outside[4], n_out = 0;
  for (int i = 0; i < 4; ++i)
    (f[i] < 0.0 ? inside[n_in++] : outside[n_out++]) = i;
  auto add_tri = [&](std::array<double, 3> a, std::array<double, 3> b,
                     std::array<double, 3> c) {
    int base = (int)mesh.vertices.size();
    mesh.vertices.push_back(a);
    mesh.vertices.push_back(b);
    mesh.vertices.push_back(c);
    mesh.faces.push_back({base, base + 1, base + 2});
  };
  if (n_in == 1) {
    int i = inside[0];
    add_tri(edge_cross(p[i], f[i], p[outside[0]], f[outside[0]]),
            edge_cross(p[i], f[i], p[outside[1]], f[outside[1]]),
            edge_cross(p[i], f[i], p[outside[2]], f[outside[2]]));
  } else if (n_in == 3) {
    int o = outside[0];
    add_tri(edge_cross(p[inside[0]], f[inside[0]], p[o], f[o]),
            edge_cross(p[inside[1]], f[inside[1]], p[o], f[o]),
            edge_cross(p[inside[2]], f[inside[2]], p[o], f[o]));
  } else if (n_in == 2) {
    auto e00 = edge_cross(p[inside[0]], f[inside[0]], p[outside[0]], f[outside[0]]);
    auto e01 = edge_cross(p[inside[0]], f[inside[0]], p[outside[1]], f[outside[1]]);
    auto e10 = edge_cross(p[inside[1]], f[inside[1]], p[outside[0]], f[outside[0]]);
    auto e11 = edge_cross(p[inside[1]], f[inside[1]], p[outside[1]], f[outside[1]]);
    add_tri(e00, e01, e11);
    add_tri(e00, e11, e10);
  }
}

}  // namespace detail

// triangulated isosurface {U = c} on shape space over a centered cube,
// marching-tetrahedra decomposition (6 tets per cell)
inline Mesh hill_mesh(const MassSystem& sys, double c, int resolution, double extent) {
  if (resolution < 2 || resolution > 512)
    throw std::invalid_argument("hill_mesh: resolution out of range");
  Mesh mesh;
  int n = resolution;
  double hstep = 2.0 * extent / n;
  auto node = [&](int i, int j, int k) -> std::array<double, 3> {
    return {-extent + i * hstep, -extent + j * hstep, -extent + k * hstep};
  };
  // values on the (n+1)^3 lattice
  std::vector<double> val((n + 1) * (n + 1) * (n + 1));
  auto idx = [&](int i, int j, int k) { return (i * (n + 1) + j) * (n + 1) + k; };
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k) {
        auto w = node(i, j, k);
        double u = shape_U(w, sys);
        val[idx(i, j, k)] = (std::isfinite(u) ? u : 1e300) - c;
      }
  static const int tets[6][4] = {{0, 5, 1, 6}, {0, 1, 2, 6}, {0, 2, 3, 6},
                                 {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        int di[8] = {0, 1, 1, 0, 0, 1, 1, 0};
        int dj[8] = {0, 0, 1, 1, 0, 0, 1, 1};
        int dk[8] = {0, 0, 0, 0, 1, 1, 1, 1};
        std::array<double, 3> corner[8];
        double f[8];
        for (int v = 0; v < 8; ++v) {
          corner[v] = node(i + di[v], j + dj[v], k + dk[v]);
          f[v] = val[idx(i + di[v], j + dj[v], k + dk[v])];
        }
        for (const auto& tet : tets) {
          std::array<double, 3> p[4];
          double g[4];
          for (int v = 0; v < 4; ++v) {
            p[v] = corner[tet[v]];
            g[v] = f[tet[v]];
          }
          detail::emit_tet(mesh, p, g);
        }
      }
  return mesh;
}

inline void write_obj(const Mesh& mesh, std::ostream& os) {
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v[0], v[1], v[2]);
    os << buf;
  }
  for (const auto& f : mesh.faces) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", f[0] + 1, f[1] + 1, f[2] + 1);
    os << buf;
  }
}

}  // namespace vlab
