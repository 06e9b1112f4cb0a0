#pragma once

// Length geometry of the conformal metric ds^2 = 2(U - h) ds^2_mass on the
// Hill region: discrete path lengths, geodesic descent to the collapsed
// boundary point, scaling asymptotics, diameter sampling, and mountain-pass
// profiles over loop families.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "vlab/brake.hpp"
#include "vlab/core.hpp"
#include "vlab/integrate.hpp"
#include "vlab/opt.hpp"
#include "vlab/rng.hpp"

namespace vlab {

enum class EndpointTag { interior, brake_point, collision_capped };

struct JMPath {
  double h = 0.0;
  std::vector<Config> nodes;
  EndpointTag tag_begin = EndpointTag::interior;
  EndpointTag tag_end = EndpointTag::interior;
  std::vector<double> seg_lengths;
  double length = 0.0;
};

namespace detail {

// conformal factor 2(U - h), clamped to zero inside the boundary band
inline double jm_factor(const Config& q, const MassSystem& sys, double h,
                        double band_tol) {
  double u = potential_U(q, sys);
  if (u < h - band_tol)
    throw std::domain_error("jm_length: node outside the Hill region");
  return std::max(0.0, 2.0 * (u - h));
}

}  // namespace detail

// midpoint-rule length of a node chain; h may be zero (scaling asymptotics)
inline double jm_length(const std::vector<Config>& nodes, const MassSystem& sys,
                        double h, double band_tol = 1e-9) {
  if (nodes.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    detail::jm_factor(nodes[i], sys, h, band_tol);  // membership check per node
    Config mid(nodes[i].size());
    for (std::size_t j = 0; j < mid.size(); ++j)
      mid[j] = 0.5 * (nodes[i][j] + nodes[i + 1][j]);
    // chord midpoints of boundary-hugging segments may dip below the level
    // set; they contribute zero length rather than failing membership
    double c = std::max(0.0, 2.0 * (potential_U(mid, sys) - h));
    total += std::sqrt(c) * mdist(nodes[i], nodes[i + 1], sys);
  }
  detail::jm_factor(nodes.back(), sys, h, band_tol);
  return total;
}

inline JMPath make_jm_path(std::vector<Config> nodes, const MassSystem& sys,
                           const EnergyLevel& level, double band_tol = 1e-9) {
  JMPath path;
  path.h = level.h;
  path.nodes = std::move(nodes);
  path.seg_lengths.clear();
  path.length = 0.0;
  for (std::size_t i = 0; i + 1 < path.nodes.size(); ++i) {
    double l = jm_length({path.nodes[i], path.nodes[i + 1]}, sys, level.h, band_tol);
    path.seg_lengths.push_back(l);
    path.length += l;
  }
  auto tag_of = [&](const Config& q) {
    double u = potential_U(q, sys);
    if (u - level.h < band_tol * std::max(1.0, level.h)) return EndpointTag::brake_point;
    return EndpointTag::interior;
  };
  if (!path.nodes.empty()) {
    path.tag_begin = tag_of(path.nodes.front());
    path.tag_end = tag_of(path.nodes.back());
  }
  return path;
}

inline double jm_length(const JMPath& path, const MassSystem& sys,
                        double band_tol = 1e-9) {
  return jm_length(path.nodes, sys, path.h, band_tol);
}

// sample a trajectory into a node chain (for the on-shell length identity)
inline std::vector<Config> sample_path(const Trajectory& traj, double t0, double t1,
                                       int n_nodes) {
  std::vector<Config> nodes;
  nodes.reserve(n_nodes + 1);
  for (int i = 0; i <= n_nodes; ++i)
    nodes.push_back(traj.state_at(t0 + (t1 - t0) * i / n_nodes).q);
  return nodes;
}

// L(lambda * path) / L(path); h-aware, throws if the scaled loop degenerates
inline double scaling_length_ratio(const std::vector<Config>& loop,
                                   const MassSystem& sys, double h, double lambda,
                                   double r_collide = 1e-6) {
  double base = jm_length(loop, sys, h);
  if (base <= 0.0) throw std::invalid_argument("scaling_length_ratio: zero-length loop");
  std::vector<Config> scaled(loop.size());
  for (std::size_t i = 0; i < loop.size(); ++i) {
    scaled[i].resize(loop[i].size());
    for (std::size_t j = 0; j < loop[i].size(); ++j) scaled[i][j] = lambda * loop[i][j];
    if (min_pair_distance(scaled[i], sys) < r_collide)
      throw std::domain_error("scaling_length_ratio: scaled loop hits collision band");
  }
  return jm_length(scaled, sys, h) / base;
}

struct GeodesicOptions {
  int n_nodes = 48;
  double band_tol = 1e-7;
  double r_pen = 1e-3;        // shell-relative collision-barrier onset
  double barrier_w = 1.0;
  int max_iters = 600;
  double grad_tol = 1e-10;
  double shoot_t_max = 0.0;   // 0: estimated from the discrete path
  double shoot_step = 1e-3;   // simplex size for the final shooting polish
  int shoot_evals = 600;
  PropagateOptions propagate;
};

struct GeodesicResult {
  JMPath path;
  bool collision_flagged = false;  // minimizer entered the penalty band
  bool converged = false;
  State brake_state;               // boundary endpoint, v = 0
  Trajectory orbit;                // re-integrated solution from the endpoint
  double verify_distance = std::numeric_limits<double>::infinity();
  double verify_time = 0.0;
};

namespace detail {

// objective and analytic coordinate gradient for the discrete length with a
// collision barrier on segment midpoints
struct PathGrad {
  double length = 0.0;
  double penalty = 0.0;
  std::vector<Config> grad;  // same layout as nodes
};

inline PathGrad path_length_grad(const std::vector<Config>& nodes,
                                 const MassSystem& sys, double h, double r_pen,
                                 double barrier_w) {
  PathGrad out;
  out.grad.assign(nodes.size(), Config(nodes.front().size(), 0.0));
  std::size_t dim = sys.dim;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const Config& a = nodes[i];
    const Config& b = nodes[i + 1];
    Config mid(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) mid[j] = 0.5 * (a[j] + b[j]);
    double u = potential_U(mid, sys);
    double c = std::max(0.0, 2.0 * (u - h));
    double d = mdist(a, b, sys);
    double sc = std::sqrt(c);
    out.length += sc * d;

    Config gu = grad_U(mid, sys);  // mass-metric gradient: dU/dq_j = m_j gu_j
    for (std::size_t j = 0; j < a.size(); ++j) {
      double mj = sys.masses[j / dim];
      double dd = d > 1e-14 ? mj * (a[j] - b[j]) / d : 0.0;
      double dc = c > 1e-14 ? (d / (2.0 * sc)) * (mj * gu[j]) : 0.0;
      out.grad[i][j] += sc * dd + 0.5 * dc;
      out.grad[i + 1][j] += -sc * dd + 0.5 * dc;
    }

    if (barrier_w > 0.0) {
      // pairwise barrier at the midpoint keeps the chain off collisions
      std::size_t n = sys.n();
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) {
          double r = pair_distance(mid, p, q, dim);
          if (r >= r_pen) continue;
          double x = r_pen / r - 1.0;
          out.penalty += barrier_w * x * x;
          double dpen_dr = barrier_w * 2.0 * x * (-r_pen / (r * r));
          for (std::size_t k = 0; k < dim; ++k) {
            double comp = (mid[p * dim + k] - mid[q * dim + k]) / r;
            out.grad[i][p * dim + k] += 0.5 * dpen_dr * comp;
            out.grad[i][q * dim + k] -= 0.5 * dpen_dr * comp;
            out.grad[i + 1][p * dim + k] += 0.5 * dpen_dr * comp;
            out.grad[i + 1][q * dim + k] -= 0.5 * dpen_dr * comp;
          }
        }
    }
  }
  return out;
}

// clamp a node back into the closed Hill region (radially, by homogeneity)
inline void clamp_to_hill(Config& q, const MassSystem& sys, double h) {
  double u = potential_U(q, sys);
  if (u < h) {
    Config fixed = scale_to_level(q, sys, h);
    q = std::move(fixed);
  }
}

// shared descent loop: backtracking gradient steps on the free nodes of a
// chain; the two endpoint policies (fixed / band-projected) are handled by
// the caller-provided projection
inline void descend_chain(std::vector<Config>& nodes, const MassSystem& sys, double h,
                          double r_pen, double barrier_w, double step0, int max_iters,
                          double grad_tol,
                          const std::function<void(std::vector<Config>&)>& project) {
  auto pg = path_length_grad(nodes, sys, h, r_pen, barrier_w);
  double f = pg.length + pg.penalty;
  double step = step0;
  for (int it = 0; it < max_iters; ++it) {
    double gnorm2 = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i)
      for (double g : pg.grad[i]) gnorm2 += g * g;
    if (std::sqrt(gnorm2) < grad_tol) break;
    bool accepted = false;
    for (int bt = 0; bt < 30; ++bt) {
      std::vector<Config> trial = nodes;
      for (std::size_t i = 1; i < trial.size(); ++i)
        for (std::size_t j = 0; j < trial[i].size(); ++j)
          trial[i][j] -= step * pg.grad[i][j];
      project(trial);
      try {
        auto tg = path_length_grad(trial, sys, h, r_pen, barrier_w);
        double ft = tg.length + tg.penalty;
        if (ft < f - 1e-14) {
          nodes = std::move(trial);
          pg = std::move(tg);
          f = ft;
          step *= 1.3;
          accepted = true;
          break;
        }
      } catch (const std::domain_error&) {
        // trial chain stepped onto a collision; shrink and retry
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
}

// radial chain from an interior point out to the boundary band, with node
// spacing concentrated where the conformal factor degenerates
inline std::vector<Config> init_boundary_chain(const Config& start,
                                               const MassSystem& sys, double h,
                                               double band_tol, int M) {
  Config q_end = scale_to_level(start, sys, h * (1.0 + band_tol));
  std::vector<Config> nodes(M + 1);
  for (int i = 0; i <= M; ++i) {
    double s = 1.0 - std::pow(1.0 - double(i) / M, 1.6);
    nodes[i].resize(start.size());
    for (std::size_t j = 0; j < start.size(); ++j)
      nodes[i][j] = (1.0 - s) * start[j] + s * q_end[j];
  }
  return nodes;
}

}  // namespace detail

// First-order descent of the discrete length functional from a fixed interior
// point q0 to a free endpoint on the boundary band, followed by a penalty-free
// polish, time reparameterization, and a shooting polish of the boundary
// brake point so that the re-integrated solution passes through q0.
inline GeodesicResult geodesic_to_brake(const Config& q0, const MassSystem& sys,
                                        const EnergyLevel& level,
                                        GeodesicOptions opts = {}) {
  double u0 = potential_U(q0, sys);
  if (u0 < level.h - opts.band_tol)
    throw std::domain_error("geodesic_to_brake: point outside the Hill region");
  GeodesicResult out;

  Config start = q0;
  com_normalize(start, sys);
  double shell = std::sqrt(moment_I(start, sys));
  double r_pen = opts.r_pen * shell;

  // boundary band: already there -> zero-length path plus the brake orbit
  if (u0 - level.h <= opts.band_tol * std::max(1.0, level.h)) {
    out.path = make_jm_path({start}, sys, level, opts.band_tol);
    out.path.tag_begin = out.path.tag_end = EndpointTag::brake_point;
    out.converged = true;
    out.brake_state.t = 0.0;
    out.brake_state.q = start;
    out.brake_state.v = Config(start.size(), 0.0);
    auto orb = brake_start(start, sys, 1.0, opts.propagate);
    out.orbit = std::move(orb.forward);
    out.verify_distance = 0.0;
    return out;
  }

  // radial initialization: boundary lies outward along the scaling ray
  std::vector<Config> nodes = detail::init_boundary_chain(
      start, sys, level.h, opts.band_tol, opts.n_nodes);

  // two rounds: barrier-on descent, then a penalty-free polish
  auto project = [&](std::vector<Config>& chain) {
    for (std::size_t i = 1; i + 1 < chain.size(); ++i)
      detail::clamp_to_hill(chain[i], sys, level.h);
    chain.back() =
        scale_to_level(chain.back(), sys, level.h * (1.0 + opts.band_tol));
  };
  for (int round = 0; round < 2; ++round)
    detail::descend_chain(nodes, sys, level.h, r_pen,
                          round == 0 ? opts.barrier_w : 0.0, 0.1 * shell,
                          opts.max_iters, opts.grad_tol, project);

  double r_chain = std::numeric_limits<double>::infinity();
  for (const Config& q : nodes)
    r_chain = std::min(r_chain, min_pair_distance(q, sys));
  out.collision_flagged = r_chain < r_pen;
  out.path = make_jm_path(nodes, sys, level, 10.0 * opts.band_tol);
  out.path.tag_end = EndpointTag::brake_point;
  if (out.collision_flagged) out.path.tag_end = EndpointTag::collision_capped;

  // time budget for the re-integrated orbit: dt = ds / (2(U - h)) on-shell
  double t_budget = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    Config mid(nodes[i].size());
    for (std::size_t j = 0; j < mid.size(); ++j)
      mid[j] = 0.5 * (nodes[i][j] + nodes[i + 1][j]);
    // floor the conformal factor: boundary-hugging nodes would otherwise
    // inflate the budget without bound (dt ~ ds / sqrt(c) near the band)
    double c = std::max(0.01 * level.h, 2.0 * (potential_U(mid, sys) - level.h));
    t_budget += mdist(nodes[i], nodes[i + 1], sys) / std::sqrt(c);
  }
  double t_max = opts.shoot_t_max > 0.0 ? opts.shoot_t_max
                                        : std::min(3.0 * t_budget + 1.0, 100.0);

  // shooting polish over the boundary manifold: minimize the miss distance
  // of the re-integrated brake solution to q0
  PropagateOptions popts = opts.propagate;
  popts.level_h = level.h;
  // captured-binary trials would otherwise grind tiny steps forever; the cap
  // truncates them (their miss value is hopeless anyway) and bounds memory
  popts.max_steps = std::min<std::size_t>(popts.max_steps, 200'000);
  auto miss = [&](const Config& qb) {
    State s0;
    s0.q = qb;
    s0.v = Config(qb.size(), 0.0);
    Trajectory traj;
    try {
      traj = propagate(s0, sys, t_max, popts);
    } catch (const std::domain_error&) {
      return std::numeric_limits<double>::max();
    }
    double best = std::numeric_limits<double>::max();
    double t0 = traj.t_begin(), t1 = traj.t_end();
    const int n = 400;
    int besti = 0;
    for (int i = 0; i <= n; ++i) {
      double t = t0 + (t1 - t0) * i / n;
      double d = mdist(traj.state_at(t).q, start, sys);
      if (d < best) {
        best = d;
        besti = i;
      }
    }
    // golden-section polish of the closest pass
    double lo = t0 + (t1 - t0) * std::max(0, besti - 1) / n;
    double hi = t0 + (t1 - t0) * std::min(n, besti + 1) / n;
    const double gr = 0.6180339887498949;
    auto D = [&](double tt) { return mdist(traj.state_at(tt).q, start, sys); };
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = D(x1), f2 = D(x2);
    for (int it = 0; it < 50; ++it) {
      if (f1 < f2) {
        hi = x2; x2 = x1; f2 = f1; x1 = hi - gr * (hi - lo); f1 = D(x1);
      } else {
        lo = x1; x1 = x2; f1 = f2; x2 = lo + gr * (hi - lo); f2 = D(x2);
      }
    }
    out.verify_time = 0.5 * (lo + hi);
    return D(out.verify_time);
  };

  Config qb0 = nodes.back();
  auto chart = [&](const std::vector<double>& u) {
    Config q = qb0;
    for (std::size_t j = 0; j < q.size(); ++j) q[j] += shell * u[j];
    com_normalize(q, sys);
    return scale_to_level(q, sys, level.h);
  };
  auto objective = [&](const std::vector<double>& u) { return miss(chart(u)); };
  std::vector<double> z0(qb0.size(), 0.0);
  auto res = nelder_mead(objective, z0, opts.shoot_step, 1e-14, 1e-12,
                         opts.shoot_evals);
  // multi-scale and perturbed restarts: the miss landscape has narrow
  // valleys and a stuck simplex needs re-seeding to reach the tight pass
  const double restart_scales[] = {0.05, 5.0, 0.01, 0.3};
  for (double sc : restart_scales) {
    if (res.f <= 1e-5 * shell) break;
    auto r2 = nelder_mead(objective, res.x, sc * opts.shoot_step, 1e-14, 1e-12,
                          opts.shoot_evals);
    if (r2.f < res.f) res = r2;
  }
  Rng restart_rng(7771);
  for (int k = 0; k < 6 && res.f > 1e-5 * shell; ++k) {
    std::vector<double> zk = res.x;
    double amp = (k < 3 ? 10.0 : 100.0) * opts.shoot_step;
    for (double& z : zk) z += amp * restart_rng.normal();
    auto r2 = nelder_mead(objective, zk, amp, 1e-14, 1e-12, opts.shoot_evals);
    if (r2.f < 1e-5 * shell)
      r2 = nelder_mead(objective, r2.x, 0.01 * opts.shoot_step, 1e-14, 1e-12,
                       opts.shoot_evals);
    if (r2.f < res.f) res = r2;
  }

  Config qb = chart(res.x);
  out.brake_state.t = 0.0;
  out.brake_state.q = qb;
  out.brake_state.v = Config(qb.size(), 0.0);
  out.verify_distance = miss(qb);
  out.orbit = propagate(out.brake_state, sys, t_max, popts);
  out.converged = std::isfinite(out.verify_distance);
  return out;
}

struct DiameterSample {
  double max_length = 0.0;
  std::vector<double> lengths;  // locally minimized pair distances
  int failed = 0;
};

namespace detail {

// length-only variant of the boundary descent (no re-integration polish)
inline double boundary_chain_length(const Config& q0, const MassSystem& sys,
                                    const EnergyLevel& level,
                                    const GeodesicOptions& opts) {
  Config start = q0;
  com_normalize(start, sys);
  double shell = std::sqrt(moment_I(start, sys));
  double r_pen = opts.r_pen * shell;
  std::vector<Config> nodes =
      init_boundary_chain(start, sys, level.h, opts.band_tol, opts.n_nodes);
  auto project = [&](std::vector<Config>& chain) {
    for (std::size_t i = 1; i + 1 < chain.size(); ++i)
      clamp_to_hill(chain[i], sys, level.h);
    chain.back() =
        scale_to_level(chain.back(), sys, level.h * (1.0 + opts.band_tol));
  };
  descend_chain(nodes, sys, level.h, r_pen, opts.barrier_w, 0.1 * shell,
                opts.max_iters, opts.grad_tol, project);
  descend_chain(nodes, sys, level.h, r_pen, 0.0, 0.1 * shell, opts.max_iters,
                opts.grad_tol, project);
  return jm_length(nodes, sys, level.h, 10.0 * opts.band_tol);
}

// locally minimized length between two fixed interior points: direct chain
// descent, compared against the route through the collapsed boundary point
inline double pair_distance_jm(const Config& qa, const Config& qb,
                               const MassSystem& sys, const EnergyLevel& level,
                               GeodesicOptions opts) {
  int M = opts.n_nodes;
  std::vector<Config> nodes(M + 1);
  for (int i = 0; i <= M; ++i) {
    double s = double(i) / M;
    nodes[i].resize(qa.size());
    for (std::size_t j = 0; j < qa.size(); ++j)
      nodes[i][j] = (1.0 - s) * qa[j] + s * qb[j];
    clamp_to_hill(nodes[i], sys, level.h);
  }
  double shell = std::sqrt(moment_I(qa, sys));
  double r_pen = opts.r_pen * shell;
  auto project = [&](std::vector<Config>& chain) {
    for (std::size_t i = 1; i + 1 < chain.size(); ++i)
      clamp_to_hill(chain[i], sys, level.h);
    chain.back() = qb;  // both endpoints fixed
  };
  descend_chain(nodes, sys, level.h, r_pen, opts.barrier_w, 0.1 * shell,
                opts.max_iters, opts.grad_tol, project);
  descend_chain(nodes, sys, level.h, r_pen, 0.0, 0.1 * shell, opts.max_iters,
                opts.grad_tol, project);
  double direct = jm_length(nodes, sys, level.h, 10.0 * opts.band_tol);

  double via_boundary;
  try {
    via_boundary = boundary_chain_length(qa, sys, level, opts) +
                   boundary_chain_length(qb, sys, level, opts);
  } catch (const std::exception&) {
    via_boundary = std::numeric_limits<double>::infinity();
  }
  return std::min(direct, via_boundary);
}

}  // namespace detail

// empirical diameter of the completed Hill region: random interior pairs
// drawn on shells via the scaling map, locally minimized connecting lengths;
// evidence only, not a certified bound
inline DiameterSample diameter_sample(const MassSystem& sys, const EnergyLevel& level,
                                      int n_pairs, std::uint64_t seed = 1,
                                      double u_hi_factor = 20.0,
                                      GeodesicOptions opts = {}) {
  DiameterSample out;
  Rng rng(seed);
  std::size_t dof = sys.n() * sys.dim;
  auto draw = [&]() {
    for (int tries = 0; tries < 200; ++tries) {
      Config q(dof);
      for (double& x : q) x = rng.normal();
      com_normalize(q, sys);
      if (min_pair_distance(q, sys) < 0.05) continue;
      double c = level.h * std::exp(rng.uniform(std::log(1.02), std::log(u_hi_factor)));
      return scale_to_level(q, sys, c);
    }
    throw std::runtime_error("diameter_sample: could not draw a shape");
  };
  for (int i = 0; i < n_pairs; ++i) {
    try {
      double d = detail::pair_distance_jm(draw(), draw(), sys, level, opts);
      out.lengths.push_back(d);
      out.max_length = std::max(out.max_length, d);
    } catch (const std::exception&) {
      ++out.failed;
    }
  }
  return out;
}

struct MountainPassProfile {
  double lambda_star = 0.0;
  double max_length = 0.0;
  bool argmax_crosses_virial = false;
  std::vector<std::pair<double, double>> samples;  // (lambda, length)
};

// scan a loop family over lambda in (0, 1], refine the interior max, and
// report whether the longest loop meets the virial surface U = 2h
inline MountainPassProfile mountain_pass_profile(
    const std::function<std::vector<Config>(double)>& family, const MassSystem& sys,
    const EnergyLevel& level, int grid = 40, double lambda_min = 1e-4) {
  MountainPassProfile out;
  auto L = [&](double lam) { return jm_length(family(lam), sys, level.h); };

  double best_l = 0.0, best_lam = lambda_min;
  for (int i = 0; i <= grid; ++i) {
    double lam = lambda_min + (1.0 - lambda_min) * i / grid;
    double l = L(lam);
    out.samples.emplace_back(lam, l);
    if (l > best_l) {
      best_l = l;
      best_lam = lam;
    }
  }
  double l_left = out.samples.front().second;
  double l_right = out.samples.back().second;
  if (l_left > 1e-3 * best_l || l_right > 1e-3 * best_l)
    throw std::invalid_argument("mountain_pass_profile: endpoint valleys missing");

  // golden-section refinement around the grid max
  double dl = (1.0 - lambda_min) / grid;
  double lo = std::max(lambda_min, best_lam - dl), hi = std::min(1.0, best_lam + dl);
  const double gr = 0.6180339887498949;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = L(x1), f2 = L(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 > f2) {
      hi = x2; x2 = x1; f2 = f1; x1 = hi - gr * (hi - lo); f1 = L(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2; x2 = lo + gr * (hi - lo); f2 = L(x2);
    }
  }
  out.lambda_star = 0.5 * (lo + hi);
  out.max_length = L(out.lambda_star);

  double u_lo = std::numeric_limits<double>::infinity(), u_hi = 0.0;
  for (const Config& q : family(out.lambda_star)) {
    double u = potential_U(q, sys);
    u_lo = std::min(u_lo, u);
    u_hi = std::max(u_hi, u);
  }
  // touching counts: the argmax of a constant-U family sits on the surface
  double u_star = 2.0 * level.h;
  out.argmax_crosses_virial =
      u_lo <= u_star * (1.0 + 1e-6) && u_hi >= u_star * (1.0 - 1e-6);
  return out;
}

// the canonical loop family of the mountain-pass construction: a loop on the
// Hill boundary scaled toward total collision
inline std::function<std::vector<Config>(double)> scaling_family(
    std::vector<Config> boundary_loop, const MassSystem& sys, const EnergyLevel& level) {
  for (Config& q : boundary_loop) q = scale_to_level(q, sys, level.h);
  return [boundary_loop](double lam) {
    std::vector<Config> loop = boundary_loop;
    for (Config& q : loop)
      for (double& x : q) x *= lam;
    return loop;
  };
}

}  // namespace vlab
