// vlab: batch scenario runner and per-module report emitter.
// Exit codes: 0 success, 2 validation error, 3 I/O error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vlab/brake.hpp"
#include "vlab/families.hpp"
#include "vlab/io.hpp"
#include "vlab/jm.hpp"
#include "vlab/rng.hpp"
#include "vlab/scenario.hpp"
#include "vlab/shape.hpp"
#include "vlab/virial.hpp"

namespace {

using namespace vlab;

constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

struct Common {
  std::uint64_t seed = 1;
  double tol = 0.0;  // 0: per-command default
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const char* default_out) {
  cmd->set_help_flag("--help", "print help");  // leave --h free for the energy level
  c.out = default_out;
  cmd->add_option("--seed", c.seed, "deterministic seed");
  cmd->add_option("--tol", c.tol, "integrator rtol = atol override");
  cmd->add_option("--out", c.out, "output directory");
}

struct SystemFlags {
  std::vector<double> masses;
  double G = 1.0;
  int dim = 2;
  double alpha = 1.0;

  MassSystem build() const {
    MassSystem sys;
    sys.masses = masses;
    sys.G = G;
    sys.dim = dim;
    sys.alpha = alpha;
    sys.validate();
    return sys;
  }
};

void add_system(CLI::App* cmd, SystemFlags& s, bool required = true) {
  auto* m = cmd->add_option("--masses", s.masses, "body masses");
  if (required) m->required();
  cmd->add_option("--G", s.G, "gravitational constant");
  cmd->add_option("--dim", s.dim, "spatial dimension (2 or 3)");
  cmd->add_option("--alpha", s.alpha, "potential homogeneity degree");
}

// provenance fingerprints the resolved option record so reruns are auditable
Provenance make_prov(const std::string& name, const json& resolved, std::uint64_t seed,
                     double rtol, double atol) {
  Provenance p;
  p.scenario = name;
  p.hash = hex64(fnv1a(resolved.dump()));
  p.seed = seed;
  p.rtol = rtol;
  p.atol = atol;
  return p;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

void emit(const std::string& dir, const std::string& name, const std::string& content) {
  ensure_dir(dir);
  write_file(dir + "/" + name, content);
  std::cout << dir << "/" << name << "\n";
}

json state_json(const State& s) {
  return json{{"t", s.t}, {"q", s.q}, {"v", s.v}};
}

Config parse_point_file(const std::string& path, const MassSystem& sys) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError("--point " + path + ": " + e.what());
  }
  if (!j.contains("q") || !j["q"].is_array())
    throw ScenarioError("--point " + path + ": expected a JSON object with a \"q\" array");
  Config q = j["q"].get<Config>();
  if (q.size() != sys.dof())
    throw ScenarioError("--point " + path + ": expected " + std::to_string(sys.dof()) +
                        " coordinates");
  return q;
}

// random CoM-normalized shape with no tight pair, in units of the shell radius
Config random_shape(Rng& rng, const MassSystem& sys) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Config q(sys.dof());
    for (double& x : q) x = rng.normal();
    com_normalize(q, sys);
    double scale = std::sqrt(moment_I(q, sys) / sys.total_mass());
    if (min_pair_distance(q, sys) >= 0.2 * scale) return q;
  }
  throw std::runtime_error("random_shape: rejection sampling failed");
}

// ---- run ----

int cmd_run(const std::string& path, const Common& c, bool seed_set, int jobs) {
  Scenario sc = load_scenario(path);
  if (seed_set) sc.seed = c.seed;
  if (c.tol > 0.0) sc.rtol = sc.atol = c.tol;
  sc.resolved = canonical_text(sc);
  std::string out = c.out.empty() ? "out/" + sc.name : c.out;
  for (const std::string& f : run_scenario(sc, out, jobs)) std::cout << f << "\n";
  return 0;
}

// ---- simulate ----

struct SimulateArgs {
  SystemFlags sys;
  Common c;
  std::vector<double> q, v;
  double t_final = 10.0;
  double h = 0.0;  // 0: no energy level (no virial events/report)
  double r_prox = 1e-4;
  int samples = 200;
};

int cmd_simulate(const SimulateArgs& a) {
  MassSystem sys = a.sys.build();
  if (a.q.size() != sys.dof()) throw ScenarioError("--q: expected " + std::to_string(sys.dof()) + " coordinates");
  Config v = a.v;
  if (v.empty()) v.assign(sys.dof(), 0.0);
  if (v.size() != sys.dof()) throw ScenarioError("--v: expected " + std::to_string(sys.dof()) + " coordinates");

  double rtol = a.c.tol > 0 ? a.c.tol : 1e-10;
  PropagateOptions opts;
  opts.rtol = opts.atol = rtol;
  opts.r_prox = a.r_prox;
  opts.event_mask = kAllEvents;
  if (a.h > 0.0) opts.level_h = a.h;

  State s0;
  s0.q = a.q;
  s0.v = v;
  if (a.h > 0.0) {
    double E = energy_E(s0, sys);
    if (std::abs(E + a.h) > 1e-6 * std::max(1.0, a.h))
      throw ScenarioError("--h: state energy is " + fmt(E) + ", expected " + fmt(-a.h));
  }
  Trajectory traj = propagate(s0, sys, a.t_final, opts);

  json resolved = {{"masses", sys.masses}, {"G", sys.G},   {"dim", sys.dim},
                   {"alpha", sys.alpha},   {"q", a.q},     {"v", v},
                   {"t_final", a.t_final}, {"h", a.h},     {"r_prox", a.r_prox},
                   {"samples", a.samples}, {"rtol", rtol}};
  Provenance prov = make_prov("simulate", resolved, a.c.seed, rtol, rtol);

  std::ostringstream csv;
  write_trajectory_csv(csv, traj, a.samples, prov);
  emit(a.c.out, "trajectory.csv", csv.str());

  json rep;
  rep["provenance"] = prov.to_json();
  rep["resolved"] = resolved;
  rep["stop"] = stop_reason_name(traj.stop);
  rep["energy_drift"] = traj.max_energy_drift;
  rep["closest_approach"] = traj.closest_approach;
  if (a.h > 0.0) rep["virial"] = virial_report_json(virial_report(traj, EnergyLevel(a.h)));
  rep["events"] = events_json(traj.events);
  emit(a.c.out, "report.json", rep.dump(2) + "\n");
  return 0;
}

// ---- brake-search ----

struct BrakeSearchArgs {
  SystemFlags sys;
  Common c;
  std::vector<double> q;
  double h = 1.0;
  double t_max = 30.0;
  double sim_step = 0.02;
  int max_evals = 4000;
};

int cmd_brake_search(const BrakeSearchArgs& a) {
  MassSystem sys = a.sys.build();
  if (a.q.size() != sys.dof()) throw ScenarioError("--q: expected " + std::to_string(sys.dof()) + " coordinates");
  if (!(a.h > 0.0)) throw ScenarioError("--h: must be positive");

  double rtol = a.c.tol > 0 ? a.c.tol : 1e-12;
  BrakeShootOptions opts;
  opts.t_max = a.t_max;
  opts.sim_step = a.sim_step;
  opts.max_evals = a.max_evals;
  opts.propagate.rtol = opts.propagate.atol = rtol;
  opts.propagate.r_prox = 1e-5;

  PeriodicBrakeOrbit orb = periodic_brake_shoot(a.q, sys, EnergyLevel(a.h), opts);

  json resolved = {{"masses", sys.masses}, {"G", sys.G},         {"dim", sys.dim},
                   {"alpha", sys.alpha},   {"q", a.q},           {"h", a.h},
                   {"t_max", a.t_max},     {"sim_step", a.sim_step},
                   {"max_evals", a.max_evals}, {"rtol", rtol}};
  Provenance prov = make_prov("brake-search", resolved, a.c.seed, rtol, rtol);

  json rep;
  rep["provenance"] = prov.to_json();
  rep["resolved"] = resolved;
  rep["converged"] = orb.converged;
  rep["q_star"] = orb.q_star;
  rep["period"] = orb.period;
  rep["residual"] = orb.residual;
  rep["closure"] = orb.closure;
  rep["avg_U"] = orb.avg_U;
  rep["virial_crossings"] = orb.virial_crossings;
  emit(a.c.out, "brake.json", rep.dump(2) + "\n");
  return 0;
}

// ---- virial-report ----

struct TrajTable {
  std::vector<double> t, K, U;
};

TrajTable read_trajectory_csv(const std::string& path) {
  std::istringstream is(read_file(path));
  std::string line;
  int col_t = -1, col_K = -1, col_U = -1;
  TrajTable tab;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (col_t < 0) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "t") col_t = static_cast<int>(i);
        if (cells[i] == "K") col_K = static_cast<int>(i);
        if (cells[i] == "U") col_U = static_cast<int>(i);
      }
      if (col_t < 0 || col_K < 0 || col_U < 0)
        throw ScenarioError("--traj " + path + ": header must contain t, K and U columns");
      continue;
    }
    if (static_cast<int>(cells.size()) <= std::max({col_t, col_K, col_U}))
      throw ScenarioError("--traj " + path + ": short row");
    tab.t.push_back(std::strtod(cells[col_t].c_str(), nullptr));
    tab.K.push_back(std::strtod(cells[col_K].c_str(), nullptr));
    tab.U.push_back(std::strtod(cells[col_U].c_str(), nullptr));
  }
  if (tab.t.size() < 2) throw ScenarioError("--traj " + path + ": need at least 2 samples");
  return tab;
}

struct VirialReportArgs {
  Common c;
  std::string traj;
  double h = 1.0;
  std::string window = "full";
};

int cmd_virial_report(const VirialReportArgs& a) {
  if (!(a.h > 0.0)) throw ScenarioError("--h: must be positive");
  TrajTable tab = read_trajectory_csv(a.traj);

  double t_lo = tab.t.front(), t_hi = tab.t.back();
  if (a.window != "full") {
    std::stringstream ss(a.window);
    char comma = 0;
    if (!(ss >> t_lo >> comma >> t_hi) || comma != ',')
      throw ScenarioError("--window: expected 'full' or 't_lo,t_hi'");
  }

  // trapezoid averages and sampled diagnostics over the window
  double int_K = 0.0, int_U = 0.0;
  double u_min = std::numeric_limits<double>::infinity(), u_max = 0.0;
  int crossings = 0;
  double prev_sign = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < tab.t.size(); ++i) {
    if (tab.t[i] < t_lo || tab.t[i] > t_hi) continue;
    ++used;
    u_min = std::min(u_min, tab.U[i]);
    u_max = std::max(u_max, tab.U[i]);
    double sign = tab.U[i] - 2.0 * a.h > 0 ? 1.0 : -1.0;
    if (prev_sign != 0.0 && sign != prev_sign) ++crossings;
    prev_sign = sign;
    if (i + 1 < tab.t.size() && tab.t[i + 1] <= t_hi) {
      double dt = tab.t[i + 1] - tab.t[i];
      int_K += 0.5 * dt * (tab.K[i] + tab.K[i + 1]);
      int_U += 0.5 * dt * (tab.U[i] + tab.U[i + 1]);
    }
  }
  if (used < 2) throw ScenarioError("--window: fewer than 2 samples inside the window");
  double span = t_hi - t_lo;

  json resolved = {{"traj", a.traj}, {"h", a.h}, {"window", a.window}};
  Provenance prov = make_prov("virial-report", resolved, a.c.seed, 0.0, 0.0);

  json rep;
  rep["provenance"] = prov.to_json();
  rep["resolved"] = resolved;
  rep["source"] = "sampled-csv";
  rep["window"] = {{"t_lo", t_lo}, {"t_hi", t_hi}};
  rep["avg_K"] = int_K / span;
  rep["avg_U"] = int_U / span;
  rep["residual"] = 2.0 * int_K / span - int_U / span;
  rep["crossings"] = crossings;
  rep["thickness"] = std::max(std::abs(2.0 * a.h / u_min - 1.0),
                              std::abs(2.0 * a.h / u_max - 1.0));
  emit(a.c.out, "virial.json", rep.dump(2) + "\n");
  return 0;
}

// ---- jm-minimize ----

struct JmMinimizeArgs {
  SystemFlags sys;
  Common c;
  std::string point;
  std::vector<double> q;
  double h = 1.0;
  int nodes = 48;
};

int cmd_jm_minimize(const JmMinimizeArgs& a) {
  MassSystem sys = a.sys.build();
  if (!(a.h > 0.0)) throw ScenarioError("--h: must be positive");
  Config q0;
  if (!a.point.empty())
    q0 = parse_point_file(a.point, sys);
  else if (!a.q.empty())
    q0 = a.q;
  else
    throw ScenarioError("--point or --q: an interior point is required");
  if (q0.size() != sys.dof()) throw ScenarioError("--q: expected " + std::to_string(sys.dof()) + " coordinates");

  GeodesicOptions opts;
  opts.n_nodes = a.nodes;
  if (a.c.tol > 0) opts.propagate.rtol = opts.propagate.atol = a.c.tol;
  GeodesicResult res = geodesic_to_brake(q0, sys, EnergyLevel(a.h), opts);

  json resolved = {{"masses", sys.masses}, {"G", sys.G},   {"dim", sys.dim},
                   {"alpha", sys.alpha},   {"q", q0},      {"h", a.h},
                   {"nodes", a.nodes}};
  Provenance prov = make_prov("jm-minimize", resolved, a.c.seed,
                              opts.propagate.rtol, opts.propagate.atol);

  json rep;
  rep["provenance"] = prov.to_json();
  rep["resolved"] = resolved;
  rep["converged"] = res.converged;
  rep["collision_flagged"] = res.collision_flagged;
  rep["length"] = res.path.length;
  rep["verify_distance"] = res.verify_distance;
  rep["verify_time"] = res.verify_time;
  rep["brake_state"] = state_json(res.brake_state);
  rep["path"] = jm_path_json(res.path);
  emit(a.c.out, "path.json", rep.dump(2) + "\n");
  return 0;
}

// ---- family ----

struct FamilyArgs {
  SystemFlags sys;
  Common c;
  std::string kind = "lagrange";
  std::vector<int> ordering = {0, 1, 2};
  double h = 1.0;
  double J = 0.0;
  double J_frac = std::numeric_limits<double>::quiet_NaN();
  int scan = 0;
};

int cmd_family(const FamilyArgs& a) {
  MassSystem sys = a.sys.build();
  if (!(a.h > 0.0)) throw ScenarioError("--h: must be positive");
  EnergyLevel level(a.h);

  CentralConfiguration cc;
  if (a.kind == "lagrange") {
    cc = lagrange_cc(sys);
  } else if (a.kind == "euler") {
    if (a.ordering.size() != 3) throw ScenarioError("--ordering: expected three body indices");
    cc = euler_cc(sys, {a.ordering[0], a.ordering[1], a.ordering[2]});
  } else if (a.kind == "kepler") {
    if (sys.n() != 2) throw ScenarioError("--kind kepler: needs two bodies");
    cc = detail::make_cc({0.0, 0.0, 1.0, 0.0}, sys);
  } else {
    throw ScenarioError("--kind: must be lagrange | euler | kepler");
  }

  double j_max = homographic_J_max(cc, sys, level);
  double J = std::isnan(a.J_frac) ? a.J : a.J_frac * j_max;

  json resolved = {{"masses", sys.masses}, {"G", sys.G},   {"dim", sys.dim},
                   {"alpha", sys.alpha},   {"kind", a.kind}, {"h", a.h},
                   {"J", J},               {"scan", a.scan}};
  Provenance prov = make_prov("family", resolved, a.c.seed, 0.0, 0.0);

  HomographicOrbit orb = homographic_orbit(cc, sys, J, level);
  json rep;
  rep["provenance"] = prov.to_json();
  rep["resolved"] = resolved;
  rep["cc"] = {{"q", cc.q}, {"lambda", cc.lambda}, {"residual", cc.residual}};
  rep["J_max"] = j_max;
  rep["member"] = {{"J", orb.J},         {"e", orb.e},
                   {"k", orb.k},         {"period", orb.period},
                   {"u_min", orb.u_min}, {"u_max", orb.u_max},
                   {"initial", state_json(orb.initial)}};
  emit(a.c.out, "family.json", rep.dump(2) + "\n");

  if (a.scan > 1) {
    std::ostringstream csv;
    write_csv_header(csv, prov);
    csv << "J,e,k,period,u_min,u_max\n";
    for (int i = 0; i < a.scan; ++i) {
      double Ji = j_max * i / static_cast<double>(a.scan - 1);
      HomographicOrbit m = homographic_orbit(cc, sys, Ji, level);
      csv << fmt(m.J) << ',' << fmt(m.e) << ',' << fmt(m.k) << ',' << fmt(m.period)
          << ',' << fmt(m.u_min) << ',' << fmt(m.u_max) << "\n";
    }
    emit(a.c.out, "family_scan.csv", csv.str());
  }
  return 0;
}

// ---- escape-scan ----

struct EscapeScanArgs {
  Common c;
  double m = 1.0, m3 = 1.0;
  double G = 1.0;
  double a_bin = 1.0;
  double u_threshold = 0.0;  // 0: default 2m/a
  double horizon = 200.0;
  int count = 16;
};

int cmd_escape_scan(const EscapeScanArgs& a) {
  MassSystem sys;
  sys.masses = {a.m, a.m, a.m3};
  sys.G = a.G;
  sys.dim = 3;
  sys.validate();
  if (!(a.a_bin > 0.0)) throw ScenarioError("--a: must be positive");
  if (a.count < 1) throw ScenarioError("--count: must be >= 1");
  double u_threshold = a.u_threshold > 0.0 ? a.u_threshold : 2.0 * a.m / a.a_bin;

  json resolved = {{"m", a.m},           {"m3", a.m3},       {"G", a.G},
                   {"a", a.a_bin},       {"count", a.count}, {"horizon", a.horizon},
                   {"u_threshold", u_threshold}};
  Provenance prov = make_prov("escape-scan", resolved, a.c.seed, 0.0, 0.0);

  // binary on a circle of radius a (third body far away): ell for the
  // isolated pair's circular orbit
  double ell = 2.0 * a.m * a.a_bin * a.a_bin *
               std::sqrt(a.G * a.m / (4.0 * a.a_bin * a.a_bin * a.a_bin));

  std::ostringstream os;
  int survivors = 0;
  for (int i = 0; i < a.count; ++i) {
    Rng rng(a.c.seed + static_cast<std::uint64_t>(i));
    IsoscelesState seed;
    seed.rho = a.a_bin;
    seed.rho_dot = 0.0;
    seed.ell = ell;
    seed.eta = rng.uniform(3.0, 10.0) * a.a_bin;
    double v_ref = std::sqrt(4.0 * a.G * a.m / seed.eta);
    seed.eta_dot = rng.uniform(-1.5, 1.5) * v_ref;

    IsoscelesScanRecord rec =
        isosceles_escape_probe(seed, sys, u_threshold, a.horizon,
                               a.c.tol > 0 ? a.c.tol : 1e-9);
    if (rec.stayed_above && rec.escape_forward && rec.escape_backward) ++survivors;
    json j;
    j["index"] = i;
    j["provenance"] = prov.to_json();
    j["seed"] = {{"rho", seed.rho},         {"eta", seed.eta},
                 {"rho_dot", seed.rho_dot}, {"eta_dot", seed.eta_dot},
                 {"ell", seed.ell}};
    j["min_U"] = rec.min_U;
    j["stayed_above"] = rec.stayed_above;
    j["escape_forward"] = rec.escape_forward;
    j["escape_backward"] = rec.escape_backward;
    os << j.dump() << "\n";
  }
  emit(a.c.out, "escape_catalog.jsonl", os.str());
  std::cout << "candidates: " << survivors << "/" << a.count << "\n";
  return 0;
}

// ---- shape-export ----

struct ShapeExportArgs {
  SystemFlags sys;
  Common c;
  double h = 1.0;
  int resolution = 64;
  double extent = 8.0;
  std::vector<double> q;  // optional trajectory start for a shape-space trace
  double t_final = 0.0;
};

int cmd_shape_export(const ShapeExportArgs& a) {
  MassSystem sys = a.sys.build();
  if (!(a.h > 0.0)) throw ScenarioError("--h: must be positive");

  json resolved = {{"masses", sys.masses}, {"G", sys.G},
                   {"h", a.h},             {"resolution", a.resolution},
                   {"extent", a.extent},   {"q", a.q},
                   {"t_final", a.t_final}};
  Provenance prov = make_prov("shape-export", resolved, a.c.seed, 0.0, 0.0);

  Mesh mesh = hill_mesh(sys, a.h, a.resolution, a.extent);
  std::ostringstream obj;
  write_obj(mesh, obj);
  emit(a.c.out, "hill_boundary.obj", obj.str());

  if (!a.q.empty()) {
    if (a.q.size() != sys.dof()) throw ScenarioError("--q: expected " + std::to_string(sys.dof()) + " coordinates");
    if (!(a.t_final != 0.0)) throw ScenarioError("--t: required with --q");
    double rtol = a.c.tol > 0 ? a.c.tol : 1e-10;
    PropagateOptions opts;
    opts.rtol = opts.atol = rtol;
    State s0;
    s0.q = scale_to_level(a.q, sys, a.h);
    s0.v = Config(sys.dof(), 0.0);
    Trajectory traj = propagate(s0, sys, a.t_final, opts);

    std::ostringstream csv;
    write_csv_header(csv, prov);
    csv << "t,w1,w2,w3,r\n";
    const int n = 2000;
    for (int i = 0; i <= n; ++i) {
      double t = traj.t_begin() + (traj.t_end() - traj.t_begin()) * i / n;
      ShapePoint p = shape_project(traj.state_at(t).q, sys);
      csv << fmt(t) << ',' << fmt(p.w[0]) << ',' << fmt(p.w[1]) << ','
          << fmt(p.w[2]) << ',' << fmt(p.r) << "\n";
    }
    emit(a.c.out, "shape_trace.csv", csv.str());

    json word = syzygy_word_json(syzygy_sequence(traj));
    word["provenance"] = prov.to_json();
    emit(a.c.out, "syzygies.json", word.dump(2) + "\n");
  }
  return 0;
}

// ---- collar-test ----

struct CollarTestArgs {
  SystemFlags sys;
  Common c;
  std::vector<double> eps;
  double h = 1.0;
  double k_mult = 2.0;
  double t_max = 100.0;
  int ensemble = 32;
};

int cmd_collar_test(const CollarTestArgs& a) {
  MassSystem sys = a.sys.build();
  if (!(a.h > 0.0)) throw ScenarioError("--h: must be positive");
  if (a.eps.empty()) throw ScenarioError("--eps: at least one collar depth required");
  for (double e : a.eps)
    if (!(e > 0.0 && e < a.h)) throw ScenarioError("--eps: depths must lie in (0, h)");
  if (a.ensemble < 1) throw ScenarioError("--ensemble: must be >= 1");
  EnergyLevel level(a.h);
  double rtol = a.c.tol > 0 ? a.c.tol : 1e-10;

  json resolved = {{"masses", sys.masses}, {"G", sys.G},         {"dim", sys.dim},
                   {"h", a.h},             {"eps", a.eps},       {"k_mult", a.k_mult},
                   {"ensemble", a.ensemble}, {"t_max", a.t_max}, {"rtol", rtol}};
  Provenance prov = make_prov("collar-test", resolved, a.c.seed, rtol, rtol);

  std::ostringstream csv;
  write_csv_header(csv, prov);
  csv << "eps,n,exited,median_t,median_t_over_sqrt_eps,max_t\n";
  bool all_exited = true;
  for (std::size_t e = 0; e < a.eps.size(); ++e) {
    double eps = a.eps[e];
    std::vector<double> times;
    int exited = 0;
    for (int i = 0; i < a.ensemble; ++i) {
      Rng rng(a.c.seed + 1000003ull * e + static_cast<std::uint64_t>(i));
      // energy -h state at depth eps: U = h + eps, K = eps along a random
      // CoM-free direction
      State s;
      s.q = scale_to_level(random_shape(rng, sys), sys, a.h + eps);
      Config dir(sys.dof());
      for (double& x : dir) x = rng.normal();
      com_normalize(dir, sys);
      double scale = std::sqrt(2.0 * eps) / mnorm(dir, sys);
      s.v.resize(dir.size());
      for (std::size_t k = 0; k < dir.size(); ++k) s.v[k] = scale * dir[k];

      PropagateOptions opts;
      opts.rtol = opts.atol = rtol;
      CollarExit ex = hill_collar_exit_time(s, sys, level, a.k_mult, a.t_max, opts);
      if (ex.exited) {
        ++exited;
        times.push_back(ex.t_exit);
      } else {
        all_exited = false;
      }
    }
    std::sort(times.begin(), times.end());
    double median = times.empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : times[times.size() / 2];
    double max_t = times.empty() ? std::numeric_limits<double>::quiet_NaN() : times.back();
    csv << fmt(eps) << ',' << a.ensemble << ',' << exited << ',' << fmt(median) << ','
        << fmt(median / std::sqrt(eps)) << ',' << fmt(max_t) << "\n";
  }
  emit(a.c.out, "collar.csv", csv.str());
  std::cout << (all_exited ? "all runs exited" : "counterexample candidates present")
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"N-body laboratory at fixed negative energy"};
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);

  // run
  std::string scenario_path;
  Common run_c;
  int jobs = 1;
  auto* run = app.add_subcommand("run", "run a scenario file");
  run->add_option("scenario", scenario_path, "scenario .toml path")->required();
  add_common(run, run_c, "");
  run->add_option("--jobs", jobs, "ensemble worker count");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "propagate one initial state");
  add_system(simulate, sim.sys);
  add_common(simulate, sim.c, "out/simulate");
  simulate->add_option("--q", sim.q, "initial coordinates")->required();
  simulate->add_option("--v", sim.v, "initial velocities (default: rest)");
  simulate->add_option("--t", sim.t_final, "integration span")->required();
  simulate->add_option("--h", sim.h, "energy level -h (enables virial analysis)");
  simulate->add_option("--r-prox", sim.r_prox, "collision-proximity radius");
  simulate->add_option("--samples", sim.samples, "CSV sample count");

  BrakeSearchArgs bs;
  auto* brake = app.add_subcommand("brake-search", "shoot for a periodic brake orbit");
  add_system(brake, bs.sys);
  add_common(brake, bs.c, "out/brake-search");
  brake->add_option("--q", bs.q, "seed shape (scaled to the Hill boundary)")->required();
  brake->add_option("--h", bs.h, "energy level -h");
  brake->add_option("--t-max", bs.t_max, "shooting horizon");
  brake->add_option("--sim-step", bs.sim_step, "initial simplex scale");
  brake->add_option("--max-evals", bs.max_evals, "objective evaluation budget");

  VirialReportArgs vr;
  auto* virial = app.add_subcommand("virial-report", "report from a trajectory CSV");
  add_common(virial, vr.c, "out/virial-report");
  virial->add_option("--traj", vr.traj, "trajectory CSV (simulate output)")->required();
  virial->add_option("--h", vr.h, "energy level -h");
  virial->add_option("--window", vr.window, "'full' or 't_lo,t_hi'");

  JmMinimizeArgs jm;
  auto* jmm = app.add_subcommand("jm-minimize", "shortest path to the brake point");
  add_system(jmm, jm.sys);
  add_common(jmm, jm.c, "out/jm-minimize");
  jmm->add_option("--point", jm.point, "JSON file with a \"q\" array");
  jmm->add_option("--q", jm.q, "interior point coordinates");
  jmm->add_option("--h", jm.h, "energy level -h");
  jmm->add_option("--nodes", jm.nodes, "path node count");

  FamilyArgs fam;
  auto* family = app.add_subcommand("family", "homographic Keplerian family member");
  add_system(family, fam.sys);
  add_common(family, fam.c, "out/family");
  family->add_option("--kind", fam.kind, "lagrange | euler | kepler");
  family->add_option("--ordering", fam.ordering, "euler ordering (left mid right)");
  family->add_option("--h", fam.h, "energy level -h");
  family->add_option("--J", fam.J, "angular momentum");
  family->add_option("--J-frac", fam.J_frac, "angular momentum as a fraction of J_max");
  family->add_option("--scan", fam.scan, "emit a k(J) table with this many rows");

  EscapeScanArgs esc;
  auto* escape = app.add_subcommand("escape-scan", "isosceles confined-escape candidates");
  add_common(escape, esc.c, "out/escape-scan");
  escape->add_option("--m", esc.m, "binary mass (each)");
  escape->add_option("--m3", esc.m3, "axis-body mass");
  escape->add_option("--G", esc.G, "gravitational constant");
  escape->add_option("--a", esc.a_bin, "binary circle radius");
  escape->add_option("--u-threshold", esc.u_threshold, "confinement floor (default 2m/a)");
  escape->add_option("--horizon", esc.horizon, "two-sided integration horizon");
  escape->add_option("--count", esc.count, "seed count");

  ShapeExportArgs shp;
  auto* shape = app.add_subcommand("shape-export", "Hill boundary mesh and shape traces");
  add_system(shape, shp.sys);
  add_common(shape, shp.c, "out/shape-export");
  shape->add_option("--h", shp.h, "energy level -h");
  shape->add_option("--resolution", shp.resolution, "marching grid resolution");
  shape->add_option("--extent", shp.extent, "half-width of the sampled w box");
  shape->add_option("--q", shp.q, "brake start for a shape-space trace");
  shape->add_option("--t", shp.t_final, "trace integration span");

  CollarTestArgs col;
  auto* collar = app.add_subcommand("collar-test", "Hill-collar exit-time scaling");
  add_system(collar, col.sys);
  add_common(collar, col.c, "out/collar-test");
  collar->add_option("--eps", col.eps, "collar depth (repeatable)");
  collar->add_option("--h", col.h, "energy level -h");
  collar->add_option("--k-mult", col.k_mult, "exit threshold U = h + k_mult * eps");
  collar->add_option("--t-max", col.t_max, "per-run time cap");
  collar->add_option("--ensemble", col.ensemble, "runs per depth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (run->parsed()) return cmd_run(scenario_path, run_c, run->count("--seed") > 0, jobs);
    if (simulate->parsed()) return cmd_simulate(sim);
    if (brake->parsed()) return cmd_brake_search(bs);
    if (virial->parsed()) return cmd_virial_report(vr);
    if (jmm->parsed()) return cmd_jm_minimize(jm);
    if (family->parsed()) return cmd_family(fam);
    if (escape->parsed()) return cmd_escape_scan(esc);
    if (shape->parsed()) return cmd_shape_export(shp);
    if (collar->parsed()) return cmd_collar_test(col);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
