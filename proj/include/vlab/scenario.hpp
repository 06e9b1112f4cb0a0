#pragma once

// Scenario files: a TOML-subset parser (sections, scalars, flat arrays), the
// resolved Scenario record with field-level validation, and a deterministic
// runner that turns a scenario into a bundle of output files.

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "vlab/brake.hpp"
#include "vlab/families.hpp"
#include "vlab/io.hpp"
#include "vlab/rng.hpp"
#include "vlab/shape.hpp"
#include "vlab/virial.hpp"

namespace vlab {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace toml {

struct Value {
  enum class Kind { string, number, boolean, array };
  Kind kind = Kind::number;
  std::string str;
  double num = 0.0;
  bool flag = false;
  std::vector<Value> items;
  int line = 0;
};

using Table = std::map<std::string, Value>;
using Document = std::map<std::string, Table>;

namespace detail {

inline std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// comment starts at the first '#' outside a quoted string
inline std::string drop_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      return false;
  return true;
}

inline Value parse_value(const std::string& text, int line);

inline Value parse_scalar(const std::string& tok, int line) {
  Value v;
  v.line = line;
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
    v.kind = Value::Kind::string;
    v.str = tok.substr(1, tok.size() - 2);
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.kind = Value::Kind::boolean;
    v.flag = tok == "true";
    return v;
  }
  v.kind = Value::Kind::number;
  char* end = nullptr;
  v.num = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty())
    throw ScenarioError("line " + std::to_string(line) + ": bad value '" + tok + "'");
  return v;
}

inline Value parse_value(const std::string& text, int line) {
  std::string tok = strip(text);
  if (tok.empty())
    throw ScenarioError("line " + std::to_string(line) + ": missing value");
  if (tok.front() != '[') return parse_scalar(tok, line);
  if (tok.back() != ']')
    throw ScenarioError("line " + std::to_string(line) + ": unterminated array");
  Value v;
  v.kind = Value::Kind::array;
  v.line = line;
  std::string body = tok.substr(1, tok.size() - 2);
  std::string cur;
  bool in_str = false;
  for (char c : body) {
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      v.items.push_back(parse_scalar(strip(cur), line));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!strip(cur).empty()) v.items.push_back(parse_scalar(strip(cur), line));
  return v;
}

}  // namespace detail

// Sections of key = value lines; values are strings, numbers, booleans or
// single-line flat arrays.  Top-of-file keys land in the "" section.
inline Document parse(const std::string& text) {
  Document doc;
  std::string section;
  doc[section];
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string s = detail::strip(detail::drop_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3)
        throw ScenarioError("line " + std::to_string(line) + ": malformed section header");
      section = detail::strip(s.substr(1, s.size() - 2));
      if (!detail::valid_key(section))
        throw ScenarioError("line " + std::to_string(line) + ": bad section name '" +
                            section + "'");
      doc[section];
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ScenarioError("line " + std::to_string(line) + ": expected key = value");
    std::string key = detail::strip(s.substr(0, eq));
    if (!detail::valid_key(key))
      throw ScenarioError("line " + std::to_string(line) + ": bad key '" + key + "'");
    if (doc[section].count(key))
      throw ScenarioError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    doc[section][key] = detail::parse_value(s.substr(eq + 1), line);
  }
  return doc;
}

}  // namespace toml

enum class InitKind { state, brake, family, ensemble };

struct Scenario {
  std::string name;
  MassSystem sys;
  double h = 1.0;

  InitKind init = InitKind::state;
  Config q, v;                    // state / brake
  std::string family = "lagrange";  // family: lagrange | euler | kepler
  std::array<int, 3> ordering{0, 1, 2};
  double J = 0.0;
  bool J_is_frac = false;  // J given as a fraction of the elliptic maximum
  std::uint64_t seed = 1;
  int count = 1;                  // ensemble size

  double t_final = 10.0;
  double rtol = 1e-10, atol = 1e-10;
  double r_prox = 1e-4;

  bool virial_analysis = true;
  bool syzygy_analysis = false;

  int samples = 200;
  bool trajectory_csv = true;
  bool report_json = true;

  std::string resolved;  // canonical text, fingerprinted into every output
};

namespace detail {

inline std::string field(const std::string& sect, const std::string& key) {
  return sect.empty() ? key : "[" + sect + "]." + key;
}

struct SectionReader {
  const std::string sect;
  const toml::Table& table;
  mutable std::map<std::string, bool> seen;

  const toml::Value* find(const std::string& key) const {
    auto it = table.find(key);
    if (it == table.end()) return nullptr;
    seen[key] = true;
    return &it->second;
  }

  const toml::Value& require(const std::string& key) const {
    const toml::Value* v = find(key);
    if (!v) throw ScenarioError(field(sect, key) + ": required key missing");
    return *v;
  }

  double number(const std::string& key, double fallback) const {
    const toml::Value* v = find(key);
    if (!v) return fallback;
    if (v->kind != toml::Value::Kind::number)
      throw ScenarioError(field(sect, key) + ": expected a number");
    return v->num;
  }

  double number(const std::string& key) const {
    const toml::Value& v = require(key);
    if (v.kind != toml::Value::Kind::number)
      throw ScenarioError(field(sect, key) + ": expected a number");
    return v.num;
  }

  bool boolean(const std::string& key, bool fallback) const {
    const toml::Value* v = find(key);
    if (!v) return fallback;
    if (v->kind != toml::Value::Kind::boolean)
      throw ScenarioError(field(sect, key) + ": expected true or false");
    return v->flag;
  }

  std::string string(const std::string& key, const std::string& fallback) const {
    const toml::Value* v = find(key);
    if (!v) return fallback;
    if (v->kind != toml::Value::Kind::string)
      throw ScenarioError(field(sect, key) + ": expected a string");
    return v->str;
  }

  std::vector<double> numbers(const std::string& key) const {
    const toml::Value& v = require(key);
    if (v.kind != toml::Value::Kind::array)
      throw ScenarioError(field(sect, key) + ": expected an array");
    std::vector<double> out;
    for (const toml::Value& item : v.items) {
      if (item.kind != toml::Value::Kind::number)
        throw ScenarioError(field(sect, key) + ": expected an array of numbers");
      out.push_back(item.num);
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, val] : table)
      if (!seen.count(key))
        throw ScenarioError(field(sect, key) + ": unknown key (line " +
                            std::to_string(val.line) + ")");
  }
};

inline SectionReader section(const toml::Document& doc, const std::string& name) {
  static const toml::Table empty;
  auto it = doc.find(name);
  return SectionReader{name, it == doc.end() ? empty : it->second, {}};
}

}  // namespace detail

inline std::string canonical_text(const Scenario& sc);

inline Scenario parse_scenario(const std::string& text) {
  toml::Document doc = toml::parse(text);
  for (const auto& [name, table] : doc) {
    if (name.empty() || name == "system" || name == "energy" || name == "initial" ||
        name == "run" || name == "analysis" || name == "output")
      continue;
    throw ScenarioError("[" + name + "]: unknown section");
  }

  Scenario sc;
  auto top = detail::section(doc, "");
  sc.name = top.string("name", "");
  if (sc.name.empty()) throw ScenarioError("name: required key missing");
  top.finish();

  auto sys = detail::section(doc, "system");
  sc.sys.masses = sys.numbers("masses");
  sc.sys.G = sys.number("G", 1.0);
  sc.sys.dim = static_cast<int>(sys.number("dim", 2.0));
  sc.sys.alpha = sys.number("alpha", 1.0);
  sys.finish();
  try {
    sc.sys.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(std::string("[system]: ") + e.what());
  }

  auto en = detail::section(doc, "energy");
  sc.h = en.number("h", 1.0);
  en.finish();
  if (!(sc.h > 0.0)) throw ScenarioError("[energy].h: must be positive");

  auto init = detail::section(doc, "initial");
  std::string kind = init.string("kind", "state");
  if (kind == "state")
    sc.init = InitKind::state;
  else if (kind == "brake")
    sc.init = InitKind::brake;
  else if (kind == "family")
    sc.init = InitKind::family;
  else if (kind == "ensemble")
    sc.init = InitKind::ensemble;
  else
    throw ScenarioError("[initial].kind: must be state | brake | family | ensemble");

  if (sc.init == InitKind::state || sc.init == InitKind::brake) {
    sc.q = init.numbers("q");
    if (sc.q.size() != sc.sys.dof())
      throw ScenarioError("[initial].q: expected " + std::to_string(sc.sys.dof()) +
                          " coordinates");
  }
  if (sc.init == InitKind::state) {
    sc.v = init.numbers("v");
    if (sc.v.size() != sc.sys.dof())
      throw ScenarioError("[initial].v: expected " + std::to_string(sc.sys.dof()) +
                          " coordinates");
  }
  if (sc.init == InitKind::family) {
    sc.family = init.string("family", "lagrange");
    if (sc.family != "lagrange" && sc.family != "euler" && sc.family != "kepler")
      throw ScenarioError("[initial].family: must be lagrange | euler | kepler");
    if ((sc.family == "kepler") != (sc.sys.n() == 2))
      throw ScenarioError("[initial].family: kepler needs 2 bodies, the others 3");
    const toml::Value* j_abs = init.find("J");
    const toml::Value* j_frac = init.find("J_frac");
    if (j_abs && j_frac)
      throw ScenarioError("[initial].J_frac: give either J or J_frac, not both");
    if (j_frac) {
      if (j_frac->kind != toml::Value::Kind::number)
        throw ScenarioError("[initial].J_frac: expected a number");
      if (!(j_frac->num >= -1.0 && j_frac->num <= 1.0))
        throw ScenarioError("[initial].J_frac: must lie in [-1, 1]");
      sc.J = j_frac->num;
      sc.J_is_frac = true;
    } else if (j_abs) {
      if (j_abs->kind != toml::Value::Kind::number)
        throw ScenarioError("[initial].J: expected a number");
      sc.J = j_abs->num;
    }
    if (const toml::Value* v = init.find("ordering")) {
      if (v->kind != toml::Value::Kind::array || v->items.size() != 3)
        throw ScenarioError("[initial].ordering: expected three body indices");
      for (int i = 0; i < 3; ++i) {
        if (v->items[i].kind != toml::Value::Kind::number)
          throw ScenarioError("[initial].ordering: expected three body indices");
        sc.ordering[i] = static_cast<int>(v->items[i].num);
        if (sc.ordering[i] < 0 || sc.ordering[i] > 2)
          throw ScenarioError("[initial].ordering: indices must be 0, 1 or 2");
      }
    }
  }
  if (sc.init == InitKind::ensemble) {
    sc.count = static_cast<int>(init.number("count", 8.0));
    if (sc.count < 1) throw ScenarioError("[initial].count: must be >= 1");
  }
  double seed = init.number("seed", 1.0);
  if (!(seed >= 0.0)) throw ScenarioError("[initial].seed: must be >= 0");
  sc.seed = static_cast<std::uint64_t>(seed);
  init.finish();

  auto run = detail::section(doc, "run");
  sc.t_final = run.number("t_final");
  if (!(sc.t_final != 0.0)) throw ScenarioError("[run].t_final: must be nonzero");
  sc.rtol = run.number("rtol", 1e-10);
  sc.atol = run.number("atol", 1e-10);
  if (!(sc.rtol > 0.0) || !(sc.atol > 0.0))
    throw ScenarioError("[run].rtol/atol: must be positive");
  sc.r_prox = run.number("r_prox", 1e-4);
  run.finish();

  auto an = detail::section(doc, "analysis");
  sc.virial_analysis = an.boolean("virial", true);
  sc.syzygy_analysis = an.boolean("syzygy", false);
  an.finish();
  if (sc.syzygy_analysis && (sc.sys.n() != 3 || sc.sys.dim != 2))
    throw ScenarioError("[analysis].syzygy: requires a planar three-body system");

  auto out = detail::section(doc, "output");
  sc.samples = static_cast<int>(out.number("samples", 200.0));
  if (sc.samples < 2) throw ScenarioError("[output].samples: must be >= 2");
  sc.trajectory_csv = out.boolean("trajectory_csv", true);
  sc.report_json = out.boolean("report_json", true);
  out.finish();

  sc.resolved = canonical_text(sc);
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  return parse_scenario(read_file(path));
}

// Fixed-order re-serialization of the resolved scenario; its fingerprint is
// what every output file carries.
inline std::string canonical_text(const Scenario& sc) {
  std::ostringstream os;
  os << "name = \"" << sc.name << "\"\n\n[system]\nmasses = [";
  for (std::size_t i = 0; i < sc.sys.masses.size(); ++i)
    os << (i ? ", " : "") << fmt(sc.sys.masses[i]);
  os << "]\nG = " << fmt(sc.sys.G) << "\ndim = " << sc.sys.dim
     << "\nalpha = " << fmt(sc.sys.alpha) << "\n\n[energy]\nh = " << fmt(sc.h)
     << "\n\n[initial]\n";
  const char* kinds[] = {"state", "brake", "family", "ensemble"};
  os << "kind = \"" << kinds[static_cast<int>(sc.init)] << "\"\n";
  auto arr = [&](const char* key, const Config& x) {
    os << key << " = [";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << fmt(x[i]);
    os << "]\n";
  };
  if (sc.init == InitKind::state || sc.init == InitKind::brake) arr("q", sc.q);
  if (sc.init == InitKind::state) arr("v", sc.v);
  if (sc.init == InitKind::family) {
    os << "family = \"" << sc.family << "\"\n"
       << (sc.J_is_frac ? "J_frac = " : "J = ") << fmt(sc.J) << "\nordering = ["
       << sc.ordering[0] << ", " << sc.ordering[1] << ", " << sc.ordering[2] << "]\n";
  }
  if (sc.init == InitKind::ensemble) os << "count = " << sc.count << "\n";
  os << "seed = " << sc.seed << "\n\n[run]\nt_final = " << fmt(sc.t_final)
     << "\nrtol = " << fmt(sc.rtol) << "\natol = " << fmt(sc.atol)
     << "\nr_prox = " << fmt(sc.r_prox) << "\n\n[analysis]\nvirial = "
     << (sc.virial_analysis ? "true" : "false")
     << "\nsyzygy = " << (sc.syzygy_analysis ? "true" : "false")
     << "\n\n[output]\nsamples = " << sc.samples
     << "\ntrajectory_csv = " << (sc.trajectory_csv ? "true" : "false")
     << "\nreport_json = " << (sc.report_json ? "true" : "false") << "\n";
  return os.str();
}

namespace detail {

// random zero-velocity boundary start, rejecting near-collision shapes
inline State ensemble_member_state(const Scenario& sc, int index) {
  Rng rng(sc.seed + static_cast<std::uint64_t>(index));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Config q(sc.sys.dof());
    for (double& x : q) x = rng.normal();
    com_normalize(q, sc.sys);
    double scale = std::sqrt(moment_I(q, sc.sys) / sc.sys.total_mass());
    if (min_pair_distance(q, sc.sys) < 0.2 * scale) continue;
    State s;
    s.q = scale_to_level(q, sc.sys, sc.h);
    s.v = Config(q.size(), 0.0);
    return s;
  }
  throw std::runtime_error("ensemble_member_state: rejection sampling failed");
}

inline State initial_state(const Scenario& sc, int member_index = 0) {
  State s;
  switch (sc.init) {
    case InitKind::state: {
      s.q = sc.q;
      s.v = sc.v;
      double E = energy_E(s, sc.sys);
      if (std::abs(E + sc.h) > 1e-6 * std::max(1.0, sc.h))
        throw ScenarioError("[initial].q/v: state energy is " + fmt(E) + ", expected " +
                            fmt(-sc.h));
      return s;
    }
    case InitKind::brake:
      s.q = scale_to_level(sc.q, sc.sys, sc.h);
      s.v = Config(sc.q.size(), 0.0);
      return s;
    case InitKind::family: {
      CentralConfiguration cc =
          sc.family == "lagrange" ? lagrange_cc(sc.sys)
          : sc.family == "euler"  ? euler_cc(sc.sys, sc.ordering)
                                  : detail::make_cc({0.0, 0.0, 1.0, 0.0}, sc.sys);
      EnergyLevel level(sc.h);
      double J = sc.J_is_frac ? sc.J * homographic_J_max(cc, sc.sys, level) : sc.J;
      return homographic_orbit(cc, sc.sys, J, level).initial;
    }
    case InitKind::ensemble:
      return ensemble_member_state(sc, member_index);
  }
  throw std::logic_error("initial_state: unreachable");
}

inline PropagateOptions propagate_options(const Scenario& sc) {
  PropagateOptions opts;
  opts.rtol = sc.rtol;
  opts.atol = sc.atol;
  opts.r_prox = sc.r_prox;
  opts.event_mask = kAllEvents;
  opts.level_h = sc.h;
  return opts;
}

inline json member_report(const Scenario& sc, const Trajectory& traj) {
  json j;
  j["stop"] = stop_reason_name(traj.stop);
  j["t_begin"] = traj.t_begin();
  j["t_end"] = traj.t_end();
  j["energy_drift"] = traj.max_energy_drift;
  j["closest_approach"] = traj.closest_approach;
  if (sc.virial_analysis) j["virial"] = virial_report_json(virial_report(traj, EnergyLevel(sc.h)));
  if (sc.syzygy_analysis) j["syzygy"] = syzygy_word_json(syzygy_sequence(traj));
  return j;
}

}  // namespace detail

// Run a parsed scenario into out_dir.  Ensemble members fan out over a
// bounded worker pool; results are collected and written in index order so
// the bundle is byte-identical for any job count.
inline std::vector<std::string> run_scenario(const Scenario& sc,
                                             const std::string& out_dir,
                                             int jobs = 1) {
  if (jobs < 1) throw ScenarioError("jobs: must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);

  Provenance prov;
  prov.scenario = sc.name;
  prov.hash = hex64(fnv1a(sc.resolved));
  prov.seed = sc.seed;
  prov.rtol = sc.rtol;
  prov.atol = sc.atol;

  std::vector<std::string> files;
  auto emit = [&](const std::string& name, const std::string& content) {
    std::string path = out_dir + "/" + name;
    write_file(path, content);
    files.push_back(path);
  };
  emit("scenario.resolved.toml", sc.resolved);

  int members = sc.init == InitKind::ensemble ? sc.count : 1;
  std::vector<Trajectory> trajs(members);
  std::vector<std::string> errors(members);
  int workers = std::min(jobs, members);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < members; i += workers) {
        try {
          trajs[i] = propagate(detail::initial_state(sc, i), sc.sys, sc.t_final,
                               detail::propagate_options(sc));
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    });
  for (std::thread& th : pool) th.join();
  for (int i = 0; i < members; ++i)
    if (!errors[i].empty())
      throw ScenarioError("member " + std::to_string(i) + ": " + errors[i]);

  if (sc.init == InitKind::ensemble) {
    std::ostringstream os;
    for (int i = 0; i < members; ++i) {
      json j;
      j["index"] = i;
      j["provenance"] = prov.to_json();
      j["q0"] = trajs[i].state_at(trajs[i].t_begin()).q;
      j["report"] = detail::member_report(sc, trajs[i]);
      os << j.dump() << "\n";
    }
    emit("members.jsonl", os.str());
    return files;
  }

  const Trajectory& traj = trajs[0];
  if (sc.trajectory_csv) {
    std::ostringstream os;
    write_trajectory_csv(os, traj, sc.samples, prov);
    emit("trajectory.csv", os.str());
  }
  if (sc.report_json) {
    json j;
    j["provenance"] = prov.to_json();
    j["report"] = detail::member_report(sc, traj);
    j["events"] = events_json(traj.events);
    emit("report.json", j.dump(2) + "\n");
  }
  return files;
}

}  // namespace vlab
