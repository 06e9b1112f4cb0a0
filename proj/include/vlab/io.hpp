#pragma once

// Deterministic serialization: shortest round-trip number formatting,
// trajectory CSV with provenance headers, JSON report builders and a minimal
// SVG polyline emitter.  Identical inputs must produce byte-identical files.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vlab/core.hpp"
#include "vlab/integrate.hpp"
#include "vlab/jm.hpp"
#include "vlab/shape.hpp"
#include "vlab/virial.hpp"

namespace vlab {

using json = nlohmann::ordered_json;

inline constexpr const char* kArtifactVersion = "1";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal representation that round-trips to the same double.
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// FNV-1a, used to fingerprint resolved scenario text.
inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19] = "0x";
  for (int i = 0; i < 16; ++i)
    buf[2 + i] = "0123456789abcdef"[(v >> (60 - 4 * i)) & 0xf];
  buf[18] = '\0';
  return buf;
}

// Key/value provenance block embedded in every output file.
struct Provenance {
  std::string scenario;  // name or subcommand
  std::string hash;      // fingerprint of the resolved inputs
  std::uint64_t seed = 0;
  double rtol = 0.0, atol = 0.0;

  std::vector<std::pair<std::string, std::string>> lines() const {
    return {{"version", kArtifactVersion},
            {"scenario", scenario},
            {"hash", hash},
            {"seed", std::to_string(seed)},
            {"rtol", fmt(rtol)},
            {"atol", fmt(atol)}};
  }

  json to_json() const {
    json j;
    for (const auto& [k, v] : lines()) j[k] = v;
    return j;
  }
};

inline void write_csv_header(std::ostream& os, const Provenance& prov) {
  for (const auto& [k, v] : prov.lines()) os << "# " << k << " = " << v << "\n";
}

// Uniformly sampled trajectory table: time, coordinates, velocities and the
// pointwise diagnostics.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                                 int n_samples, const Provenance& prov) {
  if (n_samples < 2) throw std::invalid_argument("write_trajectory_csv: need >= 2 samples");
  const MassSystem& sys = traj.sys;
  write_csv_header(os, prov);
  os << "t";
  for (std::size_t i = 0; i < sys.dof(); ++i) os << ",q" << i;
  for (std::size_t i = 0; i < sys.dof(); ++i) os << ",v" << i;
  os << ",E,K,U,I,Idot,J\n";
  double t0 = traj.t_begin(), t1 = traj.t_end();
  for (int i = 0; i < n_samples; ++i) {
    double t = t0 + (t1 - t0) * i / static_cast<double>(n_samples - 1);
    State s = traj.state_at(t);
    double K = kinetic_K(s.v, sys);
    double U = potential_U(s.q, sys);
    os << fmt(t);
    for (double x : s.q) os << ',' << fmt(x);
    for (double x : s.v) os << ',' << fmt(x);
    os << ',' << fmt(K - U) << ',' << fmt(K) << ',' << fmt(U) << ','
       << fmt(moment_I(s.q, sys)) << ',' << fmt(moment_I_dot(s, sys)) << ','
       << fmt(angular_momentum_mag(s, sys)) << "\n";
  }
}

inline const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::brake_instant: return "brake";
    case EventKind::virial_crossing: return "virial";
    case EventKind::turn_around: return "turn_around";
    case EventKind::collision_proximity: return "collision";
    case EventKind::hill_band_exit: return "band_exit";
  }
  return "unknown";
}

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::reached_t_final: return "t_final";
    case StopReason::collision_proximity: return "collision";
    case StopReason::step_underflow: return "step_underflow";
    case StopReason::max_steps: return "max_steps";
    case StopReason::u_threshold: return "u_threshold";
  }
  return "unknown";
}

inline json event_json(const Event& ev) {
  json j;
  j["kind"] = event_kind_name(ev.kind);
  j["t"] = ev.t;
  j["q"] = ev.state.q;
  j["v"] = ev.state.v;
  j["direction"] = ev.direction;
  j["residual"] = ev.value;
  j["degenerate"] = ev.degenerate;
  return j;
}

inline json events_json(const std::vector<Event>& events) {
  json j = json::array();
  for (const Event& ev : events) j.push_back(event_json(ev));
  return j;
}

inline const char* growth_class_name(GrowthClass c) {
  switch (c) {
    case GrowthClass::bounded: return "bounded";
    case GrowthClass::subquadratic: return "subquadratic";
    case GrowthClass::quadratic: return "quadratic";
  }
  return "unknown";
}

inline json virial_report_json(const VirialReport& rep) {
  json j;
  j["window"] = {{"t_lo", rep.window.t_lo},
                 {"t_hi", rep.window.t_hi},
                 {"avg_K", rep.window.avg_K},
                 {"avg_U", rep.window.avg_U},
                 {"residual", rep.window.residual}};
  j["crossings"] = rep.crossings;
  j["thickness"] = {{"k", rep.thick.k}, {"exceeds_one", rep.thick.exceeds_one}};
  j["growth"] = {{"class", growth_class_name(rep.growth.cls)},
                 {"exponent", rep.growth.exponent},
                 {"coefficient", rep.growth.coefficient},
                 {"low_confidence", rep.growth.low_confidence}};
  if (rep.escape) {
    const EscapeRecord& e = *rep.escape;
    j["escape"] = {{"pair", {e.split.pair_a, e.split.pair_b}},
                   {"escaper", e.split.escaper},
                   {"mu", e.split.mu},
                   {"v_inf", e.v_inf},
                   {"k_hyper", e.k_hyper},
                   {"relative_mismatch", e.relative_mismatch}};
  } else {
    j["escape"] = nullptr;
  }
  return j;
}

inline const char* endpoint_tag_name(EndpointTag t) {
  switch (t) {
    case EndpointTag::interior: return "interior";
    case EndpointTag::brake_point: return "brake_point";
    case EndpointTag::collision_capped: return "collision_capped";
  }
  return "unknown";
}

inline json jm_path_json(const JMPath& path) {
  json j;
  j["h"] = path.h;
  j["length"] = path.length;
  j["tag_begin"] = endpoint_tag_name(path.tag_begin);
  j["tag_end"] = endpoint_tag_name(path.tag_end);
  j["seg_lengths"] = path.seg_lengths;
  j["nodes"] = json::array();
  for (const Config& q : path.nodes) j["nodes"].push_back(q);
  return j;
}

inline json syzygy_word_json(const SyzygyWord& word) {
  json j;
  j["symbols"] = word.symbols;
  j["times"] = word.times;
  j["grazes"] = word.grazes;
  j["degenerate"] = word.degenerate;
  j["truncated"] = word.truncated;
  return j;
}

// Single polyline on a fixed viewbox with auto-scaled data range.
inline std::string svg_polyline(const std::vector<std::pair<double, double>>& pts,
                                int width = 640, int height = 400) {
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  if (!pts.empty()) {
    x_lo = x_hi = pts[0].first;
    y_lo = y_hi = pts[0].second;
    for (const auto& [x, y] : pts) {
      x_lo = std::min(x_lo, x); x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y); y_hi = std::max(y_hi, y);
    }
  }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  if (y_hi == y_lo) y_hi = y_lo + 1;
  const double pad = 10.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\">\n<polyline fill=\"none\" stroke=\"black\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double px = pad + (pts[i].first - x_lo) / (x_hi - x_lo) * (width - 2 * pad);
    double py = height - pad - (pts[i].second - y_lo) / (y_hi - y_lo) * (height - 2 * pad);
    if (i) os << ' ';
    os << fmt(px) << ',' << fmt(py);
  }
  os << "\"/>\n</svg>\n";
  return os.str();
}

// All file output funnels through here so write failures map to one error type.
inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << content;
  if (!os) throw IoError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

}  // namespace vlab
