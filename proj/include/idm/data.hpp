#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "idm/checkpoint.hpp"  // IoError
#include "idm/rng.hpp"
#include "idm/tensor.hpp"

namespace idm {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
};

inline double dist(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// One prediction instance: the agent's observed past, its ground-truth
// future, and the co-temporal neighbour histories. Raw scene units.
struct TrajectorySample {
  long long scene_id = 0;
  long long agent_id = 0;
  std::vector<Vec2> history;
  std::vector<Vec2> future;
  std::vector<std::vector<Vec2>> neighbors;

  const Vec2& last_observed() const { return history.back(); }
};

struct Dataset {
  std::size_t t_p = 8;
  std::size_t t_q = 12;
  std::vector<TrajectorySample> samples;

  // Synthetic-scenario sidecar (empty for loaded real data). Labels are for
  // evaluation only and must never reach the model.
  std::vector<int> mode_labels;
  std::vector<std::string> mode_names;
  std::vector<Vec2> mode_endpoints_rel;  // canonical endpoint relative to last observed point
  double sigma = 0.0;
};

struct ScenarioSpec {
  std::size_t t_p = 8;
  std::size_t t_q = 12;
  std::vector<std::string> modes;      // empty → generator default mode set
  std::vector<double> mode_probs;      // empty → uniform
  double sigma = 0.25;                 // path-noise scale per step
  double speed_min = 1.0;
  double speed_max = 1.0;
  std::size_t neighbor_count = 0;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  double offset_range = 20.0;          // scene placement half-width
};

namespace detail {

inline void validate_spec(const ScenarioSpec& spec) {
  if (spec.count < 1) throw ShapeError("scenario: count must be >= 1");
  if (spec.t_p < 2 || spec.t_q < 1) throw ShapeError("scenario: need t_p >= 2, t_q >= 1");
  if (spec.sigma < 0.0) throw ShapeError("scenario: sigma must be >= 0");
  if (!(spec.speed_min > 0.0 && spec.speed_min <= spec.speed_max)) {
    throw ShapeError("scenario: need 0 < speed_min <= speed_max");
  }
  if (!spec.mode_probs.empty()) {
    if (spec.mode_probs.size() != spec.modes.size()) {
      throw ShapeError("scenario: mode_probs size must match modes");
    }
    double sum = 0.0;
    for (double p : spec.mode_probs) {
      if (p < 0.0) throw ShapeError("scenario: negative mode probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ShapeError("scenario: mode probabilities must sum to 1");
  }
}

inline double reflect_into(double v, double bound) {
  while (v > bound || v < -bound) {
    if (v > bound) v = 2.0 * bound - v;
    else v = -2.0 * bound - v;
  }
  return v;
}

// Smooth path noise: a reflected random walk per coordinate, zero at the
// first point, so consecutive offsets are correlated instead of i.i.d.
inline std::vector<Vec2> jitter_walk(std::size_t len, double sigma, double bound, Rng& rng) {
  std::vector<Vec2> j(len);
  for (std::size_t t = 1; t < len; ++t) {
    j[t].x = reflect_into(j[t - 1].x + sigma * rng.gaussian(), bound);
    j[t].y = reflect_into(j[t - 1].y + sigma * rng.gaussian(), bound);
  }
  return j;
}

inline int sample_mode(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

inline std::vector<Vec2> straight_history(std::size_t t_p, double speed) {
  std::vector<Vec2> h(t_p);
  for (std::size_t i = 0; i < t_p; ++i) {
    h[i] = {0.0, -static_cast<double>(t_p - 1 - i) * speed};
  }
  return h;
}

// Future under one crossroad intent: continue straight, or sweep a quarter
// turn left/right at constant speed. turn = -1, 0, +1.
inline std::vector<Vec2> crossroad_future(std::size_t t_q, double speed, int turn) {
  std::vector<Vec2> f(t_q);
  const double dtheta = turn * (M_PI / 2.0) / static_cast<double>(t_q);
  Vec2 p{0.0, 0.0};
  for (std::size_t t = 0; t < t_q; ++t) {
    const double theta = M_PI / 2.0 + static_cast<double>(t + 1) * dtheta;
    p = p + Vec2{std::cos(theta), std::sin(theta)} * speed;
    f[t] = p;
  }
  return f;
}

// Future under one avoidance intent: straight ahead with a sine-bump lateral
// detour that returns to zero at the horizon, so both modes share an endpoint.
inline std::vector<Vec2> avoidance_future(std::size_t t_q, double speed, double amp, int side) {
  std::vector<Vec2> f(t_q);
  for (std::size_t t = 0; t < t_q; ++t) {
    const double frac = static_cast<double>(t + 1) / static_cast<double>(t_q);
    f[t] = {side * amp * std::sin(M_PI * frac), static_cast<double>(t + 1) * speed};
  }
  // Pin the endpoint exactly: sin(pi) is only zero up to rounding.
  f[t_q - 1].x = 0.0;
  return f;
}

inline std::vector<Vec2> walker_history(std::size_t t_p, const Vec2& anchor, Rng& rng) {
  const double theta = rng.uniform() * 2.0 * M_PI;
  const double speed = 0.5 + rng.uniform();
  const Vec2 start{anchor.x + (rng.uniform() * 2.0 - 1.0) * 6.0,
                   anchor.y + (rng.uniform() * 2.0 - 1.0) * 6.0};
  std::vector<Vec2> h(t_p);
  for (std::size_t i = 0; i < t_p; ++i) {
    const double back = -static_cast<double>(t_p - 1 - i) * speed;
    h[i] = {start.x + back * std::cos(theta), start.y + back * std::sin(theta)};
  }
  return h;
}

}  // namespace detail

// Three-way junction: identical straight approaches, futures split between
// left turn / straight / right turn. The classic intention-uncertainty oracle.
inline Dataset generate_crossroad(const ScenarioSpec& spec) {
  detail::validate_spec(spec);
  std::vector<std::string> modes = spec.modes;
  if (modes.empty()) modes = {"left", "straight", "right"};
  std::vector<double> probs = spec.mode_probs;
  if (probs.empty()) probs.assign(modes.size(), 1.0 / static_cast<double>(modes.size()));
  std::vector<int> turns(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (modes[i] == "left") turns[i] = 1;
    else if (modes[i] == "straight") turns[i] = 0;
    else if (modes[i] == "right") turns[i] = -1;
    else throw ShapeError("crossroad: unknown mode '" + modes[i] + "'");
  }

  Dataset ds;
  ds.t_p = spec.t_p;
  ds.t_q = spec.t_q;
  ds.mode_names = modes;
  ds.sigma = spec.sigma;
  const double ref_speed = 0.5 * (spec.speed_min + spec.speed_max);
  for (int turn : turns) {
    ds.mode_endpoints_rel.push_back(detail::crossroad_future(spec.t_q, ref_speed, turn).back());
  }

  const Rng root(spec.seed);
  const std::size_t len = spec.t_p + spec.t_q;
  const double bound = std::max(1e-9, 3.0 * spec.sigma * std::sqrt(static_cast<double>(len)));
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = root.split(i);
    const int mode = detail::sample_mode(probs, rng);
    const double speed = spec.speed_min + (spec.speed_max - spec.speed_min) * rng.uniform();
    const Vec2 offset{(rng.uniform() * 2.0 - 1.0) * spec.offset_range,
                      (rng.uniform() * 2.0 - 1.0) * spec.offset_range};
    const auto jitter = detail::jitter_walk(len, spec.sigma, bound, rng);

    TrajectorySample s;
    s.scene_id = static_cast<long long>(i);
    s.agent_id = 0;
    s.history = detail::straight_history(spec.t_p, speed);
    s.future = detail::crossroad_future(spec.t_q, speed, turns[mode]);
    for (std::size_t t = 0; t < spec.t_p; ++t) s.history[t] = s.history[t] + offset + jitter[t];
    for (std::size_t t = 0; t < spec.t_q; ++t) s.future[t] = s.future[t] + offset + jitter[spec.t_p + t];
    for (std::size_t n = 0; n < spec.neighbor_count; ++n) {
      s.neighbors.push_back(detail::walker_history(spec.t_p, s.history.back(), rng));
    }
    ds.samples.push_back(std::move(s));
    ds.mode_labels.push_back(mode);
  }
  return ds;
}

// Action-uncertainty oracle: one shared goal straight ahead, two detour paths
// around a static obstacle sitting on the direct line.
inline Dataset generate_avoidance(const ScenarioSpec& spec) {
  detail::validate_spec(spec);
  std::vector<std::string> modes = spec.modes;
  if (modes.empty()) modes = {"detour_left", "detour_right"};
  std::vector<double> probs = spec.mode_probs;
  if (probs.empty()) probs.assign(modes.size(), 1.0 / static_cast<double>(modes.size()));
  std::vector<int> sides(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (modes[i] == "detour_left") sides[i] = 1;
    else if (modes[i] == "detour_right") sides[i] = -1;
    else throw ShapeError("avoidance: unknown mode '" + modes[i] + "'");
  }
  const double amp = 2.0;

  Dataset ds;
  ds.t_p = spec.t_p;
  ds.t_q = spec.t_q;
  ds.mode_names = modes;
  ds.sigma = spec.sigma;
  const double ref_speed = 0.5 * (spec.speed_min + spec.speed_max);
  for (int side : sides) {
    ds.mode_endpoints_rel.push_back(detail::avoidance_future(spec.t_q, ref_speed, amp, side).back());
  }

  const Rng root(spec.seed);
  const std::size_t len = spec.t_p + spec.t_q;
  const double bound = std::max(1e-9, 3.0 * spec.sigma * std::sqrt(static_cast<double>(len)));
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng = root.split(i);
    const int mode = detail::sample_mode(probs, rng);
    const double speed = spec.speed_min + (spec.speed_max - spec.speed_min) * rng.uniform();
    const Vec2 offset{(rng.uniform() * 2.0 - 1.0) * spec.offset_range,
                      (rng.uniform() * 2.0 - 1.0) * spec.offset_range};
    const auto jitter = detail::jitter_walk(len, spec.sigma, bound, rng);

    TrajectorySample s;
    s.scene_id = static_cast<long long>(i);
    s.agent_id = 0;
    s.history = detail::straight_history(spec.t_p, speed);
    s.future = detail::avoidance_future(spec.t_q, speed, amp, sides[mode]);
    for (std::size_t t = 0; t < spec.t_p; ++t) s.history[t] = s.history[t] + offset + jitter[t];
    for (std::size_t t = 0; t < spec.t_q; ++t) s.future[t] = s.future[t] + offset + jitter[spec.t_p + t];

    // The obstacle everyone detours around: static, mid-way to the goal.
    const Vec2 block = offset + Vec2{0.0, 0.5 * static_cast<double>(spec.t_q) * speed};
    s.neighbors.emplace_back(spec.t_p, block);
    for (std::size_t n = 0; n < spec.neighbor_count; ++n) {
      s.neighbors.push_back(detail::walker_history(spec.t_p, s.history.back(), rng));
    }
    ds.samples.push_back(std::move(s));
    ds.mode_labels.push_back(mode);
  }
  return ds;
}

// ====== CSV I/O ======
//
// Schema: scene_id,agent_id,t,x,y — one row per observed position, sorted by
// (scene_id, agent_id, t), uniformly spaced t per agent.

namespace detail {

inline std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_num(const std::string& s, std::size_t line_no, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
    throw IoError("line " + std::to_string(line_no) + ": bad " + what + " value '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline void write_trajectory_csv(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "scene_id,agent_id,t,x,y\n";
  for (const TrajectorySample& s : ds.samples) {
    for (std::size_t t = 0; t < s.history.size(); ++t) {
      os << s.scene_id << "," << s.agent_id << "," << t << ","
         << detail::fmt_coord(s.history[t].x) << "," << detail::fmt_coord(s.history[t].y) << "\n";
    }
    for (std::size_t t = 0; t < s.future.size(); ++t) {
      os << s.scene_id << "," << s.agent_id << "," << (s.history.size() + t) << ","
         << detail::fmt_coord(s.future[t].x) << "," << detail::fmt_coord(s.future[t].y) << "\n";
    }
    for (std::size_t n = 0; n < s.neighbors.size(); ++n) {
      for (std::size_t t = 0; t < s.neighbors[n].size(); ++t) {
        os << s.scene_id << "," << (s.agent_id + 1 + static_cast<long long>(n)) << "," << t << ","
           << detail::fmt_coord(s.neighbors[n][t].x) << ","
           << detail::fmt_coord(s.neighbors[n][t].y) << "\n";
      }
    }
  }
  if (!os) throw IoError("write failure: " + path);
}

// Sliding-window ingestion. Each agent with at least t_p+t_q uniformly spaced
// rows yields windows at the given stride; co-temporal agents in the same
// scene that cover the full history window become neighbours.
inline Dataset load_trajectory_csv(const std::string& path, std::size_t t_p,
                                   std::size_t t_q, std::size_t stride = 1) {
  if (stride < 1) throw ShapeError("load_trajectory_csv: stride must be >= 1");
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw IoError("empty file: " + path);
  ++line_no;
  {
    const auto cols = detail::split_csv_line(line);
    const std::vector<std::string> want = {"scene_id", "agent_id", "t", "x", "y"};
    if (cols != want) {
      throw IoError("missing or misordered columns; expected header scene_id,agent_id,t,x,y");
    }
  }

  struct Row {
    double t;
    Vec2 p;
  };
  std::map<std::pair<long long, long long>, std::vector<Row>> tracks;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 5) {
      throw IoError("line " + std::to_string(line_no) + ": expected 5 fields, got " +
                    std::to_string(cols.size()));
    }
    const long long scene = static_cast<long long>(detail::parse_num(cols[0], line_no, "scene_id"));
    const long long agent = static_cast<long long>(detail::parse_num(cols[1], line_no, "agent_id"));
    const double t = detail::parse_num(cols[2], line_no, "t");
    const double x = detail::parse_num(cols[3], line_no, "x");
    const double y = detail::parse_num(cols[4], line_no, "y");
    auto& track = tracks[{scene, agent}];
    if (!track.empty() && t <= track.back().t) {
      throw IoError("line " + std::to_string(line_no) + ": non-monotone t for agent " +
                    std::to_string(agent) + " in scene " + std::to_string(scene));
    }
    track.push_back({t, {x, y}});
  }

  // Uniform spacing check per agent.
  for (const auto& [key, track] : tracks) {
    if (track.size() < 2) continue;
    const double dt = track[1].t - track[0].t;
    for (std::size_t i = 2; i < track.size(); ++i) {
      const double d = track[i].t - track[i - 1].t;
      if (std::abs(d - dt) > 1e-6 * std::max(1.0, std::abs(dt))) {
        throw IoError("non-uniform t spacing for agent " + std::to_string(key.second) +
                      " in scene " + std::to_string(key.first));
      }
    }
  }

  Dataset ds;
  ds.t_p = t_p;
  ds.t_q = t_q;
  const std::size_t window = t_p + t_q;
  for (const auto& [key, track] : tracks) {
    if (track.size() < window) continue;
    for (std::size_t start = 0; start + window <= track.size(); start += stride) {
      TrajectorySample s;
      s.scene_id = key.first;
      s.agent_id = key.second;
      for (std::size_t i = 0; i < t_p; ++i) s.history.push_back(track[start + i].p);
      for (std::size_t i = 0; i < t_q; ++i) s.future.push_back(track[start + t_p + i].p);

      const double t_begin = track[start].t;
      const double t_last = track[start + t_p - 1].t;
      for (const auto& [okey, otrack] : tracks) {
        if (okey.first != key.first || okey.second == key.second) continue;
        // Neighbour must cover every history timestep of this window.
        std::vector<Vec2> nb;
        for (const Row& r : otrack) {
          if (r.t >= t_begin - 1e-9 && r.t <= t_last + 1e-9) nb.push_back(r.p);
        }
        if (nb.size() == t_p) s.neighbors.push_back(std::move(nb));
      }
      ds.samples.push_back(std::move(s));
    }
  }
  if (ds.samples.empty()) throw IoError("no usable windows in " + path);
  return ds;
}

// Mode sidecar: '#'-prefixed header lines describe the mode set and canonical
// relative endpoints; data rows are scene_id,agent_id,mode_label.
inline void write_mode_sidecar(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "# sigma=" << detail::fmt_coord(ds.sigma) << "\n";
  for (std::size_t m = 0; m < ds.mode_names.size(); ++m) {
    os << "# mode " << m << " " << ds.mode_names[m] << " "
       << detail::fmt_coord(ds.mode_endpoints_rel[m].x) << " "
       << detail::fmt_coord(ds.mode_endpoints_rel[m].y) << "\n";
  }
  os << "scene_id,agent_id,mode_label\n";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    os << ds.samples[i].scene_id << "," << ds.samples[i].agent_id << ","
       << ds.mode_labels[i] << "\n";
  }
  if (!os) throw IoError("write failure: " + path);
}

struct ModeSidecar {
  double sigma = 0.0;
  std::vector<std::string> mode_names;
  std::vector<Vec2> mode_endpoints_rel;
  std::map<std::pair<long long, long long>, int> labels;
};

inline ModeSidecar load_mode_sidecar(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  ModeSidecar mc;
  std::string line;
  bool saw_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string word;
      ss >> word;
      if (word == "mode") {
        std::size_t idx;
        std::string name;
        double x, y;
        if (!(ss >> idx >> name >> x >> y)) {
          throw IoError("line " + std::to_string(line_no) + ": malformed mode header");
        }
        mc.mode_names.resize(std::max(mc.mode_names.size(), idx + 1));
        mc.mode_endpoints_rel.resize(mc.mode_names.size());
        mc.mode_names[idx] = name;
        mc.mode_endpoints_rel[idx] = {x, y};
      } else if (word.rfind("sigma=", 0) == 0) {
        mc.sigma = std::strtod(word.c_str() + 6, nullptr);
      }
      continue;
    }
    if (!saw_header) {
      if (line != "scene_id,agent_id,mode_label") {
        throw IoError("missing sidecar header scene_id,agent_id,mode_label");
      }
      saw_header = true;
      continue;
    }
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 3) throw IoError("line " + std::to_string(line_no) + ": expected 3 fields");
    const long long scene = static_cast<long long>(detail::parse_num(cols[0], line_no, "scene_id"));
    const long long agent = static_cast<long long>(detail::parse_num(cols[1], line_no, "agent_id"));
    mc.labels[{scene, agent}] = static_cast<int>(detail::parse_num(cols[2], line_no, "mode_label"));
  }
  return mc;
}

// Tensor bridges used by the model layer.
inline Tensor track_to_tensor(const std::vector<Vec2>& track) {
  Tensor t({track.size(), 2});
  for (std::size_t i = 0; i < track.size(); ++i) {
    t.at(i, 0) = track[i].x;
    t.at(i, 1) = track[i].y;
  }
  return t;
}

inline std::vector<Vec2> tensor_to_track(const Tensor& t) {
  std::vector<Vec2> track(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) track[i] = {t.at(i, 0), t.at(i, 1)};
  return track;
}

}  // namespace idm
