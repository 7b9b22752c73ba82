#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "idm/data.hpp"
#include "idm/model.hpp"
#include "idm/networks.hpp"
#include "idm/rng.hpp"
#include "idm/schedule.hpp"

namespace idm {

struct DenoiserCalls {
  std::size_t endnet = 0;
  std::size_t priornet = 0;
  std::size_t pathnet = 0;

  std::size_t total() const { return endnet + priornet + pathnet; }
};

struct PredictionSet {
  std::vector<std::vector<Vec2>> trajectories;  // count × t_q points
  std::vector<Vec2> goals;                      // the c_0 each trajectory was conditioned on
  DenoiserCalls calls;
  std::uint64_t wall_ns = 0;        // network evaluations only
  std::uint64_t wall_ns_total = 0;  // including encoding (filled by predict_sample)
};

// Runs the deterministic mean-only reverse chain from step `steps` down to 1.
// The denoiser is injectable so tests can drive the chain with stubs. With
// `stochastic`, fresh noise √β̃_k·z is added for k > 1 (off by default).
using Denoiser = std::function<Tensor(const Tensor& state, std::size_t k)>;

inline Tensor reverse_denoise_chain(Tensor state, const NoiseSchedule& sched,
                                    const Denoiser& denoiser, std::size_t* calls = nullptr,
                                    bool stochastic = false, Rng* rng = nullptr) {
  for (std::size_t k = sched.steps; k > 0; --k) {
    const Tensor eps = denoiser(state, k);
    state = reverse_mean(state, eps, k, sched);
    if (calls) ++(*calls);
    if (stochastic && k > 1) {
      if (!rng) throw NumericError("reverse_denoise_chain: stochastic mode needs an rng");
      const double sd = std::sqrt(sched.beta_tilde_at(k));
      Tensor z = rng->gaussian_tensor(state.shape());
      state = axpby(1.0, state, sd, z);
    }
  }
  return state;
}

// One goal draw: c_K ~ N(0, I), then K denoising steps. Model space.
inline Tensor sample_goal(const ContextVector& x, const ModelBundle& m, Rng& rng,
                          DenoiserCalls* calls = nullptr) {
  if (m.kind != ModelKind::idm) throw ShapeError("sample_goal: not an idm model");
  Tensor c = rng.gaussian_tensor({2});
  std::size_t n = 0;
  c = reverse_denoise_chain(std::move(c), m.goal_sched, [&](const Tensor& state, std::size_t k) {
    return endnet_eval(state, x, k, m.goal_sched.steps, m.net, m.params);
  }, &n);
  if (calls) calls->endnet += n;
  return c;
}

// One trajectory draw conditioned on a goal: y_S = μ_φ(x, c_0) + √(1−ᾱ_S)·ε,
// then S denoising steps. Model space.
inline Tensor sample_trajectory(const ContextVector& x, const Tensor& goal,
                                const ModelBundle& m, Rng& rng,
                                DenoiserCalls* calls = nullptr) {
  if (m.kind != ModelKind::idm) throw ShapeError("sample_trajectory: not an idm model");
  const Tensor mu = priornet_eval(x, goal, m.net, m.params);
  if (calls) ++calls->priornet;
  const double ab_S = m.traj_sched.alpha_bar_at(m.traj_sched.steps);
  const Tensor eps = rng.gaussian_tensor(mu.shape());
  Tensor y = axpby(1.0, mu, std::sqrt(1.0 - ab_S), eps);
  std::size_t n = 0;
  y = reverse_denoise_chain(std::move(y), m.traj_sched, [&](const Tensor& state, std::size_t s) {
    return pathnet_eval(state, x, s, m.traj_sched.steps, m.net, m.params);
  }, &n);
  if (calls) calls->pathnet += n;
  return y;
}

// `count` independent (goal, trajectory) pairs in model space. Draw d uses the
// rng stream split(d), so results depend only on the rng's seed.
inline PredictionSet predict(const ContextVector& x, const ModelBundle& m,
                             std::size_t count, const Rng& rng) {
  if (count < 1) throw ShapeError("predict: count must be >= 1");
  PredictionSet out;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t d = 0; d < count; ++d) {
    Rng dr = rng.split(d);
    const Tensor goal = sample_goal(x, m, dr, &out.calls);
    const Tensor traj = sample_trajectory(x, goal, m, dr, &out.calls);
    out.goals.push_back({goal[0], goal[1]});
    out.trajectories.push_back(tensor_to_track(traj));
  }
  const auto t1 = std::chrono::steady_clock::now();
  out.wall_ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  out.wall_ns_total = out.wall_ns;
  return out;
}

// Conventional single-chain conditional sampler: y_{S_base} ~ N(0, I), then
// the full-length trajectory chain. Goals are reported as endpoints.
inline PredictionSet predict_baseline(const ContextVector& x, const ModelBundle& m,
                                      std::size_t count, const Rng& rng) {
  if (m.kind != ModelKind::baseline) throw ShapeError("predict_baseline: not a baseline model");
  if (count < 1) throw ShapeError("predict_baseline: count must be >= 1");
  PredictionSet out;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t d = 0; d < count; ++d) {
    Rng dr = rng.split(d);
    Tensor y = dr.gaussian_tensor({m.net.t_q, 2});
    std::size_t n = 0;
    y = reverse_denoise_chain(std::move(y), m.traj_sched, [&](const Tensor& state, std::size_t s) {
      return pathnet_eval(state, x, s, m.traj_sched.steps, m.net, m.params);
    }, &n);
    out.calls.pathnet += n;
    const auto track = tensor_to_track(y);
    out.goals.push_back(track.back());
    out.trajectories.push_back(track);
  }
  const auto t1 = std::chrono::steady_clock::now();
  out.wall_ns = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  out.wall_ns_total = out.wall_ns;
  return out;
}

// Scene-unit entry point: encodes the sample, runs the right sampler for the
// model kind, and maps results back to scene coordinates.
inline PredictionSet predict_sample(const ModelBundle& m, const TrajectorySample& s,
                                    std::size_t count, const Rng& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  const Vec2 origin = s.last_observed();
  const Tensor hist = normalize_track(s.history, origin, m.coord_scale);
  std::vector<Tensor> nbrs;
  for (const auto& n : s.neighbors) nbrs.push_back(normalize_track(n, origin, m.coord_scale));
  const ContextVector x = encode(hist, nbrs, m.net, m.params);

  PredictionSet out = m.kind == ModelKind::idm ? predict(x, m, count, rng)
                                               : predict_baseline(x, m, count, rng);
  for (auto& traj : out.trajectories) {
    for (Vec2& p : traj) p = origin + p * m.coord_scale;
  }
  for (Vec2& g : out.goals) g = origin + g * m.coord_scale;
  const auto t1 = std::chrono::steady_clock::now();
  out.wall_ns_total = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  return out;
}

// ====== prediction CSV ======
// Columns: scene_id,agent_id,sample_idx,t,x,y

inline void write_prediction_csv(const std::string& path,
                                 const std::vector<const TrajectorySample*>& agents,
                                 const std::vector<PredictionSet>& preds) {
  if (agents.size() != preds.size()) {
    throw ShapeError("write_prediction_csv: one PredictionSet per agent required");
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "scene_id,agent_id,sample_idx,t,x,y\n";
  for (std::size_t a = 0; a < agents.size(); ++a) {
    for (std::size_t d = 0; d < preds[a].trajectories.size(); ++d) {
      const auto& traj = preds[a].trajectories[d];
      for (std::size_t t = 0; t < traj.size(); ++t) {
        os << agents[a]->scene_id << "," << agents[a]->agent_id << "," << d << "," << t << ","
           << detail::fmt_coord(traj[t].x) << "," << detail::fmt_coord(traj[t].y) << "\n";
      }
    }
  }
  if (!os) throw IoError("write failure: " + path);
}

// (scene_id, agent_id) → sample-indexed trajectories.
inline std::map<std::pair<long long, long long>, std::vector<std::vector<Vec2>>>
load_prediction_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw IoError("empty file: " + path);
  ++line_no;
  if (detail::split_csv_line(line) !=
      std::vector<std::string>{"scene_id", "agent_id", "sample_idx", "t", "x", "y"}) {
    throw IoError("missing or misordered columns; expected scene_id,agent_id,sample_idx,t,x,y");
  }
  std::map<std::pair<long long, long long>, std::vector<std::vector<Vec2>>> out;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 6) {
      throw IoError("line " + std::to_string(line_no) + ": expected 6 fields");
    }
    const long long scene = static_cast<long long>(detail::parse_num(cols[0], line_no, "scene_id"));
    const long long agent = static_cast<long long>(detail::parse_num(cols[1], line_no, "agent_id"));
    const std::size_t d = static_cast<std::size_t>(detail::parse_num(cols[2], line_no, "sample_idx"));
    const std::size_t t = static_cast<std::size_t>(detail::parse_num(cols[3], line_no, "t"));
    const double px = detail::parse_num(cols[4], line_no, "x");
    const double py = detail::parse_num(cols[5], line_no, "y");
    auto& sets = out[{scene, agent}];
    if (sets.size() <= d) sets.resize(d + 1);
    if (sets[d].size() != t) {
      throw IoError("line " + std::to_string(line_no) + ": non-contiguous t for sample " +
                    std::to_string(d));
    }
    sets[d].push_back({px, py});
  }
  if (out.empty()) throw IoError("no predictions in " + path);
  return out;
}

}  // namespace idm
