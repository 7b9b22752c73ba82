#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idm/checkpoint.hpp"
#include "idm/data.hpp"
#include "idm/networks.hpp"
#include "idm/params.hpp"
#include "idm/rng.hpp"
#include "idm/schedule.hpp"

namespace idm {

enum class ModelKind { idm, baseline };

inline std::string kind_name(ModelKind k) { return k == ModelKind::idm ? "idm" : "baseline"; }

struct ScheduleSpec {
  std::size_t steps = 0;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const { return make_linear_schedule(steps, beta_start, beta_end); }
};

inline ScheduleSpec default_goal_schedule() { return {100, 1e-4, 0.02}; }
inline ScheduleSpec default_traj_schedule() { return {10, 1e-4, 0.05}; }
inline ScheduleSpec default_baseline_schedule() { return {100, 1e-4, 0.02}; }

// Everything a sampler or trainer needs: weights, architecture, chains, and
// the coordinate normalization the weights were trained under.
struct ModelBundle {
  ModelKind kind = ModelKind::idm;
  NetworkConfig net;
  ScheduleSpec goal_spec;  // unused by the baseline
  ScheduleSpec traj_spec;  // the baseline's single long chain lives here
  NoiseSchedule goal_sched;
  NoiseSchedule traj_sched;
  double coord_scale = 1.0;  // divisor applied after shifting to the last observed point
  ParamSet params;
};

inline ModelBundle make_model(ModelKind kind, const NetworkConfig& net,
                              const ScheduleSpec& goal_spec, const ScheduleSpec& traj_spec,
                              std::uint64_t seed, double coord_scale = 1.0) {
  ModelBundle m;
  m.kind = kind;
  m.net = net;
  m.goal_spec = goal_spec;
  m.traj_spec = traj_spec;
  if (kind == ModelKind::idm) m.goal_sched = goal_spec.build();
  m.traj_sched = traj_spec.build();
  m.coord_scale = coord_scale;
  Rng rng = Rng(seed).split(0x9e1);
  init_networks(m.params, net, rng, kind == ModelKind::baseline);
  return m;
}

// ====== checkpoint round trip ======

namespace detail {

inline std::string fmt_f64(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double meta_f64(const CheckpointData& d, const std::string& key) {
  const std::string* s = d.find_meta(key);
  if (!s) throw IoError("checkpoint missing meta key: " + key);
  return std::strtod(s->c_str(), nullptr);
}

inline std::string meta_str(const CheckpointData& d, const std::string& key) {
  const std::string* s = d.find_meta(key);
  if (!s) throw IoError("checkpoint missing meta key: " + key);
  return *s;
}

}  // namespace detail

inline void save_model(const std::string& path, const ModelBundle& m) {
  CheckpointData d;
  auto put = [&d](const std::string& k, const std::string& v) { d.meta.emplace_back(k, v); };
  put("format", "idm-model");
  put("kind", kind_name(m.kind));
  put("net.t_p", std::to_string(m.net.t_p));
  put("net.t_q", std::to_string(m.net.t_q));
  put("net.context_width", std::to_string(m.net.context_width));
  put("net.encoder_hidden", std::to_string(m.net.encoder_hidden));
  put("net.endnet_layers", std::to_string(m.net.endnet_layers));
  put("net.endnet_width", std::to_string(m.net.endnet_width));
  put("net.priornet_backbone", m.net.priornet_backbone);
  put("net.pathnet_backbone", m.net.pathnet_backbone);
  put("net.priornet_width", std::to_string(m.net.priornet_width));
  put("net.pathnet_width", std::to_string(m.net.pathnet_width));
  put("net.step_embed_width", std::to_string(m.net.step_embed_width));
  put("goal.steps", std::to_string(m.goal_spec.steps));
  put("goal.beta_start", detail::fmt_f64(m.goal_spec.beta_start));
  put("goal.beta_end", detail::fmt_f64(m.goal_spec.beta_end));
  put("traj.steps", std::to_string(m.traj_spec.steps));
  put("traj.beta_start", detail::fmt_f64(m.traj_spec.beta_start));
  put("traj.beta_end", detail::fmt_f64(m.traj_spec.beta_end));
  put("coord_scale", detail::fmt_f64(m.coord_scale));
  put("adam_step", std::to_string(m.params.adam_step));

  for (std::size_t i = 0; i < m.params.count(); ++i) {
    const Param& p = m.params.param(i);
    d.tensors.emplace_back(p.name, p.value);
  }
  for (std::size_t i = 0; i < m.params.count(); ++i) {
    const Param& p = m.params.param(i);
    d.tensors.emplace_back("opt.m." + p.name, p.m);
    d.tensors.emplace_back("opt.v." + p.name, p.v);
  }
  save_checkpoint(path, d);
}

inline ModelBundle load_model(const std::string& path) {
  const CheckpointData d = load_checkpoint(path);
  if (detail::meta_str(d, "format") != "idm-model") {
    throw IoError("not a model checkpoint: " + path);
  }
  ModelBundle m;
  const std::string kind = detail::meta_str(d, "kind");
  if (kind == "idm") m.kind = ModelKind::idm;
  else if (kind == "baseline") m.kind = ModelKind::baseline;
  else throw IoError("unknown model kind: " + kind);

  m.net.t_p = static_cast<std::size_t>(detail::meta_f64(d, "net.t_p"));
  m.net.t_q = static_cast<std::size_t>(detail::meta_f64(d, "net.t_q"));
  m.net.context_width = static_cast<std::size_t>(detail::meta_f64(d, "net.context_width"));
  m.net.encoder_hidden = static_cast<std::size_t>(detail::meta_f64(d, "net.encoder_hidden"));
  m.net.endnet_layers = static_cast<std::size_t>(detail::meta_f64(d, "net.endnet_layers"));
  m.net.endnet_width = static_cast<std::size_t>(detail::meta_f64(d, "net.endnet_width"));
  m.net.priornet_backbone = detail::meta_str(d, "net.priornet_backbone");
  m.net.pathnet_backbone = detail::meta_str(d, "net.pathnet_backbone");
  m.net.priornet_width = static_cast<std::size_t>(detail::meta_f64(d, "net.priornet_width"));
  m.net.pathnet_width = static_cast<std::size_t>(detail::meta_f64(d, "net.pathnet_width"));
  m.net.step_embed_width = static_cast<std::size_t>(detail::meta_f64(d, "net.step_embed_width"));
  m.net.validate();

  m.goal_spec = {static_cast<std::size_t>(detail::meta_f64(d, "goal.steps")),
                 detail::meta_f64(d, "goal.beta_start"), detail::meta_f64(d, "goal.beta_end")};
  m.traj_spec = {static_cast<std::size_t>(detail::meta_f64(d, "traj.steps")),
                 detail::meta_f64(d, "traj.beta_start"), detail::meta_f64(d, "traj.beta_end")};
  if (m.kind == ModelKind::idm) m.goal_sched = m.goal_spec.build();
  m.traj_sched = m.traj_spec.build();
  m.coord_scale = detail::meta_f64(d, "coord_scale");
  m.params.adam_step = static_cast<std::uint64_t>(detail::meta_f64(d, "adam_step"));

  for (const auto& [name, t] : d.tensors) {
    if (name.rfind("opt.", 0) == 0) continue;
    m.params.add(name, t);
  }
  for (std::size_t i = 0; i < m.params.count(); ++i) {
    Param& p = m.params.param(i);
    const Tensor* tm = d.find_tensor("opt.m." + p.name);
    const Tensor* tv = d.find_tensor("opt.v." + p.name);
    if (!tm || !tv) throw IoError("checkpoint missing optimizer state for " + p.name);
    p.m = *tm;
    p.v = *tv;
  }
  return m;
}

// ====== coordinate normalization ======
//
// Model space: every track is shifted so the agent's last observed point is
// the origin, then divided by coord_scale so the diffusion chains operate
// near unit scale. Predictions are mapped back on output.

inline double estimate_coord_scale(const Dataset& ds) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const TrajectorySample& s : ds.samples) {
    const Vec2 rel = s.future.back() - s.last_observed();
    acc += rel.x * rel.x + rel.y * rel.y;
    ++n;
  }
  if (n == 0) return 1.0;
  const double rms = std::sqrt(acc / static_cast<double>(n));
  return rms > 1e-9 ? rms : 1.0;
}

inline Tensor normalize_track(const std::vector<Vec2>& track, const Vec2& origin,
                              double scale) {
  Tensor t({track.size(), 2});
  for (std::size_t i = 0; i < track.size(); ++i) {
    t.at(i, 0) = (track[i].x - origin.x) / scale;
    t.at(i, 1) = (track[i].y - origin.y) / scale;
  }
  return t;
}

// Step-major encoder batch over the selected samples.
inline EncoderInput build_encoder_input(const Dataset& ds,
                                        const std::vector<std::size_t>& idx,
                                        const NetworkConfig& net, double scale) {
  EncoderInput in;
  in.batch = idx.size();
  in.self_steps.assign(net.t_p, Tensor({idx.size(), 2}));
  std::size_t n_nbr = 0;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const TrajectorySample& s = ds.samples[idx[b]];
    if (s.history.size() != net.t_p) throw ShapeError("build_encoder_input: history length mismatch");
    n_nbr += s.neighbors.size();
  }
  if (n_nbr > 0) in.nbr_steps.assign(net.t_p, Tensor({n_nbr, 2}));

  std::size_t nb_row = 0;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const TrajectorySample& s = ds.samples[idx[b]];
    const Vec2 origin = s.last_observed();
    for (std::size_t t = 0; t < net.t_p; ++t) {
      in.self_steps[t].at(b, 0) = (s.history[t].x - origin.x) / scale;
      in.self_steps[t].at(b, 1) = (s.history[t].y - origin.y) / scale;
    }
    std::vector<Tensor> nbrs;
    for (const auto& nbr : s.neighbors) {
      if (nbr.size() != net.t_p) throw ShapeError("build_encoder_input: neighbour length mismatch");
      nbrs.push_back(normalize_track(nbr, origin, scale));
    }
    for (std::size_t n : canonical_neighbor_order(nbrs)) {
      for (std::size_t t = 0; t < net.t_p; ++t) {
        in.nbr_steps[t].at(nb_row, 0) = nbrs[n].at(t, 0);
        in.nbr_steps[t].at(nb_row, 1) = nbrs[n].at(t, 1);
      }
      in.nbr_segment.push_back(b);
      ++nb_row;
    }
  }
  return in;
}

// Normalized futures, flattened to [B, 2·t_q] with time fastest.
inline Tensor future_rows(const Dataset& ds, const std::vector<std::size_t>& idx,
                          std::size_t t_q, double scale) {
  Tensor y({idx.size(), 2 * t_q});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const TrajectorySample& s = ds.samples[idx[b]];
    if (s.future.size() != t_q) throw ShapeError("future_rows: future length mismatch");
    const Vec2 origin = s.last_observed();
    for (std::size_t t = 0; t < t_q; ++t) {
      y.at(b, 2 * t) = (s.future[t].x - origin.x) / scale;
      y.at(b, 2 * t + 1) = (s.future[t].y - origin.y) / scale;
    }
  }
  return y;
}

// Normalized ground-truth goals c_0 (the last future point), [B, 2].
inline Tensor goal_rows(const Dataset& ds, const std::vector<std::size_t>& idx,
                        double scale) {
  Tensor g({idx.size(), 2});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const TrajectorySample& s = ds.samples[idx[b]];
    const Vec2 origin = s.last_observed();
    g.at(b, 0) = (s.future.back().x - origin.x) / scale;
    g.at(b, 1) = (s.future.back().y - origin.y) / scale;
  }
  return g;
}

// Model-space flat trajectory back to scene units.
inline std::vector<Vec2> denormalize_flat(const Tensor& flat, const Vec2& origin,
                                          double scale) {
  if (flat.size() % 2 != 0) throw ShapeError("denormalize_flat: odd element count");
  std::vector<Vec2> out(flat.size() / 2);
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = {origin.x + flat[2 * t] * scale, origin.y + flat[2 * t + 1] * scale};
  }
  return out;
}

}  // namespace idm
