#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "idm/autodiff.hpp"
#include "idm/params.hpp"
#include "idm/rng.hpp"
#include "idm/tensor.hpp"

namespace idm {

// Fixed-width summary of one agent's observed context.
struct ContextVector {
  Tensor x;  // shape {D}
};

struct NetworkConfig {
  std::size_t t_p = 8;
  std::size_t t_q = 12;
  std::size_t context_width = 64;   // D
  std::size_t encoder_hidden = 24;  // recurrent width for history/neighbour tracks
  std::size_t endnet_layers = 3;
  std::size_t endnet_width = 128;
  std::string priornet_backbone = "mlp";       // mlp | recurrent
  std::string pathnet_backbone = "recurrent";  // mlp | recurrent
  std::size_t priornet_width = 64;
  std::size_t pathnet_width = 48;
  std::size_t step_embed_width = 16;

  void validate() const {
    if (t_p < 1 || t_q < 1) throw ShapeError("NetworkConfig: t_p/t_q must be positive");
    if (context_width < 1 || encoder_hidden < 1 || endnet_width < 1 ||
        priornet_width < 1 || pathnet_width < 1) {
      throw ShapeError("NetworkConfig: widths must be positive");
    }
    if (endnet_layers < 1) throw ShapeError("NetworkConfig: endnet_layers must be >= 1");
    if (step_embed_width < 2 || step_embed_width % 2 != 0) {
      throw ShapeError("NetworkConfig: step_embed_width must be even and >= 2");
    }
    if (priornet_backbone != "mlp" && priornet_backbone != "recurrent") {
      throw ShapeError("NetworkConfig: priornet_backbone must be mlp or recurrent");
    }
    if (pathnet_backbone != "mlp" && pathnet_backbone != "recurrent") {
      throw ShapeError("NetworkConfig: pathnet_backbone must be mlp or recurrent");
    }
  }
};

// Sinusoidal embedding of integer step indices; injective over the step
// ranges used here, so the networks can tell k=1 from k=K.
inline Tensor step_embedding(const std::vector<std::size_t>& steps, std::size_t width) {
  Tensor e({steps.size(), width});
  const std::size_t half = width / 2;
  for (std::size_t r = 0; r < steps.size(); ++r) {
    const double k = static_cast<double>(steps[r]);
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                   static_cast<double>(half));
      e.at(r, 2 * i) = std::sin(k * freq);
      e.at(r, 2 * i + 1) = std::cos(k * freq);
    }
  }
  return e;
}

// ====== parameter construction ======

namespace detail {

inline Tensor xavier(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  Tensor w({out_dim, in_dim});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (rng.uniform() * 2.0 - 1.0) * limit;
  return w;
}

inline void init_linear(ParamSet& p, const std::string& prefix, std::size_t in_dim,
                        std::size_t out_dim, Rng& rng) {
  p.add(prefix + ".W", xavier(out_dim, in_dim, rng));
  p.add(prefix + ".b", Tensor::zeros({out_dim}));
}

inline void init_gru(ParamSet& p, const std::string& prefix, std::size_t in_dim,
                     std::size_t hidden, Rng& rng) {
  init_linear(p, prefix + ".z", in_dim + hidden, hidden, rng);
  init_linear(p, prefix + ".r", in_dim + hidden, hidden, rng);
  init_linear(p, prefix + ".h", in_dim + hidden, hidden, rng);
}

inline void init_mlp(ParamSet& p, const std::string& prefix, std::size_t in_dim,
                     std::size_t hidden, std::size_t layers, std::size_t out_dim,
                     Rng& rng) {
  std::size_t cur = in_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    init_linear(p, prefix + ".l" + std::to_string(l), cur, hidden, rng);
    cur = hidden;
  }
  init_linear(p, prefix + ".out", cur, out_dim, rng);
}

}  // namespace detail

// Registers all trainable tensors. The baseline model carries only the
// encoder and a trajectory denoiser; the full model adds EndNet and PriorNet.
inline void init_networks(ParamSet& p, const NetworkConfig& cfg, Rng& rng,
                          bool baseline = false) {
  cfg.validate();
  const std::size_t H = cfg.encoder_hidden;
  const std::size_t D = cfg.context_width;
  const std::size_t E = cfg.step_embed_width;

  detail::init_gru(p, "enc.self", 2, H, rng);
  detail::init_gru(p, "enc.nbr", 2, H, rng);
  detail::init_linear(p, "enc.proj", 2 * H, D, rng);

  if (!baseline) {
    detail::init_mlp(p, "end", 2 + D + E, cfg.endnet_width, cfg.endnet_layers, 2, rng);
    if (cfg.priornet_backbone == "mlp") {
      detail::init_mlp(p, "prior.mlp", D + 2, cfg.priornet_width, 2, 2 * cfg.t_q, rng);
    } else {
      detail::init_gru(p, "prior.rnn", D + 2, cfg.priornet_width, rng);
      detail::init_linear(p, "prior.rnn.out", cfg.priornet_width, 2, rng);
    }
  }

  if (cfg.pathnet_backbone == "mlp") {
    detail::init_mlp(p, "path.mlp", 2 * cfg.t_q + D + E, cfg.pathnet_width, 2, 2 * cfg.t_q, rng);
  } else {
    // per-step input: own point, trajectory centroid, context, step embedding
    detail::init_gru(p, "path.rnn", 2 + 2 + D + E, cfg.pathnet_width, rng);
    detail::init_linear(p, "path.rnn.out", cfg.pathnet_width, 2, rng);
  }
}

// ====== tape-level forward passes ======
//
// All passes are batched: leading dimension B. A NetRef bundles the tape and
// the parameter leaves created for this pass.

struct NetRef {
  Tape& tape;
  const ParamSet& params;
  const TapeBinding& bind;

  Var p(const std::string& name) const { return bind.vars[params.index_of(name)]; }
};

namespace detail {

inline Var linear(const NetRef& net, const std::string& prefix, Var in) {
  return net.tape.affine(in, net.p(prefix + ".W"), net.p(prefix + ".b"));
}

inline Var mlp(const NetRef& net, const std::string& prefix, Var in, std::size_t layers) {
  Var h = in;
  for (std::size_t l = 0; l < layers; ++l) {
    h = net.tape.tanh_op(linear(net, prefix + ".l" + std::to_string(l), h));
  }
  return linear(net, prefix + ".out", h);
}

inline Var gru_step(const NetRef& net, const std::string& prefix, Var x, Var h) {
  Tape& t = net.tape;
  const Var xh = t.concat_cols({x, h});
  const Var z = t.sigmoid(linear(net, prefix + ".z", xh));
  const Var r = t.sigmoid(linear(net, prefix + ".r", xh));
  const Var xrh = t.concat_cols({x, t.mul(r, h)});
  const Var cand = t.tanh_op(linear(net, prefix + ".h", xrh));
  // h' = (1-z)*h + z*cand
  return t.add(t.mul(t.affine_const(z, -1.0, 1.0), h), t.mul(z, cand));
}

// Runs the recurrence over a step-major input sequence; returns every hidden
// state (last element is the track summary).
inline std::vector<Var> gru_unroll(const NetRef& net, const std::string& prefix,
                                   const std::vector<Var>& steps, std::size_t rows,
                                   std::size_t hidden) {
  std::vector<Var> hs;
  Var h = net.tape.leaf(Tensor::zeros({rows, hidden}));
  for (Var x : steps) {
    h = gru_step(net, prefix, x, h);
    hs.push_back(h);
  }
  return hs;
}

}  // namespace detail

// Normalized batch inputs for the encoder, step-major. Neighbour tracks of
// every batch row are stacked; nbr_segment maps each stacked track to its row.
struct EncoderInput {
  std::size_t batch = 0;
  std::vector<Tensor> self_steps;        // t_p tensors of shape [B, 2]
  std::vector<Tensor> nbr_steps;         // t_p tensors of shape [N, 2]; empty if N == 0
  std::vector<std::size_t> nbr_segment;  // N entries in [0, B)
};

inline Var encoder_forward(const NetRef& net, const NetworkConfig& cfg,
                           const EncoderInput& in) {
  if (in.self_steps.size() != cfg.t_p) {
    throw ShapeError("encoder_forward: history must have t_p steps");
  }
  Tape& t = net.tape;
  std::vector<Var> self_vars;
  for (const Tensor& s : in.self_steps) self_vars.push_back(t.leaf(s));
  const Var h_self =
      detail::gru_unroll(net, "enc.self", self_vars, in.batch, cfg.encoder_hidden).back();

  Var h_nbr;
  if (!in.nbr_segment.empty()) {
    std::vector<Var> nbr_vars;
    for (const Tensor& s : in.nbr_steps) nbr_vars.push_back(t.leaf(s));
    const Var per_track =
        detail::gru_unroll(net, "enc.nbr", nbr_vars, in.nbr_segment.size(), cfg.encoder_hidden)
            .back();
    h_nbr = t.segment_sum(per_track, in.nbr_segment, in.batch);
  } else {
    h_nbr = t.leaf(Tensor::zeros({in.batch, cfg.encoder_hidden}));
  }

  return t.tanh_op(detail::linear(net, "enc.proj", t.concat_cols({h_self, h_nbr})));
}

// Noise prediction for the goal chain: c_k [B,2], context [B,D], one step
// index per row.
inline Var endnet_forward(const NetRef& net, const NetworkConfig& cfg, Var c_k, Var x,
                          const std::vector<std::size_t>& k) {
  if (k.size() != net.tape.value(c_k).rows()) {
    throw ShapeError("endnet_forward: one step index per batch row required");
  }
  const Var emb = net.tape.leaf(step_embedding(k, cfg.step_embed_width));
  const Var in = net.tape.concat_cols({c_k, x, emb});
  return detail::mlp(net, "end", in, cfg.endnet_layers);
}

// Mean of the learned trajectory prior: context [B,D] + goal [B,2] → [B, 2·t_q].
inline Var priornet_forward(const NetRef& net, const NetworkConfig& cfg, Var x, Var goal) {
  const Var in = net.tape.concat_cols({x, goal});
  if (cfg.priornet_backbone == "mlp") {
    return detail::mlp(net, "prior.mlp", in, 2);
  }
  const std::size_t rows = net.tape.value(x).rows();
  std::vector<Var> steps(cfg.t_q, in);
  const auto hs = detail::gru_unroll(net, "prior.rnn", steps, rows, cfg.priornet_width);
  std::vector<Var> outs;
  for (Var h : hs) outs.push_back(detail::linear(net, "prior.rnn.out", h));
  return net.tape.concat_cols(outs);
}

// Noise prediction for the trajectory chain: y_s [B, 2·t_q] flattened
// row-major (t fastest), context [B,D], per-row step index. The same routine
// serves the baseline's long-chain denoiser via its own parameter set.
inline Var pathnet_forward(const NetRef& net, const NetworkConfig& cfg, Var y, Var x,
                           const std::vector<std::size_t>& s) {
  Tape& t = net.tape;
  if (t.value(y).cols() != 2 * cfg.t_q) {
    throw ShapeError("pathnet_forward: y must have 2*t_q columns");
  }
  if (s.size() != t.value(y).rows()) {
    throw ShapeError("pathnet_forward: one step index per batch row required");
  }
  const Var emb = t.leaf(step_embedding(s, cfg.step_embed_width));
  if (cfg.pathnet_backbone == "mlp") {
    const Var in = t.concat_cols({y, x, emb});
    return detail::mlp(net, "path.mlp", in, 2);
  }

  // centroid of the noisy trajectory: coarse global signal for each step cell
  Var centroid = t.slice_cols(y, 0, 2);
  for (std::size_t q = 1; q < cfg.t_q; ++q) {
    centroid = t.add(centroid, t.slice_cols(y, 2 * q, 2 * q + 2));
  }
  centroid = t.scale(centroid, 1.0 / static_cast<double>(cfg.t_q));

  const std::size_t rows = t.value(y).rows();
  std::vector<Var> steps;
  for (std::size_t q = 0; q < cfg.t_q; ++q) {
    steps.push_back(t.concat_cols({t.slice_cols(y, 2 * q, 2 * q + 2), centroid, x, emb}));
  }
  const auto hs = detail::gru_unroll(net, "path.rnn", steps, rows, cfg.pathnet_width);
  std::vector<Var> outs;
  for (Var h : hs) outs.push_back(detail::linear(net, "path.rnn.out", h));
  return t.concat_cols(outs);
}

// ====== single-sample convenience wrappers (no-grad) ======

namespace detail {

inline Tensor row_tensor(const Tensor& flat) {
  Tensor t({1, flat.size()});
  for (std::size_t i = 0; i < flat.size(); ++i) t[i] = flat[i];
  return t;
}

inline Tensor squeeze_row(const Tensor& t) {
  Tensor out({t.cols()});
  for (std::size_t i = 0; i < t.cols(); ++i) out[i] = t[i];
  return out;
}

}  // namespace detail

// Pooling sums neighbour encodings, and float addition is order-sensitive, so
// neighbour tracks are put into a canonical (lexicographic) order first. This
// makes permutation invariance exact, not just approximate.
inline std::vector<std::size_t> canonical_neighbor_order(const std::vector<Tensor>& tracks) {
  std::vector<std::size_t> order(tracks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Tensor &ta = tracks[a], &tb = tracks[b];
    for (std::size_t i = 0; i < ta.size() && i < tb.size(); ++i) {
      if (ta[i] != tb[i]) return ta[i] < tb[i];
    }
    return ta.size() < tb.size();
  });
  return order;
}

// history/neighbour tracks must already be normalized (see the model layer).
inline ContextVector encode(const Tensor& history,
                            const std::vector<Tensor>& neighbors,
                            const NetworkConfig& cfg, const ParamSet& params) {
  if (history.rank() != 2 || history.rows() != cfg.t_p || history.cols() != 2) {
    throw ShapeError("encode: history must be [t_p, 2]");
  }
  EncoderInput in;
  in.batch = 1;
  in.self_steps.resize(cfg.t_p);
  for (std::size_t t = 0; t < cfg.t_p; ++t) {
    in.self_steps[t] = Tensor({1, 2}, {history.at(t, 0), history.at(t, 1)});
  }
  if (!neighbors.empty()) {
    for (const Tensor& nb : neighbors) {
      if (nb.rank() != 2 || nb.rows() != cfg.t_p) {
        throw ShapeError("encode: neighbour tracks must be [t_p, 2]");
      }
    }
    const std::vector<std::size_t> order = canonical_neighbor_order(neighbors);
    in.nbr_steps.assign(cfg.t_p, Tensor({neighbors.size(), 2}));
    for (std::size_t n = 0; n < order.size(); ++n) {
      const Tensor& nb = neighbors[order[n]];
      in.nbr_segment.push_back(0);
      for (std::size_t t = 0; t < cfg.t_p; ++t) {
        in.nbr_steps[t].at(n, 0) = nb.at(t, 0);
        in.nbr_steps[t].at(n, 1) = nb.at(t, 1);
      }
    }
  }
  Tape tape(false);
  const TapeBinding bind = bind_params(tape, params);
  const NetRef net{tape, params, bind};
  const Var x = encoder_forward(net, cfg, in);
  return {detail::squeeze_row(tape.value(x))};
}

inline Tensor endnet_eval(const Tensor& c_k, const ContextVector& x, std::size_t k,
                          std::size_t K, const NetworkConfig& cfg, const ParamSet& params) {
  if (k < 1 || k > K) throw ShapeError("endnet_eval: step out of range");
  Tape tape(false);
  const TapeBinding bind = bind_params(tape, params);
  const NetRef net{tape, params, bind};
  const Var out = endnet_forward(net, cfg, tape.leaf(detail::row_tensor(c_k)),
                                 tape.leaf(detail::row_tensor(x.x)), {k});
  return detail::squeeze_row(tape.value(out));
}

inline Tensor priornet_eval(const ContextVector& x, const Tensor& goal,
                            const NetworkConfig& cfg, const ParamSet& params) {
  Tape tape(false);
  const TapeBinding bind = bind_params(tape, params);
  const NetRef net{tape, params, bind};
  const Var out = priornet_forward(net, cfg, tape.leaf(detail::row_tensor(x.x)),
                                   tape.leaf(detail::row_tensor(goal)));
  const Tensor flat = detail::squeeze_row(tape.value(out));
  return Tensor({cfg.t_q, 2}, std::vector<double>(flat.data(), flat.data() + flat.size()));
}

inline Tensor pathnet_eval(const Tensor& y_s, const ContextVector& x, std::size_t s,
                           std::size_t S, const NetworkConfig& cfg, const ParamSet& params) {
  if (s < 1 || s > S) throw ShapeError("pathnet_eval: step out of range");
  if (y_s.rank() != 2 || y_s.rows() != cfg.t_q || y_s.cols() != 2) {
    throw ShapeError("pathnet_eval: y must be [t_q, 2]");
  }
  Tape tape(false);
  const TapeBinding bind = bind_params(tape, params);
  const NetRef net{tape, params, bind};
  Tensor flat_in({1, 2 * cfg.t_q});
  for (std::size_t i = 0; i < flat_in.size(); ++i) flat_in[i] = y_s[i];
  const Var out = pathnet_forward(net, cfg, tape.leaf(flat_in),
                                  tape.leaf(detail::row_tensor(x.x)), {s});
  const Tensor flat = tape.value(out);
  return Tensor({cfg.t_q, 2}, std::vector<double>(flat.data(), flat.data() + flat.size()));
}

}  // namespace idm
