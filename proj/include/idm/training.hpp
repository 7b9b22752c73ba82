#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "idm/autodiff.hpp"
#include "idm/data.hpp"
#include "idm/model.hpp"
#include "idm/networks.hpp"
#include "idm/params.hpp"
#include "idm/rng.hpp"
#include "idm/schedule.hpp"

namespace idm {

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;
  double lambda1 = 1.0;
  double lambda2 = 0.5;
  std::size_t epochs = 1;
  std::size_t start_epoch = 0;  // resume point; epochs run [start_epoch, epochs)
  std::uint64_t seed = 0;
  double clip_norm = 10.0;
  double divergence_limit = 1e6;

  void validate() const {
    if (batch_size < 1) throw ShapeError("TrainConfig: batch_size must be >= 1");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ShapeError("TrainConfig: lambdas must be >= 0");
    if (!(learning_rate > 0.0)) throw ShapeError("TrainConfig: learning_rate must be > 0");
  }
};

struct LossBreakdown {
  double l_goal = 0.0;
  double l_diff = 0.0;
  double l_prior = 0.0;
  double l_total = 0.0;
};

inline LossBreakdown compose_losses(double l_goal, double l_diff, double l_prior,
                                    double lambda1, double lambda2) {
  return {l_goal, l_diff, l_prior, l_goal + lambda1 * l_diff + lambda2 * l_prior};
}

// Optional per-step introspection for tests and diagnostics.
struct StepDebug {
  std::vector<std::size_t> sampled_k;
  std::vector<std::size_t> sampled_s;
  std::vector<double> param_grad_norms;  // per parameter, pre-clip
  double grad_norm = 0.0;                // global, pre-clip
  bool prior_used_true_goal = false;
};

// Per-row forward marginal: row b gets its own step index.
inline Tensor noised_rows(const Tensor& clean, const std::vector<std::size_t>& steps,
                          const NoiseSchedule& sched, const Tensor& noise) {
  check_same_shape(clean, noise, "noised_rows");
  if (steps.size() != clean.rows()) throw ShapeError("noised_rows: one step per row required");
  Tensor out(clean.shape());
  const std::size_t c = clean.cols();
  for (std::size_t b = 0; b < clean.rows(); ++b) {
    if (steps[b] < 1) throw ShapeError("noised_rows: step index must be >= 1");
    const double ab = sched.alpha_bar_at(steps[b]);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    for (std::size_t j = 0; j < c; ++j) {
      out.at(b, j) = sa * clean.at(b, j) + sn * noise.at(b, j);
    }
  }
  return out;
}

// Teacher-forced prior loss for one sample: ‖μ_φ(x, c_0) − √ᾱ_S·y_0‖² with the
// ground-truth goal. Inputs are in normalized model space.
inline double compute_prior_loss(const Tensor& y0, const Tensor& goal_true,
                                 const ContextVector& x, const NoiseSchedule& traj_sched,
                                 const NetworkConfig& cfg, const ParamSet& params) {
  const Tensor mu = priornet_eval(x, goal_true, cfg, params);
  const double sab = std::sqrt(traj_sched.alpha_bar_at(traj_sched.steps));
  return sum_squared_diff(mu, scaled(y0, sab));
}

// One joint optimizer step over the whole bundle. Draw order from rng is
// fixed: goal steps, goal noise, trajectory steps, trajectory noise.
inline LossBreakdown training_step(const Dataset& ds, const std::vector<std::size_t>& idx,
                                   ModelBundle& model, const TrainConfig& cfg, Rng& rng,
                                   StepDebug* dbg = nullptr) {
  cfg.validate();
  if (idx.empty()) throw ShapeError("training_step: empty batch");
  const std::size_t B = idx.size();
  const bool is_idm = model.kind == ModelKind::idm;

  const EncoderInput enc_in = build_encoder_input(ds, idx, model.net, model.coord_scale);
  const Tensor y0 = future_rows(ds, idx, model.net.t_q, model.coord_scale);
  const Tensor c0 = goal_rows(ds, idx, model.coord_scale);

  std::vector<std::size_t> ks, ss;
  Tensor eps_goal, c_k;
  if (is_idm) {
    ks.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
      ks[b] = static_cast<std::size_t>(rng.uniform_int(1, model.goal_sched.steps));
    }
    eps_goal = rng.gaussian_tensor({B, 2});
    c_k = noised_rows(c0, ks, model.goal_sched, eps_goal);
  }
  ss.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    ss[b] = static_cast<std::size_t>(rng.uniform_int(1, model.traj_sched.steps));
  }
  const Tensor eps_traj = rng.gaussian_tensor({B, 2 * model.net.t_q});
  const Tensor y_s = noised_rows(y0, ss, model.traj_sched, eps_traj);

  Tape tape(true);
  const TapeBinding bind = bind_params(tape, model.params);
  const NetRef net{tape, model.params, bind};

  const Var x = encoder_forward(net, model.net, enc_in);

  std::vector<Var> terms;
  double l_goal = 0.0, l_diff = 0.0, l_prior = 0.0;

  if (is_idm) {
    const Var eps_hat = endnet_forward(net, model.net, tape.leaf(c_k), x, ks);
    const Var l_goal_v = tape.mse_sum_mean(eps_hat, eps_goal);
    l_goal = tape.value(l_goal_v)[0];
    terms.push_back(l_goal_v);
  }
  if (cfg.lambda1 != 0.0) {
    const Var pred = pathnet_forward(net, model.net, tape.leaf(y_s), x, ss);
    const Var l_diff_v = tape.mse_sum_mean(pred, eps_traj);
    l_diff = tape.value(l_diff_v)[0];
    terms.push_back(tape.scale(l_diff_v, cfg.lambda1));
  }
  if (is_idm && cfg.lambda2 != 0.0) {
    const Var mu = priornet_forward(net, model.net, x, tape.leaf(c0));
    const double sab = std::sqrt(model.traj_sched.alpha_bar_at(model.traj_sched.steps));
    const Var l_prior_v = tape.mse_sum_mean(mu, scaled(y0, sab));
    l_prior = tape.value(l_prior_v)[0];
    terms.push_back(tape.scale(l_prior_v, cfg.lambda2));
    if (dbg) dbg->prior_used_true_goal = true;  // input above is literally c0
  }

  Var total = terms.empty() ? tape.leaf(Tensor::scalar(0.0)) : terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);

  const LossBreakdown bd = compose_losses(l_goal, l_diff, l_prior, cfg.lambda1, cfg.lambda2);
  if (!std::isfinite(bd.l_total) || bd.l_total > cfg.divergence_limit) {
    throw NumericError("training diverged: l_total=" + std::to_string(bd.l_total) +
                       " (goal=" + std::to_string(bd.l_goal) +
                       " diff=" + std::to_string(bd.l_diff) +
                       " prior=" + std::to_string(bd.l_prior) + ")");
  }

  tape.backward(total);
  std::vector<Tensor> grads = collect_grads(tape, model.params, bind);
  if (dbg) {
    dbg->sampled_k = ks;
    dbg->sampled_s = ss;
    dbg->param_grad_norms.clear();
    for (const Tensor& g : grads) {
      double sq = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
      dbg->param_grad_norms.push_back(std::sqrt(sq));
    }
  }
  const double norm = clip_global_norm(grads, cfg.clip_norm);
  if (dbg) dbg->grad_norm = norm;

  AdamConfig adam;
  adam.lr = cfg.learning_rate;
  adam_step(model.params, grads, adam);
  return bd;
}

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, i - 1));
    std::swap(idx[i - 1], idx[j]);
  }
}

// Epoch loop: shuffled mini-batches, one checkpoint per epoch, CSV step log.
// Each epoch reseeds from (seed, epoch), so resuming from the epoch-e
// checkpoint with start_epoch = e+1 continues bit-identically.
inline ModelBundle train(const Dataset& ds, ModelBundle model, const TrainConfig& cfg,
                         const std::string& checkpoint_dir,
                         const std::string& log_path = "") {
  cfg.validate();
  if (ds.samples.empty()) throw ShapeError("train: empty dataset");
  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

  std::ofstream log;
  if (!log_path.empty()) {
    const bool fresh = cfg.start_epoch == 0 || !std::filesystem::exists(log_path);
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot open training log: " + log_path);
    if (fresh) log << "step,epoch,l_goal,l_diff,l_prior,l_total,wall_ms\n";
  }

  const Rng root(cfg.seed);
  std::vector<std::size_t> idx(ds.samples.size());
  const std::size_t steps_per_epoch =
      (ds.samples.size() + cfg.batch_size - 1) / cfg.batch_size;

  for (std::size_t epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
    Rng erng = root.split(0xE70C0ULL + epoch);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle_indices(idx, erng);

    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(lo + cfg.batch_size, idx.size());
      const std::vector<std::size_t> batch(idx.begin() + lo, idx.begin() + hi);

      const auto t0 = std::chrono::steady_clock::now();
      const LossBreakdown bd = training_step(ds, batch, model, cfg, erng);
      const auto t1 = std::chrono::steady_clock::now();
      const double wall_ms =
          std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count();

      if (log) {
        log << epoch * steps_per_epoch + b << "," << epoch << "," << bd.l_goal << ","
            << bd.l_diff << "," << bd.l_prior << "," << bd.l_total << "," << wall_ms << "\n";
      }
    }
    if (!checkpoint_dir.empty()) {
      save_model(checkpoint_dir + "/epoch_" + std::to_string(epoch) + ".ckpt", model);
    }
  }
  return model;
}

}  // namespace idm
