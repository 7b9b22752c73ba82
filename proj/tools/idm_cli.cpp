// Command-line surface over the idm library: dataset synthesis, training,
// sampling, evaluation, benchmarking, plotting, and the chain-length sweep.
//
// Config layering, weakest to strongest: built-in defaults, --config file,
// IDM_SEED environment variable (seed only), command-line flags. The fully
// resolved configuration is written next to every primary output.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "idm/idm.hpp"

namespace {

using namespace idm;

// One string slot per registered flag; values land in the RunConfig only for
// flags the user actually passed, preserving the layering order.
struct FlagSet {
  struct Slot {
    std::string key;
    CLI::Option* opt = nullptr;
    const std::string* value = nullptr;
  };
  // deque so element addresses survive the move into the dispatch map:
  // CLI11 keeps references to these slots
  std::deque<std::string> store;
  std::vector<Slot> slots;
  const std::string* config_path = nullptr;
  CLI::Option* config_opt = nullptr;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key,
           const std::string& help) {
    store.emplace_back();
    slots.push_back({key, cmd->add_option(flag, store.back(), help), &store.back()});
  }

  void addConfigFlag(CLI::App* cmd) {
    store.emplace_back();
    config_path = &store.back();
    config_opt = cmd->add_option("--config", store.back(),
                                 "config file ([section] headers, key = value lines)");
  }

  // defaults < config file < IDM_SEED < flags
  RunConfig resolve(bool uses_seed) const {
    RunConfig cfg;
    if (config_opt && config_opt->count() > 0) cfg.load_file(*config_path);
    if (uses_seed) {
      if (const char* env = std::getenv("IDM_SEED")) cfg.set("seed", env, "env IDM_SEED");
    }
    for (const Slot& s : slots) {
      if (s.opt->count() > 0) cfg.set(s.key, *s.value, "flag");
    }
    return cfg;
  }
};

void ensureDefault(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (!cfg.has(key)) cfg.set(key, value, "default");
}

void writeMeta(const std::string& path,
               const std::vector<std::pair<std::string, std::string>>& items) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const auto& [k, v] : items) os << k << "=" << v << "\n";
}

std::string fmtF64(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::size_t> parseSizeList(const std::string& text, const std::string& key) {
  std::vector<std::size_t> out;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    char* end = nullptr;
    const long long v = std::strtoll(cur.c_str(), &end, 10);
    if (end == cur.c_str() || *end != '\0' || v < 1) {
      throw ConfigError("config key " + key + ": bad list entry '" + cur + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
    cur.clear();
  };
  for (char c : text) {
    if (c == ',') flush();
    else if (!std::isspace(static_cast<unsigned char>(c))) cur += c;
  }
  flush();
  if (out.empty()) throw ConfigError("config key " + key + ": empty list");
  return out;
}

// ====== shared flag groups ======

void addNetFlags(CLI::App* cmd, FlagSet& f) {
  f.add(cmd, "--t-p", "net.t_p", "observed history length T_P");
  f.add(cmd, "--t-q", "net.t_q", "prediction horizon T_Q");
  f.add(cmd, "--context-width", "net.context_width", "context vector width D");
  f.add(cmd, "--encoder-hidden", "net.encoder_hidden", "encoder recurrent width");
  f.add(cmd, "--endnet-layers", "net.endnet_layers", "goal denoiser depth");
  f.add(cmd, "--endnet-width", "net.endnet_width", "goal denoiser width");
  f.add(cmd, "--priornet-backbone", "net.priornet_backbone", "prior backbone: mlp | recurrent");
  f.add(cmd, "--pathnet-backbone", "net.pathnet_backbone", "path backbone: mlp | recurrent");
  f.add(cmd, "--priornet-width", "net.priornet_width", "prior network width");
  f.add(cmd, "--pathnet-width", "net.pathnet_width", "path denoiser width");
  f.add(cmd, "--step-embed-width", "net.step_embed_width", "step embedding width");
}

void addScheduleFlags(CLI::App* cmd, FlagSet& f) {
  f.add(cmd, "--goal-steps", "model.goal_steps", "goal chain length K");
  f.add(cmd, "--goal-beta-start", "model.goal_beta_start", "goal chain beta at k=1");
  f.add(cmd, "--goal-beta-end", "model.goal_beta_end", "goal chain beta at k=K");
  f.add(cmd, "--traj-steps", "model.traj_steps", "trajectory chain length S");
  f.add(cmd, "--traj-beta-start", "model.traj_beta_start", "trajectory chain beta at s=1");
  f.add(cmd, "--traj-beta-end", "model.traj_beta_end", "trajectory chain beta at s=S");
}

void addTrainHyperFlags(CLI::App* cmd, FlagSet& f, const std::string& section) {
  f.add(cmd, "--epochs", section + ".epochs", "training epochs");
  f.add(cmd, "--batch", section + ".batch", "mini-batch size");
  f.add(cmd, "--lr", section + ".lr", "Adam learning rate");
  f.add(cmd, "--lambda1", section + ".lambda1", "trajectory loss weight");
  f.add(cmd, "--lambda2", section + ".lambda2", "prior loss weight");
  f.add(cmd, "--clip", section + ".clip", "global gradient-norm clip");
}

NetworkConfig netFromConfig(RunConfig& cfg) {
  ensureDefault(cfg, "net.t_p", "8");
  ensureDefault(cfg, "net.t_q", "12");
  ensureDefault(cfg, "net.context_width", "64");
  ensureDefault(cfg, "net.encoder_hidden", "24");
  ensureDefault(cfg, "net.endnet_layers", "3");
  ensureDefault(cfg, "net.endnet_width", "128");
  ensureDefault(cfg, "net.priornet_backbone", "mlp");
  ensureDefault(cfg, "net.pathnet_backbone", "recurrent");
  ensureDefault(cfg, "net.priornet_width", "64");
  ensureDefault(cfg, "net.pathnet_width", "48");
  ensureDefault(cfg, "net.step_embed_width", "16");
  NetworkConfig net;
  net.t_p = cfg.size_or("net.t_p", net.t_p);
  net.t_q = cfg.size_or("net.t_q", net.t_q);
  net.context_width = cfg.size_or("net.context_width", net.context_width);
  net.encoder_hidden = cfg.size_or("net.encoder_hidden", net.encoder_hidden);
  net.endnet_layers = cfg.size_or("net.endnet_layers", net.endnet_layers);
  net.endnet_width = cfg.size_or("net.endnet_width", net.endnet_width);
  net.priornet_backbone = cfg.str_or("net.priornet_backbone", net.priornet_backbone);
  net.pathnet_backbone = cfg.str_or("net.pathnet_backbone", net.pathnet_backbone);
  net.priornet_width = cfg.size_or("net.priornet_width", net.priornet_width);
  net.pathnet_width = cfg.size_or("net.pathnet_width", net.pathnet_width);
  net.step_embed_width = cfg.size_or("net.step_embed_width", net.step_embed_width);
  try {
    net.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  return net;
}

std::pair<ScheduleSpec, ScheduleSpec> schedulesFromConfig(RunConfig& cfg, ModelKind kind) {
  const ScheduleSpec goal_def = default_goal_schedule();
  const ScheduleSpec traj_def =
      kind == ModelKind::idm ? default_traj_schedule() : default_baseline_schedule();
  ensureDefault(cfg, "model.goal_steps", std::to_string(goal_def.steps));
  ensureDefault(cfg, "model.goal_beta_start", fmtF64(goal_def.beta_start));
  ensureDefault(cfg, "model.goal_beta_end", fmtF64(goal_def.beta_end));
  ensureDefault(cfg, "model.traj_steps", std::to_string(traj_def.steps));
  ensureDefault(cfg, "model.traj_beta_start", fmtF64(traj_def.beta_start));
  ensureDefault(cfg, "model.traj_beta_end", fmtF64(traj_def.beta_end));
  const ScheduleSpec goal{cfg.size_or("model.goal_steps", goal_def.steps),
                          cfg.f64_or("model.goal_beta_start", goal_def.beta_start),
                          cfg.f64_or("model.goal_beta_end", goal_def.beta_end)};
  const ScheduleSpec traj{cfg.size_or("model.traj_steps", traj_def.steps),
                          cfg.f64_or("model.traj_beta_start", traj_def.beta_start),
                          cfg.f64_or("model.traj_beta_end", traj_def.beta_end)};
  return {goal, traj};
}

TrainConfig trainFromConfig(RunConfig& cfg, const std::string& section) {
  ensureDefault(cfg, section + ".epochs", "1");
  ensureDefault(cfg, section + ".batch", "256");
  ensureDefault(cfg, section + ".lr", "0.0001");
  ensureDefault(cfg, section + ".lambda1", "1");
  ensureDefault(cfg, section + ".lambda2", "0.5");
  ensureDefault(cfg, section + ".clip", "10");
  ensureDefault(cfg, "seed", "0");
  TrainConfig t;
  t.epochs = cfg.size_or(section + ".epochs", t.epochs);
  t.batch_size = cfg.size_or(section + ".batch", t.batch_size);
  t.learning_rate = cfg.f64_or(section + ".lr", t.learning_rate);
  t.lambda1 = cfg.f64_or(section + ".lambda1", t.lambda1);
  t.lambda2 = cfg.f64_or(section + ".lambda2", t.lambda2);
  t.clip_norm = cfg.f64_or(section + ".clip", t.clip_norm);
  t.seed = static_cast<std::uint64_t>(cfg.i64_or("seed", 0));
  try {
    t.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  return t;
}

std::vector<const TrajectorySample*> pickAgents(const Dataset& ds, std::size_t limit) {
  std::vector<const TrajectorySample*> agents;
  const std::size_t n = limit == 0 ? ds.samples.size() : std::min(limit, ds.samples.size());
  for (std::size_t i = 0; i < n; ++i) agents.push_back(&ds.samples[i]);
  return agents;
}

std::pair<Vec2, Vec2> autoBounds(const std::vector<Vec2>& pts) {
  Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Vec2 hi{-lo.x, -lo.y};
  for (const Vec2& p : pts) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
  }
  const double pad_x = std::max(0.5, 0.05 * (hi.x - lo.x));
  const double pad_y = std::max(0.5, 0.05 * (hi.y - lo.y));
  return {{lo.x - pad_x, lo.y - pad_y}, {hi.x + pad_x, hi.y + pad_y}};
}

// Smallest positive pairwise distance between canonical mode endpoints; the
// default recall radius is a quarter of it. Zero when all endpoints coincide.
double interModeDistance(const std::vector<Vec2>& rel) {
  double best = 0.0;
  for (std::size_t a = 0; a < rel.size(); ++a) {
    for (std::size_t b = a + 1; b < rel.size(); ++b) {
      const double d = dist(rel[a], rel[b]);
      if (d > 0.0 && (best == 0.0 || d < best)) best = d;
    }
  }
  return best;
}

std::vector<std::vector<Vec2>> modeEndpointsPerAgent(
    const std::vector<const TrajectorySample*>& agents, const std::vector<Vec2>& rel) {
  std::vector<std::vector<Vec2>> out;
  for (const TrajectorySample* s : agents) {
    std::vector<Vec2> eps;
    for (const Vec2& r : rel) eps.push_back(s->last_observed() + r);
    out.push_back(std::move(eps));
  }
  return out;
}

// ====== synth ======

int runSynth(RunConfig& cfg) {
  ensureDefault(cfg, "synth.scenario", "crossroad");
  ensureDefault(cfg, "synth.n", "1000");
  ensureDefault(cfg, "synth.sigma", "0.25");
  ensureDefault(cfg, "synth.t_p", "8");
  ensureDefault(cfg, "synth.t_q", "12");
  ensureDefault(cfg, "synth.neighbors", "0");
  ensureDefault(cfg, "synth.speed_min", "1");
  ensureDefault(cfg, "synth.speed_max", "1");
  ensureDefault(cfg, "synth.offset_range", "20");
  ensureDefault(cfg, "seed", "0");

  const std::string out = cfg.str("synth.out");
  ScenarioSpec spec;
  spec.t_p = cfg.size_or("synth.t_p", spec.t_p);
  spec.t_q = cfg.size_or("synth.t_q", spec.t_q);
  spec.sigma = cfg.f64_or("synth.sigma", spec.sigma);
  spec.count = cfg.size_or("synth.n", spec.count);
  spec.neighbor_count = cfg.size_or("synth.neighbors", 0);
  spec.speed_min = cfg.f64_or("synth.speed_min", 1.0);
  spec.speed_max = cfg.f64_or("synth.speed_max", 1.0);
  spec.offset_range = cfg.f64_or("synth.offset_range", 20.0);
  spec.seed = static_cast<std::uint64_t>(cfg.i64_or("seed", 0));

  const std::string scenario = cfg.str_or("synth.scenario", "crossroad");
  Dataset ds;
  try {
    if (scenario == "crossroad") ds = generate_crossroad(spec);
    else if (scenario == "avoidance") ds = generate_avoidance(spec);
    else throw ConfigError("config key synth.scenario: unknown scenario '" + scenario + "'");
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());  // bad spec values are configuration problems
  }

  const std::string modes_path =
      (std::filesystem::path(out).parent_path() /
       (std::filesystem::path(out).stem().string() + ".modes.csv"))
          .string();
  write_trajectory_csv(out, ds);
  write_mode_sidecar(modes_path, ds);
  cfg.write_resolved(out + ".resolved.cfg");
  std::cout << "wrote " << ds.samples.size() << " " << scenario << " samples to " << out
            << "\nmode sidecar: " << modes_path << "\n";
  return 0;
}

// ====== train ======

int runTrain(RunConfig& cfg) {
  ensureDefault(cfg, "train.out_dir", "run");
  ensureDefault(cfg, "train.stride", "1");
  ensureDefault(cfg, "train.start_epoch", "0");
  const bool kind_given = cfg.has("model.kind");
  ensureDefault(cfg, "model.kind", "idm");

  const std::string dataset_path = cfg.str("train.dataset");
  const std::string out_dir = cfg.str_or("train.out_dir", "run");
  const std::string kind_s = cfg.str_or("model.kind", "idm");
  ModelKind kind;
  if (kind_s == "idm") kind = ModelKind::idm;
  else if (kind_s == "baseline") kind = ModelKind::baseline;
  else throw ConfigError("config key model.kind: must be idm or baseline, got '" + kind_s + "'");

  TrainConfig tcfg = trainFromConfig(cfg, "train");
  tcfg.start_epoch = cfg.size_or("train.start_epoch", 0);

  // On resume the checkpoint is authoritative for architecture and chain
  // layout; otherwise both come from the config.
  ModelBundle model;
  if (cfg.has("train.init")) {
    model = load_model(cfg.str("train.init"));
    if (kind_given && model.kind != kind) {
      throw ConfigError("config key model.kind: '" + kind_s + "' does not match checkpoint '" +
                        kind_name(model.kind) + "'");
    }
  } else {
    if (tcfg.start_epoch != 0) {
      throw ConfigError("train.start_epoch > 0 requires train.init (checkpoint to resume)");
    }
    const NetworkConfig net = netFromConfig(cfg);
    const auto [goal_spec, traj_spec] = schedulesFromConfig(cfg, kind);
    model = make_model(kind, net, goal_spec, traj_spec, tcfg.seed, 1.0);
  }

  const Dataset ds = load_trajectory_csv(dataset_path, model.net.t_p, model.net.t_q,
                                         cfg.size_or("train.stride", 1));
  if (!cfg.has("train.init")) model.coord_scale = estimate_coord_scale(ds);

  std::filesystem::create_directories(out_dir);
  cfg.write_resolved(out_dir + "/resolved.cfg");

  model = train(ds, std::move(model), tcfg, out_dir, out_dir + "/train_log.csv");
  const std::string final_path = out_dir + "/model.ckpt";
  save_model(final_path, model);
  std::cout << "trained " << kind_name(model.kind) << " on " << ds.samples.size()
            << " samples, epochs [" << tcfg.start_epoch << ", " << tcfg.epochs << ")\n"
            << "final checkpoint: " << final_path << "\n"
            << "step log: " << out_dir << "/train_log.csv\n";
  return 0;
}

// ====== predict ======

int runPredict(RunConfig& cfg) {
  ensureDefault(cfg, "predict.k", "20");
  ensureDefault(cfg, "predict.limit", "0");
  ensureDefault(cfg, "predict.stride", "1");
  ensureDefault(cfg, "predict.grid_res", "50");
  ensureDefault(cfg, "seed", "0");

  const std::string ckpt = cfg.str("predict.checkpoint");
  const std::string dataset_path = cfg.str("predict.dataset");
  const std::string out = cfg.str("predict.out");
  const std::size_t k = cfg.size_or("predict.k", 20);
  if (k < 1) throw ConfigError("config key predict.k: must be >= 1");
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.i64_or("seed", 0));

  const ModelBundle model = load_model(ckpt);
  const Dataset ds = load_trajectory_csv(dataset_path, model.net.t_p, model.net.t_q,
                                         cfg.size_or("predict.stride", 1));
  const auto agents = pickAgents(ds, cfg.size_or("predict.limit", 0));

  cfg.write_resolved(out + ".resolved.cfg");

  const Rng root(seed);
  std::vector<PredictionSet> preds;
  DenoiserCalls calls;
  double wall_ms = 0.0, wall_ms_total = 0.0;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    preds.push_back(predict_sample(model, *agents[i], k, root.split(i)));
    const PredictionSet& p = preds.back();
    calls.endnet += p.calls.endnet;
    calls.priornet += p.calls.priornet;
    calls.pathnet += p.calls.pathnet;
    wall_ms += static_cast<double>(p.wall_ns) / 1e6;
    wall_ms_total += static_cast<double>(p.wall_ns_total) / 1e6;
  }
  write_prediction_csv(out, agents, preds);

  if (cfg.has("predict.grid_out")) {
    // densities are accumulated in the agent-relative frame so different
    // scene placements overlay
    std::vector<PredictionSet> shifted = preds;
    std::vector<Vec2> pts;
    for (std::size_t i = 0; i < shifted.size(); ++i) {
      const Vec2 origin = agents[i]->last_observed();
      for (auto& traj : shifted[i].trajectories) {
        for (Vec2& p : traj) {
          p = p - origin;
          pts.push_back(p);
        }
      }
    }
    const auto [lo, hi] = autoBounds(pts);
    std::vector<const PredictionSet*> refs;
    for (const auto& p : shifted) refs.push_back(&p);
    write_density_grid_csv(cfg.str("predict.grid_out"),
                           density_grid(refs, lo, hi, cfg.size_or("predict.grid_res", 50)));
  }

  const std::size_t n_pred = agents.size() * k;
  writeMeta(out + ".meta",
            {{"model_kind", kind_name(model.kind)},
             {"agents", std::to_string(agents.size())},
             {"k", std::to_string(k)},
             {"seed", std::to_string(seed)},
             {"goal_steps", std::to_string(model.kind == ModelKind::idm ? model.goal_spec.steps
                                                                        : 0)},
             {"traj_steps", std::to_string(model.traj_spec.steps)},
             {"calls_endnet", std::to_string(calls.endnet)},
             {"calls_priornet", std::to_string(calls.priornet)},
             {"calls_pathnet", std::to_string(calls.pathnet)},
             {"calls_total", std::to_string(calls.total())},
             {"calls_per_prediction",
              fmtF64(static_cast<double>(calls.total()) / static_cast<double>(n_pred))},
             {"wall_ms_networks", fmtF64(wall_ms)},
             {"wall_ms_with_encoding", fmtF64(wall_ms_total)}});
  std::cout << "wrote " << n_pred << " predictions (" << agents.size() << " agents x " << k
            << ") to " << out << "\n";
  return 0;
}

// ====== eval ======

int runEval(RunConfig& cfg) {
  ensureDefault(cfg, "eval.t_p", "8");
  ensureDefault(cfg, "eval.stride", "1");

  const std::string pred_path = cfg.str("eval.predictions");
  const std::string truth_path = cfg.str("eval.truth");
  const std::string out = cfg.str("eval.out");

  const auto pred_map = load_prediction_csv(pred_path);
  std::size_t t_q = 0, min_draws = std::numeric_limits<std::size_t>::max();
  for (const auto& [key, trajs] : pred_map) {
    min_draws = std::min(min_draws, trajs.size());
    for (const auto& t : trajs) {
      if (t_q == 0) t_q = t.size();
      if (t.size() != t_q) throw IoError("predictions have mixed horizon lengths");
    }
  }
  if (t_q == 0) throw IoError("no prediction points in " + pred_path);

  const Dataset truth = load_trajectory_csv(truth_path, cfg.size_or("eval.t_p", 8), t_q,
                                            cfg.size_or("eval.stride", 1));
  std::map<std::pair<long long, long long>, const TrajectorySample*> truth_by_key;
  for (const TrajectorySample& s : truth.samples) {
    truth_by_key.emplace(std::make_pair(s.scene_id, s.agent_id), &s);
  }

  std::vector<const TrajectorySample*> agents;
  std::vector<PredictionSet> preds;
  for (const auto& [key, trajs] : pred_map) {
    const auto it = truth_by_key.find(key);
    if (it == truth_by_key.end()) {
      throw IoError("no ground truth for scene " + std::to_string(key.first) + " agent " +
                    std::to_string(key.second));
    }
    agents.push_back(it->second);
    PredictionSet ps;
    ps.trajectories = trajs;
    for (const auto& t : ps.trajectories) ps.goals.push_back(t.back());
    preds.push_back(std::move(ps));
  }

  std::vector<std::vector<Vec2>> mode_endpoints;
  double radius = cfg.f64_or("eval.recall_radius", 0.0);
  if (cfg.has("eval.modes")) {
    const ModeSidecar mc = load_mode_sidecar(cfg.str("eval.modes"));
    if (radius <= 0.0) radius = interModeDistance(mc.mode_endpoints_rel) / 4.0;
    if (radius > 0.0) {
      mode_endpoints = modeEndpointsPerAgent(agents, mc.mode_endpoints_rel);
    } else {
      std::cerr << "note: mode endpoints coincide and no --recall-radius given; "
                   "skipping mode recall\n";
    }
  }

  const MetricReport report = evaluate_predictions(preds, agents, mode_endpoints, radius,
                                                   default_n_sweep(min_draws));
  write_metric_report_csv(out + ".csv", report);
  const std::string text = format_metric_report(report);
  {
    std::ofstream os(out + ".txt", std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + out + ".txt");
    os << text;
  }
  cfg.write_resolved(out + ".resolved.cfg");
  std::cout << text;
  return 0;
}

// ====== bench ======

int runBench(RunConfig& cfg) {
  ensureDefault(cfg, "bench.k", "20");
  ensureDefault(cfg, "bench.limit", "20");
  ensureDefault(cfg, "bench.stride", "1");
  ensureDefault(cfg, "seed", "0");

  const std::string out = cfg.str("bench.out");
  const ModelBundle idm_model = load_model(cfg.str("bench.idm"));
  const ModelBundle base_model = load_model(cfg.str("bench.baseline"));
  if (idm_model.kind != ModelKind::idm) {
    throw ConfigError("config key bench.idm: checkpoint is not an idm model");
  }
  if (base_model.kind != ModelKind::baseline) {
    throw ConfigError("config key bench.baseline: checkpoint is not a baseline model");
  }
  if (idm_model.net.t_q != base_model.net.t_q || idm_model.net.t_p != base_model.net.t_p) {
    throw ConfigError("bench: checkpoints disagree on T_P/T_Q");
  }

  const std::size_t k = cfg.size_or("bench.k", 20);
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.i64_or("seed", 0));
  const Dataset ds = load_trajectory_csv(cfg.str("bench.dataset"), idm_model.net.t_p,
                                         idm_model.net.t_q, cfg.size_or("bench.stride", 1));
  const auto agents = pickAgents(ds, cfg.size_or("bench.limit", 20));

  cfg.write_resolved(out + ".resolved.cfg");

  const Rng root(seed);
  struct Row {
    std::string name;
    MetricReport report;
  };
  std::vector<Row> rows;
  for (const ModelBundle* m : {&idm_model, &base_model}) {
    std::vector<PredictionSet> preds;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      preds.push_back(predict_sample(*m, *agents[i], k, root.split(i)));
    }
    rows.push_back({kind_name(m->kind),
                    evaluate_predictions(preds, agents, {}, 1.0, default_n_sweep(k))});
  }

  const double n_pred = static_cast<double>(agents.size() * k);
  {
    std::ofstream os(out + ".csv", std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + out + ".csv");
    os << "model,agents,k,calls_total,calls_per_prediction,min_ade,min_fde\n";
    for (const Row& r : rows) {
      os << r.name << "," << agents.size() << "," << k << "," << r.report.calls.total() << ","
         << fmtF64(static_cast<double>(r.report.calls.total()) / n_pred) << ","
         << fmtF64(r.report.final_min_ade()) << "," << fmtF64(r.report.final_min_fde()) << "\n";
    }
  }
  std::vector<std::pair<std::string, std::string>> meta;
  for (const Row& r : rows) {
    meta.emplace_back("wall_ms_per_prediction_" + r.name,
                      fmtF64(r.report.mean_wall_ms * static_cast<double>(agents.size()) / n_pred));
  }
  meta.emplace_back("wall_ratio_baseline_over_idm",
                    fmtF64(rows[1].report.mean_wall_ms / rows[0].report.mean_wall_ms));
  writeMeta(out + ".meta", meta);

  std::cout << "model      calls/pred   minADE(" << k << ")   minFDE(" << k << ")   ms/pred\n";
  for (const Row& r : rows) {
    std::printf("%-9s  %10.1f  %10.4f  %10.4f  %8.3f\n", r.name.c_str(),
                static_cast<double>(r.report.calls.total()) / n_pred, r.report.final_min_ade(),
                r.report.final_min_fde(),
                r.report.mean_wall_ms * static_cast<double>(agents.size()) / n_pred);
  }
  std::cout << "wall ratio baseline/idm: "
            << rows[1].report.mean_wall_ms / rows[0].report.mean_wall_ms << "\n";
  return 0;
}

// ====== plot ======

int runPlot(RunConfig& cfg) {
  ensureDefault(cfg, "plot.layer", "0");
  const std::string out = cfg.str("plot.out");
  const bool have_preds = cfg.has("plot.predictions");
  const bool have_grid = cfg.has("plot.grid");
  if (have_preds == have_grid) {
    throw ConfigError("plot: exactly one of plot.predictions / plot.grid is required");
  }
  cfg.write_resolved(out + ".resolved.cfg");

  if (have_preds) {
    const std::string path = cfg.str("plot.predictions");
    // A header-only file is a legal empty prediction set: emit a blank canvas.
    bool any_rows = false;
    {
      std::ifstream is(path);
      if (!is) throw IoError("cannot open: " + path);
      std::string line;
      std::getline(is, line);
      while (std::getline(is, line)) {
        if (!line.empty()) {
          any_rows = true;
          break;
        }
      }
    }
    if (!any_rows) {
      SvgCanvas canvas({0.0, 0.0}, {1.0, 1.0});
      canvas.write(out);
      std::cout << "wrote empty canvas to " << out << "\n";
      return 0;
    }

    const auto pred_map = load_prediction_csv(path);
    std::vector<Vec2> pts;
    for (const auto& [key, trajs] : pred_map) {
      for (const auto& t : trajs) pts.insert(pts.end(), t.begin(), t.end());
    }
    const auto [lo, hi] = autoBounds(pts);
    SvgCanvas canvas(lo, hi);
    std::size_t n = 0;
    for (const auto& [key, trajs] : pred_map) {
      for (const auto& t : trajs) {
        canvas.polyline(t, "steelblue", 1.5, 0.35);
        canvas.circle(t.back(), 2.5, "navy", 0.6);
        ++n;
      }
    }
    canvas.write(out);
    std::cout << "plotted " << n << " trajectories to " << out << "\n";
    return 0;
  }

  const DensityGrid g = load_density_grid_csv(cfg.str("plot.grid"));
  const std::size_t layer = cfg.size_or("plot.layer", 0);
  if (layer >= g.t_q) {
    throw ConfigError("config key plot.layer: out of range (grid has " +
                      std::to_string(g.t_q) + " timesteps)");
  }
  double vmax = 0.0;
  for (std::size_t i = 0; i < g.grids[layer].size(); ++i) {
    vmax = std::max(vmax, g.grids[layer][i]);
  }
  SvgCanvas canvas(g.lo, g.hi);
  const double dx = (g.hi.x - g.lo.x) / static_cast<double>(g.resolution);
  const double dy = (g.hi.y - g.lo.y) / static_cast<double>(g.resolution);
  for (std::size_t iy = 0; iy < g.resolution; ++iy) {
    for (std::size_t ix = 0; ix < g.resolution; ++ix) {
      const double v = g.grids[layer].at(iy, ix);
      if (v <= 0.0) continue;
      const Vec2 cell_lo{g.lo.x + static_cast<double>(ix) * dx,
                         g.lo.y + static_cast<double>(iy) * dy};
      canvas.cell(cell_lo, {cell_lo.x + dx, cell_lo.y + dy}, "crimson", v / vmax);
    }
  }
  canvas.text({g.lo.x + 0.02 * (g.hi.x - g.lo.x), g.hi.y - 0.05 * (g.hi.y - g.lo.y)},
              "t=" + std::to_string(layer));
  canvas.write(out);
  std::cout << "plotted density layer " << layer << " to " << out << "\n";
  return 0;
}

// ====== sweep ======

int runSweep(RunConfig& cfg) {
  ensureDefault(cfg, "sweep.ks", "10,50,100");
  ensureDefault(cfg, "sweep.ss", "5,10,20");
  ensureDefault(cfg, "sweep.k", "20");
  ensureDefault(cfg, "sweep.limit", "50");
  ensureDefault(cfg, "sweep.stride", "1");

  const std::string dataset_path = cfg.str("sweep.dataset");
  const std::string out = cfg.str("sweep.out");
  const auto ks = parseSizeList(cfg.str_or("sweep.ks", "10,50,100"), "sweep.ks");
  const auto ss = parseSizeList(cfg.str_or("sweep.ss", "5,10,20"), "sweep.ss");
  const std::size_t draws = cfg.size_or("sweep.k", 20);

  const NetworkConfig net = netFromConfig(cfg);
  const auto [goal_spec, traj_spec] = schedulesFromConfig(cfg, ModelKind::idm);
  const TrainConfig tcfg = trainFromConfig(cfg, "sweep");

  const Dataset ds = load_trajectory_csv(dataset_path, net.t_p, net.t_q,
                                         cfg.size_or("sweep.stride", 1));
  const Dataset holdout =
      cfg.has("sweep.holdout")
          ? load_trajectory_csv(cfg.str("sweep.holdout"), net.t_p, net.t_q,
                                cfg.size_or("sweep.stride", 1))
          : ds;
  const auto agents = pickAgents(holdout, cfg.size_or("sweep.limit", 50));
  const double coord_scale = estimate_coord_scale(ds);

  std::vector<Vec2> mode_rel;
  double radius = cfg.f64_or("sweep.recall_radius", 0.0);
  if (cfg.has("sweep.modes")) {
    const ModeSidecar mc = load_mode_sidecar(cfg.str("sweep.modes"));
    mode_rel = mc.mode_endpoints_rel;
    if (radius <= 0.0) radius = interModeDistance(mode_rel) / 4.0;
    if (radius <= 0.0) mode_rel.clear();
  }

  cfg.write_resolved(out + ".resolved.cfg");

  struct Cell {
    std::size_t K, S;
    double min_ade, min_fde, recall;
  };
  std::vector<Cell> cells;
  for (std::size_t K : ks) {
    for (std::size_t S : ss) {
      ModelBundle model = make_model(
          ModelKind::idm, net, {K, goal_spec.beta_start, goal_spec.beta_end},
          {S, traj_spec.beta_start, traj_spec.beta_end}, tcfg.seed, coord_scale);
      model = train(ds, std::move(model), tcfg, "", "");

      const Rng root(tcfg.seed);
      std::vector<PredictionSet> preds;
      for (std::size_t i = 0; i < agents.size(); ++i) {
        preds.push_back(predict_sample(model, *agents[i], draws, root.split(i)));
      }
      const auto endpoints =
          mode_rel.empty() ? std::vector<std::vector<Vec2>>{}
                           : modeEndpointsPerAgent(agents, mode_rel);
      const MetricReport r = evaluate_predictions(preds, agents, endpoints,
                                                  radius > 0.0 ? radius : 1.0, {draws});
      cells.push_back({K, S, r.final_min_ade(), r.final_min_fde(), r.recall});
      std::cout << "[sweep] K=" << K << " S=" << S << "  minADE=" << r.final_min_ade()
                << "  minFDE=" << r.final_min_fde() << "  recall=" << r.recall << "\n";
    }
  }

  {
    std::ofstream os(out + ".csv", std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + out + ".csv");
    os << "goal_steps,traj_steps,min_ade,min_fde,mode_recall\n";
    for (const Cell& c : cells) {
      os << c.K << "," << c.S << "," << fmtF64(c.min_ade) << "," << fmtF64(c.min_fde) << ","
         << fmtF64(c.recall) << "\n";
    }
  }
  {
    std::ofstream os(out + ".txt", std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + out + ".txt");
    os << "chain-length sweep over " << agents.size() << " held-out agents, " << draws
       << " draws each\n";
    for (const Cell& c : cells) {
      os << "  K=" << c.K << " S=" << c.S << "  minADE=" << fmtF64(c.min_ade)
         << "  minFDE=" << fmtF64(c.min_fde) << "  recall=" << fmtF64(c.recall) << "\n";
    }
    // Record (not assert) how endpoint precision moves with goal-chain length.
    os << "mean minFDE by goal-chain length:\n";
    for (std::size_t K : ks) {
      double acc = 0.0;
      std::size_t n = 0;
      for (const Cell& c : cells) {
        if (c.K == K) {
          acc += c.min_fde;
          ++n;
        }
      }
      os << "  K=" << K << ": " << fmtF64(acc / static_cast<double>(n)) << "\n";
    }
  }
  std::cout << "sweep report: " << out << ".csv, " << out << ".txt\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intention-aware two-stage diffusion trajectory prediction"};
  app.require_subcommand(1);

  std::map<const CLI::App*, std::pair<FlagSet, int (*)(RunConfig&)>> commands;

  {
    CLI::App* cmd = app.add_subcommand("synth", "generate a synthetic scenario dataset");
    FlagSet f;
    f.addConfigFlag(cmd);
    f.add(cmd, "--scenario", "synth.scenario", "crossroad | avoidance");
    f.add(cmd, "--n", "synth.n", "number of samples");
    f.add(cmd, "--sigma", "synth.sigma", "path noise scale");
    f.add(cmd, "--t-p", "synth.t_p", "history length");
    f.add(cmd, "--t-q", "synth.t_q", "future length");
    f.add(cmd, "--neighbors", "synth.neighbors", "extra walker neighbours per scene");
    f.add(cmd, "--speed-min", "synth.speed_min", "minimum agent speed");
    f.add(cmd, "--speed-max", "synth.speed_max", "maximum agent speed");
    f.add(cmd, "--offset-range", "synth.offset_range", "scene placement half-width");
    f.add(cmd, "--out", "synth.out", "output dataset CSV path");
    f.add(cmd, "--seed", "seed", "generation seed");
    commands[cmd] = {std::move(f), &runSynth};
  }
  {
    CLI::App* cmd = app.add_subcommand("train", "train a model on a trajectory CSV");
    FlagSet f;
    f.addConfigFlag(cmd);
    f.add(cmd, "--dataset", "train.dataset", "training trajectory CSV");
    f.add(cmd, "--out-dir", "train.out_dir", "checkpoint/log directory");
    f.add(cmd, "--kind", "model.kind", "idm | baseline");
    f.add(cmd, "--stride", "train.stride", "sliding-window stride");
    f.add(cmd, "--start-epoch", "train.start_epoch", "resume epoch (needs --init)");
    f.add(cmd, "--init", "train.init", "checkpoint to initialize from");
    f.add(cmd, "--seed", "seed", "training seed");
    addTrainHyperFlags(cmd, f, "train");
    addScheduleFlags(cmd, f);
    addNetFlags(cmd, f);
    commands[cmd] = {std::move(f), &runTrain};
  }
  {
    CLI::App* cmd = app.add_subcommand("predict", "sample predictions from a checkpoint");
    FlagSet f;
    f.addConfigFlag(cmd);
    f.add(cmd, "--checkpoint", "predict.checkpoint", "model checkpoint");
    f.add(cmd, "--dataset", "predict.dataset", "trajectory CSV to predict on");
    f.add(cmd, "--k", "predict.k", "predictions per agent");
    f.add(cmd, "--limit", "predict.limit", "max agents (0 = all)");
    f.add(cmd, "--stride", "predict.stride", "sliding-window stride");
    f.add(cmd, "--out", "predict.out", "output prediction CSV");
    f.add(cmd, "--grid-out", "predict.grid_out", "also write a density grid CSV here");
    f.add(cmd, "--grid-res", "predict.grid_res", "density grid resolution");
    f.add(cmd, "--seed", "seed", "sampling seed");
    commands[cmd] = {std::move(f), &runPredict};
  }
  {
    CLI::App* cmd = app.add_subcommand("eval", "score predictions against ground truth");
    FlagSet f;
    f.addConfigFlag(cmd);
    f.add(cmd, "--predictions", "eval.predictions", "prediction CSV");
    f.add(cmd, "--truth", "eval.truth", "ground-truth trajectory CSV");
    f.add(cmd, "--modes", "eval.modes", "mode sidecar for recall");
    f.add(cmd, "--recall-radius", "eval.recall_radius", "override recall radius");
    f.add(cmd, "--t-p", "eval.t_p", "history length of the truth windows");
    f.add(cmd, "--stride", "eval.stride", "sliding-window stride");
    f.add(cmd, "--out", "eval.out", "report path prefix (.csv/.txt appended)");
    commands[cmd] = {std::move(f), &runEval};
  }
  {
    CLI::App* cmd = app.add_subcommand("bench", "compare idm and baseline checkpoints");
    FlagSet f;
    f.addConfigFlag(cmd);
    f.add(cmd, "--idm", "bench.idm", "idm checkpoint");
    f.add(cmd, "--baseline", "bench.baseline", "baseline checkpoint");
    f.add(cmd, "--dataset", "bench.dataset", "evaluation trajectory CSV");
    f.add(cmd, "--k", "bench.k", "predictions per agent");
    f.add(cmd, "--limit", "bench.limit", "max agents");
    f.add(cmd, "--stride", "bench.stride", "sliding-window stride");
    f.add(cmd, "--out", "bench.out", "table path prefix (.csv/.meta appended)");
    f.add(cmd, "--seed", "seed", "sampling seed");
    commands[cmd] = {std::move(f), &runBench};
  }
  {
    CLI::App* cmd = app.add_subcommand("plot", "render predictions or density grids as SVG");
    FlagSet f;
    f.addConfigFlag(cmd);
    f.add(cmd, "--predictions", "plot.predictions", "prediction CSV to draw");
    f.add(cmd, "--grid", "plot.grid", "density grid CSV to draw");
    f.add(cmd, "--layer", "plot.layer", "density timestep to render");
    f.add(cmd, "--out", "plot.out", "output SVG path");
    commands[cmd] = {std::move(f), &runPlot};
  }
  {
    CLI::App* cmd = app.add_subcommand("sweep", "train/evaluate over a K x S chain-length grid");
    FlagSet f;
    f.addConfigFlag(cmd);
    f.add(cmd, "--dataset", "sweep.dataset", "training trajectory CSV");
    f.add(cmd, "--holdout", "sweep.holdout", "held-out CSV (defaults to the training set)");
    f.add(cmd, "--modes", "sweep.modes", "mode sidecar for recall");
    f.add(cmd, "--recall-radius", "sweep.recall_radius", "override recall radius");
    f.add(cmd, "--ks", "sweep.ks", "goal chain lengths, comma separated");
    f.add(cmd, "--ss", "sweep.ss", "trajectory chain lengths, comma separated");
    f.add(cmd, "--k", "sweep.k", "predictions per agent at evaluation");
    f.add(cmd, "--limit", "sweep.limit", "held-out agents to evaluate");
    f.add(cmd, "--stride", "sweep.stride", "sliding-window stride");
    f.add(cmd, "--out", "sweep.out", "report path prefix (.csv/.txt appended)");
    f.add(cmd, "--seed", "seed", "training/sampling seed");
    addTrainHyperFlags(cmd, f, "sweep");
    addScheduleFlags(cmd, f);
    addNetFlags(cmd, f);
    commands[cmd] = {std::move(f), &runSweep};
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // malformed invocations are configuration errors
  }

  try {
    for (auto& [cmd, entry] : commands) {
      if (cmd->parsed()) {
        RunConfig cfg = entry.first.resolve(true);
        return entry.second(cfg);
      }
    }
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
