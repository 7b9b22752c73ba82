#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "idm/inference.hpp"
#include "idm/model.hpp"

using namespace idm;

namespace {

std::string tmpPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

NetworkConfig tinyNet() {
  NetworkConfig cfg;
  cfg.t_p = 3;
  cfg.t_q = 4;
  cfg.context_width = 6;
  cfg.encoder_hidden = 5;
  cfg.endnet_layers = 2;
  cfg.endnet_width = 7;
  cfg.priornet_width = 6;
  cfg.pathnet_width = 5;
  cfg.step_embed_width = 4;
  return cfg;
}

ModelBundle tinyModel(ModelKind kind, std::uint64_t seed,
                      std::size_t goal_steps = 10, std::size_t traj_steps = 5) {
  return make_model(kind, tinyNet(), {goal_steps, 1e-4, 0.02}, {traj_steps, 1e-4, 0.05}, seed);
}

ContextVector someContext(const ModelBundle& m, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor hist = rng.gaussian_tensor({m.net.t_p, 2});
  return encode(hist, {}, m.net, m.params);
}

bool tracksEqual(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].x != b[i].x || a[i].y != b[i].y) return false;
  }
  return true;
}

}  // namespace

// With a zero-noise stub the chain is a pure rescaling: each step divides by
// sqrt(alpha_k), so the composition divides by sqrt(alpha_bar_K).
TEST(InferenceTest, ZeroStubChainIsPureRescaling) {
  const NoiseSchedule sched = make_linear_schedule(20, 1e-4, 0.05);
  Rng rng(3);
  const Tensor start = rng.gaussian_tensor({4, 2});
  std::size_t calls = 0;
  const Tensor got = reverse_denoise_chain(
      start, sched, [](const Tensor& s, std::size_t) { return Tensor::zeros(s.shape()); },
      &calls);
  EXPECT_EQ(calls, sched.steps);

  Tensor expect = start;
  for (std::size_t k = sched.steps; k > 0; --k) {
    for (std::size_t i = 0; i < expect.size(); ++i) {
      expect[i] = expect[i] / std::sqrt(sched.alpha_at(k));
    }
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_DOUBLE_EQ(got[i], expect[i]);
    EXPECT_NEAR(got[i], start[i] / std::sqrt(sched.alpha_bar_at(sched.steps)), 1e-10);
  }
}

// A one-step chain fed the exact forward noise must reproduce the clean state.
TEST(InferenceTest, OneStepChainInvertsForwardNoising) {
  const NoiseSchedule sched = make_linear_schedule(1, 0.03, 0.03);
  Rng rng(7);
  const Tensor clean = rng.gaussian_tensor({3, 2});
  const Tensor eps = rng.gaussian_tensor({3, 2});
  const Tensor noisy = forward_marginal(clean, 1, sched, eps);
  const Tensor got = reverse_denoise_chain(
      noisy, sched, [&](const Tensor&, std::size_t) { return eps; });
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], clean[i], 1e-12);
}

TEST(InferenceTest, StochasticChainNeedsRngAndPerturbsResult) {
  const NoiseSchedule sched = make_linear_schedule(5, 1e-3, 0.05);
  const Tensor start = Tensor::full({2, 2}, 0.7);
  const Denoiser zero = [](const Tensor& s, std::size_t) { return Tensor::zeros(s.shape()); };
  EXPECT_THROW(reverse_denoise_chain(start, sched, zero, nullptr, true, nullptr), NumericError);

  Rng rng(11);
  const Tensor noisy_run = reverse_denoise_chain(start, sched, zero, nullptr, true, &rng);
  const Tensor mean_run = reverse_denoise_chain(start, sched, zero);
  bool differ = false;
  for (std::size_t i = 0; i < noisy_run.size(); ++i) differ |= noisy_run[i] != mean_run[i];
  EXPECT_TRUE(differ);
}

TEST(InferenceTest, SampleGoalIsSeedDeterministic) {
  const ModelBundle m = tinyModel(ModelKind::idm, 3);
  const ContextVector x = someContext(m, 1);
  DenoiserCalls calls;
  Rng r1(5), r2(5), r3(6);
  const Tensor a = sample_goal(x, m, r1, &calls);
  const Tensor b = sample_goal(x, m, r2);
  const Tensor c = sample_goal(x, m, r3);
  ASSERT_EQ(a.shape(), (Shape{2}));
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
  EXPECT_TRUE(a[0] != c[0] || a[1] != c[1]);
  EXPECT_EQ(calls.endnet, m.goal_sched.steps);
  EXPECT_EQ(calls.priornet, 0u);

  const ModelBundle base = tinyModel(ModelKind::baseline, 3);
  Rng r4(5);
  EXPECT_THROW(sample_goal(someContext(base, 1), base, r4), ShapeError);
}

// With a near-zero noise schedule the trajectory draw collapses onto the
// learned prior mean, confirming the chain starts from it.
TEST(InferenceTest, TrajectoryDrawIsAnchoredAtPriorMean) {
  ModelBundle m = make_model(ModelKind::idm, tinyNet(), {10, 1e-4, 0.02}, {1, 1e-12, 1e-12}, 3);
  const ContextVector x = someContext(m, 2);
  const Tensor goal({2}, {0.4, -0.9});
  const Tensor mu = priornet_eval(x, goal, m.net, m.params);
  DenoiserCalls calls;
  Rng rng(13);
  const Tensor y = sample_trajectory(x, goal, m, rng, &calls);
  ASSERT_EQ(y.shape(), mu.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], mu[i], 1e-4);
  EXPECT_EQ(calls.priornet, 1u);
  EXPECT_EQ(calls.pathnet, m.traj_sched.steps);
}

TEST(InferenceTest, PredictCountsCallsExactly) {
  const ModelBundle m = tinyModel(ModelKind::idm, 3);  // K=10, S=5
  const ContextVector x = someContext(m, 1);
  const std::size_t count = 3;
  const PredictionSet ps = predict(x, m, count, Rng(21));
  ASSERT_EQ(ps.trajectories.size(), count);
  ASSERT_EQ(ps.goals.size(), count);
  for (const auto& traj : ps.trajectories) EXPECT_EQ(traj.size(), m.net.t_q);
  EXPECT_EQ(ps.calls.endnet, count * m.goal_sched.steps);
  EXPECT_EQ(ps.calls.priornet, count);
  EXPECT_EQ(ps.calls.pathnet, count * m.traj_sched.steps);
  EXPECT_EQ(ps.calls.total(), count * (m.goal_sched.steps + m.traj_sched.steps + 1));
  EXPECT_THROW(predict(x, m, 0, Rng(21)), ShapeError);
}

TEST(InferenceTest, PredictIsSeedDeterministicAndDrawsDiffer) {
  const ModelBundle m = tinyModel(ModelKind::idm, 3);
  const ContextVector x = someContext(m, 1);
  const PredictionSet a = predict(x, m, 4, Rng(33));
  const PredictionSet b = predict(x, m, 4, Rng(33));
  for (std::size_t d = 0; d < 4; ++d) {
    EXPECT_TRUE(tracksEqual(a.trajectories[d], b.trajectories[d]));
    EXPECT_EQ(a.goals[d].x, b.goals[d].x);
    EXPECT_EQ(a.goals[d].y, b.goals[d].y);
  }
  bool some_differ = false;
  for (std::size_t d = 1; d < 4; ++d) {
    some_differ |= !tracksEqual(a.trajectories[0], a.trajectories[d]);
  }
  EXPECT_TRUE(some_differ);

  const PredictionSet c = predict(x, m, 4, Rng(34));
  EXPECT_FALSE(tracksEqual(a.trajectories[0], c.trajectories[0]));
}

TEST(InferenceTest, BaselinePredictUsesOnlyTheLongChain) {
  const ModelBundle m = tinyModel(ModelKind::baseline, 3, 10, 12);  // S_base = 12
  const ContextVector x = someContext(m, 1);
  const std::size_t count = 5;
  const PredictionSet ps = predict_baseline(x, m, count, Rng(3));
  EXPECT_EQ(ps.calls.pathnet, count * m.traj_sched.steps);
  EXPECT_EQ(ps.calls.endnet, 0u);
  EXPECT_EQ(ps.calls.priornet, 0u);
  EXPECT_EQ(ps.calls.total(), count * m.traj_sched.steps);
  for (std::size_t d = 0; d < count; ++d) {
    ASSERT_EQ(ps.trajectories[d].size(), m.net.t_q);
    EXPECT_EQ(ps.goals[d].x, ps.trajectories[d].back().x);
    EXPECT_EQ(ps.goals[d].y, ps.trajectories[d].back().y);
  }

  const ModelBundle idm_model = tinyModel(ModelKind::idm, 3);
  EXPECT_THROW(predict_baseline(someContext(idm_model, 1), idm_model, 2, Rng(3)), ShapeError);
}

// predict_sample must equal: normalize, encode, model-space predict, then map
// through origin + p * coord_scale. Replicated here step by step.
TEST(InferenceTest, PredictSampleMapsBackToSceneUnits) {
  ModelBundle m = tinyModel(ModelKind::idm, 3);
  m.coord_scale = 2.0;

  TrajectorySample s;
  s.scene_id = 4;
  s.agent_id = 9;
  Rng rng(40);
  for (std::size_t t = 0; t < m.net.t_p; ++t) {
    s.history.push_back({10.0 + 0.5 * static_cast<double>(t), -3.0 + rng.gaussian() * 0.1});
  }
  for (std::size_t t = 0; t < m.net.t_q; ++t) {
    s.future.push_back({12.0, -3.0 + static_cast<double>(t)});
  }
  s.neighbors.push_back(std::vector<Vec2>(m.net.t_p, Vec2{8.0, -2.0}));

  const PredictionSet got = predict_sample(m, s, 3, Rng(55));

  const Vec2 origin = s.last_observed();
  const Tensor hist = normalize_track(s.history, origin, m.coord_scale);
  const std::vector<Tensor> nbrs = {normalize_track(s.neighbors[0], origin, m.coord_scale)};
  const ContextVector x = encode(hist, nbrs, m.net, m.params);
  const PredictionSet want = predict(x, m, 3, Rng(55));

  for (std::size_t d = 0; d < 3; ++d) {
    for (std::size_t t = 0; t < m.net.t_q; ++t) {
      EXPECT_DOUBLE_EQ(got.trajectories[d][t].x,
                       origin.x + want.trajectories[d][t].x * m.coord_scale);
      EXPECT_DOUBLE_EQ(got.trajectories[d][t].y,
                       origin.y + want.trajectories[d][t].y * m.coord_scale);
    }
    EXPECT_DOUBLE_EQ(got.goals[d].x, origin.x + want.goals[d].x * m.coord_scale);
    EXPECT_DOUBLE_EQ(got.goals[d].y, origin.y + want.goals[d].y * m.coord_scale);
  }
  EXPECT_GE(got.wall_ns_total, got.wall_ns);
}

TEST(InferenceTest, PredictionCsvRoundTrip) {
  TrajectorySample s1, s2;
  s1.scene_id = 1;
  s1.agent_id = 0;
  s2.scene_id = 2;
  s2.agent_id = 7;

  PredictionSet p1, p2;
  Rng rng(61);
  for (int d = 0; d < 2; ++d) {
    std::vector<Vec2> t1, t2;
    for (int t = 0; t < 3; ++t) {
      t1.push_back({rng.gaussian(), rng.gaussian()});
      t2.push_back({rng.gaussian(), rng.gaussian()});
    }
    p1.trajectories.push_back(t1);
    p2.trajectories.push_back(t2);
  }

  const std::string path = tmpPath("idm_pred_roundtrip.csv");
  write_prediction_csv(path, {&s1, &s2}, {p1, p2});
  const auto loaded = load_prediction_csv(path);
  ASSERT_EQ(loaded.size(), 2u);
  const auto& l1 = loaded.at({1, 0});
  const auto& l2 = loaded.at({2, 7});
  ASSERT_EQ(l1.size(), 2u);
  for (std::size_t d = 0; d < 2; ++d) {
    EXPECT_TRUE(tracksEqual(l1[d], p1.trajectories[d]));
    EXPECT_TRUE(tracksEqual(l2[d], p2.trajectories[d]));
  }

  EXPECT_THROW(write_prediction_csv(tmpPath("idm_pred_bad.csv"), {&s1}, {p1, p2}), ShapeError);

  // Gap in t within one sample must be rejected, with the line named.
  const std::string bad = tmpPath("idm_pred_gap.csv");
  {
    std::ofstream os(bad);
    os << "scene_id,agent_id,sample_idx,t,x,y\n";
    os << "1,0,0,0,0.0,0.0\n";
    os << "1,0,0,2,1.0,1.0\n";
  }
  try {
    load_prediction_csv(bad);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }

  const std::string hdr = tmpPath("idm_pred_hdr.csv");
  {
    std::ofstream os(hdr);
    os << "scene,agent,sample_idx,t,x,y\n";
  }
  EXPECT_THROW(load_prediction_csv(hdr), IoError);
}
