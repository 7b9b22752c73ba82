#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "idm/data.hpp"

using namespace idm;

namespace {

std::string tmpPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

ScenarioSpec smallSpec(std::size_t count, double sigma, std::uint64_t seed = 0) {
  ScenarioSpec spec;
  spec.t_p = 4;
  spec.t_q = 6;
  spec.count = count;
  spec.sigma = sigma;
  spec.seed = seed;
  spec.offset_range = 5.0;
  return spec;
}

bool samplesEqual(const TrajectorySample& a, const TrajectorySample& b) {
  auto eq = [](const std::vector<Vec2>& u, const std::vector<Vec2>& v) {
    if (u.size() != v.size()) return false;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (u[i].x != v[i].x || u[i].y != v[i].y) return false;
    }
    return true;
  };
  if (!eq(a.history, b.history) || !eq(a.future, b.future)) return false;
  if (a.neighbors.size() != b.neighbors.size()) return false;
  for (std::size_t n = 0; n < a.neighbors.size(); ++n) {
    if (!eq(a.neighbors[n], b.neighbors[n])) return false;
  }
  return true;
}

void writeFile(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  os << text;
}

}  // namespace

TEST(DataTest, SpecValidation) {
  EXPECT_NO_THROW(detail::validate_spec(smallSpec(3, 0.1)));
  ScenarioSpec s = smallSpec(0, 0.1);
  EXPECT_THROW(detail::validate_spec(s), ShapeError);
  s = smallSpec(3, -0.1);
  EXPECT_THROW(detail::validate_spec(s), ShapeError);
  s = smallSpec(3, 0.1);
  s.t_p = 1;
  EXPECT_THROW(detail::validate_spec(s), ShapeError);
  s = smallSpec(3, 0.1);
  s.speed_min = 0.0;
  EXPECT_THROW(detail::validate_spec(s), ShapeError);
  s = smallSpec(3, 0.1);
  s.modes = {"left", "right"};
  s.mode_probs = {0.5};
  EXPECT_THROW(detail::validate_spec(s), ShapeError);
  s.mode_probs = {0.5, 0.6};
  EXPECT_THROW(detail::validate_spec(s), ShapeError);
  s.mode_probs = {0.5, 0.5};
  EXPECT_NO_THROW(detail::validate_spec(s));
}

TEST(DataTest, ReflectIntoKeepsValuesInBand) {
  EXPECT_DOUBLE_EQ(detail::reflect_into(0.4, 1.0), 0.4);
  EXPECT_DOUBLE_EQ(detail::reflect_into(1.7, 1.0), 0.3);
  EXPECT_DOUBLE_EQ(detail::reflect_into(-1.2, 1.0), -0.8);
  EXPECT_DOUBLE_EQ(detail::reflect_into(1.0, 1.0), 1.0);
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = detail::reflect_into(rng.gaussian() * 10.0, 2.5);
    EXPECT_LE(std::abs(v), 2.5);
  }
}

TEST(DataTest, JitterWalkStartsAtZeroAndStaysBounded) {
  Rng rng(4);
  const auto j = detail::jitter_walk(200, 0.5, 2.0, rng);
  EXPECT_EQ(j[0].x, 0.0);
  EXPECT_EQ(j[0].y, 0.0);
  for (const Vec2& p : j) {
    EXPECT_LE(std::abs(p.x), 2.0);
    EXPECT_LE(std::abs(p.y), 2.0);
  }
  Rng zero_rng(4);
  const auto z = detail::jitter_walk(10, 0.0, 1.0, zero_rng);
  for (const Vec2& p : z) {
    EXPECT_EQ(p.x, 0.0);
    EXPECT_EQ(p.y, 0.0);
  }
}

// With sigma = 0 and one mode the generator is fully deterministic geometry:
// a unit-speed straight approach ending at the scene offset, then the
// mode's canonical future.
TEST(DataTest, SigmaZeroCrossroadIsExactGeometry) {
  ScenarioSpec spec = smallSpec(6, 0.0);
  spec.modes = {"straight"};
  const Dataset ds = generate_crossroad(spec);
  ASSERT_EQ(ds.samples.size(), 6u);
  ASSERT_EQ(ds.mode_names.size(), 1u);
  EXPECT_EQ(ds.sigma, 0.0);

  const auto canon = detail::crossroad_future(spec.t_q, 1.0, 0);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const TrajectorySample& s = ds.samples[i];
    EXPECT_EQ(ds.mode_labels[i], 0);
    const Vec2 offset = s.last_observed();
    for (std::size_t t = 0; t < spec.t_p; ++t) {
      EXPECT_NEAR(s.history[t].x, offset.x, 1e-12);
      EXPECT_NEAR(s.history[t].y,
                  offset.y - static_cast<double>(spec.t_p - 1 - t), 1e-12);
    }
    for (std::size_t t = 0; t < spec.t_q; ++t) {
      EXPECT_NEAR(s.future[t].x, offset.x + canon[t].x, 1e-12);
      EXPECT_NEAR(s.future[t].y, offset.y + canon[t].y, 1e-12);
    }
    EXPECT_NEAR(dist(s.future.back(), s.last_observed()),
                static_cast<double>(spec.t_q), 1e-12);
  }
}

TEST(DataTest, CrossroadModeEndpointsAreDistinct) {
  const Dataset ds = generate_crossroad(smallSpec(1, 0.0));
  ASSERT_EQ(ds.mode_endpoints_rel.size(), 3u);
  const double d01 = dist(ds.mode_endpoints_rel[0], ds.mode_endpoints_rel[1]);
  const double d12 = dist(ds.mode_endpoints_rel[1], ds.mode_endpoints_rel[2]);
  const double d02 = dist(ds.mode_endpoints_rel[0], ds.mode_endpoints_rel[2]);
  EXPECT_GT(std::min({d01, d12, d02}), 1.0);
}

TEST(DataTest, ModeBalanceIsBinomial) {
  const Dataset ds = generate_crossroad(smallSpec(3000, 0.25, 17));
  std::vector<std::size_t> counts(3, 0);
  for (int m : ds.mode_labels) {
    ASSERT_GE(m, 0);
    ASSERT_LT(m, 3);
    ++counts[m];
  }
  // 4 sigma around 1000 for Binomial(3000, 1/3): sigma ≈ 25.8
  for (std::size_t c : counts) {
    EXPECT_GE(c, 1000u - 104u);
    EXPECT_LE(c, 1000u + 104u);
  }
}

TEST(DataTest, FixedSeedIsBitIdenticalAndPrefixStable) {
  ScenarioSpec spec = smallSpec(10, 0.25, 123);
  spec.neighbor_count = 2;
  const Dataset a = generate_crossroad(spec);
  const Dataset b = generate_crossroad(spec);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_TRUE(samplesEqual(a.samples[i], b.samples[i])) << i;
    EXPECT_EQ(a.mode_labels[i], b.mode_labels[i]);
  }

  // Per-sample rng streams: growing the dataset must not disturb the prefix.
  ScenarioSpec bigger = spec;
  bigger.count = 20;
  const Dataset c = generate_crossroad(bigger);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_TRUE(samplesEqual(a.samples[i], c.samples[i])) << i;
  }

  ScenarioSpec other = spec;
  other.seed = 124;
  const Dataset d = generate_crossroad(other);
  EXPECT_FALSE(samplesEqual(a.samples[0], d.samples[0]));
}

TEST(DataTest, AvoidanceSharesEndpointAndSplitsMidway) {
  const ScenarioSpec spec = smallSpec(40, 0.0, 5);
  const Dataset ds = generate_avoidance(spec);
  ASSERT_EQ(ds.mode_names.size(), 2u);
  bool saw_left = false, saw_right = false;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const TrajectorySample& s = ds.samples[i];
    const Vec2 offset = s.last_observed();

    // Both intents end at exactly the same straight-ahead goal.
    EXPECT_DOUBLE_EQ(s.future.back().x, offset.x);
    EXPECT_DOUBLE_EQ(s.future.back().y, offset.y + static_cast<double>(spec.t_q));

    // Mid-horizon the detour is at full amplitude, signed by intent.
    const double side = ds.mode_labels[i] == 0 ? 1.0 : -1.0;
    EXPECT_NEAR(s.future[2].x, offset.x + side * 2.0, 1e-12);
    (ds.mode_labels[i] == 0 ? saw_left : saw_right) = true;

    // First neighbour is the static obstacle on the direct line.
    ASSERT_GE(s.neighbors.size(), 1u);
    for (const Vec2& p : s.neighbors[0]) {
      EXPECT_DOUBLE_EQ(p.x, offset.x);
      EXPECT_DOUBLE_EQ(p.y, offset.y + 3.0);
    }
  }
  EXPECT_TRUE(saw_left);
  EXPECT_TRUE(saw_right);

  // Canonical endpoints of the two modes coincide by construction.
  EXPECT_DOUBLE_EQ(ds.mode_endpoints_rel[0].x, ds.mode_endpoints_rel[1].x);
  EXPECT_DOUBLE_EQ(ds.mode_endpoints_rel[0].y, ds.mode_endpoints_rel[1].y);
}

TEST(DataTest, TrajectoryCsvRoundTrip) {
  ScenarioSpec spec = smallSpec(5, 0.25, 7);
  spec.neighbor_count = 2;
  const Dataset ds = generate_crossroad(spec);
  const std::string path = tmpPath("idm_data_roundtrip.csv");
  write_trajectory_csv(path, ds);

  const Dataset back = load_trajectory_csv(path, spec.t_p, spec.t_q);
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].scene_id, ds.samples[i].scene_id);
    EXPECT_TRUE(samplesEqual(back.samples[i], ds.samples[i])) << i;
  }
}

TEST(DataTest, WindowArithmetic) {
  const std::string path = tmpPath("idm_data_windows.csv");
  // t_p = 2, t_q = 2 → window 4. Agent 0 has 5 rows, agent 1 only 3.
  writeFile(path,
            "scene_id,agent_id,t,x,y\n"
            "0,0,0,0.0,0.0\n"
            "0,0,1,1.0,0.0\n"
            "0,0,2,2.0,0.0\n"
            "0,0,3,3.0,0.0\n"
            "0,0,4,4.0,0.0\n"
            "1,1,0,0.0,5.0\n"
            "1,1,1,1.0,5.0\n"
            "1,1,2,2.0,5.0\n");
  const Dataset stride1 = load_trajectory_csv(path, 2, 2, 1);
  EXPECT_EQ(stride1.samples.size(), 2u);  // starts 0 and 1
  EXPECT_DOUBLE_EQ(stride1.samples[0].history[0].x, 0.0);
  EXPECT_DOUBLE_EQ(stride1.samples[0].future[1].x, 3.0);
  EXPECT_DOUBLE_EQ(stride1.samples[1].history[0].x, 1.0);
  EXPECT_DOUBLE_EQ(stride1.samples[1].future[1].x, 4.0);

  const Dataset stride2 = load_trajectory_csv(path, 2, 2, 2);
  EXPECT_EQ(stride2.samples.size(), 1u);
}

TEST(DataTest, NeighborsMustCoverTheHistoryWindow) {
  const std::string path = tmpPath("idm_data_nbrs.csv");
  // Ego agent 0: t=0..3 (one window, history t=0..1). Agent 1 covers the
  // history exactly; agent 2 only overlaps one step; agent 9 is another scene.
  writeFile(path,
            "scene_id,agent_id,t,x,y\n"
            "0,0,0,0.0,0.0\n"
            "0,0,1,1.0,0.0\n"
            "0,0,2,2.0,0.0\n"
            "0,0,3,3.0,0.0\n"
            "0,1,0,5.0,1.0\n"
            "0,1,1,5.0,2.0\n"
            "0,2,1,7.0,0.0\n"
            "0,2,2,7.0,1.0\n"
            "3,9,0,8.0,0.0\n"
            "3,9,1,8.0,1.0\n");
  const Dataset ds = load_trajectory_csv(path, 2, 2);
  ASSERT_EQ(ds.samples.size(), 1u);
  const TrajectorySample& s = ds.samples[0];
  ASSERT_EQ(s.neighbors.size(), 1u);
  EXPECT_DOUBLE_EQ(s.neighbors[0][0].x, 5.0);
  EXPECT_DOUBLE_EQ(s.neighbors[0][1].y, 2.0);
}

TEST(DataTest, CsvErrorsNameTheProblem) {
  const std::string path = tmpPath("idm_data_bad.csv");

  writeFile(path, "scene_id,agent_id,t,y,x\n0,0,0,0,0\n");
  try {
    load_trajectory_csv(path, 2, 2);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("scene_id,agent_id,t,x,y"), std::string::npos);
  }

  writeFile(path, "scene_id,agent_id,t,x,y\n0,0,0,1.0\n");
  try {
    load_trajectory_csv(path, 2, 2);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("5 fields"), std::string::npos);
  }

  writeFile(path, "scene_id,agent_id,t,x,y\n0,0,0,1.0,abc\n");
  try {
    load_trajectory_csv(path, 2, 2);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'abc'"), std::string::npos);
  }

  writeFile(path,
            "scene_id,agent_id,t,x,y\n"
            "0,0,1,0.0,0.0\n"
            "0,0,0,1.0,0.0\n");
  try {
    load_trajectory_csv(path, 2, 2);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("non-monotone"), std::string::npos);
  }

  writeFile(path,
            "scene_id,agent_id,t,x,y\n"
            "0,0,0,0.0,0.0\n"
            "0,0,1,1.0,0.0\n"
            "0,0,3,2.0,0.0\n"
            "0,0,6,3.0,0.0\n");
  EXPECT_THROW(load_trajectory_csv(path, 2, 2), IoError);  // non-uniform spacing

  writeFile(path, "scene_id,agent_id,t,x,y\n0,0,0,0.0,0.0\n");
  EXPECT_THROW(load_trajectory_csv(path, 2, 2), IoError);  // no usable windows

  writeFile(path, "");
  EXPECT_THROW(load_trajectory_csv(path, 2, 2), IoError);

  EXPECT_THROW(load_trajectory_csv(tmpPath("idm_data_missing_zz.csv"), 2, 2), IoError);
  EXPECT_THROW(load_trajectory_csv(path, 2, 2, 0), ShapeError);
}

TEST(DataTest, ModeSidecarRoundTrip) {
  const Dataset ds = generate_crossroad(smallSpec(8, 0.25, 3));
  const std::string path = tmpPath("idm_data_sidecar.csv");
  write_mode_sidecar(path, ds);
  const ModeSidecar mc = load_mode_sidecar(path);
  EXPECT_EQ(mc.sigma, ds.sigma);
  ASSERT_EQ(mc.mode_names.size(), 3u);
  EXPECT_EQ(mc.mode_names, ds.mode_names);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_EQ(mc.mode_endpoints_rel[m].x, ds.mode_endpoints_rel[m].x);
    EXPECT_EQ(mc.mode_endpoints_rel[m].y, ds.mode_endpoints_rel[m].y);
  }
  ASSERT_EQ(mc.labels.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(mc.labels.at({ds.samples[i].scene_id, ds.samples[i].agent_id}),
              ds.mode_labels[i]);
  }

  writeFile(path, "scene_id,agent_id\n");
  EXPECT_THROW(load_mode_sidecar(path), IoError);
}

TEST(DataTest, TrackTensorBridges) {
  const std::vector<Vec2> track = {{1.5, -2.0}, {0.0, 3.25}, {-4.5, 0.5}};
  const Tensor t = track_to_tensor(track);
  ASSERT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t.at(1, 1), 3.25);
  const std::vector<Vec2> back = tensor_to_track(t);
  ASSERT_EQ(back.size(), track.size());
  for (std::size_t i = 0; i < track.size(); ++i) {
    EXPECT_EQ(back[i].x, track[i].x);
    EXPECT_EQ(back[i].y, track[i].y);
  }
}
