#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "idm/evaluation.hpp"
#include "idm/rng.hpp"

using namespace idm;

namespace {

std::string tmpPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<Vec2> randomTrack(Rng& rng, std::size_t len) {
  std::vector<Vec2> t(len);
  for (Vec2& p : t) p = {rng.gaussian(), rng.gaussian()};
  return t;
}

PredictionSet predsOf(std::vector<std::vector<Vec2>> trajectories) {
  PredictionSet ps;
  ps.trajectories = std::move(trajectories);
  for (const auto& t : ps.trajectories) ps.goals.push_back(t.back());
  return ps;
}

}  // namespace

TEST(EvaluationTest, AdeFdeHandValues) {
  const std::vector<Vec2> truth = {{0, 0}, {1, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(ade(truth, truth), 0.0);
  EXPECT_DOUBLE_EQ(fde(truth, truth), 0.0);

  // Constant 3-4-5 offset: every point (and the endpoint) is 5 away.
  std::vector<Vec2> shifted = truth;
  for (Vec2& p : shifted) p = p + Vec2{3.0, 4.0};
  EXPECT_DOUBLE_EQ(ade(shifted, truth), 5.0);
  EXPECT_DOUBLE_EQ(fde(shifted, truth), 5.0);

  // Mixed per-point errors: distances 0, 5, 13 → mean 6.
  const std::vector<Vec2> mixed = {{0, 0}, {4, 4}, {7, 12}};
  EXPECT_DOUBLE_EQ(ade(mixed, truth), (0.0 + 5.0 + 13.0) / 3.0);
  EXPECT_DOUBLE_EQ(fde(mixed, truth), 13.0);

  EXPECT_THROW(ade({{0, 0}}, truth), ShapeError);
  EXPECT_THROW(ade({}, {}), ShapeError);
  EXPECT_THROW(fde({{0, 0}}, truth), ShapeError);
}

TEST(EvaluationTest, AdeMatchesBruteForceOnRandomTracks) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = randomTrack(rng, 8);
    const auto b = randomTrack(rng, 8);
    double acc = 0.0;
    for (std::size_t t = 0; t < 8; ++t) acc += std::hypot(a[t].x - b[t].x, a[t].y - b[t].y);
    EXPECT_DOUBLE_EQ(ade(a, b), acc / 8.0);
    EXPECT_DOUBLE_EQ(fde(a, b), std::hypot(a[7].x - b[7].x, a[7].y - b[7].y));
  }
}

TEST(EvaluationTest, BestOfNMinimizesAdeAndFdeIndependently) {
  const std::vector<Vec2> truth = {{0, 0}, {0, 1}};
  // First sample: good ADE, poor FDE. Second: poor ADE, good FDE.
  const PredictionSet ps = predsOf({
      {{0, 0}, {0, 2}},      // ade 0.5, fde 1.0
      {{5, 0}, {0, 1.2}},    // ade 2.6, fde 0.2
      {{9, 9}, {9, 9}},      // poor at both
  });
  const auto [a1, f1] = best_of_n(ps, truth, 1);
  EXPECT_DOUBLE_EQ(a1, 0.5);
  EXPECT_DOUBLE_EQ(f1, 1.0);
  const auto [a2, f2] = best_of_n(ps, truth, 2);
  EXPECT_DOUBLE_EQ(a2, 0.5);
  EXPECT_NEAR(f2, 0.2, 1e-12);
  const auto [a3, f3] = best_of_n(ps, truth, 3);
  EXPECT_DOUBLE_EQ(a3, a2);
  EXPECT_DOUBLE_EQ(f3, f2);

  EXPECT_THROW(best_of_n(ps, truth, 0), ShapeError);
  EXPECT_THROW(best_of_n(ps, truth, 4), ShapeError);
}

TEST(EvaluationTest, BestOfNMatchesExhaustiveMinimum) {
  Rng rng(11);
  const auto truth = randomTrack(rng, 6);
  std::vector<std::vector<Vec2>> trajs;
  for (int d = 0; d < 10; ++d) trajs.push_back(randomTrack(rng, 6));
  const PredictionSet ps = predsOf(trajs);

  double run_ade = std::numeric_limits<double>::infinity();
  double run_fde = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n <= 10; ++n) {
    run_ade = std::min(run_ade, ade(trajs[n - 1], truth));
    run_fde = std::min(run_fde, fde(trajs[n - 1], truth));
    const auto [a, f] = best_of_n(ps, truth, n);
    EXPECT_DOUBLE_EQ(a, run_ade);
    EXPECT_DOUBLE_EQ(f, run_fde);
  }

  // Exact truth among the samples pins the minimum to zero.
  trajs.push_back(truth);
  const auto [az, fz] = best_of_n(predsOf(trajs), truth, trajs.size());
  EXPECT_DOUBLE_EQ(az, 0.0);
  EXPECT_DOUBLE_EQ(fz, 0.0);
}

TEST(EvaluationTest, ModeRecallCountsCoveredModes) {
  const std::vector<Vec2> modes = {{0, 0}, {10, 0}, {20, 0}};
  const PredictionSet two = predsOf({
      {{0, 0}, {0.5, 0.0}},
      {{0, 0}, {10.9, 0.0}},
  });
  EXPECT_NEAR(mode_recall(two, modes, 1.0), 2.0 / 3.0, 1e-15);

  const PredictionSet far = predsOf({{{0, 0}, {50.0, 50.0}}});
  EXPECT_DOUBLE_EQ(mode_recall(far, modes, 1.0), 0.0);

  const PredictionSet all = predsOf({
      {{0, 0}, {0.0, 0.2}},
      {{0, 0}, {9.5, 0.0}},
      {{0, 0}, {20.0, -0.9}},
  });
  EXPECT_DOUBLE_EQ(mode_recall(all, modes, 1.0), 1.0);

  // Boundary sits inside (<=).
  const PredictionSet edge = predsOf({{{0, 0}, {1.0, 0.0}}});
  EXPECT_DOUBLE_EQ(mode_recall(edge, {{0, 0}}, 1.0), 1.0);

  EXPECT_THROW(mode_recall(two, {}, 1.0), ShapeError);
  EXPECT_THROW(mode_recall(two, modes, 0.0), ShapeError);
}

TEST(EvaluationTest, ModeRecallMatchesBruteForceScan) {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<Vec2>> trajs;
    for (int d = 0; d < 12; ++d) trajs.push_back(randomTrack(rng, 3));
    std::vector<Vec2> modes;
    for (int m = 0; m < 4; ++m) modes.push_back({rng.gaussian(), rng.gaussian()});
    const double radius = 0.8;

    std::size_t covered = 0;
    for (const Vec2& m : modes) {
      bool hit = false;
      for (const auto& t : trajs) {
        hit = hit || std::hypot(t.back().x - m.x, t.back().y - m.y) <= radius;
      }
      if (hit) ++covered;
    }
    EXPECT_DOUBLE_EQ(mode_recall(predsOf(trajs), modes, radius),
                     static_cast<double>(covered) / 4.0);
  }
}

TEST(EvaluationTest, DefaultNSweep) {
  EXPECT_EQ(default_n_sweep(20), (std::vector<std::size_t>{4, 8, 12, 16, 20}));
  EXPECT_EQ(default_n_sweep(10), (std::vector<std::size_t>{4, 8, 10}));
  EXPECT_EQ(default_n_sweep(3), (std::vector<std::size_t>{3}));
  EXPECT_EQ(default_n_sweep(25), (std::vector<std::size_t>{4, 8, 12, 16, 20, 25}));
}

TEST(EvaluationTest, DensityGridPlacesAndNormalizesMass) {
  // 4x4 grid over [0,4)^2; one trajectory with two timesteps.
  const PredictionSet ps = predsOf({{{0.5, 0.5}, {3.5, 2.5}}});
  const DensityGrid g = density_grid({&ps}, {0, 0}, {4, 4}, 4);
  ASSERT_EQ(g.grids.size(), 2u);
  EXPECT_DOUBLE_EQ(g.grids[0].at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.grids[1].at(2, 3), 1.0);
  for (std::size_t t = 0; t < 2; ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < g.grids[t].size(); ++i) sum += g.grids[t][i];
    EXPECT_DOUBLE_EQ(sum, 1.0);
  }

  // Out-of-bounds mass clamps to border cells rather than disappearing.
  const PredictionSet out = predsOf({{{-5.0, -5.0}, {99.0, 1.5}}});
  const DensityGrid go = density_grid({&out}, {0, 0}, {4, 4}, 4);
  EXPECT_DOUBLE_EQ(go.grids[0].at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(go.grids[1].at(1, 3), 1.0);

  EXPECT_THROW(density_grid({&ps}, {0, 0}, {4, 4}, 1), ShapeError);
  EXPECT_THROW(density_grid({&ps}, {4, 0}, {4, 4}, 4), ShapeError);
  const PredictionSet empty;
  EXPECT_THROW(density_grid({&empty}, {0, 0}, {4, 4}, 4), ShapeError);
}

TEST(EvaluationTest, DensityGridAveragesAcrossSetsAndDraws) {
  const PredictionSet a = predsOf({{{0.5, 0.5}}, {{0.5, 0.5}}});
  const PredictionSet b = predsOf({{{0.5, 0.5}}, {{3.5, 3.5}}});
  const DensityGrid g = density_grid({&a, &b}, {0, 0}, {4, 4}, 4);
  ASSERT_EQ(g.grids.size(), 1u);
  EXPECT_DOUBLE_EQ(g.grids[0].at(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(g.grids[0].at(3, 3), 0.25);
}

TEST(EvaluationTest, DensityGridCsvRoundTrip) {
  const PredictionSet ps = predsOf({{{0.5, 0.5}, {3.5, 2.5}}, {{1.5, 0.5}, {3.5, 2.5}}});
  const DensityGrid g = density_grid({&ps}, {0, 0}, {4, 4}, 4);
  const std::string path = tmpPath("idm_eval_grid.csv");
  write_density_grid_csv(path, g);
  const DensityGrid back = load_density_grid_csv(path);
  EXPECT_EQ(back.resolution, g.resolution);
  EXPECT_EQ(back.t_q, g.t_q);
  EXPECT_DOUBLE_EQ(back.lo.x, g.lo.x);
  EXPECT_DOUBLE_EQ(back.hi.y, g.hi.y);
  ASSERT_EQ(back.grids.size(), g.grids.size());
  for (std::size_t t = 0; t < g.grids.size(); ++t) {
    EXPECT_TRUE(back.grids[t] == g.grids[t]) << "t=" << t;
  }

  std::ofstream os(path, std::ios::trunc);
  os << "t,cell_y,cell_x,density\n0,0,0,1.0\n";
  os.close();
  EXPECT_THROW(load_density_grid_csv(path), IoError);  // no resolution header
}

TEST(EvaluationTest, EvaluatePredictionsAveragesOverAgents) {
  TrajectorySample s1, s2;
  s1.future = {{0, 0}, {0, 1}};
  s2.future = {{2, 2}, {2, 3}};

  PredictionSet p1 = predsOf({
      {{0, 0}, {0, 1}},  // exact
      {{1, 0}, {1, 1}},  // ade 1, fde 1
  });
  PredictionSet p2 = predsOf({
      {{2, 3}, {2, 4}},  // ade 1, fde 1
      {{4, 2}, {4, 3}},  // ade 2, fde 2
  });
  p1.calls.endnet = 10;
  p2.calls.endnet = 20;
  p1.wall_ns = 2000000;
  p2.wall_ns = 4000000;
  p1.wall_ns_total = 3000000;
  p2.wall_ns_total = 5000000;

  const std::vector<std::size_t> ns = {1, 2};
  const MetricReport plain =
      evaluate_predictions({p1, p2}, {&s1, &s2}, {}, 1.0, ns);
  ASSERT_EQ(plain.ns, ns);
  EXPECT_DOUBLE_EQ(plain.min_ade[0], (0.0 + 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(plain.min_fde[0], (0.0 + 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(plain.min_ade[1], 0.5);
  EXPECT_DOUBLE_EQ(plain.final_min_ade(), 0.5);
  EXPECT_DOUBLE_EQ(plain.recall, -1.0);
  EXPECT_EQ(plain.calls.endnet, 30u);
  EXPECT_EQ(plain.agents, 2u);
  EXPECT_DOUBLE_EQ(plain.mean_wall_ms, 3.0);
  EXPECT_DOUBLE_EQ(plain.mean_wall_ms_total, 4.0);

  // With per-agent mode endpoints: agent 1 covers its mode, agent 2 misses.
  const MetricReport with_modes = evaluate_predictions(
      {p1, p2}, {&s1, &s2}, {{s1.future.back()}, {s2.future.back()}}, 0.5, ns);
  EXPECT_DOUBLE_EQ(with_modes.recall, 0.5);

  EXPECT_THROW(evaluate_predictions({p1}, {&s1, &s2}, {}, 1.0, ns), ShapeError);
  EXPECT_THROW(evaluate_predictions({}, {}, {}, 1.0, ns), ShapeError);
}

TEST(EvaluationTest, MetricReportCsvAndText) {
  MetricReport r;
  r.ns = {4, 8};
  r.min_ade = {1.25, 1.0};
  r.min_fde = {2.5, 2.0};
  r.recall = 0.75;
  r.calls.endnet = 100;
  r.calls.priornet = 10;
  r.calls.pathnet = 50;
  r.agents = 5;

  const std::string path = tmpPath("idm_eval_report.csv");
  write_metric_report_csv(path, r);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "n,min_ade,min_fde");
  std::getline(is, line);
  EXPECT_EQ(line, "4,1.25,2.5");
  std::getline(is, line);
  EXPECT_EQ(line, "8,1,2");

  const std::string text = format_metric_report(r);
  EXPECT_NE(text.find("N=4"), std::string::npos);
  EXPECT_NE(text.find("mode_recall: 0.75"), std::string::npos);
  EXPECT_NE(text.find("total=160"), std::string::npos);
}
