#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "idm/data.hpp"
#include "idm/inference.hpp"
#include "idm/tensor.hpp"

namespace idm {

// Mean point-to-point Euclidean distance.
inline double ade(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw ShapeError("ade: tracks must be nonempty and of equal length");
  }
  double acc = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) acc += dist(pred[t], truth[t]);
  return acc / static_cast<double>(pred.size());
}

// Endpoint displacement.
inline double fde(const std::vector<Vec2>& pred, const std::vector<Vec2>& truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw ShapeError("fde: tracks must be nonempty and of equal length");
  }
  return dist(pred.back(), truth.back());
}

// Best-of-N over the first n samples; ADE and FDE are minimized
// independently (the winning sample may differ).
inline std::pair<double, double> best_of_n(const PredictionSet& preds,
                                           const std::vector<Vec2>& truth, std::size_t n) {
  if (n < 1) throw ShapeError("best_of_n: n must be >= 1");
  if (n > preds.trajectories.size()) {
    throw ShapeError("best_of_n: n exceeds available samples");
  }
  double best_ade = std::numeric_limits<double>::infinity();
  double best_fde = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    best_ade = std::min(best_ade, ade(preds.trajectories[i], truth));
    best_fde = std::min(best_fde, fde(preds.trajectories[i], truth));
  }
  return {best_ade, best_fde};
}

// Fraction of true intention modes covered by at least one predicted endpoint.
inline double mode_recall(const PredictionSet& preds, const std::vector<Vec2>& mode_endpoints,
                          double radius) {
  if (mode_endpoints.empty()) throw ShapeError("mode_recall: empty mode set");
  if (!(radius > 0.0)) throw ShapeError("mode_recall: radius must be > 0");
  std::size_t hit = 0;
  for (const Vec2& m : mode_endpoints) {
    for (const auto& traj : preds.trajectories) {
      if (dist(traj.back(), m) <= radius) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(mode_endpoints.size());
}

// ====== density grids (contour-figure export) ======

struct DensityGrid {
  Vec2 lo, hi;
  std::size_t resolution = 0;
  std::size_t t_q = 0;
  // grids[t] is resolution×resolution, row-major over (cell_y, cell_x),
  // normalized to sum 1 per timestep.
  std::vector<Tensor> grids;
};

inline DensityGrid density_grid(const std::vector<const PredictionSet*>& preds,
                                Vec2 lo, Vec2 hi, std::size_t resolution) {
  if (resolution < 2) throw ShapeError("density_grid: resolution must be >= 2");
  if (!(hi.x > lo.x && hi.y > lo.y)) throw ShapeError("density_grid: degenerate bounds");
  std::size_t t_q = 0;
  for (const PredictionSet* p : preds) {
    for (const auto& traj : p->trajectories) t_q = std::max(t_q, traj.size());
  }
  if (t_q == 0) throw ShapeError("density_grid: no trajectories");

  DensityGrid g;
  g.lo = lo;
  g.hi = hi;
  g.resolution = resolution;
  g.t_q = t_q;
  g.grids.assign(t_q, Tensor({resolution, resolution}));

  const double sx = static_cast<double>(resolution) / (hi.x - lo.x);
  const double sy = static_cast<double>(resolution) / (hi.y - lo.y);
  std::vector<double> counts(t_q, 0.0);
  for (const PredictionSet* p : preds) {
    for (const auto& traj : p->trajectories) {
      for (std::size_t t = 0; t < traj.size(); ++t) {
        // out-of-bounds mass is clamped to the border cells
        const auto clampi = [&](double v) {
          return std::min<std::size_t>(resolution - 1,
                                       static_cast<std::size_t>(std::max(0.0, v)));
        };
        const std::size_t ix = clampi((traj[t].x - lo.x) * sx);
        const std::size_t iy = clampi((traj[t].y - lo.y) * sy);
        g.grids[t].at(iy, ix) += 1.0;
        counts[t] += 1.0;
      }
    }
  }
  for (std::size_t t = 0; t < t_q; ++t) {
    if (counts[t] > 0.0) {
      for (std::size_t i = 0; i < g.grids[t].size(); ++i) g.grids[t][i] /= counts[t];
    }
  }
  return g;
}

inline void write_density_grid_csv(const std::string& path, const DensityGrid& g) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "# bounds " << detail::fmt_coord(g.lo.x) << " " << detail::fmt_coord(g.lo.y) << " "
     << detail::fmt_coord(g.hi.x) << " " << detail::fmt_coord(g.hi.y) << "\n";
  os << "# resolution " << g.resolution << "\n";
  os << "t,cell_y,cell_x,density\n";
  for (std::size_t t = 0; t < g.grids.size(); ++t) {
    for (std::size_t iy = 0; iy < g.resolution; ++iy) {
      for (std::size_t ix = 0; ix < g.resolution; ++ix) {
        const double v = g.grids[t].at(iy, ix);
        if (v != 0.0) {
          os << t << "," << iy << "," << ix << "," << detail::fmt_coord(v) << "\n";
        }
      }
    }
  }
  if (!os) throw IoError("write failure: " + path);
}

inline DensityGrid load_density_grid_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  DensityGrid g;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::vector<std::array<double, 4>> rows;
  double max_t = 0.0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string word;
      ss >> word;
      if (word == "bounds") ss >> g.lo.x >> g.lo.y >> g.hi.x >> g.hi.y;
      else if (word == "resolution") ss >> g.resolution;
      continue;
    }
    if (!saw_header) {
      if (line != "t,cell_y,cell_x,density") throw IoError("bad density grid header");
      saw_header = true;
      continue;
    }
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 4) throw IoError("line " + std::to_string(line_no) + ": expected 4 fields");
    std::array<double, 4> r;
    for (int i = 0; i < 4; ++i) r[i] = detail::parse_num(cols[i], line_no, "density row");
    max_t = std::max(max_t, r[0]);
    rows.push_back(r);
  }
  if (g.resolution < 2) throw IoError("density grid missing resolution header");
  g.t_q = static_cast<std::size_t>(max_t) + 1;
  g.grids.assign(g.t_q, Tensor({g.resolution, g.resolution}));
  for (const auto& r : rows) {
    g.grids[static_cast<std::size_t>(r[0])].at(static_cast<std::size_t>(r[1]),
                                               static_cast<std::size_t>(r[2])) = r[3];
  }
  return g;
}

// ====== aggregate report ======

struct MetricReport {
  std::vector<std::size_t> ns;   // the N sweep, ascending
  std::vector<double> min_ade;   // per N, averaged over agents
  std::vector<double> min_fde;
  double recall = -1.0;          // mean mode_recall; -1 when modes unknown
  DenoiserCalls calls;           // totals over all agents
  double mean_wall_ms = 0.0;        // network-only, per agent
  double mean_wall_ms_total = 0.0;  // including encoding
  std::size_t agents = 0;

  double final_min_ade() const { return min_ade.back(); }
  double final_min_fde() const { return min_fde.back(); }
};

inline std::vector<std::size_t> default_n_sweep(std::size_t max_n) {
  std::vector<std::size_t> ns;
  for (std::size_t n : {std::size_t{4}, std::size_t{8}, std::size_t{12}, std::size_t{16},
                        std::size_t{20}}) {
    if (n <= max_n) ns.push_back(n);
  }
  if (ns.empty() || ns.back() != max_n) ns.push_back(max_n);
  return ns;
}

// Averages best-of-N metrics over agents. mode_endpoints_per_agent may be
// empty (recall skipped); otherwise one endpoint list per agent.
inline MetricReport evaluate_predictions(
    const std::vector<PredictionSet>& preds,
    const std::vector<const TrajectorySample*>& agents,
    const std::vector<std::vector<Vec2>>& mode_endpoints_per_agent, double recall_radius,
    const std::vector<std::size_t>& ns) {
  if (preds.size() != agents.size() || preds.empty()) {
    throw ShapeError("evaluate_predictions: one PredictionSet per agent required");
  }
  MetricReport r;
  r.ns = ns;
  r.min_ade.assign(ns.size(), 0.0);
  r.min_fde.assign(ns.size(), 0.0);
  r.agents = preds.size();
  double recall_acc = 0.0;
  for (std::size_t a = 0; a < preds.size(); ++a) {
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const auto [a_i, f_i] = best_of_n(preds[a], agents[a]->future, ns[i]);
      r.min_ade[i] += a_i;
      r.min_fde[i] += f_i;
    }
    if (!mode_endpoints_per_agent.empty()) {
      recall_acc += mode_recall(preds[a], mode_endpoints_per_agent[a], recall_radius);
    }
    r.calls.endnet += preds[a].calls.endnet;
    r.calls.priornet += preds[a].calls.priornet;
    r.calls.pathnet += preds[a].calls.pathnet;
    r.mean_wall_ms += static_cast<double>(preds[a].wall_ns) / 1e6;
    r.mean_wall_ms_total += static_cast<double>(preds[a].wall_ns_total) / 1e6;
  }
  const double n_agents = static_cast<double>(preds.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    r.min_ade[i] /= n_agents;
    r.min_fde[i] /= n_agents;
  }
  if (!mode_endpoints_per_agent.empty()) r.recall = recall_acc / n_agents;
  r.mean_wall_ms /= n_agents;
  r.mean_wall_ms_total /= n_agents;
  return r;
}

inline void write_metric_report_csv(const std::string& path, const MetricReport& r) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "n,min_ade,min_fde\n";
  for (std::size_t i = 0; i < r.ns.size(); ++i) {
    os << r.ns[i] << "," << detail::fmt_coord(r.min_ade[i]) << ","
       << detail::fmt_coord(r.min_fde[i]) << "\n";
  }
  if (!os) throw IoError("write failure: " + path);
}

inline std::string format_metric_report(const MetricReport& r) {
  std::ostringstream os;
  os << "agents: " << r.agents << "\n";
  os << "n-sweep:\n";
  for (std::size_t i = 0; i < r.ns.size(); ++i) {
    os << "  N=" << r.ns[i] << "  minADE=" << r.min_ade[i] << "  minFDE=" << r.min_fde[i]
       << "\n";
  }
  if (r.recall >= 0.0) os << "mode_recall: " << r.recall << "\n";
  os << "denoiser calls: endnet=" << r.calls.endnet << " priornet=" << r.calls.priornet
     << " pathnet=" << r.calls.pathnet << " total=" << r.calls.total() << "\n";
  os << "wall per agent: " << r.mean_wall_ms << " ms (networks), " << r.mean_wall_ms_total
     << " ms (with encoding)\n";
  return os.str();
}

}  // namespace idm
