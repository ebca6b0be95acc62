#pragma once

// Candidate alternate trajectories around an expert demonstration. Control
// points on the expert are pushed sideways by a Gaussian with mean +mu (left
// of travel) or -mu (right) and a path is fitted through them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfirl/errors.hpp"
#include "cfirl/grid_mdp.hpp"
#include "cfirl/scene.hpp"

namespace cfirl {

/// Continuous grid position in (row, col) cell units.
struct Point2 {
  double row = 0.0;
  double col = 0.0;
};

struct ControlOffset {
  int index = 0;        // control state index on the expert
  double offset = 0.0;  // signed displacement along the left normal, in cells
  Point2 point;         // displaced position, clamped to the grid
};

/// k interior indices at regular spacing, start and goal excluded.
inline std::vector<int> sample_control_points(const Trajectory& expert, int k) {
  require(k >= 1, "need at least one control point");
  const int n = static_cast<int>(expert.size());
  require(n >= k + 2, "trajectory of length " + std::to_string(n) + " is too short for " + std::to_string(k) +
                          " control points");
  std::vector<int> out;
  const double spacing = static_cast<double>(n - 1) / (k + 1);
  for (int i = 1; i <= k; ++i) {
    out.push_back(std::clamp(static_cast<int>(std::lround(i * spacing)), 1, n - 2));
  }
  return out;
}

/// Unit normal pointing left of the direction of travel at expert state `i`,
/// in (row, col). Interior states use the bisector of the adjacent segments.
inline Point2 left_normal(const Trajectory& expert, int i) {
  const int n = static_cast<int>(expert.size());
  require(n >= 2 && i >= 0 && i < n, "normal requested outside the trajectory");
  auto unit = [](CellState a, CellState b) {
    const double dr = b.row - a.row;
    const double dc = b.col - a.col;
    const double len = std::hypot(dr, dc);
    return len > 0 ? Point2{dr / len, dc / len} : Point2{};
  };
  Point2 t{};
  if (i > 0) {
    const auto a = unit(expert.states[i - 1], expert.states[i]);
    t.row += a.row;
    t.col += a.col;
  }
  if (i + 1 < n) {
    const auto b = unit(expert.states[i], expert.states[i + 1]);
    t.row += b.row;
    t.col += b.col;
  }
  double len = std::hypot(t.row, t.col);
  if (len < 1e-12) {
    // path reverses on itself; fall back to the incoming segment
    t = unit(expert.states[std::max(i - 1, 0)], expert.states[std::max(i, 1)]);
    len = std::hypot(t.row, t.col);
  }
  require(len > 0, "expert has a zero-length segment at state " + std::to_string(i));
  return {-t.col / len, t.row / len};
}

inline std::vector<ControlOffset> perturb_control_points(const std::vector<int>& indices, const Trajectory& expert,
                                                         double mu, double sigma, Side side, int height, int width,
                                                         std::mt19937_64& rng) {
  require(sigma >= 0.0, "sigma must be nonnegative");
  const double mean = side == Side::left ? mu : -mu;
  std::vector<ControlOffset> out;
  for (int idx : indices) {
    require(idx >= 0 && idx < static_cast<int>(expert.size()), "control index off the expert");
    double d = mean;
    if (sigma > 0.0) d = std::normal_distribution<double>(mean, sigma)(rng);
    const Point2 nrm = left_normal(expert, idx);
    const CellState s = expert.states[idx];
    ControlOffset c;
    c.index = idx;
    c.offset = d;
    c.point = {std::clamp(s.row + d * nrm.row, 0.0, height - 1.0), std::clamp(s.col + d * nrm.col, 0.0, width - 1.0)};
    out.push_back(c);
  }
  return out;
}

namespace detail {

inline int sgn(int v) { return (v > 0) - (v < 0); }

/// Appends an 8-connected walk from the last state to `to` (diagonal first).
inline void walk_to(std::vector<CellState>& path, CellState to) {
  CellState s = path.back();
  while (s != to) {
    s = {s.row + sgn(to.row - s.row), s.col + sgn(to.col - s.col)};
    path.push_back(s);
  }
}

/// Removes cycles: whenever a state repeats, the loop between the visits is cut.
inline std::vector<CellState> erase_loops(const std::vector<CellState>& path) {
  std::vector<CellState> out;
  for (auto s : path) {
    auto it = std::find(out.begin(), out.end(), s);
    if (it != out.end()) {
      out.erase(it + 1, out.end());
    } else {
      out.push_back(s);
    }
  }
  return out;
}

inline double octile(CellState a, CellState b) {
  const int dr = std::abs(a.row - b.row);
  const int dc = std::abs(a.col - b.col);
  return std::max(dr, dc) + (std::sqrt(2.0) - 1.0) * std::min(dr, dc);
}

inline bool near_point(CellState s, const Point2& p) {
  return std::abs(s.row - p.row) <= 1.0 + 1e-12 && std::abs(s.col - p.col) <= 1.0 + 1e-12;
}

/// Polynomial fit of the perpendicular displacement d(u) along the expert,
/// u the normalized arc length, through (0, 0), the control offsets and
/// (1, 0). The candidate is expert(u) + d(u) * normal(u), rasterized.
inline Trajectory fit_polynomial(const Trajectory& expert, const std::vector<ControlOffset>& offsets, int height,
                                 int width) {
  const int n = static_cast<int>(expert.size());
  std::vector<double> arc(n, 0.0);
  for (int i = 1; i < n; ++i) {
    arc[i] = arc[i - 1] + std::hypot(expert.states[i].row - expert.states[i - 1].row,
                                     expert.states[i].col - expert.states[i - 1].col);
  }
  const double total = arc.back();
  if (total <= 0.0) return Trajectory{{expert.front()}, TrajectoryKind::candidate};
  std::vector<Point2> normals(n);
  for (int i = 0; i < n; ++i) normals[i] = n >= 2 ? left_normal(expert, i) : Point2{};

  std::vector<double> t{0.0};
  std::vector<double> d{0.0};
  for (const auto& o : offsets) {
    require(o.index >= 0 && o.index < n, "control offset index off the expert");
    const CellState c = expert.states[o.index];
    const Point2 nrm = normals[o.index];
    t.push_back(arc[o.index] / total);
    d.push_back((o.point.row - c.row) * nrm.row + (o.point.col - c.col) * nrm.col);
  }
  t.push_back(1.0);
  d.push_back(0.0);
  const int m = static_cast<int>(t.size());
  const int degree = std::min(m - 1, 3);
  Eigen::MatrixXd A(m, degree + 1);
  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) {
    // endpoints dominate so the curve leaves the start and meets the goal
    const double wgt = i == 0 || i == m - 1 ? 100.0 : 1.0;
    double p = 1.0;
    for (int k = 0; k <= degree; ++k) {
      A(i, k) = wgt * p;
      p *= t[i];
    }
    b(i) = wgt * d[i];
  }
  const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);

  const int samples = std::max(16, static_cast<int>(std::ceil(total * 8.0)));
  std::vector<CellState> path{expert.front()};
  int seg = 0;
  for (int i = 1; i < samples; ++i) {
    const double u = static_cast<double>(i) / samples;
    const double s = u * total;
    while (seg + 1 < n - 1 && arc[seg + 1] < s) ++seg;
    const double len = arc[seg + 1] - arc[seg];
    const double lam = len > 0 ? (s - arc[seg]) / len : 0.0;
    const CellState a = expert.states[seg];
    const CellState z = expert.states[seg + 1];
    Point2 nrm{(1 - lam) * normals[seg].row + lam * normals[seg + 1].row,
               (1 - lam) * normals[seg].col + lam * normals[seg + 1].col};
    const double nl = std::hypot(nrm.row, nrm.col);
    if (nl > 1e-12) nrm = {nrm.row / nl, nrm.col / nl};
    double disp = 0.0, p = 1.0;
    for (int k = 0; k <= degree; ++k) {
      disp += coef(k) * p;
      p *= u;
    }
    const double r = a.row + lam * (z.row - a.row) + disp * nrm.row;
    const double c = a.col + lam * (z.col - a.col) + disp * nrm.col;
    const CellState cell{static_cast<int>(std::lround(r)), static_cast<int>(std::lround(c))};
    if (cell.row < 0 || cell.row >= height || cell.col < 0 || cell.col >= width) {
      throw ValidationError("fitted curve leaves the " + std::to_string(height) + "x" + std::to_string(width) +
                            " grid at " + to_string(cell) + " (arc fraction " + std::to_string(u) + ")");
    }
    if (cell != path.back()) walk_to(path, cell);
  }
  walk_to(path, expert.back());
  return Trajectory{erase_loops(path), TrajectoryKind::candidate};
}

/// Octile-shortest path from start to goal that comes within one cell
/// (Chebyshev) of every offset point in order. Dijkstra over (cell, stage).
inline Trajectory fit_grid_search(CellState start, CellState goal, const std::vector<ControlOffset>& offsets,
                                  int height, int width) {
  const int k = static_cast<int>(offsets.size());
  const int cells = height * width;
  auto advance = [&](CellState s, int stage) {
    while (stage < k && near_point(s, offsets[stage].point)) ++stage;
    return stage;
  };
  const int stages = k + 1;
  std::vector<double> dist(static_cast<std::size_t>(cells) * stages, std::numeric_limits<double>::infinity());
  std::vector<int> prev(dist.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  const int s0 = (start.row * width + start.col) * stages + advance(start, 0);
  dist[s0] = 0.0;
  heap.push({0.0, s0});
  const int target = (goal.row * width + goal.col) * stages + k;
  while (!heap.empty()) {
    const auto [d, node] = heap.top();
    heap.pop();
    if (d > dist[node]) continue;
    if (node == target) break;
    const int cell = node / stages;
    const int stage = node % stages;
    const CellState u{cell / width, cell % width};
    for (int a = 0; a < kNumActions; ++a) {
      const CellState v{u.row + kActionOffsets[a].drow, u.col + kActionOffsets[a].dcol};
      if (v.row < 0 || v.row >= height || v.col < 0 || v.col >= width) continue;
      const int next = (v.row * width + v.col) * stages + advance(v, stage);
      const double nd = d + move_length(a);
      if (nd < dist[next] - 1e-12) {
        dist[next] = nd;
        prev[next] = node;
        heap.push({nd, next});
      }
    }
  }
  require(std::isfinite(dist[target]), "no grid path passes the control points");
  std::vector<CellState> rev;
  for (int node = target; node >= 0; node = prev[node]) rev.push_back({node / stages / width, node / stages % width});
  std::reverse(rev.begin(), rev.end());
  return Trajectory{rev, TrajectoryKind::candidate};
}

}  // namespace detail

inline Trajectory fit_candidate(const Trajectory& expert, const std::vector<ControlOffset>& offsets, int height,
                                int width, FitMode mode) {
  require(height >= 1 && width >= 1, "grid must have at least one cell");
  require(!expert.empty(), "expert trajectory is empty");
  for (const auto& o : offsets) {
    require(o.point.row >= 0 && o.point.row <= height - 1 && o.point.col >= 0 && o.point.col <= width - 1,
            "offset point outside the grid");
  }
  return mode == FitMode::polynomial ? detail::fit_polynomial(expert, offsets, height, width)
                                     : detail::fit_grid_search(expert.front(), expert.back(), offsets, height, width);
}

/// cfg.num_candidates candidates, the first half left of the expert and the
/// second half right. Candidates equal to the expert or failing to fit are
/// redrawn up to cfg.max_retries times.
inline CandidateSet generate_candidates(const Trajectory& expert, const CfGenConfig& cfg, int height, int width) {
  cfg.validate();
  const GridMDP mdp(height, width, 0.5);
  validate_trajectory(expert, mdp);
  const auto indices = sample_control_points(expert, cfg.num_control_points);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
  std::mt19937_64 rng(seq);
  CandidateSet set;
  set.config = cfg;
  set.seed = cfg.seed;
  for (int id = 0; id < cfg.num_candidates; ++id) {
    const Side side = id < cfg.num_candidates / 2 ? Side::left : Side::right;
    std::string last_error = "candidate equals the expert";
    bool done = false;
    for (int attempt = 0; attempt <= cfg.max_retries && !done; ++attempt) {
      const auto offsets = perturb_control_points(indices, expert, cfg.mu, cfg.sigma, side, height, width, rng);
      try {
        auto traj = fit_candidate(expert, offsets, height, width, cfg.fit);
        if (traj.states == expert.states) continue;
        set.candidates.push_back({id, std::move(traj), side});
        done = true;
      } catch (const ValidationError& e) {
        last_error = e.what();
      }
    }
    if (!done) {
      throw ValidationError("candidate " + std::to_string(id) + " could not be generated after " +
                            std::to_string(cfg.max_retries + 1) + " attempts: " + last_error);
    }
  }
  return set;
}

/// Shoelace area of the loop formed by `candidate` then `expert` reversed, in
/// a y-up frame (x = col, y = -row). Negative when the candidate runs left of
/// the expert.
inline double signed_area_between(const Trajectory& candidate, const Trajectory& expert) {
  std::vector<CellState> loop = candidate.states;
  loop.insert(loop.end(), expert.states.rbegin(), expert.states.rend());
  double area = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const auto& a = loop[i];
    const auto& b = loop[(i + 1) % loop.size()];
    area += static_cast<double>(a.col) * (-b.row) - static_cast<double>(b.col) * (-a.row);
  }
  return 0.5 * area;
}

}  // namespace cfirl
