#pragma once

// Synthetic structured-BEV scenes: terrain one-hot channels, a dynamic-entity
// channel and elevation, with an oracle cost and an optimal expert.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "cfirl/errors.hpp"
#include "cfirl/features.hpp"
#include "cfirl/grid_mdp.hpp"
#include "cfirl/scene.hpp"

namespace cfirl {

enum class Layout { noise, two_corridor };

inline std::string to_string(Layout layout) { return layout == Layout::noise ? "noise" : "two_corridor"; }

inline Layout parse_layout(const std::string& name) {
  if (name == "noise") return Layout::noise;
  if (name == "two_corridor") return Layout::two_corridor;
  throw ValidationError("unknown world layout '" + name + "'");
}

/// Geometry of the two-corridor layout: a forbidden wall splits the map into
/// left and right halves. Two gaps cross it: a cheap corridor and a shortcut
/// lying on the straight start-goal line but paved with a costly class.
struct CorridorConfig {
  std::string open_class = "grass";
  std::string corridor_class = "sidewalk";
  std::string shortcut_class = "rocks";
  int wall_thickness = 2;
  int gap_width = 2;
  int separation = 4;  // rows between the two gaps' first rows
  int margin = 3;      // start/goal column distance from the map edge

  bool operator==(const CorridorConfig&) const = default;
};

struct WorldConfig {
  int height = 32;
  int width = 32;
  double cell_size = 0.5;
  std::vector<TerrainClass> terrain_classes{
      {"sidewalk", 1.0, 0.35, false}, {"dirt", 1.5, 0.25, false}, {"grass", 2.5, 0.25, false},
      {"rocks", 5.0, 0.15, false},   {"water", 0.0, 0.0, true}};
  double obstacle_density = 0.1;
  double noise_scale = 8.0;  // lattice spacing of the terrain noise, cells
  double elevation_amplitude = 0.0;
  double curb_probability = 0.0;
  double curb_height = 0.15;
  int dynamic_count = 0;
  double dynamic_radius = 1.5;
  double dynamic_cost = 3.0;
  double step_penalty = 5.0;
  double min_goal_distance = 8.0;
  double max_goal_distance = 0.0;  // 0 = unbounded
  Layout layout = Layout::noise;
  CorridorConfig corridor;
  std::uint64_t seed = 0;
  int max_retries = 200;

  OracleCost oracle() const {
    OracleCost o;
    o.classes = terrain_classes;
    for (auto& c : o.classes) {
      if (c.forbidden) c.fraction = obstacle_density;
    }
    o.step_penalty = step_penalty;
    o.dynamic_cost = dynamic_cost;
    return o;
  }

  void validate() const {
    require(height >= 3 && width >= 3, "world must be at least 3x3 cells");
    require(cell_size > 0.0, "cell_size must be positive");
    oracle().validate();
    require(obstacle_density >= 0.0 && obstacle_density <= 1.0, "obstacle_density must be in [0,1]");
    require(curb_probability >= 0.0 && curb_probability <= 1.0, "curb_probability must be in [0,1]");
    require(noise_scale >= 1.0, "noise_scale must be at least one cell");
    require(elevation_amplitude >= 0.0 && curb_height >= 0.0, "elevation parameters must be nonnegative");
    require(dynamic_count >= 0 && dynamic_radius >= 0.0, "dynamic blob parameters must be nonnegative");
    require(min_goal_distance >= 0.0 && (max_goal_distance == 0.0 || max_goal_distance >= min_goal_distance),
            "goal distance bounds are inconsistent");
    require(max_retries >= 1, "max_retries must be positive");
    if (layout == Layout::noise) {
      double sum = 0.0;
      for (const auto& c : terrain_classes) sum += c.forbidden ? 0.0 : c.fraction;
      require(sum > 0.0, "non-forbidden terrain fractions must not all be zero");
    } else {
      const auto o = oracle();
      for (const auto* n : {&corridor.open_class, &corridor.corridor_class, &corridor.shortcut_class}) {
        require(!o.classes[o.class_index(*n)].forbidden, "corridor classes must not be forbidden");
      }
      require(corridor.wall_thickness >= 1 && corridor.gap_width >= 1, "corridor wall and gap must be positive");
      require(corridor.separation >= corridor.gap_width, "corridor gaps must not overlap");
      require(corridor.margin >= 0 && 2 * corridor.margin + corridor.wall_thickness + 2 <= width,
              "corridor layout does not fit the world width");
      require(corridor.gap_width * 2 + corridor.separation + 2 <= height,
              "corridor layout does not fit the world height");
    }
  }
};

inline std::vector<Channel> world_channels(const WorldConfig& cfg) {
  std::vector<Channel> ch;
  for (const auto& c : cfg.terrain_classes) ch.push_back({c.name, ChannelRole::static_semantic});
  ch.push_back({"dynamic", ChannelRole::dynamic});
  ch.push_back({"elevation", ChannelRole::elevation});
  return ch;
}

namespace detail {

inline std::mt19937_64 scene_rng(std::uint64_t world_seed, std::uint64_t scene_seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(world_seed), static_cast<std::uint32_t>(world_seed >> 32),
                    static_cast<std::uint32_t>(scene_seed), static_cast<std::uint32_t>(scene_seed >> 32)};
  return std::mt19937_64(seq);
}

inline double uniform01(std::mt19937_64& rng) {
  // 53 random bits; platform independent unlike std::uniform_real_distribution.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

/// Two-octave value noise in roughly [-1, 1] with smoothstep interpolation.
inline Grid<double> value_noise(std::mt19937_64& rng, int h, int w, double scale) {
  Grid<double> out(h, w, 0.0);
  double amp = 1.0;
  double norm = 0.0;
  for (int octave = 0; octave < 2; ++octave) {
    const double s = std::max(1.0, scale / (1 << octave));
    const int lh = static_cast<int>(std::ceil(h / s)) + 2;
    const int lw = static_cast<int>(std::ceil(w / s)) + 2;
    Grid<double> lattice(lh, lw);
    for (double& v : lattice.data()) v = 2.0 * uniform01(rng) - 1.0;
    for (int r = 0; r < h; ++r) {
      const double fy = r / s;
      const int y0 = static_cast<int>(fy);
      double ty = fy - y0;
      ty = ty * ty * (3 - 2 * ty);
      for (int c = 0; c < w; ++c) {
        const double fx = c / s;
        const int x0 = static_cast<int>(fx);
        double tx = fx - x0;
        tx = tx * tx * (3 - 2 * tx);
        const double top = lattice(y0, x0) * (1 - tx) + lattice(y0, x0 + 1) * tx;
        const double bot = lattice(y0 + 1, x0) * (1 - tx) + lattice(y0 + 1, x0 + 1) * tx;
        out(r, c) += amp * (top * (1 - ty) + bot * ty);
      }
    }
    norm += amp;
    amp *= 0.5;
  }
  for (double& v : out.data()) v /= norm;
  return out;
}

// Cell indices sorted by value, ties by index.
inline std::vector<int> argsort(const Grid<double>& g, bool descending) {
  std::vector<int> idx(g.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return descending ? g.data()[a] > g.data()[b] : g.data()[a] < g.data()[b];
  });
  return idx;
}

inline void assign_noise_terrain(const WorldConfig& cfg, std::mt19937_64& rng, Grid<int>& terrain) {
  const int n = static_cast<int>(terrain.size());
  const auto oracle = cfg.oracle();
  const int forbidden = oracle.forbidden_class();
  const auto field_a = value_noise(rng, cfg.height, cfg.width, cfg.noise_scale);
  const auto field_b = value_noise(rng, cfg.height, cfg.width, cfg.noise_scale);

  const int n_forbidden = static_cast<int>(std::lround(cfg.obstacle_density * n));
  std::vector<char> blocked(n, 0);
  const auto by_b = argsort(field_b, true);
  for (int i = 0; i < n_forbidden; ++i) blocked[by_b[i]] = 1;

  std::vector<int> order;
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(cfg.terrain_classes.size()); ++i) {
    if (i == forbidden) continue;
    order.push_back(i);
    total += cfg.terrain_classes[i].fraction;
  }
  // Fisher-Yates with our own integer draw so the order is platform independent.
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) std::swap(order[i], order[uniform_int(rng, 0, i)]);

  std::vector<int> rest;
  for (int idx : argsort(field_a, false)) {
    if (!blocked[idx]) rest.push_back(idx);
  }
  const int m = static_cast<int>(rest.size());
  double cum = 0.0;
  int pos = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cum += cfg.terrain_classes[order[k]].fraction / total;
    const int end = k + 1 == order.size() ? m : static_cast<int>(std::lround(cum * m));
    for (; pos < end; ++pos) terrain.data()[rest[pos]] = order[k];
  }
  for (int i = 0; i < n; ++i) {
    if (blocked[i]) terrain.data()[i] = forbidden;
  }
}

struct CorridorGeometry {
  int wall_col = 0;
  int shortcut_row = 0;
  int corridor_row = 0;
};

inline CorridorGeometry assign_corridor_terrain(const WorldConfig& cfg, std::mt19937_64& rng, Grid<int>& terrain) {
  const auto oracle = cfg.oracle();
  const auto& cc = cfg.corridor;
  const int open = oracle.class_index(cc.open_class);
  const int lane = oracle.class_index(cc.corridor_class);
  const int shortcut = oracle.class_index(cc.shortcut_class);
  const int wall = oracle.forbidden_class();
  std::fill(terrain.data().begin(), terrain.data().end(), open);

  CorridorGeometry g;
  g.wall_col = (cfg.width - cc.wall_thickness) / 2;
  const bool corridor_above = uniform01(rng) < 0.5;
  const int span = cc.separation + cc.gap_width;
  const int lo = 1;
  const int hi = cfg.height - 1 - span;
  const int top = uniform_int(rng, lo, std::max(lo, hi));
  g.shortcut_row = corridor_above ? top + cc.separation : top;
  g.corridor_row = corridor_above ? top : top + cc.separation;
  for (int r = 0; r < cfg.height; ++r) {
    for (int c = g.wall_col; c < g.wall_col + cc.wall_thickness; ++c) {
      if (r >= g.shortcut_row && r < g.shortcut_row + cc.gap_width) {
        terrain(r, c) = shortcut;
      } else if (r >= g.corridor_row && r < g.corridor_row + cc.gap_width) {
        terrain(r, c) = lane;
      } else {
        terrain(r, c) = wall;
      }
    }
  }
  return g;
}

}  // namespace detail

/// Optimal cost-to-go to `goal` over the 8-connected grid under the oracle
/// move cost (backward Dijkstra). Unreachable and forbidden cells get +inf.
inline Grid<double> cost_to_go(const OracleView& oracle, CellState goal) {
  const auto& cost = oracle.cell_cost();
  const int h = cost.height();
  const int w = cost.width();
  Grid<double> dist(h, w, kForbiddenCost);
  if (oracle.forbidden(goal)) return dist;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[goal] = 0.0;
  heap.push({0.0, goal.row * w + goal.col});
  while (!heap.empty()) {
    const auto [d, idx] = heap.top();
    heap.pop();
    const CellState u{idx / w, idx % w};
    if (d > dist[u]) continue;
    for (int a = 0; a < kNumActions; ++a) {
      // predecessor p moves into u
      const CellState p{u.row - kActionOffsets[a].drow, u.col - kActionOffsets[a].dcol};
      if (!dist.in_bounds(p) || oracle.forbidden(p)) continue;
      const double nd = d + oracle.move_cost(p, u);
      if (nd < dist[p]) {
        dist[p] = nd;
        heap.push({nd, p.row * w + p.col});
      }
    }
  }
  return dist;
}

/// Minimum-oracle-cost path; ties prefer cardinal moves, then action order.
inline Trajectory optimal_path(const OracleView& oracle, CellState start, CellState goal) {
  const auto dist = cost_to_go(oracle, goal);
  require(dist.in_bounds(start) && dist.in_bounds(goal), "start or goal outside the grid");
  if (!std::isfinite(dist[start])) {
    throw ValidationError("no feasible path from " + to_string(start) + " to " + to_string(goal));
  }
  Trajectory t;
  t.kind = TrajectoryKind::expert;
  t.states.push_back(start);
  CellState s = start;
  const std::size_t cap = dist.size() + 1;
  while (s != goal) {
    std::array<double, kNumActions> total;
    double best = kForbiddenCost;
    for (int a = 0; a < kNumActions; ++a) {
      const CellState n{s.row + kActionOffsets[a].drow, s.col + kActionOffsets[a].dcol};
      total[a] = dist.in_bounds(n) && std::isfinite(dist[n]) ? oracle.move_cost(s, n) + dist[n] : kForbiddenCost;
      best = std::min(best, total[a]);
    }
    const double tol = 1e-9 * std::max(1.0, std::abs(best));
    int pick = -1;
    for (int pass = 0; pass < 2 && pick < 0; ++pass) {
      for (int a = pass == 0 ? 0 : 1; a < kNumActions; a += 2) {
        if (total[a] <= best + tol) {
          pick = a;
          break;
        }
      }
    }
    s = {s.row + kActionOffsets[pick].drow, s.col + kActionOffsets[pick].dcol};
    t.states.push_back(s);
    if (t.size() > cap) throw NumericalError("expert extraction did not terminate");
  }
  return t;
}

inline Trajectory gen_expert(const Scene& scene) { return optimal_path(OracleView(scene), scene.start, scene.goal); }

/// Deterministic scene generation from (config, scene_seed).
inline Scene gen_scene(const WorldConfig& cfg, std::uint64_t scene_seed) {
  cfg.validate();
  auto rng = detail::scene_rng(cfg.seed, scene_seed);
  const int h = cfg.height;
  const int w = cfg.width;
  const auto oracle = cfg.oracle();
  const int n_classes = static_cast<int>(cfg.terrain_classes.size());

  Scene scene;
  scene.id = "scene_" + std::to_string(scene_seed);
  scene.oracle = oracle;
  scene.terrain = Grid<int>(h, w, 0);
  scene.features = FeatureGrid(h, w, cfg.cell_size, world_channels(cfg));

  detail::CorridorGeometry geom;
  if (cfg.layout == Layout::noise) {
    detail::assign_noise_terrain(cfg, rng, scene.terrain);
  } else {
    geom = detail::assign_corridor_terrain(cfg, rng, scene.terrain);
  }

  auto& f = scene.features;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) f.at(scene.terrain(r, c), r, c) = 1.0f;
  }

  const int dyn = n_classes;
  for (int k = 0; k < cfg.dynamic_count; ++k) {
    const double cr = detail::uniform01(rng) * h;
    const double cc = detail::uniform01(rng) * w;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (std::hypot(r + 0.5 - cr, c + 0.5 - cc) <= cfg.dynamic_radius) f.at(dyn, r, c) = 1.0f;
      }
    }
  }

  const int elev = n_classes + 1;
  if (cfg.elevation_amplitude > 0.0) {
    const auto hills = detail::value_noise(rng, h, w, 2.0 * cfg.noise_scale);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) f.at(elev, r, c) = static_cast<float>(cfg.elevation_amplitude * hills(r, c));
    }
  }
  if (cfg.curb_probability > 0.0) {
    // Raised classes produce curb steps along their boundaries.
    for (int k = 0; k < n_classes; ++k) {
      if (oracle.classes[k].forbidden || detail::uniform01(rng) >= cfg.curb_probability) continue;
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          if (scene.terrain(r, c) == k) f.at(elev, r, c) += static_cast<float>(cfg.curb_height);
        }
      }
    }
  }

  const OracleView view(scene);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    CellState start;
    CellState goal;
    if (cfg.layout == Layout::noise) {
      start = {detail::uniform_int(rng, 0, h - 1), detail::uniform_int(rng, 0, w - 1)};
      goal = {detail::uniform_int(rng, 0, h - 1), detail::uniform_int(rng, 0, w - 1)};
      const double d = std::hypot(start.row - goal.row, start.col - goal.col);
      if (d < cfg.min_goal_distance || (cfg.max_goal_distance > 0.0 && d > cfg.max_goal_distance)) continue;
    } else {
      const auto& cc = cfg.corridor;
      const int row_lo = std::max(0, geom.shortcut_row - 1);
      const int row_hi = std::min(h - 1, geom.shortcut_row + cc.gap_width);
      start = {detail::uniform_int(rng, row_lo, row_hi), detail::uniform_int(rng, cc.margin, geom.wall_col - 2)};
      goal = {detail::uniform_int(rng, row_lo, row_hi),
              detail::uniform_int(rng, geom.wall_col + cc.wall_thickness + 1, w - 1 - cc.margin)};
    }
    if (start == goal || view.forbidden(start) || view.forbidden(goal)) continue;
    const auto dist = cost_to_go(view, goal);
    if (!std::isfinite(dist[start])) continue;
    scene.start = start;
    scene.goal = goal;
    scene.expert = optimal_path(view, start, goal);
    return scene;
  }
  throw ValidationError("no feasible start-goal pair after " + std::to_string(cfg.max_retries) + " retries");
}

}  // namespace cfirl
