#pragma once

// Downstream navigation: costmap from a reward field, constant-curvature arc
// scoring toward a carrot, farthest-subgoal selection, 1D time-optimal speed
// and a closed-loop mission simulator with intervention bookkeeping.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfirl/errors.hpp"
#include "cfirl/grid.hpp"
#include "cfirl/reward_model.hpp"
#include "cfirl/scene.hpp"

namespace cfirl {

/// Continuous grid-frame coordinates in meters: x along columns, y along rows.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Vec2&) const = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }

inline double normalize_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose&) const = default;
};

inline Vec2 cell_center(CellState s, double cell_size) {
  return {(s.col + 0.5) * cell_size, (s.row + 0.5) * cell_size};
}

inline CellState cell_of(Vec2 p, double cell_size) {
  return {static_cast<int>(std::floor(p.y / cell_size)), static_cast<int>(std::floor(p.x / cell_size))};
}

struct Costmap {
  Grid<double> cost;
  double cell_size = 1.0;

  /// Cost at a metric point; off-grid points cost the maximum.
  double at(Vec2 p) const {
    const auto c = cell_of(p, cell_size);
    return cost.in_bounds(c) ? cost[c] : 1.0;
  }
};

inline Costmap reward_to_costmap(const RewardField& field, double cell_size) {
  require_finite(field, "reward field");
  require(field.size() > 0, "reward field is empty");
  const auto [lo, hi] = std::minmax_element(field.data().begin(), field.data().end());
  const double mn = *lo;
  const double mx = *hi;
  Costmap out{Grid<double>(field.height(), field.width(), 0.0), cell_size};
  if (mx == mn) return out;
  for (std::size_t i = 0; i < field.size(); ++i) out.cost.data()[i] = (mx - field.data()[i]) / (mx - mn);
  return out;
}

inline constexpr int kArcSamples = 30;

/// Constant-curvature arc in the robot frame (robot at the origin facing +x).
struct Arc {
  double curvature = 0.0;
  double arc_length = 0.0;
  std::array<Pose, kArcSamples> samples{};
};

/// Pose reached after driving `s` meters along curvature `k` from the origin.
inline Pose arc_point(double k, double s) {
  if (k == 0.0) return {s, 0.0, 0.0};
  return {std::sin(k * s) / k, (1.0 - std::cos(k * s)) / k, normalize_angle(k * s)};
}

/// Length along curvature `k` whose endpoint lies at `radius` from the start,
/// or the half circle when the circle of curvature `k` is too small to reach it.
inline double arc_length_to_radius(double k, double radius) {
  if (k == 0.0) return radius;
  const double ak = std::abs(k);
  const double half = ak * radius / 2.0;
  if (half >= 1.0) return std::numbers::pi / ak;
  return 2.0 * std::asin(half) / ak;
}

inline Arc make_arc(double k, double radius) {
  Arc a;
  a.curvature = k;
  a.arc_length = arc_length_to_radius(k, radius);
  for (int i = 0; i < kArcSamples; ++i) a.samples[i] = arc_point(k, (i + 1) * a.arc_length / kArcSamples);
  return a;
}

inline std::vector<Arc> generate_arcs(int count = 31, double max_curvature = 1.0, double horizon_radius = 6.0) {
  require(count > 0 && count % 2 == 1, "arc count must be odd, got " + std::to_string(count));
  require(std::isfinite(max_curvature) && max_curvature >= 0.0, "max curvature must be nonnegative");
  require(std::isfinite(horizon_radius) && horizon_radius > 0.0, "horizon radius must be positive");
  std::vector<Arc> arcs;
  const int half = count / 2;
  for (int i = -half; i <= half; ++i) {
    const double k = half == 0 ? 0.0 : max_curvature * i / half;
    arcs.push_back(make_arc(k, horizon_radius));
  }
  return arcs;
}

inline Pose compose(Pose base, Pose local) {
  const double c = std::cos(base.heading);
  const double s = std::sin(base.heading);
  return {base.x + c * local.x - s * local.y, base.y + s * local.x + c * local.y,
          normalize_angle(base.heading + local.heading)};
}

/// The arc moved into the grid frame at `robot`.
inline Arc place_arc(const Arc& arc, Pose robot) {
  Arc out = arc;
  for (auto& p : out.samples) p = compose(robot, p);
  return out;
}

struct ArcScoring {
  double discount = 0.95;
  double goal_weight = 0.1;
};

/// Discounted costmap sum over the samples plus the weighted carrot distance.
/// `arc` must already be in the grid frame.
inline double arc_cost(const Arc& arc, const Costmap& costmap, Vec2 carrot, ArcScoring s = {}) {
  require(std::isfinite(carrot.x) && std::isfinite(carrot.y), "carrot must be finite");
  double total = 0.0;
  double w = 1.0;
  for (const auto& p : arc.samples) {
    total += w * costmap.at(p.position());
    w *= s.discount;
  }
  return total + s.goal_weight * dist(arc.samples.back().position(), carrot);
}

/// Index of the cheapest arc; ties go to lower |curvature|, then lower index.
inline int best_arc(const std::vector<Arc>& local_arcs, Pose robot, const Costmap& costmap, Vec2 carrot,
                    ArcScoring s = {}) {
  require(!local_arcs.empty(), "no arcs to score");
  int best = -1;
  double best_cost = 0.0;
  for (int i = 0; i < static_cast<int>(local_arcs.size()); ++i) {
    const double c = arc_cost(place_arc(local_arcs[i], robot), costmap, carrot, s);
    if (best < 0 || c < best_cost ||
        (c == best_cost && std::abs(local_arcs[i].curvature) < std::abs(local_arcs[best].curvature))) {
      best = i;
      best_cost = c;
    }
  }
  return best;
}

/// Index of the waypoint the farthest-subgoal rule picks: among waypoints
/// strictly closer to the final goal than the robot, the one farthest from it.
/// -1 when none is eligible.
inline int subgoal_index(Vec2 robot, const std::vector<Vec2>& waypoints, Vec2 final_goal) {
  const double robot_d = dist(robot, final_goal);
  int pick = -1;
  double pick_d = -1.0;
  for (int i = 0; i < static_cast<int>(waypoints.size()); ++i) {
    const double d = dist(waypoints[i], final_goal);
    if (d < robot_d && d > pick_d) {
      pick = i;
      pick_d = d;
    }
  }
  return pick;
}

/// Carrot for the local planner: the picked subgoal pulled onto the horizon
/// circle, or the final goal when nothing is eligible.
inline Vec2 select_subgoal(Vec2 robot, const std::vector<Vec2>& waypoints, Vec2 final_goal,
                           double horizon_radius = 6.0) {
  require(!waypoints.empty(), "waypoint list is empty");
  const int i = subgoal_index(robot, waypoints, final_goal);
  const Vec2 pick = i < 0 ? final_goal : waypoints[i];
  const double r = dist(pick, robot);
  if (r <= horizon_radius) return pick;
  return robot + (horizon_radius / r) * (pick - robot);
}

/// Rest-to-rest bang-bang profile over a straight path.
struct VelocityProfile {
  double path_length = 0.0;
  double v_max = 0.0;
  double a_max = 0.0;
  double t_accel = 0.0;
  double t_cruise = 0.0;
  double peak_velocity = 0.0;
  double duration = 0.0;
  bool triangular = false;

  double velocity(double t) const {
    if (t <= 0.0 || t >= duration) return 0.0;
    if (t < t_accel) return a_max * t;
    if (t < t_accel + t_cruise) return peak_velocity;
    return std::max(0.0, a_max * (duration - t));
  }

  double position(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= duration) return path_length;
    const double ramp = 0.5 * a_max * t_accel * t_accel;
    if (t < t_accel) return 0.5 * a_max * t * t;
    if (t < t_accel + t_cruise) return ramp + peak_velocity * (t - t_accel);
    const double left = duration - t;
    return path_length - 0.5 * a_max * left * left;
  }
};

inline VelocityProfile time_optimal_velocity(double path_length, double v_max, double a_max) {
  require(path_length >= 0.0 && v_max >= 0.0 && a_max >= 0.0, "path length, v_max and a_max must be nonnegative");
  VelocityProfile p;
  p.path_length = path_length;
  p.v_max = v_max;
  p.a_max = a_max;
  if (path_length == 0.0) return p;
  if (v_max == 0.0 || a_max == 0.0) {
    p.duration = std::numeric_limits<double>::infinity();
    return p;
  }
  if (path_length <= v_max * v_max / a_max) {
    p.triangular = true;
    p.peak_velocity = std::sqrt(path_length * a_max);
    p.t_accel = p.peak_velocity / a_max;
    p.duration = 2.0 * p.t_accel;
  } else {
    p.peak_velocity = v_max;
    p.t_accel = v_max / a_max;
    p.t_cruise = path_length / v_max - v_max / a_max;
    p.duration = path_length / v_max + v_max / a_max;
  }
  return p;
}

struct Mission {
  std::vector<Vec2> waypoints;  // ends at the final goal
  std::vector<Vec2> reference;  // path used for resets
  double spacing = 10.0;
  Pose start;

  Vec2 final_goal() const { return waypoints.back(); }

  void validate() const {
    require(!waypoints.empty(), "mission has no waypoints");
    require(reference.size() >= 2, "mission reference path needs at least two points");
    require(spacing > 0.0, "waypoint spacing must be positive");
  }
};

inline double polyline_length(const std::vector<Vec2>& path) {
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) total += dist(path[i - 1], path[i]);
  return total;
}

/// Point `s` meters along the polyline, clamped to its ends.
inline Vec2 point_along(const std::vector<Vec2>& path, double s) {
  if (s <= 0.0) return path.front();
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double seg = dist(path[i - 1], path[i]);
    if (s <= seg && seg > 0.0) return path[i - 1] + (s / seg) * (path[i] - path[i - 1]);
    s -= seg;
  }
  return path.back();
}

/// Arc-length coordinate of the closest point on the polyline.
inline double project_onto(const std::vector<Vec2>& path, Vec2 p) {
  double best_d = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  double base = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Vec2 a = path[i - 1];
    const Vec2 ab = path[i] - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double d = dist(a + t * ab, p);
    if (d < best_d) {
      best_d = d;
      best_s = base + t * std::sqrt(len2);
    }
    base += std::sqrt(len2);
  }
  return best_s;
}

inline double heading_along(const std::vector<Vec2>& path, double s) {
  const double len = polyline_length(path);
  const double eps = std::min(0.25, len / 2.0);
  const Vec2 a = point_along(path, std::clamp(s - eps, 0.0, len));
  const Vec2 b = point_along(path, std::clamp(s + eps, 0.0, len));
  return std::atan2(b.y - a.y, b.x - a.x);
}

/// Mission along the scene's expert path with waypoints every `spacing` meters.
inline Mission make_mission(const Scene& scene, double spacing = 10.0) {
  require(spacing > 0.0, "waypoint spacing must be positive");
  require(scene.expert.size() >= 2, "scene '" + scene.id + "' expert is too short for a mission");
  const double cs = scene.features.cell_size();
  Mission m;
  m.spacing = spacing;
  for (auto s : scene.expert.states) m.reference.push_back(cell_center(s, cs));
  const double len = polyline_length(m.reference);
  for (double s = spacing; s < len - 1e-9; s += spacing) m.waypoints.push_back(point_along(m.reference, s));
  m.waypoints.push_back(m.reference.back());
  m.start = {m.reference.front().x, m.reference.front().y, heading_along(m.reference, 0.0)};
  return m;
}

struct SimConfig {
  double tick = 0.1;
  double v_max = 1.0;
  double a_max = 1.0;
  int arc_count = 31;
  double max_curvature = 1.0;
  double horizon_radius = 6.0;
  ArcScoring scoring;
  double reach_radius = 2.0;
  double progress_timeout = 5.0;
  double progress_eps = 0.1;
  double reset_advance = 1.0;
  double max_time = 300.0;
  std::vector<std::string> lethal_classes;  // entered like forbidden cells
  bool record_trace = false;

  void validate() const {
    require(tick > 0.0 && v_max > 0.0 && a_max > 0.0, "tick, v_max and a_max must be positive");
    require(reach_radius > 0.0 && progress_timeout > 0.0 && max_time > 0.0,
            "reach radius, progress timeout and max time must be positive");
    require(reset_advance >= 0.0 && progress_eps >= 0.0, "reset advance and progress eps must be nonnegative");
  }
};

enum class EventKind { subgoal, intervention };

struct MissionEvent {
  double time = 0.0;
  EventKind kind = EventKind::subgoal;
  int index = 0;       // waypoint index for subgoals
  std::string reason;  // lethal, off_grid, no_progress

  bool operator==(const MissionEvent&) const = default;
};

struct TraceRow {
  double time = 0.0;
  Pose pose;
  double velocity = 0.0;
  int arc = -1;
};

struct MissionLog {
  std::vector<MissionEvent> events;
  int num_subgoals = 0;
  double distance = 0.0;
  double elapsed = 0.0;
  bool timed_out = false;
  std::vector<TraceRow> trace;
};

struct MetricsReport {
  double ast = 0.0;
  double pct_subgoals = 0.0;
  double nir = 0.0;
  double distance = 0.0;
  int total_interventions = 0;
  bool timed_out = false;
};

inline double nir_of(int interventions, double distance) {
  if (interventions == 0) return 0.0;
  if (distance <= 0.0) return std::numeric_limits<double>::infinity();
  return interventions / (distance / 100.0);
}

/// AST averages the time between consecutive subgoal arrivals (the first from t = 0).
inline MetricsReport compute_metrics(const MissionLog& log) {
  require(log.num_subgoals > 0, "mission log has no subgoals");
  MetricsReport m;
  double prev = 0.0;
  double last = -std::numeric_limits<double>::infinity();
  int reached = 0;
  double sum = 0.0;
  std::vector<bool> seen(static_cast<std::size_t>(log.num_subgoals), false);
  for (const auto& e : log.events) {
    require(e.time >= last, "mission event timestamps must be nondecreasing");
    last = e.time;
    if (e.kind == EventKind::intervention) {
      ++m.total_interventions;
    } else {
      require(e.index >= 0 && e.index < log.num_subgoals && !seen[e.index],
              "subgoal event " + std::to_string(e.index) + " is out of range or repeated");
      seen[e.index] = true;
      ++reached;
      sum += e.time - prev;
      prev = e.time;
    }
  }
  m.ast = reached > 0 ? sum / reached : 0.0;
  m.pct_subgoals = 100.0 * reached / log.num_subgoals;
  m.distance = log.distance;
  m.nir = nir_of(m.total_interventions, m.distance);
  m.timed_out = log.timed_out;
  return m;
}

/// Pooled metrics: NIR over total distance, AST over all arrivals.
inline MetricsReport aggregate_metrics(const std::vector<MissionLog>& logs) {
  require(!logs.empty(), "no missions to aggregate");
  MetricsReport out;
  double ast_sum = 0.0;
  int reached = 0;
  int subgoals = 0;
  for (const auto& l : logs) {
    const auto m = compute_metrics(l);
    const int n = static_cast<int>(std::lround(m.pct_subgoals * l.num_subgoals / 100.0));
    ast_sum += m.ast * n;
    reached += n;
    subgoals += l.num_subgoals;
    out.total_interventions += m.total_interventions;
    out.distance += m.distance;
    out.timed_out = out.timed_out || m.timed_out;
  }
  out.ast = reached > 0 ? ast_sum / reached : 0.0;
  out.pct_subgoals = 100.0 * reached / subgoals;
  out.nir = nir_of(out.total_interventions, out.distance);
  return out;
}

inline std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  os << "Method\tAST\t%S\tNIR\tDist\tTotalInt\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& [name, m] : rows) {
    os << name << '\t' << m.ast << '\t' << m.pct_subgoals << '\t' << m.nir << '\t' << m.distance << '\t'
       << m.total_interventions << '\n';
  }
  return os.str();
}

/// Negated oracle cost; forbidden cells sit one unit below the cheapest finite reward.
inline RewardField oracle_reward_field(const Scene& scene) {
  const auto cost = oracle_cost_field(scene);
  RewardField r(cost.height(), cost.width(), 0.0);
  double worst = 0.0;
  for (double c : cost.data()) {
    if (std::isfinite(c)) worst = std::max(worst, c);
  }
  for (std::size_t i = 0; i < cost.size(); ++i) {
    const double c = cost.data()[i];
    r.data()[i] = std::isfinite(c) ? -c : -(worst + 1.0);
  }
  return r;
}

/// Closed-loop rollout of the arc planner on `reward`. Interventions fire on
/// entering a forbidden or lethal cell, leaving the grid, or making no progress
/// toward the next subgoal for `progress_timeout`; the robot is then put back
/// on the reference path, `reset_advance` meters past the furthest reset so far.
inline MissionLog simulate_mission(const Scene& scene, const RewardField& reward, const Mission& mission,
                                   const SimConfig& cfg) {
  cfg.validate();
  mission.validate();
  require(reward.height() == scene.height() && reward.width() == scene.width(),
          "reward field shape does not match scene '" + scene.id + "'");
  const double cs = scene.features.cell_size();
  const auto costmap = reward_to_costmap(reward, cs);
  const auto arcs = generate_arcs(cfg.arc_count, cfg.max_curvature, cfg.horizon_radius);

  std::set<int> lethal;
  for (const auto& name : cfg.lethal_classes) lethal.insert(scene.oracle.class_index(name));
  const auto blocked = [&](Vec2 p) -> std::string {
    const auto c = cell_of(p, cs);
    if (!scene.terrain.in_bounds(c)) return "off_grid";
    const int cls = scene.terrain[c];
    if (scene.oracle.classes[cls].forbidden || lethal.count(cls)) return "lethal";
    return "";
  };

  MissionLog log;
  log.num_subgoals = static_cast<int>(mission.waypoints.size());
  const Vec2 goal = mission.final_goal();
  const double ref_len = polyline_length(mission.reference);
  Pose pose = mission.start;
  double v = 0.0;
  double t = 0.0;
  int next = 0;
  int target = -2;
  double best_progress = 0.0;
  double last_progress_t = 0.0;
  double reset_s = 0.0;

  const auto mark_reached = [&]() {
    for (int j = next; j < log.num_subgoals; ++j) {
      if (dist(pose.position(), mission.waypoints[j]) <= cfg.reach_radius) {
        log.events.push_back({t, EventKind::subgoal, j, ""});
        next = j + 1;
        return;
      }
    }
  };
  const auto intervene = [&](const std::string& reason) {
    log.events.push_back({t, EventKind::intervention, next, reason});
    reset_s = std::min(ref_len, std::max(reset_s, project_onto(mission.reference, pose.position())) + cfg.reset_advance);
    const Vec2 p = point_along(mission.reference, reset_s);
    pose = {p.x, p.y, heading_along(mission.reference, reset_s)};
    v = 0.0;
    target = -2;
    mark_reached();
  };

  mark_reached();
  while (next < log.num_subgoals) {
    if (t >= cfg.max_time - 1e-12) {
      log.timed_out = true;
      break;
    }
    std::vector<Vec2> remaining(mission.waypoints.begin() + next, mission.waypoints.end());
    const int pick = subgoal_index(pose.position(), remaining, goal);
    const Vec2 subgoal = pick < 0 ? goal : remaining[pick];
    if (pick + next != target) {
      target = pick + next;
      best_progress = dist(pose.position(), subgoal);
      last_progress_t = t;
    }
    const Vec2 carrot = select_subgoal(pose.position(), remaining, goal, cfg.horizon_radius);
    const int k = best_arc(arcs, pose, costmap, carrot, cfg.scoring);
    const double to_goal = dist(pose.position(), goal);
    const double v_next =
        std::min({cfg.v_max, v + cfg.a_max * cfg.tick, std::sqrt(2.0 * cfg.a_max * to_goal)});
    const double ds = std::min(0.5 * (v + v_next) * cfg.tick, arcs[k].arc_length);
    const Pose moved = compose(pose, arc_point(arcs[k].curvature, ds));
    t += cfg.tick;
    v = v_next;
    if (cfg.record_trace) log.trace.push_back({t, moved, v, k});
    log.distance += ds;
    pose = moved;
    const auto why = blocked(pose.position());
    if (!why.empty()) {
      intervene(why);
      continue;
    }
    mark_reached();
    if (next >= log.num_subgoals) break;
    const double d = dist(pose.position(), subgoal);
    if (d < best_progress - cfg.progress_eps) {
      best_progress = d;
      last_progress_t = t;
    } else if (t - last_progress_t >= cfg.progress_timeout) {
      intervene("no_progress");
    }
  }
  log.elapsed = t;
  return log;
}

inline MissionLog simulate_mission(const Scene& scene, const RewardParams& params, const Mission& mission,
                                   const SimConfig& cfg) {
  return simulate_mission(scene, forward(scene.features, params), mission, cfg);
}

inline nlohmann::json vec_to_json(Vec2 p) { return nlohmann::json::array({p.x, p.y}); }

inline Vec2 vec_from_json(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(), "point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline nlohmann::json mission_to_json(const Mission& m) {
  nlohmann::json j;
  j["format"] = "CFIRL-MISSION1";
  j["spacing"] = m.spacing;
  j["start"] = {m.start.x, m.start.y, m.start.heading};
  j["waypoints"] = nlohmann::json::array();
  for (auto p : m.waypoints) j["waypoints"].push_back(vec_to_json(p));
  j["reference"] = nlohmann::json::array();
  for (auto p : m.reference) j["reference"].push_back(vec_to_json(p));
  return j;
}

inline Mission mission_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.value("format", "") == "CFIRL-MISSION1", "not a CFIRL-MISSION1 document");
  Mission m;
  try {
    m.spacing = j.at("spacing").get<double>();
    const auto& s = j.at("start");
    require(s.is_array() && s.size() == 3, "start must be [x, y, heading]");
    m.start = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    for (const auto& p : j.at("waypoints")) m.waypoints.push_back(vec_from_json(p));
    for (const auto& p : j.at("reference")) m.reference.push_back(vec_from_json(p));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed mission: ") + e.what());
  }
  m.validate();
  return m;
}

inline std::string trace_tsv(const MissionLog& log) {
  std::ostringstream os;
  os << "t\tx\ty\theading\tv\tarc\n" << std::setprecision(9);
  for (const auto& r : log.trace) {
    os << r.time << '\t' << r.pose.x << '\t' << r.pose.y << '\t' << r.pose.heading << '\t' << r.velocity << '\t'
       << r.arc << '\n';
  }
  return os.str();
}

}  // namespace cfirl
