#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cfirl/nav_planner.hpp"
#include "cfirl/synth_world.hpp"

using namespace cfirl;

namespace {

Costmap uniform_costmap(int h, int w, double c, double cell = 0.5) { return {Grid<double>(h, w, c), cell}; }

WorldConfig open_world(int size) {
  WorldConfig wc;
  wc.height = size;
  wc.width = size;
  wc.obstacle_density = 0.0;
  wc.min_goal_distance = size / 2.0;
  return wc;
}

// One traversable class and no obstacles.
WorldConfig clean_world(int size) {
  auto wc = open_world(size);
  for (auto& c : wc.terrain_classes) c.fraction = c.name == "sidewalk" ? 1.0 : 0.0;
  return wc;
}

}  // namespace

TEST(Costmap, ConstantFieldIsZero) {
  const auto cm = reward_to_costmap(RewardField(3, 4, 2.5), 0.5);
  for (double c : cm.cost.data()) EXPECT_EQ(c, 0.0);
}

TEST(Costmap, EndpointsInvert) {
  RewardField r(1, 2, 0.0);
  r(0, 1) = 5.0;
  const auto cm = reward_to_costmap(r, 1.0);
  EXPECT_EQ(cm.cost(0, 0), 1.0);
  EXPECT_EQ(cm.cost(0, 1), 0.0);
}

TEST(Costmap, OrderReversingAndBounded) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    RewardField r(5, 6, 0.0);
    for (auto& v : r.data()) v = n(rng);
    const auto cm = reward_to_costmap(r, 1.0);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_GE(cm.cost.data()[i], 0.0);
      EXPECT_LE(cm.cost.data()[i], 1.0);
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (r.data()[i] > r.data()[j]) {
          EXPECT_LT(cm.cost.data()[i], cm.cost.data()[j]);
        }
      }
    }
  }
}

TEST(Costmap, RejectsNonFinite) {
  RewardField r(2, 2, 0.0);
  r(1, 1) = std::nan("");
  EXPECT_THROW(reward_to_costmap(r, 1.0), ValidationError);
}

TEST(Arcs, ThirtyOneWithOneStraight) {
  const auto arcs = generate_arcs();
  ASSERT_EQ(arcs.size(), 31u);
  EXPECT_EQ(std::count_if(arcs.begin(), arcs.end(), [](const Arc& a) { return a.curvature == 0.0; }), 1);
  for (std::size_t i = 0; i < arcs.size(); ++i) EXPECT_EQ(arcs[i].curvature, -arcs[arcs.size() - 1 - i].curvature);
  for (std::size_t i = 1; i < arcs.size(); ++i) {
    EXPECT_NEAR(arcs[i].curvature - arcs[i - 1].curvature, 1.0 / 15.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(arcs.front().curvature, -1.0);
}

TEST(Arcs, EndpointsWithinHorizon) {
  for (const auto& a : generate_arcs(31, 1.0, 6.0)) {
    const double r = norm(a.samples.back().position());
    EXPECT_LE(r, 6.0 + 1e-6) << a.curvature;
    if (a.curvature == 0.0) {
      EXPECT_EQ(r, 6.0);
      EXPECT_EQ(a.samples.back().y, 0.0);
    }
    // arcs gentle enough to reach the circle end exactly on it
    if (std::abs(a.curvature) * 3.0 < 1.0) {
      EXPECT_NEAR(r, 6.0, 1e-9) << a.curvature;
    }
  }
}

TEST(Arcs, SamplesEquallySpacedByLength) {
  for (const auto& a : generate_arcs()) {
    ASSERT_EQ(a.samples.size(), 30u);
    const double step = a.arc_length / 30.0;
    for (int i = 0; i < 30; ++i) {
      // heading advances by curvature times travelled length
      EXPECT_NEAR(normalize_angle(a.samples[i].heading - a.curvature * (i + 1) * step), 0.0, 1e-12);
      const double chord = i == 0 ? norm(a.samples[0].position()) : dist(a.samples[i].position(), a.samples[i - 1].position());
      const double expect = a.curvature == 0.0 ? step : 2.0 * std::sin(std::abs(a.curvature) * step / 2.0) / std::abs(a.curvature);
      EXPECT_NEAR(chord, expect, 1e-12);
    }
  }
}

TEST(Arcs, EvenCountRejected) {
  EXPECT_THROW(generate_arcs(30), ValidationError);
  EXPECT_THROW(generate_arcs(0), ValidationError);
  EXPECT_EQ(generate_arcs(1).size(), 1u);
}

TEST(ArcCost, ZeroCostmapLeavesCarrotTerm) {
  const auto cm = uniform_costmap(40, 40, 0.0);
  const Pose robot{10.0, 10.0, 0.3};
  const Vec2 carrot{13.0, 14.0};
  for (const auto& a : generate_arcs()) {
    const auto placed = place_arc(a, robot);
    EXPECT_DOUBLE_EQ(arc_cost(placed, cm, carrot), 0.1 * dist(placed.samples.back().position(), carrot));
  }
}

TEST(ArcCost, UniformFieldClosedForm) {
  const Pose robot{10.0, 10.0, 0.0};
  for (double c : {0.0, 0.25, 0.5, 1.0}) {
    const auto cm = uniform_costmap(40, 40, c);
    for (const auto& a : generate_arcs()) {
      const auto placed = place_arc(a, robot);
      const Vec2 end = placed.samples.back().position();
      const double learned = arc_cost(placed, cm, end);
      EXPECT_NEAR(learned, c * (1.0 - std::pow(0.95, 30)) / 0.05, 1e-9);
    }
  }
}

TEST(ArcCost, OffGridSamplesCostOne) {
  const auto cm = uniform_costmap(4, 4, 0.0, 1.0);
  Arc a = make_arc(0.0, 6.0);
  const auto placed = place_arc(a, {-50.0, -50.0, 0.0});
  const Vec2 end = placed.samples.back().position();
  EXPECT_NEAR(arc_cost(placed, cm, end), (1.0 - std::pow(0.95, 30)) / 0.05, 1e-12);
}

TEST(ArcCost, StraightAheadCarrotPicksZeroCurvature) {
  const auto arcs = generate_arcs();
  for (double c : {0.0, 0.3, 1.0}) {
    const auto cm = uniform_costmap(60, 60, c);
    for (double heading : {0.0, 1.0, -2.5}) {
      const Pose robot{15.0, 15.0, heading};
      const Vec2 carrot = robot.position() + 6.0 * Vec2{std::cos(heading), std::sin(heading)};
      const int k = best_arc(arcs, robot, cm, carrot);
      EXPECT_EQ(arcs[k].curvature, 0.0);
    }
  }
}

TEST(ArcCost, MonotoneInCellCost) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto arcs = generate_arcs();
  for (int trial = 0; trial < 300; ++trial) {
    Costmap cm{Grid<double>(30, 30, 0.0), 0.5};
    for (auto& v : cm.cost.data()) v = u(rng);
    const Pose robot{7.5, 7.5, u(rng) * 6.0 - 3.0};
    const Vec2 carrot{u(rng) * 15.0, u(rng) * 15.0};
    const auto placed = place_arc(arcs[trial % arcs.size()], robot);
    const double before = arc_cost(placed, cm, carrot);
    const auto cell = cell_of(placed.samples[trial % 30].position(), 0.5);
    if (!cm.cost.in_bounds(cell)) continue;
    cm.cost[cell] = std::min(1.0, cm.cost[cell] + u(rng));
    EXPECT_GE(arc_cost(placed, cm, carrot), before);
  }
}

TEST(Subgoal, BetweenWaypointsPicksNext) {
  std::vector<Vec2> line;
  for (int i = 0; i <= 10; ++i) line.push_back({10.0 * i, 0.0});
  const Vec2 robot{35.0, 0.0};
  // waypoint 4 lies 5 m ahead, inside the horizon
  EXPECT_EQ(select_subgoal(robot, line, line.back()), (Vec2{40.0, 0.0}));
  const Vec2 robot2{31.0, 0.0};
  const Vec2 c = select_subgoal(robot2, line, line.back());
  EXPECT_NEAR(c.x, 37.0, 1e-12);
}

TEST(Subgoal, AtFinalGoal) {
  const std::vector<Vec2> wps{{5.0, 0.0}, {10.0, 0.0}};
  EXPECT_EQ(select_subgoal({10.0, 0.0}, wps, wps.back()), (Vec2{10.0, 0.0}));
}

TEST(Subgoal, ProjectsFarSubgoalToHorizon) {
  const std::vector<Vec2> wps{{15.0, 20.0}, {40.0, 40.0}};
  const Vec2 c = select_subgoal({0.0, 0.0}, wps, wps.back());
  EXPECT_NEAR(norm(c), 6.0, 1e-12);
  EXPECT_NEAR(c.x / c.y, 15.0 / 20.0, 1e-12);
}

TEST(Subgoal, EmptyListRejected) { EXPECT_THROW(select_subgoal({0, 0}, {}, {1, 1}), ValidationError); }

namespace {

// Straightforward reading of the rule: keep eligible waypoints, sort by
// distance to the goal, take the largest, clip to the circle.
Vec2 brute_subgoal(Vec2 robot, std::vector<Vec2> wps, Vec2 goal, double radius) {
  std::vector<std::pair<double, int>> eligible;
  const double rd = std::sqrt((robot.x - goal.x) * (robot.x - goal.x) + (robot.y - goal.y) * (robot.y - goal.y));
  for (int i = 0; i < static_cast<int>(wps.size()); ++i) {
    const double d = std::sqrt((wps[i].x - goal.x) * (wps[i].x - goal.x) + (wps[i].y - goal.y) * (wps[i].y - goal.y));
    if (d < rd) eligible.push_back({-d, i});
  }
  std::stable_sort(eligible.begin(), eligible.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const Vec2 pick = eligible.empty() ? goal : wps[eligible.front().second];
  const double dx = pick.x - robot.x;
  const double dy = pick.y - robot.y;
  const double r = std::sqrt(dx * dx + dy * dy);
  if (r <= radius) return pick;
  return {robot.x + dx * radius / r, robot.y + dy * radius / r};
}

}  // namespace

TEST(Subgoal, MatchesBruteForceOnFuzzedConfigurations) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  std::uniform_int_distribution<int> count(1, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Vec2> wps(count(rng));
    for (auto& w : wps) w = {u(rng), u(rng)};
    const Vec2 robot{u(rng), u(rng)};
    const Vec2 got = select_subgoal(robot, wps, wps.back());
    const Vec2 want = brute_subgoal(robot, wps, wps.back(), 6.0);
    EXPECT_NEAR(got.x, want.x, 1e-9);
    EXPECT_NEAR(got.y, want.y, 1e-9);
    EXPECT_LE(dist(got, robot), 6.0 + 1e-9);
  }
}

namespace {

// Longest rest-to-rest distance coverable in time T; the minimal duration is
// found by bisection on it.
double reachable(double T, double v, double a) {
  if (T <= 2.0 * v / a) return a * T * T / 4.0;
  return v * (T - v / a);
}

double bisect_duration(double len, double v, double a) {
  double lo = 0.0;
  double hi = 1.0;
  while (reachable(hi, v, a) < len) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (reachable(mid, v, a) >= len ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

TEST(TimeOptimal, HandExamples) {
  const auto p = time_optimal_velocity(10.0, 2.0, 1.0);
  EXPECT_FALSE(p.triangular);
  EXPECT_NEAR(p.duration, 7.0, 1e-12);
  EXPECT_EQ(time_optimal_velocity(0.0, 2.0, 1.0).duration, 0.0);
  const auto t = time_optimal_velocity(1.0, 2.0, 1.0);
  EXPECT_TRUE(t.triangular);
  EXPECT_NEAR(t.duration, 2.0, 1e-12);
  EXPECT_NEAR(t.peak_velocity, 1.0, 1e-12);
}

TEST(TimeOptimal, MatchesBisectionOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> len(0.01, 100.0);
  std::uniform_real_distribution<double> lim(0.1, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double d = len(rng);
    const double v = lim(rng);
    const double a = lim(rng);
    const auto p = time_optimal_velocity(d, v, a);
    EXPECT_NEAR(p.duration, bisect_duration(d, v, a), 1e-9 * std::max(1.0, p.duration));
    EXPECT_LE(p.peak_velocity, v + 1e-12);
    EXPECT_NEAR(p.position(p.duration), d, 1e-12);
    EXPECT_NEAR(p.position(p.t_accel + p.t_cruise), d - 0.5 * a * p.t_accel * p.t_accel, 1e-9 * d);
  }
}

TEST(TimeOptimal, NonIncreasingInLimits) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double d = 20.0 * u(rng);
    const double v = u(rng);
    const double a = u(rng);
    const double base = time_optimal_velocity(d, v, a).duration;
    EXPECT_LE(time_optimal_velocity(d, v + u(rng), a).duration, base + 1e-12);
    EXPECT_LE(time_optimal_velocity(d, v, a + u(rng)).duration, base + 1e-12);
  }
}

TEST(TimeOptimal, RejectsNegative) { EXPECT_THROW(time_optimal_velocity(-1.0, 1.0, 1.0), ValidationError); }

TEST(Metrics, ReferenceFollowedExactly) {
  // 10 subgoals 10 m apart at 2 m/s
  MissionLog log;
  log.num_subgoals = 10;
  for (int i = 0; i < 10; ++i) log.events.push_back({5.0 * (i + 1), EventKind::subgoal, i, ""});
  log.distance = 100.0;
  const auto m = compute_metrics(log);
  EXPECT_EQ(m.pct_subgoals, 100.0);
  EXPECT_EQ(m.nir, 0.0);
  EXPECT_EQ(m.total_interventions, 0);
  EXPECT_DOUBLE_EQ(m.ast, 50.0 / 10.0);
}

TEST(Metrics, NirIdentity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(1.0, 5000.0);
  for (int trial = 0; trial < 1000; ++trial) {
    MissionLog log;
    log.num_subgoals = 4;
    const int n = trial % 7;
    for (int i = 0; i < n; ++i) log.events.push_back({double(i), EventKind::intervention, 0, "lethal"});
    log.distance = u(rng);
    const auto m = compute_metrics(log);
    EXPECT_NEAR(m.nir * (m.distance / 100.0), m.total_interventions, 1e-12 * std::max(1, n));
    EXPECT_GE(m.pct_subgoals, 0.0);
    EXPECT_LE(m.pct_subgoals, 100.0);
  }
}

TEST(Metrics, RejectsDecreasingTimestamps) {
  MissionLog log;
  log.num_subgoals = 2;
  log.events = {{2.0, EventKind::subgoal, 0, ""}, {1.0, EventKind::subgoal, 1, ""}};
  EXPECT_THROW(compute_metrics(log), ValidationError);
}

TEST(Metrics, RejectsRepeatedOrUnknownSubgoals) {
  MissionLog log;
  log.num_subgoals = 2;
  log.events = {{1.0, EventKind::subgoal, 0, ""}, {2.0, EventKind::subgoal, 0, ""}};
  EXPECT_THROW(compute_metrics(log), ValidationError);
  log.events = {{1.0, EventKind::subgoal, 2, ""}};
  EXPECT_THROW(compute_metrics(log), ValidationError);
}

TEST(Metrics, AggregatePoolsDistance) {
  MissionLog a;
  a.num_subgoals = 2;
  a.distance = 50.0;
  a.events = {{1.0, EventKind::intervention, 0, "lethal"}, {3.0, EventKind::subgoal, 0, ""}};
  MissionLog b;
  b.num_subgoals = 2;
  b.distance = 150.0;
  b.events = {{1.0, EventKind::intervention, 0, "lethal"}, {2.0, EventKind::intervention, 0, "lethal"}};
  const auto m = aggregate_metrics({a, b});
  EXPECT_EQ(m.total_interventions, 3);
  EXPECT_DOUBLE_EQ(m.nir, 3.0 / 2.0);
  EXPECT_DOUBLE_EQ(m.pct_subgoals, 25.0);
}

TEST(Metrics, TableColumns) {
  const auto t = metrics_table({{"oracle", MetricsReport{}}});
  EXPECT_EQ(t.substr(0, t.find('\n')), "Method\tAST\t%S\tNIR\tDist\tTotalInt");
}

TEST(Mission, WaypointsAlongExpert) {
  auto wc = open_world(48);
  const auto scene = gen_scene(wc, 4);
  const auto m = make_mission(scene, 5.0);
  EXPECT_EQ(m.waypoints.back(), cell_center(scene.goal, 0.5));
  EXPECT_EQ(m.reference.front(), cell_center(scene.start, 0.5));
  const double len = polyline_length(m.reference);
  EXPECT_EQ(static_cast<int>(m.waypoints.size()), static_cast<int>(std::ceil(len / 5.0 - 1e-9)));
  EXPECT_EQ(mission_from_json(mission_to_json(m)).waypoints, m.waypoints);
}

TEST(Simulate, OracleRewardCleanOnObstacleFreeWorlds) {
  SimConfig cfg;
  for (int seed = 0; seed < 40; ++seed) {
    auto wc = clean_world(40);
    const auto scene = gen_scene(wc, static_cast<std::uint64_t>(seed));
    const auto mission = make_mission(scene, 5.0);
    const auto log = simulate_mission(scene, oracle_reward_field(scene), mission, cfg);
    const auto m = compute_metrics(log);
    EXPECT_EQ(m.total_interventions, 0) << seed;
    EXPECT_EQ(m.nir, 0.0) << seed;
    EXPECT_EQ(m.pct_subgoals, 100.0) << seed;
    EXPECT_FALSE(m.timed_out) << seed;
    EXPECT_GT(m.distance, 0.0);
  }
}

TEST(Simulate, ForcedDetourThroughForbiddenCell) {
  // a wall across the straight line with a gap; the reward rewards the wall
  auto s = gen_scene(open_world(24), 0);
  const int water = s.oracle.forbidden_class();
  s.start = {12, 2};
  s.goal = {12, 21};
  for (int r = 0; r < 24; ++r) {
    if (r < 2) continue;
    s.terrain(r, 12) = water;
  }
  s.features = FeatureGrid(24, 24, 0.5, s.features.channels());
  for (int r = 0; r < 24; ++r) {
    for (int c = 0; c < 24; ++c) s.features.at(s.terrain(r, c), r, c) = 1.0f;
  }
  s.expert = gen_expert(s);
  RewardField bad(24, 24, 0.0);
  for (int r = 0; r < 24; ++r) bad(r, 12) = 1.0;
  const auto log = simulate_mission(s, bad, make_mission(s, 5.0), SimConfig{});
  const auto m = compute_metrics(log);
  EXPECT_GE(m.total_interventions, 1);
  EXPECT_NEAR(m.nir, m.total_interventions / (m.distance / 100.0), 1e-12 * m.nir);
  bool lethal = false;
  for (const auto& e : log.events) lethal = lethal || e.reason == "lethal";
  EXPECT_TRUE(lethal);
}

TEST(Simulate, LethalClassesCountAsInterventions) {
  auto s = gen_scene(open_world(24), 0);
  const int rocks = s.oracle.class_index("rocks");
  s.start = {12, 2};
  s.goal = {12, 21};
  for (int r = 0; r < 24; ++r) s.terrain(r, 12) = rocks;
  s.expert = gen_expert(s);
  SimConfig cfg;
  const auto clean = compute_metrics(simulate_mission(s, RewardField(24, 24, 0.0), make_mission(s, 5.0), cfg));
  EXPECT_EQ(clean.total_interventions, 0);
  cfg.lethal_classes = {"rocks"};
  const auto hit = compute_metrics(simulate_mission(s, RewardField(24, 24, 0.0), make_mission(s, 5.0), cfg));
  EXPECT_GE(hit.total_interventions, 1);
  EXPECT_THROW(([&] {
                 SimConfig bad;
                 bad.lethal_classes = {"lava"};
                 simulate_mission(s, RewardField(24, 24, 0.0), make_mission(s, 5.0), bad);
               }()),
               ValidationError);
}

TEST(Simulate, TimeoutIsFlagged) {
  const auto scene = gen_scene(open_world(40), 1);
  SimConfig cfg;
  cfg.max_time = 0.5;
  const auto log = simulate_mission(scene, oracle_reward_field(scene), make_mission(scene, 5.0), cfg);
  EXPECT_TRUE(log.timed_out);
  EXPECT_LT(compute_metrics(log).pct_subgoals, 100.0);
}

TEST(Simulate, DeterministicTrace) {
  const auto scene = gen_scene(open_world(40), 2);
  SimConfig cfg;
  cfg.record_trace = true;
  const auto a = simulate_mission(scene, oracle_reward_field(scene), make_mission(scene, 5.0), cfg);
  const auto b = simulate_mission(scene, oracle_reward_field(scene), make_mission(scene, 5.0), cfg);
  EXPECT_EQ(trace_tsv(a), trace_tsv(b));
  EXPECT_EQ(a.events, b.events);
  EXPECT_FALSE(a.trace.empty());
}
