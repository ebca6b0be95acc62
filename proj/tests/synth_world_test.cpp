#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cfirl/scene_io.hpp"
#include "cfirl/synth_world.hpp"
#include "scene_builders.hpp"

namespace cfirl {
namespace {

using testing::empty_scene;
using testing::scene_from_rows;

double octile(CellState a, CellState b) {
  const int dr = std::abs(a.row - b.row);
  const int dc = std::abs(a.col - b.col);
  return std::min(dr, dc) * std::sqrt(2.0) + std::abs(dr - dc);
}

// Bellman-Ford style relaxation to a fixed point; shares nothing with Dijkstra.
double relaxation_optimal_cost(const Scene& s) {
  const OracleView view(s);
  const int h = s.height(), w = s.width();
  std::vector<double> d(h * w, std::numeric_limits<double>::infinity());
  d[s.goal.row * w + s.goal.col] = 0.0;
  for (bool changed = true; changed;) {
    changed = false;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (view.forbidden({r, c})) continue;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int nr = r + dr, nc = c + dc;
            if ((dr == 0 && dc == 0) || nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
            const double cand = view.move_cost({r, c}, {nr, nc}) + d[nr * w + nc];
            if (cand < d[r * w + c] - 1e-12) {
              d[r * w + c] = cand;
              changed = true;
            }
          }
      }
  }
  return d[s.start.row * w + s.start.col];
}

WorldConfig small_world() {
  WorldConfig cfg;
  cfg.height = 20;
  cfg.width = 20;
  cfg.elevation_amplitude = 0.2;
  cfg.curb_probability = 0.5;
  cfg.dynamic_count = 2;
  cfg.seed = 5;
  return cfg;
}

TEST(GenScene, DeterministicForSeed) {
  const auto cfg = small_world();
  EXPECT_EQ(gen_scene(cfg, 3), gen_scene(cfg, 3));
  EXPECT_NE(gen_scene(cfg, 3).terrain, gen_scene(cfg, 4).terrain);
}

TEST(GenScene, ChannelCount) {
  const auto cfg = small_world();
  const auto s = gen_scene(cfg, 1);
  EXPECT_EQ(s.features.num_channels(), static_cast<int>(cfg.terrain_classes.size()) + 2);
  EXPECT_EQ(s.features.count(ChannelRole::dynamic), 1);
  EXPECT_EQ(s.features.count(ChannelRole::elevation), 1);
}

TEST(GenScene, OneHotTerrainChannels) {
  const auto s = gen_scene(small_world(), 2);
  for (int r = 0; r < s.height(); ++r)
    for (int c = 0; c < s.width(); ++c)
      for (int k = 0; k < static_cast<int>(s.oracle.classes.size()); ++k)
        EXPECT_EQ(s.features.at(k, r, c), k == s.terrain(r, c) ? 1.0f : 0.0f);
}

TEST(GenScene, TerrainFractionsMatchConfiguration) {
  WorldConfig cfg;
  cfg.height = 64;
  cfg.width = 64;
  cfg.obstacle_density = 0.1;
  cfg.seed = 11;
  const auto oracle = cfg.oracle();
  double nonforbidden = 0.0;
  for (const auto& c : cfg.terrain_classes) nonforbidden += c.forbidden ? 0.0 : c.fraction;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = gen_scene(cfg, seed);
    std::vector<int> counts(cfg.terrain_classes.size(), 0);
    for (int v : s.terrain.data()) ++counts[v];
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const auto& tc = cfg.terrain_classes[k];
      const double want = tc.forbidden ? cfg.obstacle_density : tc.fraction / nonforbidden * (1 - cfg.obstacle_density);
      EXPECT_NEAR(counts[k] / 4096.0, want, 0.05) << tc.name << " seed " << seed;
    }
  }
  (void)oracle;
}

TEST(GenScene, ExpertInvariants) {
  const auto cfg = small_world();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = gen_scene(cfg, seed);
    EXPECT_NO_THROW(validate_scene(s));
    EXPECT_EQ(s.expert.front(), s.start);
    EXPECT_EQ(s.expert.back(), s.goal);
    EXPECT_FALSE(trajectory_enters_forbidden(s, s.expert));
    EXPECT_TRUE(std::isfinite(OracleView(s).path_cost(s.expert)));
    EXPECT_GE(std::hypot(s.start.row - s.goal.row, s.start.col - s.goal.col), cfg.min_goal_distance);
  }
}

TEST(GenScene, ExpertCostMatchesRelaxationOracle) {
  auto cfg = small_world();
  cfg.height = 14;
  cfg.width = 14;
  cfg.min_goal_distance = 5;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto s = gen_scene(cfg, seed);
    EXPECT_NEAR(OracleView(s).path_cost(s.expert), relaxation_optimal_cost(s), 1e-9) << "seed " << seed;
  }
}

TEST(GenScene, OpenFlatWorldExpertLengthIsChebyshev) {
  WorldConfig cfg;
  cfg.height = 24;
  cfg.width = 24;
  cfg.obstacle_density = 0.0;
  cfg.terrain_classes = {{"sidewalk", 1.0, 1.0, false}, {"water", 0.0, 0.0, true}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = gen_scene(cfg, seed);
    const int cheb = std::max(std::abs(s.start.row - s.goal.row), std::abs(s.start.col - s.goal.col));
    EXPECT_LE(std::abs(static_cast<int>(s.expert.size()) - 1 - cheb), 1);
    EXPECT_NEAR(OracleView(s).path_cost(s.expert), octile(s.start, s.goal), 1e-9);
  }
}

TEST(GenScene, InfeasibleConfigurationIsRejected) {
  auto cfg = small_world();
  cfg.obstacle_density = 1.0;
  cfg.max_retries = 10;
  EXPECT_THROW(gen_scene(cfg, 0), ValidationError);
}

TEST(GenScene, InvalidConfigurationsAreRejected) {
  auto one_class = small_world();
  one_class.terrain_classes = {{"water", 0, 0, true}};
  EXPECT_THROW(gen_scene(one_class, 0), ValidationError);
  auto two_forbidden = small_world();
  two_forbidden.terrain_classes[0].forbidden = true;
  EXPECT_THROW(gen_scene(two_forbidden, 0), ValidationError);
  auto density = small_world();
  density.obstacle_density = 1.5;
  EXPECT_THROW(gen_scene(density, 0), ValidationError);
}

TEST(GenScene, TwoCorridorLayout) {
  WorldConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.layout = Layout::two_corridor;
  cfg.obstacle_density = 0.0;
  cfg.terrain_classes[cfg.oracle().class_index("rocks")].cost = 12.0;
  cfg.seed = 2;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = gen_scene(cfg, seed);
    const int rocks = s.oracle.class_index("rocks");
    const int sidewalk = s.oracle.class_index("sidewalk");
    int on_rocks = 0, on_sidewalk = 0;
    for (auto c : s.expert.states) {
      on_rocks += s.terrain[c] == rocks;
      on_sidewalk += s.terrain[c] == sidewalk;
    }
    EXPECT_EQ(on_rocks, 0) << "seed " << seed;
    EXPECT_GT(on_sidewalk, 0) << "seed " << seed;
  }
}

TEST(OracleCost, FlatSidewalkIsUniformMinimal) {
  const auto s = empty_scene(5, 6, {0, 0}, {4, 5});
  const auto field = oracle_cost_field(s);
  for (double c : field.data()) EXPECT_EQ(c, 1.0);
}

TEST(OracleCost, ElevationStepAddsPenalty) {
  auto s = empty_scene(3, 3, {0, 0}, {2, 2});
  const int elev = s.features.channel_index("elevation");
  s.features.at(elev, 1, 1) = 0.2f;
  const OracleView view(s);
  EXPECT_NEAR(view.move_cost({1, 0}, {1, 1}) - 1.0, 1.0, 1e-6);
  EXPECT_NEAR(view.move_cost({1, 1}, {1, 2}) - 1.0, 1.0, 1e-6);
  EXPECT_NEAR(view.move_cost({0, 0}, {0, 1}), 1.0, 1e-12);
}

TEST(OracleCost, ForbiddenIsInfinite) {
  const auto s = scene_from_rows({"...", ".#.", "..."}, {0, 0}, {2, 2});
  const auto field = oracle_cost_field(s);
  EXPECT_TRUE(std::isinf(field(1, 1)));
  EXPECT_TRUE(std::isinf(OracleView(s).move_cost({0, 0}, {1, 1})));
}

TEST(OracleCost, DynamicBlobAddsCost) {
  auto s = empty_scene(3, 3, {0, 0}, {2, 2});
  s.features.at(s.features.channel_index("dynamic"), 0, 2) = 1.0f;
  EXPECT_EQ(oracle_cost_field(s)(0, 2), 1.0 + s.oracle.dynamic_cost);
}

TEST(GenExpert, GeodesicOnUniformWorld) {
  for (auto [start, goal] : {std::pair{CellState{0, 0}, CellState{0, 9}}, std::pair{CellState{1, 2}, CellState{8, 5}},
                             std::pair{CellState{9, 9}, CellState{0, 3}}}) {
    const auto s = empty_scene(10, 10, start, goal);
    EXPECT_NEAR(OracleView(s).path_cost(s.expert), octile(start, goal), 1e-9);
    const int cheb = std::max(std::abs(start.row - goal.row), std::abs(start.col - goal.col));
    EXPECT_EQ(static_cast<int>(s.expert.size()) - 1, cheb);
  }
}

TEST(GenExpert, PassesThroughTheOnlyGap) {
  const auto s = scene_from_rows({"....#....", "....#....", ".........", "....#....", "....#...."}, {0, 0}, {0, 8});
  bool through_gap = false;
  for (auto c : s.expert.states) through_gap = through_gap || (c == CellState{2, 4});
  EXPECT_TRUE(through_gap);
  EXPECT_FALSE(trajectory_enters_forbidden(s, s.expert));
}

TEST(GenExpert, InfeasibleIsRejected) {
  const auto rows = std::vector<std::string>{"..#..", "..#..", "..#.."};
  auto s = scene_from_rows(rows, {0, 0}, {0, 1});
  s.goal = {0, 4};
  EXPECT_THROW(gen_expert(s), ValidationError);
}

TEST(GenExpert, TieBreakPrefersCardinalMoves) {
  const auto s = empty_scene(5, 5, {0, 0}, {2, 4});
  // two diagonal moves and two east moves in any order are optimal; east first
  ASSERT_EQ(s.expert.size(), 5u);
  EXPECT_EQ(s.expert.states[1], (CellState{0, 1}));
  EXPECT_EQ(s.expert.states[2], (CellState{0, 2}));
}

TEST(SceneIo, RoundTripIsBitExact) {
  auto cfg = small_world();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto s = gen_scene(cfg, seed);
    if (seed % 2 == 0) {
      CandidateSet set;
      set.seed = 9;
      auto t = s.expert;
      t.kind = TrajectoryKind::candidate;
      set.candidates.push_back({0, t, Side::left});
      set.candidates.push_back({1, t, Side::right});
      s.candidates = set;
      s.labels = {{0, true}, {1, false}};
    }
    const std::string text = scene_to_json(s).dump();
    const auto back = scene_from_json(json::parse(text));
    EXPECT_EQ(back, s);
    EXPECT_EQ(scene_to_json(back).dump(), text);
  }
}

TEST(SceneIo, RejectsMalformedDocuments) {
  const auto s = gen_scene(small_world(), 0);
  auto j = scene_to_json(s);
  auto bad_format = j;
  bad_format["format"] = "CFIRL-SC0";
  EXPECT_THROW(scene_from_json(bad_format), ValidationError);
  auto bad_expert = j;
  bad_expert["expert"][1] = json::array({99, 99});
  EXPECT_THROW(scene_from_json(bad_expert), ValidationError);
  auto bad_label = j;
  bad_label["labels"] = {{"3", true}};
  EXPECT_THROW(scene_from_json(bad_label), ValidationError);
  auto missing = j;
  missing.erase("terrain");
  EXPECT_THROW(scene_from_json(missing), ValidationError);
}

TEST(SceneIo, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "cfirl_scene_io_test";
  std::filesystem::remove_all(dir);
  const auto a = gen_scene(small_world(), 1);
  const auto b = gen_scene(small_world(), 2);
  save_scene(dir / "b.json", b);
  save_scene(dir / "a.json", a);
  const auto loaded = load_scene_dir(dir);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0], a);
  EXPECT_EQ(loaded[1], b);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace cfirl
