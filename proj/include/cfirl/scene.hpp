#pragma once

// Scene container shared by generation, training, candidate generation and
// annotation, plus the hidden oracle cost used to make experts and to grade
// candidates.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfirl/errors.hpp"
#include "cfirl/features.hpp"
#include "cfirl/grid.hpp"
#include "cfirl/grid_mdp.hpp"

namespace cfirl {

inline constexpr double kForbiddenCost = std::numeric_limits<double>::infinity();

struct TerrainClass {
  std::string name;
  double cost = 1.0;
  double fraction = 0.0;
  bool forbidden = false;

  bool operator==(const TerrainClass&) const = default;
};

/// Hidden cost H: per-class unit cost, a per-meter elevation-step penalty and
/// an additive cost inside dynamic-entity blobs.
struct OracleCost {
  std::vector<TerrainClass> classes;
  double step_penalty = 0.0;
  double dynamic_cost = 0.0;

  int forbidden_class() const {
    for (int i = 0; i < static_cast<int>(classes.size()); ++i) {
      if (classes[i].forbidden) return i;
    }
    return -1;
  }

  int class_index(const std::string& name) const {
    for (int i = 0; i < static_cast<int>(classes.size()); ++i) {
      if (classes[i].name == name) return i;
    }
    throw ValidationError("unknown terrain class '" + name + "'");
  }

  void validate() const {
    require(classes.size() >= 2, "at least two terrain classes are required");
    int forbidden = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      const auto& c = classes[i];
      require(!c.name.empty(), "terrain class names must be non-empty");
      for (std::size_t j = 0; j < i; ++j) require(classes[j].name != c.name, "duplicate terrain class '" + c.name + "'");
      forbidden += c.forbidden;
      if (!c.forbidden) {
        require(std::isfinite(c.cost) && c.cost > 0.0, "terrain class '" + c.name + "' needs a positive finite cost");
      }
      require(c.fraction >= 0.0 && c.fraction <= 1.0, "terrain class '" + c.name + "' fraction must be in [0,1]");
    }
    require(forbidden == 1, "exactly one terrain class must be marked forbidden");
    require(std::isfinite(step_penalty) && step_penalty >= 0.0, "step penalty must be nonnegative");
    require(std::isfinite(dynamic_cost) && dynamic_cost >= 0.0, "dynamic cost must be nonnegative");
  }

  bool operator==(const OracleCost&) const = default;
};

enum class Side { left, right };

inline std::string to_string(Side side) { return side == Side::left ? "left" : "right"; }

inline Side parse_side(const std::string& name) {
  if (name == "left") return Side::left;
  if (name == "right") return Side::right;
  throw ValidationError("unknown candidate side '" + name + "'");
}

enum class FitMode { polynomial, grid_search };

inline std::string to_string(FitMode mode) { return mode == FitMode::polynomial ? "polynomial" : "grid_search"; }

inline FitMode parse_fit_mode(const std::string& name) {
  if (name == "polynomial") return FitMode::polynomial;
  if (name == "grid_search") return FitMode::grid_search;
  throw ValidationError("unknown fit mode '" + name + "'");
}

struct CfGenConfig {
  int num_candidates = 10;
  int num_control_points = 3;
  double mu = 1.0;
  double sigma = 0.5;
  FitMode fit = FitMode::polynomial;
  std::uint64_t seed = 0;
  int max_retries = 20;

  void validate() const {
    require(num_candidates >= 2 && num_candidates % 2 == 0, "num_candidates must be even and at least 2");
    require(num_control_points >= 1, "num_control_points must be at least 1");
    require(std::isfinite(mu), "mu must be finite");
    require(std::isfinite(sigma) && sigma >= 0.0, "sigma must be nonnegative");
    require(max_retries >= 0, "max_retries must be nonnegative");
  }

  bool operator==(const CfGenConfig&) const = default;
};

struct Candidate {
  int id = 0;
  Trajectory trajectory;
  Side side = Side::left;

  bool operator==(const Candidate&) const = default;
};

struct CandidateSet {
  std::vector<Candidate> candidates;
  CfGenConfig config;
  std::uint64_t seed = 0;

  const Candidate& find(int id) const {
    for (const auto& c : candidates) {
      if (c.id == id) return c;
    }
    throw NotFoundError("no candidate with id " + std::to_string(id));
  }

  bool operator==(const CandidateSet&) const = default;
};

struct Scene {
  std::string id;
  FeatureGrid features;
  Grid<int> terrain;
  OracleCost oracle;
  CellState start;
  CellState goal;
  Trajectory expert;
  std::optional<CandidateSet> candidates;
  std::map<int, bool> labels;  // candidate id -> counterfactual?

  int height() const { return features.height(); }
  int width() const { return features.width(); }

  /// Trajectories of candidates labeled counterfactual.
  std::vector<Trajectory> counterfactuals() const {
    std::vector<Trajectory> out;
    if (!candidates) return out;
    for (const auto& c : candidates->candidates) {
      auto it = labels.find(c.id);
      if (it != labels.end() && it->second) {
        Trajectory t = c.trajectory;
        t.kind = TrajectoryKind::counterfactual;
        out.push_back(std::move(t));
      }
    }
    return out;
  }

  bool operator==(const Scene&) const = default;
};

/// Oracle cost lookups for one scene.
class OracleView {
 public:
  explicit OracleView(const Scene& scene)
      : cell_cost_(scene.height(), scene.width(), 0.0), elevation_(scene.height(), scene.width(), 0.0),
        step_penalty_(scene.oracle.step_penalty) {
    const auto& f = scene.features;
    int elev = -1;
    int dyn = -1;
    for (int c = 0; c < f.num_channels(); ++c) {
      if (f.channels()[c].role == ChannelRole::elevation) elev = c;
      if (f.channels()[c].role == ChannelRole::dynamic && dyn < 0) dyn = c;
    }
    for (int r = 0; r < scene.height(); ++r) {
      for (int c = 0; c < scene.width(); ++c) {
        const int cls = scene.terrain(r, c);
        require(cls >= 0 && cls < static_cast<int>(scene.oracle.classes.size()),
                "terrain index out of range at " + to_string({r, c}));
        const auto& tc = scene.oracle.classes[cls];
        double cost = tc.forbidden ? kForbiddenCost : tc.cost;
        if (dyn >= 0 && !tc.forbidden) cost += scene.oracle.dynamic_cost * static_cast<double>(f.at(dyn, r, c));
        cell_cost_(r, c) = cost;
        if (elev >= 0) elevation_(r, c) = static_cast<double>(f.at(elev, r, c));
      }
    }
  }

  const Grid<double>& cell_cost() const { return cell_cost_; }
  const Grid<double>& elevation() const { return elevation_; }
  bool forbidden(CellState s) const { return std::isinf(cell_cost_[s]); }

  /// Cost of moving from `from` into the adjacent cell `to`.
  double move_cost(CellState from, CellState to) const {
    const double c = cell_cost_[to];
    if (std::isinf(c)) return kForbiddenCost;
    const bool diagonal = from.row != to.row && from.col != to.col;
    const double len = diagonal ? std::sqrt(2.0) : 1.0;
    return c * len + step_penalty_ * std::abs(elevation_[to] - elevation_[from]);
  }

  double path_cost(const Trajectory& traj) const {
    double total = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
      if (forbidden(traj.states[i])) return kForbiddenCost;
      if (i > 0) total += move_cost(traj.states[i - 1], traj.states[i]);
    }
    return total;
  }

 private:
  Grid<double> cell_cost_;
  Grid<double> elevation_;
  double step_penalty_;
};

/// Per-cell oracle cost; forbidden cells carry +infinity.
inline Grid<double> oracle_cost_field(const Scene& scene) { return OracleView(scene).cell_cost(); }

inline bool trajectory_enters_forbidden(const Scene& scene, const Trajectory& traj) {
  for (auto s : traj.states) {
    if (scene.oracle.classes[scene.terrain[s]].forbidden) return true;
  }
  return false;
}

inline void validate_scene(const Scene& scene) {
  const std::string where = "scene '" + scene.id + "': ";
  try {
    scene.features.validate();
    scene.oracle.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
  require(scene.terrain.height() == scene.height() && scene.terrain.width() == scene.width(),
          where + "terrain map dimensions do not match the feature grid");
  for (int v : scene.terrain.data()) {
    require(v >= 0 && v < static_cast<int>(scene.oracle.classes.size()), where + "terrain index out of range");
  }
  const GridMDP mdp(scene.height(), scene.width(), 0.5);
  require(mdp.in_bounds(scene.start) && mdp.in_bounds(scene.goal), where + "start or goal out of bounds");
  try {
    validate_trajectory(scene.expert, mdp);
  } catch (const ValidationError& e) {
    throw ValidationError(where + "expert " + e.what());
  }
  require(scene.expert.front() == scene.start, where + "expert does not begin at the start cell");
  require(scene.expert.back() == scene.goal, where + "expert does not end at the goal cell");
  require(!trajectory_enters_forbidden(scene, scene.expert), where + "expert enters a forbidden cell");
  if (scene.candidates) {
    for (const auto& c : scene.candidates->candidates) {
      const std::string cw = where + "candidate " + std::to_string(c.id) + ": ";
      try {
        validate_trajectory(c.trajectory, mdp);
      } catch (const ValidationError& e) {
        throw ValidationError(cw + e.what());
      }
      require(c.trajectory.front() == scene.start && c.trajectory.back() == scene.goal,
              cw + "does not share the expert's endpoints");
    }
    for (std::size_t i = 0; i < scene.candidates->candidates.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        require(scene.candidates->candidates[i].id != scene.candidates->candidates[j].id,
                where + "duplicate candidate id " + std::to_string(scene.candidates->candidates[i].id));
      }
    }
  }
  for (const auto& [id, flag] : scene.labels) {
    (void)flag;
    bool found = false;
    if (scene.candidates) {
      for (const auto& c : scene.candidates->candidates) found = found || c.id == id;
    }
    require(found, where + "label references unknown candidate " + std::to_string(id));
  }
}

}  // namespace cfirl
