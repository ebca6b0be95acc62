#pragma once

// Deterministic 8-connected grid MDP with an absorbing goal, discounted
// state-action visitation distributions and soft value iteration.
//
// Conventions:
//   - Out-of-bounds moves are invalid (masked), never self-loops.
//   - The goal is absorbing: a trajectory or policy that reaches it puts all
//     of its remaining discounted mass on the (goal, stay) slot, which carries
//     zero reward.
//   - Rewards are per cell and are collected in the cell where an action is
//     taken.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cfirl/errors.hpp"
#include "cfirl/grid.hpp"

namespace cfirl {

inline constexpr int kNumActions = 8;
inline constexpr int kStaySlot = 8;
inline constexpr int kNumSlots = 9;

enum class Action : int { N = 0, NE, E, SE, S, SW, W, NW };

struct Offset {
  int drow;
  int dcol;
};

// Rows grow southwards.
inline constexpr std::array<Offset, kNumActions> kActionOffsets{{
    {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

inline constexpr std::array<const char*, kNumSlots> kSlotNames{
    "N", "NE", "E", "SE", "S", "SW", "W", "NW", "stay"};

constexpr bool is_cardinal(int action) { return action % 2 == 0; }

inline double move_length(int action) {
  return is_cardinal(action) ? 1.0 : std::sqrt(2.0);
}

inline std::optional<int> action_between(CellState from, CellState to) {
  for (int a = 0; a < kNumActions; ++a) {
    if (from.row + kActionOffsets[a].drow == to.row && from.col + kActionOffsets[a].dcol == to.col) return a;
  }
  return std::nullopt;
}

class GridMDP {
 public:
  GridMDP(int height, int width, double discount)
      : height_(height), width_(width), discount_(discount) {
    require(height >= 1 && width >= 1, "grid MDP needs at least one cell");
    require(discount > 0.0 && discount < 1.0, "discount must lie in (0,1)");
    neighbors_.assign(num_cells() * kNumActions, -1);
    for (int r = 0; r < height_; ++r) {
      for (int c = 0; c < width_; ++c) {
        for (int a = 0; a < kNumActions; ++a) {
          const int nr = r + kActionOffsets[a].drow;
          const int nc = c + kActionOffsets[a].dcol;
          if (nr >= 0 && nr < height_ && nc >= 0 && nc < width_) {
            neighbors_[(r * width_ + c) * kNumActions + a] = nr * width_ + nc;
          }
        }
      }
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  double discount() const { return discount_; }
  std::size_t num_cells() const { return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_); }

  bool in_bounds(CellState s) const { return s.row >= 0 && s.row < height_ && s.col >= 0 && s.col < width_; }
  int index(CellState s) const { return s.row * width_ + s.col; }
  CellState cell(int index) const { return {index / width_, index % width_}; }

  /// Successor cell index, or -1 when the move leaves the grid.
  int neighbor(int cell_index, int action) const { return neighbors_[cell_index * kNumActions + action]; }

  std::optional<CellState> step(CellState s, int action) const {
    const CellState next{s.row + kActionOffsets[action].drow, s.col + kActionOffsets[action].dcol};
    if (!in_bounds(next)) return std::nullopt;
    return next;
  }

  void require_cell(CellState s, const std::string& what) const {
    if (!in_bounds(s)) throw ValidationError(what + " " + to_string(s) + " is outside the grid");
  }

 private:
  int height_;
  int width_;
  double discount_;
  std::vector<int> neighbors_;
};

enum class TrajectoryKind { expert, counterfactual, candidate, rollout };

inline std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::expert: return "expert";
    case TrajectoryKind::counterfactual: return "counterfactual";
    case TrajectoryKind::candidate: return "candidate";
    case TrajectoryKind::rollout: return "rollout";
  }
  return "expert";
}

inline TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "expert") return TrajectoryKind::expert;
  if (name == "counterfactual") return TrajectoryKind::counterfactual;
  if (name == "candidate") return TrajectoryKind::candidate;
  if (name == "rollout") return TrajectoryKind::rollout;
  throw ValidationError("unknown trajectory kind '" + name + "'");
}

struct Trajectory {
  std::vector<CellState> states;
  TrajectoryKind kind = TrajectoryKind::expert;

  std::size_t size() const { return states.size(); }
  bool empty() const { return states.empty(); }
  CellState front() const { return states.front(); }
  CellState back() const { return states.back(); }

  bool operator==(const Trajectory&) const = default;
};

/// Throws ValidationError naming the first offending index.
inline void validate_trajectory(const Trajectory& traj, const GridMDP& mdp) {
  if (traj.empty()) throw ValidationError("trajectory is empty");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (!mdp.in_bounds(traj.states[i])) {
      throw ValidationError("trajectory state " + std::to_string(i) + " " + to_string(traj.states[i]) +
                            " is outside the grid");
    }
    if (i > 0 && !action_between(traj.states[i - 1], traj.states[i])) {
      throw ValidationError("trajectory step " + std::to_string(i) + " from " + to_string(traj.states[i - 1]) +
                            " to " + to_string(traj.states[i]) + " is not an 8-connected move");
    }
  }
}

inline bool is_valid_trajectory(const Trajectory& traj, const GridMDP& mdp) {
  try {
    validate_trajectory(traj, mdp);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

/// Discounted occupancy rho(s, a) over cells x {8 moves, stay}.
class VisitationMap {
 public:
  VisitationMap() = default;
  VisitationMap(int height, int width)
      : height_(height), width_(width),
        mass_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * kNumSlots, 0.0) {}

  int height() const { return height_; }
  int width() const { return width_; }

  double& at(CellState s, int slot) { return mass_[(s.row * width_ + s.col) * kNumSlots + slot]; }
  double at(CellState s, int slot) const { return mass_[(s.row * width_ + s.col) * kNumSlots + slot]; }
  double& at_index(int cell, int slot) { return mass_[cell * kNumSlots + slot]; }
  double at_index(int cell, int slot) const { return mass_[cell * kNumSlots + slot]; }

  std::vector<double>& data() { return mass_; }
  const std::vector<double>& data() const { return mass_; }

  double total() const {
    double sum = 0.0;
    for (double m : mass_) sum += m;
    return sum;
  }

  /// Sum over the eight move slots of each cell; the stay slot carries no reward.
  Grid<double> move_mass() const {
    Grid<double> out(height_, width_, 0.0);
    for (int i = 0; i < height_ * width_; ++i) {
      double sum = 0.0;
      for (int a = 0; a < kNumActions; ++a) sum += mass_[i * kNumSlots + a];
      out.data()[i] = sum;
    }
    return out;
  }

  bool same_shape(const VisitationMap& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> mass_;
};

/// Boltzmann policy over the eight moves (plus stay at the goal).
struct SoftPolicy {
  int height = 0;
  int width = 0;
  CellState goal;
  double temperature = 1.0;          // 0 marks a greedy (hard-max) policy
  std::vector<double> probs;         // cells x kNumSlots
  std::vector<double> q;             // cells x kNumActions, -inf for invalid moves
  std::vector<double> values;        // cells
  std::vector<double> residuals;     // max |V_k - V_{k-1}| after each backup

  double prob(CellState s, int slot) const { return probs[(s.row * width + s.col) * kNumSlots + slot]; }
  double q_value(CellState s, int action) const { return q[(s.row * width + s.col) * kNumActions + action]; }
  double value(CellState s) const { return values[s.row * width + s.col]; }
  double residual() const { return residuals.empty() ? 0.0 : residuals.back(); }
};

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Among near-maximal q-values prefer cardinal moves, then the lowest action index.
inline int pick_greedy(const double* q) {
  double best = kNegInf;
  for (int a = 0; a < kNumActions; ++a) best = std::max(best, q[a]);
  if (best == kNegInf) return -1;
  const double tol = 1e-9 * std::max(1.0, std::abs(best));
  for (int a = 0; a < kNumActions; a += 2) {
    if (q[a] >= best - tol) return a;
  }
  for (int a = 1; a < kNumActions; a += 2) {
    if (q[a] >= best - tol) return a;
  }
  return -1;
}

enum class Backup { soft, hard };

inline SoftPolicy value_iteration(const RewardField& rewards, CellState goal, const GridMDP& mdp, int iters,
                                  double temperature, Backup backup) {
  require(rewards.height() == mdp.height() && rewards.width() == mdp.width(),
          "reward field dimensions do not match the MDP");
  require_finite(rewards, "reward field");
  mdp.require_cell(goal, "goal");
  require(iters >= 1, "value iteration needs at least one iteration");

  const int n = static_cast<int>(mdp.num_cells());
  const int goal_index = mdp.index(goal);
  const double gamma = mdp.discount();
  const auto& r = rewards.data();

  SoftPolicy policy;
  policy.height = mdp.height();
  policy.width = mdp.width();
  policy.goal = goal;
  policy.temperature = backup == Backup::soft ? temperature : 0.0;
  policy.q.assign(static_cast<std::size_t>(n) * kNumActions, kNegInf);
  policy.values.assign(n, 0.0);
  policy.probs.assign(static_cast<std::size_t>(n) * kNumSlots, 0.0);
  policy.residuals.reserve(iters);

  std::vector<double> next(n, 0.0);
  for (int k = 0; k < iters; ++k) {
    double residual = 0.0;
    for (int s = 0; s < n; ++s) {
      double* qs = &policy.q[static_cast<std::size_t>(s) * kNumActions];
      if (s == goal_index) {
        next[s] = 0.0;
        continue;
      }
      double best = kNegInf;
      for (int a = 0; a < kNumActions; ++a) {
        const int nb = mdp.neighbor(s, a);
        qs[a] = nb < 0 ? kNegInf : r[s] + gamma * policy.values[nb];
        best = std::max(best, qs[a]);
      }
      double v = best;
      if (backup == Backup::soft && best != kNegInf) {
        double sum = 0.0;
        for (int a = 0; a < kNumActions; ++a) {
          if (qs[a] != kNegInf) sum += std::exp((qs[a] - best) / temperature);
        }
        v = best + temperature * std::log(sum);
      }
      if (best == kNegInf) v = 0.0;  // isolated cell (1x1 grid)
      next[s] = v;
      residual = std::max(residual, std::abs(v - policy.values[s]));
    }
    policy.values.swap(next);
    policy.residuals.push_back(residual);
  }

  for (int s = 0; s < n; ++s) {
    double* ps = &policy.probs[static_cast<std::size_t>(s) * kNumSlots];
    const double* qs = &policy.q[static_cast<std::size_t>(s) * kNumActions];
    if (s == goal_index) {
      ps[kStaySlot] = 1.0;
      continue;
    }
    if (backup == Backup::hard) {
      const int a = pick_greedy(qs);
      if (a >= 0) ps[a] = 1.0;
      continue;
    }
    double sum = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      if (qs[a] != kNegInf) {
        ps[a] = std::exp((qs[a] - policy.values[s]) / temperature);
        sum += ps[a];
      }
    }
    if (sum > 0.0) {
      for (int a = 0; a < kNumActions; ++a) ps[a] /= sum;
    }
  }
  return policy;
}

}  // namespace detail

/// Soft (log-sum-exp) value iteration with an absorbing zero-reward goal.
/// Runs exactly `iters` synchronous backups from V = 0, so the q-values are
/// the finite-horizon soft values of horizon `iters`.
inline SoftPolicy soft_value_iteration(const RewardField& rewards, CellState goal, const GridMDP& mdp, int iters,
                                       double temperature) {
  require(temperature > 0.0 && std::isfinite(temperature), "temperature must be positive");
  return detail::value_iteration(rewards, goal, mdp, iters, temperature, detail::Backup::soft);
}

/// The temperature -> 0 limit: hard-max backups and a deterministic argmax
/// policy (ties go to cardinal moves, then to the lowest action index).
inline SoftPolicy greedy_value_iteration(const RewardField& rewards, CellState goal, const GridMDP& mdp, int iters) {
  return detail::value_iteration(rewards, goal, mdp, iters, 0.0, detail::Backup::hard);
}

/// Greedy action of a policy at a cell; kStaySlot at the goal, -1 if none.
inline int greedy_action(const SoftPolicy& policy, CellState s) {
  if (s == policy.goal) return kStaySlot;
  return detail::pick_greedy(&policy.q[static_cast<std::size_t>(s.row * policy.width + s.col) * kNumActions]);
}

inline VisitationMap empirical_visitation(const Trajectory& traj, const GridMDP& mdp) {
  validate_trajectory(traj, mdp);
  VisitationMap vis(mdp.height(), mdp.width());
  const double gamma = mdp.discount();
  double discount = 1.0;
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
    const int a = *action_between(traj.states[t], traj.states[t + 1]);
    vis.at(traj.states[t], a) += (1.0 - gamma) * discount;
    discount *= gamma;
  }
  vis.at(traj.back(), kStaySlot) += discount;
  return vis;
}

/// Forward propagation of the start distribution under `policy` for
/// `horizon` steps. Mass reaching the goal at step t contributes gamma^t to
/// (goal, stay) and stops moving.
inline VisitationMap policy_visitation(const SoftPolicy& policy, CellState start, CellState goal, const GridMDP& mdp,
                                       int horizon) {
  require(horizon >= 1, "visitation horizon must be at least 1");
  require(policy.height == mdp.height() && policy.width == mdp.width(), "policy does not match the MDP");
  mdp.require_cell(start, "start");
  mdp.require_cell(goal, "goal");

  const int n = static_cast<int>(mdp.num_cells());
  const int goal_index = mdp.index(goal);
  const double gamma = mdp.discount();
  VisitationMap vis(mdp.height(), mdp.width());
  std::vector<double> current(n, 0.0);
  std::vector<double> next(n, 0.0);
  current[mdp.index(start)] = 1.0;

  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int s = 0; s < n; ++s) {
      const double m = current[s];
      if (m == 0.0) continue;
      if (s == goal_index) {
        vis.at_index(s, kStaySlot) += discount * m;
        continue;
      }
      const double* ps = &policy.probs[static_cast<std::size_t>(s) * kNumSlots];
      for (int a = 0; a < kNumActions; ++a) {
        if (ps[a] == 0.0) continue;
        const int nb = mdp.neighbor(s, a);
        if (nb < 0) continue;
        const double flow = m * ps[a];
        vis.at_index(s, a) += (1.0 - gamma) * discount * flow;
        next[nb] += flow;
      }
    }
    current.swap(next);
    discount *= gamma;
  }
  return vis;
}

/// Expected return sum_{s,a} rho(s,a) r(s); the stay slot contributes zero.
inline double return_of(const VisitationMap& vis, const RewardField& rewards) {
  require(vis.height() == rewards.height() && vis.width() == rewards.width(),
          "visitation and reward dimensions differ");
  double total = 0.0;
  const int n = vis.height() * vis.width();
  for (int s = 0; s < n; ++s) {
    double moves = 0.0;
    for (int a = 0; a < kNumActions; ++a) moves += vis.at_index(s, a);
    total += moves * rewards.data()[s];
  }
  return total;
}

}  // namespace cfirl
