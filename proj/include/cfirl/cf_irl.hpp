#pragma once

// Counterfactual IRL: the alpha-mixed visitation objective, its reward-space
// gradient and the training loop that alternates reward steps with policy
// re-solves.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cfirl/errors.hpp"
#include "cfirl/grid_mdp.hpp"
#include "cfirl/reward_model.hpp"
#include "cfirl/scene.hpp"

namespace cfirl {

enum class OptimizerKind { sgd, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + name + "'");
}

struct TrainConfig {
  double alpha = 0.0;
  double alpha_reg = 1.0;
  double smoothness_weight = 4.0;
  int epochs = 25;
  double learning_rate = 0.5;
  double lr_decay = 0.96;
  int horizon = 50;
  double temperature = 1.0;
  double discount = 0.99;
  int batch_size = 30;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // max global gradient norm, 0 = off
  std::uint64_t seed = 0;

  void validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0,1]");
    require(alpha_reg >= 0.0 && smoothness_weight >= 0.0, "regularizer weights must be nonnegative");
    require(epochs >= 1, "epochs must be at least 1");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must be in (0,1]");
    require(horizon >= 1, "horizon must be at least 1");
    require(temperature > 0.0, "temperature must be positive");
    require(discount > 0.0 && discount < 1.0, "discount must be in (0,1)");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(grad_clip >= 0.0, "grad_clip must be nonnegative");
  }

  static TrainConfig phase1() { return TrainConfig{}; }

  static TrainConfig phase3() {
    TrainConfig c;
    c.alpha = 0.5;
    c.epochs = 50;
    return c;
  }
};

/// Reward-player ascent direction per cell:
/// g(s) = sum over move actions of rho_E - alpha rho_S - (1 - alpha) rho_pi.
inline Grid<double> irl_reward_gradient(const VisitationMap& rho_e, const VisitationMap* rho_s,
                                        const VisitationMap& rho_pi, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0,1]");
  require(rho_e.same_shape(rho_pi), "expert and policy visitations have different dimensions");
  if (rho_s == nullptr) {
    require(alpha == 0.0, "alpha > 0 requires a counterfactual visitation");
  } else {
    require(rho_e.same_shape(*rho_s), "expert and counterfactual visitations have different dimensions");
  }
  Grid<double> g(rho_e.height(), rho_e.width(), 0.0);
  const int cells = rho_e.height() * rho_e.width();
  for (int c = 0; c < cells; ++c) {
    double acc = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      const double s = rho_s ? rho_s->at_index(c, a) : 0.0;
      acc += rho_e.at_index(c, a) - alpha * s - (1.0 - alpha) * rho_pi.at_index(c, a);
    }
    g.data()[c] = acc;
  }
  return g;
}

/// Probability that the expert is preferred over the alpha-mixture of the
/// counterfactual and policy returns.
inline double bradley_terry_prob(double j_e, double j_s, double j_pi, double alpha) {
  const double x = alpha * (j_s - j_e) + (1.0 - alpha) * (j_pi - j_e);
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

struct VisitationSet {
  VisitationMap expert;
  std::optional<VisitationMap> suboptimal;
  VisitationMap policy;
};

struct ObjectiveResult {
  double loss = 0.0;
  double j_e = 0.0;
  double j_s = 0.0;
  double j_pi = 0.0;
  double magnitude = 0.0;
  double smoothness = 0.0;
  Grid<double> data_gradient;  // irl_reward_gradient
  Grid<double> dloss_dr;
};

/// Loss for a fixed set of visitations; the policy is a constant here.
inline ObjectiveResult irl_objective(const RewardField& reward, const VisitationSet& vis, double alpha,
                                     const TrainConfig& cfg) {
  const VisitationMap* rho_s = vis.suboptimal ? &*vis.suboptimal : nullptr;
  ObjectiveResult out;
  out.j_e = return_of(vis.expert, reward);
  out.j_pi = return_of(vis.policy, reward);
  out.j_s = rho_s ? return_of(*rho_s, reward) : 0.0;
  const auto mag = magnitude_regularizer(reward);
  const auto smooth = smoothness_penalty(reward);
  out.magnitude = mag.value;
  out.smoothness = smooth.value;
  out.loss = -(out.j_e - alpha * out.j_s - (1.0 - alpha) * out.j_pi) + cfg.alpha_reg * mag.value +
             cfg.smoothness_weight * smooth.value;
  out.data_gradient = irl_reward_gradient(vis.expert, rho_s, vis.policy, alpha);
  out.dloss_dr = Grid<double>(reward.height(), reward.width(), 0.0);
  for (std::size_t i = 0; i < reward.size(); ++i) {
    out.dloss_dr.data()[i] = -out.data_gradient.data()[i] + cfg.alpha_reg * mag.grad.data()[i] +
                             cfg.smoothness_weight * smooth.grad.data()[i];
  }
  return out;
}

/// Mean empirical visitation of a set of trajectories.
inline VisitationMap mean_visitation(const std::vector<Trajectory>& trajs, const GridMDP& mdp) {
  VisitationMap out(mdp.height(), mdp.width());
  for (const auto& t : trajs) {
    const auto v = empirical_visitation(t, mdp);
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += v.data()[i];
  }
  for (double& m : out.data()) m /= static_cast<double>(trajs.size());
  return out;
}

inline SoftPolicy solve_policy(const Scene& scene, const RewardField& reward, const TrainConfig& cfg) {
  const GridMDP mdp(scene.height(), scene.width(), cfg.discount);
  return soft_value_iteration(reward, scene.goal, mdp, cfg.horizon, cfg.temperature);
}

/// rho_E, rho_S (when the scene has labeled counterfactuals) and rho_pi of the
/// soft-optimal policy for `reward` started at the expert's start.
inline VisitationSet scene_visitations(const Scene& scene, const RewardField& reward, const TrainConfig& cfg) {
  const GridMDP mdp(scene.height(), scene.width(), cfg.discount);
  VisitationSet v{empirical_visitation(scene.expert, mdp), std::nullopt, VisitationMap(mdp.height(), mdp.width())};
  const auto cfs = scene.counterfactuals();
  if (!cfs.empty()) v.suboptimal = mean_visitation(cfs, mdp);
  const auto policy = soft_value_iteration(reward, scene.goal, mdp, cfg.horizon, cfg.temperature);
  v.policy = policy_visitation(policy, scene.expert.front(), scene.goal, mdp, cfg.horizon);
  return v;
}

struct SceneResult {
  ObjectiveResult objective;
  ParamGrads grads;
  double alpha = 0.0;  // alpha actually used
  bool has_counterfactuals = false;
};

/// Loss and parameter gradient for one scene. With `fallback` set, scenes
/// without labeled counterfactuals use the alpha = 0 form instead of failing.
inline SceneResult scene_loss_and_grad(const Scene& scene, const RewardParams& params, const TrainConfig& cfg,
                                       bool fallback = false) {
  const auto reward = forward(scene.features, params);
  const auto vis = scene_visitations(scene, reward, cfg);
  SceneResult out;
  out.has_counterfactuals = vis.suboptimal.has_value();
  out.alpha = cfg.alpha;
  if (cfg.alpha > 0.0 && !out.has_counterfactuals) {
    if (!fallback) {
      throw ValidationError("scene '" + scene.id + "' has no labeled counterfactuals but alpha is " +
                            std::to_string(cfg.alpha));
    }
    out.alpha = 0.0;
  }
  out.objective = irl_objective(reward, vis, out.alpha, cfg);
  out.grads = backward(scene.features, params, out.objective.dloss_dr);
  return out;
}

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double j_e = 0.0;
  double j_s = 0.0;  // mean over scenes that carry counterfactuals, 0 when none do
  double j_pi = 0.0;
  double grad_norm = 0.0;  // mean over steps of the pre-clip batch gradient norm
  double learning_rate = 0.0;
  int counterfactual_scenes = 0;
};

struct TrainResult {
  RewardParams params;
  std::vector<EpochStats> epochs;
};

inline double grad_norm(const ParamGrads& g) {
  double ss = 0.0;
  for (const auto& t : g) {
    for (double v : t.values) ss += v * v;
  }
  return std::sqrt(ss);
}

namespace detail {

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

inline double uniform01_train(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch training. Scene order is reshuffled every epoch from `cfg.seed`;
/// per-scene gradients are reduced in batch order, so runs are reproducible.
inline TrainResult train(const std::vector<Scene>& scenes, RewardParams params, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  require(!scenes.empty(), "training needs at least one scene");
  for (const auto& s : scenes) check_compatible(s.features, params);
  if (cfg.alpha > 0.0) {
    bool any = false;
    for (const auto& s : scenes) any = any || !s.counterfactuals().empty();
    require(any, "alpha > 0 requires at least one scene with labeled counterfactuals");
  }

  std::mt19937_64 rng(cfg.seed);
  detail::AdamState adam;
  for (const auto& t : params.tensors) {
    adam.m.emplace_back(t.values.size(), 0.0);
    adam.v.emplace_back(t.values.size(), 0.0);
  }
  std::vector<int> order(scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainResult result;
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<int>(detail::uniform01_train(rng) * (i + 1))]);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = lr;
    int steps = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      ParamGrads batch = zero_grads_like(params);
      for (std::size_t k = b; k < e; ++k) {
        const Scene& scene = scenes[order[k]];
        const auto r = scene_loss_and_grad(scene, params, cfg, true);
        if (!std::isfinite(r.objective.loss)) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " in scene '" + scene.id + "'");
        }
        stats.loss += r.objective.loss;
        stats.j_e += r.objective.j_e;
        stats.j_pi += r.objective.j_pi;
        if (r.has_counterfactuals) {
          stats.j_s += r.objective.j_s;
          ++stats.counterfactual_scenes;
        }
        for (std::size_t t = 0; t < batch.size(); ++t) {
          for (std::size_t i = 0; i < batch[t].values.size(); ++i) batch[t].values[i] += r.grads[t].values[i];
        }
      }
      const double inv = 1.0 / static_cast<double>(e - b);
      for (auto& t : batch) {
        for (double& v : t.values) v *= inv;
      }
      const double norm = grad_norm(batch);
      if (!std::isfinite(norm)) {
        throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch));
      }
      stats.grad_norm += norm;
      ++steps;
      const double scale = cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
      if (cfg.optimizer == OptimizerKind::sgd) {
        for (std::size_t t = 0; t < batch.size(); ++t) {
          for (std::size_t i = 0; i < batch[t].values.size(); ++i) {
            params.tensors[t].values[i] -= lr * scale * batch[t].values[i];
          }
        }
      } else {
        ++adam.step;
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.step));
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.step));
        for (std::size_t t = 0; t < batch.size(); ++t) {
          for (std::size_t i = 0; i < batch[t].values.size(); ++i) {
            const double g = scale * batch[t].values[i];
            double& m = adam.m[t][i];
            double& v = adam.v[t][i];
            m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
            v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
            params.tensors[t].values[i] -= lr * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
          }
        }
      }
    }
    const double n = static_cast<double>(scenes.size());
    stats.loss /= n;
    stats.j_e /= n;
    stats.j_pi /= n;
    if (stats.counterfactual_scenes > 0) stats.j_s /= stats.counterfactual_scenes;
    stats.grad_norm /= std::max(steps, 1);
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
    lr *= cfg.lr_decay;
  }
  for (const auto& t : params.tensors) {
    for (double v : t.values) {
      if (!std::isfinite(v)) throw NumericalError("training produced a non-finite parameter in '" + t.name + "'");
    }
  }
  result.params = std::move(params);
  return result;
}

/// Tab-separated training log with a header row:
/// epoch loss J_E J_S J_pi grad_norm lr cf_scenes
inline std::string format_training_log(const std::vector<EpochStats>& epochs) {
  std::ostringstream out;
  out << "epoch\tloss\tJ_E\tJ_S\tJ_pi\tgrad_norm\tlr\tcf_scenes\n";
  out << std::setprecision(10);
  for (const auto& e : epochs) {
    out << e.epoch << '\t' << e.loss << '\t' << e.j_e << '\t' << e.j_s << '\t' << e.j_pi << '\t' << e.grad_norm
        << '\t' << e.learning_rate << '\t' << e.counterfactual_scenes << '\n';
  }
  return out.str();
}

}  // namespace cfirl
