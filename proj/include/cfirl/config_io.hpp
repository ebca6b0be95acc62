#pragma once

// JSON config files for worlds, training, the active loop and mission
// simulation. Missing keys keep their defaults; unknown keys are rejected.

#include <filesystem>
#include <set>
#include <string>

#include <json.hpp>

#include "cfirl/active_loop.hpp"
#include "cfirl/cf_irl.hpp"
#include "cfirl/errors.hpp"
#include "cfirl/nav_planner.hpp"
#include "cfirl/scene_io.hpp"
#include "cfirl/synth_world.hpp"

namespace cfirl {

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    require(j_.is_object(), what_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(what_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      require(seen_.count(key) > 0, what_ + " has unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline json train_config_to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"alpha_reg", c.alpha_reg},
          {"smoothness_weight", c.smoothness_weight},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"horizon", c.horizon},
          {"temperature", c.temperature},
          {"discount", c.discount},
          {"batch_size", c.batch_size},
          {"optimizer", to_string(c.optimizer)},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
  detail::ConfigReader r(j, "train config");
  r.get("alpha", c.alpha);
  r.get("alpha_reg", c.alpha_reg);
  r.get("smoothness_weight", c.smoothness_weight);
  r.get("epochs", c.epochs);
  r.get("learning_rate", c.learning_rate);
  r.get("lr_decay", c.lr_decay);
  r.get("horizon", c.horizon);
  r.get("temperature", c.temperature);
  r.get("discount", c.discount);
  r.get("batch_size", c.batch_size);
  std::string opt = to_string(c.optimizer);
  r.get("optimizer", opt);
  c.optimizer = parse_optimizer(opt);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("grad_clip", c.grad_clip);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

inline json world_config_to_json(const WorldConfig& c) {
  json classes = json::array();
  for (const auto& t : c.terrain_classes) {
    classes.push_back({{"name", t.name}, {"cost", t.cost}, {"fraction", t.fraction}, {"forbidden", t.forbidden}});
  }
  const auto& k = c.corridor;
  return {{"height", c.height},
          {"width", c.width},
          {"cell_size", c.cell_size},
          {"terrain_classes", classes},
          {"obstacle_density", c.obstacle_density},
          {"noise_scale", c.noise_scale},
          {"elevation_amplitude", c.elevation_amplitude},
          {"curb_probability", c.curb_probability},
          {"curb_height", c.curb_height},
          {"dynamic_count", c.dynamic_count},
          {"dynamic_radius", c.dynamic_radius},
          {"dynamic_cost", c.dynamic_cost},
          {"step_penalty", c.step_penalty},
          {"min_goal_distance", c.min_goal_distance},
          {"max_goal_distance", c.max_goal_distance},
          {"layout", to_string(c.layout)},
          {"corridor",
           {{"open_class", k.open_class},
            {"corridor_class", k.corridor_class},
            {"shortcut_class", k.shortcut_class},
            {"wall_thickness", k.wall_thickness},
            {"gap_width", k.gap_width},
            {"separation", k.separation},
            {"margin", k.margin}}},
          {"seed", c.seed},
          {"max_retries", c.max_retries}};
}

inline WorldConfig world_config_from_json(const json& j, WorldConfig c = {}) {
  detail::ConfigReader r(j, "world config");
  r.get("height", c.height);
  r.get("width", c.width);
  r.get("cell_size", c.cell_size);
  if (const json* tc = r.sub("terrain_classes")) {
    require(tc->is_array(), "world config.terrain_classes must be an array");
    c.terrain_classes.clear();
    for (const auto& e : *tc) {
      detail::ConfigReader cr(e, "terrain class");
      TerrainClass t;
      cr.get("name", t.name);
      cr.get("cost", t.cost);
      cr.get("fraction", t.fraction);
      cr.get("forbidden", t.forbidden);
      cr.finish();
      c.terrain_classes.push_back(t);
    }
  }
  r.get("obstacle_density", c.obstacle_density);
  r.get("noise_scale", c.noise_scale);
  r.get("elevation_amplitude", c.elevation_amplitude);
  r.get("curb_probability", c.curb_probability);
  r.get("curb_height", c.curb_height);
  r.get("dynamic_count", c.dynamic_count);
  r.get("dynamic_radius", c.dynamic_radius);
  r.get("dynamic_cost", c.dynamic_cost);
  r.get("step_penalty", c.step_penalty);
  r.get("min_goal_distance", c.min_goal_distance);
  r.get("max_goal_distance", c.max_goal_distance);
  std::string layout = to_string(c.layout);
  r.get("layout", layout);
  c.layout = parse_layout(layout);
  if (const json* k = r.sub("corridor")) {
    detail::ConfigReader kr(*k, "world config.corridor");
    kr.get("open_class", c.corridor.open_class);
    kr.get("corridor_class", c.corridor.corridor_class);
    kr.get("shortcut_class", c.corridor.shortcut_class);
    kr.get("wall_thickness", c.corridor.wall_thickness);
    kr.get("gap_width", c.corridor.gap_width);
    kr.get("separation", c.corridor.separation);
    kr.get("margin", c.corridor.margin);
    kr.finish();
  }
  r.get("seed", c.seed);
  r.get("max_retries", c.max_retries);
  r.finish();
  c.validate();
  return c;
}

inline HeadConfig head_config_from_partial_json(const json& j, HeadConfig c = {}) {
  detail::ConfigReader r(j, "head config");
  std::string kind = to_string(c.kind);
  r.get("kind", kind);
  c.kind = parse_head_kind(kind);
  r.get("in_channels", c.in_channels);
  r.get("prepool", c.prepool);
  r.get("skip", c.skip);
  r.get("trunk", c.trunk);
  r.get("postpool", c.postpool);
  r.finish();
  return c;
}

inline CfGenConfig cfgen_config_from_partial_json(const json& j, CfGenConfig c = {}) {
  detail::ConfigReader r(j, "candidate config");
  r.get("num_candidates", c.num_candidates);
  r.get("num_control_points", c.num_control_points);
  r.get("mu", c.mu);
  r.get("sigma", c.sigma);
  std::string fit = to_string(c.fit);
  r.get("fit", fit);
  c.fit = parse_fit_mode(fit);
  r.get("seed", c.seed);
  r.get("max_retries", c.max_retries);
  r.finish();
  c.validate();
  return c;
}

inline json loop_config_to_json(const LoopConfig& c) {
  return {{"hausdorff_threshold", c.hausdorff_threshold},
          {"max_rounds", c.max_rounds},
          {"convergence_eps", c.convergence_eps},
          {"phase1", train_config_to_json(c.phase1)},
          {"phase3", train_config_to_json(c.phase3)},
          {"annotator", to_string(c.annotator)},
          {"oracle_margin", c.oracle_margin},
          {"cfgen", cfgen_config_to_json(c.cfgen)},
          {"head", head_config_to_json(c.head)},
          {"seed", c.seed}};
}

/// Head channels may stay 0 here; callers fill them from the scenes.
inline LoopConfig loop_config_from_json(const json& j, LoopConfig c = {}) {
  detail::ConfigReader r(j, "loop config");
  r.get("hausdorff_threshold", c.hausdorff_threshold);
  r.get("max_rounds", c.max_rounds);
  r.get("convergence_eps", c.convergence_eps);
  if (const json* p = r.sub("phase1")) c.phase1 = train_config_from_json(*p, c.phase1);
  if (const json* p = r.sub("phase3")) c.phase3 = train_config_from_json(*p, c.phase3);
  std::string ann = to_string(c.annotator);
  r.get("annotator", ann);
  c.annotator = parse_annotator(ann);
  r.get("oracle_margin", c.oracle_margin);
  if (const json* p = r.sub("cfgen")) c.cfgen = cfgen_config_from_partial_json(*p, c.cfgen);
  if (const json* p = r.sub("head")) c.head = head_config_from_partial_json(*p, c.head);
  r.get("seed", c.seed);
  r.finish();
  return c;
}

/// Simulation settings plus the waypoint spacing used for derived missions.
struct EvalConfig {
  SimConfig sim;
  double mission_spacing = 10.0;
};

inline json eval_config_to_json(const EvalConfig& e) {
  const auto& c = e.sim;
  return {{"mission_spacing", e.mission_spacing},
          {"tick", c.tick},
          {"v_max", c.v_max},
          {"a_max", c.a_max},
          {"arc_count", c.arc_count},
          {"max_curvature", c.max_curvature},
          {"horizon_radius", c.horizon_radius},
          {"discount", c.scoring.discount},
          {"goal_weight", c.scoring.goal_weight},
          {"reach_radius", c.reach_radius},
          {"progress_timeout", c.progress_timeout},
          {"progress_eps", c.progress_eps},
          {"reset_advance", c.reset_advance},
          {"max_time", c.max_time},
          {"lethal_classes", c.lethal_classes}};
}

inline EvalConfig eval_config_from_json(const json& j, EvalConfig e = {}) {
  detail::ConfigReader r(j, "eval config");
  auto& c = e.sim;
  r.get("mission_spacing", e.mission_spacing);
  r.get("tick", c.tick);
  r.get("v_max", c.v_max);
  r.get("a_max", c.a_max);
  r.get("arc_count", c.arc_count);
  r.get("max_curvature", c.max_curvature);
  r.get("horizon_radius", c.horizon_radius);
  r.get("discount", c.scoring.discount);
  r.get("goal_weight", c.scoring.goal_weight);
  r.get("reach_radius", c.reach_radius);
  r.get("progress_timeout", c.progress_timeout);
  r.get("progress_eps", c.progress_eps);
  r.get("reset_advance", c.reset_advance);
  r.get("max_time", c.max_time);
  r.get("lethal_classes", c.lethal_classes);
  r.finish();
  c.validate();
  require(e.mission_spacing > 0.0, "mission_spacing must be positive");
  return e;
}

inline json load_json_file(const std::filesystem::path& path) {
  return parse_json_text(read_text_file(path), path.string());
}

}  // namespace cfirl
