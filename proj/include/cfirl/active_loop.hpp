#pragma once

// Active reward learning: warm-start training (phase I), hard-scene selection
// and counterfactual annotation (phase II), retraining from scratch with the
// counterfactual objective (phase III), repeated until the rollouts stop
// improving.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfirl/cf_gen.hpp"
#include "cfirl/cf_irl.hpp"
#include "cfirl/checkpoint.hpp"
#include "cfirl/errors.hpp"
#include "cfirl/grid_mdp.hpp"
#include "cfirl/reward_model.hpp"
#include "cfirl/scene.hpp"
#include "cfirl/scene_io.hpp"

namespace cfirl {

enum class AnnotatorKind { human_service, oracle };

inline std::string to_string(AnnotatorKind k) { return k == AnnotatorKind::oracle ? "oracle" : "human"; }

inline AnnotatorKind parse_annotator(const std::string& name) {
  if (name == "oracle") return AnnotatorKind::oracle;
  if (name == "human" || name == "human_service") return AnnotatorKind::human_service;
  throw ValidationError("unknown annotator '" + name + "' (expected oracle or human)");
}

struct LoopConfig {
  double hausdorff_threshold = 2.0;
  int max_rounds = 3;
  double convergence_eps = 0.25;
  TrainConfig phase1 = TrainConfig::phase1();
  TrainConfig phase3 = TrainConfig::phase3();
  AnnotatorKind annotator = AnnotatorKind::oracle;
  double oracle_margin = 0.1;
  CfGenConfig cfgen;
  HeadConfig head;
  std::uint64_t seed = 0;  // reward parameter initialization

  void validate() const {
    require(hausdorff_threshold > 0.0, "hausdorff_threshold must be positive");
    require(max_rounds >= 1, "max_rounds must be at least 1");
    require(convergence_eps >= 0.0, "convergence_eps must be nonnegative");
    require(oracle_margin >= 0.0, "oracle_margin must be nonnegative");
    require(phase3.alpha > 0.0, "phase III needs alpha > 0");
    phase1.validate();
    phase3.validate();
    cfgen.validate();
    validate_head_config(head);
  }
};

/// Symmetric Hausdorff distance between the state sets, Euclidean in cells.
inline double hausdorff(const Trajectory& a, const Trajectory& b) {
  require(!a.empty() && !b.empty(), "hausdorff distance needs non-empty trajectories");
  auto directed = [](const Trajectory& x, const Trajectory& y) {
    double worst = 0.0;
    for (auto p : x.states) {
      double best = std::numeric_limits<double>::infinity();
      for (auto q : y.states) {
        const double dr = p.row - q.row;
        const double dc = p.col - q.col;
        best = std::min(best, dr * dr + dc * dc);
        if (best == 0.0) break;
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(a, b), directed(b, a)));
}

/// Greedy rollout under a reward field from the expert start toward the goal,
/// at most `horizon` moves.
inline Trajectory rollout_reward(const RewardField& reward, CellState start, CellState goal, const TrainConfig& cfg) {
  const GridMDP mdp(reward.height(), reward.width(), cfg.discount);
  const auto policy = greedy_value_iteration(reward, goal, mdp, cfg.horizon);
  Trajectory t;
  t.kind = TrajectoryKind::rollout;
  t.states.push_back(start);
  CellState s = start;
  for (int step = 0; step < cfg.horizon && s != goal; ++step) {
    const int a = greedy_action(policy, s);
    if (a < 0 || a == kStaySlot) break;
    s = *mdp.step(s, a);
    t.states.push_back(s);
  }
  return t;
}

inline Trajectory rollout_policy(const Scene& scene, const RewardParams& params, const TrainConfig& cfg) {
  return rollout_reward(forward(scene.features, params), scene.expert.front(), scene.goal, cfg);
}

inline std::vector<double> rollout_distances(const std::vector<Scene>& scenes, const RewardParams& params,
                                             const TrainConfig& cfg) {
  std::vector<double> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(hausdorff(rollout_policy(s, params, cfg), s.expert));
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline std::vector<std::string> select_hard_scenes(const std::vector<Scene>& scenes, const RewardParams& params,
                                                   double threshold, const TrainConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& s : scenes) {
    if (hausdorff(rollout_policy(s, params, cfg), s.expert) > threshold) out.push_back(s.id);
  }
  return out;
}

/// Counterfactual iff the candidate enters a forbidden cell or costs more than
/// (1 + margin) times the expert under the oracle.
inline std::map<int, bool> oracle_annotate(const CandidateSet& candidates, const Scene& scene, double margin) {
  const OracleView oracle(scene);
  const double expert_cost = oracle.path_cost(scene.expert);
  std::map<int, bool> labels;
  for (const auto& c : candidates.candidates) {
    const double cost = oracle.path_cost(c.trajectory);
    labels[c.id] = trajectory_enters_forbidden(scene, c.trajectory) || cost > (1.0 + margin) * expert_cost;
  }
  return labels;
}

struct RoundReport {
  int round = 0;
  std::vector<std::string> selected;
  std::vector<std::string> skipped;  // selected but no candidates could be generated
  int candidates = 0;
  int counterfactuals = 0;
  int labeled_scenes = 0;  // scenes carrying at least one counterfactual after this round
  double mean_hausdorff_before = 0.0;
  double mean_hausdorff_after = 0.0;
  std::vector<EpochStats> training;
};

struct LoopReport {
  std::vector<std::string> phases;
  double initial_mean_hausdorff = 0.0;
  std::vector<EpochStats> phase1_training;
  std::vector<RoundReport> rounds;
  std::string stop_reason;
};

/// Labels for every scene in `batch` (each carries its candidate set), keyed by scene id.
using Annotator =
    std::function<std::map<std::string, std::map<int, bool>>(const std::vector<Scene>& batch, int round)>;

inline Annotator make_oracle_annotator(double margin) {
  return [margin](const std::vector<Scene>& batch, int) {
    std::map<std::string, std::map<int, bool>> out;
    for (const auto& s : batch) out[s.id] = oracle_annotate(*s.candidates, s, margin);
    return out;
  };
}

struct LoopResult {
  RewardParams params;
  LoopReport report;
  std::vector<Scene> scenes;  // with the candidates and labels gathered by the loop
};

inline std::uint64_t candidate_seed(std::uint64_t base, int round, std::size_t scene_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(scene_index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Persistence of loop progress so an interrupted run resumes at the last
// finished round.

inline nlohmann::json epoch_stats_to_json(const EpochStats& e) {
  return {{"epoch", e.epoch},       {"loss", e.loss},           {"J_E", e.j_e},
          {"J_S", e.j_s},           {"J_pi", e.j_pi},           {"grad_norm", e.grad_norm},
          {"lr", e.learning_rate}, {"cf_scenes", e.counterfactual_scenes}};
}

inline EpochStats epoch_stats_from_json(const nlohmann::json& j) {
  EpochStats e;
  e.epoch = j.at("epoch").get<int>();
  e.loss = j.at("loss").get<double>();
  e.j_e = j.at("J_E").get<double>();
  e.j_s = j.at("J_S").get<double>();
  e.j_pi = j.at("J_pi").get<double>();
  e.grad_norm = j.at("grad_norm").get<double>();
  e.learning_rate = j.at("lr").get<double>();
  e.counterfactual_scenes = j.at("cf_scenes").get<int>();
  return e;
}

inline nlohmann::json loop_report_to_json(const LoopReport& r) {
  using nlohmann::json;
  json rounds = json::array();
  for (const auto& rr : r.rounds) {
    json tr = json::array();
    for (const auto& e : rr.training) tr.push_back(epoch_stats_to_json(e));
    rounds.push_back({{"round", rr.round},
                      {"selected", rr.selected},
                      {"skipped", rr.skipped},
                      {"candidates", rr.candidates},
                      {"counterfactuals", rr.counterfactuals},
                      {"labeled_scenes", rr.labeled_scenes},
                      {"mean_hausdorff_before", rr.mean_hausdorff_before},
                      {"mean_hausdorff_after", rr.mean_hausdorff_after},
                      {"training", tr}});
  }
  json p1 = json::array();
  for (const auto& e : r.phase1_training) p1.push_back(epoch_stats_to_json(e));
  return {{"format", "CFIRL-LOOP1"},
          {"phases", r.phases},
          {"initial_mean_hausdorff", r.initial_mean_hausdorff},
          {"phase1_training", p1},
          {"rounds", rounds},
          {"stop_reason", r.stop_reason}};
}

inline LoopReport loop_report_from_json(const nlohmann::json& j) {
  LoopReport r;
  r.phases = j.at("phases").get<std::vector<std::string>>();
  r.initial_mean_hausdorff = j.at("initial_mean_hausdorff").get<double>();
  for (const auto& e : j.at("phase1_training")) r.phase1_training.push_back(epoch_stats_from_json(e));
  for (const auto& jr : j.at("rounds")) {
    RoundReport rr;
    rr.round = jr.at("round").get<int>();
    rr.selected = jr.at("selected").get<std::vector<std::string>>();
    rr.skipped = jr.at("skipped").get<std::vector<std::string>>();
    rr.candidates = jr.at("candidates").get<int>();
    rr.counterfactuals = jr.at("counterfactuals").get<int>();
    rr.labeled_scenes = jr.at("labeled_scenes").get<int>();
    rr.mean_hausdorff_before = jr.at("mean_hausdorff_before").get<double>();
    rr.mean_hausdorff_after = jr.at("mean_hausdorff_after").get<double>();
    for (const auto& e : jr.at("training")) rr.training.push_back(epoch_stats_from_json(e));
    r.rounds.push_back(rr);
  }
  r.stop_reason = j.value("stop_reason", std::string{});
  return r;
}

/// One row per round: round, selected, skipped, candidates, counterfactuals,
/// labeled_scenes, mean_hausdorff_before, mean_hausdorff_after. Round 0 is
/// the phase I model.
inline std::string loop_summary_tsv(const LoopReport& r) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "round\tselected\tskipped\tcandidates\tcounterfactuals\tlabeled_scenes\tmean_hausdorff_before\t"
         "mean_hausdorff_after\n";
  out << 0 << "\t0\t0\t0\t0\t0\t" << r.initial_mean_hausdorff << '\t' << r.initial_mean_hausdorff << '\n';
  for (const auto& rr : r.rounds) {
    out << rr.round << '\t' << rr.selected.size() << '\t' << rr.skipped.size() << '\t' << rr.candidates << '\t'
        << rr.counterfactuals << '\t' << rr.labeled_scenes << '\t' << rr.mean_hausdorff_before << '\t'
        << rr.mean_hausdorff_after << '\n';
  }
  return out.str();
}

struct LoopState {
  int completed_rounds = -1;  // -1 nothing done, 0 phase I done
  LoopReport report;
  std::map<std::string, CandidateSet> candidates;
  std::map<std::string, std::map<int, bool>> labels;
};

inline void save_loop_state(const std::filesystem::path& dir, const LoopState& st, const RewardParams& params) {
  using nlohmann::json;
  std::filesystem::create_directories(dir);
  const std::string ckpt = encode_checkpoint(params);
  {
    const auto tmp = dir / "loop_params.bin.tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(ckpt.data(), static_cast<std::streamsize>(ckpt.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
    out.close();
    std::filesystem::rename(tmp, dir / "loop_params.bin");
  }
  json cands = json::object();
  for (const auto& [id, set] : st.candidates) cands[id] = candidates_to_json(set);
  json labels = json::object();
  for (const auto& [id, l] : st.labels) labels[id] = labels_to_json(l);
  json j = {{"format", "CFIRL-LOOPSTATE1"},
            {"completed_rounds", st.completed_rounds},
            {"report", loop_report_to_json(st.report)},
            {"candidates", cands},
            {"labels", labels}};
  write_text_file_atomic(dir / "loop_state.json", j.dump() + "\n");
}

inline std::optional<std::pair<LoopState, RewardParams>> load_loop_state(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "loop_state.json")) return std::nullopt;
  const auto j = parse_json_text(read_text_file(dir / "loop_state.json"), "loop state");
  LoopState st;
  try {
    require(j.value("format", std::string{}) == "CFIRL-LOOPSTATE1", "loop state has an unknown format");
    st.completed_rounds = j.at("completed_rounds").get<int>();
    st.report = loop_report_from_json(j.at("report"));
    for (const auto& [id, c] : j.at("candidates").items()) st.candidates[id] = candidates_from_json(c);
    for (const auto& [id, l] : j.at("labels").items()) st.labels[id] = labels_from_json(l);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed loop state: ") + e.what());
  }
  return std::make_pair(st, load_checkpoint(dir / "loop_params.bin"));
}

struct LoopOptions {
  std::filesystem::path state_dir;  // empty: no persistence
  std::function<void(const std::string&)> log;
};

/// Phase I, then rounds of phase II (selection, candidates, annotation) and
/// phase III (retraining from scratch with alpha = phase3.alpha on all scenes;
/// scenes without counterfactuals contribute the alpha = 0 term). Stops when a
/// round improves the mean rollout Hausdorff by less than convergence_eps, when
/// no new scene is selected, or after max_rounds.
inline LoopResult run_active_loop(std::vector<Scene> scenes, const LoopConfig& cfg, const Annotator& annotator,
                                  const LoopOptions& opts = {}) {
  cfg.validate();
  require(!scenes.empty(), "the active loop needs at least one scene");
  {
    std::set<std::string> ids;
    for (const auto& s : scenes) require(ids.insert(s.id).second, "duplicate scene id '" + s.id + "'");
  }
  auto log = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };
  const TrainConfig& eval_cfg = cfg.phase1;

  LoopState st;
  RewardParams params;
  if (!opts.state_dir.empty()) {
    if (auto loaded = load_loop_state(opts.state_dir)) {
      st = loaded->first;
      params = loaded->second;
      for (auto& s : scenes) {
        if (auto it = st.candidates.find(s.id); it != st.candidates.end()) s.candidates = it->second;
        if (auto it = st.labels.find(s.id); it != st.labels.end()) s.labels = it->second;
      }
      log("resuming after round " + std::to_string(st.completed_rounds));
    }
  }
  auto persist = [&] {
    if (!opts.state_dir.empty()) save_loop_state(opts.state_dir, st, params);
  };

  if (st.completed_rounds < 0) {
    log("phase I: training " + std::to_string(cfg.phase1.epochs) + " epochs with alpha 0");
    auto p1 = cfg.phase1;
    p1.alpha = 0.0;
    auto trained = train(scenes, init_params(cfg.head, cfg.seed), p1);
    params = std::move(trained.params);
    st.report.phases.push_back("I");
    st.report.phase1_training = trained.epochs;
    st.report.initial_mean_hausdorff = mean_of(rollout_distances(scenes, params, eval_cfg));
    st.completed_rounds = 0;
    persist();
  }

  double previous = st.report.rounds.empty() ? st.report.initial_mean_hausdorff
                                             : st.report.rounds.back().mean_hausdorff_after;
  bool stopped = !st.report.stop_reason.empty();
  for (int round = st.completed_rounds + 1; round <= cfg.max_rounds && !stopped; ++round) {
    RoundReport rr;
    rr.round = round;
    rr.mean_hausdorff_before = previous;

    // phase II
    std::vector<Scene> batch;
    std::vector<std::size_t> batch_index;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      auto& s = scenes[i];
      if (s.candidates) continue;  // annotated in an earlier round
      if (hausdorff(rollout_policy(s, params, eval_cfg), s.expert) <= cfg.hausdorff_threshold) continue;
      rr.selected.push_back(s.id);
      auto gen = cfg.cfgen;
      gen.seed = candidate_seed(cfg.cfgen.seed, round, i);
      try {
        Scene copy = s;
        copy.candidates = generate_candidates(s.expert, gen, s.height(), s.width());
        copy.labels.clear();
        batch.push_back(std::move(copy));
        batch_index.push_back(i);
      } catch (const ValidationError& e) {
        rr.skipped.push_back(s.id);
        log("scene " + s.id + " skipped: " + e.what());
      }
    }
    st.report.phases.push_back("II");
    log("phase II round " + std::to_string(round) + ": " + std::to_string(rr.selected.size()) + " hard scenes");
    if (batch.empty()) {
      st.report.stop_reason = rr.selected.empty() ? "no scene exceeds the Hausdorff threshold"
                                                  : "no candidates could be generated for the selected scenes";
      rr.mean_hausdorff_after = previous;
      st.report.rounds.push_back(rr);
      st.completed_rounds = round;
      persist();
      break;
    }
    const auto labels = annotator(batch, round);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto& s = scenes[batch_index[b]];
      auto it = labels.find(s.id);
      require(it != labels.end(), "annotator returned no labels for scene '" + s.id + "'");
      s.candidates = batch[b].candidates;
      s.labels = it->second;
      validate_scene(s);
      rr.candidates += static_cast<int>(s.candidates->candidates.size());
      for (const auto& [id, flag] : s.labels) rr.counterfactuals += flag ? 1 : 0;
      st.candidates[s.id] = *s.candidates;
      st.labels[s.id] = s.labels;
    }
    for (const auto& s : scenes) rr.labeled_scenes += s.counterfactuals().empty() ? 0 : 1;

    // phase III
    if (rr.labeled_scenes == 0) {
      st.report.stop_reason = "no candidate was labeled counterfactual";
      rr.mean_hausdorff_after = previous;
      st.report.rounds.push_back(rr);
      st.completed_rounds = round;
      persist();
      break;
    }
    log("phase III round " + std::to_string(round) + ": retraining from scratch on " +
        std::to_string(rr.labeled_scenes) + " labeled scenes");
    auto trained = train(scenes, init_params(cfg.head, cfg.seed), cfg.phase3);
    params = std::move(trained.params);
    rr.training = trained.epochs;
    st.report.phases.push_back("III");
    rr.mean_hausdorff_after = mean_of(rollout_distances(scenes, params, eval_cfg));
    const double improvement = previous - rr.mean_hausdorff_after;
    previous = rr.mean_hausdorff_after;
    st.report.rounds.push_back(rr);
    st.completed_rounds = round;
    if (improvement < cfg.convergence_eps) {
      st.report.stop_reason = "mean Hausdorff improved by less than convergence_eps";
      stopped = true;
    }
    persist();
  }
  if (st.report.stop_reason.empty()) st.report.stop_reason = "max_rounds reached";
  persist();
  return {params, st.report, scenes};
}

}  // namespace cfirl
