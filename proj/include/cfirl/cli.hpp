#pragma once

// The cfirl command line: gen-world, train, loop, annotate-serve, evaluate and
// validate-scene. run_cli is callable in-process; tools/cfirl.cpp wraps it.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfirl/active_loop.hpp"
#include "cfirl/cf_gen.hpp"
#include "cfirl/cf_irl.hpp"
#include "cfirl/checkpoint.hpp"
#include "cfirl/config_io.hpp"
#include "cfirl/errors.hpp"
#include "cfirl/nav_planner.hpp"
#include "cfirl/scene_io.hpp"
#include "cfirl/synth_world.hpp"
#include "cfirl/annotation_service.hpp"

namespace cfirl {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kManifestFormat = "CFIRL-MANIFEST1";

enum ExitCode : int { kExitOk = 0, kExitOther = 1, kExitValidation = 2, kExitIo = 3, kExitNumerical = 4 };

namespace cli_detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Relative paths resolve against CFIRL_DATA_ROOT when it is set.
inline std::filesystem::path resolve(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || p.empty()) return path;
  if (const char* root = std::getenv("CFIRL_DATA_ROOT"); root && *root) return std::filesystem::path(root) / path;
  return path;
}

/// Accepts a plain config document or a manifest holding a config snapshot.
inline json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  auto j = load_json_file(resolve(path));
  if (j.is_object() && j.value("format", "") == kManifestFormat) return j.at("config");
  return j;
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json seeds = json::object();
  std::vector<std::string> inputs;
  std::vector<std::filesystem::path> outputs;
  std::chrono::steady_clock::time_point begin = std::chrono::steady_clock::now();

  /// Written beside the outputs; output hashes let two runs be compared.
  void write(const std::filesystem::path& path) const {
    json j;
    j["format"] = kManifestFormat;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    json outs = json::object();
    for (const auto& o : outputs) {
      const auto bytes = read_text_file(o);
      outs[std::filesystem::relative(o, path.parent_path()).generic_string()] = {{"bytes", bytes.size()},
                                                                                  {"fnv1a64", hex64(fnv1a(bytes))}};
    }
    j["outputs"] = outs;
    j["version"] = kToolVersion;
    const auto t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ts;
    ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    j["finished_at"] = ts.str();
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
    write_text_file_atomic(path, j.dump(2) + "\n");
  }
};

inline std::string scene_file_name(int i) {
  std::ostringstream os;
  os << "scene_" << std::setw(5) << std::setfill('0') << i << ".json";
  return os.str();
}

inline void fill_channels(HeadConfig& head, const std::vector<Scene>& scenes) {
  require(!scenes.empty(), "no scenes found");
  if (head.in_channels == 0) head.in_channels = scenes[0].features.num_channels();
}

inline std::vector<std::filesystem::path> save_scenes(const std::filesystem::path& dir, const std::vector<Scene>& scenes) {
  std::vector<std::filesystem::path> out;
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    out.push_back(dir / scene_file_name(static_cast<int>(i)));
    save_scene(out.back(), scenes[i]);
  }
  return out;
}

inline std::atomic<bool>& stop_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void on_signal(int) { stop_flag() = true; }

}  // namespace cli_detail

/// Train-command config: {"train": {...}, "head": {...}, "init_seed": n}.
struct TrainRunConfig {
  TrainConfig train;
  HeadConfig head;
  std::uint64_t init_seed = 0;
};

inline json train_run_config_to_json(const TrainRunConfig& c) {
  return {{"train", train_config_to_json(c.train)}, {"head", head_config_to_json(c.head)}, {"init_seed", c.init_seed}};
}

inline TrainRunConfig train_run_config_from_json(const json& j) {
  TrainRunConfig c;
  detail::ConfigReader r(j, "train run config");
  if (const json* t = r.sub("train")) c.train = train_config_from_json(*t);
  if (const json* h = r.sub("head")) c.head = head_config_from_partial_json(*h);
  r.get("init_seed", c.init_seed);
  r.finish();
  return c;
}

inline int cmd_gen_world(const std::string& config, int count, std::optional<std::uint64_t> seed,
                         const std::string& out_dir, bool missions, std::ostream& out,
                         const std::vector<std::string>& argv) {
  auto wc = world_config_from_json(cli_detail::read_config(config));
  if (seed) wc.seed = *seed;
  require(count >= 1, "count must be at least 1");
  const auto dir = cli_detail::resolve(out_dir);
  EvalConfig ec;
  cli_detail::Manifest m;
  m.command = "gen-world";
  m.argv = argv;
  m.config = world_config_to_json(wc);
  m.seeds = {{"world_seed", wc.seed}, {"scene_seeds", {0, count - 1}}};
  if (!config.empty()) m.inputs.push_back(config);
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    auto scene = gen_scene(wc, static_cast<std::uint64_t>(i));
    const auto path = dir / cli_detail::scene_file_name(i);
    save_scene(path, scene);
    m.outputs.push_back(path);
    if (missions) {
      const auto mp = dir / "missions" / (scene.id + ".json");
      write_text_file_atomic(mp, mission_to_json(make_mission(scene, ec.mission_spacing)).dump() + "\n");
      m.outputs.push_back(mp);
    }
  }
  m.write(dir / "manifest.json");
  out << "wrote " << count << " scenes to " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_validate_scene(const std::vector<std::string>& paths, std::ostream& out, std::ostream& err) {
  int bad = 0;
  int good = 0;
  for (const auto& p : paths) {
    const auto path = cli_detail::resolve(p);
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
      for (const auto& e : std::filesystem::directory_iterator(path)) {
        if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json") {
          files.push_back(e.path());
        }
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(path);
    }
    for (const auto& f : files) {
      try {
        const auto s = load_scene(f);
        ++good;
        out << "ok\t" << s.id << "\t" << f.string() << "\n";
      } catch (const std::exception& e) {
        ++bad;
        err << "invalid\t" << f.string() << "\t" << e.what() << "\n";
      }
    }
  }
  out << good << " valid, " << bad << " invalid\n";
  return bad == 0 ? kExitOk : kExitValidation;
}

struct TrainOverrides {
  std::optional<double> alpha;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> learning_rate;
  std::string head;
};

inline int cmd_train(const std::string& scenes_dir, const std::string& config, const std::string& out_path,
                     const TrainOverrides& o, std::ostream& out, const std::vector<std::string>& argv) {
  auto rc = train_run_config_from_json(cli_detail::read_config(config));
  if (o.alpha) rc.train.alpha = *o.alpha;
  if (o.epochs) rc.train.epochs = *o.epochs;
  if (o.seed) {
    rc.train.seed = *o.seed;
    rc.init_seed = *o.seed;
  }
  if (o.learning_rate) rc.train.learning_rate = *o.learning_rate;
  if (!o.head.empty()) rc.head.kind = parse_head_kind(o.head);
  rc.train.validate();
  const auto scenes = load_scene_dir(cli_detail::resolve(scenes_dir));
  cli_detail::fill_channels(rc.head, scenes);
  validate_head_config(rc.head);
  int labeled = 0;
  for (const auto& s : scenes) labeled += !s.counterfactuals().empty();
  require(rc.train.alpha == 0.0 || labeled > 0,
          "alpha = " + std::to_string(rc.train.alpha) + " needs scenes with counterfactual labels; none found in " +
              scenes_dir);

  const auto ckpt = cli_detail::resolve(out_path);
  const auto res = train(scenes, init_params(rc.head, rc.init_seed), rc.train, [&](const EpochStats& e) {
    out << "epoch " << e.epoch << " loss " << e.loss << "\n";
  });
  save_checkpoint(ckpt, res.params);
  auto log_path = ckpt;
  log_path += ".log.tsv";
  write_text_file_atomic(log_path, format_training_log(res.epochs));

  cli_detail::Manifest m;
  m.command = "train";
  m.argv = argv;
  m.config = train_run_config_to_json(rc);
  m.seeds = {{"train_seed", rc.train.seed}, {"init_seed", rc.init_seed}};
  m.inputs = {scenes_dir};
  if (!config.empty()) m.inputs.push_back(config);
  m.outputs = {ckpt, log_path};
  auto mpath = ckpt;
  mpath += ".manifest.json";
  m.write(mpath);
  out << "wrote " << ckpt.string() << " (" << scenes.size() << " scenes, " << labeled << " with counterfactuals)\n";
  return kExitOk;
}

struct LoopRunOptions {
  std::string annotator;
  int port = 8765;
  std::string host = "127.0.0.1";
  std::string ui_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_rounds;
  int poll_ms = 500;
};

inline int cmd_loop(const std::string& scenes_dir, const std::string& config, const std::string& out_dir,
                    const LoopRunOptions& o, std::ostream& out, const std::vector<std::string>& argv) {
  auto cfg = loop_config_from_json(cli_detail::read_config(config));
  if (!o.annotator.empty()) cfg.annotator = parse_annotator(o.annotator);
  if (o.seed) cfg.seed = *o.seed;
  if (o.max_rounds) cfg.max_rounds = *o.max_rounds;
  const auto scenes = load_scene_dir(cli_detail::resolve(scenes_dir));
  cli_detail::fill_channels(cfg.head, scenes);
  cfg.validate();
  const auto dir = cli_detail::resolve(out_dir);
  std::filesystem::create_directories(dir);

  LoopOptions lo;
  lo.state_dir = dir / "state";
  lo.log = [&](const std::string& line) { out << line << "\n" << std::flush; };

  LoopResult res;
  if (cfg.annotator == AnnotatorKind::oracle) {
    res = run_active_loop(scenes, cfg, make_oracle_annotator(cfg.oracle_margin), lo);
  } else {
    SessionStore store(dir / "sessions");
    AnnotationServer server(store, scenes);
    if (!o.ui_dir.empty()) server.mount_ui(cli_detail::resolve(o.ui_dir));
    const int port = server.start(o.host, o.port);
    out << "annotation UI at http://" << o.host << ":" << port << "/\n" << std::flush;
    ServiceAnnotatorOptions so;
    so.poll = std::chrono::milliseconds(o.poll_ms);
    so.progress = [&](int round, int done, int total) {
      out << "round " << round << ": " << done << "/" << total << " sessions complete\n" << std::flush;
    };
    res = run_active_loop(scenes, cfg, make_service_annotator(store, so), lo);
    server.stop();
  }

  cli_detail::Manifest m;
  m.command = "loop";
  m.argv = argv;
  m.config = loop_config_to_json(cfg);
  m.seeds = {{"init_seed", cfg.seed}, {"cfgen_seed", cfg.cfgen.seed}, {"phase1_seed", cfg.phase1.seed},
             {"phase3_seed", cfg.phase3.seed}};
  m.inputs = {scenes_dir};
  if (!config.empty()) m.inputs.push_back(config);
  const auto ckpt = dir / "reward.ckpt";
  save_checkpoint(ckpt, res.params);
  write_text_file_atomic(dir / "loop_report.json", loop_report_to_json(res.report).dump(2) + "\n");
  write_text_file_atomic(dir / "loop_summary.tsv", loop_summary_tsv(res.report));
  m.outputs = {ckpt, dir / "loop_report.json", dir / "loop_summary.tsv"};
  for (const auto& p : cli_detail::save_scenes(dir / "scenes", res.scenes)) m.outputs.push_back(p);
  m.write(dir / "manifest.json");
  out << loop_summary_tsv(res.report) << "stop: " << res.report.stop_reason << "\n";
  return kExitOk;
}

struct ServeOptions {
  std::string sessions_dir;
  std::string scenes_dir;
  std::string ui_dir;
  std::string host = "127.0.0.1";
  int port = 8765;
  bool create = false;
  std::string export_dir;
  std::uint64_t cfgen_seed = 0;
};

inline int cmd_annotate_serve(const ServeOptions& o, std::ostream& out, const std::vector<std::string>& argv) {
  SessionStore store(cli_detail::resolve(o.sessions_dir));
  std::vector<Scene> scenes;
  if (!o.scenes_dir.empty()) scenes = load_scene_dir(cli_detail::resolve(o.scenes_dir));

  if (o.create) {
    require(!scenes.empty(), "--create needs --scenes");
    std::vector<Scene> fresh;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      auto s = scenes[i];
      if (store.exists(session_id_for(s.id))) continue;
      if (!s.candidates) {
        CfGenConfig cg;
        cg.seed = candidate_seed(o.cfgen_seed, 0, i);
        s.candidates = generate_candidates(s.expert, cg, s.height(), s.width());
      }
      fresh.push_back(std::move(s));
    }
    const auto ids = store.create_sessions(fresh);
    out << "created " << ids.size() << " sessions in " << store.dir().string() << "\n";
  }

  if (!o.export_dir.empty()) {
    const auto bundle = store.export_dataset(scenes);
    const auto dir = cli_detail::resolve(o.export_dir);
    cli_detail::Manifest m;
    m.command = "annotate-serve --export";
    m.argv = argv;
    m.inputs = {o.sessions_dir, o.scenes_dir};
    m.outputs = cli_detail::save_scenes(dir, bundle.scenes);
    m.config = {{"total_scenes", bundle.total_scenes},
                {"annotated_scenes", bundle.annotated_scenes},
                {"counterfactual_count", bundle.counterfactual_count}};
    m.write(dir / "manifest.json");
    out << "exported " << bundle.total_scenes << " scenes (" << bundle.annotated_scenes << " annotated, "
        << bundle.counterfactual_count << " counterfactuals) to " << dir.string() << "\n";
    return kExitOk;
  }

  AnnotationServer server(store, scenes);
  if (!o.ui_dir.empty()) server.mount_ui(cli_detail::resolve(o.ui_dir));
  const int port = server.start(o.host, o.port);
  out << "annotation service at http://" << o.host << ":" << port << "/api/v1/sessions\n" << std::flush;
  cli_detail::stop_flag() = false;
  std::signal(SIGINT, cli_detail::on_signal);
  std::signal(SIGTERM, cli_detail::on_signal);
  while (!cli_detail::stop_flag()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  out << "stopped\n";
  return kExitOk;
}

struct EvalOptions {
  std::string missions_dir;
  std::string checkpoint;
  bool oracle = false;
  std::string config;
  std::string out_dir;
  bool trace = false;
};

inline int cmd_evaluate(const EvalOptions& o, std::ostream& out, const std::vector<std::string>& argv) {
  require(o.oracle != !o.checkpoint.empty(), "give exactly one of --checkpoint or --oracle");
  const auto ec = eval_config_from_json(cli_detail::read_config(o.config));
  const auto dir = cli_detail::resolve(o.missions_dir);
  const auto scenes = load_scene_dir(dir);
  std::optional<RewardParams> params;
  if (!o.oracle) params = load_checkpoint(cli_detail::resolve(o.checkpoint));

  auto sim = ec.sim;
  sim.record_trace = o.trace;
  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::vector<MissionLog> logs;
  json per = json::array();
  const auto out_path = o.out_dir.empty() ? std::filesystem::path() : cli_detail::resolve(o.out_dir);
  cli_detail::Manifest m;
  for (const auto& s : scenes) {
    const auto mp = dir / "missions" / (s.id + ".json");
    const auto mission =
        std::filesystem::exists(mp) ? mission_from_json(load_json_file(mp)) : make_mission(s, ec.mission_spacing);
    if (params && params->config.in_channels != s.features.num_channels()) {
      throw ValidationError("checkpoint expects " + std::to_string(params->config.in_channels) +
                            " feature channels but scene '" + s.id + "' has " +
                            std::to_string(s.features.num_channels()));
    }
    const auto reward = params ? forward(s.features, *params) : oracle_reward_field(s);
    auto log = simulate_mission(s, reward, mission, sim);
    const auto metrics = compute_metrics(log);
    rows.push_back({s.id, metrics});
    per.push_back({{"mission", s.id},
                   {"AST", metrics.ast},
                   {"%S", metrics.pct_subgoals},
                   {"NIR", metrics.nir},
                   {"Dist", metrics.distance},
                   {"TotalInt", metrics.total_interventions},
                   {"timed_out", metrics.timed_out}});
    if (o.trace && !out_path.empty()) {
      const auto tp = out_path / "traces" / (s.id + ".tsv");
      write_text_file_atomic(tp, trace_tsv(log));
      m.outputs.push_back(tp);
    }
    log.trace.clear();
    logs.push_back(std::move(log));
  }
  const auto agg = aggregate_metrics(logs);
  rows.push_back({"all", agg});
  const auto table = metrics_table(rows);
  out << table;
  if (!out_path.empty()) {
    json j;
    j["missions"] = per;
    j["aggregate"] = {{"AST", agg.ast},
                      {"%S", agg.pct_subgoals},
                      {"NIR", agg.nir},
                      {"Dist", agg.distance},
                      {"TotalInt", agg.total_interventions},
                      {"timed_out", agg.timed_out}};
    write_text_file_atomic(out_path / "metrics.tsv", table);
    write_text_file_atomic(out_path / "metrics.json", j.dump(2) + "\n");
    m.command = "evaluate";
    m.argv = argv;
    m.config = eval_config_to_json(ec);
    m.inputs = {o.missions_dir};
    if (!o.checkpoint.empty()) m.inputs.push_back(o.checkpoint);
    m.outputs.push_back(out_path / "metrics.tsv");
    m.outputs.push_back(out_path / "metrics.json");
    m.write(out_path / "manifest.json");
  }
  return kExitOk;
}

/// Parses and runs one command; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"cfirl: counterfactual inverse reinforcement learning for BEV navigation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  auto* gen = app.add_subcommand("gen-world", "generate seeded synthetic scenes with expert paths");
  std::string gen_config, gen_out;
  int gen_count = 0;
  std::optional<std::uint64_t> gen_seed;
  bool gen_missions = false;
  gen->add_option("--config", gen_config, "world config (JSON)");
  gen->add_option("--count", gen_count, "number of scenes")->required();
  gen->add_option("--seed", gen_seed, "world seed (overrides the config)");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_flag("--missions", gen_missions, "also write a mission per scene under missions/");

  auto* val = app.add_subcommand("validate-scene", "check scene files or directories");
  std::vector<std::string> val_paths;
  val->add_option("paths", val_paths, "scene files or directories")->required();

  auto* tr = app.add_subcommand("train", "train a reward head on a scene directory");
  std::string tr_scenes, tr_config, tr_out;
  TrainOverrides tro;
  tr->add_option("--scenes", tr_scenes, "scene directory")->required();
  tr->add_option("--config", tr_config, "train config (JSON)");
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--alpha", tro.alpha, "preference weight alpha");
  tr->add_option("--epochs", tro.epochs, "epochs");
  tr->add_option("--seed", tro.seed, "shuffle and initialization seed");
  tr->add_option("--lr", tro.learning_rate, "learning rate");
  tr->add_option("--head", tro.head, "reward head: linear or msfcn");

  auto* lp = app.add_subcommand("loop", "run the active reward learning loop");
  std::string lp_scenes, lp_config, lp_out;
  LoopRunOptions lpo;
  lp->add_option("--scenes", lp_scenes, "scene directory")->required();
  lp->add_option("--config", lp_config, "loop config (JSON)");
  lp->add_option("--out", lp_out, "output directory (also holds resumable state)")->required();
  lp->add_option("--annotator", lpo.annotator, "oracle or human");
  lp->add_option("--port", lpo.port, "annotation service port (human mode)");
  lp->add_option("--host", lpo.host, "annotation service host (human mode)");
  lp->add_option("--ui", lpo.ui_dir, "directory with the built annotation UI");
  lp->add_option("--seed", lpo.seed, "reward initialization seed");
  lp->add_option("--max-rounds", lpo.max_rounds, "maximum phase II/III rounds");
  lp->add_option("--poll-ms", lpo.poll_ms, "session polling interval (human mode)");

  auto* sv = app.add_subcommand("annotate-serve", "serve annotation sessions over HTTP, or export them");
  ServeOptions svo;
  sv->add_option("--sessions", svo.sessions_dir, "session directory")->required();
  sv->add_option("--scenes", svo.scenes_dir, "scene directory");
  sv->add_option("--ui", svo.ui_dir, "directory with the built annotation UI");
  sv->add_option("--host", svo.host, "bind address");
  sv->add_option("--port", svo.port, "port (0 picks a free one)");
  sv->add_flag("--create", svo.create, "create sessions for the scenes, generating candidates when missing");
  sv->add_option("--cfgen-seed", svo.cfgen_seed, "candidate seed used by --create");
  sv->add_option("--export", svo.export_dir, "write the labeled dataset to this directory and exit");

  auto* ev = app.add_subcommand("evaluate", "simulate missions and report AST, %S, NIR");
  EvalOptions evo;
  ev->add_option("--missions", evo.missions_dir, "scene directory with optional missions/")->required();
  ev->add_option("--checkpoint", evo.checkpoint, "reward checkpoint");
  ev->add_flag("--oracle", evo.oracle, "use the negated oracle cost as reward");
  ev->add_option("--config", evo.config, "evaluation config (JSON)");
  ev->add_option("--out", evo.out_dir, "directory for metrics.tsv, metrics.json and traces");
  ev->add_flag("--trace", evo.trace, "write per-tick traces");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_world(gen_config, gen_count, gen_seed, gen_out, gen_missions, out, args);
    if (*val) return cmd_validate_scene(val_paths, out, err);
    if (*tr) return cmd_train(tr_scenes, tr_config, tr_out, tro, out, args);
    if (*lp) return cmd_loop(lp_scenes, lp_config, lp_out, lpo, out, args);
    if (*sv) return cmd_annotate_serve(svo, out, args);
    if (*ev) return cmd_evaluate(evo, out, args);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConflictError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NotFoundError& e) {
    err << "not found: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}

}  // namespace cfirl
