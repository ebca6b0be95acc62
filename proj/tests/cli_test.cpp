#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cfirl/cli.hpp"

using namespace cfirl;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("cfirl_cli_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str(const std::string& sub) const { return (path_ / sub).string(); }

 private:
  fs::path path_;
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cfirl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string small_world(const TempDir& d) {
  const auto p = d.str("world.json");
  write_text_file_atomic(p, R"({"height": 16, "width": 16, "seed": 3})");
  return p;
}

std::string gen(const TempDir& d, const std::string& sub, int count = 4) {
  const auto r = cli({"gen-world", "--config", small_world(d), "--count", std::to_string(count), "--out", d.str(sub),
                      "--missions"});
  EXPECT_EQ(r.code, 0) << r.err;
  return d.str(sub);
}

json outputs_of(const fs::path& manifest) { return load_json_file(manifest).at("outputs"); }

}  // namespace

TEST(Cli, GenWorldIsDeterministic) {
  TempDir d("gen_det");
  const auto a = gen(d, "a");
  const auto b = gen(d, "b");
  EXPECT_EQ(outputs_of(fs::path(a) / "manifest.json"), outputs_of(fs::path(b) / "manifest.json"));
  EXPECT_EQ(load_scene_dir(a).size(), 4u);
  EXPECT_TRUE(fs::exists(fs::path(a) / "missions" / "scene_0.json"));
}

TEST(Cli, ManifestReplaysConfig) {
  TempDir d("gen_replay");
  const auto a = gen(d, "a");
  const auto r = cli({"gen-world", "--config", a + "/manifest.json", "--count", "4", "--out", d.str("b"),
                      "--missions"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(outputs_of(fs::path(a) / "manifest.json"), outputs_of(d.path() / "b" / "manifest.json"));
  const auto m = load_json_file(fs::path(a) / "manifest.json");
  for (const char* key : {"command", "argv", "config", "seeds", "inputs", "outputs", "version", "wall_clock_seconds"}) {
    EXPECT_TRUE(m.contains(key)) << key;
  }
}

TEST(Cli, SeedOverrideChangesScenes) {
  TempDir d("gen_seed");
  gen(d, "a", 2);
  ASSERT_EQ(cli({"gen-world", "--config", small_world(d), "--count", "2", "--seed", "99", "--out", d.str("b")}).code,
            0);
  EXPECT_NE(load_scene_dir(d.str("a"))[0].terrain, load_scene_dir(d.str("b"))[0].terrain);
}

TEST(Cli, ValidateSceneFlagsBadFiles) {
  TempDir d("validate");
  const auto dir = gen(d, "w", 2);
  EXPECT_EQ(cli({"validate-scene", dir}).code, 0);
  write_text_file_atomic(fs::path(dir) / "broken.json", "{\"id\": \"x\"}");
  const auto r = cli({"validate-scene", dir});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("broken.json"), std::string::npos);
}

TEST(Cli, TrainWritesLoadableCheckpoint) {
  TempDir d("train");
  const auto dir = gen(d, "w");
  const auto r = cli({"train", "--scenes", dir, "--out", d.str("r.ckpt"), "--epochs", "2", "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto p = load_checkpoint(d.path() / "r.ckpt");
  EXPECT_EQ(p.config.in_channels, load_scene_dir(dir)[0].features.num_channels());
  EXPECT_TRUE(fs::exists(d.path() / "r.ckpt.log.tsv"));
  EXPECT_TRUE(fs::exists(d.path() / "r.ckpt.manifest.json"));
  ASSERT_EQ(cli({"train", "--scenes", dir, "--out", d.str("s.ckpt"), "--epochs", "2", "--seed", "5"}).code, 0);
  EXPECT_EQ(read_text_file(d.path() / "r.ckpt"), read_text_file(d.path() / "s.ckpt"));
}

TEST(Cli, TrainRejectsAlphaWithoutLabels) {
  TempDir d("train_alpha");
  const auto dir = gen(d, "w", 2);
  const auto r = cli({"train", "--scenes", dir, "--out", d.str("r.ckpt"), "--alpha", "0.5"});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("counterfactual"), std::string::npos);
  EXPECT_FALSE(fs::exists(d.path() / "r.ckpt"));
}

TEST(Cli, ConfigErrorsAreValidationErrors) {
  TempDir d("config_err");
  const auto dir = gen(d, "w", 2);
  write_text_file_atomic(d.path() / "bad.json", R"({"train": {"epochz": 3}})");
  auto r = cli({"train", "--scenes", dir, "--config", d.str("bad.json"), "--out", d.str("r.ckpt")});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("epochz"), std::string::npos);
  write_text_file_atomic(d.path() / "neg.json", R"({"train": {"learning_rate": -1}})");
  EXPECT_EQ(cli({"train", "--scenes", dir, "--config", d.str("neg.json"), "--out", d.str("r.ckpt")}).code,
            kExitValidation);
  write_text_file_atomic(d.path() / "syntax.json", "{");
  EXPECT_EQ(cli({"gen-world", "--config", d.str("syntax.json"), "--count", "1", "--out", d.str("x")}).code,
            kExitValidation);
}

TEST(Cli, ExitCodes) {
  TempDir d("exit");
  EXPECT_EQ(cli({}).code, kExitValidation);
  EXPECT_EQ(cli({"bogus"}).code, kExitValidation);
  EXPECT_EQ(cli({"train", "--scenes", d.str("missing"), "--out", d.str("r.ckpt")}).code, kExitIo);
  EXPECT_EQ(cli({"evaluate", "--missions", d.str("missing"), "--oracle"}).code, kExitIo);
  EXPECT_EQ(cli({"--version"}).code, 0);
  EXPECT_EQ(cli({"train", "--help"}).code, 0);
}

TEST(Cli, DataRootResolvesRelativePaths) {
  TempDir d("data_root");
  small_world(d);
  ::setenv("CFIRL_DATA_ROOT", d.path().c_str(), 1);
  const auto r = cli({"gen-world", "--config", "world.json", "--count", "1", "--out", "rel"});
  ::unsetenv("CFIRL_DATA_ROOT");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d.path() / "rel" / "scene_00000.json"));
}

TEST(Cli, EvaluateOracleAndCheckpoint) {
  TempDir d("evaluate");
  const auto dir = gen(d, "w", 3);
  auto r = cli({"evaluate", "--missions", dir, "--oracle", "--out", d.str("ev"), "--trace"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("Method\tAST\t%S\tNIR\tDist\tTotalInt\n", 0), 0u);
  const auto j = load_json_file(d.path() / "ev" / "metrics.json");
  EXPECT_EQ(j.at("missions").size(), 3u);
  EXPECT_TRUE(j.at("aggregate").contains("NIR"));
  EXPECT_TRUE(fs::exists(d.path() / "ev" / "traces" / "scene_0.tsv"));

  ASSERT_EQ(cli({"train", "--scenes", dir, "--out", d.str("r.ckpt"), "--epochs", "2"}).code, 0);
  r = cli({"evaluate", "--missions", dir, "--checkpoint", d.str("r.ckpt")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cli({"evaluate", "--missions", dir, "--checkpoint", d.str("r.ckpt"), "--oracle"}).code,
            kExitValidation);
  EXPECT_EQ(cli({"evaluate", "--missions", dir}).code, kExitValidation);
}

TEST(Cli, EvaluateRejectsChannelMismatch) {
  TempDir d("evaluate_mismatch");
  const auto dir = gen(d, "w", 1);
  auto p = init_params(HeadConfig{HeadKind::linear, 3}, 0);
  save_checkpoint(d.path() / "wrong.ckpt", p);
  const auto r = cli({"evaluate", "--missions", dir, "--checkpoint", d.str("wrong.ckpt")});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("channels"), std::string::npos);
}

TEST(Cli, OracleLoopWritesOutputs) {
  TempDir d("loop");
  const auto dir = gen(d, "w", 4);
  write_text_file_atomic(d.path() / "loop.json",
                         R"({"max_rounds": 1, "phase1": {"epochs": 2}, "phase3": {"epochs": 2}, "seed": 4})");
  const auto r = cli({"loop", "--scenes", dir, "--config", d.str("loop.json"), "--out", d.str("out"),
                      "--annotator", "oracle"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"reward.ckpt", "loop_report.json", "loop_summary.tsv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(d.path() / "out" / f)) << f;
  }
  EXPECT_EQ(load_scene_dir(d.path() / "out" / "scenes").size(), 4u);
  const auto again = cli({"loop", "--scenes", dir, "--config", d.str("loop.json"), "--out", d.str("out2"),
                          "--annotator", "oracle"});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(read_text_file(d.path() / "out" / "reward.ckpt"), read_text_file(d.path() / "out2" / "reward.ckpt"));
}

TEST(Cli, AnnotateCreateAndExport) {
  TempDir d("annotate");
  const auto dir = gen(d, "w", 2);
  auto r = cli({"annotate-serve", "--sessions", d.str("s"), "--scenes", dir, "--create", "--export", d.str("e")});
  EXPECT_EQ(r.code, kExitIo) << r.out << r.err;
  SessionStore store(d.path() / "s");
  ASSERT_EQ(store.list().size(), 2u);
  const auto id = store.list().front().session_id;
  std::vector<LabelEntry> labels;
  for (int i = 0; i < static_cast<int>(store.get(id).candidates.candidates.size()); ++i) labels.push_back({i, i % 2 == 0});
  store.submit_labels(id, labels);
  r = cli({"annotate-serve", "--sessions", d.str("s"), "--scenes", dir, "--export", d.str("e")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto exported = load_scene_dir(d.path() / "e");
  ASSERT_EQ(exported.size(), 2u);
  int labeled = 0;
  for (const auto& s : exported) labeled += !s.labels.empty();
  EXPECT_EQ(labeled, 1);
  // a second --create leaves existing sessions alone
  r = cli({"annotate-serve", "--sessions", d.str("s"), "--scenes", dir, "--create", "--export", d.str("e2")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(store.get(id).status, SessionStatus::complete);
}

TEST(Cli, TrainOnExportedLabels) {
  TempDir d("train_export");
  const auto dir = gen(d, "w", 2);
  ASSERT_EQ(cli({"annotate-serve", "--sessions", d.str("s"), "--scenes", dir, "--create", "--export", d.str("e")})
                .code,
            kExitIo);
  SessionStore store(d.path() / "s");
  for (const auto& summary : store.list()) {
    const auto& id = summary.session_id;
    std::vector<LabelEntry> labels;
    for (int i = 0; i < static_cast<int>(store.get(id).candidates.candidates.size()); ++i) labels.push_back({i, true});
    store.submit_labels(id, labels);
  }
  ASSERT_EQ(cli({"annotate-serve", "--sessions", d.str("s"), "--scenes", dir, "--export", d.str("e")}).code, 0);
  const auto r = cli({"train", "--scenes", d.str("e"), "--out", d.str("r.ckpt"), "--alpha", "0.5", "--epochs", "2"});
  EXPECT_EQ(r.code, 0) << r.err;
}
