#pragma once

// Annotation sessions on disk, the local HTTP/JSON API the labeling UI talks
// to, and export of labeled scenes for retraining.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cfirl/active_loop.hpp"
#include "cfirl/errors.hpp"
#include "cfirl/scene.hpp"
#include "cfirl/scene_io.hpp"

// after Eigen: <resolv.h> defines a _res macro that breaks Eigen's headers
#include <httplib.h>

namespace cfirl {

inline constexpr const char* kSessionFormat = "CFIRL-SESSION1";
inline constexpr const char* kExportFormat = "CFIRL-EXPORT1";
inline constexpr const char* kApiVersion = "v1";

enum class SessionStatus { open, complete };

inline std::string to_string(SessionStatus s) { return s == SessionStatus::open ? "open" : "complete"; }

inline SessionStatus parse_session_status(const std::string& name) {
  if (name == "open") return SessionStatus::open;
  if (name == "complete") return SessionStatus::complete;
  throw ValidationError("unknown session status '" + name + "'");
}

/// What an annotator sees: class indices, elevation and the forbidden mask.
struct SessionContext {
  std::vector<std::string> class_names;
  Grid<int> terrain;
  Grid<double> elevation;
  Grid<int> forbidden;

  bool operator==(const SessionContext&) const = default;
};

struct AnnotationSession {
  std::string session_id;
  std::string scene_id;
  SessionContext context;
  CellState start;
  CellState goal;
  Trajectory expert;
  CandidateSet candidates;
  std::map<int, bool> labels;
  SessionStatus status = SessionStatus::open;

  bool all_labeled() const {
    for (const auto& c : candidates.candidates) {
      if (!labels.count(c.id)) return false;
    }
    return true;
  }

  void validate() const {
    require(!session_id.empty() && !scene_id.empty(), "session and scene ids must be non-empty");
    for (const auto& [id, flag] : labels) {
      (void)flag;
      bool known = false;
      for (const auto& c : candidates.candidates) known = known || c.id == id;
      require(known, "session '" + session_id + "' labels unknown candidate " + std::to_string(id));
    }
    require(status == SessionStatus::open || all_labeled(),
            "session '" + session_id + "' is complete but not every candidate is labeled");
  }

  bool operator==(const AnnotationSession&) const = default;
};

inline std::string session_id_for(const std::string& scene_id) { return "session_" + scene_id; }

inline AnnotationSession session_from_scene(const Scene& scene) {
  require(scene.candidates.has_value(), "scene '" + scene.id + "' has no candidates to annotate");
  AnnotationSession s;
  s.session_id = session_id_for(scene.id);
  s.scene_id = scene.id;
  const OracleView view(scene);
  for (const auto& c : scene.oracle.classes) s.context.class_names.push_back(c.name);
  s.context.terrain = scene.terrain;
  s.context.elevation = view.elevation();
  s.context.forbidden = Grid<int>(scene.height(), scene.width(), 0);
  for (int r = 0; r < scene.height(); ++r) {
    for (int c = 0; c < scene.width(); ++c) s.context.forbidden(r, c) = view.forbidden({r, c}) ? 1 : 0;
  }
  s.start = scene.start;
  s.goal = scene.goal;
  s.expert = scene.expert;
  s.candidates = *scene.candidates;
  return s;
}

namespace detail {

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  require(j.is_object(), what + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    require(ok, what + " has unknown field '" + key + "'");
  }
}

template <typename T>
json grid_to_json(const Grid<T>& g) {
  json rows = json::array();
  for (int r = 0; r < g.height(); ++r) {
    json row = json::array();
    for (int c = 0; c < g.width(); ++c) row.push_back(g(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T>
Grid<T> grid_from_json(const json& j, const std::string& what) {
  require(j.is_array() && !j.empty() && j[0].is_array(), what + " must be a non-empty array of rows");
  const int h = static_cast<int>(j.size());
  const int w = static_cast<int>(j[0].size());
  Grid<T> g(h, w);
  for (int r = 0; r < h; ++r) {
    require(j[r].is_array() && static_cast<int>(j[r].size()) == w, what + " rows must have equal length");
    for (int c = 0; c < w; ++c) {
      require(j[r][c].is_number(), what + " entries must be numbers");
      g(r, c) = j[r][c].get<T>();
    }
  }
  return g;
}

/// Atomic replace with fsync of the file and its directory, so a killed
/// writer leaves either the old or the new document.
inline void write_durable(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError("cannot write " + tmp.string());
  std::size_t done = 0;
  while (done < text.size()) {
    const auto n = ::write(fd, text.data() + done, text.size() - done);
    if (n <= 0) {
      ::close(fd);
      throw IoError("failed writing " + tmp.string());
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw IoError("fsync failed on " + tmp.string());
  }
  ::close(fd);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
  const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

}  // namespace detail

inline json session_to_json(const AnnotationSession& s) {
  json j;
  j["format"] = kSessionFormat;
  j["session_id"] = s.session_id;
  j["scene_id"] = s.scene_id;
  j["status"] = to_string(s.status);
  j["context"] = {{"class_names", s.context.class_names},
                  {"terrain", detail::grid_to_json(s.context.terrain)},
                  {"elevation", detail::grid_to_json(s.context.elevation)},
                  {"forbidden", detail::grid_to_json(s.context.forbidden)}};
  j["start"] = cell_to_json(s.start);
  j["goal"] = cell_to_json(s.goal);
  j["expert"] = states_to_json(s.expert);
  j["candidates"] = candidates_to_json(s.candidates);
  j["labels"] = labels_to_json(s.labels);
  return j;
}

inline AnnotationSession session_from_json(const json& j) {
  detail::only_keys(j, {"format", "session_id", "scene_id", "status", "context", "start", "goal", "expert",
                        "candidates", "labels"},
                    "session document");
  require(j.value("format", "") == kSessionFormat, "not a " + std::string(kSessionFormat) + " document");
  AnnotationSession s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    s.scene_id = j.at("scene_id").get<std::string>();
    s.status = parse_session_status(j.at("status").get<std::string>());
    const auto& ctx = j.at("context");
    detail::only_keys(ctx, {"class_names", "terrain", "elevation", "forbidden"}, "session context");
    s.context.class_names = ctx.at("class_names").get<std::vector<std::string>>();
    s.context.terrain = detail::grid_from_json<int>(ctx.at("terrain"), "context terrain");
    s.context.elevation = detail::grid_from_json<double>(ctx.at("elevation"), "context elevation");
    s.context.forbidden = detail::grid_from_json<int>(ctx.at("forbidden"), "context forbidden mask");
    s.start = cell_from_json(j.at("start"));
    s.goal = cell_from_json(j.at("goal"));
    s.expert = states_from_json(j.at("expert"), TrajectoryKind::expert);
    s.candidates = candidates_from_json(j.at("candidates"));
    s.labels = labels_from_json(j.at("labels"));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed session document: ") + e.what());
  }
  s.validate();
  return s;
}

struct SessionSummary {
  std::string session_id;
  std::string scene_id;
  SessionStatus status = SessionStatus::open;
};

struct LabelEntry {
  int candidate_id = 0;
  bool counterfactual = false;
};

/// Parses {"labels": [{"candidate_id": int, "counterfactual": bool}, ...]}.
inline std::vector<LabelEntry> parse_label_payload(const std::string& body) {
  const auto j = parse_json_text(body, "label payload");
  detail::only_keys(j, {"labels"}, "label payload");
  require(j.contains("labels") && j["labels"].is_array(), "label payload needs a 'labels' array");
  std::vector<LabelEntry> out;
  for (const auto& e : j["labels"]) {
    detail::only_keys(e, {"candidate_id", "counterfactual"}, "label entry");
    require(e.contains("candidate_id") && e["candidate_id"].is_number_integer(),
            "label entry needs an integer candidate_id");
    require(e.contains("counterfactual") && e["counterfactual"].is_boolean(),
            "label entry needs a boolean counterfactual");
    out.push_back({e["candidate_id"].get<int>(), e["counterfactual"].get<bool>()});
  }
  return out;
}

struct ExportBundle {
  std::vector<Scene> scenes;
  int total_scenes = 0;
  int annotated_scenes = 0;
  int counterfactual_count = 0;
};

inline json export_to_json(const ExportBundle& b) {
  json j;
  j["format"] = kExportFormat;
  j["counts"] = {{"total_scenes", b.total_scenes},
                 {"annotated_scenes", b.annotated_scenes},
                 {"counterfactual_count", b.counterfactual_count}};
  j["scenes"] = json::array();
  for (const auto& s : b.scenes) j["scenes"].push_back(scene_to_json(s));
  return j;
}

inline ExportBundle export_from_json(const json& j) {
  detail::only_keys(j, {"format", "counts", "scenes"}, "export bundle");
  require(j.value("format", "") == kExportFormat, "not a " + std::string(kExportFormat) + " document");
  ExportBundle b;
  try {
    const auto& c = j.at("counts");
    detail::only_keys(c, {"total_scenes", "annotated_scenes", "counterfactual_count"}, "export counts");
    b.total_scenes = c.at("total_scenes").get<int>();
    b.annotated_scenes = c.at("annotated_scenes").get<int>();
    b.counterfactual_count = c.at("counterfactual_count").get<int>();
    for (const auto& s : j.at("scenes")) b.scenes.push_back(scene_from_json(s));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed export bundle: ") + e.what());
  }
  int annotated = 0;
  int cfs = 0;
  for (const auto& s : b.scenes) {
    annotated += !s.labels.empty();
    cfs += static_cast<int>(s.counterfactuals().size());
  }
  require(b.total_scenes == static_cast<int>(b.scenes.size()) && b.annotated_scenes == annotated &&
              b.counterfactual_count == cfs,
          "export bundle counts do not match its scenes");
  return b;
}

/// One JSON document per session in `dir`. Writers to the same session are
/// serialized; reads go to disk so a restarted process sees what survived.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) throw IoError("cannot use session directory " + dir_.string());
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path path_of(const std::string& session_id) const { return dir_ / (session_id + ".json"); }

  bool exists(const std::string& session_id) const { return std::filesystem::exists(path_of(session_id)); }

  std::vector<std::string> create_sessions(const std::vector<Scene>& scenes) {
    std::set<std::string> seen;
    for (const auto& s : scenes) {
      require(seen.insert(s.id).second, "duplicate scene id '" + s.id + "'");
      if (exists(session_id_for(s.id))) throw ConflictError("a session for scene '" + s.id + "' already exists");
    }
    std::vector<std::string> ids;
    for (const auto& s : scenes) {
      auto session = session_from_scene(s);
      std::lock_guard lock(mutex_for(session.session_id));
      detail::write_durable(path_of(session.session_id), session_to_json(session).dump() + "\n");
      ids.push_back(session.session_id);
    }
    return ids;
  }

  AnnotationSession get(const std::string& session_id) const {
    require(valid_id(session_id), "malformed session id '" + session_id + "'");
    const auto p = path_of(session_id);
    if (!std::filesystem::exists(p)) throw NotFoundError("no session '" + session_id + "'");
    return session_from_json(parse_json_text(read_text_file(p), p.string()));
  }

  std::vector<SessionSummary> list() const {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<SessionSummary> out;
    for (const auto& f : files) {
      const auto s = get(f.stem().string());
      out.push_back({s.session_id, s.scene_id, s.status});
    }
    return out;
  }

  std::vector<AnnotationSession> all() const {
    std::vector<AnnotationSession> out;
    for (const auto& s : list()) out.push_back(get(s.session_id));
    return out;
  }

  /// Merges labels; a complete session accepts only an identical resubmission.
  AnnotationSession submit_labels(const std::string& session_id, const std::vector<LabelEntry>& entries) {
    std::lock_guard lock(mutex_for(session_id));
    auto s = get(session_id);
    std::map<int, bool> incoming;
    for (const auto& e : entries) {
      bool known = false;
      for (const auto& c : s.candidates.candidates) known = known || c.id == e.candidate_id;
      require(known, "session '" + session_id + "' has no candidate " + std::to_string(e.candidate_id));
      auto [it, fresh] = incoming.emplace(e.candidate_id, e.counterfactual);
      require(fresh || it->second == e.counterfactual,
              "candidate " + std::to_string(e.candidate_id) + " is labeled twice with different values");
    }
    if (s.status == SessionStatus::complete) {
      for (const auto& [id, flag] : incoming) {
        if (s.labels.at(id) != flag) throw ConflictError("session '" + session_id + "' is already complete");
      }
      return s;
    }
    auto merged = s;
    for (const auto& [id, flag] : incoming) merged.labels[id] = flag;
    if (merged.all_labeled()) merged.status = SessionStatus::complete;
    if (merged == s) return s;
    detail::write_durable(path_of(session_id), session_to_json(merged).dump() + "\n");
    return merged;
  }

  /// Scenes with the labels of complete sessions merged in; other scenes pass
  /// through unchanged. `filter` restricts which sessions count.
  ExportBundle export_dataset(const std::vector<Scene>& scenes,
                              const std::optional<std::set<std::string>>& filter = std::nullopt) const {
    std::map<std::string, AnnotationSession> done;
    for (auto& s : all()) {
      if (s.status != SessionStatus::complete) continue;
      if (filter && !filter->count(s.session_id)) continue;
      done.emplace(s.scene_id, std::move(s));
    }
    if (done.empty()) throw NotFoundError("no complete sessions to export");
    ExportBundle b;
    std::set<std::string> matched;
    for (auto scene : scenes) {
      auto it = done.find(scene.id);
      if (it != done.end()) {
        const auto& s = it->second;
        require(scene.expert.states == s.expert.states && scene.start == s.start && scene.goal == s.goal,
                "session '" + s.session_id + "' does not match scene '" + scene.id + "'");
        scene.candidates = s.candidates;
        scene.labels = s.labels;
        validate_scene(scene);
        matched.insert(scene.id);
        ++b.annotated_scenes;
        b.counterfactual_count += static_cast<int>(scene.counterfactuals().size());
      }
      b.scenes.push_back(std::move(scene));
    }
    for (const auto& [id, s] : done) {
      require(matched.count(id), "session '" + s.session_id + "' refers to unknown scene '" + id + "'");
    }
    b.total_scenes = static_cast<int>(b.scenes.size());
    return b;
  }

 private:
  static bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 200) return false;
    for (char c : id) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    }
    return id.find("..") == std::string::npos;
  }

  std::mutex& mutex_for(const std::string& id) {
    std::lock_guard lock(table_mutex_);
    auto& m = locks_[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  std::filesystem::path dir_;
  std::mutex table_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

/// Local HTTP front end over a SessionStore.
class AnnotationServer {
 public:
  AnnotationServer(SessionStore& store, std::vector<Scene> scenes) : store_(store), scenes_(std::move(scenes)) {
    routes();
  }
  ~AnnotationServer() { stop(); }
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Static files (the labeling UI) served under "/".
  void mount_ui(const std::filesystem::path& dir) {
    if (!server_.set_mount_point("/", dir.string())) throw IoError("cannot serve UI from " + dir.string());
  }

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw IoError("cannot bind annotation service to " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

  void set_scenes(std::vector<Scene> scenes) {
    std::lock_guard lock(scenes_mutex_);
    scenes_ = std::move(scenes);
  }

 private:
  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, int status, const std::string& msg) {
    reply(res, status, {{"api_version", kApiVersion}, {"error", msg}});
  }

  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const ValidationError& e) {
      fail(res, 400, e.what());
    } catch (const NotFoundError& e) {
      fail(res, 404, e.what());
    } catch (const ConflictError& e) {
      fail(res, 409, e.what());
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
    }
  }

  void routes() {
    server_.Get("/api/v1/sessions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        json list = json::array();
        for (const auto& s : store_.list()) {
          list.push_back({{"id", s.session_id}, {"scene_id", s.scene_id}, {"status", to_string(s.status)}});
        }
        reply(res, 200, {{"api_version", kApiVersion}, {"sessions", list}});
      });
    });
    server_.Get(R"(/api/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto j = session_to_json(store_.get(req.matches[1]));
        j["api_version"] = kApiVersion;
        reply(res, 200, j);
      });
    });
    server_.Post(R"(/api/v1/sessions/([^/]+)/labels)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto s = store_.submit_labels(req.matches[1], parse_label_payload(req.body));
        auto j = session_to_json(s);
        j["api_version"] = kApiVersion;
        reply(res, 200, j);
      });
    });
    server_.Get("/api/v1/export", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] {
        std::lock_guard lock(scenes_mutex_);
        auto j = export_to_json(store_.export_dataset(scenes_));
        j["api_version"] = kApiVersion;
        reply(res, 200, j);
      });
    });
  }

  SessionStore& store_;
  std::mutex scenes_mutex_;
  std::vector<Scene> scenes_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

struct ServiceAnnotatorOptions {
  std::chrono::milliseconds poll{200};
  std::chrono::milliseconds timeout{0};  // 0 waits forever
  std::function<void(int round, int complete, int total)> progress;
};

/// Annotator for the active loop backed by human sessions: creates (or reuses,
/// after a restart) one session per scene and blocks until all are complete.
inline Annotator make_service_annotator(SessionStore& store, ServiceAnnotatorOptions opts = {}) {
  return [&store, opts](const std::vector<Scene>& batch, int round) {
    std::vector<Scene> fresh;
    for (const auto& s : batch) {
      const auto id = session_id_for(s.id);
      if (!store.exists(id)) {
        fresh.push_back(s);
        continue;
      }
      require(store.get(id).candidates == *s.candidates,
              "existing session '" + id + "' holds different candidates than scene '" + s.id + "'");
    }
    store.create_sessions(fresh);
    const auto begin = std::chrono::steady_clock::now();
    int last = -1;
    while (true) {
      std::map<std::string, std::map<int, bool>> out;
      for (const auto& s : batch) {
        const auto session = store.get(session_id_for(s.id));
        if (session.status == SessionStatus::complete) out[s.id] = session.labels;
      }
      const int done = static_cast<int>(out.size());
      if (opts.progress && done != last) opts.progress(round, done, static_cast<int>(batch.size()));
      last = done;
      if (done == static_cast<int>(batch.size())) return out;
      if (opts.timeout.count() > 0 && std::chrono::steady_clock::now() - begin > opts.timeout) {
        throw IoError("annotation round " + std::to_string(round) + " timed out with " + std::to_string(done) +
                      " of " + std::to_string(batch.size()) + " sessions complete");
      }
      std::this_thread::sleep_for(opts.poll);
    }
  };
}

}  // namespace cfirl
