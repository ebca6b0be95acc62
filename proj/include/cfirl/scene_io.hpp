#pragma once

// Scene documents (format "CFIRL-SC1"), JSON text:
//
//   format     "CFIRL-SC1"
//   id         scene id
//   height, width, cell_size
//   channels   [{"name", "role"}] in storage order
//   grids      {channel name: row-major float array}
//   terrain    row-major class indices into oracle.classes
//   oracle     {"classes": [{"name","cost","fraction","forbidden"}], "step_penalty", "dynamic_cost"}
//   start, goal  [row, col]
//   expert     [[row, col], ...]
//   candidates optional {"seed", "config": {...}, "items": [{"id","side","states"}]}
//   labels     optional {"<candidate id>": bool}
//
// Forbidden classes write cost null.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cfirl/errors.hpp"
#include "cfirl/scene.hpp"

namespace cfirl {

inline constexpr const char* kSceneFormat = "CFIRL-SC1";

using nlohmann::json;

inline json cell_to_json(CellState s) { return json::array({s.row, s.col}); }

inline CellState cell_from_json(const json& j) {
  require(j.is_array() && j.size() == 2, "cell must be a [row, col] pair");
  return {j.at(0).get<int>(), j.at(1).get<int>()};
}

inline json states_to_json(const Trajectory& t) {
  json a = json::array();
  for (auto s : t.states) a.push_back(cell_to_json(s));
  return a;
}

inline Trajectory states_from_json(const json& j, TrajectoryKind kind) {
  require(j.is_array(), "trajectory must be an array of [row, col] pairs");
  Trajectory t;
  t.kind = kind;
  for (const auto& s : j) t.states.push_back(cell_from_json(s));
  return t;
}

inline json cfgen_config_to_json(const CfGenConfig& c) {
  return {{"num_candidates", c.num_candidates}, {"num_control_points", c.num_control_points},
          {"mu", c.mu},
          {"sigma", c.sigma},
          {"fit", to_string(c.fit)},
          {"seed", c.seed},
          {"max_retries", c.max_retries}};
}

inline CfGenConfig cfgen_config_from_json(const json& j) {
  CfGenConfig c;
  c.num_candidates = j.value("num_candidates", c.num_candidates);
  c.num_control_points = j.value("num_control_points", c.num_control_points);
  c.mu = j.value("mu", c.mu);
  c.sigma = j.value("sigma", c.sigma);
  if (j.contains("fit")) c.fit = parse_fit_mode(j.at("fit").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.max_retries = j.value("max_retries", c.max_retries);
  return c;
}

inline json candidates_to_json(const CandidateSet& set) {
  json items = json::array();
  for (const auto& c : set.candidates) {
    items.push_back({{"id", c.id}, {"side", to_string(c.side)}, {"states", states_to_json(c.trajectory)}});
  }
  return {{"seed", set.seed}, {"config", cfgen_config_to_json(set.config)}, {"items", items}};
}

inline CandidateSet candidates_from_json(const json& j) {
  CandidateSet set;
  set.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("config")) set.config = cfgen_config_from_json(j.at("config"));
  for (const auto& item : j.at("items")) {
    set.candidates.push_back({item.at("id").get<int>(),
                              states_from_json(item.at("states"), TrajectoryKind::candidate),
                              parse_side(item.at("side").get<std::string>())});
  }
  return set;
}

inline json oracle_to_json(const OracleCost& o) {
  json classes = json::array();
  for (const auto& c : o.classes) {
    json jc = {{"name", c.name}, {"fraction", c.fraction}, {"forbidden", c.forbidden}};
    jc["cost"] = c.forbidden ? json(nullptr) : json(c.cost);
    classes.push_back(jc);
  }
  return {{"classes", classes}, {"step_penalty", o.step_penalty}, {"dynamic_cost", o.dynamic_cost}};
}

inline OracleCost oracle_from_json(const json& j) {
  OracleCost o;
  for (const auto& jc : j.at("classes")) {
    TerrainClass c;
    c.name = jc.at("name").get<std::string>();
    c.forbidden = jc.value("forbidden", false);
    c.fraction = jc.value("fraction", 0.0);
    c.cost = jc.contains("cost") && !jc.at("cost").is_null() ? jc.at("cost").get<double>() : 0.0;
    o.classes.push_back(c);
  }
  o.step_penalty = j.value("step_penalty", 0.0);
  o.dynamic_cost = j.value("dynamic_cost", 0.0);
  return o;
}

inline json labels_to_json(const std::map<int, bool>& labels) {
  json out = json::object();
  for (const auto& [id, flag] : labels) out[std::to_string(id)] = flag;
  return out;
}

inline std::map<int, bool> labels_from_json(const json& j) {
  std::map<int, bool> out;
  require(j.is_object(), "labels must be an object of candidate id to boolean");
  for (const auto& [key, value] : j.items()) {
    std::size_t used = 0;
    int id = 0;
    try {
      id = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == key.size() && !key.empty(), "label key '" + key + "' is not a candidate id");
    require(value.is_boolean(), "label for candidate " + key + " must be a boolean");
    out[id] = value.get<bool>();
  }
  return out;
}

inline json scene_to_json(const Scene& s) {
  json j;
  j["format"] = kSceneFormat;
  j["id"] = s.id;
  j["height"] = s.height();
  j["width"] = s.width();
  j["cell_size"] = s.features.cell_size();
  json channels = json::array();
  json grids = json::object();
  const std::size_t plane = static_cast<std::size_t>(s.height()) * s.width();
  for (int c = 0; c < s.features.num_channels(); ++c) {
    const auto& ch = s.features.channels()[c];
    channels.push_back({{"name", ch.name}, {"role", to_string(ch.role)}});
    auto begin = s.features.values().begin() + static_cast<std::ptrdiff_t>(c * plane);
    grids[ch.name] = std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(plane));
  }
  j["channels"] = channels;
  j["grids"] = grids;
  j["terrain"] = s.terrain.data();
  j["oracle"] = oracle_to_json(s.oracle);
  j["start"] = cell_to_json(s.start);
  j["goal"] = cell_to_json(s.goal);
  j["expert"] = states_to_json(s.expert);
  if (s.candidates) j["candidates"] = candidates_to_json(*s.candidates);
  if (!s.labels.empty()) j["labels"] = labels_to_json(s.labels);
  return j;
}

inline Scene scene_from_json(const json& j) {
  Scene s;
  try {
    require(j.value("format", std::string{}) == kSceneFormat, "scene document is not in CFIRL-SC1 format");
    s.id = j.at("id").get<std::string>();
    const int h = j.at("height").get<int>();
    const int w = j.at("width").get<int>();
    std::vector<Channel> channels;
    for (const auto& jc : j.at("channels")) {
      channels.push_back({jc.at("name").get<std::string>(), parse_channel_role(jc.at("role").get<std::string>())});
    }
    s.features = FeatureGrid(h, w, j.at("cell_size").get<double>(), channels);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < static_cast<int>(channels.size()); ++c) {
      const auto& arr = j.at("grids").at(channels[c].name);
      require(arr.is_array() && arr.size() == plane, "grid '" + channels[c].name + "' has the wrong number of values");
      for (std::size_t i = 0; i < plane; ++i) {
        require(arr[i].is_number(), "grid '" + channels[c].name + "' holds a non-numeric value");
        s.features.values()[c * plane + i] = static_cast<float>(arr[i].get<double>());
      }
    }
    const auto& terrain = j.at("terrain");
    require(terrain.is_array() && terrain.size() == plane, "terrain map has the wrong number of values");
    s.terrain = Grid<int>(h, w, 0);
    for (std::size_t i = 0; i < plane; ++i) s.terrain.data()[i] = terrain[i].get<int>();
    s.oracle = oracle_from_json(j.at("oracle"));
    s.start = cell_from_json(j.at("start"));
    s.goal = cell_from_json(j.at("goal"));
    s.expert = states_from_json(j.at("expert"), TrajectoryKind::expert);
    if (j.contains("candidates") && !j.at("candidates").is_null()) s.candidates = candidates_from_json(j.at("candidates"));
    if (j.contains("labels")) s.labels = labels_from_json(j.at("labels"));
  } catch (const json::exception& e) {
    throw ValidationError("malformed scene document" + (s.id.empty() ? std::string{} : " '" + s.id + "'") + ": " +
                          e.what());
  }
  validate_scene(s);
  return s;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file and rename so readers never see a partial file.
inline void write_text_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(what + " is not valid JSON: " + e.what());
  }
}

inline void save_scene(const std::filesystem::path& path, const Scene& scene) {
  write_text_file_atomic(path, scene_to_json(scene).dump() + "\n");
}

inline Scene load_scene(const std::filesystem::path& path) {
  try {
    return scene_from_json(parse_json_text(read_text_file(path), path.string()));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

/// All *.json scene files in a directory, sorted by file name.
inline std::vector<Scene> load_scene_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("scene directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Scene> out;
  for (const auto& p : files) out.push_back(load_scene(p));
  return out;
}

}  // namespace cfirl
