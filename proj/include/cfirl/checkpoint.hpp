#pragma once

// Reward checkpoint container:
//   "CFIRL-RW1" | u32 LE header length | JSON header | float32 LE tensor data
// The header lists head kind, layer widths, seed and every tensor's name and
// shape in storage order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cfirl/errors.hpp"
#include "cfirl/reward_model.hpp"

namespace cfirl {

inline constexpr char kCheckpointMagic[] = "CFIRL-RW1";
inline constexpr std::size_t kCheckpointMagicLen = 9;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

inline nlohmann::json head_config_json(const HeadConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"in_channels", c.in_channels},
          {"prepool", c.prepool},
          {"skip", c.skip},
          {"trunk", c.trunk},
          {"postpool", c.postpool}};
}

inline HeadConfig head_config_from_json(const nlohmann::json& j) {
  HeadConfig c;
  c.kind = parse_head_kind(j.at("kind").get<std::string>());
  c.in_channels = j.at("in_channels").get<int>();
  if (j.contains("prepool")) c.prepool = j.at("prepool").get<std::array<int, 2>>();
  if (j.contains("skip")) c.skip = j.at("skip").get<std::array<int, 2>>();
  if (j.contains("trunk")) c.trunk = j.at("trunk").get<std::array<int, 2>>();
  if (j.contains("postpool")) c.postpool = j.at("postpool").get<int>();
  return c;
}

}  // namespace detail

inline nlohmann::json head_config_to_json(const HeadConfig& c) { return detail::head_config_json(c); }
inline HeadConfig head_config_from_json(const nlohmann::json& j) { return detail::head_config_from_json(j); }

/// Serialises parameters; values are rounded to float32.
inline std::string encode_checkpoint(const RewardParams& params) {
  nlohmann::json header;
  header["format"] = kCheckpointMagic;
  header["head"] = detail::head_config_json(params.config);
  header["seed"] = params.seed;
  header["parameter_count"] = params.parameter_count();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : params.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, kCheckpointMagicLen);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& t : params.tensors) {
    for (double v : t.values) {
      require(std::isfinite(v), "parameter tensor '" + t.name + "' contains a non-finite value");
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

inline RewardParams decode_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kCheckpointMagicLen + 4 || bytes.compare(0, kCheckpointMagicLen, kCheckpointMagic) != 0) {
    throw ValidationError("not a reward checkpoint (missing CFIRL-RW1 header)");
  }
  const std::uint32_t hlen = detail::get_u32(p + kCheckpointMagicLen);
  std::size_t pos = kCheckpointMagicLen + 4;
  if (bytes.size() < pos + hlen) throw ValidationError("reward checkpoint header is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("reward checkpoint header is not valid JSON: ") + e.what());
  }
  pos += hlen;

  RewardParams params;
  try {
    params.config = detail::head_config_from_json(header.at("head"));
    params.seed = header.at("seed").get<std::uint64_t>();
    for (const auto& jt : header.at("tensors")) {
      Tensor t{jt.at("name").get<std::string>(), jt.at("shape").get<std::vector<int>>(), {}};
      std::size_t n = 1;
      for (int d : t.shape) {
        require(d >= 0, "tensor '" + t.name + "' has a negative dimension");
        n *= static_cast<std::size_t>(d);
      }
      if (bytes.size() < pos + 4 * n) throw ValidationError("reward checkpoint data is truncated at '" + t.name + "'");
      t.values.resize(n);
      for (std::size_t i = 0; i < n; ++i, pos += 4) {
        const float f = std::bit_cast<float>(detail::get_u32(p + pos));
        require(std::isfinite(f), "tensor '" + t.name + "' contains a non-finite value");
        t.values[i] = f;
      }
      params.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("reward checkpoint header is malformed: ") + e.what());
  }
  if (pos != bytes.size()) throw ValidationError("reward checkpoint has trailing bytes");

  validate_head_config(params.config);
  const RewardParams shape = init_params(params.config, 0);
  require(shape.tensors.size() == params.tensors.size(), "reward checkpoint tensor list does not match its head");
  for (std::size_t i = 0; i < shape.tensors.size(); ++i) {
    require(shape.tensors[i].name == params.tensors[i].name && shape.tensors[i].shape == params.tensors[i].shape,
            "reward checkpoint tensor '" + params.tensors[i].name + "' does not match its head configuration");
  }
  return params;
}

inline void save_checkpoint(const std::filesystem::path& path, const RewardParams& params) {
  const std::string bytes = encode_checkpoint(params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline RewardParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace cfirl
