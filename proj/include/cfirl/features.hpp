#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cfirl/errors.hpp"

namespace cfirl {

enum class ChannelRole { static_semantic, dynamic, elevation };

inline std::string to_string(ChannelRole role) {
  switch (role) {
    case ChannelRole::static_semantic: return "static_semantic";
    case ChannelRole::dynamic: return "dynamic";
    case ChannelRole::elevation: return "elevation";
  }
  return "static_semantic";
}

inline ChannelRole parse_channel_role(const std::string& name) {
  if (name == "static_semantic") return ChannelRole::static_semantic;
  if (name == "dynamic") return ChannelRole::dynamic;
  if (name == "elevation") return ChannelRole::elevation;
  throw ValidationError("unknown channel role '" + name + "'");
}

struct Channel {
  std::string name;
  ChannelRole role;

  bool operator==(const Channel&) const = default;
};

/// Structured BEV feature map: static semantic channels, then dynamic
/// channels, then a single elevation channel. Values are stored as 32-bit
/// floats in channel-major, row-major order.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(int height, int width, double cell_size, std::vector<Channel> channels)
      : height_(height), width_(width), cell_size_(cell_size), channels_(std::move(channels)),
        values_(static_cast<std::size_t>(height) * width * channels_.size(), 0.0f) {
    require(height >= 1 && width >= 1, "feature grid needs at least one cell");
    require(cell_size > 0.0, "cell size must be positive");
    check_layout();
  }

  int height() const { return height_; }
  int width() const { return width_; }
  double cell_size() const { return cell_size_; }
  int num_channels() const { return static_cast<int>(channels_.size()); }
  const std::vector<Channel>& channels() const { return channels_; }

  int count(ChannelRole role) const {
    int n = 0;
    for (const auto& c : channels_) n += c.role == role;
    return n;
  }

  int channel_index(const std::string& name) const {
    for (int i = 0; i < num_channels(); ++i) {
      if (channels_[i].name == name) return i;
    }
    throw ValidationError("feature grid has no channel '" + name + "'");
  }

  float& at(int channel, int row, int col) {
    return values_[(static_cast<std::size_t>(channel) * height_ + row) * width_ + col];
  }
  float at(int channel, int row, int col) const {
    return values_[(static_cast<std::size_t>(channel) * height_ + row) * width_ + col];
  }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  void validate() const {
    check_layout();
    require(values_.size() == static_cast<std::size_t>(height_) * width_ * channels_.size(),
            "feature grid value count does not match its dimensions");
    for (float v : values_) require(std::isfinite(v), "feature grid contains a non-finite value");
  }

  bool operator==(const FeatureGrid&) const = default;

 private:
  void check_layout() const {
    require(count(ChannelRole::static_semantic) >= 1, "feature grid needs at least one static semantic channel");
    require(count(ChannelRole::elevation) == 1, "feature grid needs exactly one elevation channel");
    // static..., dynamic..., elevation
    int stage = 0;
    for (const auto& c : channels_) {
      const int s = static_cast<int>(c.role);
      require(s >= stage, "feature channels must be ordered static, dynamic, elevation");
      stage = s;
    }
  }

  int height_ = 0;
  int width_ = 0;
  double cell_size_ = 1.0;
  std::vector<Channel> channels_;
  std::vector<float> values_;
};

}  // namespace cfirl
