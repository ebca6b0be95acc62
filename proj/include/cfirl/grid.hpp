#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <string>
#include <vector>

#include "cfirl/errors.hpp"

namespace cfirl {

struct CellState {
  int row = 0;
  int col = 0;

  auto operator<=>(const CellState&) const = default;
};

inline std::string to_string(CellState s) {
  return "(" + std::to_string(s.row) + "," + std::to_string(s.col) + ")";
}

/// Dense row-major 2D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(std::max(height, 0)) * static_cast<std::size_t>(std::max(width, 0)), fill) {
    require(height >= 0 && width >= 0, "grid dimensions must be nonnegative");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }
  bool in_bounds(CellState s) const { return in_bounds(s.row, s.col); }

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }
  T& operator[](CellState s) { return data_[index(s.row, s.col)]; }
  const T& operator[](CellState s) const { return data_[index(s.row, s.col)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool operator==(const Grid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Per-cell scalar reward r(s).
using RewardField = Grid<double>;

inline void require_finite(const RewardField& field, const std::string& what) {
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!std::isfinite(field.data()[i])) {
      const int w = std::max(field.width(), 1);
      throw ValidationError(what + " has a non-finite entry at " +
                            to_string({static_cast<int>(i) / w, static_cast<int>(i) % w}));
    }
  }
}

}  // namespace cfirl
