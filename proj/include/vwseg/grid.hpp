#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vwseg/error.hpp"

namespace vwseg {

/// Row-major 2D grid indexed as (x, y): x is the column, y the row.
template <class T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{}) : width(w), height(h) {
    if (w < 1 || h < 1) {
      throw Error(ErrorCode::ShapeError, "grid dimensions must be positive");
    }
    data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
  }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return data.size(); }

  bool operator==(const Grid&) const = default;
};

/// Binary mask; any nonzero byte counts as set.
using Mask = Grid<std::uint8_t>;
using Patch = Grid<double>;
using Slice = Grid<std::uint16_t>;

inline std::size_t count_set(const Mask& m) {
  std::size_t n = 0;
  for (auto b : m.data) n += b != 0;
  return n;
}

}  // namespace vwseg
