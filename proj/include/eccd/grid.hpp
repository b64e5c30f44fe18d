#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace eccd {

/// Row-major H x W grid; element (i, j) is data[i * width + j].
template <typename T>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, T fill = T{})
      : height(h), width(w), data(h * w, fill) {}

  std::size_t size() const { return data.size(); }
  T& operator()(std::size_t i, std::size_t j) { return data[i * width + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * width + j]; }
  T& operator[](std::size_t a) { return data[a]; }
  const T& operator[](std::size_t a) const { return data[a]; }

  bool same_shape(std::size_t h, std::size_t w) const { return height == h && width == w; }
  template <typename U>
  bool same_shape(const Grid<U>& o) const { return height == o.height && width == o.width; }

  bool operator==(const Grid&) const = default;
};

/// Intensities in [0, 1].
using Image = Grid<double>;
/// Class indices; binary masks use {0, 1}.
using LabelMap = Grid<std::uint8_t>;

}  // namespace eccd
