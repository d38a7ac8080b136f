#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gansfer/errors.hpp"

namespace gansfer {

/// Dense 2D image, x fastest. Width is the left/right axis.
template <typename T>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool same_shape(const Grid2& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  template <typename U>
  bool same_shape(const Grid2<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Grid2&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Dense 3D volume stored as contiguous axial (z) planes.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  Grid3(int nx, int ny, int nz, T fill = T{})
      : nx_(nx), ny_(ny), nz_(nz),
        data_(static_cast<std::size_t>(nx) * ny * nz, fill) {}

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(nx_) * ny_; }

  T& operator()(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <typename U>
  bool same_shape(const Grid3<U>& other) const {
    return nx_ == other.nx() && ny_ == other.ny() && nz_ == other.nz();
  }

  Grid2<T> plane(int z) const {
    Grid2<T> out(nx_, ny_);
    const auto offset = static_cast<std::size_t>(z) * plane_size();
    for (std::size_t i = 0; i < plane_size(); ++i) out[i] = data_[offset + i];
    return out;
  }
  void set_plane(int z, const Grid2<T>& p) {
    if (p.width() != nx_ || p.height() != ny_)
      throw ShapeMismatch("plane shape does not match volume");
    const auto offset = static_cast<std::size_t>(z) * plane_size();
    for (std::size_t i = 0; i < plane_size(); ++i) data_[offset + i] = p[i];
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool operator==(const Grid3&) const = default;

 private:
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny_ + y) * nx_ + x;
  }

  int nx_ = 0;
  int ny_ = 0;
  int nz_ = 0;
  std::vector<T> data_;
};

using Image = Grid2<float>;
using Mask = Grid2<std::uint8_t>;
using Volume = Grid3<float>;
using MaskVolume = Grid3<std::uint8_t>;

template <typename T>
Grid2<T> flip_lr(const Grid2<T>& g) {
  Grid2<T> out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) out(x, y) = g(g.width() - 1 - x, y);
  return out;
}

template <typename T>
Grid3<T> flip_lr(const Grid3<T>& g) {
  Grid3<T> out(g.nx(), g.ny(), g.nz());
  for (int z = 0; z < g.nz(); ++z)
    for (int y = 0; y < g.ny(); ++y)
      for (int x = 0; x < g.nx(); ++x) out(x, y, z) = g(g.nx() - 1 - x, y, z);
  return out;
}

inline std::size_t count_nonzero(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

inline std::size_t count_nonzero(const MaskVolume& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

}  // namespace gansfer
