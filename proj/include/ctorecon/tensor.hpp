#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ctorecon {

/// Channel-major stack of 2D planes: data[(c * rows + i) * cols + j].
struct Tensor {
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t channels, std::size_t rows, std::size_t cols, double fill = 0.0)
      : channels(channels), rows(rows), cols(cols), data(channels * rows * cols, fill) {}
  Tensor(std::size_t channels, std::size_t rows, std::size_t cols, std::vector<double> values)
      : channels(channels), rows(rows), cols(cols), data(std::move(values)) {
    if (data.size() != channels * rows * cols) throw std::invalid_argument("Tensor: data size mismatch");
  }

  static Tensor scalar(double v) { return Tensor(1, 1, 1, v); }

  std::size_t plane() const { return rows * cols; }
  std::size_t size() const { return data.size(); }
  double& at(std::size_t c, std::size_t i, std::size_t j) { return data[(c * rows + i) * cols + j]; }
  double at(std::size_t c, std::size_t i, std::size_t j) const { return data[(c * rows + i) * cols + j]; }
  std::span<double> channel(std::size_t c) { return std::span<double>(data).subspan(c * plane(), plane()); }
  std::span<const double> channel(std::size_t c) const { return std::span<const double>(data).subspan(c * plane(), plane()); }
  bool same_shape(const Tensor& o) const { return channels == o.channels && rows == o.rows && cols == o.cols; }
};

}  // namespace ctorecon
