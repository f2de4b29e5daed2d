// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oce/errors.hpp"

namespace oce::nn {

/// Dense row-major 4D tensor.
///
/// Activations use the channel-major layout (C, N, H, W): every channel is one
/// contiguous row over the batch and spatial positions, so a convolution is a
/// single GEMM against an im2col matrix. 1D signals use H = 1. Filter banks use
/// (C_out, C_in, KH, KW) and biases (C, 1, 1, 1).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int d0, int d1, int d2, int d3, T fill = T{0})
      : shape_{d0, d1, d2, d3},
        data_(static_cast<std::size_t>(d0) * d1 * d2 * d3, fill) {
    if (d0 < 0 || d1 < 0 || d2 < 0 || d3 < 0) {
      throw ContractViolation("negative tensor dimension");
    }
  }

  const std::array<int, 4>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Elements per leading index (one channel row in activation layout).
  std::size_t row_size() const {
    return static_cast<std::size_t>(shape_[1]) * shape_[2] * shape_[3];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* row(int c) { return data_.data() + c * row_size(); }
  const T* row(int c) const { return data_.data() + c * row_size(); }

  T& operator()(int a, int b, int c, int d) { return data_[offset(a, b, c, d)]; }
  const T& operator()(int a, int b, int c, int d) const { return data_[offset(a, b, c, d)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_string() const {
    return "(" + std::to_string(shape_[0]) + "," + std::to_string(shape_[1]) + "," +
           std::to_string(shape_[2]) + "," + std::to_string(shape_[3]) + ")";
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_[0], shape_[1], shape_[2], shape_[3]);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

 private:
  std::size_t offset(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
  }

  std::array<int, 4> shape_{0, 0, 0, 0};
  // Maximally aligned so vectorized kernels take the same path for every allocation.
  std::vector<T, Eigen::aligned_allocator<T>> data_;
};

/// Named handle onto a trainable tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
};

/// Non-trainable state persisted with a model (batch-norm running moments).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value = nullptr;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ContractViolation(std::string(what) + ": shape " + a.shape_string() + " vs " +
                            b.shape_string());
  }
}

}  // namespace oce::nn
