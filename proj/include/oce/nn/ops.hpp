// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>

#include <Eigen/Core>

#include "oce/nn/tensor.hpp"

namespace oce::nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;

  int out_h(int h) const { return (h + 2 * pad_h - kernel_h) / stride_h + 1; }
  int out_w(int w) const { return (w + 2 * pad_w - kernel_w) / stride_w + 1; }

  /// Same-padded 1D convolution along W with odd kernel width.
  static ConvGeometry same_1d(int kernel, int stride = 1) {
    return {1, kernel, 1, stride, 0, kernel / 2};
  }
  static ConvGeometry square(int kernel, int stride, int pad) {
    return {kernel, kernel, stride, stride, pad, pad};
  }
};

/// Unfolds x (C, N, H, W) into a (C*KH*KW) x (N*Ho*Wo) patch matrix.
template <typename T>
void im2col(const Tensor<T>& x, const ConvGeometry& g, RowMatrix<T>& col);

/// Folds a patch-matrix gradient back onto dx, accumulating. dx must already
/// have the input shape.
template <typename T>
void col2im(const RowMatrix<T>& col, const ConvGeometry& g, Tensor<T>& dx);

/// y = w * x (+ bias). `col` receives the patch matrix for reuse in backward.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                       const ConvGeometry& g, RowMatrix<T>& col);

/// Accumulates dw (and dbias) from the cached patch matrix; when dx is given it is
/// overwritten with the input gradient, shaped like `input_shape`.
template <typename T>
void conv_backward(const RowMatrix<T>& col, const Tensor<T>& w, const Tensor<T>& dy,
                   const ConvGeometry& g, const std::array<int, 4>& input_shape, Tensor<T>& dw,
                   Tensor<T>* dbias, Tensor<T>* dx);

template <typename T>
inline T sigmoid(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

}  // namespace oce::nn
