// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "oce/nn/ops.hpp"
#include "oce/nn/tensor.hpp"

namespace oce::nn {

/// Filter banks and biases of one convolutional GRU cell.
///
/// Recurrent banks (w_hz, w_hr, w_h) map hidden -> hidden channels and the input
/// banks (w_xz, w_xr, w_x) map input -> hidden channels. All six share one odd
/// kernel width and use same-padding, so the hidden state keeps the spatial
/// length of the input. "*" below is 1D cross-correlation:
///
///   z_t  = sigmoid(w_hz * h_{t-1} + w_xz * x_t + b_z)
///   r_t  = sigmoid(w_hr * h_{t-1} + w_xr * x_t + b_r)
///   c_t  = tanh(w_h * (r_t . h_{t-1}) + w_x * x_t + b)
///   h_t  = (1 - z_t) . h_{t-1} + z_t . c_t
template <typename T>
struct ConvGRUCellParams {
  Tensor<T> w_hz, w_xz, w_hr, w_xr, w_h, w_x;  // (C_out, C_in, 1, k)
  Tensor<T> b_z, b_r, b;                       // (C_hidden, 1, 1, 1)

  static ConvGRUCellParams zeros(int hidden_channels, int input_channels, int kernel_width);

  int hidden_channels() const { return w_hz.dim(0); }
  int input_channels() const { return w_xz.dim(1); }
  int kernel_width() const { return w_hz.dim(3); }

  /// Throws ContractViolation unless all banks agree on channels and kernel width.
  void validate() const;

  /// Banks and biases in a fixed order, for iteration in optimizers and tests.
  std::vector<std::pair<std::string, Tensor<T>*>> named();
  std::vector<std::pair<std::string, const Tensor<T>*>> named() const;
};

/// Intermediates of one step, kept for backpropagation.
template <typename T>
struct ConvGRUStepCache {
  Tensor<T> x, h_prev, z, r, candidate, reset_hidden;
  RowMatrix<T> col_x, col_h, col_rh;
};

/// One convGRU update. x is (C_in, N, 1, L), h_prev is (C_hidden, N, 1, L).
template <typename T>
Tensor<T> convgru_cell_step(const Tensor<T>& x, const Tensor<T>& h_prev,
                            const ConvGRUCellParams<T>& params,
                            ConvGRUStepCache<T>* cache = nullptr);

/// Backpropagates dL/dh_t through one step. Parameter gradients accumulate into
/// `grads`; returns dL/dh_{t-1}. When dx is non-null it receives dL/dx_t.
template <typename T>
Tensor<T> convgru_cell_backward(const ConvGRUStepCache<T>& cache,
                                const ConvGRUCellParams<T>& params, const Tensor<T>& dh,
                                ConvGRUCellParams<T>& grads, Tensor<T>* dx = nullptr);

/// Slow oracle: explicit loops over channels, batch, positions and taps, float64.
Tensor<double> reference_convgru_step(const Tensor<double>& x, const Tensor<double>& h_prev,
                                      const ConvGRUCellParams<double>& params);

}  // namespace oce::nn
