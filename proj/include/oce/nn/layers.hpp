// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "oce/nn/convgru.hpp"
#include "oce/nn/ops.hpp"
#include "oce/nn/tensor.hpp"

namespace oce::nn {

using InitRng = std::mt19937_64;

/// He-normal (variance-scaling, fan-in) fill.
template <typename T>
void variance_scaling_init(Tensor<T>& w, int fan_in, InitRng& rng);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, ConvGeometry geom, bool bias);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& dy);
  void init(InitRng& rng);
  void collect(std::vector<ParamRef<T>>& params);
  const ConvGeometry& geometry() const { return geom_; }

 private:
  std::string name_;
  ConvGeometry geom_;
  bool has_bias_ = false;
  Tensor<T> weight_, weight_grad_, bias_, bias_grad_;
  RowMatrix<T> col_;
  std::array<int, 4> input_shape_{};
};

/// Per-channel batch normalization over (N, H, W) with running moments for inference.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, int channels, T momentum = T(0.1), T eps = T(1e-5));

  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(std::vector<ParamRef<T>>& params);
  void collect_buffers(std::vector<BufferRef<T>>& buffers);
  void collect_norms(std::vector<BatchNorm*>& norms) { norms.push_back(this); }

  /// Weight of the current batch in the running-statistics update.
  void set_momentum(T momentum) { momentum_ = momentum; }
  T momentum() const { return momentum_; }

 private:
  std::string name_;
  T momentum_{}, eps_{};
  Tensor<T> gamma_, gamma_grad_, beta_, beta_grad_, running_mean_, running_var_;
  Tensor<T> normalized_;
  std::vector<T> inv_std_;
};

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// Gradient through ReLU given the ReLU output y.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy);

template <typename T>
class MaxPool2d {
 public:
  explicit MaxPool2d(ConvGeometry geom = ConvGeometry::square(3, 2, 1)) : geom_(geom) {}
  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  ConvGeometry geom_;
  std::array<int, 4> input_shape_{};
  std::vector<std::size_t> argmax_;
};

/// Residual basic block: conv-bn-relu-conv-bn plus (projected) shortcut, then relu.
/// `one_dimensional` selects 1x3 kernels over W; otherwise 3x3.
template <typename T>
class BasicBlock {
 public:
  BasicBlock(const std::string& name, int in_channels, int out_channels, int stride,
             bool one_dimensional);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& dy);
  void init(InitRng& rng);
  void collect(std::vector<ParamRef<T>>& params);
  void collect_buffers(std::vector<BufferRef<T>>& buffers);
  void collect_norms(std::vector<BatchNorm<T>*>& norms);

 private:
  Conv2d<T> conv1_, conv2_, proj_;
  BatchNorm<T> bn1_, bn2_, proj_bn_;
  bool has_projection_ = false;
  Tensor<T> hidden_, out_;
};

/// (C, N, H, W) -> (C, N, 1, 1).
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  std::array<int, 4> input_shape_{};
};

/// Dense map over the channel axis: (C_in, N, 1, 1) -> (C_out, N, 1, 1).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& dy);
  void init(InitRng& rng);
  void collect(std::vector<ParamRef<T>>& params);
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  std::string name_;
  Tensor<T> weight_, weight_grad_, bias_, bias_grad_;  // weight (out, in, 1, 1)
  Tensor<T> input_;
};

/// Runs a convGRU cell over the time rows of a (1, N, T, L) batch and returns the
/// final hidden state h_T as (C_hidden, N, 1, L); h_0 = 0.
template <typename T>
class ConvGRUSequence {
 public:
  ConvGRUSequence(std::string name, int hidden_channels, int kernel_width);

  Tensor<T> forward(const Tensor<T>& sequence, bool training);
  /// Backpropagation through time from dL/dh_T.
  void backward(const Tensor<T>& dh_last);
  /// Recurrent banks: orthogonal per kernel tap; input banks: variance scaling.
  void init(InitRng& rng);
  void collect(std::vector<ParamRef<T>>& params);
  ConvGRUCellParams<T>& cell() { return params_; }

 private:
  std::string name_;
  ConvGRUCellParams<T> params_, grads_;
  std::vector<ConvGRUStepCache<T>> steps_;
};

}  // namespace oce::nn
