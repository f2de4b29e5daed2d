// SPDX-License-Identifier: Apache-2.0
#include "oce/nn/layers.hpp"

#include <cmath>
#include <limits>

#include <Eigen/QR>

namespace oce::nn {

template <typename T>
void variance_scaling_init(Tensor<T>& w, int fan_in, InitRng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : w.values()) v = static_cast<T>(normal(rng));
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, ConvGeometry geom,
                  bool bias)
    : name_(std::move(name)),
      geom_(geom),
      has_bias_(bias),
      weight_(out_channels, in_channels, geom.kernel_h, geom.kernel_w),
      weight_grad_(out_channels, in_channels, geom.kernel_h, geom.kernel_w) {
  if (bias) {
    bias_ = Tensor<T>(out_channels, 1, 1, 1);
    bias_grad_ = bias_;
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, bool /*training*/) {
  input_shape_ = x.shape();
  return conv_forward(x, weight_, has_bias_ ? &bias_ : nullptr, geom_, col_);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx;
  conv_backward(col_, weight_, dy, geom_, input_shape_, weight_grad_,
                has_bias_ ? &bias_grad_ : nullptr, &dx);
  return dx;
}

template <typename T>
void Conv2d<T>::init(InitRng& rng) {
  variance_scaling_init(weight_, weight_.dim(1) * weight_.dim(2) * weight_.dim(3), rng);
  if (has_bias_) bias_.fill(T{0});
}

template <typename T>
void Conv2d<T>::collect(std::vector<ParamRef<T>>& params) {
  params.push_back({name_ + ".weight", &weight_, &weight_grad_});
  if (has_bias_) params.push_back({name_ + ".bias", &bias_, &bias_grad_});
}

// ---------------------------------------------------------------------------
// BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, int channels, T momentum, T eps)
    : name_(std::move(name)),
      momentum_(momentum),
      eps_(eps),
      gamma_(channels, 1, 1, 1, T{1}),
      gamma_grad_(channels, 1, 1, 1),
      beta_(channels, 1, 1, 1),
      beta_grad_(channels, 1, 1, 1),
      running_mean_(channels, 1, 1, 1),
      running_var_(channels, 1, 1, 1, T{1}) {}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, bool training) {
  const int channels = x.dim(0);
  if (channels != gamma_.dim(0)) throw ContractViolation("batchnorm: channel mismatch");
  const std::size_t count = x.row_size();
  Tensor<T> y(x.dim(0), x.dim(1), x.dim(2), x.dim(3));

  if (!training) {
    for (int c = 0; c < channels; ++c) {
      const T scale = gamma_[c] / std::sqrt(running_var_[c] + eps_);
      const T shift = beta_[c] - running_mean_[c] * scale;
      const T* in = x.row(c);
      T* out = y.row(c);
      for (std::size_t i = 0; i < count; ++i) out[i] = in[i] * scale + shift;
    }
    return y;
  }

  normalized_ = y;
  inv_std_.assign(static_cast<std::size_t>(channels), T{0});
  for (int c = 0; c < channels; ++c) {
    const T* in = x.row(c);
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) sum += in[i];
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) sq += (in[i] - mean) * (in[i] - mean);
    const double var = sq / static_cast<double>(count);
    const T inv_std = static_cast<T>(1.0 / std::sqrt(var + eps_));
    inv_std_[static_cast<std::size_t>(c)] = inv_std;

    T* xhat = normalized_.row(c);
    T* out = y.row(c);
    for (std::size_t i = 0; i < count; ++i) {
      xhat[i] = static_cast<T>((in[i] - mean) * inv_std);
      out[i] = gamma_[c] * xhat[i] + beta_[c];
    }
    // running statistics track the same (biased) variance used to normalize
    running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
    running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * var);
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& dy) {
  require_same_shape(dy, normalized_, "batchnorm backward");
  const int channels = dy.dim(0);
  const std::size_t count = dy.row_size();
  Tensor<T> dx(dy.dim(0), dy.dim(1), dy.dim(2), dy.dim(3));
  for (int c = 0; c < channels; ++c) {
    const T* g = dy.row(c);
    const T* xhat = normalized_.row(c);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      sum_g += g[i];
      sum_gx += static_cast<double>(g[i]) * xhat[i];
    }
    beta_grad_[c] += static_cast<T>(sum_g);
    gamma_grad_[c] += static_cast<T>(sum_gx);
    const double n = static_cast<double>(count);
    const double scale = gamma_[c] * inv_std_[static_cast<std::size_t>(c)] / n;
    T* out = dx.row(c);
    for (std::size_t i = 0; i < count; ++i) {
      out[i] = static_cast<T>(scale * (n * g[i] - sum_g - xhat[i] * sum_gx));
    }
  }
  return dx;
}

template <typename T>
void BatchNorm<T>::collect(std::vector<ParamRef<T>>& params) {
  params.push_back({name_ + ".gamma", &gamma_, &gamma_grad_});
  params.push_back({name_ + ".beta", &beta_, &beta_grad_});
}

template <typename T>
void BatchNorm<T>::collect_buffers(std::vector<BufferRef<T>>& buffers) {
  buffers.push_back({name_ + ".running_mean", &running_mean_});
  buffers.push_back({name_ + ".running_var", &running_var_});
}

// ---------------------------------------------------------------------------
// ReLU

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.values()) v = v < T{0} ? T{0} : v;  // NaN passes through
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  require_same_shape(y, dy, "relu backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (y[i] <= T{0}) dx[i] = T{0};
  }
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPool2d

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, bool /*training*/) {
  input_shape_ = x.shape();
  const int channels = x.dim(0), batch = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int out_h = geom_.out_h(height), out_w = geom_.out_w(width);
  Tensor<T> y(channels, batch, out_h, out_w);
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (int c = 0; c < channels; ++c) {
    for (int n = 0; n < batch; ++n) {
      for (int oh = 0; oh < out_h; ++oh) {
        for (int ow = 0; ow < out_w; ++ow, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = 0;
          for (int ki = 0; ki < geom_.kernel_h; ++ki) {
            const int ih = oh * geom_.stride_h - geom_.pad_h + ki;
            if (ih < 0 || ih >= height) continue;
            for (int kj = 0; kj < geom_.kernel_w; ++kj) {
              const int iw = ow * geom_.stride_w - geom_.pad_w + kj;
              if (iw < 0 || iw >= width) continue;
              const std::size_t idx =
                  ((static_cast<std::size_t>(c) * batch + n) * height + ih) * width + iw;
              if (x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          }
          y[o] = best;
          argmax_[o] = best_idx;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(input_shape_[0], input_shape_[1], input_shape_[2], input_shape_[3]);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------------------
// BasicBlock

namespace {

ConvGeometry block_conv(bool one_dimensional, int kernel, int stride) {
  if (one_dimensional) return ConvGeometry::same_1d(kernel, stride);
  return ConvGeometry::square(kernel, stride, kernel / 2);
}

}  // namespace

template <typename T>
BasicBlock<T>::BasicBlock(const std::string& name, int in_channels, int out_channels, int stride,
                          bool one_dimensional)
    : conv1_(name + ".conv1", in_channels, out_channels, block_conv(one_dimensional, 3, stride),
             false),
      conv2_(name + ".conv2", out_channels, out_channels, block_conv(one_dimensional, 3, 1),
             false),
      bn1_(name + ".bn1", out_channels),
      bn2_(name + ".bn2", out_channels),
      has_projection_(stride != 1 || in_channels != out_channels) {
  if (has_projection_) {
    proj_ = Conv2d<T>(name + ".proj", in_channels, out_channels,
                      block_conv(one_dimensional, 1, stride), false);
    proj_bn_ = BatchNorm<T>(name + ".proj_bn", out_channels);
  }
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x, bool training) {
  hidden_ = relu_forward(bn1_.forward(conv1_.forward(x, training), training));
  Tensor<T> main = bn2_.forward(conv2_.forward(hidden_, training), training);
  const Tensor<T> shortcut =
      has_projection_ ? proj_bn_.forward(proj_.forward(x, training), training) : x;
  require_same_shape(main, shortcut, "basic block shortcut");
  for (std::size_t i = 0; i < main.size(); ++i) main[i] += shortcut[i];
  out_ = relu_forward(main);
  return out_;
}

template <typename T>
Tensor<T> BasicBlock<T>::backward(const Tensor<T>& dy) {
  const Tensor<T> d_sum = relu_backward(out_, dy);
  Tensor<T> dx = conv1_.backward(bn1_.backward(relu_backward(hidden_, conv2_.backward(bn2_.backward(d_sum)))));
  const Tensor<T> d_short = has_projection_ ? proj_.backward(proj_bn_.backward(d_sum)) : d_sum;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d_short[i];
  return dx;
}

template <typename T>
void BasicBlock<T>::init(InitRng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  if (has_projection_) proj_.init(rng);
}

template <typename T>
void BasicBlock<T>::collect(std::vector<ParamRef<T>>& params) {
  conv1_.collect(params);
  bn1_.collect(params);
  conv2_.collect(params);
  bn2_.collect(params);
  if (has_projection_) {
    proj_.collect(params);
    proj_bn_.collect(params);
  }
}

template <typename T>
void BasicBlock<T>::collect_buffers(std::vector<BufferRef<T>>& buffers) {
  bn1_.collect_buffers(buffers);
  bn2_.collect_buffers(buffers);
  if (has_projection_) proj_bn_.collect_buffers(buffers);
}

template <typename T>
void BasicBlock<T>::collect_norms(std::vector<BatchNorm<T>*>& norms) {
  bn1_.collect_norms(norms);
  bn2_.collect_norms(norms);
  if (has_projection_) proj_bn_.collect_norms(norms);
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  input_shape_ = x.shape();
  const int channels = x.dim(0), batch = x.dim(1);
  const std::size_t spatial = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y(channels, batch, 1, 1);
  for (int c = 0; c < channels; ++c) {
    for (int n = 0; n < batch; ++n) {
      const T* in = &x(c, n, 0, 0);
      double sum = 0.0;
      for (std::size_t i = 0; i < spatial; ++i) sum += in[i];
      y(c, n, 0, 0) = static_cast<T>(sum / static_cast<double>(spatial));
    }
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(input_shape_[0], input_shape_[1], input_shape_[2], input_shape_[3]);
  const std::size_t spatial = static_cast<std::size_t>(input_shape_[2]) * input_shape_[3];
  const T inv = T{1} / static_cast<T>(spatial);
  for (int c = 0; c < input_shape_[0]; ++c) {
    for (int n = 0; n < input_shape_[1]; ++n) {
      const T g = dy(c, n, 0, 0) * inv;
      T* out = &dx(c, n, 0, 0);
      for (std::size_t i = 0; i < spatial; ++i) out[i] = g;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

template <typename T>
Linear<T>::Linear(std::string name, int in_features, int out_features)
    : name_(std::move(name)),
      weight_(out_features, in_features, 1, 1),
      weight_grad_(out_features, in_features, 1, 1),
      bias_(out_features, 1, 1, 1),
      bias_grad_(out_features, 1, 1, 1) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, bool /*training*/) {
  if (x.dim(0) != weight_.dim(1) || x.dim(2) != 1 || x.dim(3) != 1) {
    throw ContractViolation("linear: input " + x.shape_string() + " vs weight " +
                            weight_.shape_string());
  }
  input_ = x;
  const int out = weight_.dim(0), in = weight_.dim(1), batch = x.dim(1);
  Tensor<T> y(out, batch, 1, 1);
  MatrixMap<T>(y.data(), out, batch).noalias() =
      ConstMatrixMap<T>(weight_.data(), out, in) * ConstMatrixMap<T>(x.data(), in, batch);
  for (int o = 0; o < out; ++o) {
    for (int n = 0; n < batch; ++n) y(o, n, 0, 0) += bias_[o];
  }
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  const int out = weight_.dim(0), in = weight_.dim(1), batch = dy.dim(1);
  ConstMatrixMap<T> g(dy.data(), out, batch);
  MatrixMap<T>(weight_grad_.data(), out, in).noalias() +=
      g * ConstMatrixMap<T>(input_.data(), in, batch).transpose();
  for (int o = 0; o < out; ++o) bias_grad_[o] += g.row(o).sum();
  Tensor<T> dx(in, batch, 1, 1);
  MatrixMap<T>(dx.data(), in, batch).noalias() =
      ConstMatrixMap<T>(weight_.data(), out, in).transpose() * g;
  return dx;
}

template <typename T>
void Linear<T>::init(InitRng& rng) {
  variance_scaling_init(weight_, weight_.dim(1), rng);
  bias_.fill(T{0});
}

template <typename T>
void Linear<T>::collect(std::vector<ParamRef<T>>& params) {
  params.push_back({name_ + ".weight", &weight_, &weight_grad_});
  params.push_back({name_ + ".bias", &bias_, &bias_grad_});
}

// ---------------------------------------------------------------------------
// ConvGRUSequence

template <typename T>
ConvGRUSequence<T>::ConvGRUSequence(std::string name, int hidden_channels, int kernel_width)
    : name_(std::move(name)),
      params_(ConvGRUCellParams<T>::zeros(hidden_channels, 1, kernel_width)),
      grads_(ConvGRUCellParams<T>::zeros(hidden_channels, 1, kernel_width)) {}

template <typename T>
Tensor<T> ConvGRUSequence<T>::forward(const Tensor<T>& sequence, bool training) {
  if (sequence.dim(0) != 1) throw ContractViolation("convgru sequence: expected one channel");
  const int batch = sequence.dim(1), steps = sequence.dim(2), length = sequence.dim(3);
  Tensor<T> h(params_.hidden_channels(), batch, 1, length);
  Tensor<T> x(1, batch, 1, length);
  if (training) steps_.resize(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    for (int n = 0; n < batch; ++n) {
      std::copy_n(&sequence(0, n, t, 0), length, &x(0, n, 0, 0));
    }
    h = convgru_cell_step(x, h, params_,
                          training ? &steps_[static_cast<std::size_t>(t)] : nullptr);
  }
  if (!training) steps_.clear();
  return h;
}

template <typename T>
void ConvGRUSequence<T>::backward(const Tensor<T>& dh_last) {
  if (steps_.empty()) throw ContractViolation("convgru sequence: backward without training forward");
  Tensor<T> dh = dh_last;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    dh = convgru_cell_backward(*it, params_, dh, grads_);
  }
}

template <typename T>
void ConvGRUSequence<T>::init(InitRng& rng) {
  const int hidden = params_.hidden_channels(), k = params_.kernel_width();
  std::normal_distribution<double> normal(0.0, 1.0);
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
  for (Tensor<T>* w : {&params_.w_hz, &params_.w_hr, &params_.w_h}) {
    for (int tap = 0; tap < k; ++tap) {
      Mat a(hidden, hidden);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
      Eigen::HouseholderQR<Mat> qr(a);
      Mat q = qr.householderQ() * Mat::Identity(hidden, hidden);
      // sign fix for a unique (Haar-distributed) factor
      const Mat r = qr.matrixQR().template triangularView<Eigen::Upper>();
      for (int j = 0; j < hidden; ++j) {
        if (r(j, j) < 0) q.col(j) = -q.col(j);
      }
      const double gain = 1.0 / std::sqrt(static_cast<double>(k));
      for (int o = 0; o < hidden; ++o) {
        for (int i = 0; i < hidden; ++i) (*w)(o, i, 0, tap) = static_cast<T>(gain * q(o, i));
      }
    }
  }
  for (Tensor<T>* w : {&params_.w_xz, &params_.w_xr, &params_.w_x}) {
    variance_scaling_init(*w, params_.input_channels() * k, rng);
  }
  params_.b_z.fill(T{0});
  params_.b_r.fill(T{0});
  params_.b.fill(T{0});
}

template <typename T>
void ConvGRUSequence<T>::collect(std::vector<ParamRef<T>>& params) {
  auto values = params_.named();
  auto grads = grads_.named();
  for (std::size_t i = 0; i < values.size(); ++i) {
    params.push_back({name_ + "." + values[i].first, values[i].second, grads[i].second});
  }
}

#define OCE_INSTANTIATE_LAYERS(T)                                                 \
  template void variance_scaling_init<T>(Tensor<T>&, int, InitRng&);              \
  template class Conv2d<T>;                                                       \
  template class BatchNorm<T>;                                                    \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                           \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);        \
  template class MaxPool2d<T>;                                                    \
  template class BasicBlock<T>;                                                   \
  template class GlobalAvgPool<T>;                                                \
  template class Linear<T>;                                                       \
  template class ConvGRUSequence<T>;

OCE_INSTANTIATE_LAYERS(float)
OCE_INSTANTIATE_LAYERS(double)

}  // namespace oce::nn
