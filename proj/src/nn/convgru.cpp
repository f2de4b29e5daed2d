// SPDX-License-Identifier: Apache-2.0
#include "oce/nn/convgru.hpp"

#include <cmath>

namespace oce::nn {

template <typename T>
ConvGRUCellParams<T> ConvGRUCellParams<T>::zeros(int hidden_channels, int input_channels,
                                                 int kernel_width) {
  if (hidden_channels < 1 || input_channels < 1 || kernel_width < 1 || kernel_width % 2 == 0) {
    throw ContractViolation("convgru: need positive channel counts and an odd kernel width");
  }
  ConvGRUCellParams p;
  p.w_hz = Tensor<T>(hidden_channels, hidden_channels, 1, kernel_width);
  p.w_hr = p.w_hz;
  p.w_h = p.w_hz;
  p.w_xz = Tensor<T>(hidden_channels, input_channels, 1, kernel_width);
  p.w_xr = p.w_xz;
  p.w_x = p.w_xz;
  p.b_z = Tensor<T>(hidden_channels, 1, 1, 1);
  p.b_r = p.b_z;
  p.b = p.b_z;
  return p;
}

template <typename T>
void ConvGRUCellParams<T>::validate() const {
  const int hidden = hidden_channels(), input = input_channels(), k = kernel_width();
  if (k % 2 == 0) throw ContractViolation("convgru: kernel width must be odd");
  for (const auto* w : {&w_hz, &w_hr, &w_h}) {
    if (w->shape() != std::array<int, 4>{hidden, hidden, 1, k}) {
      throw ContractViolation("convgru: recurrent bank has shape " + w->shape_string());
    }
  }
  for (const auto* w : {&w_xz, &w_xr, &w_x}) {
    if (w->shape() != std::array<int, 4>{hidden, input, 1, k}) {
      throw ContractViolation("convgru: input bank has shape " + w->shape_string());
    }
  }
  for (const auto* bias : {&b_z, &b_r, &b}) {
    if (bias->shape() != std::array<int, 4>{hidden, 1, 1, 1}) {
      throw ContractViolation("convgru: bias has shape " + bias->shape_string());
    }
  }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ConvGRUCellParams<T>::named() {
  return {{"w_hz", &w_hz}, {"w_xz", &w_xz}, {"w_hr", &w_hr}, {"w_xr", &w_xr}, {"w_h", &w_h},
          {"w_x", &w_x},   {"b_z", &b_z},   {"b_r", &b_r},   {"b", &b}};
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> ConvGRUCellParams<T>::named() const {
  return {{"w_hz", &w_hz}, {"w_xz", &w_xz}, {"w_hr", &w_hr}, {"w_xr", &w_xr}, {"w_h", &w_h},
          {"w_x", &w_x},   {"b_z", &b_z},   {"b_r", &b_r},   {"b", &b}};
}

namespace {

template <typename T>
void check_step_shapes(const Tensor<T>& x, const Tensor<T>& h_prev,
                       const ConvGRUCellParams<T>& params) {
  params.validate();
  if (x.dim(2) != 1 || h_prev.dim(2) != 1) {
    throw ContractViolation("convgru: expected 1D maps with H = 1");
  }
  if (x.dim(0) != params.input_channels() || h_prev.dim(0) != params.hidden_channels()) {
    throw ContractViolation("convgru: channel mismatch x " + x.shape_string() + ", h " +
                            h_prev.shape_string());
  }
  if (x.dim(1) != h_prev.dim(1) || x.dim(3) != h_prev.dim(3)) {
    throw ContractViolation("convgru: batch/length mismatch x " + x.shape_string() + ", h " +
                            h_prev.shape_string());
  }
}

}  // namespace

template <typename T>
Tensor<T> convgru_cell_step(const Tensor<T>& x, const Tensor<T>& h_prev,
                            const ConvGRUCellParams<T>& params, ConvGRUStepCache<T>* cache) {
  check_step_shapes(x, h_prev, params);
  ConvGRUStepCache<T> local;
  ConvGRUStepCache<T>& c = cache != nullptr ? *cache : local;

  const int hidden = params.hidden_channels();
  const ConvGeometry geom = ConvGeometry::same_1d(params.kernel_width());
  im2col(x, geom, c.col_x);
  im2col(h_prev, geom, c.col_h);
  const Eigen::Index cols = c.col_x.cols();

  auto bank = [&](const Tensor<T>& w, const RowMatrix<T>& col) {
    return ConstMatrixMap<T>(w.data(), hidden, col.rows());
  };

  c.z = Tensor<T>(hidden, x.dim(1), 1, x.dim(3));
  c.r = c.z;
  MatrixMap<T> z(c.z.data(), hidden, cols);
  MatrixMap<T> r(c.r.data(), hidden, cols);
  z.noalias() = bank(params.w_hz, c.col_h) * c.col_h;
  z.noalias() += bank(params.w_xz, c.col_x) * c.col_x;
  r.noalias() = bank(params.w_hr, c.col_h) * c.col_h;
  r.noalias() += bank(params.w_xr, c.col_x) * c.col_x;
  for (int ch = 0; ch < hidden; ++ch) {
    const T bz = params.b_z[ch], br = params.b_r[ch];
    T* zr = c.z.row(ch);
    T* rr = c.r.row(ch);
    for (Eigen::Index i = 0; i < cols; ++i) {
      zr[i] = sigmoid(zr[i] + bz);
      rr[i] = sigmoid(rr[i] + br);
    }
  }

  c.reset_hidden = Tensor<T>(hidden, x.dim(1), 1, x.dim(3));
  for (std::size_t i = 0; i < c.reset_hidden.size(); ++i) c.reset_hidden[i] = c.r[i] * h_prev[i];
  im2col(c.reset_hidden, geom, c.col_rh);

  c.candidate = Tensor<T>(hidden, x.dim(1), 1, x.dim(3));
  MatrixMap<T> cand(c.candidate.data(), hidden, cols);
  cand.noalias() = bank(params.w_h, c.col_rh) * c.col_rh;
  cand.noalias() += bank(params.w_x, c.col_x) * c.col_x;

  Tensor<T> h(hidden, x.dim(1), 1, x.dim(3));
  for (int ch = 0; ch < hidden; ++ch) {
    const T bias = params.b[ch];
    T* cr = c.candidate.row(ch);
    const T* zr = c.z.row(ch);
    const T* hp = h_prev.row(ch);
    T* hr = h.row(ch);
    for (Eigen::Index i = 0; i < cols; ++i) {
      cr[i] = std::tanh(cr[i] + bias);
      hr[i] = (T{1} - zr[i]) * hp[i] + zr[i] * cr[i];
    }
  }
  if (cache != nullptr) {
    c.x = x;
    c.h_prev = h_prev;
  }
  return h;
}

template <typename T>
Tensor<T> convgru_cell_backward(const ConvGRUStepCache<T>& cache,
                                const ConvGRUCellParams<T>& params, const Tensor<T>& dh,
                                ConvGRUCellParams<T>& grads, Tensor<T>* dx) {
  require_same_shape(dh, cache.h_prev, "convgru backward");
  const int hidden = params.hidden_channels();
  const Eigen::Index cols = cache.col_x.cols();
  const ConvGeometry geom = ConvGeometry::same_1d(params.kernel_width());

  Tensor<T> dh_prev(dh.dim(0), dh.dim(1), dh.dim(2), dh.dim(3));
  Tensor<T> da_z = dh_prev, da_r = dh_prev, da_c = dh_prev;
  for (std::size_t i = 0; i < dh.size(); ++i) {
    const T z = cache.z[i], c = cache.candidate[i], hp = cache.h_prev[i];
    dh_prev[i] = dh[i] * (T{1} - z);
    da_z[i] = dh[i] * (c - hp) * z * (T{1} - z);
    da_c[i] = dh[i] * z * (T{1} - c * c);
  }

  auto map = [&](Tensor<T>& t, Eigen::Index inner) { return MatrixMap<T>(t.data(), hidden, inner); };
  auto cmap = [&](const Tensor<T>& t, Eigen::Index inner) {
    return ConstMatrixMap<T>(t.data(), hidden, inner);
  };
  auto add_bias_grad = [&](Tensor<T>& db, const Tensor<T>& da) {
    for (int ch = 0; ch < hidden; ++ch) db[ch] += cmap(da, cols).row(ch).sum();
  };

  // candidate branch
  map(grads.w_h, cache.col_rh.rows()).noalias() += cmap(da_c, cols) * cache.col_rh.transpose();
  map(grads.w_x, cache.col_x.rows()).noalias() += cmap(da_c, cols) * cache.col_x.transpose();
  add_bias_grad(grads.b, da_c);
  RowMatrix<T> dcol = cmap(params.w_h, cache.col_rh.rows()).transpose() * cmap(da_c, cols);
  Tensor<T> d_reset_hidden(dh.dim(0), dh.dim(1), dh.dim(2), dh.dim(3));
  col2im(dcol, geom, d_reset_hidden);
  for (std::size_t i = 0; i < dh.size(); ++i) {
    const T r = cache.r[i];
    da_r[i] = d_reset_hidden[i] * cache.h_prev[i] * r * (T{1} - r);
    dh_prev[i] += d_reset_hidden[i] * r;
  }

  // gates
  map(grads.w_hz, cache.col_h.rows()).noalias() += cmap(da_z, cols) * cache.col_h.transpose();
  map(grads.w_xz, cache.col_x.rows()).noalias() += cmap(da_z, cols) * cache.col_x.transpose();
  map(grads.w_hr, cache.col_h.rows()).noalias() += cmap(da_r, cols) * cache.col_h.transpose();
  map(grads.w_xr, cache.col_x.rows()).noalias() += cmap(da_r, cols) * cache.col_x.transpose();
  add_bias_grad(grads.b_z, da_z);
  add_bias_grad(grads.b_r, da_r);

  dcol.noalias() = cmap(params.w_hz, cache.col_h.rows()).transpose() * cmap(da_z, cols);
  dcol.noalias() += cmap(params.w_hr, cache.col_h.rows()).transpose() * cmap(da_r, cols);
  col2im(dcol, geom, dh_prev);

  if (dx != nullptr) {
    const Eigen::Index krows = cache.col_x.rows();
    RowMatrix<T> dcol_x = cmap(params.w_xz, krows).transpose() * cmap(da_z, cols);
    dcol_x.noalias() += cmap(params.w_xr, krows).transpose() * cmap(da_r, cols);
    dcol_x.noalias() += cmap(params.w_x, krows).transpose() * cmap(da_c, cols);
    *dx = Tensor<T>(cache.x.dim(0), cache.x.dim(1), cache.x.dim(2), cache.x.dim(3));
    col2im(dcol_x, geom, *dx);
  }
  return dh_prev;
}

namespace {

// out[o, n, l] = sum_i sum_j w[o, i, 0, j] * in[i, n, 0, l + j - k/2]
double naive_conv_at(const Tensor<double>& w, const Tensor<double>& in, int o, int n, int l) {
  const int k = w.dim(3), half = k / 2, length = in.dim(3);
  double acc = 0.0;
  for (int i = 0; i < w.dim(1); ++i) {
    for (int j = 0; j < k; ++j) {
      const int pos = l + j - half;
      if (pos < 0 || pos >= length) continue;
      acc += w(o, i, 0, j) * in(i, n, 0, pos);
    }
  }
  return acc;
}

}  // namespace

Tensor<double> reference_convgru_step(const Tensor<double>& x, const Tensor<double>& h_prev,
                                      const ConvGRUCellParams<double>& params) {
  check_step_shapes(x, h_prev, params);
  const int hidden = params.hidden_channels(), batch = x.dim(1), length = x.dim(3);
  Tensor<double> z(hidden, batch, 1, length), r = z, reset_hidden = z, h = z;

  for (int o = 0; o < hidden; ++o) {
    for (int n = 0; n < batch; ++n) {
      for (int l = 0; l < length; ++l) {
        const double az = naive_conv_at(params.w_hz, h_prev, o, n, l) +
                          naive_conv_at(params.w_xz, x, o, n, l) + params.b_z(o, 0, 0, 0);
        const double ar = naive_conv_at(params.w_hr, h_prev, o, n, l) +
                          naive_conv_at(params.w_xr, x, o, n, l) + params.b_r(o, 0, 0, 0);
        z(o, n, 0, l) = 1.0 / (1.0 + std::exp(-az));
        r(o, n, 0, l) = 1.0 / (1.0 + std::exp(-ar));
      }
    }
  }
  for (int o = 0; o < hidden; ++o) {
    for (int n = 0; n < batch; ++n) {
      for (int l = 0; l < length; ++l) {
        reset_hidden(o, n, 0, l) = r(o, n, 0, l) * h_prev(o, n, 0, l);
      }
    }
  }
  for (int o = 0; o < hidden; ++o) {
    for (int n = 0; n < batch; ++n) {
      for (int l = 0; l < length; ++l) {
        const double ac = naive_conv_at(params.w_h, reset_hidden, o, n, l) +
                          naive_conv_at(params.w_x, x, o, n, l) + params.b(o, 0, 0, 0);
        const double candidate = std::tanh(ac);
        const double zz = z(o, n, 0, l);
        h(o, n, 0, l) = (1.0 - zz) * h_prev(o, n, 0, l) + zz * candidate;
      }
    }
  }
  return h;
}

template struct ConvGRUCellParams<float>;
template struct ConvGRUCellParams<double>;
template Tensor<float> convgru_cell_step<float>(const Tensor<float>&, const Tensor<float>&,
                                                const ConvGRUCellParams<float>&,
                                                ConvGRUStepCache<float>*);
template Tensor<double> convgru_cell_step<double>(const Tensor<double>&, const Tensor<double>&,
                                                  const ConvGRUCellParams<double>&,
                                                  ConvGRUStepCache<double>*);
template Tensor<float> convgru_cell_backward<float>(const ConvGRUStepCache<float>&,
                                                    const ConvGRUCellParams<float>&,
                                                    const Tensor<float>&,
                                                    ConvGRUCellParams<float>&, Tensor<float>*);
template Tensor<double> convgru_cell_backward<double>(const ConvGRUStepCache<double>&,
                                                      const ConvGRUCellParams<double>&,
                                                      const Tensor<double>&,
                                                      ConvGRUCellParams<double>&,
                                                      Tensor<double>*);

}  // namespace oce::nn
