// SPDX-License-Identifier: Apache-2.0
#include "oce/nn/ops.hpp"

#include <algorithm>
#include <cstring>

namespace oce::nn {

template <typename T>
void im2col(const Tensor<T>& x, const ConvGeometry& g, RowMatrix<T>& col) {
  const int channels = x.dim(0), batch = x.dim(1), height = x.dim(2), width = x.dim(3);
  const int out_h = g.out_h(height), out_w = g.out_w(width);
  const Eigen::Index rows = static_cast<Eigen::Index>(channels) * g.kernel_h * g.kernel_w;
  const Eigen::Index cols = static_cast<Eigen::Index>(batch) * out_h * out_w;
  if (col.rows() != rows || col.cols() != cols) col.resize(rows, cols);

  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        T* dst = col.data() + ((static_cast<Eigen::Index>(c) * g.kernel_h + ki) * g.kernel_w + kj) * cols;
        for (int n = 0; n < batch; ++n) {
          for (int oh = 0; oh < out_h; ++oh, dst += out_w) {
            const int ih = oh * g.stride_h - g.pad_h + ki;
            if (ih < 0 || ih >= height) {
              std::fill(dst, dst + out_w, T{0});
              continue;
            }
            const T* src = &x(c, n, ih, 0);
            if (g.stride_w == 1) {
              // valid output range: 0 <= ow - pad + kj < width
              const int lo = std::clamp(g.pad_w - kj, 0, out_w);
              const int hi = std::clamp(width + g.pad_w - kj, lo, out_w);
              std::fill(dst, dst + lo, T{0});
              std::memcpy(dst + lo, src + (lo - g.pad_w + kj), sizeof(T) * (hi - lo));
              std::fill(dst + hi, dst + out_w, T{0});
            } else {
              for (int ow = 0; ow < out_w; ++ow) {
                const int iw = ow * g.stride_w - g.pad_w + kj;
                dst[ow] = (iw >= 0 && iw < width) ? src[iw] : T{0};
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const RowMatrix<T>& col, const ConvGeometry& g, Tensor<T>& dx) {
  const int channels = dx.dim(0), batch = dx.dim(1), height = dx.dim(2), width = dx.dim(3);
  const int out_h = g.out_h(height), out_w = g.out_w(width);
  const Eigen::Index cols = static_cast<Eigen::Index>(batch) * out_h * out_w;

  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        const T* src = col.data() + ((static_cast<Eigen::Index>(c) * g.kernel_h + ki) * g.kernel_w + kj) * cols;
        for (int n = 0; n < batch; ++n) {
          for (int oh = 0; oh < out_h; ++oh, src += out_w) {
            const int ih = oh * g.stride_h - g.pad_h + ki;
            if (ih < 0 || ih >= height) continue;
            T* dst = &dx(c, n, ih, 0);
            if (g.stride_w == 1) {
              const int lo = std::clamp(g.pad_w - kj, 0, out_w);
              const int hi = std::clamp(width + g.pad_w - kj, lo, out_w);
              T* d = dst + (lo - g.pad_w + kj);
              for (int ow = lo; ow < hi; ++ow) *d++ += src[ow];
            } else {
              for (int ow = 0; ow < out_w; ++ow) {
                const int iw = ow * g.stride_w - g.pad_w + kj;
                if (iw >= 0 && iw < width) dst[iw] += src[ow];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                       const ConvGeometry& g, RowMatrix<T>& col) {
  if (w.dim(1) != x.dim(0) || w.dim(2) != g.kernel_h || w.dim(3) != g.kernel_w) {
    throw ContractViolation("conv: filter " + w.shape_string() + " incompatible with input " +
                            x.shape_string());
  }
  const int out_channels = w.dim(0);
  const int out_h = g.out_h(x.dim(2)), out_w = g.out_w(x.dim(3));
  if (out_h <= 0 || out_w <= 0) throw ContractViolation("conv: empty output");

  im2col(x, g, col);
  Tensor<T> y(out_channels, x.dim(1), out_h, out_w);
  ConstMatrixMap<T> wm(w.data(), out_channels, col.rows());
  MatrixMap<T> ym(y.data(), out_channels, col.cols());
  ym.noalias() = wm * col;
  if (bias != nullptr) {
    for (int c = 0; c < out_channels; ++c) ym.row(c).array() += (*bias)[static_cast<std::size_t>(c)];
  }
  return y;
}

template <typename T>
void conv_backward(const RowMatrix<T>& col, const Tensor<T>& w, const Tensor<T>& dy,
                   const ConvGeometry& g, const std::array<int, 4>& input_shape, Tensor<T>& dw,
                   Tensor<T>* dbias, Tensor<T>* dx) {
  const int out_channels = w.dim(0);
  ConstMatrixMap<T> dym(dy.data(), out_channels, col.cols());
  MatrixMap<T> dwm(dw.data(), out_channels, col.rows());
  dwm.noalias() += dym * col.transpose();
  if (dbias != nullptr) {
    for (int c = 0; c < out_channels; ++c) (*dbias)[static_cast<std::size_t>(c)] += dym.row(c).sum();
  }
  if (dx != nullptr) {
    *dx = Tensor<T>(input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    ConstMatrixMap<T> wm(w.data(), out_channels, col.rows());
    RowMatrix<T> dcol = wm.transpose() * dym;
    col2im(dcol, g, *dx);
  }
}

#define OCE_INSTANTIATE_OPS(T)                                                                  \
  template void im2col<T>(const Tensor<T>&, const ConvGeometry&, RowMatrix<T>&);                \
  template void col2im<T>(const RowMatrix<T>&, const ConvGeometry&, Tensor<T>&);                \
  template Tensor<T> conv_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,      \
                                     const ConvGeometry&, RowMatrix<T>&);                       \
  template void conv_backward<T>(const RowMatrix<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                 const ConvGeometry&, const std::array<int, 4>&, Tensor<T>&,    \
                                 Tensor<T>*, Tensor<T>*);

OCE_INSTANTIATE_OPS(float)
OCE_INSTANTIATE_OPS(double)

}  // namespace oce::nn
