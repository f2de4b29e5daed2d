// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oce/nn/ops.hpp"

using oce::nn::ConvGeometry;
using oce::nn::RowMatrix;
using oce::nn::Tensor;

namespace {

void fill(Tensor<double>& t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.values()) v = u(rng);
}

// Direct cross-correlation with zero padding.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const ConvGeometry& g) {
  const int cin = x.dim(0), n = x.dim(1), h = x.dim(2), wd = x.dim(3), cout = w.dim(0);
  Tensor<double> y(cout, n, g.out_h(h), g.out_w(wd));
  for (int co = 0; co < cout; ++co)
    for (int b = 0; b < n; ++b)
      for (int oy = 0; oy < y.dim(2); ++oy)
        for (int ox = 0; ox < y.dim(3); ++ox) {
          double s = 0.0;
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = oy * g.stride_h - g.pad_h + ky;
                const int ix = ox * g.stride_w - g.pad_w + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                s += w(co, ci, ky, kx) * x(ci, b, iy, ix);
              }
          y(co, b, oy, ox) = s;
        }
  return y;
}

}  // namespace

TEST(Conv, ForwardMatchesDirectLoops) {
  std::mt19937_64 rng(1);
  const std::vector<ConvGeometry> geoms{ConvGeometry::same_1d(3), ConvGeometry::same_1d(5, 2),
                                        ConvGeometry::square(3, 1, 1), ConvGeometry::square(7, 2, 3),
                                        ConvGeometry::square(1, 2, 0)};
  for (const auto& g : geoms) {
    const int h = g.kernel_h == 1 ? 1 : 9;
    Tensor<double> x(3, 2, h, 11), w(4, 3, g.kernel_h, g.kernel_w), bias(4, 1, 1, 1);
    fill(x, rng);
    fill(w, rng);
    fill(bias, rng);
    RowMatrix<double> col;
    const auto y = oce::nn::conv_forward(x, w, &bias, g, col);
    const auto ref = naive_conv(x, w, g);
    ASSERT_TRUE(y.same_shape(ref));
    for (int c = 0; c < y.dim(0); ++c)
      for (std::size_t i = 0; i < y.row_size(); ++i)
        EXPECT_NEAR(y.row(c)[i], ref.row(c)[i] + bias[c], 1e-12);
  }
}

TEST(Conv, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const ConvGeometry g = ConvGeometry::square(3, 2, 1);
  Tensor<double> x(2, 2, 5, 6), w(3, 2, 3, 3), bias(3, 1, 1, 1);
  fill(x, rng);
  fill(w, rng);
  fill(bias, rng);
  RowMatrix<double> col;
  const auto y0 = oce::nn::conv_forward(x, w, &bias, g, col);
  Tensor<double> dy(y0.dim(0), y0.dim(1), y0.dim(2), y0.dim(3));
  fill(dy, rng);

  auto loss = [&](const Tensor<double>& xx, const Tensor<double>& ww, const Tensor<double>& bb) {
    RowMatrix<double> scratch;
    const auto y = oce::nn::conv_forward(xx, ww, &bb, g, scratch);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += dy[i] * y[i];
    return s;
  };

  Tensor<double> dw(3, 2, 3, 3), db(3, 1, 1, 1), dx;
  oce::nn::conv_backward(col, w, dy, g, x.shape(), dw, &db, &dx);
  ASSERT_TRUE(dx.same_shape(x));

  const double eps = 1e-6;
  auto check = [&](Tensor<double>& t, const Tensor<double>& grad) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + eps;
      const double up = loss(x, w, bias);
      t[i] = saved - eps;
      const double down = loss(x, w, bias);
      t[i] = saved;
      EXPECT_NEAR(grad[i], (up - down) / (2 * eps), 1e-7);
    }
  };
  check(w, dw);
  check(bias, db);
  check(x, dx);
}

TEST(Conv, BackwardAccumulatesWeightGradient) {
  std::mt19937_64 rng(3);
  const ConvGeometry g = ConvGeometry::same_1d(3);
  Tensor<double> x(1, 1, 1, 8), w(2, 1, 1, 3), dy(2, 1, 1, 8);
  fill(x, rng);
  fill(w, rng);
  fill(dy, rng);
  RowMatrix<double> col;
  (void)oce::nn::conv_forward(x, w, static_cast<const Tensor<double>*>(nullptr), g, col);
  Tensor<double> once(2, 1, 1, 3), twice(2, 1, 1, 3);
  oce::nn::conv_backward(col, w, dy, g, x.shape(), once, static_cast<Tensor<double>*>(nullptr), static_cast<Tensor<double>*>(nullptr));
  oce::nn::conv_backward(col, w, dy, g, x.shape(), twice, static_cast<Tensor<double>*>(nullptr), static_cast<Tensor<double>*>(nullptr));
  oce::nn::conv_backward(col, w, dy, g, x.shape(), twice, static_cast<Tensor<double>*>(nullptr), static_cast<Tensor<double>*>(nullptr));
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

// <im2col(x), C> == <x, col2im(C)>: the two maps are adjoint.
TEST(Im2Col, Col2ImIsAdjoint) {
  std::mt19937_64 rng(4);
  const ConvGeometry g = ConvGeometry::square(3, 2, 1);
  Tensor<double> x(2, 3, 7, 5);
  fill(x, rng);
  RowMatrix<double> col;
  oce::nn::im2col(x, g, col);
  RowMatrix<double> c(col.rows(), col.cols());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  Tensor<double> back(2, 3, 7, 5);
  oce::nn::col2im(c, g, back);
  double lhs = (col.array() * c.array()).sum(), rhs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Geometry, SameOneDimensionalKeepsLength) {
  for (int k : {1, 3, 5, 7, 9}) {
    const auto g = ConvGeometry::same_1d(k);
    EXPECT_EQ(g.out_w(64), 64);
    EXPECT_EQ(g.out_h(1), 1);
  }
  EXPECT_EQ(ConvGeometry::same_1d(3, 2).out_w(64), 32);
  EXPECT_EQ(ConvGeometry::square(7, 2, 3).out_h(64), 32);
}

TEST(Sigmoid, ValuesAndSymmetry) {
  EXPECT_DOUBLE_EQ(oce::nn::sigmoid(0.0), 0.5);
  for (double v : {-8.0, -1.5, -0.1, 0.3, 2.0, 11.0}) {
    EXPECT_NEAR(oce::nn::sigmoid(v) + oce::nn::sigmoid(-v), 1.0, 1e-15);
    EXPECT_NEAR(oce::nn::sigmoid(v), 1.0 / (1.0 + std::exp(-v)), 1e-15);
  }
}
