// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oce/errors.hpp"
#include "oce/nn/convgru.hpp"

using oce::nn::ConvGRUCellParams;
using oce::nn::ConvGRUStepCache;
using oce::nn::Tensor;

namespace {

template <typename T>
void fill_uniform(Tensor<T>& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
}

ConvGRUCellParams<double> random_params(int hidden, int input, int k, std::mt19937_64& rng,
                                        double scale = 0.5) {
  auto p = ConvGRUCellParams<double>::zeros(hidden, input, k);
  for (auto& [name, t] : p.named()) fill_uniform(*t, rng, -scale, scale);
  return p;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(ConvGRUCell, MatchesLoopReferenceOnRandomInstances) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> channels(1, 4), length(1, 16), batch(1, 3), half(0, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int hidden = channels(rng), input = channels(rng), m = length(rng), n = batch(rng);
    const int k = 2 * half(rng) + 1;
    const auto params = random_params(hidden, input, k, rng);
    Tensor<double> x(input, n, 1, m), h(hidden, n, 1, m);
    fill_uniform(x, rng, -2.0, 2.0);
    fill_uniform(h, rng, -1.0, 1.0);

    const auto fast = oce::nn::convgru_cell_step(x, h, params);
    const auto slow = oce::nn::reference_convgru_step(x, h, params);
    ASSERT_TRUE(fast.same_shape(slow));
    worst = std::max(worst, max_abs_diff(fast, slow));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(ConvGRUCell, FloatPathAgreesWithDoubleReference) {
  std::mt19937_64 rng(7);
  const auto pd = random_params(3, 2, 5, rng);
  auto pf = ConvGRUCellParams<float>::zeros(3, 2, 5);
  const auto src = pd.named();
  auto dst = pf.named();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->cast<float>();
  Tensor<double> x(2, 2, 1, 12), h(3, 2, 1, 12);
  fill_uniform(x, rng, -1.0, 1.0);
  fill_uniform(h, rng, -1.0, 1.0);
  const auto ref = oce::nn::reference_convgru_step(x, h, pd);
  const auto got = oce::nn::convgru_cell_step(x.cast<float>(), h.cast<float>(), pf);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-5);
}

TEST(ConvGRUCell, GradientsMatchCentralDifferences) {
  std::mt19937_64 rng(11);
  const int hidden = 3, input = 2, m = 9, n = 2, k = 3;
  auto params = random_params(hidden, input, k, rng);
  Tensor<double> x(input, n, 1, m), h(hidden, n, 1, m), weights(hidden, n, 1, m);
  fill_uniform(x, rng, -1.0, 1.0);
  fill_uniform(h, rng, -1.0, 1.0);
  fill_uniform(weights, rng, -1.0, 1.0);

  // L = sum(weights . h_t)
  auto loss = [&](const ConvGRUCellParams<double>& p, const Tensor<double>& xx,
                  const Tensor<double>& hh) {
    const auto out = oce::nn::convgru_cell_step(xx, hh, p);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += weights[i] * out[i];
    return s;
  };

  ConvGRUStepCache<double> cache;
  (void)oce::nn::convgru_cell_step(x, h, params, &cache);
  auto grads = ConvGRUCellParams<double>::zeros(hidden, input, k);
  Tensor<double> dx;
  const auto dh_prev = oce::nn::convgru_cell_backward(cache, params, weights, grads, &dx);

  const double eps = 1e-5;
  auto relative = [](double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  };

  auto named = params.named();
  const auto grad_named = grads.named();
  ASSERT_EQ(named.size(), 9u);
  for (std::size_t t = 0; t < named.size(); ++t) {
    Tensor<double>& value = *named[t].second;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double up = loss(params, x, h);
      value[i] = saved - eps;
      const double down = loss(params, x, h);
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      EXPECT_LE(relative((*grad_named[t].second)[i], numeric), 1e-4)
          << named[t].first << "[" << i << "]";
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    EXPECT_LE(relative(dx[i], (loss(params, xp, h) - loss(params, xm, h)) / (2 * eps)), 1e-4);
  }
  for (std::size_t i = 0; i < h.size(); ++i) {
    auto hp = h, hm = h;
    hp[i] += eps;
    hm[i] -= eps;
    EXPECT_LE(relative(dh_prev[i], (loss(params, x, hp) - loss(params, x, hm)) / (2 * eps)), 1e-4);
  }
}

TEST(ConvGRUCell, GatesStayInRangeAndStateIsConvexCombination) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> channels(1, 4), length(1, 16);
  for (int trial = 0; trial < 1000; ++trial) {
    const int hidden = channels(rng), input = channels(rng), m = length(rng);
    const auto params = random_params(hidden, input, 3, rng, 1.0);
    Tensor<double> x(input, 1, 1, m), h(hidden, 1, 1, m);
    fill_uniform(x, rng, -3.0, 3.0);
    fill_uniform(h, rng, -1.0, 1.0);

    ConvGRUStepCache<double> cache;
    const auto out = oce::nn::convgru_cell_step(x, h, params, &cache);
    for (std::size_t i = 0; i < out.size(); ++i) {
      ASSERT_GT(cache.z[i], 0.0);
      ASSERT_LT(cache.z[i], 1.0);
      ASSERT_GT(cache.r[i], 0.0);
      ASSERT_LT(cache.r[i], 1.0);
      ASSERT_LT(std::abs(cache.candidate[i]), 1.0);
      ASSERT_LE(std::abs(out[i]), 1.0);
      const double lo = std::min(h[i], cache.candidate[i]);
      const double hi = std::max(h[i], cache.candidate[i]);
      ASSERT_GE(out[i], lo - 1e-15);
      ASSERT_LE(out[i], hi + 1e-15);
    }
  }
}

TEST(ConvGRUCell, KernelWidthOneSingleChannelIsScalarGRU) {
  auto p = ConvGRUCellParams<double>::zeros(1, 1, 1);
  const double whz = 0.7, wxz = -0.4, whr = 0.3, wxr = 0.9, wh = -1.1, wx = 0.5;
  const double bz = 0.1, br = -0.2, b = 0.05;
  p.w_hz[0] = whz;
  p.w_xz[0] = wxz;
  p.w_hr[0] = whr;
  p.w_xr[0] = wxr;
  p.w_h[0] = wh;
  p.w_x[0] = wx;
  p.b_z[0] = bz;
  p.b_r[0] = br;
  p.b[0] = b;

  const std::vector<double> xs{-1.0, -0.25, 0.0, 0.6, 2.0};
  const std::vector<double> hs{0.9, -0.5, 0.0, 0.3, -0.95};
  Tensor<double> x(1, 1, 1, 5), h(1, 1, 1, 5);
  for (int i = 0; i < 5; ++i) {
    x[i] = xs[i];
    h[i] = hs[i];
  }
  const auto out = oce::nn::convgru_cell_step(x, h, p);
  for (int i = 0; i < 5; ++i) {
    const double z = 1.0 / (1.0 + std::exp(-(whz * hs[i] + wxz * xs[i] + bz)));
    const double r = 1.0 / (1.0 + std::exp(-(whr * hs[i] + wxr * xs[i] + br)));
    const double c = std::tanh(wh * r * hs[i] + wx * xs[i] + b);
    EXPECT_NEAR(out[i], (1.0 - z) * hs[i] + z * c, 1e-14);
  }
}

TEST(ConvGRUCell, HiddenStateKeepsInputLength) {
  std::mt19937_64 rng(5);
  const auto p = random_params(4, 1, 7, rng);
  Tensor<double> x(1, 3, 1, 10), h(4, 3, 1, 10);
  const auto out = oce::nn::convgru_cell_step(x, h, p);
  EXPECT_EQ(out.shape(), h.shape());
}

TEST(ConvGRUCell, RejectsEvenKernelAndMismatchedShapes) {
  EXPECT_THROW(ConvGRUCellParams<double>::zeros(2, 1, 4), oce::ContractViolation);
  std::mt19937_64 rng(1);
  const auto p = random_params(2, 1, 3, rng);
  Tensor<double> x(1, 1, 1, 8), h_short(2, 1, 1, 7), h_channels(3, 1, 1, 8);
  EXPECT_THROW(oce::nn::convgru_cell_step(x, h_short, p), oce::ContractViolation);
  EXPECT_THROW(oce::nn::convgru_cell_step(x, h_channels, p), oce::ContractViolation);
  Tensor<double> x_channels(2, 1, 1, 8), h(2, 1, 1, 8);
  EXPECT_THROW(oce::nn::convgru_cell_step(x_channels, h, p), oce::ContractViolation);
}

TEST(ConvGRUCell, DeterministicForIdenticalInputs) {
  std::mt19937_64 rng(3);
  const auto p = random_params(3, 2, 5, rng);
  Tensor<double> x(2, 2, 1, 16), h(3, 2, 1, 16);
  fill_uniform(x, rng, -1.0, 1.0);
  fill_uniform(h, rng, -1.0, 1.0);
  const auto a = oce::nn::convgru_cell_step(x, h, p);
  const auto b = oce::nn::convgru_cell_step(x, h, p);
  EXPECT_EQ(a.values().size(), b.values().size());
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(ConvGRUCell, ZeroParametersHalveTheHiddenState) {
  const auto p = ConvGRUCellParams<double>::zeros(2, 1, 3);
  std::mt19937_64 rng(8);
  Tensor<double> x(1, 2, 1, 6), h(2, 2, 1, 6), zero_h(2, 2, 1, 6);
  fill_uniform(x, rng, -5.0, 5.0);
  fill_uniform(h, rng, -1.0, 1.0);

  ConvGRUStepCache<double> cache;
  const auto from_zero = oce::nn::convgru_cell_step(x, zero_h, p, &cache);
  for (std::size_t i = 0; i < from_zero.size(); ++i) {
    EXPECT_EQ(cache.z[i], 0.5);
    EXPECT_EQ(cache.r[i], 0.5);
    EXPECT_EQ(cache.candidate[i], 0.0);
    EXPECT_EQ(from_zero[i], 0.0);
  }
  const auto halved = oce::nn::convgru_cell_step(x, h, p);
  const auto reference = oce::nn::reference_convgru_step(x, h, p);
  for (std::size_t i = 0; i < h.size(); ++i) {
    EXPECT_DOUBLE_EQ(halved[i], 0.5 * h[i]);
    EXPECT_DOUBLE_EQ(reference[i], 0.5 * h[i]);
  }
  EXPECT_EQ(oce::nn::reference_convgru_step(x, zero_h, p).values()[0], 0.0);
}
