// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <regex>
#include <thread>

#include <gtest/gtest.h>

#include "oce/errors.hpp"
#include "oce/evaluation.hpp"
#include "oce/figures.hpp"
#include "oce/io.hpp"
#include "test_util.hpp"

using namespace oce;
using namespace oce::eval;

namespace {

const std::vector<double> kGrid{10, 12, 14, 16, 18, 20};

// `per_group` windows per grid concentration, predictions = label + noise.
EvaluationReport synthetic_report(int per_group, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  EvaluationReport r;
  r.model = "convgru";
  for (double c : kGrid) {
    for (int i = 0; i < per_group; ++i) {
      WindowPrediction w;
      w.label = c;
      w.prediction = c + noise * n(rng);
      w.phantom_id = "c" + std::to_string(static_cast<int>(c)) + "_p0";
      w.recording_id = w.phantom_id + "_i00";
      w.window_index = i;
      r.windows.push_back(w);
    }
  }
  std::vector<double> p, y;
  for (const auto& w : r.windows) {
    p.push_back(w.prediction);
    y.push_back(w.label);
  }
  r.metrics = compute_metrics(p, y);
  return r;
}

}  // namespace

TEST(Metrics, PerfectPredictions) {
  const std::vector<double> y{10, 12, 14, 16, 18, 20};
  const auto m = compute_metrics(y, y);
  EXPECT_EQ(m.count, 6u);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.mae_std, 0.0);
  EXPECT_DOUBLE_EQ(m.pearson, 1.0);
  EXPECT_DOUBLE_EQ(m.spearman, 1.0);
}

TEST(Metrics, ReversedOrderExample) {
  const std::vector<double> p{1, 2, 3}, y{3, 2, 1};
  const auto m = compute_metrics(p, y);
  EXPECT_NEAR(m.mae, 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.pearson, -1.0, 1e-15);
  EXPECT_NEAR(m.spearman, -1.0, 1e-15);
}

TEST(Metrics, PearsonIsAffineInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(50), b(50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = n(rng);
    b[i] = a[i] + 0.7 * n(rng);
  }
  const double r = pearson(a, b);
  auto scaled = a;
  for (auto& v : scaled) v = 3.5 * v - 11.0;
  EXPECT_NEAR(pearson(scaled, b), r, 1e-12);
  for (auto& v : scaled) v = -v;
  EXPECT_NEAR(pearson(scaled, b), -r, 1e-12);
  // Spearman depends on ranks only
  auto cubed = a;
  for (auto& v : cubed) v = v * v * v;
  EXPECT_NEAR(spearman(cubed, b), spearman(a, b), 1e-12);
}

TEST(Metrics, OverallMaeIsTheCountWeightedGroupMean) {
  const auto r = synthetic_report(7, 0.8, 4);
  const auto table = per_concentration_table(r);
  double weighted = 0.0;
  std::size_t n = 0;
  for (const auto& g : table) {
    weighted += g.mae * static_cast<double>(g.count);
    n += g.count;
  }
  EXPECT_EQ(n, r.windows.size());
  EXPECT_NEAR(weighted / static_cast<double>(n), r.metrics.mae, 1e-12);
}

TEST(Metrics, ConstantLabelsAreDomainErrors) {
  const std::vector<double> p{1, 2, 3}, y{5, 5, 5};
  EXPECT_THROW(compute_metrics(p, y), DomainError);
  EXPECT_THROW(pearson(y, p), DomainError);
  const std::vector<double> one{1.0};
  EXPECT_THROW(compute_metrics(one, one), ContractViolation);
}

TEST(Metrics, ConstantPredictionsReportZeroCorrelation) {
  const std::vector<double> p{15, 15, 15, 15}, y{10, 14, 16, 20};
  const auto m = compute_metrics(p, y);
  EXPECT_DOUBLE_EQ(m.mae, 3.0);
  EXPECT_EQ(m.pearson, 0.0);
  EXPECT_EQ(m.spearman, 0.0);
}

TEST(Quantile, Type7Interpolation) {
  const std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({7.0}, 0.3), 7.0);
  EXPECT_THROW(quantile({}, 0.5), ContractViolation);
  EXPECT_THROW(quantile(v, 1.5), ContractViolation);
}

TEST(Timing, StubWithFixedSleep) {
  int calls = 0;
  const auto t = benchmark_inference(
      [&] {
        ++calls;
        std::this_thread::sleep_for(std::chrono::microseconds(500));
      },
      300, 5);
  EXPECT_EQ(calls, 305);
  EXPECT_EQ(t.samples_ms.size(), 300u);
  EXPECT_EQ(t.passes, 300);
  EXPECT_GE(t.mean_ms, 0.5);
  EXPECT_LT(t.mean_ms, 50.0);
  EXPECT_GE(t.std_ms, 0.0);
  for (double s : t.samples_ms) EXPECT_GE(s, 0.5);
  EXPECT_THROW(benchmark_inference([] {}, 0, 0), ContractViolation);
}

TEST(Timing, ModelBenchmarkAndHardware) {
  nets::ConvGRUCNNConfig c;
  c.hidden_channels = 2;
  c.kernel_width = 3;
  c.stage_widths = {2, 2, 2, 2};
  auto model = nets::make_model(nets::ModelKind::ConvGRU, c.to_json(), 1);
  data::SpatioTemporalWindow w;
  w.depth = 8;
  w.pixels.assign(64 * 8, 0.5f);
  const auto t = benchmark_model(*model, w, 10, 1, 2);
  EXPECT_EQ(t.batch, 2);
  EXPECT_EQ(t.samples_ms.size(), 10u);
  EXPECT_GT(t.mean_ms, 0.0);
  const auto hw = hardware_descriptor();
  EXPECT_TRUE(hw.is_object());
  EXPECT_FALSE(hw.empty());
}

TEST(PerConcentration, GroupsSizesAndMedians) {
  auto r = synthetic_report(9, 0.0, 1);
  const auto table = per_concentration_table(r);
  ASSERT_EQ(table.size(), 6u);
  std::size_t total = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(table[i].concentration, kGrid[i]);
    EXPECT_EQ(table[i].median, kGrid[i]);
    EXPECT_EQ(table[i].mae, 0.0);
    total += table[i].count;
  }
  EXPECT_EQ(total, r.windows.size());
  const auto groups = grouped_predictions(r);
  ASSERT_EQ(groups.size(), 6u);
  EXPECT_EQ(groups[3].size(), 9u);
}

TEST(PerConcentration, BoxStatisticsAndWhiskers) {
  EvaluationReport r;
  for (double p : {1.0, 2.0, 3.0, 4.0, 100.0}) r.windows.push_back({p, 10.0, "a", "a_i00", 0});
  const auto table = per_concentration_table(r);
  ASSERT_EQ(table.size(), 1u);
  EXPECT_DOUBLE_EQ(table[0].median, 3.0);
  EXPECT_DOUBLE_EQ(table[0].q1, 2.0);
  EXPECT_DOUBLE_EQ(table[0].q3, 4.0);
  EXPECT_DOUBLE_EQ(table[0].whisker_low, 1.0);
  EXPECT_DOUBLE_EQ(table[0].whisker_high, 4.0);  // 100 lies beyond q3 + 1.5 IQR
  EXPECT_THROW(per_concentration_table(EvaluationReport{}), ContractViolation);
}

TEST(Report, JsonRoundTripAndCsv) {
  auto r = synthetic_report(3, 0.5, 2);
  r.timing = TimingSummary{300, 20, 1, 1.5, 0.1, {}};
  r.hardware = {{"cores", 1}};
  r.stamp = {{"seed", 7}};
  const auto j = report_to_json(r);
  const auto back = report_from_json(j);
  EXPECT_EQ(report_to_json(back), j);
  ASSERT_EQ(back.windows.size(), r.windows.size());
  EXPECT_EQ(back.windows[4].prediction, r.windows[4].prediction);
  EXPECT_EQ(back.metrics.mae, r.metrics.mae);
  ASSERT_TRUE(back.timing.has_value());
  EXPECT_EQ(back.timing->mean_ms, 1.5);

  const auto csv = predictions_csv(r);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.windows.size() + 1);
  EXPECT_NE(csv.find("c10_p0_i00"), std::string::npos);
  EXPECT_THROW(report_from_json(nlohmann::json{{"model", 3}}), ArtifactError);
}

TEST(Figures, BoxplotHasOneBoxPerConcentrationAndTheIdentityLine) {
  const auto r = synthetic_report(20, 0.7, 5);
  const auto svg = figures::boxplot_svg(r, "convgru");
  const std::regex box_re("<g class=\"box\" data-concentration=\"([0-9.]+)\" data-center-x=\"([0-9.]+)\"");
  std::vector<double> centers;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), box_re); it != std::sregex_iterator(); ++it) {
    centers.push_back(std::stod((*it)[2]));
  }
  ASSERT_EQ(centers.size(), 6u);
  const auto f = figures::frame_for(r);
  // coordinates are written with two decimals
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(centers[i], f.x(kGrid[i]), 0.005 + 1e-9);

  std::smatch m;
  const std::regex id_re(
      "<line id=\"identity\" x1=\"([-0-9.]+)\" y1=\"([-0-9.]+)\" x2=\"([-0-9.]+)\" y2=\"([-0-9.]+)\"");
  ASSERT_TRUE(std::regex_search(svg, m, id_re));
  const double x1 = std::stod(m[1]), y1 = std::stod(m[2]), x2 = std::stod(m[3]), y2 = std::stod(m[4]);
  for (double c : kGrid) {
    const double t = (f.x(c) - x1) / (x2 - x1);
    EXPECT_NEAR(y1 + t * (y2 - y1), f.y(c), 1e-2) << c;
  }
}

TEST(Figures, FrameCoversDataWithMargin) {
  const auto r = synthetic_report(5, 0.3, 6);
  const auto f = figures::frame_for(r);
  EXPECT_LE(f.lo, 9.0);
  EXPECT_GE(f.hi, 21.0);
  EXPECT_EQ(f.lo, std::floor(f.lo));
  EXPECT_DOUBLE_EQ(f.x(f.lo), f.left);
  EXPECT_DOUBLE_EQ(f.y(f.lo), f.top + f.height);
}

TEST(Figures, EmitIsByteIdenticalAndRejectsEmptyReports) {
  oce::testing::TempDir a("figa"), b("figb");
  const auto r = synthetic_report(10, 0.4, 7);
  const auto pa = figures::emit_figures(r, a.path());
  const auto pb = figures::emit_figures(r, b.path());
  ASSERT_EQ(pa.size(), 2u);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(io::read_text(pa[i]), io::read_text(pb[i]));
  }
  const auto scatter = io::read_text(a / "scatter.svg");
  std::size_t circles = 0;
  for (std::size_t pos = 0; (pos = scatter.find("<circle", pos)) != std::string::npos; ++pos) ++circles;
  EXPECT_EQ(circles, r.windows.size());
  EXPECT_THROW(figures::emit_figures(EvaluationReport{}, a.path()), ContractViolation);
}
