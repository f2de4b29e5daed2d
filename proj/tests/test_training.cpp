// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oce/errors.hpp"
#include "oce/training.hpp"

using namespace oce;
using data::Split;

namespace {

const std::vector<double> kGrid{10, 12, 14, 16, 18, 20};

nlohmann::json tiny_gru() {
  nets::ConvGRUCNNConfig c;
  c.hidden_channels = 4;
  c.kernel_width = 3;
  c.stage_widths = {8, 8, 16, 16};
  return c.to_json();
}

data::SpatioTemporalWindow make_window(const std::string& phantom, double label, int index,
                                       std::mt19937_64& rng, int depth = 16) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  data::SpatioTemporalWindow w;
  w.depth = depth;
  w.pixels.resize(static_cast<std::size_t>(data::kWindowLength) * depth);
  // weak label-dependent brightness under uniform noise
  for (auto& v : w.pixels) v = 0.6f * u(rng) + 0.02f * static_cast<float>(label);
  w.label = label;
  w.phantom_id = phantom;
  w.recording_id = phantom + "_i00";
  w.window_index = index;
  return w;
}

// One phantom per concentration and split, `per_phantom` windows each.
data::WindowDataset grid_dataset(int per_phantom, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  data::SplitManifest m;
  std::vector<data::SpatioTemporalWindow> windows;
  for (double c : kGrid) {
    for (const char* split : {"train", "val", "test"}) {
      const std::string id = "c" + std::to_string(static_cast<int>(c)) + "_" + split;
      (std::string(split) == "train" ? m.train : std::string(split) == "val" ? m.val : m.test).insert(id);
      for (int i = 0; i < per_phantom; ++i) windows.push_back(make_window(id, c, i, rng));
    }
  }
  return data::WindowDataset(std::move(windows), std::move(m), true);
}

class SplitCounter : public data::AccessObserver {
 public:
  void on_access(Split split, const data::SpatioTemporalWindow&) override { ++counts[split]; }
  std::map<Split, long> counts;
};

training::TrainConfig quick_config(std::uint64_t seed) {
  training::TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = seed;
  cfg.bn_recalibration_windows = 32;
  return cfg;
}

}  // namespace

TEST(Floor, ConstantMeanPredictorOnBalancedGrid) {
  std::vector<double> labels, constant;
  for (double c : kGrid) {
    labels.push_back(c);
    constant.push_back(15.0);
  }
  // (5 + 3 + 1 + 1 + 3 + 5) / 6
  EXPECT_NEAR(training::mean_absolute_error(constant, labels), 3.0, 1e-15);
}

// A model whose head outputs 0 in standardized units predicts the train-label mean.
TEST(Floor, ZeroHeadModelScoresTheFloor) {
  const auto ds = grid_dataset(4, 1);
  EXPECT_NEAR(ds.manifest().label_scaler.mean, 15.0, 1e-12);
  auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny_gru(), 1);
  model->head().weight().fill(0.0f);
  model->head().bias().fill(0.0f);
  for (Split s : data::kAllSplits) EXPECT_NEAR(training::evaluate_epoch(*model, ds, s), 3.0, 1e-12);
}

TEST(EvaluateEpoch, PerfectAndSingleWindow) {
  const std::vector<double> y{10.0, 14.0, 20.0};
  EXPECT_EQ(training::mean_absolute_error(y, y), 0.0);
  const std::vector<double> one{13.0}, label{16.5};
  EXPECT_DOUBLE_EQ(training::mean_absolute_error(one, label), 3.5);
  EXPECT_THROW(training::mean_absolute_error(one, y), ContractViolation);
}

TEST(Adam, FirstStepMovesEachWeightByTheLearningRate) {
  nn::Tensor<float> w(1, 1, 1, 3), g(1, 1, 1, 3);
  w[0] = 1.0f;
  w[1] = -2.0f;
  w[2] = 0.5f;
  g[0] = 4.0f;
  g[1] = -0.01f;
  g[2] = 0.0f;
  training::Adam adam({{"w", &w, &g}}, 0.1, 0.9, 0.999, 1e-8);
  adam.step();
  EXPECT_NEAR(w[0], 0.9f, 1e-6);
  EXPECT_NEAR(w[1], -1.9f, 1e-5);
  EXPECT_EQ(w[2], 0.5f);
}

TEST(Adam, MinimizesAQuadratic) {
  nn::Tensor<float> w(1, 1, 1, 1), g(1, 1, 1, 1);
  training::Adam adam({{"w", &w, &g}}, 0.05, 0.9, 0.999, 1e-8);
  for (int i = 0; i < 2000; ++i) {
    g[0] = 2.0f * (w[0] - 3.0f);
    adam.step();
  }
  EXPECT_NEAR(w[0], 3.0f, 1e-2);
}

TEST(TrainConfig, Validation) {
  training::TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = -1e-3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  EXPECT_EQ(cfg.learning_rate, 1e-3);
  EXPECT_EQ(cfg.batch_size, 64);
  EXPECT_EQ(cfg.patience, 10);
}

TEST(Train, Epoch0LossIsReproducibleForAFixedSeed) {
  const auto ds = grid_dataset(6, 2);
  auto run = [&](std::uint64_t seed) {
    auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny_gru(), seed);
    auto cfg = quick_config(seed);
    cfg.max_epochs = 1;
    return training::train(*model, ds, cfg).history.at(0);
  };
  const auto a = run(5), b = run(5), c = run(6);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.val_mae, b.val_mae);
  EXPECT_NE(a.train_loss, c.train_loss);
}

TEST(Train, NeverReadsTheTestSplit) {
  const auto ds = grid_dataset(6, 3);
  SplitCounter counter;
  ds.set_observer(&counter);
  for (auto kind : {nets::ModelKind::ConvGRU, nets::ModelKind::Baseline}) {
    nets::BaselineConfig b;
    b.stem_width = 4;
    b.stage_widths = {4, 4, 8, 8};
    auto model = nets::make_model(kind, kind == nets::ModelKind::ConvGRU ? tiny_gru() : b.to_json(), 1);
    (void)training::train(*model, ds, quick_config(1));
  }
  ds.set_observer(nullptr);
  EXPECT_GT(counter.counts[Split::Train], 0);
  EXPECT_GT(counter.counts[Split::Val], 0);
  EXPECT_EQ(counter.counts[Split::Test], 0);
}

TEST(Train, SelectedCheckpointIsBestOnValidation) {
  const auto ds = grid_dataset(8, 4);
  auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny_gru(), 2);
  auto cfg = quick_config(2);
  cfg.max_epochs = 8;
  std::ostringstream log;
  const auto result = training::train(*model, ds, cfg, &log);
  ASSERT_FALSE(result.history.empty());
  EXPECT_LE(result.best_val_mae, result.final_val_mae);
  for (const auto& r : result.history) EXPECT_LE(result.best_val_mae, r.val_mae);
  EXPECT_EQ(result.history.at(static_cast<std::size_t>(result.best_epoch)).val_mae, result.best_val_mae);
  // the restored parameters reproduce the selected epoch's score
  EXPECT_EQ(training::evaluate_epoch(*model, ds, Split::Val), result.best_val_mae);
  EXPECT_NE(log.str().find("epoch 0"), std::string::npos);

  const auto csv = training::history_csv(result);
  EXPECT_EQ(csv.rfind("epoch,train_loss,val_mae,seconds\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), result.history.size() + 1);
}

TEST(Train, PatienceStopsEarly) {
  const auto ds = grid_dataset(4, 5);
  auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny_gru(), 3);
  auto cfg = quick_config(3);
  cfg.max_epochs = 60;
  cfg.patience = 1;
  cfg.learning_rate = 1e-6;  // too small to keep improving
  const auto result = training::train(*model, ds, cfg);
  EXPECT_LT(result.history.size(), 60u);
  EXPECT_EQ(result.history.size(), static_cast<std::size_t>(result.best_epoch) + 2);
}

TEST(Train, NonFiniteLossIsDivergence) {
  std::mt19937_64 rng(1);
  data::SplitManifest m;
  std::vector<data::SpatioTemporalWindow> windows;
  for (double c : kGrid) {
    for (const char* split : {"t", "v", "x"}) {
      const std::string id = "c" + std::to_string(static_cast<int>(c)) + split;
      (split[0] == 't' ? m.train : split[0] == 'v' ? m.val : m.test).insert(id);
      windows.push_back(make_window(id, c, 0, rng));
    }
  }
  auto ds = data::WindowDataset(std::move(windows), m, true);
  // rebuild with one poisoned, already-normalized train window
  std::vector<data::SpatioTemporalWindow> copy;
  for (Split s : data::kAllSplits)
    for (std::size_t i = 0; i < ds.size(s); ++i) copy.push_back(ds.at(s, i));
  copy.front().pixels[5] = std::numeric_limits<float>::quiet_NaN();
  const auto poisoned = data::WindowDataset::from_normalized(std::move(copy), ds.manifest());
  auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny_gru(), 1);
  EXPECT_THROW(training::train(*model, poisoned, quick_config(1)), TrainingDivergence);
}

TEST(Train, RejectsEmptyValidationSplit) {
  std::mt19937_64 rng(1);
  data::SplitManifest m;
  m.train = {"a"};
  m.val = {"b"};
  std::vector<data::SpatioTemporalWindow> windows{make_window("a", 10, 0, rng), make_window("a", 20, 1, rng)};
  const data::WindowDataset ds(std::move(windows), m, true);
  auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny_gru(), 1);
  EXPECT_THROW(training::train(*model, ds, quick_config(1)), ContractViolation);
}

TEST(BatchNormRecalibration, ReplacesRunningStatisticsAndRestoresMomentum) {
  const auto ds = grid_dataset(6, 6);
  auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny_gru(), 4);
  std::vector<std::size_t> idx(ds.size(Split::Train));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  training::recalibrate_batchnorm(*model, ds, idx, 8);
  const auto first = nets::snapshot(*model);
  // disturb the running statistics, then recalibrate again
  (void)model->forward(nn::Tensor<float>(1, 4, 64, 16, 3.0f), true);
  training::recalibrate_batchnorm(*model, ds, idx, 8);
  const auto second = nets::snapshot(*model);
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t t = 0; t < first.size(); ++t)
    for (std::size_t i = 0; i < first[t].size(); ++i) ASSERT_FLOAT_EQ(first[t][i], second[t][i]);
  for (auto* bn : model->norms()) EXPECT_FLOAT_EQ(bn->momentum(), 0.1f);
}

// Memorization check: 32 train windows, validation holds identical copies so the
// best-on-validation snapshot is the best fit of the train set. One batch holds all 32,
// so BatchNorm sees the same statistics in training and after recalibration.
TEST(Train, OverfitsThirtyTwoWindows) {
  std::mt19937_64 rng(11);
  data::SplitManifest m;
  std::vector<data::SpatioTemporalWindow> windows;
  for (int i = 0; i < 32; ++i) {
    const double c = kGrid[static_cast<std::size_t>(i) % kGrid.size()];
    auto w = make_window("train" + std::to_string(i % 6), c, i, rng);
    auto copy = w;
    copy.phantom_id = "val" + std::to_string(i % 6);
    auto test = w;
    test.phantom_id = "test" + std::to_string(i % 6);
    m.train.insert(w.phantom_id);
    m.val.insert(copy.phantom_id);
    m.test.insert(test.phantom_id);
    windows.push_back(std::move(w));
    windows.push_back(std::move(copy));
    windows.push_back(std::move(test));
  }
  const data::WindowDataset ds(std::move(windows), m, true);
  ASSERT_EQ(ds.size(Split::Train), 32u);

  auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny_gru(), 7);
  training::TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.batch_size = 32;
  cfg.bn_recalibration_windows = 32;
  cfg.seed = 7;
  const auto result = training::train(*model, ds, cfg);
  const double train_mae = training::evaluate_epoch(*model, ds, Split::Train);
  EXPECT_LT(train_mae, 0.1) << "best epoch " << result.best_epoch;
  EXPECT_LE(result.history.size(), 200u);
}
