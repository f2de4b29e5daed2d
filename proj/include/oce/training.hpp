// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "oce/dataset.hpp"
#include "oce/nets.hpp"

namespace oce::training {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 100;
  int patience = 10;           // epochs without val-MAE improvement before stopping
  int windows_per_epoch = 0;   // 0: full pass over train; otherwise a fresh random subset
  /// Train windows used to re-estimate BatchNorm population statistics after
  /// every epoch, before validation (0 keeps the moving averages).
  int bn_recalibration_windows = 1024;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<nn::ParamRef<float>> params, double learning_rate, double beta1, double beta2,
       double epsilon);
  void step();

 private:
  std::vector<nn::ParamRef<float>> params_;
  std::vector<nn::Tensor<float>> first_, second_;
  double lr_, beta1_, beta2_, eps_;
  long long steps_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean squared error on standardized targets
  double val_mae = 0.0;     // wt%
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_mae = 0.0;
  double final_val_mae = 0.0;
};

/// Replaces every BatchNorm running mean/variance by the average of the batch
/// statistics over the given train windows under the current weights.
void recalibrate_batchnorm(nets::Model& model, const data::WindowDataset& dataset,
                           std::span<const std::size_t> train_indices, int batch_size);

/// Minimizes squared error on standardized targets with Adam; keeps the
/// best-on-validation parameters in `model` on return. Reads only the train and
/// validation splits. Throws TrainingDivergence on a non-finite loss.
TrainResult train(nets::Model& model, const data::WindowDataset& dataset,
                  const TrainConfig& config, std::ostream* log = nullptr);

/// Inference-mode predictions in wt% for every window of a split.
std::vector<double> predict(nets::Model& model, const data::WindowDataset& dataset,
                            data::Split split, const data::LabelScaler& scaler,
                            int batch_size = 64);

/// MAE in wt% over all windows of a split, using the dataset's label scaler.
double evaluate_epoch(nets::Model& model, const data::WindowDataset& dataset, data::Split split,
                      int batch_size = 64);

double mean_absolute_error(std::span<const double> predictions, std::span<const double> labels);

std::string history_csv(const TrainResult& result);

}  // namespace oce::training
