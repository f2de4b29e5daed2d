// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oce/dataset.hpp"
#include "oce/nets.hpp"
#include "oce/stats.hpp"

namespace oce::eval {

struct Metrics {
  std::size_t count = 0;
  double mae = 0.0;      // wt%
  double mae_std = 0.0;  // population std of the absolute errors
  double pearson = 0.0;
  double spearman = 0.0;
};

/// Needs equal lengths >= 2; throws DomainError when labels or predictions are
/// constant (correlation undefined).
Metrics compute_metrics(std::span<const double> predictions, std::span<const double> labels);

double pearson(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const double> a, std::span<const double> b);

/// Type-7 (linear interpolation) sample quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct TimingSummary {
  int passes = 0;
  int warmup = 0;
  int batch = 1;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::vector<double> samples_ms;

  nlohmann::json to_json() const;
};

/// Wall-clock of `forward_pass` over `passes` calls after `warmup` untimed ones.
TimingSummary benchmark_inference(const std::function<void()>& forward_pass, int passes = 300,
                                  int warmup = 20);

/// Inference-mode forward of `batch` copies of `window`.
TimingSummary benchmark_model(nets::Model& model, const data::SpatioTemporalWindow& window,
                              int passes = 300, int warmup = 20, int batch = 1);

/// CPU, core count, compiler and linear-algebra backend of this build.
nlohmann::json hardware_descriptor();

struct WindowPrediction {
  double prediction = 0.0;
  double label = 0.0;
  std::string phantom_id;
  std::string recording_id;
  int window_index = 0;
};

struct EvaluationReport {
  std::string model;
  std::string split = "test";
  std::vector<WindowPrediction> windows;
  Metrics metrics;
  std::optional<TimingSummary> timing;
  nlohmann::json hardware;
  nlohmann::json stamp = nlohmann::json::object();
  nlohmann::json statistics;  // filled by the stats stage
};

/// Predictions for every window of `split`, in wt%.
EvaluationReport evaluate_model(nets::Model& model, const data::LabelScaler& scaler,
                                const data::WindowDataset& dataset,
                                data::Split split = data::Split::Test, int batch_size = 64);

struct ConcentrationSummary {
  double concentration = 0.0;
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;   // most extreme values within 1.5 IQR of the box
  double whisker_high = 0.0;
  double mae = 0.0;
  std::vector<double> predictions;
};

/// Predictions grouped by true concentration, ascending.
std::vector<ConcentrationSummary> per_concentration_table(const EvaluationReport& report);

/// Prediction groups in per_concentration_table order, ready for the stats module.
stats::GroupedSamples grouped_predictions(const EvaluationReport& report);

nlohmann::json report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);
std::string predictions_csv(const EvaluationReport& report);

}  // namespace oce::eval
