// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oce/nets.hpp"
#include "oce/phantom_sim.hpp"
#include "oce/training.hpp"

namespace oce::config {

struct DatasetSection {
  int stride = 64;
  std::string split_policy = "1/1/1";
  bool standardize_labels = true;
};

struct ModelSection {
  nets::ConvGRUCNNConfig convgru;
  nets::BaselineConfig baseline;
};

struct TrainingSection {
  std::vector<std::string> models{"convgru", "baseline"};
  training::TrainConfig params;  // seed is supplied per run, not read from the file
};

struct EvaluationSection {
  int timing_passes = 300;
  int timing_warmup = 20;
  int timing_batch = 1;
  int batch_size = 64;
};

/// Whole-pipeline configuration. Every key is optional; missing keys keep the
/// defaults above and in the module config structs. Unknown keys are rejected.
struct RunConfig {
  sim::CampaignConfig simulation;
  DatasetSection dataset;
  ModelSection model;
  TrainingSection training;
  EvaluationSection evaluation;

  void validate() const;
};

/// Throws ConfigError naming the dotted key path on unknown keys, wrong types or
/// invalid values.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully populated form (defaults included); parse_run_config(to_json(c)) == c.
nlohmann::json to_json(const RunConfig& config);

nlohmann::json simulation_json(const sim::CampaignConfig& simulation);
nlohmann::json model_json(const RunConfig& config, nets::ModelKind kind);

}  // namespace oce::config
