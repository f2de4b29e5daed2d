// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "oce/config.hpp"
#include "oce/nets.hpp"

namespace oce::pipeline {

namespace fs = std::filesystem;

/// Lineage record embedded in every stage artifact. `hash` covers the stage's
/// config section, its seed and the parent hash, so a stage hash changes whenever
/// anything upstream changes.
struct Stamp {
  std::string stage;
  std::string hash;
  std::string parent;
  std::uint64_t seed = 0;
  std::string config_hash;  // whole RunConfig

  nlohmann::json to_json() const;
  static Stamp from_json(const nlohmann::json& j);
};

std::string config_hash(const config::RunConfig& config);
std::string sim_hash(const config::RunConfig& config, std::uint64_t seed);
std::string dataset_hash(const config::RunConfig& config, const std::string& parent,
                         std::uint64_t seed);
std::string train_hash(const config::RunConfig& config, nets::ModelKind kind,
                       const std::string& parent, std::uint64_t seed);
std::string eval_hash(const config::RunConfig& config, const std::string& parent);
std::string stats_hash(const std::string& parent);

/// Per-stage seeds derived from the run seed.
struct StageSeeds {
  std::uint64_t sim, split, convgru, baseline;
  std::uint64_t train(nets::ModelKind kind) const {
    return kind == nets::ModelKind::ConvGRU ? convgru : baseline;
  }
};
StageSeeds derive_seeds(std::uint64_t run_seed);

// Stage entry points. Each verifies that its input artifact was produced under
// `config` (ArtifactError otherwise) and writes its own stamped output.

/// Campaign recordings, traces and manifest.json into `out`.
Stamp run_sim(const config::RunConfig& config, std::uint64_t seed, const fs::path& out,
              std::ostream& log);
/// Windows, phantom split, train-only normalization into `out`.
Stamp run_dataset(const config::RunConfig& config, std::uint64_t seed, const fs::path& recordings,
                  const fs::path& out, std::ostream& log);
/// Checkpoint at `checkpoint`, with history.csv and stamp.json beside it.
Stamp run_train(const config::RunConfig& config, nets::ModelKind kind, std::uint64_t seed,
                const fs::path& data, const fs::path& checkpoint, std::ostream& log);
/// report.json, predictions.csv, boxplot.svg, scatter.svg and timing.json in `report_dir`.
Stamp run_eval(const config::RunConfig& config, const fs::path& checkpoint, const fs::path& data,
               const fs::path& report_dir, std::ostream& log);
/// Kruskal-Wallis and Conover on the report's per-concentration predictions;
/// appended to report.json and written to stats.json.
Stamp run_stats(const fs::path& report_dir, std::ostream& log);

struct PipelineResult {
  fs::path metrics;
  fs::path timing;
  nlohmann::json summary;
  int stages_run = 0;
  int stages_reused = 0;
};

/// sim -> dataset -> train -> eval -> stats under `out`. Stage outputs live in
/// directories named by their stage hash and are reused when already complete.
/// Writes <out>/metrics.json (deterministic) and <out>/timing.json (wall-clock).
/// Stage errors are rethrown as StageFailure; ConfigError passes through.
PipelineResult run_pipeline(const config::RunConfig& config, std::uint64_t seed,
                            const fs::path& out, std::ostream& log);

}  // namespace oce::pipeline
