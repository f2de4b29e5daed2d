// SPDX-License-Identifier: Apache-2.0
#include "oce/pipeline.hpp"

#include <ostream>

#include "oce/dataset.hpp"
#include "oce/errors.hpp"
#include "oce/evaluation.hpp"
#include "oce/figures.hpp"
#include "oce/io.hpp"
#include "oce/phantom_sim.hpp"
#include "oce/stats.hpp"
#include "oce/training.hpp"

namespace oce::pipeline {

using nlohmann::json;

nlohmann::json Stamp::to_json() const {
  return {{"stage", stage}, {"hash", hash}, {"parent", parent}, {"seed", seed},
          {"config_hash", config_hash}};
}

Stamp Stamp::from_json(const nlohmann::json& j) {
  try {
    return {j.at("stage").get<std::string>(), j.at("hash").get<std::string>(),
            j.at("parent").get<std::string>(), j.at("seed").get<std::uint64_t>(),
            j.at("config_hash").get<std::string>()};
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("malformed stage stamp: ") + e.what());
  }
}

std::string config_hash(const config::RunConfig& config) { return io::json_hash(config::to_json(config)); }

std::string sim_hash(const config::RunConfig& config, std::uint64_t seed) {
  auto section = config::simulation_json(config.simulation);
  section.erase("workers");  // results do not depend on the worker count
  return io::json_hash({{"stage", "sim"}, {"simulation", section}, {"seed", seed}});
}

std::string dataset_hash(const config::RunConfig& config, const std::string& parent,
                         std::uint64_t seed) {
  return io::json_hash({{"stage", "dataset"},
                        {"parent", parent},
                        {"dataset", config::to_json(config)["dataset"]},
                        {"seed", seed}});
}

std::string train_hash(const config::RunConfig& config, nets::ModelKind kind,
                       const std::string& parent, std::uint64_t seed) {
  auto training = config::to_json(config)["training"];
  training.erase("models");
  return io::json_hash({{"stage", "train"},
                        {"parent", parent},
                        {"model", nets::to_string(kind)},
                        {"model_config", config::model_json(config, kind)},
                        {"training", training},
                        {"seed", seed}});
}

std::string eval_hash(const config::RunConfig& config, const std::string& parent) {
  return io::json_hash(
      {{"stage", "eval"}, {"parent", parent}, {"evaluation", config::to_json(config)["evaluation"]}});
}

std::string stats_hash(const std::string& parent) {
  return io::json_hash({{"stage", "stats"}, {"parent", parent}});
}

StageSeeds derive_seeds(std::uint64_t run_seed) {
  return {run_seed, run_seed + 1, run_seed + 2, run_seed + 3};
}

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ArtifactError(message);
}

Stamp read_sim_stamp(const fs::path& recordings) {
  return Stamp::from_json(io::read_json(recordings / "manifest.json").at("stamp"));
}

bool stamp_matches(const fs::path& file, const std::string& expected,
                   const std::string& key = "stamp") {
  if (!fs::exists(file)) return false;
  try {
    const auto j = io::read_json(file);
    const auto& s = key.empty() ? j : j.at(key);
    return Stamp::from_json(s).hash == expected;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

Stamp run_sim(const config::RunConfig& config, std::uint64_t seed, const fs::path& out,
              std::ostream& log) {
  const Stamp stamp{"sim", sim_hash(config, seed), "", seed, config_hash(config)};
  log << "[sim] generating " << config.simulation.concentrations.size() << " x "
      << config.simulation.phantoms_per_concentration << " x "
      << config.simulation.indentations_per_phantom << " indentations\n"
      << std::flush;
  const auto campaign = sim::generate_campaign(config.simulation, seed);
  sim::write_campaign(out, campaign, stamp.to_json());
  std::size_t frames = 0;
  for (const auto& e : campaign.manifest) frames += static_cast<std::size_t>(e.frames);
  log << "[sim] " << campaign.manifest.size() << " recordings, " << frames << " A-scans\n";
  return stamp;
}

Stamp run_dataset(const config::RunConfig& config, std::uint64_t seed, const fs::path& recordings,
                  const fs::path& out, std::ostream& log) {
  const auto parent = read_sim_stamp(recordings);
  require(parent.hash == sim_hash(config, parent.seed),
          "recordings in " + recordings.string() + " were produced under a different simulation config");
  const Stamp stamp{"dataset", dataset_hash(config, parent.hash, seed), parent.hash, seed,
                    config_hash(config)};

  const auto manifest =
      sim::manifest_from_json(io::read_json(recordings / "manifest.json").at("recordings"));
  std::vector<data::SpatioTemporalWindow> windows;
  int too_short = 0;
  for (const auto& entry : manifest) {
    auto rec = sim::read_recording(recordings / (entry.recording_id + ".bin"));
    rec.recording_id = entry.recording_id;
    rec.phantom_id = entry.phantom_id;
    rec.concentration = entry.concentration;
    auto result = data::window_recording(rec, config.dataset.stride);
    if (result.too_short) ++too_short;
    for (auto& w : result.windows) windows.push_back(std::move(w));
  }
  const auto split = data::split_by_phantom(
      data::phantoms_of(manifest), data::SplitPolicy::parse(config.dataset.split_policy), seed);
  const data::WindowDataset dataset(std::move(windows), split, config.dataset.standardize_labels);
  data::save_dataset(out, dataset, stamp.to_json());
  log << "[dataset] windows train/val/test = " << dataset.size(data::Split::Train) << '/'
      << dataset.size(data::Split::Val) << '/' << dataset.size(data::Split::Test);
  if (too_short > 0) log << " (" << too_short << " recordings shorter than one window)";
  log << '\n';
  return stamp;
}

Stamp run_train(const config::RunConfig& config, nets::ModelKind kind, std::uint64_t seed,
                const fs::path& data, const fs::path& checkpoint, std::ostream& log) {
  const auto parent = Stamp::from_json(data::load_dataset_stamp(data));
  require(parent.hash == dataset_hash(config, parent.parent, parent.seed),
          "dataset in " + data.string() + " was produced under a different dataset config");
  const Stamp stamp{"train", train_hash(config, kind, parent.hash, seed), parent.hash, seed,
                    config_hash(config)};

  const auto dataset = data::load_dataset(data);
  auto model = nets::make_model(kind, config::model_json(config, kind), seed);
  auto params = config.training.params;
  params.seed = seed;
  log << "[train] " << nets::to_string(kind) << ": " << model->parameter_count() << " parameters, "
      << dataset.size(data::Split::Train) << " training windows\n";
  const auto result = training::train(*model, dataset, params, &log);

  nets::CheckpointMeta meta;
  meta.kind = kind;
  meta.model_config = model->config_json();
  meta.training_seed = seed;
  meta.dataset_hash = parent.hash;
  meta.config_hash = stamp.hash;
  meta.label_scaler = dataset.manifest().label_scaler;
  meta.extra = {{"best_epoch", result.best_epoch},
                {"best_val_mae", result.best_val_mae},
                {"final_val_mae", result.final_val_mae},
                {"epochs_run", result.history.size()}};
  nets::save_checkpoint(checkpoint, *model, meta);
  io::write_text(checkpoint.parent_path() / "history.csv", training::history_csv(result));
  auto stamp_json = stamp.to_json();
  stamp_json["training"] = meta.extra;
  io::write_json(checkpoint.parent_path() / "stamp.json", stamp_json);
  log << "[train] best epoch " << result.best_epoch << ", val MAE " << result.best_val_mae << " wt%\n";
  return stamp;
}

Stamp run_eval(const config::RunConfig& config, const fs::path& checkpoint, const fs::path& data,
               const fs::path& report_dir, std::ostream& log) {
  auto loaded = nets::load_checkpoint(checkpoint);
  const auto data_stamp = Stamp::from_json(data::load_dataset_stamp(data));
  require(loaded.meta.dataset_hash == data_stamp.hash,
          "checkpoint " + checkpoint.string() + " was trained on a different dataset");
  require(loaded.meta.config_hash ==
              train_hash(config, loaded.meta.kind, data_stamp.hash, loaded.meta.training_seed),
          "checkpoint " + checkpoint.string() + " was trained under a different model/training config");
  const Stamp stamp{"eval", eval_hash(config, loaded.meta.config_hash), loaded.meta.config_hash,
                    loaded.meta.training_seed, config_hash(config)};

  const auto dataset = data::load_dataset(data);
  auto& model = *loaded.model;
  auto report = eval::evaluate_model(model, loaded.meta.label_scaler, dataset, data::Split::Test,
                                     config.evaluation.batch_size);
  report.stamp = stamp.to_json();
  report.hardware = eval::hardware_descriptor();
  report.timing = eval::benchmark_model(model, dataset.at(data::Split::Test, 0),
                                        config.evaluation.timing_passes,
                                        config.evaluation.timing_warmup, config.evaluation.timing_batch);

  io::write_json(report_dir / "report.json", eval::report_to_json(report));
  io::write_text(report_dir / "predictions.csv", eval::predictions_csv(report));
  figures::emit_figures(report, report_dir);
  io::write_json(report_dir / "timing.json",
                 {{"model", report.model},
                  {"inference_ms", report.timing->to_json()},
                  {"hardware", report.hardware}});
  log << "[eval] " << report.model << ": MAE " << report.metrics.mae << " +/- "
      << report.metrics.mae_std << " wt%, Pearson " << report.metrics.pearson << ", "
      << report.timing->mean_ms << " +/- " << report.timing->std_ms << " ms/forward\n";
  return stamp;
}

Stamp run_stats(const fs::path& report_dir, std::ostream& log) {
  auto report_json = io::read_json(report_dir / "report.json");
  auto report = eval::report_from_json(report_json);
  const auto parent = Stamp::from_json(report.stamp);
  const Stamp stamp{"stats", stats_hash(parent.hash), parent.hash, parent.seed, parent.config_hash};

  const auto table = eval::per_concentration_table(report);
  const auto groups = eval::grouped_predictions(report);
  const auto kw = stats::kruskal_wallis(groups);
  const auto conover = stats::conover_posthoc(groups);
  json concentrations = json::array();
  for (const auto& g : table) concentrations.push_back(g.concentration);
  const json result = {{"groups", concentrations},
                       {"kruskal_wallis", stats::to_json(kw)},
                       {"conover", stats::to_json(conover)},
                       {"stamp", stamp.to_json()}};
  report_json["statistics"] = result;
  io::write_json(report_dir / "report.json", report_json);
  io::write_json(report_dir / "stats.json", result);
  log << "[stats] " << report.model << ": Kruskal-Wallis H = " << kw.h << ", p = " << kw.p_value << '\n';
  return stamp;
}

namespace {

template <typename F>
auto stage(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure(name, e.what());
  }
}

}  // namespace

PipelineResult run_pipeline(const config::RunConfig& config, std::uint64_t seed,
                            const fs::path& out, std::ostream& log) {
  config.validate();
  PipelineResult result;
  const auto seeds = derive_seeds(seed);
  const auto cfg_hash = config_hash(config);
  io::write_json(out / "config.json",
                 {{"config", config::to_json(config)}, {"seed", seed}, {"config_hash", cfg_hash}});

  auto reuse_or_run = [&](const std::string& name, bool done, auto&& body) {
    if (done) {
      log << "[" << name << "] up to date, reusing\n";
      ++result.stages_reused;
      return;
    }
    stage(name, body);
    ++result.stages_run;
  };

  const auto h_sim = sim_hash(config, seeds.sim);
  const auto sim_dir = out / "sim" / h_sim;
  reuse_or_run("sim", stamp_matches(sim_dir / "manifest.json", h_sim),
               [&] { return run_sim(config, seeds.sim, sim_dir, log); });

  const auto h_data = dataset_hash(config, h_sim, seeds.split);
  const auto data_dir = out / "dataset" / h_data;
  reuse_or_run("dataset", stamp_matches(data_dir / "split.json", h_data),
               [&] { return run_dataset(config, seeds.split, sim_dir, data_dir, log); });

  json summary = {{"seed", seed}, {"config_hash", cfg_hash}};
  json stages = {{"sim", h_sim}, {"dataset", h_data}};
  json timing = json::object();
  json models = json::object();
  {
    const auto split_json = io::read_json(data_dir / "split.json").at("manifest");
    summary["dataset"] = {{"window_counts", split_json.at("window_counts")},
                          {"split_policy", split_json.at("policy")}};
  }

  for (const auto& name : config.training.models) {
    const auto kind = nets::model_kind_from_string(name);
    const auto h_train = train_hash(config, kind, h_data, seeds.train(kind));
    const auto train_dir = out / "train" / (name + "-" + h_train);
    const auto ckpt = train_dir / "model.ckpt";
    reuse_or_run("train:" + name, stamp_matches(train_dir / "stamp.json", h_train, "") && fs::exists(ckpt),
                 [&] { return run_train(config, kind, seeds.train(kind), data_dir, ckpt, log); });

    const auto h_eval = eval_hash(config, h_train);
    const auto eval_dir = out / "eval" / (name + "-" + h_eval);
    reuse_or_run("eval:" + name, stamp_matches(eval_dir / "report.json", h_eval),
                 [&] { return run_eval(config, ckpt, data_dir, eval_dir, log); });

    const auto h_stats = stats_hash(h_eval);
    bool stats_done = false;
    if (fs::exists(eval_dir / "report.json")) {
      const auto r = io::read_json(eval_dir / "report.json");
      stats_done = r.contains("statistics") && stamp_matches(eval_dir / "stats.json", h_stats);
    }
    reuse_or_run("stats:" + name, stats_done, [&] { return run_stats(eval_dir, log); });

    const auto report_json = io::read_json(eval_dir / "report.json");
    const auto train_summary = io::read_json(train_dir / "stamp.json").at("training");
    models[name] = {{"metrics", report_json.at("metrics")},
                    {"per_concentration", report_json.at("per_concentration")},
                    {"training", train_summary},
                    {"statistics",
                     {{"kruskal_wallis", report_json.at("statistics").at("kruskal_wallis")},
                      {"conover", report_json.at("statistics").at("conover")}}}};
    stages[name] = {{"train", h_train}, {"eval", h_eval}, {"stats", h_stats}};
    timing[name] = io::read_json(eval_dir / "timing.json");
  }
  summary["stages"] = stages;
  summary["models"] = models;

  result.metrics = out / "metrics.json";
  result.timing = out / "timing.json";
  io::write_json(result.metrics, summary);
  io::write_json(result.timing, timing);
  result.summary = std::move(summary);
  return result;
}

}  // namespace oce::pipeline
