// SPDX-License-Identifier: Apache-2.0
// oce: simulate -> dataset -> train -> eval -> stats from the command line.
// Exit codes: 0 ok, 2 configuration error, 3 stage failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "oce/config.hpp"
#include "oce/errors.hpp"
#include "oce/evaluation.hpp"
#include "oce/io.hpp"
#include "oce/nets.hpp"
#include "oce/pipeline.hpp"

namespace fs = std::filesystem;
using namespace oce;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config, "JSON run configuration (defaults when omitted)");
  cmd->add_option("--seed", c.seed, "Seed for this stage")->capture_default_str();
  auto* out = cmd->add_option("--out", c.out, "Output location");
  if (out_required) out->required();
}

config::RunConfig load(const Common& c) {
  return c.config.empty() ? config::parse_run_config(nlohmann::json::object())
                          : config::load_run_config(c.config);
}

int bench(const config::RunConfig& cfg, std::uint64_t seed, const std::string& out) {
  data::SpatioTemporalWindow window;
  window.depth = cfg.simulation.protocol.depth_pixels;
  window.pixels.resize(static_cast<std::size_t>(window.rows) * window.depth);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& p : window.pixels) p = u(rng);

  nlohmann::json result = {{"hardware", eval::hardware_descriptor()}, {"models", nlohmann::json::object()}};
  for (const auto kind : {nets::ModelKind::ConvGRU, nets::ModelKind::Baseline}) {
    auto model = nets::make_model(kind, config::model_json(cfg, kind), seed);
    const auto t = eval::benchmark_model(*model, window, cfg.evaluation.timing_passes,
                                         cfg.evaluation.timing_warmup, cfg.evaluation.timing_batch);
    std::cout << nets::to_string(kind) << ": " << t.mean_ms << " +/- " << t.std_ms << " ms over "
              << t.passes << " passes (batch " << t.batch << ", " << model->parameter_count()
              << " parameters)\n";
    result["models"][nets::to_string(kind)] = t.to_json();
  }
  if (!out.empty()) io::write_json(fs::path(out) / "bench.json", result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elasticity regression from simulated OCE indentation recordings"};
  app.require_subcommand(1);

  Common sim_opts, data_opts, train_opts, eval_opts, stats_opts, run_opts, bench_opts;

  auto* sim_cmd = app.add_subcommand("sim", "Simulate an indentation campaign");
  add_common(sim_cmd, sim_opts, true);

  auto* data_cmd = app.add_subcommand("dataset", "Window recordings and split by phantom");
  data_cmd->require_subcommand(1);
  auto* build_cmd = data_cmd->add_subcommand("build", "Build the windowed dataset");
  std::string recordings, split_policy;
  add_common(build_cmd, data_opts, true);
  build_cmd->add_option("--recordings", recordings, "Directory written by `oce sim`")->required();
  build_cmd->add_option("--split-policy", split_policy, "Phantoms per concentration, train/val/test");

  auto* train_cmd = app.add_subcommand("train", "Train one model");
  std::string train_data, model_name;
  add_common(train_cmd, train_opts, true);
  train_cmd->add_option("--data", train_data, "Dataset directory")->required();
  train_cmd->add_option("--model", model_name, "convgru or baseline")
      ->required()
      ->check(CLI::IsMember({"convgru", "baseline"}));

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  std::string ckpt, eval_data, report_dir;
  add_common(eval_cmd, eval_opts, false);
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();
  eval_cmd->add_option("--report", report_dir, "Report directory (same as --out)");

  auto* stats_cmd = app.add_subcommand("stats", "Group-difference tests on an evaluation report");
  std::string stats_report;
  add_common(stats_cmd, stats_opts, false);
  stats_cmd->add_option("--report", stats_report, "Report directory written by `oce eval`")->required();

  auto* run_cmd = app.add_subcommand("run", "Run every stage, reusing completed ones");
  add_common(run_cmd, run_opts, true);

  auto* bench_cmd = app.add_subcommand("bench", "Inference timing of freshly initialized models");
  add_common(bench_cmd, bench_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim_cmd) {
      const auto cfg = load(sim_opts);
      pipeline::run_sim(cfg, sim_opts.seed, sim_opts.out, std::cout);
    } else if (*build_cmd) {
      auto cfg = load(data_opts);
      if (!split_policy.empty()) {
        auto j = config::to_json(cfg);
        j["dataset"]["split_policy"] = split_policy;
        cfg = config::parse_run_config(j);
      }
      pipeline::run_dataset(cfg, data_opts.seed, recordings, data_opts.out, std::cout);
    } else if (*train_cmd) {
      const auto cfg = load(train_opts);
      pipeline::run_train(cfg, nets::model_kind_from_string(model_name), train_opts.seed, train_data,
                          train_opts.out, std::cout);
    } else if (*eval_cmd) {
      const auto cfg = load(eval_opts);
      const std::string dir = report_dir.empty() ? eval_opts.out : report_dir;
      if (dir.empty()) throw ConfigError("eval needs --report or --out");
      pipeline::run_eval(cfg, ckpt, eval_data, dir, std::cout);
    } else if (*stats_cmd) {
      pipeline::run_stats(stats_report, std::cout);
    } else if (*run_cmd) {
      const auto cfg = load(run_opts);
      const auto result = pipeline::run_pipeline(cfg, run_opts.seed, run_opts.out, std::cout);
      std::cout << "metrics: " << result.metrics.string() << "\ntiming: " << result.timing.string()
                << "\n";
    } else if (*bench_cmd) {
      return bench(load(bench_opts), bench_opts.seed, bench_opts.out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
