// SPDX-License-Identifier: Apache-2.0
// oce_acceptance: one PASS/FAIL line per acceptance criterion.
//
//   oce_acceptance --work DIR --configs DIR [--seed S] [--only 1,3,...]
//
// Criteria 4, 6 and 7 share one desk-scale pipeline run under DIR/desk (stages are
// reused when already complete); criterion 8 runs the smoke configuration twice
// from scratch. Exit status 0 when every selected criterion passes, 1 otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oce/config.hpp"
#include "oce/dataset.hpp"
#include "oce/errors.hpp"
#include "oce/evaluation.hpp"
#include "oce/io.hpp"
#include "oce/nn/convgru.hpp"
#include "oce/phantom_sim.hpp"
#include "oce/pipeline.hpp"
#include "oce/stats.hpp"
#include "oce/training.hpp"

namespace fs = std::filesystem;
using namespace oce;
using nn::ConvGRUCellParams;
using nn::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string sci(double v) { return fmt("%.3g", v); }

// ---------------------------------------------------------------- convGRU cell

template <typename T>
void fill_uniform(Tensor<T>& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
}

ConvGRUCellParams<double> random_cell(int hidden, int input, int k, std::mt19937_64& rng, double scale) {
  auto p = ConvGRUCellParams<double>::zeros(hidden, input, k);
  for (auto& [name, t] : p.named()) fill_uniform(*t, rng, -scale, scale);
  return p;
}

Outcome criterion_cell() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> channels(1, 4), length(1, 16), batch(1, 3), half(0, 3);
  double worst_forward = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int hidden = channels(rng), input = channels(rng), m = length(rng), n = batch(rng);
    const auto params = random_cell(hidden, input, 2 * half(rng) + 1, rng, 0.5);
    Tensor<double> x(input, n, 1, m), h(hidden, n, 1, m);
    fill_uniform(x, rng, -2.0, 2.0);
    fill_uniform(h, rng, -1.0, 1.0);
    const auto fast = nn::convgru_cell_step(x, h, params);
    const auto slow = nn::reference_convgru_step(x, h, params);
    for (std::size_t i = 0; i < fast.size(); ++i) worst_forward = std::max(worst_forward, std::abs(fast[i] - slow[i]));
  }

  // L = sum(weights . h_t); every entry of the six banks and three biases
  double worst_grad = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const int hidden = 1 + trial, input = 3 - trial, m = 7 + 2 * trial, n = 2, k = 2 * trial + 1;
    auto params = random_cell(hidden, input, k, rng, 0.5);
    Tensor<double> x(input, n, 1, m), h(hidden, n, 1, m), weights(hidden, n, 1, m);
    fill_uniform(x, rng, -1.0, 1.0);
    fill_uniform(h, rng, -1.0, 1.0);
    fill_uniform(weights, rng, -1.0, 1.0);
    auto loss = [&] {
      const auto out = nn::convgru_cell_step(x, h, params);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += weights[i] * out[i];
      return s;
    };
    nn::ConvGRUStepCache<double> cache;
    (void)nn::convgru_cell_step(x, h, params, &cache);
    auto grads = ConvGRUCellParams<double>::zeros(hidden, input, k);
    (void)nn::convgru_cell_backward(cache, params, weights, grads);
    auto named = params.named();
    const auto grad_named = grads.named();
    const double eps = 1e-5;
    for (std::size_t t = 0; t < named.size(); ++t) {
      auto& value = *named[t].second;
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double saved = value[i];
        value[i] = saved + eps;
        const double up = loss();
        value[i] = saved - eps;
        const double down = loss();
        value[i] = saved;
        const double numeric = (up - down) / (2 * eps);
        const double analytic = (*grad_named[t].second)[i];
        worst_grad = std::max(worst_grad, std::abs(analytic - numeric) /
                                              std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
        ++checked;
      }
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool pass = worst_forward <= 1e-6 && worst_grad <= 1e-4 && seconds < 60.0;
  return {pass, "forward max-abs " + sci(worst_forward) + " (<= 1e-6) over 100 instances; gradient max rel " +
                    sci(worst_grad) + " (<= 1e-4) over " + std::to_string(checked) +
                    " entries of 6 banks + 3 biases; " + fmt("%.2f", seconds) + " s (< 60 s)"};
}

Outcome criterion_gates() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> channels(1, 4), length(1, 16), half(0, 3);
  long violations = 0, values = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int hidden = channels(rng), input = channels(rng), m = length(rng);
    const auto params = random_cell(hidden, input, 2 * half(rng) + 1, rng, 1.0);
    Tensor<double> x(input, 1, 1, m), h(hidden, 1, 1, m);
    fill_uniform(x, rng, -3.0, 3.0);
    fill_uniform(h, rng, -1.0, 1.0);
    nn::ConvGRUStepCache<double> cache;
    const auto out = nn::convgru_cell_step(x, h, params, &cache);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double lo = std::min(h[i], cache.candidate[i]), hi = std::max(h[i], cache.candidate[i]);
      const bool ok = cache.z[i] > 0.0 && cache.z[i] < 1.0 && cache.r[i] > 0.0 && cache.r[i] < 1.0 &&
                      std::abs(cache.candidate[i]) < 1.0 && out[i] >= lo - 1e-15 && out[i] <= hi + 1e-15;
      violations += ok ? 0 : 1;
      ++values;
    }
  }
  return {violations == 0, std::to_string(values) + " gate values from 1000 random inputs, " +
                               std::to_string(violations) +
                               " violations of 0<z,r<1, |h~|<1, min(h,h~)<=h_t<=max(h,h~)"};
}

// ---------------------------------------------------------------- simulator

Outcome criterion_physics() {
  const std::vector<double> grid{10, 12, 14, 16, 18, 20};
  sim::SensorSpec sensor;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> disp(0.0, 400.0), conc(5.0, 25.0);
  double worst_conservation = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = sim::make_phantom("p", conc(rng), 1, 0.0);
    const double d = disp(rng);
    const auto s = sim::solve_quasistatic_state(d, p, sensor);
    const double sum = s.sensor_deflection_um + s.sample_indentation_um;
    worst_conservation = std::max(worst_conservation, std::abs(sum - d) / std::max(d, 1e-300));
  }

  bool monotone = true;
  std::string deflections;
  double previous = -1.0;
  for (double c : grid) {
    const auto s = sim::solve_quasistatic_state(100.0, sim::make_phantom("p", c, 1, 0.0), sensor);
    monotone = monotone && s.sensor_deflection_um > previous;
    previous = s.sensor_deflection_um;
    deflections += (deflections.empty() ? "" : " < ") + fmt("%.2f", s.sensor_deflection_um);
  }

  sim::IndentationProtocol slow, fast;
  slow.loading_rate_mm_s = 0.1;
  fast.loading_rate_mm_s = 0.5;
  slow.depth_pixels = fast.depth_pixels = 64;
  sim::SensorSpec shallow;
  shallow.rest_length_um = 200.0;
  sim::OpticsModel optics;
  optics.noise = false;
  double worst_ratio = 0.0;
  int compared = 0;
  for (double c : {10.0, 20.0}) {
    const auto p = sim::make_phantom("p", c, 3, 200.0);
    const auto a = sim::simulate_indentation(p, shallow, slow, 1, {}, optics);
    const auto b = sim::simulate_indentation(p, shallow, fast, 1, {}, optics);
    for (int t = 1; t < b.frames && 5 * t < a.frames; ++t) {
      const auto i = static_cast<std::size_t>(t), j = static_cast<std::size_t>(5 * t);
      const double ra = a.sensor_deflection_um[j] / a.sample_indentation_um[j];
      const double rb = b.sensor_deflection_um[i] / b.sample_indentation_um[i];
      worst_ratio = std::max(worst_ratio, std::abs(ra - rb) / std::abs(rb));
      ++compared;
    }
  }
  const bool pass = worst_conservation <= 1e-9 && monotone && worst_ratio <= 1e-9 && compared > 0;
  return {pass, "conservation max rel " + sci(worst_conservation) + " (<= 1e-9); sensor deflection at 100 um " +
                    deflections + " um; deformation ratio at 0.1 vs 0.5 mm/s max rel " + sci(worst_ratio) +
                    " over " + std::to_string(compared) + " matched frames"};
}

// ---------------------------------------------------------------- desk run

struct DeskRun {
  config::RunConfig config;
  std::uint64_t seed = 0;
  fs::path out;
  pipeline::PipelineResult result;
  double seconds = 0.0;
  std::string error;
};

DeskRun run_desk(const fs::path& config_path, std::uint64_t seed, const fs::path& out) {
  DeskRun run;
  run.seed = seed;
  run.out = out;
  const auto start = std::chrono::steady_clock::now();
  try {
    run.config = config::load_run_config(config_path);
    fs::create_directories(out);
    std::ofstream log(out / "pipeline.log", std::ios::app);
    run.result = pipeline::run_pipeline(run.config, seed, out, log);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

fs::path sim_dir(const DeskRun& run) {
  const auto seeds = pipeline::derive_seeds(run.seed);
  return run.out / "sim" / pipeline::sim_hash(run.config, seeds.sim);
}

fs::path dataset_dir(const DeskRun& run) {
  const auto seeds = pipeline::derive_seeds(run.seed);
  const auto h_sim = pipeline::sim_hash(run.config, seeds.sim);
  return run.out / "dataset" / pipeline::dataset_hash(run.config, h_sim, seeds.split);
}

Outcome criterion_desk(const DeskRun& run) {
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const auto& s = run.result.summary;
  const auto& models = s.at("models");
  if (!models.contains("convgru") || !models.contains("baseline")) {
    return {false, "desk config must train both convgru and baseline"};
  }
  const auto counts = s.at("dataset").at("window_counts");
  std::size_t windows = 0;
  for (const char* split : {"train", "val", "test"}) windows += counts.at(split).get<std::size_t>();
  const auto& sim_cfg = run.config.simulation;

  // constant predictor at the train-label mean, on the actual test labels
  const auto report = eval::report_from_json(io::read_json(
      run.out / "eval" / ("convgru-" + s.at("stages").at("convgru").at("eval").get<std::string>()) / "report.json"));
  const auto split = data::SplitManifest::from_json(io::read_json(dataset_dir(run) / "split.json").at("manifest"));
  double floor = 0.0;
  for (const auto& w : report.windows) floor += std::abs(w.label - split.label_scaler.mean);
  floor /= static_cast<double>(report.windows.size());

  const auto& g = models.at("convgru").at("metrics");
  const auto& b = models.at("baseline").at("metrics");
  const double g_mae = g.at("mae").get<double>(), g_cc = g.at("pearson").get<double>();
  const double b_mae = b.at("mae").get<double>();
  // Both models must beat 2.667 wt%. The mean |c - 15| over the grid is 3.0, so this
  // bar sits below the true constant-predictor floor.
  constexpr double kFloorBar = 2.667;
  const bool pass = g_mae < 1.5 && g_cc > 0.9 && g_mae < kFloorBar && b_mae < kFloorBar;
  return {pass, std::to_string(sim_cfg.concentrations.size()) + "x" +
                    std::to_string(sim_cfg.phantoms_per_concentration) + "x" +
                    std::to_string(sim_cfg.indentations_per_phantom) + " campaign, " + std::to_string(windows) +
                    " windows (" + s.at("dataset").at("split_policy").get<std::string>() +
                    " phantoms); convGRU-CNN test MAE " + fmt("%.3f", g_mae) + " +/- " +
                    fmt("%.3f", g.at("mae_std").get<double>()) + " wt% (< 1.5), cc " + fmt("%.4f", g_cc) +
                    " (> 0.9); ResNet18 MAE " + fmt("%.3f", b_mae) + " wt%, cc " +
                    fmt("%.4f", b.at("pearson").get<double>()) + "; both < 2.667 (grid floor 3.000, test-split floor " +
                    fmt("%.3f", floor) + "); " + std::to_string(run.result.stages_run) + " stages run, " +
                    std::to_string(run.result.stages_reused) + " reused, " + fmt("%.0f", run.seconds) + " s"};
}

Outcome criterion_timing(std::uint64_t seed) {
  const auto cfg = config::parse_run_config(nlohmann::json::object());
  data::SpatioTemporalWindow window;
  window.depth = cfg.simulation.protocol.depth_pixels;
  window.pixels.resize(static_cast<std::size_t>(window.rows) * window.depth);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& p : window.pixels) p = u(rng);
  std::map<nets::ModelKind, eval::TimingSummary> t;
  for (const auto kind : {nets::ModelKind::ConvGRU, nets::ModelKind::Baseline}) {
    auto model = nets::make_model(kind, config::model_json(cfg, kind), seed);
    t[kind] = eval::benchmark_model(*model, window, cfg.evaluation.timing_passes, cfg.evaluation.timing_warmup, 1);
  }
  const auto& g = t[nets::ModelKind::ConvGRU];
  const auto& b = t[nets::ModelKind::Baseline];
  return {g.mean_ms > b.mean_ms,
          "default models, 64x" + std::to_string(window.depth) + " window, " + std::to_string(g.passes) +
              " passes batch 1: convGRU-CNN " + fmt("%.2f", g.mean_ms) + " +/- " + fmt("%.2f", g.std_ms) +
              " ms vs ResNet18 " + fmt("%.2f", b.mean_ms) + " +/- " + fmt("%.2f", b.std_ms) + " ms (" +
              eval::hardware_descriptor().value("cpu", std::string("cpu")) + ")"};
}

// ---------------------------------------------------------------- statistics

// Naive Kruskal-Wallis: O(N^2) mid-ranks, H as scaled between-group rank variance.
double naive_h(const stats::GroupedSamples& groups) {
  std::vector<double> pooled;
  for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
  const double n = static_cast<double>(pooled.size()), grand = (n + 1.0) / 2.0;
  std::vector<double> rank(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : pooled) {
      less += v < pooled[i];
      equal += v == pooled[i];
    }
    rank[i] = less + (equal + 1.0) / 2.0;
  }
  double between = 0.0, total = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += rank[offset + i];
    const double m = s / static_cast<double>(g.size());
    between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    offset += g.size();
  }
  for (double r : rank) total += (r - grand) * (r - grand);
  return (n - 1.0) * between / total;
}

double brute_force_p(const stats::GroupedSamples& groups) {
  std::vector<double> pooled;
  std::vector<std::size_t> sizes;
  for (const auto& g : groups) {
    pooled.insert(pooled.end(), g.begin(), g.end());
    sizes.push_back(g.size());
  }
  const double h_obs = naive_h(groups);
  std::vector<int> perm(pooled.size());
  std::iota(perm.begin(), perm.end(), 0);
  long hits = 0, total = 0;
  do {
    stats::GroupedSamples p(groups.size());
    std::size_t at = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g)
      for (std::size_t j = 0; j < sizes[g]; ++j) p[g].push_back(pooled[static_cast<std::size_t>(perm[at++])]);
    if (naive_h(p) >= h_obs - 1e-9 * std::max(1.0, h_obs)) ++hits;
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

Outcome criterion_stats(const DeskRun& run) {
  const double h = stats::kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}).h;
  std::mt19937_64 rng(42);
  double worst_ref = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> k_dist(2, 6), n_dist(2, 10), level(0, 5);
    std::normal_distribution<double> noise(0.0, 1.0);
    stats::GroupedSamples g(static_cast<std::size_t>(k_dist(rng)));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const int n = n_dist(rng);
      for (int j = 0; j < n; ++j) g[i].push_back(trial % 2 ? level(rng) : noise(rng) + 0.3 * static_cast<double>(i));
    }
    try {
      worst_ref = std::max(worst_ref, std::abs(stats::kruskal_wallis(g).h - naive_h(g)));
    } catch (const DegenerateTiesError&) {
    }
  }
  double worst_perm = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> level(0, 3);
    stats::GroupedSamples g{{}, {}, {}};
    const std::array<int, 3> sizes{2, 3, 3};
    for (std::size_t i = 0; i < 3; ++i)
      for (int j = 0; j < sizes[i]; ++j)
        g[i].push_back(trial % 2 ? level(rng) + 0.5 * static_cast<double>(i) : noise(rng) + static_cast<double>(i));
    worst_perm = std::max(worst_perm, std::abs(stats::kruskal_wallis_permutation_p(g) - brute_force_p(g)));
  }
  const bool oracle = std::abs(h - 7.2) <= 1e-9 && worst_ref <= 1e-9 && worst_perm <= 1e-9;
  std::string detail = "H(1-3,4-6,7-9) = " + fmt("%.12g", h) + " (7.2); reference max diff " + sci(worst_ref) +
                       "; exact permutation p max diff " + sci(worst_perm) + " (N = 8)";

  if (!run.error.empty()) return {false, detail + "; no trained predictions: " + run.error};
  bool omnibus = true;
  for (const char* name : {"convgru", "baseline"}) {
    if (!run.result.summary.at("models").contains(name)) continue;
    const auto& st = run.result.summary.at("models").at(name).at("statistics");
    const double p = st.at("kruskal_wallis").at("p_value").get<double>();
    const auto& holm = st.at("conover").at("p_holm");
    double worst_pair = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < holm.size(); ++i)
      for (std::size_t j = i + 1; j < holm.size(); ++j, ++pairs) worst_pair = std::max(worst_pair, holm[i][j].get<double>());
    if (std::string(name) == "convgru") omnibus = p < 0.05;
    detail += "; " + std::string(name) + " H = " + fmt("%.1f", st.at("kruskal_wallis").at("h").get<double>()) +
              ", p = " + sci(p) + ", " + std::to_string(pairs) + " Conover pairs, max Holm p " + sci(worst_pair);
  }
  return {oracle && omnibus, detail + " (omnibus p < 0.05 asserted for convGRU-CNN)"};
}

// ---------------------------------------------------------------- split hygiene

class SplitCounter : public data::AccessObserver {
 public:
  void on_access(data::Split split, const data::SpatioTemporalWindow&) override { ++counts[static_cast<int>(split)]; }
  std::array<long, 3> counts{0, 0, 0};
};

Outcome criterion_hygiene(const DeskRun& run) {
  if (!run.error.empty()) return {false, "no desk dataset: " + run.error};
  const auto dataset = data::load_dataset(dataset_dir(run));
  const auto& m = dataset.manifest();
  std::size_t crossing = 0;
  for (const auto& id : m.train) crossing += m.val.count(id) + m.test.count(id);
  for (const auto& id : m.val) crossing += m.test.count(id);
  std::size_t misplaced = 0;
  for (auto s : data::kAllSplits)
    for (std::size_t i = 0; i < dataset.size(s); ++i) misplaced += m.split_of(dataset.at(s, i).phantom_id) != s;

  // re-derive normalization and label scaling from the raw recordings
  const auto recordings = sim_dir(run);
  const auto manifest = sim::manifest_from_json(io::read_json(recordings / "manifest.json").at("recordings"));
  float train_lo = std::numeric_limits<float>::infinity(), train_hi = -train_lo;
  float all_lo = train_lo, all_hi = -train_lo;
  double label_sum = 0.0;
  std::size_t label_n = 0;
  for (const auto& e : manifest) {
    auto rec = sim::read_recording(recordings / (e.recording_id + ".bin"));
    rec.recording_id = e.recording_id;
    rec.phantom_id = e.phantom_id;
    rec.concentration = e.concentration;
    const auto windows = data::window_recording(rec, run.config.dataset.stride).windows;
    for (const auto& w : windows) {
      const auto [lo, hi] = std::minmax_element(w.pixels.begin(), w.pixels.end());
      all_lo = std::min(all_lo, *lo);
      all_hi = std::max(all_hi, *hi);
      if (m.split_of(w.phantom_id) == data::Split::Train) {
        train_lo = std::min(train_lo, *lo);
        train_hi = std::max(train_hi, *hi);
        label_sum += w.label;
        ++label_n;
      }
    }
  }
  const bool norm_ok = train_lo == m.normalization.min && train_hi == m.normalization.max;
  const bool label_ok = !run.config.dataset.standardize_labels ||
                        std::abs(label_sum / static_cast<double>(label_n) - m.label_scaler.mean) <= 1e-9;

  // access log over a short training run on the stored dataset
  SplitCounter counter;
  dataset.set_observer(&counter);
  nets::ConvGRUCNNConfig tiny;
  tiny.hidden_channels = 2;
  tiny.kernel_width = 3;
  tiny.stage_widths = {4, 4, 8, 8};
  auto model = nets::make_model(nets::ModelKind::ConvGRU, tiny.to_json(), 1);
  training::TrainConfig tc;
  tc.max_epochs = 1;
  tc.windows_per_epoch = 256;
  tc.bn_recalibration_windows = 256;
  tc.batch_size = 32;
  (void)training::train(*model, dataset, tc);
  dataset.set_observer(nullptr);
  const bool access_ok = counter.counts[2] == 0 && counter.counts[0] > 0 && counter.counts[1] > 0;

  return {crossing == 0 && misplaced == 0 && norm_ok && label_ok && access_ok,
          std::to_string(m.train.size()) + "/" + std::to_string(m.val.size()) + "/" + std::to_string(m.test.size()) +
              " phantoms, " + std::to_string(crossing) + " crossing, " + std::to_string(misplaced) +
              " misplaced windows; normalization [" + fmt("%.4f", m.normalization.min) + ", " +
              fmt("%.4f", m.normalization.max) + "] " + (norm_ok ? "equals" : "DIFFERS FROM") +
              " train-only recomputation (all splits [" + fmt("%.4f", all_lo) + ", " + fmt("%.4f", all_hi) +
              "]); label mean " + (label_ok ? "train-only" : "MISMATCH") + "; training reads train/val/test = " +
              std::to_string(counter.counts[0]) + "/" + std::to_string(counter.counts[1]) + "/" +
              std::to_string(counter.counts[2])};
}

// ---------------------------------------------------------------- determinism

Outcome criterion_determinism(const fs::path& config_path, std::uint64_t seed, const fs::path& work) {
  std::vector<std::string> bytes;
  double seconds = 0.0;
  for (const char* tag : {"determinism_a", "determinism_b"}) {
    const auto dir = work / tag;
    fs::remove_all(dir);
    const auto run = run_desk(config_path, seed, dir);
    if (!run.error.empty()) return {false, std::string(tag) + " failed: " + run.error};
    if (run.result.stages_reused != 0) return {false, std::string(tag) + " reused stages"};
    bytes.push_back(io::read_text(run.result.metrics));
    seconds += run.seconds;
  }
  const bool same = bytes[0] == bytes[1];
  return {same, "two fresh `run`s of " + config_path.filename().string() + " (seed " + std::to_string(seed) +
                    "): metrics.json " + std::to_string(bytes[0].size()) + " bytes, " +
                    (same ? "bit-identical" : "DIFFERENT") + "; hash " + io::json_hash(nlohmann::json::parse(bytes[0])).substr(0, 16) +
                    "; " + fmt("%.0f", seconds) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-8"};
  std::string work = "acceptance_work", configs = "configs";
  std::uint64_t seed = 1;
  std::vector<int> only;
  app.add_option("--work", work, "Working directory for pipeline runs")->capture_default_str();
  app.add_option("--configs", configs, "Directory holding desk.json and smoke.json")->capture_default_str();
  app.add_option("--seed", seed, "Run seed for the desk and determinism runs")->capture_default_str();
  app.add_option("--only", only, "Criteria to evaluate (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8}
                                              : std::set<int>(only.begin(), only.end());
  const std::map<int, std::string> names = {
      {1, "convGRU cell correctness"}, {2, "gate invariants"},      {3, "simulator physics"},
      {4, "desk-scale end-to-end"},    {5, "inference time order"}, {6, "statistics"},
      {7, "split hygiene"},            {8, "determinism"}};

  std::optional<DeskRun> desk;
  auto desk_run = [&]() -> const DeskRun& {
    if (!desk) desk = run_desk(fs::path(configs) / "desk.json", seed, fs::path(work) / "desk");
    return *desk;
  };

  int failures = 0;
  for (int id : selected) {
    std::function<Outcome()> check;
    switch (id) {
      case 1: check = criterion_cell; break;
      case 2: check = criterion_gates; break;
      case 3: check = criterion_physics; break;
      case 4: check = [&] { return criterion_desk(desk_run()); }; break;
      case 5: check = [&] { return criterion_timing(seed); }; break;
      case 6: check = [&] { return criterion_stats(desk_run()); }; break;
      case 7: check = [&] { return criterion_hygiene(desk_run()); }; break;
      case 8: check = [&] { return criterion_determinism(fs::path(configs) / "smoke.json", seed, work); }; break;
      default: std::printf("criterion %d: unknown\n", id); ++failures; continue;
    }
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, names.at(id).c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
