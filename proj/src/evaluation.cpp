// SPDX-License-Identifier: Apache-2.0
#include "oce/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Core>

#include "oce/errors.hpp"
#include "oce/io.hpp"
#include "oce/training.hpp"

namespace oce::eval {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("length mismatch");
  if (a.size() < 2) throw ContractViolation("at least two values are required");
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t start = 0; start < order.size();) {
    std::size_t stop = start + 1;
    while (stop < order.size() && v[order[stop]] == v[order[start]]) ++stop;
    const double r = 0.5 * (static_cast<double>(start + 1) + static_cast<double>(stop));
    for (std::size_t k = start; k < stop; ++k) ranks[order[k]] = r;
    start = stop;
  }
  return ranks;
}

std::pair<double, double> mean_std(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  if (is_constant(a) || is_constant(b)) {
    throw DomainError("correlation is undefined for a constant sequence");
  }
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> labels) {
  check_pair(predictions, labels);
  if (is_constant(labels)) throw DomainError("correlation is undefined for constant labels");
  Metrics m;
  m.count = labels.size();
  std::vector<double> abs_err(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) abs_err[i] = std::abs(predictions[i] - labels[i]);
  std::tie(m.mae, m.mae_std) = mean_std(abs_err);
  // A collapsed model predicts a constant; report zero correlation instead of aborting.
  if (!is_constant(predictions)) {
    m.pearson = pearson(predictions, labels);
    m.spearman = spearman(predictions, labels);
  }
  return m;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractViolation("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractViolation("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

nlohmann::json TimingSummary::to_json() const {
  return {{"passes", passes}, {"warmup", warmup}, {"batch", batch},
          {"mean_ms", mean_ms}, {"std_ms", std_ms}};
}

TimingSummary benchmark_inference(const std::function<void()>& forward_pass, int passes,
                                  int warmup) {
  if (passes < 1 || warmup < 0) throw ContractViolation("passes must be >= 1 and warmup >= 0");
  for (int i = 0; i < warmup; ++i) forward_pass();
  TimingSummary out;
  out.passes = passes;
  out.warmup = warmup;
  out.samples_ms.reserve(static_cast<std::size_t>(passes));
  for (int i = 0; i < passes; ++i) {
    const auto start = std::chrono::steady_clock::now();
    forward_pass();
    const auto stop = std::chrono::steady_clock::now();
    out.samples_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  std::tie(out.mean_ms, out.std_ms) = mean_std(out.samples_ms);
  return out;
}

TimingSummary benchmark_model(nets::Model& model, const data::SpatioTemporalWindow& window,
                              int passes, int warmup, int batch) {
  if (batch < 1) throw ContractViolation("batch must be >= 1");
  std::vector<const data::SpatioTemporalWindow*> copies(static_cast<std::size_t>(batch), &window);
  const auto input = nets::make_batch<float>(copies);
  auto summary = benchmark_inference([&] { (void)model.forward(input, false); }, passes, warmup);
  summary.batch = batch;
  return summary;
}

nlohmann::json hardware_descriptor() {
  std::string cpu = "unknown";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  return {{"cpu", cpu},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"compute_threads", 1},
          {"compiler", __VERSION__},
          {"backend", "Eigen " + eigen.str() + " (" + Eigen::SimdInstructionSetsInUse() + ")"}};
}

EvaluationReport evaluate_model(nets::Model& model, const data::LabelScaler& scaler,
                                const data::WindowDataset& dataset, data::Split split,
                                int batch_size) {
  const std::size_t n = dataset.size(split);
  if (n == 0) throw ContractViolation("cannot evaluate an empty split");
  EvaluationReport report;
  report.model = nets::to_string(model.kind());
  report.split = data::to_string(split);
  const auto predictions = training::predict(model, dataset, split, scaler, batch_size);
  std::vector<double> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = dataset.at(split, i);
    report.windows.push_back({predictions[i], w.label, w.phantom_id, w.recording_id, w.window_index});
    labels.push_back(w.label);
  }
  report.metrics = compute_metrics(predictions, labels);
  return report;
}

std::vector<ConcentrationSummary> per_concentration_table(const EvaluationReport& report) {
  if (report.windows.empty()) throw ContractViolation("report has no predictions");
  std::map<double, std::vector<const WindowPrediction*>> groups;
  for (const auto& w : report.windows) groups[w.label].push_back(&w);

  std::vector<ConcentrationSummary> table;
  for (const auto& [label, members] : groups) {
    ConcentrationSummary s;
    s.concentration = label;
    s.count = members.size();
    double err = 0.0;
    for (const auto* w : members) {
      s.predictions.push_back(w->prediction);
      err += std::abs(w->prediction - w->label);
    }
    s.mae = err / static_cast<double>(s.count);
    s.median = quantile(s.predictions, 0.5);
    s.q1 = quantile(s.predictions, 0.25);
    s.q3 = quantile(s.predictions, 0.75);
    const double iqr = s.q3 - s.q1;
    s.whisker_low = s.q1;
    s.whisker_high = s.q3;
    for (double p : s.predictions) {
      if (p >= s.q1 - 1.5 * iqr) s.whisker_low = std::min(s.whisker_low, p);
      if (p <= s.q3 + 1.5 * iqr) s.whisker_high = std::max(s.whisker_high, p);
    }
    table.push_back(std::move(s));
  }
  return table;
}

stats::GroupedSamples grouped_predictions(const EvaluationReport& report) {
  stats::GroupedSamples groups;
  for (auto& s : per_concentration_table(report)) groups.push_back(std::move(s.predictions));
  return groups;
}

nlohmann::json report_to_json(const EvaluationReport& report) {
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : report.windows) {
    windows.push_back({{"prediction", w.prediction},
                       {"label", w.label},
                       {"phantom_id", w.phantom_id},
                       {"recording_id", w.recording_id},
                       {"window_index", w.window_index}});
  }
  nlohmann::json table = nlohmann::json::array();
  for (const auto& s : per_concentration_table(report)) {
    table.push_back({{"concentration", s.concentration},
                     {"count", s.count},
                     {"median", s.median},
                     {"q1", s.q1},
                     {"q3", s.q3},
                     {"whisker_low", s.whisker_low},
                     {"whisker_high", s.whisker_high},
                     {"mae", s.mae}});
  }
  nlohmann::json j = {{"model", report.model},
                      {"split", report.split},
                      {"metrics",
                       {{"count", report.metrics.count},
                        {"mae", report.metrics.mae},
                        {"mae_std", report.metrics.mae_std},
                        {"pearson", report.metrics.pearson},
                        {"spearman", report.metrics.spearman}}},
                      {"per_concentration", table},
                      {"windows", windows},
                      {"stamp", report.stamp}};
  if (report.timing) j["inference_ms"] = report.timing->to_json();
  if (!report.hardware.is_null()) j["hardware"] = report.hardware;
  if (!report.statistics.is_null()) j["statistics"] = report.statistics;
  return j;
}

EvaluationReport report_from_json(const nlohmann::json& j) {
  try {
    EvaluationReport r;
    r.model = j.at("model").get<std::string>();
    r.split = j.at("split").get<std::string>();
    for (const auto& w : j.at("windows")) {
      r.windows.push_back({w.at("prediction").get<double>(), w.at("label").get<double>(),
                           w.at("phantom_id").get<std::string>(),
                           w.at("recording_id").get<std::string>(), w.at("window_index").get<int>()});
    }
    const auto& m = j.at("metrics");
    r.metrics = {m.at("count").get<std::size_t>(), m.at("mae").get<double>(),
                 m.at("mae_std").get<double>(), m.at("pearson").get<double>(),
                 m.at("spearman").get<double>()};
    if (j.contains("inference_ms")) {
      const auto& t = j["inference_ms"];
      TimingSummary ts;
      ts.passes = t.at("passes").get<int>();
      ts.warmup = t.at("warmup").get<int>();
      ts.batch = t.at("batch").get<int>();
      ts.mean_ms = t.at("mean_ms").get<double>();
      ts.std_ms = t.at("std_ms").get<double>();
      r.timing = ts;
    }
    if (j.contains("hardware")) r.hardware = j["hardware"];
    if (j.contains("stamp")) r.stamp = j["stamp"];
    if (j.contains("statistics")) r.statistics = j["statistics"];
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string predictions_csv(const EvaluationReport& report) {
  std::ostringstream out;
  out << "phantom_id,recording_id,window_index,label,prediction\n";
  for (const auto& w : report.windows) {
    out << w.phantom_id << ',' << w.recording_id << ',' << w.window_index << ','
        << io::format_double(w.label) << ',' << io::format_double(w.prediction) << '\n';
  }
  return out.str();
}

}  // namespace oce::eval
