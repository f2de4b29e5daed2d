// SPDX-License-Identifier: Apache-2.0
#include "oce/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "oce/errors.hpp"
#include "oce/io.hpp"

namespace oce::data {

WindowingResult window_recording(const sim::IndentationRecording& recording, int stride) {
  if (stride < 1) throw ConfigError("window stride must be at least 1");
  WindowingResult result;
  const int frames = recording.frames;
  if (frames < kWindowLength) {
    result.too_short = true;
    result.discarded_scans = frames;
    return result;
  }
  int index = 0;
  int start = 0;
  for (; start + kWindowLength <= frames; start += stride, ++index) {
    SpatioTemporalWindow w;
    w.rows = kWindowLength;
    w.depth = recording.depth;
    w.label = recording.concentration;
    w.phantom_id = recording.phantom_id;
    w.recording_id = recording.recording_id;
    w.window_index = index;
    const auto begin = recording.ascans.begin() + static_cast<std::ptrdiff_t>(start) * recording.depth;
    w.pixels.assign(begin, begin + static_cast<std::ptrdiff_t>(kWindowLength) * recording.depth);
    result.windows.push_back(std::move(w));
  }
  const int covered = (index - 1) * stride + kWindowLength;
  result.discarded_scans = frames - covered;
  return result;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

SplitPolicy SplitPolicy::parse(const std::string& text) {
  SplitPolicy p;
  char extra = 0;
  if (std::sscanf(text.c_str(), "%d/%d/%d%c", &p.train, &p.val, &p.test, &extra) != 3) {
    throw ConfigError("split policy must look like train/val/test, got '" + text + "'");
  }
  if (p.train < 1 || p.val < 1 || p.test < 1) {
    throw ConfigError("split policy needs at least one phantom per split, got '" + text + "'");
  }
  return p;
}

std::string SplitPolicy::to_string() const {
  return std::to_string(train) + "/" + std::to_string(val) + "/" + std::to_string(test);
}

const std::set<std::string>& SplitManifest::phantoms(Split split) const {
  switch (split) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

Split SplitManifest::split_of(const std::string& phantom_id) const {
  for (Split s : kAllSplits) {
    if (phantoms(s).contains(phantom_id)) return s;
  }
  throw ContractViolation("phantom " + phantom_id + " is not assigned to any split");
}

nlohmann::json SplitManifest::to_json() const {
  return {{"train", train},
          {"val", val},
          {"test", test},
          {"window_counts",
           {{"train", window_counts[0]}, {"val", window_counts[1]}, {"test", window_counts[2]}}},
          {"normalization", {{"min", normalization.min}, {"max", normalization.max}}},
          {"label_scaler", {{"mean", label_scaler.mean}, {"std", label_scaler.stddev}}},
          {"policy", policy},
          {"seed", seed}};
}

SplitManifest SplitManifest::from_json(const nlohmann::json& j) {
  SplitManifest m;
  try {
    m.train = j.at("train").get<std::set<std::string>>();
    m.val = j.at("val").get<std::set<std::string>>();
    m.test = j.at("test").get<std::set<std::string>>();
    const auto& counts = j.at("window_counts");
    m.window_counts = {counts.at("train").get<std::size_t>(), counts.at("val").get<std::size_t>(),
                       counts.at("test").get<std::size_t>()};
    m.normalization.min = j.at("normalization").at("min").get<float>();
    m.normalization.max = j.at("normalization").at("max").get<float>();
    m.label_scaler.mean = j.at("label_scaler").at("mean").get<double>();
    m.label_scaler.stddev = j.at("label_scaler").at("std").get<double>();
    m.policy = j.at("policy").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ArtifactError(std::string("malformed split manifest: ") + e.what());
  }
  return m;
}

std::vector<PhantomRecord> phantoms_of(const std::vector<sim::CampaignEntry>& manifest) {
  std::vector<PhantomRecord> out;
  std::set<std::string> seen;
  for (const auto& e : manifest) {
    if (seen.insert(e.phantom_id).second) out.push_back({e.phantom_id, e.concentration});
  }
  return out;
}

SplitManifest split_by_phantom(const std::vector<PhantomRecord>& phantoms,
                               const SplitPolicy& policy, std::uint64_t seed) {
  std::map<double, std::vector<std::string>> by_concentration;
  std::set<std::string> seen;
  for (const auto& p : phantoms) {
    if (!seen.insert(p.phantom_id).second) {
      throw ConfigError("duplicate phantom id " + p.phantom_id);
    }
    by_concentration[p.concentration].push_back(p.phantom_id);
  }
  const int needed = policy.train + policy.val + policy.test;
  SplitManifest m;
  m.policy = policy.to_string();
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [concentration, ids] : by_concentration) {
    if (static_cast<int>(ids.size()) < needed) {
      throw ConfigError("concentration " + io::format_double(concentration) + " has " +
                        std::to_string(ids.size()) + " phantoms, split policy " +
                        policy.to_string() + " needs " + std::to_string(needed));
    }
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    std::size_t i = 0;
    for (int k = 0; k < policy.val; ++k) m.val.insert(ids[i++]);
    for (int k = 0; k < policy.test; ++k) m.test.insert(ids[i++]);
    for (; i < ids.size(); ++i) m.train.insert(ids[i]);
  }
  return m;
}

NormalizationStats compute_normalization(std::span<const SpatioTemporalWindow> windows,
                                         const SplitManifest& manifest) {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (const auto& w : windows) {
    if (!manifest.train.contains(w.phantom_id)) continue;
    const auto [mn, mx] = std::minmax_element(w.pixels.begin(), w.pixels.end());
    if (mn == w.pixels.end()) continue;
    lo = std::min(lo, *mn);
    hi = std::max(hi, *mx);
  }
  if (!(hi > lo)) throw ConfigError("degenerate normalization statistics from train split");
  return {lo, hi};
}

LabelScaler compute_label_scaler(std::span<const SpatioTemporalWindow> windows,
                                 const SplitManifest& manifest, bool standardize) {
  if (!standardize) return {};
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& w : windows) {
    if (!manifest.train.contains(w.phantom_id)) continue;
    sum += w.label;
    ++n;
  }
  if (n == 0) throw ConfigError("train split is empty");
  const double mean = sum / static_cast<double>(n);
  for (const auto& w : windows) {
    if (manifest.train.contains(w.phantom_id)) sq += (w.label - mean) * (w.label - mean);
  }
  const double stddev = std::sqrt(sq / static_cast<double>(n));
  if (!(stddev > 0.0)) return {mean, 1.0};
  return {mean, stddev};
}

SpatioTemporalWindow normalize(const SpatioTemporalWindow& window, const NormalizationStats& stats) {
  if (!(stats.max > stats.min)) throw ConfigError("degenerate normalization statistics");
  SpatioTemporalWindow out = window;
  const float scale = 1.0f / (stats.max - stats.min);
  for (float& v : out.pixels) v = std::clamp((v - stats.min) * scale, 0.0f, 1.0f);
  return out;
}

WindowDataset::WindowDataset(std::vector<SpatioTemporalWindow> windows, SplitManifest manifest,
                             bool standardize_labels)
    : windows_(std::move(windows)), manifest_(std::move(manifest)) {
  manifest_.normalization = compute_normalization(windows_, manifest_);
  manifest_.label_scaler = compute_label_scaler(windows_, manifest_, standardize_labels);
  for (auto& w : windows_) w = normalize(w, manifest_.normalization);
  build_index();
}

WindowDataset WindowDataset::from_normalized(std::vector<SpatioTemporalWindow> windows,
                                             SplitManifest manifest) {
  WindowDataset d;
  d.windows_ = std::move(windows);
  d.manifest_ = std::move(manifest);
  d.build_index();
  return d;
}

void WindowDataset::build_index() {
  for (auto& idx : index_) idx.clear();
  for (std::size_t i = 0; i < windows_.size(); ++i) {
    if (windows_[i].rows != kWindowLength) {
      throw ContractViolation("window with " + std::to_string(windows_[i].rows) + " rows");
    }
    index_[static_cast<std::size_t>(manifest_.split_of(windows_[i].phantom_id))].push_back(i);
  }
  for (std::size_t s = 0; s < 3; ++s) manifest_.window_counts[s] = index_[s].size();
}

const SpatioTemporalWindow& WindowDataset::at(Split split, std::size_t i) const {
  const auto& w = windows_[index_[static_cast<std::size_t>(split)].at(i)];
  if (observer_ != nullptr) observer_->on_access(split, w);
  return w;
}

void write_window_shard(const std::filesystem::path& path,
                        std::span<const SpatioTemporalWindow* const> windows) {
  const std::uint32_t n = kWindowLength;
  const std::uint32_t m = windows.empty() ? 0 : static_cast<std::uint32_t>(windows.front()->depth);
  auto out = io::open_for_write(path);
  out.write(kShardMagic, sizeof(kShardMagic));
  io::write_pod(out, kShardVersion);
  io::write_pod(out, n);
  io::write_pod(out, m);
  io::write_pod(out, static_cast<std::uint64_t>(windows.size()));
  for (const auto* w : windows) {
    if (static_cast<std::uint32_t>(w->depth) != m || w->rows != kWindowLength) {
      throw ContractViolation("window shard needs uniform window shapes");
    }
    out.write(reinterpret_cast<const char*>(w->pixels.data()),
              static_cast<std::streamsize>(w->pixels.size() * sizeof(float)));
  }
  if (!out) throw ArtifactError("write failed: " + path.string());
}

std::vector<SpatioTemporalWindow> read_window_shard(const std::filesystem::path& path) {
  auto in = io::open_for_read(path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kShardMagic)) {
    throw ArtifactError("not a window shard: " + path.string());
  }
  if (io::read_pod<std::uint32_t>(in) != kShardVersion) {
    throw ArtifactError("unsupported shard version: " + path.string());
  }
  const auto n = io::read_pod<std::uint32_t>(in);
  const auto m = io::read_pod<std::uint32_t>(in);
  const auto count = io::read_pod<std::uint64_t>(in);
  if (n != static_cast<std::uint32_t>(kWindowLength)) {
    throw ArtifactError("shard window length " + std::to_string(n) + " != 64");
  }
  std::vector<SpatioTemporalWindow> out(count);
  for (auto& w : out) {
    w.rows = static_cast<int>(n);
    w.depth = static_cast<int>(m);
    w.pixels.resize(static_cast<std::size_t>(n) * m);
    in.read(reinterpret_cast<char*>(w.pixels.data()),
            static_cast<std::streamsize>(w.pixels.size() * sizeof(float)));
  }
  if (!in) throw ArtifactError("truncated shard: " + path.string());
  return out;
}

void save_dataset(const std::filesystem::path& dir, const WindowDataset& dataset,
                  const nlohmann::json& stamp) {
  std::filesystem::create_directories(dir);
  for (Split s : kAllSplits) {
    std::vector<const SpatioTemporalWindow*> ptrs;
    nlohmann::json index = nlohmann::json::array();
    for (std::size_t i = 0; i < dataset.size(s); ++i) {
      const auto& w = dataset.at(s, i);
      ptrs.push_back(&w);
      index.push_back({{"label", w.label},
                       {"phantom_id", w.phantom_id},
                       {"recording_id", w.recording_id},
                       {"window_index", w.window_index}});
    }
    write_window_shard(dir / (to_string(s) + ".bin"), ptrs);
    io::write_json(dir / (to_string(s) + ".index.json"), index);
  }
  io::write_json(dir / "split.json", {{"stamp", stamp}, {"manifest", dataset.manifest().to_json()}});
}

nlohmann::json load_dataset_stamp(const std::filesystem::path& dir) {
  return io::read_json(dir / "split.json").at("stamp");
}

WindowDataset load_dataset(const std::filesystem::path& dir) {
  const auto split = io::read_json(dir / "split.json");
  SplitManifest manifest = SplitManifest::from_json(split.at("manifest"));
  std::vector<SpatioTemporalWindow> all;
  for (Split s : kAllSplits) {
    auto windows = read_window_shard(dir / (to_string(s) + ".bin"));
    const auto index = io::read_json(dir / (to_string(s) + ".index.json"));
    if (index.size() != windows.size()) {
      throw ArtifactError("index/shard size mismatch for split " + to_string(s));
    }
    for (std::size_t i = 0; i < windows.size(); ++i) {
      windows[i].label = index[i].at("label").get<double>();
      windows[i].phantom_id = index[i].at("phantom_id").get<std::string>();
      windows[i].recording_id = index[i].at("recording_id").get<std::string>();
      windows[i].window_index = index[i].at("window_index").get<int>();
      all.push_back(std::move(windows[i]));
    }
  }
  return WindowDataset::from_normalized(std::move(all), std::move(manifest));
}

}  // namespace oce::data
