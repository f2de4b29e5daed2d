// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oce/phantom_sim.hpp"

namespace oce::data {

inline constexpr int kWindowLength = 64;

/// n consecutive A-scans (rows, time) by m depth pixels (columns).
struct SpatioTemporalWindow {
  std::vector<float> pixels;  // rows * depth, row-major
  int rows = kWindowLength;
  int depth = 0;
  double label = 0.0;  // wt%
  std::string phantom_id;
  std::string recording_id;
  int window_index = 0;

  float at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * depth + col];
  }
};

struct WindowingResult {
  std::vector<SpatioTemporalWindow> windows;
  bool too_short = false;  // T < window length: no windows, flagged
  int discarded_scans = 0;  // trailing remainder
};

/// Consecutive windows of kWindowLength A-scans starting every `stride` scans
/// (stride 64 = non-overlapping); the trailing remainder is discarded.
WindowingResult window_recording(const sim::IndentationRecording& recording,
                                 int stride = kWindowLength);

enum class Split { Train = 0, Val = 1, Test = 2 };
inline constexpr std::array<Split, 3> kAllSplits{Split::Train, Split::Val, Split::Test};
std::string to_string(Split split);

/// Phantoms per concentration assigned to train/val/test. Surplus phantoms go to train.
struct SplitPolicy {
  int train = 1;
  int val = 1;
  int test = 1;

  /// Parses "train/val/test", e.g. "3/1/1".
  static SplitPolicy parse(const std::string& text);
  std::string to_string() const;
};

struct NormalizationStats {
  float min = 0.0f;
  float max = 1.0f;
};

/// Affine standardization of regression targets (identity when disabled).
struct LabelScaler {
  double mean = 0.0;
  double stddev = 1.0;

  double forward(double label) const { return (label - mean) / stddev; }
  double inverse(double value) const { return value * stddev + mean; }
};

struct PhantomRecord {
  std::string phantom_id;
  double concentration = 0.0;
};

struct SplitManifest {
  std::set<std::string> train, val, test;
  std::array<std::size_t, 3> window_counts{0, 0, 0};
  NormalizationStats normalization;
  LabelScaler label_scaler;
  std::string policy;
  std::uint64_t seed = 0;

  const std::set<std::string>& phantoms(Split split) const;
  /// Throws ContractViolation for phantoms outside every split.
  Split split_of(const std::string& phantom_id) const;

  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
};

/// Distinct phantoms of a campaign manifest in first-seen order.
std::vector<PhantomRecord> phantoms_of(const std::vector<sim::CampaignEntry>& manifest);

/// Stratified, seeded assignment of whole phantoms to train/val/test.
SplitManifest split_by_phantom(const std::vector<PhantomRecord>& phantoms,
                               const SplitPolicy& policy, std::uint64_t seed);

/// Min/max over pixels of train-split windows only.
NormalizationStats compute_normalization(std::span<const SpatioTemporalWindow> windows,
                                         const SplitManifest& manifest);

/// Mean/std of train-split labels (identity scaler when `standardize` is false).
LabelScaler compute_label_scaler(std::span<const SpatioTemporalWindow> windows,
                                 const SplitManifest& manifest, bool standardize);

/// Clamped min-max rescale to [0, 1].
SpatioTemporalWindow normalize(const SpatioTemporalWindow& window, const NormalizationStats& stats);

/// Observes every window read through WindowDataset::at.
class AccessObserver {
 public:
  virtual ~AccessObserver() = default;
  virtual void on_access(Split split, const SpatioTemporalWindow& window) = 0;
};

/// Normalized windows partitioned by a SplitManifest. Read-only after construction.
class WindowDataset {
 public:
  WindowDataset() = default;
  /// Fills window counts, train-only normalization and label scaling into the
  /// manifest, then normalizes every window.
  WindowDataset(std::vector<SpatioTemporalWindow> windows, SplitManifest manifest,
                bool standardize_labels);

  std::size_t size(Split split) const { return index_[static_cast<std::size_t>(split)].size(); }
  std::size_t total() const { return windows_.size(); }
  const SpatioTemporalWindow& at(Split split, std::size_t i) const;
  const SplitManifest& manifest() const { return manifest_; }
  int depth() const { return windows_.empty() ? 0 : windows_.front().depth; }

  void set_observer(AccessObserver* observer) const { observer_ = observer; }

  /// Assembles from already-normalized windows (e.g. loaded from disk).
  static WindowDataset from_normalized(std::vector<SpatioTemporalWindow> windows,
                                       SplitManifest manifest);

 private:
  void build_index();

  std::vector<SpatioTemporalWindow> windows_;
  SplitManifest manifest_;
  std::array<std::vector<std::size_t>, 3> index_;
  mutable AccessObserver* observer_ = nullptr;
};

// Window shard: little-endian
//   char[8] magic "OCEWIN01" | u32 version (=1) | u32 n | u32 m | u64 count |
//   float32[count*n*m]
// The JSON index next to it lists label, phantom_id, recording_id, window_index per window.
inline constexpr char kShardMagic[8] = {'O', 'C', 'E', 'W', 'I', 'N', '0', '1'};
inline constexpr std::uint32_t kShardVersion = 1;

void write_window_shard(const std::filesystem::path& path,
                        std::span<const SpatioTemporalWindow* const> windows);
/// Reads pixels only; metadata comes from the index.
std::vector<SpatioTemporalWindow> read_window_shard(const std::filesystem::path& path);

/// Writes <dir>/{train,val,test}.bin + .index.json and <dir>/split.json.
void save_dataset(const std::filesystem::path& dir, const WindowDataset& dataset,
                  const nlohmann::json& stamp);
WindowDataset load_dataset(const std::filesystem::path& dir);
nlohmann::json load_dataset_stamp(const std::filesystem::path& dir);

}  // namespace oce::data
