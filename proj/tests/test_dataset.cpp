// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "oce/dataset.hpp"
#include "oce/errors.hpp"
#include "oce/io.hpp"
#include "test_util.hpp"

using namespace oce::data;
using oce::sim::IndentationRecording;

namespace {

// Pixel (t, j) of a recording encodes its own coordinates so windows can be traced back.
IndentationRecording fake_recording(int frames, int depth, double concentration = 14.0,
                                    const std::string& phantom = "c14_p0") {
  IndentationRecording r;
  r.frames = frames;
  r.depth = depth;
  r.concentration = concentration;
  r.phantom_id = phantom;
  r.recording_id = phantom + "_i00";
  r.ascans.resize(static_cast<std::size_t>(frames) * depth);
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < depth; ++j) r.ascans[static_cast<std::size_t>(t) * depth + j] = t * 1000.0f + j;
  return r;
}

std::vector<PhantomRecord> grid_phantoms(int per_concentration) {
  std::vector<PhantomRecord> out;
  for (double c : {10, 12, 14, 16, 18, 20})
    for (int p = 0; p < per_concentration; ++p)
      out.push_back({"c" + std::to_string(static_cast<int>(c)) + "_p" + std::to_string(p), c});
  return out;
}

SpatioTemporalWindow window_of(const PhantomRecord& p, float value, int index = 0) {
  SpatioTemporalWindow w;
  w.depth = 8;
  w.pixels.assign(static_cast<std::size_t>(kWindowLength) * w.depth, value);
  w.pixels[3] = value * 0.5f;
  w.label = p.concentration;
  w.phantom_id = p.phantom_id;
  w.recording_id = p.phantom_id + "_i00";
  w.window_index = index;
  return w;
}

// Two windows per phantom; pixel level depends on the split so leakage would show.
std::vector<SpatioTemporalWindow> windows_for(const std::vector<PhantomRecord>& phantoms,
                                              const SplitManifest& m, float test_level) {
  std::vector<SpatioTemporalWindow> out;
  for (const auto& p : phantoms) {
    const float level = m.test.contains(p.phantom_id) ? test_level
                        : m.val.contains(p.phantom_id) ? 0.4f
                                                       : static_cast<float>(p.concentration) / 40.0f;
    out.push_back(window_of(p, level, 0));
    out.push_back(window_of(p, level, 1));
  }
  return out;
}

class Recorder : public AccessObserver {
 public:
  void on_access(Split split, const SpatioTemporalWindow&) override { ++counts[split]; }
  std::map<Split, int> counts;
};

}  // namespace

TEST(Windowing, ExactDivision) {
  const auto r = window_recording(fake_recording(128, 16));
  ASSERT_EQ(r.windows.size(), 2u);
  EXPECT_EQ(r.windows[0].window_index, 0);
  EXPECT_EQ(r.windows[1].window_index, 1);
  EXPECT_EQ(r.discarded_scans, 0);
  EXPECT_FALSE(r.too_short);
}

TEST(Windowing, RemainderIsDiscarded) {
  const auto r = window_recording(fake_recording(130, 16));
  EXPECT_EQ(r.windows.size(), 2u);
  EXPECT_EQ(r.discarded_scans, 2);
}

TEST(Windowing, ShortRecordingIsFlagged) {
  const auto r = window_recording(fake_recording(63, 16));
  EXPECT_TRUE(r.windows.empty());
  EXPECT_TRUE(r.too_short);
  EXPECT_EQ(window_recording(fake_recording(64, 16)).windows.size(), 1u);
}

TEST(Windowing, RowsAreContiguousScansWithCopiedLabels) {
  const auto rec = fake_recording(200, 12, 18.0, "c18_p2");
  const auto r = window_recording(rec);
  ASSERT_EQ(r.windows.size(), 3u);
  for (const auto& w : r.windows) {
    EXPECT_EQ(w.rows, 64);
    EXPECT_EQ(w.depth, 12);
    EXPECT_EQ(w.label, 18.0);
    EXPECT_EQ(w.phantom_id, "c18_p2");
    for (int row = 0; row < 64; ++row)
      for (int col = 0; col < 12; ++col)
        ASSERT_EQ(w.at(row, col), (64 * w.window_index + row) * 1000.0f + col);
  }
}

TEST(Windowing, OverlappingStride) {
  const auto r = window_recording(fake_recording(128, 4), 32);
  ASSERT_EQ(r.windows.size(), 3u);
  EXPECT_EQ(r.windows[1].at(0, 0), 32 * 1000.0f);
  EXPECT_THROW(window_recording(fake_recording(128, 4), 0), oce::ConfigError);
}

TEST(Windowing, WindowRateMatchesAscanRate) {
  EXPECT_NEAR(5500.0 / kWindowLength, 85.9, 0.05);
}

TEST(Windowing, CountIsSumOfFloorDivisions) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> frames(0, 700);
  std::size_t total = 0, expected = 0;
  for (int i = 0; i < 200; ++i) {
    const int t = frames(rng);
    total += window_recording(fake_recording(t, 2)).windows.size();
    expected += static_cast<std::size_t>(t / 64);
  }
  EXPECT_EQ(total, expected);
}

TEST(SplitPolicy, ParseAndReject) {
  const auto p = SplitPolicy::parse("3/1/1");
  EXPECT_EQ(p.train, 3);
  EXPECT_EQ(p.val, 1);
  EXPECT_EQ(p.test, 1);
  EXPECT_EQ(p.to_string(), "3/1/1");
  for (const char* bad : {"", "1/1", "1/1/1/1", "a/b/c", "0/1/1", "1/1/1x"}) {
    EXPECT_THROW(SplitPolicy::parse(bad), oce::ConfigError) << bad;
  }
}

TEST(Split, ThreePhantomsPerConcentration) {
  const auto m = split_by_phantom(grid_phantoms(3), SplitPolicy{}, 7);
  EXPECT_EQ(m.train.size(), 6u);
  EXPECT_EQ(m.val.size(), 6u);
  EXPECT_EQ(m.test.size(), 6u);
}

TEST(Split, DisjointStratifiedAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto phantoms = grid_phantoms(5);
    const auto m = split_by_phantom(phantoms, SplitPolicy::parse("3/1/1"), seed);
    EXPECT_EQ(m.train.size() + m.val.size() + m.test.size(), phantoms.size());
    std::map<double, std::array<int, 3>> per_concentration;
    for (const auto& p : phantoms) {
      int memberships = 0;
      for (Split s : kAllSplits) {
        if (m.phantoms(s).contains(p.phantom_id)) {
          ++memberships;
          ++per_concentration[p.concentration][static_cast<std::size_t>(s)];
        }
      }
      EXPECT_EQ(memberships, 1) << p.phantom_id;
    }
    for (const auto& [c, counts] : per_concentration) {
      EXPECT_EQ(counts[0], 3) << c;
      EXPECT_EQ(counts[1], 1) << c;
      EXPECT_EQ(counts[2], 1) << c;
    }
    const auto again = split_by_phantom(phantoms, SplitPolicy::parse("3/1/1"), seed);
    EXPECT_EQ(again.to_json(), m.to_json());
  }
  // the seed actually matters
  std::set<std::set<std::string>> distinct;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    distinct.insert(split_by_phantom(grid_phantoms(3), SplitPolicy{}, seed).test);
  }
  EXPECT_GT(distinct.size(), 1u);
}

TEST(Split, TooFewPhantomsIsConfigError) {
  EXPECT_THROW(split_by_phantom(grid_phantoms(2), SplitPolicy{}, 1), oce::ConfigError);
  EXPECT_THROW(split_by_phantom(grid_phantoms(4), SplitPolicy::parse("3/1/1"), 1), oce::ConfigError);
  auto dup = grid_phantoms(3);
  dup.push_back(dup.front());
  EXPECT_THROW(split_by_phantom(dup, SplitPolicy{}, 1), oce::ConfigError);
}

TEST(Normalize, Examples) {
  SpatioTemporalWindow w;
  w.depth = 2;
  w.pixels.assign(128, 0.3f);
  const auto same = normalize(w, {0.0f, 1.0f});
  EXPECT_EQ(same.pixels, w.pixels);

  w.pixels[0] = 1.7f;
  w.pixels[1] = -0.2f;
  const auto clamped = normalize(w, {0.0f, 1.0f});
  EXPECT_EQ(clamped.pixels[0], 1.0f);
  EXPECT_EQ(clamped.pixels[1], 0.0f);

  w.pixels[2] = 1.0f;
  EXPECT_FLOAT_EQ(normalize(w, {0.0f, 2.0f}).pixels[2], 0.5f);
  EXPECT_THROW(normalize(w, {0.5f, 0.5f}), oce::ConfigError);
}

TEST(Normalize, StatisticsComeFromTrainOnly) {
  const auto phantoms = grid_phantoms(3);
  const auto m = split_by_phantom(phantoms, SplitPolicy{}, 3);
  const auto a = compute_normalization(windows_for(phantoms, m, 0.9f), m);
  const auto b = compute_normalization(windows_for(phantoms, m, 250.0f), m);
  EXPECT_EQ(a.min, b.min);
  EXPECT_EQ(a.max, b.max);
  // train levels are c/40 with one pixel at half that
  EXPECT_FLOAT_EQ(a.min, 10.0f / 80.0f);
  EXPECT_FLOAT_EQ(a.max, 20.0f / 40.0f);

  const WindowDataset ds(windows_for(phantoms, m, 250.0f), m, true);
  EXPECT_EQ(ds.manifest().normalization.max, a.max);
  for (std::size_t i = 0; i < ds.size(Split::Test); ++i) {
    for (float v : ds.at(Split::Test, i).pixels) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(LabelScaler, TrainLabelsOnly) {
  auto phantoms = grid_phantoms(3);
  const auto m = split_by_phantom(phantoms, SplitPolicy{}, 3);
  auto windows = windows_for(phantoms, m, 0.2f);
  const auto s = compute_label_scaler(windows, m, true);
  EXPECT_NEAR(s.mean, 15.0, 1e-12);
  EXPECT_NEAR(s.stddev, std::sqrt(70.0 / 6.0), 1e-12);
  for (auto& w : windows) {
    if (!m.train.contains(w.phantom_id)) w.label = 1000.0;
  }
  const auto t = compute_label_scaler(windows, m, true);
  EXPECT_EQ(s.mean, t.mean);
  EXPECT_EQ(s.stddev, t.stddev);
  EXPECT_NEAR(s.inverse(s.forward(13.25)), 13.25, 1e-12);
  const auto identity = compute_label_scaler(windows, m, false);
  EXPECT_EQ(identity.forward(17.0), 17.0);
}

TEST(WindowDatasetTest, IndexCountsAndAccessLog) {
  const auto phantoms = grid_phantoms(3);
  const auto m = split_by_phantom(phantoms, SplitPolicy{}, 5);
  const WindowDataset ds(windows_for(phantoms, m, 0.2f), m, true);
  EXPECT_EQ(ds.size(Split::Train), 12u);
  EXPECT_EQ(ds.size(Split::Val), 12u);
  EXPECT_EQ(ds.size(Split::Test), 12u);
  EXPECT_EQ(ds.manifest().window_counts[2], 12u);
  for (std::size_t i = 0; i < ds.size(Split::Val); ++i) {
    EXPECT_TRUE(m.val.contains(ds.at(Split::Val, i).phantom_id));
  }

  Recorder rec;
  ds.set_observer(&rec);
  (void)ds.at(Split::Train, 0);
  (void)ds.at(Split::Train, 3);
  (void)ds.at(Split::Val, 1);
  ds.set_observer(nullptr);
  (void)ds.at(Split::Test, 0);
  EXPECT_EQ(rec.counts[Split::Train], 2);
  EXPECT_EQ(rec.counts[Split::Val], 1);
  EXPECT_EQ(rec.counts[Split::Test], 0);
  EXPECT_THROW((void)ds.at(Split::Test, 99), std::out_of_range);
}

TEST(WindowDatasetTest, UnassignedPhantomIsRejected) {
  const auto phantoms = grid_phantoms(3);
  const auto m = split_by_phantom(phantoms, SplitPolicy{}, 5);
  auto windows = windows_for(phantoms, m, 0.2f);
  windows.push_back(window_of({"stranger", 14.0}, 0.3f));
  EXPECT_THROW(WindowDataset(std::move(windows), m, true), oce::ContractViolation);
}

TEST(Persistence, SaveLoadIsBitIdentical) {
  oce::testing::TempDir dir("dataset");
  const auto phantoms = grid_phantoms(3);
  const auto m = split_by_phantom(phantoms, SplitPolicy{}, 5);
  auto windows = windows_for(phantoms, m, 0.2f);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 0.5f);
  for (auto& w : windows)
    for (auto& v : w.pixels) v = u(rng);
  const WindowDataset ds(std::move(windows), m, true);
  save_dataset(dir.path(), ds, {{"stage", "dataset"}, {"hash", "abc"}});
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(load_dataset_stamp(dir.path()).at("hash"), "abc");
  EXPECT_EQ(back.manifest().to_json(), ds.manifest().to_json());
  for (Split s : kAllSplits) {
    ASSERT_EQ(back.size(s), ds.size(s));
    for (std::size_t i = 0; i < ds.size(s); ++i) {
      const auto& a = ds.at(s, i);
      const auto& b = back.at(s, i);
      EXPECT_EQ(a.label, b.label);
      EXPECT_EQ(a.phantom_id, b.phantom_id);
      EXPECT_EQ(a.recording_id, b.recording_id);
      EXPECT_EQ(a.window_index, b.window_index);
      ASSERT_EQ(a.pixels.size(), b.pixels.size());
      EXPECT_EQ(0, std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(float)));
    }
  }
}

TEST(Persistence, CorruptShardIsRejected) {
  oce::testing::TempDir dir("shard");
  oce::io::write_text(dir / "bad.bin", "OCEWIN01");
  EXPECT_THROW(read_window_shard(dir / "bad.bin"), oce::ArtifactError);
  oce::io::write_text(dir / "worse.bin", "hello world, not a shard");
  EXPECT_THROW(read_window_shard(dir / "worse.bin"), oce::ArtifactError);
}
