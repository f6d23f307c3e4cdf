#include <gtest/gtest.h>

#include <map>

#include "helpers.hpp"
#include "oracles.hpp"

using namespace efv;


TEST(StackFrames, SingleEventPlacement) {
  EventStream s;
  s.sensor_width = s.sensor_height = 34;
  s.events.push_back({2, 3, 500, Polarity::On});
  const FrameStack fs = stack_frames(s, 2, 34, 34);
  ASSERT_EQ(fs.data.size(), 2u * 2 * 34 * 34);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < 34; ++y)
        for (std::size_t x = 0; x < 34; ++x)
          EXPECT_EQ(fs.at(t, c, y, x), (t == 0 && c == 0 && y == 3 && x == 2) ? 1.0f : 0.0f);
}

TEST(StackFrames, DuplicateEventsNormalizeToOne) {
  EventStream s;
  s.events = {{5, 5, 10, Polarity::Off}, {5, 5, 10, Polarity::Off}, {1, 1, 10, Polarity::On}};
  const FrameStack fs = stack_frames(s, 1, 34, 34);
  EXPECT_EQ(fs.at(0, 1, 5, 5), 1.0f);
  EXPECT_EQ(fs.at(0, 0, 1, 1), 0.5f);
}

TEST(StackFrames, EmptyStreamThrows) { EXPECT_THROW(stack_frames(EventStream{}, 8, 34, 34), EmptyStream); }

TEST(StackFrames, CountsMatchBruteForceOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 4; ++trial) {
    const EventStream s = test::random_stream(rng, 1 + rng.below(5000), 34, 34, 1 + rng.below(1'000'000));
    const std::size_t T = 1 + rng.below(8), H = 4 + rng.below(31), W = 4 + rng.below(31);
    const auto counts = accumulate_frame_counts(s, T, H, W);
    EXPECT_EQ(counts, oracle::frame_counts(s, T, H, W));
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    EXPECT_EQ(total, s.size());
  }
}

TEST(StackFrames, ValuesInUnitIntervalAndPerFrameMaxIsOne) {
  Rng rng(4);
  const EventStream s = test::random_stream(rng, 3000);
  const FrameStack fs = stack_frames(s, 8, 34, 34);
  const std::size_t per = 2 * 34 * 34;
  for (std::size_t k = 0; k < 8; ++k) {
    float mx = 0;
    for (std::size_t i = 0; i < per; ++i) {
      const float v = fs.data[k * per + i];
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
      mx = std::max(mx, v);
    }
    EXPECT_EQ(mx, 1.0f);
  }
}

TEST(StackFrames, EmptySliceStaysZero) {
  EventStream s;
  s.events = {{0, 0, 0, Polarity::On}, {1, 1, 999, Polarity::On}};
  const FrameStack fs = stack_frames(s, 4, 34, 34);
  const std::size_t per = 2 * 34 * 34;
  for (std::size_t k : {1u, 2u})
    for (std::size_t i = 0; i < per; ++i) EXPECT_EQ(fs.data[k * per + i], 0.0f);
}

TEST(Voxelize, SingleOnEvent) {
  EventStream s;
  s.events.push_back({0, 0, 77, Polarity::On});
  const VoxelSet vs = voxelize(s, {4, 4, 4.0}, 32.0);
  ASSERT_EQ(vs.size(), 1u);
  const Voxel& v = vs.voxels[0];
  EXPECT_EQ(std::tie(v.x, v.y, v.t, v.event_count), std::make_tuple(0u, 0u, 0u, 1u));
  EXPECT_EQ(v.feature, (std::array<float, 4>{1.0f, 0.0f, 0.0f, 1.0f}));
  EXPECT_EQ(vs.grid_x, 9u);
  EXPECT_EQ(vs.grid_t, 8u);
}

TEST(Voxelize, BalancedPolarity) {
  EventStream s;
  s.events = {{1, 1, 0, Polarity::On}, {2, 2, 0, Polarity::Off}};
  const VoxelSet vs = voxelize(s, {4, 4, 4.0}, 32.0);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs.voxels[0].feature[3], 0.0f);
}

TEST(Voxelize, Errors) {
  EventStream s;
  s.events.push_back({0, 0, 0, Polarity::On});
  EXPECT_THROW(voxelize(s, {0, 4, 4.0}, 32.0), InvalidCell);
  EXPECT_THROW(voxelize(s, {4, 0, 4.0}, 32.0), InvalidCell);
  EXPECT_THROW(voxelize(s, {4, 4, 0.0}, 32.0), InvalidCell);
  EXPECT_THROW(voxelize(EventStream{}, {4, 4, 4.0}, 32.0), EmptyStream);
}

TEST(Voxelize, MatchesPerEventOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const EventStream s = test::random_stream(rng, 1 + rng.below(5000), 34, 34, 1 + rng.below(2'000'000));
    const VoxelCell cell{std::uint32_t(1 + rng.below(6)), std::uint32_t(1 + rng.below(6)), 0.5 + rng.uniform() * 6};
    const VoxelSet vs = voxelize(s, cell, 32.0);
    const auto cells = oracle::voxel_cells(s, cell, 32.0);
    ASSERT_EQ(vs.size(), cells.size());
    std::uint32_t max_cnt = 0;
    for (const auto& [k, c] : cells) max_cnt = std::max(max_cnt, c.on + c.off);
    std::size_t i = 0, total = 0;
    for (const auto& [key, c] : cells) {  // map order is (t, y, x) ascending
      const Voxel& v = vs.voxels[i++];
      EXPECT_EQ(std::make_tuple(v.t, v.y, v.x), key);
      EXPECT_EQ(v.event_count, c.on + c.off);
      total += v.event_count;
      double mean = 0;
      for (double t : c.times) mean += t;
      mean /= double(c.times.size());
      const double n = c.on + c.off;
      EXPECT_NEAR(v.feature[0], std::log(1.0 + c.on) / std::log(1.0 + max_cnt), 1e-7);
      EXPECT_NEAR(v.feature[1], std::log(1.0 + c.off) / std::log(1.0 + max_cnt), 1e-7);
      EXPECT_NEAR(v.feature[2], mean, 1e-7);
      EXPECT_NEAR(v.feature[3], (double(c.on) - double(c.off)) / n, 1e-7);
      for (int f = 0; f < 3; ++f) {
        EXPECT_GE(v.feature[f], 0.0f);
        EXPECT_LE(v.feature[f], 1.0f);
      }
      EXPECT_GE(v.feature[3], -1.0f);
      EXPECT_LE(v.feature[3], 1.0f);
    }
    EXPECT_EQ(total, s.size());
  }
}

TEST(Voxelize, InvariantToEventPermutation) {
  Rng rng(31);
  EventStream s = test::random_stream(rng, 2000, 34, 34, 5000);
  const VoxelSet a = voxelize(s, {4, 4, 4.0}, 32.0);
  const auto fa = accumulate_frame_counts(s, 8, 34, 34);
  for (int i = 0; i < 5; ++i) {
    rng.shuffle(s.events);
    EXPECT_EQ(voxelize(s, {4, 4, 4.0}, 32.0), a);
    EXPECT_EQ(accumulate_frame_counts(s, 8, 34, 34), fa);
  }
}

TEST(Voxelize, LastEventStaysInsideTimeGrid) {
  EventStream s;
  s.events = {{0, 0, 0, Polarity::On}, {0, 0, 1000, Polarity::On}};
  const VoxelSet vs = voxelize(s, {4, 4, 4.0}, 32.0);
  for (const auto& v : vs.voxels) EXPECT_LT(v.t, vs.grid_t);
}

namespace {
VoxelSet counts_set(std::vector<std::uint32_t> counts) {
  VoxelSet vs;
  for (std::uint32_t i = 0; i < counts.size(); ++i) {
    Voxel v;
    v.x = i;
    v.event_count = counts[i];
    vs.voxels.push_back(v);
  }
  return vs;
}
}  // namespace

TEST(SelectTopK, StrictOrdering) {
  const VoxelSet out = select_top_k(counts_set({5, 3, 1}), 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.voxels[0].event_count, 5u);
  EXPECT_EQ(out.voxels[1].event_count, 3u);
}

TEST(SelectTopK, KExceedsPopulation) {
  const VoxelSet in = counts_set({1, 2, 3});
  EXPECT_EQ(select_top_k(in, 10), in);
}

TEST(SelectTopK, ZeroKRejectedAndEmptyInputOk) {
  EXPECT_THROW(select_top_k(counts_set({1}), 0), ConfigError);
  EXPECT_TRUE(select_top_k(VoxelSet{}, 3).empty());
}

TEST(SelectTopK, TiesPreferSmallerTyx) {
  VoxelSet vs;
  for (std::uint32_t t = 0; t < 3; ++t)
    for (std::uint32_t x = 0; x < 3; ++x) vs.voxels.push_back({x, 0, t, 7, {}});
  const VoxelSet out = select_top_k(vs, 4);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(std::tie(out.voxels[3].t, out.voxels[3].x), std::make_tuple(1u, 0u));
}

TEST(SelectTopK, MatchesFullSortOracleAndIsIdempotent) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    VoxelSet vs;
    std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> used;
    while (vs.voxels.size() < 2000) {
      Voxel v{std::uint32_t(rng.below(40)), std::uint32_t(rng.below(40)), std::uint32_t(rng.below(8)),
              std::uint32_t(1 + rng.below(12)), {}};
      if (used.insert({v.t, v.y, v.x}).second) vs.voxels.push_back(v);
    }
    auto sorted = vs.voxels;
    std::sort(sorted.begin(), sorted.end(), [](const Voxel& a, const Voxel& b) {
      if (a.event_count != b.event_count) return a.event_count > b.event_count;
      return std::tie(a.t, a.y, a.x) < std::tie(b.t, b.y, b.x);
    });
    sorted.resize(512);
    const VoxelSet out = select_top_k(vs, 512);
    ASSERT_EQ(out.size(), 512u);
    std::vector<std::uint32_t> got, want;
    for (const auto& v : out.voxels) got.push_back(v.event_count);
    for (const auto& v : sorted) want.push_back(v.event_count);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    EXPECT_EQ(got, want);
    // Exact membership, and survivors keep input order.
    std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> a, b;
    for (const auto& v : out.voxels) a.insert({v.t, v.y, v.x});
    for (const auto& v : sorted) b.insert({v.t, v.y, v.x});
    EXPECT_EQ(a, b);
    std::size_t pos = 0;
    for (const auto& v : out.voxels) {
      while (pos < vs.voxels.size() && !(vs.voxels[pos] == v)) ++pos;
      EXPECT_LT(pos, vs.voxels.size());
    }
    EXPECT_EQ(select_top_k(out, 512), out);
  }
}

TEST(Preprocess, DefaultsGiveEightFramesAndAtMost512Voxels) {
  Rng rng(2);
  EventStream s = test::random_stream(rng, 5000);
  s.label = 7;
  const Sample smp = preprocess(s, PreprocessConfig{});
  EXPECT_EQ(smp.frames.frames, 8u);
  EXPECT_EQ(smp.frames.height, 34u);
  EXPECT_LE(smp.voxels.size(), 512u);
  EXPECT_EQ(smp.label, 7);
}

TEST(Cache, RoundTripIsExact) {
  Rng rng(17);
  for (int i = 0; i < 10; ++i) {
    EventStream s = test::random_stream(rng, 1 + rng.below(3000));
    s.label = int(rng.below(10));
    const Sample smp = preprocess(s, PreprocessConfig{});
    const auto bytes = encode_sample(smp);
    EXPECT_EQ(decode_sample(bytes), smp);
    EXPECT_EQ(encode_sample(decode_sample(bytes)), bytes);
  }
}

TEST(Cache, TruncationAndCorruptionRejected) {
  Rng rng(19);
  EventStream s = test::random_stream(rng, 800);
  s.label = 1;
  const auto bytes = encode_sample(preprocess(s, PreprocessConfig{}));
  for (int i = 0; i < 200; ++i) {
    const std::size_t cut = rng.below(bytes.size());
    EXPECT_THROW(decode_sample(std::span<const std::uint8_t>(bytes.data(), cut)), FormatMismatch) << cut;
  }
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_sample(extra), FormatMismatch);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_sample(bad), FormatMismatch);
}
