#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <vector>

#include "aoiseg/road_init.hpp"
#include "oracles.hpp"

using namespace aoiseg;

namespace {

RoadMask random_mask(int rows, int cols, double p, Rng& rng) {
  RoadMask mask{GridShape{rows, cols}, std::vector<std::uint8_t>(static_cast<std::size_t>(rows * cols), 0)};
  for (auto& c : mask.cells) c = rng.bernoulli(p) ? 1 : 0;
  mask.cells[rng.uniform(mask.cells.size())] = 0;
  return mask;
}

// Number of 4-connected non-road regions, counted by flood fill.
int region_count(const RoadMask& mask) {
  const int rows = mask.shape.rows, cols = mask.shape.cols;
  std::vector<int> seen(mask.cells.size(), 0);
  int count = 0;
  for (int start = 0; start < rows * cols; ++start) {
    if (mask.cells[static_cast<std::size_t>(start)] || seen[static_cast<std::size_t>(start)]) continue;
    ++count;
    std::vector<int> stack{start};
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      const int r = cur / cols, c = cur % cols;
      const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (auto& p : nb) {
        if (p[0] < 0 || p[0] >= rows || p[1] < 0 || p[1] >= cols) continue;
        const auto id = static_cast<std::size_t>(p[0] * cols + p[1]);
        if (mask.cells[id] || seen[id]) continue;
        seen[id] = 1;
        stack.push_back(static_cast<int>(id));
      }
    }
  }
  return count;
}

}  // namespace

TEST(Threshold, UniformRasters) {
  EXPECT_EQ(threshold(GrayRaster(3, 4, 255), 128).road_count(), 0u);
  EXPECT_EQ(threshold(GrayRaster(3, 4, 0), 128).road_count(), 12u);
  EXPECT_THROW(threshold(GrayRaster(2, 2), 256), InputError);
  EXPECT_THROW(GrayRaster(0, 2), InputError);
}

TEST(Threshold, CheckerboardIsCellwise) {
  GrayRaster raster(5, 6);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) raster.intensity[static_cast<std::size_t>(r * 6 + c)] = (r + c) % 2 ? 255 : 0;
  const RoadMask mask = threshold(raster, 128);
  for (std::size_t i = 0; i < mask.cells.size(); ++i) EXPECT_EQ(mask.is_road(i), raster.intensity[i] == 0);
}

TEST(Threshold, CutoffIsInclusive) {
  GrayRaster raster(1, 3);
  raster.intensity = {127, 128, 129};
  EXPECT_EQ(threshold(raster, 128).cells, (std::vector<std::uint8_t>{1, 1, 0}));
}

TEST(Components, EmptyMaskIsOneRegion) {
  const RoadMask mask{GridShape{4, 4}, std::vector<std::uint8_t>(16, 0)};
  EXPECT_EQ(components(mask), SegmentationMap(4, 4, 0));
}

TEST(Components, RoadRowSplitsInTwo) {
  RoadMask mask{GridShape{5, 4}, std::vector<std::uint8_t>(20, 0)};
  for (int c = 0; c < 4; ++c) mask.cells[static_cast<std::size_t>(2 * 4 + c)] = 1;
  const SegmentationMap seg = components(mask);
  EXPECT_EQ(seg.at(0, 0), 0);
  EXPECT_EQ(seg.at(4, 3), 1);
  EXPECT_EQ(seg.at(2, 1), kRoadLabel);
}

TEST(Components, AllRoadRejected) {
  EXPECT_THROW(components(RoadMask{GridShape{2, 2}, std::vector<std::uint8_t>(4, 1)}), InputError);
}

TEST(Components, CountMatchesFloodFill) {
  Rng rng(41);
  for (int t = 0; t < 100; ++t) {
    const RoadMask mask = random_mask(7, 8, 0.45, rng);
    const SegmentationMap seg = components(mask);
    const int k = region_count(mask);
    EXPECT_EQ(seg.max_label() + 1, k);
    for (Label l = 0; l < k; ++l) EXPECT_EQ(oracle::component_count(seg, l), 1);
    for (std::size_t i = 0; i < seg.size(); ++i) EXPECT_EQ(seg[i] == kRoadLabel, mask.is_road(i));
  }
}

TEST(Expand, NoRoadIsIdentity) {
  Rng rng(42);
  const SegmentationMap m = oracle::random_valid_map(5, 5, 3, rng);
  EXPECT_EQ(expand(m), m);
}

TEST(Expand, SingleRoadCellTakesSmallerLabel) {
  const SegmentationMap seg(1, 3, std::vector<Label>{0, kRoadLabel, 1});
  EXPECT_EQ(expand(seg).at(0, 1), 0);
  const SegmentationMap flipped(1, 3, std::vector<Label>{1, kRoadLabel, 0});
  EXPECT_EQ(expand(flipped).at(0, 1), 0);
  EXPECT_THROW(expand(SegmentationMap(2, 2, std::vector<Label>(4, kRoadLabel))), InputError);
}

TEST(Expand, ThickBandTakesNearestSmallestLabel) {
  Rng rng(43);
  for (int t = 0; t < 60; ++t) {
    const RoadMask mask = random_mask(8, 9, 0.6, rng);
    const SegmentationMap seg = components(mask);
    const int k = seg.max_label() + 1;
    const auto dist = oracle::label_distances(seg, k);
    const SegmentationMap out = expand(seg);
    for (std::size_t i = 0; i < seg.size(); ++i) {
      if (seg[i] != kRoadLabel) {
        EXPECT_EQ(out[i], seg[i]);
        continue;
      }
      int best = std::numeric_limits<int>::max();
      Label expected = kRoadLabel;
      for (Label l = 0; l < k; ++l)
        if (dist[static_cast<std::size_t>(l)][i] < best) {
          best = dist[static_cast<std::size_t>(l)][i];
          expected = l;
        }
      EXPECT_EQ(out[i], expected) << "trial " << t << " cell " << i;
    }
  }
}

TEST(RoadPartition, PipelineIsValidAndDeterministic) {
  Rng rng(44);
  for (int t = 0; t < 50; ++t) {
    GrayRaster raster(9, 7);
    for (auto& v : raster.intensity) v = static_cast<std::uint8_t>(rng.uniform(256));
    raster.intensity[rng.uniform(raster.intensity.size())] = 255;
    const SegmentationMap seg = road_partition_from_raster(raster);
    EXPECT_TRUE(oracle::valid_map(seg));
    EXPECT_TRUE(is_canonical(seg));
    EXPECT_EQ(seg, road_partition_from_raster(raster));
  }
}
