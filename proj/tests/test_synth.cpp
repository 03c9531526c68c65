#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "aoiseg/metrics.hpp"
#include "aoiseg/synth.hpp"
#include "oracles.hpp"

using namespace aoiseg;

TEST(GenerateAois, SingleAoiIsUniform) {
  SynthConfig cfg;
  cfg.aoi_count = 1;
  const SegmentationMap m = generate_aois(cfg);
  EXPECT_EQ(m.label_count(), 1u);
}

TEST(GenerateAois, TenByTenTwentyRegions) {
  SynthConfig cfg;
  cfg.rows = cfg.cols = 10;
  cfg.aoi_count = 20;
  const SegmentationMap m = generate_aois(cfg);
  EXPECT_EQ(m.label_count(), 20u);
  EXPECT_TRUE(oracle::valid_map(m));
}

TEST(GenerateAois, ExactCountConnectedAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.aoi_count = 1 + static_cast<int>(seed % 9);
    const SegmentationMap m = generate_aois(cfg);
    EXPECT_EQ(m.label_count(), static_cast<std::size_t>(cfg.aoi_count));
    for (Label l : m.distinct_labels()) EXPECT_EQ(oracle::component_count(m, l), 1);
    EXPECT_EQ(m, generate_aois(cfg));
  }
}

TEST(GenerateAois, TooManyAoisRejected) {
  SynthConfig cfg;
  cfg.rows = cfg.cols = 2;
  cfg.aoi_count = 5;
  EXPECT_THROW(generate_aois(cfg), InputError);
}

TEST(GenerateTrajectory, SinglePackage) {
  const GridShape shape{3, 3};
  const std::vector<GridCoord> cells = {{1, 1}, {1, 2}};
  const std::vector<GridCoord> pk = {{1, 2}};
  EXPECT_EQ(generate_trajectory(shape, cells, pk, 1).cells, (std::vector<std::size_t>{5}));
}

TEST(GenerateTrajectory, CollinearLeftToRight) {
  const GridShape shape{1, 5};
  std::vector<GridCoord> cells;
  for (int c = 0; c < 5; ++c) cells.push_back({0, c});
  const std::vector<GridCoord> pk = {{0, 0}, {0, 2}, {0, 4}};
  EXPECT_EQ(generate_trajectory(shape, cells, pk, 7).cells, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(GenerateTrajectory, PackageOutsideAoiRejected) {
  const GridShape shape{2, 2};
  const std::vector<GridCoord> cells = {{0, 0}};
  const std::vector<GridCoord> pk = {{1, 1}};
  EXPECT_THROW(generate_trajectory(shape, cells, pk, 0), InputError);
}

TEST(Routing, TwoOptNeverWorseThanNearestNeighbour) {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    std::vector<GridCoord> stops;
    for (int k = 0; k < 8; ++k) stops.push_back({static_cast<int>(rng.uniform(6)), static_cast<int>(rng.uniform(6))});
    std::vector<GridCoord> route = nearest_neighbor_route(stops, rng);
    const int nn = route_length(route);
    two_opt(route);
    EXPECT_LE(route_length(route), nn);
    EXPECT_EQ(route.front(), stops.front());
  }
}

TEST(Routing, ThreeStopsMatchExhaustiveOptimum) {
  Rng rng(33);
  for (int t = 0; t < 300; ++t) {
    std::vector<GridCoord> stops;
    for (int k = 0; k < 3; ++k) stops.push_back({static_cast<int>(rng.uniform(6)), static_cast<int>(rng.uniform(6))});
    std::vector<GridCoord> route = nearest_neighbor_route(stops, rng);
    two_opt(route);
    EXPECT_EQ(route_length(route), oracle::best_open_tour(stops)) << "trial " << t;
  }
}

// 2-opt is a local search: on six stops it reaches a reversal-local optimum
// bounded below by the exhaustive optimum, not the optimum itself.
TEST(Routing, SixPackagesReachReversalLocalOptimum) {
  Rng rng(32);
  for (int t = 0; t < 200; ++t) {
    std::vector<GridCoord> stops;
    for (int k = 0; k < 6; ++k) stops.push_back({static_cast<int>(rng.uniform(6)), static_cast<int>(rng.uniform(6))});
    std::vector<GridCoord> route = nearest_neighbor_route(stops, rng);
    const int nn = route_length(route);
    two_opt(route);
    const int len = route_length(route);
    EXPECT_LE(len, nn);
    EXPECT_GE(len, oracle::best_open_tour(stops));
    EXPECT_TRUE(std::is_permutation(route.begin(), route.end(), stops.begin(), stops.end()));
    for (std::size_t i = 1; i + 1 < route.size(); ++i)
      for (std::size_t j = i + 1; j < route.size(); ++j) {
        std::vector<GridCoord> alt = route;
        std::reverse(alt.begin() + static_cast<std::ptrdiff_t>(i), alt.begin() + static_cast<std::ptrdiff_t>(j) + 1);
        EXPECT_GE(route_length(alt), len) << "trial " << t;
      }
  }
}

TEST(DeriveRoad, ZeroProbabilityIsIdentity) {
  SynthConfig cfg;
  const SegmentationMap truth = generate_aois(cfg);
  EXPECT_EQ(derive_road_partition(truth, 0.0, 5), canonicalize(truth));
}

TEST(DeriveRoad, CertainMergeOfTwoAois) {
  const SegmentationMap two(2, 2, std::vector<Label>{0, 0, 1, 1});
  EXPECT_EQ(derive_road_partition(two, 1.0, 5).label_count(), 1u);
}

TEST(DeriveRoad, UnionOfTruthAois) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const SegmentationMap truth = generate_aois(cfg);
    const SegmentationMap road = derive_road_partition(truth, 0.3, seed);
    EXPECT_GE(road.label_count(), 1u);
    EXPECT_LE(road.label_count(), 6u);
    EXPECT_TRUE(oracle::valid_map(road));
    // Same truth label implies same road label.
    for (std::size_t i = 0; i < truth.size(); ++i)
      for (std::size_t j = 0; j < truth.size(); ++j)
        if (truth[i] == truth[j]) {
          EXPECT_EQ(road[i], road[j]);
        }
  }
}

TEST(GenerateInstance, InvariantsHold) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const Instance inst = generate_instance(cfg);
    ASSERT_TRUE(inst.ground_truth);
    const SegmentationMap& truth = *inst.ground_truth;
    EXPECT_TRUE(oracle::valid_map(truth));
    EXPECT_TRUE(oracle::valid_map(inst.road_partition));
    EXPECT_EQ(inst.trajectories.size(), static_cast<std::size_t>(cfg.aoi_count * cfg.trajectories_per_courier));
    for (std::size_t courier = 0; courier < inst.packages.size(); ++courier) {
      ASSERT_FALSE(inst.packages[courier].empty());
      const Label l = truth.at(inst.packages[courier].front());
      for (GridCoord g : inst.packages[courier]) EXPECT_EQ(truth.at(g), l);
    }
    for (const Trajectory& t : inst.trajectories) {
      for (std::size_t k = 0; k + 1 < t.size(); ++k) {
        EXPECT_NE(t.cells[k], t.cells[k + 1]);
        EXPECT_TRUE(adjacent4(inst.shape().coord(t.cells[k]), inst.shape().coord(t.cells[k + 1])));
      }
    }
    // Trajectories never leave their courier's AOI, so the truth has no switches.
    EXPECT_EQ(r1(truth, inst.trajectories), 0.0);
  }
}

TEST(GenerateInstance, BitReproducible) {
  SynthConfig cfg;
  cfg.commute = true;
  EXPECT_EQ(generate_instance(cfg), generate_instance(cfg));
  cfg.seed += 1;
  SynthConfig other;
  other.commute = true;
  EXPECT_NE(generate_instance(cfg), generate_instance(other));
}

TEST(GenerateInstance, CommuteStartsAtDepot) {
  SynthConfig cfg;
  cfg.commute = true;
  const Instance inst = generate_instance(cfg);
  const GridShape shape = inst.shape();
  for (const Trajectory& t : inst.trajectories) EXPECT_EQ(t.cells.front(), shape.index(GridCoord{3, 3}));
}
