#pragma once

// SyntheticAOI benchmark generation: ground-truth AOIs by randomized region
// growing, courier trajectories from a nearest-neighbour + 2-opt routing
// heuristic, and a coarsened road partition obtained by merging AOIs.

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "aoiseg/disjoint_sets.hpp"
#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/rng.hpp"

namespace aoiseg {

struct SynthConfig {
  int rows = 6;
  int cols = 6;
  int aoi_count = 6;
  int trajectories_per_courier = 8;
  int packages_per_trajectory = 10;
  double road_merge_probability = 0.3;
  // Prepend a walk from a shared depot cell to every trajectory.
  bool commute = false;
  std::uint64_t seed = 3047;
};

/// Generated or ingested benchmark data. Ingested data has no ground truth.
struct Instance {
  int rows = 0;
  int cols = 0;
  std::optional<SegmentationMap> ground_truth;
  SegmentationMap road_partition;
  std::vector<Trajectory> trajectories;
  std::vector<std::vector<GridCoord>> packages;  // per courier
  std::uint64_t seed = 0;

  GridShape shape() const { return {rows, cols}; }
  bool operator==(const Instance&) const = default;
};

using SyntheticInstance = Instance;

inline void validate(const SynthConfig& cfg) {
  if (cfg.rows <= 0 || cfg.cols <= 0) throw InputError("synth: grid dimensions must be positive");
  if (cfg.aoi_count < 1) throw InputError("synth: aoi_count must be at least 1");
  if (static_cast<std::size_t>(cfg.aoi_count) > static_cast<std::size_t>(cfg.rows) * static_cast<std::size_t>(cfg.cols))
    throw InputError("synth: aoi_count exceeds the number of cells");
  if (cfg.trajectories_per_courier < 0 || cfg.packages_per_trajectory < 1)
    throw InputError("synth: need at least one package per trajectory");
  if (!(cfg.road_merge_probability >= 0.0 && cfg.road_merge_probability <= 1.0))
    throw InputError("synth: road_merge_probability must lie in [0,1]");
}

/// K connected regions grown from K random seed cells by multi-source BFS.
/// Regions expand one ring per round, so sizes stay comparable; the order in
/// which a ring's cells claim their neighbours, and the direction order of
/// each claim, are shuffled.
inline SegmentationMap generate_aois(const SynthConfig& cfg) {
  validate(cfg);
  const GridShape shape{cfg.rows, cfg.cols};
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(shape.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.aoi_count); ++k) {
    std::swap(order[k], order[k + rng.uniform(order.size() - k)]);
  }
  std::vector<Label> labels(shape.size(), -1);
  std::vector<std::size_t> ring;
  for (int k = 0; k < cfg.aoi_count; ++k) {
    labels[order[static_cast<std::size_t>(k)]] = k;
    ring.push_back(order[static_cast<std::size_t>(k)]);
  }
  while (!ring.empty()) {
    for (std::size_t i = ring.size(); i > 1; --i) std::swap(ring[i - 1], ring[rng.uniform(i)]);
    std::vector<std::size_t> next;
    for (std::size_t cell : ring) {
      std::array<Direction, 4> dirs = kDirections;
      for (std::size_t i = dirs.size(); i > 1; --i) std::swap(dirs[i - 1], dirs[rng.uniform(i)]);
      for (Direction d : dirs) {
        const auto nb = shape.neighbor(cell, d);
        if (nb && labels[*nb] < 0) {
          labels[*nb] = labels[cell];
          next.push_back(*nb);
        }
      }
    }
    ring.swap(next);
  }
  return canonicalize(SegmentationMap(cfg.rows, cfg.cols, std::move(labels)));
}

inline int manhattan(GridCoord a, GridCoord b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

// Open-path length of visiting `stops` in the given order.
inline int route_length(std::span<const GridCoord> stops) {
  int len = 0;
  for (std::size_t k = 1; k < stops.size(); ++k) len += manhattan(stops[k - 1], stops[k]);
  return len;
}

/// Nearest-neighbour order starting at stops[0]; equidistant candidates are
/// broken uniformly at random.
inline std::vector<GridCoord> nearest_neighbor_route(std::span<const GridCoord> stops, Rng& rng) {
  std::vector<GridCoord> route;
  if (stops.empty()) return route;
  std::vector<GridCoord> remaining(stops.begin() + 1, stops.end());
  route.push_back(stops.front());
  while (!remaining.empty()) {
    int best = INT32_MAX;
    std::vector<std::size_t> ties;
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      const int d = manhattan(route.back(), remaining[k]);
      if (d < best) {
        best = d;
        ties.assign(1, k);
      } else if (d == best) {
        ties.push_back(k);
      }
    }
    const std::size_t pick = ties[rng.uniform(ties.size())];
    route.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return route;
}

/// First-improvement 2-opt on an open path with a fixed first stop.
inline void two_opt(std::vector<GridCoord>& route) {
  const std::size_t n = route.size();
  if (n < 3) return;
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 1; i + 1 < n && !improved; ++i) {
      for (std::size_t j = i + 1; j < n && !improved; ++j) {
        // Reversing route[i..j] replaces edges (i-1,i) and (j,j+1).
        int before = manhattan(route[i - 1], route[i]);
        int after = manhattan(route[i - 1], route[j]);
        if (j + 1 < n) {
          before += manhattan(route[j], route[j + 1]);
          after += manhattan(route[i], route[j + 1]);
        }
        if (after < before) {
          std::reverse(route.begin() + static_cast<std::ptrdiff_t>(i),
                       route.begin() + static_cast<std::ptrdiff_t>(j) + 1);
          improved = true;
        }
      }
    }
  }
}

namespace detail {

// Shortest 4-neighbour path from a to b through cells where allowed[idx] != 0.
// BFS expands neighbours in Up, Down, Left, Right order, so the path is deterministic.
inline std::vector<std::size_t> restricted_path(const GridShape& shape, const std::vector<std::uint8_t>& allowed,
                                                std::size_t a, std::size_t b) {
  if (a == b) return {a};
  std::vector<std::size_t> parent(shape.size(), SIZE_MAX);
  std::queue<std::size_t> queue;
  queue.push(a);
  parent[a] = a;
  while (!queue.empty()) {
    const std::size_t cur = queue.front();
    queue.pop();
    if (cur == b) break;
    for (Direction d : kDirections) {
      const auto nb = shape.neighbor(cur, d);
      if (nb && allowed[*nb] && parent[*nb] == SIZE_MAX) {
        parent[*nb] = cur;
        queue.push(*nb);
      }
    }
  }
  if (parent[b] == SIZE_MAX) throw InputError("no path between stops inside the AOI");
  std::vector<std::size_t> path;
  for (std::size_t cur = b; cur != a; cur = parent[cur]) path.push_back(cur);
  path.push_back(a);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace detail

/// Courier trajectory visiting every package once, stops ordered by
/// nearest neighbour from packages[0] then improved by 2-opt, consecutive
/// stops joined by shortest paths that stay inside the AOI.
inline Trajectory generate_trajectory(const GridShape& shape, std::span<const GridCoord> aoi_cells,
                                      std::span<const GridCoord> packages, std::uint64_t seed) {
  if (packages.empty()) throw InputError("generate_trajectory: no packages");
  std::vector<std::uint8_t> allowed(shape.size(), 0);
  for (GridCoord g : aoi_cells) {
    if (!shape.contains(g)) throw InputError("generate_trajectory: AOI cell outside grid");
    allowed[shape.index(g)] = 1;
  }
  for (GridCoord g : packages) {
    if (!shape.contains(g) || !allowed[shape.index(g)])
      throw InputError("generate_trajectory: package outside the courier's AOI");
  }
  Rng rng(seed);
  std::vector<GridCoord> route = nearest_neighbor_route(packages, rng);
  two_opt(route);
  Trajectory out;
  out.cells.push_back(shape.index(route.front()));
  for (std::size_t k = 1; k < route.size(); ++k) {
    const auto path = detail::restricted_path(shape, allowed, shape.index(route[k - 1]), shape.index(route[k]));
    for (std::size_t s = 1; s < path.size(); ++s) out.cells.push_back(path[s]);
  }
  return out;
}

/// Merges each adjacent AOI pair independently with probability p_merge.
/// Merged regions are unions of adjacent connected AOIs, so they stay connected.
inline SegmentationMap derive_road_partition(const SegmentationMap& ground_truth, double p_merge, std::uint64_t seed) {
  if (!(p_merge >= 0.0 && p_merge <= 1.0)) throw InputError("road merge probability must lie in [0,1]");
  const SegmentationMap truth = canonicalize(ground_truth);
  const auto k = static_cast<std::size_t>(truth.max_label() + 1);
  std::vector<std::pair<Label, Label>> adjacency;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (Direction d : {Direction::Down, Direction::Right}) {
      const auto nb = truth.shape().neighbor(i, d);
      if (nb && truth[*nb] != truth[i])
        adjacency.emplace_back(std::min(truth[i], truth[*nb]), std::max(truth[i], truth[*nb]));
    }
  }
  std::sort(adjacency.begin(), adjacency.end());
  adjacency.erase(std::unique(adjacency.begin(), adjacency.end()), adjacency.end());

  DisjointSets sets(k);
  Rng rng(splitmix64(seed) ^ 0x524F4144ULL);
  for (auto [a, b] : adjacency) {
    if (rng.bernoulli(p_merge)) sets.unite(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }
  std::vector<Label> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) out[i] = static_cast<Label>(sets.find(static_cast<std::size_t>(truth[i])));
  return canonicalize(SegmentationMap(truth.rows(), truth.cols(), std::move(out)));
}

/// Full SyntheticAOI instance; identical configs give identical instances.
inline Instance generate_instance(const SynthConfig& cfg) {
  validate(cfg);
  Instance inst;
  inst.rows = cfg.rows;
  inst.cols = cfg.cols;
  inst.seed = cfg.seed;
  const GridShape shape{cfg.rows, cfg.cols};
  SegmentationMap truth = generate_aois(cfg);
  inst.road_partition = derive_road_partition(truth, cfg.road_merge_probability, cfg.seed);

  std::vector<std::vector<GridCoord>> aoi_cells(static_cast<std::size_t>(cfg.aoi_count));
  for (std::size_t i = 0; i < truth.size(); ++i) aoi_cells[static_cast<std::size_t>(truth[i])].push_back(shape.coord(i));

  const GridCoord depot{cfg.rows / 2, cfg.cols / 2};
  inst.packages.resize(aoi_cells.size());
  for (std::size_t courier = 0; courier < aoi_cells.size(); ++courier) {
    Rng rng(splitmix64(cfg.seed) ^ splitmix64(0xC0C0 + courier));
    const auto& cells = aoi_cells[courier];
    for (int t = 0; t < cfg.trajectories_per_courier; ++t) {
      std::vector<GridCoord> stops;
      for (int p = 0; p < cfg.packages_per_trajectory; ++p) stops.push_back(cells[rng.uniform(cells.size())]);
      inst.packages[courier].insert(inst.packages[courier].end(), stops.begin(), stops.end());
      Trajectory route = generate_trajectory(shape, cells, stops, rng.next());
      if (cfg.commute) {
        const GridCoord first = shape.coord(route.cells.front());
        const std::vector<GridCoord> walk{depot, first};
        Trajectory path = densify(walk, shape);
        path.cells.insert(path.cells.end(), route.cells.begin() + 1, route.cells.end());
        route = std::move(path);
      }
      inst.trajectories.push_back(std::move(route));
    }
  }
  inst.ground_truth = std::move(truth);
  return inst;
}

}  // namespace aoiseg
