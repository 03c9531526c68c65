#pragma once

// Comparison segmenters. Every one of them returns a valid map: labels are
// split into 4-connected components and canonicalized as the last step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "aoiseg/env.hpp"
#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/louvain.hpp"
#include "aoiseg/rng.hpp"

namespace aoiseg {

// ---------------------------------------------------------------- GreedySeg

/// One row-major pass over the cells. Each cell joins the neighbouring AOI
/// that minimizes total switches; ties keep the current AOI, then prefer the
/// smallest label. Moves that would disconnect the cell's AOI are skipped.
inline SegmentationMap greedy_seg(const SegmentationMap& initial, const TransferGraph& transfer) {
  if (!(initial.shape() == transfer.shape())) throw InputError("greedy_seg: dimension mismatch");
  SegmentationMap seg = initial;
  const GridShape& shape = seg.shape();
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const Label own = seg[i];
    std::vector<Label> candidates;
    for (Direction d : kDirections) {
      const auto nb = shape.neighbor(i, d);
      if (nb && seg[*nb] != own) candidates.push_back(seg[*nb]);
    }
    if (candidates.empty() || !detail::removal_keeps_connected(seg, i)) continue;
    std::sort(candidates.begin(), candidates.end());
    // Switches on edges incident to i when i carries `label`.
    auto incident = [&](Label label) {
      std::uint64_t s = 0;
      for (Direction d : kDirections) {
        const auto nb = shape.neighbor(i, d);
        if (nb && seg[*nb] != label) s += transfer.undirected(i, d);
      }
      return s;
    };
    Label best = own;
    std::uint64_t best_cost = incident(own);
    for (Label l : candidates) {
      const std::uint64_t c = incident(l);
      if (c < best_cost) {
        best = l;
        best_cost = c;
      }
    }
    seg.set(i, best);
  }
  return canonicalize(split_disconnected(seg));
}

inline SegmentationMap greedy_seg(const SegmentationMap& initial, std::span<const Trajectory> trajectories) {
  return greedy_seg(initial, build_transfer_graph(trajectories, initial.rows(), initial.cols()));
}

// ---------------------------------------------------------------- RoadNetwork

inline SegmentationMap road_seg(const SegmentationMap& road) {
  if (!is_valid(road)) throw InputError("road_seg: road partition is not a valid map");
  return canonicalize(road);
}

// ---------------------------------------------------------------- Louvain

/// Cells are nodes; each 4-adjacent pair is joined by the sum of both
/// directional transition counts.
inline WeightedGraph grid_graph(const TransferGraph& transfer) {
  const GridShape& shape = transfer.shape();
  WeightedGraph g(shape.size());
  for (std::size_t i = 0; i < shape.size(); ++i)
    for (Direction d : {Direction::Down, Direction::Right}) {
      const auto nb = shape.neighbor(i, d);
      if (nb) g.add_edge(i, *nb, static_cast<double>(transfer.undirected(i, d)));
    }
  return g;
}

inline SegmentationMap louvain_grid(const TransferGraph& transfer) {
  const std::vector<std::size_t> community = louvain(grid_graph(transfer));
  std::vector<Label> labels(community.begin(), community.end());
  return canonicalize(split_disconnected(SegmentationMap(transfer.rows(), transfer.cols(), std::move(labels))));
}

// ---------------------------------------------------------------- shared clustering helpers

namespace detail {

struct Point2 {
  double row = 0.0;
  double col = 0.0;
};

inline double dist2(Point2 a, Point2 b) {
  const double dr = a.row - b.row;
  const double dc = a.col - b.col;
  return dr * dr + dc * dc;
}

inline std::vector<Point2> to_points(std::span<const GridCoord> packages, const GridShape& shape) {
  std::vector<Point2> pts;
  pts.reserve(packages.size());
  for (GridCoord g : packages) {
    if (!shape.contains(g)) throw InputError("package outside grid");
    pts.push_back({static_cast<double>(g.row), static_cast<double>(g.col)});
  }
  return pts;
}

// Each cell takes the index of its nearest centroid (ties to the lower index).
inline std::vector<Label> nearest_centroid_labels(const GridShape& shape, std::span<const Point2> centroids) {
  std::vector<Label> labels(shape.size(), 0);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const GridCoord g = shape.coord(i);
    const Point2 p{static_cast<double>(g.row), static_cast<double>(g.col)};
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      const double d = dist2(p, centroids[k]);
      if (d < best) {
        best = d;
        labels[i] = static_cast<Label>(k);
      }
    }
  }
  return labels;
}

}  // namespace detail

// ---------------------------------------------------------------- DBSCAN

inline constexpr int kDbscanNoise = -1;

/// Classic DBSCAN over points (coincident packages count separately). A point
/// is core when its eps-ball, itself included, holds at least min_pts points.
/// Returns a cluster id per point, kDbscanNoise for noise; clusters are
/// numbered in order of their first core point.
inline std::vector<int> dbscan(std::span<const GridCoord> points, double eps, int min_pts) {
  if (!(eps > 0.0)) throw InputError("dbscan: eps must be positive");
  if (min_pts < 1) throw InputError("dbscan: min_pts must be at least 1");
  const std::size_t n = points.size();
  const double eps2 = eps * eps;
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      const double dr = points[i].row - points[j].row;
      const double dc = points[i].col - points[j].col;
      if (dr * dr + dc * dc <= eps2) out.push_back(j);
    }
    return out;
  };
  constexpr int kUnvisited = -2;
  std::vector<int> cluster(n, kUnvisited);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cluster[i] != kUnvisited) continue;
    const auto seeds = neighbours(i);
    if (seeds.size() < static_cast<std::size_t>(min_pts)) {
      cluster[i] = kDbscanNoise;
      continue;
    }
    const int id = next++;
    cluster[i] = id;
    std::vector<std::size_t> queue(seeds.begin(), seeds.end());
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const std::size_t j = queue[q];
      if (cluster[j] == kDbscanNoise) cluster[j] = id;  // border point
      if (cluster[j] != kUnvisited) continue;
      cluster[j] = id;
      const auto more = neighbours(j);
      if (more.size() >= static_cast<std::size_t>(min_pts)) queue.insert(queue.end(), more.begin(), more.end());
    }
  }
  return cluster;
}

/// Cells go to the nearest cluster centroid. When every package is noise the
/// whole grid becomes a single AOI.
inline SegmentationMap dbscan_seg(std::span<const GridCoord> packages, double eps, int min_pts, const GridShape& shape) {
  if (packages.empty()) throw InputError("dbscan_seg: no packages");
  const auto pts = detail::to_points(packages, shape);
  const std::vector<int> cluster = dbscan(packages, eps, min_pts);
  const int clusters = *std::max_element(cluster.begin(), cluster.end()) + 1;
  if (clusters <= 0) return SegmentationMap(shape.rows, shape.cols, 0);
  std::vector<detail::Point2> centroids(static_cast<std::size_t>(clusters));
  std::vector<double> counts(static_cast<std::size_t>(clusters), 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (cluster[i] < 0) continue;
    auto& c = centroids[static_cast<std::size_t>(cluster[i])];
    c.row += pts[i].row;
    c.col += pts[i].col;
    counts[static_cast<std::size_t>(cluster[i])] += 1.0;
  }
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    centroids[k].row /= counts[k];
    centroids[k].col /= counts[k];
  }
  return canonicalize(
      split_disconnected(SegmentationMap(shape.rows, shape.cols, detail::nearest_centroid_labels(shape, centroids))));
}

// ---------------------------------------------------------------- CKMeans

struct KMeansResult {
  std::vector<std::size_t> assignment;
  std::vector<detail::Point2> centroids;
};

/// k-means++ seeding followed by Lloyd iterations until assignments settle.
/// An emptied cluster keeps its previous centroid.
inline KMeansResult kmeans(std::span<const detail::Point2> pts, std::size_t k, Rng& rng, int max_iters = 100) {
  if (k == 0 || k > pts.size()) throw InputError("kmeans: k must lie in [1, number of points]");
  KMeansResult r;
  r.centroids.push_back(pts[rng.uniform(pts.size())]);
  std::vector<double> d2(pts.size());
  while (r.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : r.centroids) best = std::min(best, detail::dist2(pts[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform01() * total;
      for (pick = 0; pick + 1 < pts.size(); ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    } else {
      pick = rng.uniform(pts.size());
    }
    r.centroids.push_back(pts[pick]);
  }
  r.assignment.assign(pts.size(), 0);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = detail::dist2(pts[i], r.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (r.assignment[i] != best) changed = true;
      r.assignment[i] = best;
    }
    if (!changed) break;
    std::vector<detail::Point2> sums(k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      sums[r.assignment[i]].row += pts[i].row;
      sums[r.assignment[i]].col += pts[i].col;
      ++counts[r.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        r.centroids[c] = {sums[c].row / static_cast<double>(counts[c]), sums[c].col / static_cast<double>(counts[c])};
  }
  return r;
}

/// Mean silhouette with Euclidean distance. A single cluster, or a point
/// alone in its cluster, scores 0.
inline double silhouette(std::span<const detail::Point2> pts, std::span<const std::size_t> assignment, std::size_t k) {
  if (k <= 1 || pts.empty()) return 0.0;
  std::vector<std::size_t> size(k, 0);
  for (std::size_t a : assignment) ++size[a];
  double total = 0.0;
  std::vector<double> sum(k);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) sum[assignment[j]] += std::sqrt(detail::dist2(pts[i], pts[j]));
    const std::size_t own = assignment[i];
    if (size[own] <= 1) continue;
    const double a = sum[own] / static_cast<double>(size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != own && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
    if (!std::isfinite(b)) continue;
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(pts.size());
}

/// k-means for every k in [k_min, k_max]; the k with the highest silhouette
/// wins (ties to the smaller k). Each cluster claims the bounding box of its
/// packages; where boxes overlap the cluster with more packages wins (ties to
/// the lower index), and uncovered cells go to the nearest centroid.
inline SegmentationMap ckmeans_seg(std::span<const GridCoord> packages, int k_min, int k_max, const GridShape& shape,
                                   std::uint64_t seed) {
  if (packages.empty()) throw InputError("ckmeans_seg: no packages");
  if (k_min < 1 || k_min > k_max || static_cast<std::size_t>(k_max) > packages.size())
    throw InputError("ckmeans_seg: need 1 <= k_min <= k_max <= package count");
  const auto pts = detail::to_points(packages, shape);
  std::optional<KMeansResult> best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  for (int k = k_min; k <= k_max; ++k) {
    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(k));
    KMeansResult r = kmeans(pts, static_cast<std::size_t>(k), rng);
    const double s = silhouette(pts, r.assignment, static_cast<std::size_t>(k));
    if (s > best_score) {
      best_score = s;
      best = std::move(r);
      best_k = static_cast<std::size_t>(k);
    }
  }
  std::vector<std::size_t> count(best_k, 0);
  std::vector<int> r0(best_k, shape.rows), r1(best_k, -1), c0(best_k, shape.cols), c1(best_k, -1);
  for (std::size_t i = 0; i < packages.size(); ++i) {
    const std::size_t c = best->assignment[i];
    ++count[c];
    r0[c] = std::min(r0[c], packages[i].row);
    r1[c] = std::max(r1[c], packages[i].row);
    c0[c] = std::min(c0[c], packages[i].col);
    c1[c] = std::max(c1[c], packages[i].col);
  }
  std::vector<Label> labels = detail::nearest_centroid_labels(shape, best->centroids);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const GridCoord g = shape.coord(i);
    std::optional<std::size_t> owner;
    for (std::size_t c = 0; c < best_k; ++c) {
      if (count[c] == 0 || g.row < r0[c] || g.row > r1[c] || g.col < c0[c] || g.col > c1[c]) continue;
      if (!owner || count[c] > count[*owner]) owner = c;
    }
    if (owner) labels[i] = static_cast<Label>(*owner);
  }
  return canonicalize(split_disconnected(SegmentationMap(shape.rows, shape.cols, std::move(labels))));
}

// ---------------------------------------------------------------- GCLP

/// Label propagation with a geographic penalty. Starting from `initial`, cells
/// are swept row-major; a cell takes the label among its own and its
/// neighbours' that maximizes (summed undirected transition weight to
/// neighbours carrying that label) - lambda * (Euclidean distance from the cell
/// to that label's current centroid). Ties keep the current label, then
/// prefer the smallest. Centroids are updated after every move. Stops after a
/// sweep without change or after max_iters sweeps. No connectivity repair.
inline SegmentationMap gclp_propagate(const SegmentationMap& initial, const TransferGraph& transfer, double lambda,
                                      int max_iters, int* sweeps_run = nullptr) {
  if (!(lambda >= 0.0)) throw InputError("gclp: lambda must be non-negative");
  if (!(initial.shape() == transfer.shape())) throw InputError("gclp: dimension mismatch");
  if (max_iters < 0) throw InputError("gclp: max_iters must be non-negative");
  SegmentationMap seg = initial;
  const GridShape& shape = seg.shape();
  const auto labels = static_cast<std::size_t>(seg.max_label() + 1);
  std::vector<double> sum_r(labels, 0.0), sum_c(labels, 0.0), count(labels, 0.0);
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const GridCoord g = shape.coord(i);
    const auto l = static_cast<std::size_t>(seg[i]);
    sum_r[l] += g.row;
    sum_c[l] += g.col;
    count[l] += 1.0;
  }
  int sweeps = 0;
  for (; sweeps < max_iters; ++sweeps) {
    bool changed = false;
    for (std::size_t i = 0; i < seg.size(); ++i) {
      const GridCoord g = shape.coord(i);
      const Label own = seg[i];
      std::vector<Label> candidates{own};
      for (Direction d : kDirections) {
        const auto nb = shape.neighbor(i, d);
        if (nb && std::find(candidates.begin(), candidates.end(), seg[*nb]) == candidates.end())
          candidates.push_back(seg[*nb]);
      }
      auto score = [&](Label l) {
        double w = 0.0;
        for (Direction d : kDirections) {
          const auto nb = shape.neighbor(i, d);
          if (nb && seg[*nb] == l) w += static_cast<double>(transfer.undirected(i, d));
        }
        const auto li = static_cast<std::size_t>(l);
        const double dr = g.row - sum_r[li] / count[li];
        const double dc = g.col - sum_c[li] / count[li];
        return w - lambda * std::sqrt(dr * dr + dc * dc);
      };
      Label best = own;
      double best_score = score(own);
      std::sort(candidates.begin() + 1, candidates.end());
      for (std::size_t k = 1; k < candidates.size(); ++k) {
        const double s = score(candidates[k]);
        if (s > best_score) {
          best = candidates[k];
          best_score = s;
        }
      }
      if (best == own) continue;
      const auto from = static_cast<std::size_t>(own);
      const auto to = static_cast<std::size_t>(best);
      sum_r[from] -= g.row;
      sum_c[from] -= g.col;
      count[from] -= 1.0;
      sum_r[to] += g.row;
      sum_c[to] += g.col;
      count[to] += 1.0;
      seg.set(i, best);
      changed = true;
    }
    if (!changed) break;
  }
  if (sweeps_run) *sweeps_run = sweeps;
  return seg;
}

inline SegmentationMap gclp_seg(const TransferGraph& transfer, double lambda, int max_iters) {
  const SegmentationMap start = SegmentationMap::singletons(transfer.rows(), transfer.cols());
  return canonicalize(split_disconnected(gclp_propagate(start, transfer, lambda, max_iters)));
}

}  // namespace aoiseg
