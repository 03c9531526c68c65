#pragma once

// Merges fragmented AOIs: the transfer graph is coarsened to one node per AOI,
// Louvain groups the AOIs, and spatially adjacent AOIs of one community merge.

#include <cstddef>
#include <vector>

#include "aoiseg/disjoint_sets.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/louvain.hpp"

namespace aoiseg {

/// Node l is label l of the canonical form of `seg`. Edge {a, b} carries every
/// directional transition between a cell of a and an adjacent cell of b.
inline WeightedGraph coarsen(const SegmentationMap& seg, const TransferGraph& transfer) {
  if (!(seg.shape() == transfer.shape())) throw InputError("coarsen: map and transfer graph dimensions differ");
  const SegmentationMap canon = canonicalize(seg);
  WeightedGraph g(static_cast<std::size_t>(canon.max_label() + 1));
  for (std::size_t i = 0; i < canon.size(); ++i) {
    for (Direction d : kDirections) {
      const auto nb = canon.shape().neighbor(i, d);
      if (!nb || canon[i] == canon[*nb]) continue;
      const auto w = transfer.weight(i, d);
      if (w > 0)
        g.add_edge(static_cast<std::size_t>(canon[i]), static_cast<std::size_t>(canon[*nb]), static_cast<double>(w));
    }
  }
  return g;
}

/// One Louvain round. Two AOIs merge when they share a community and are
/// joined by a chain of 4-adjacent AOIs of that community. Output is canonical.
inline SegmentationMap post_process(const SegmentationMap& seg, const TransferGraph& transfer) {
  const SegmentationMap canon = canonicalize(seg);
  const std::vector<std::size_t> community = louvain(coarsen(canon, transfer));
  DisjointSets sets(community.size());
  for (std::size_t i = 0; i < canon.size(); ++i) {
    for (Direction d : {Direction::Down, Direction::Right}) {
      const auto nb = canon.shape().neighbor(i, d);
      if (!nb) continue;
      const auto a = static_cast<std::size_t>(canon[i]);
      const auto b = static_cast<std::size_t>(canon[*nb]);
      if (a != b && community[a] == community[b]) sets.unite(a, b);
    }
  }
  std::vector<Label> labels(canon.size());
  for (std::size_t i = 0; i < canon.size(); ++i)
    labels[i] = static_cast<Label>(sets.find(static_cast<std::size_t>(canon[i])));
  return canonicalize(SegmentationMap(canon.rows(), canon.cols(), std::move(labels)));
}

/// Repeats post_process until the map stops changing or `max_rounds` rounds ran.
inline SegmentationMap post_process_fixpoint(const SegmentationMap& seg, const TransferGraph& transfer,
                                             int max_rounds = 5, int* rounds_run = nullptr) {
  SegmentationMap cur = canonicalize(seg);
  int rounds = 0;
  while (rounds < max_rounds) {
    SegmentationMap next = post_process(cur, transfer);
    ++rounds;
    if (next == cur) break;
    cur = std::move(next);
  }
  if (rounds_run) *rounds_run = rounds;
  return cur;
}

}  // namespace aoiseg
