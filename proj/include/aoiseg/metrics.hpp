#pragma once

// Evaluation quantities: trajectory switches (R1), pair-counting agreement
// (FMI, Co-AOI rate) and road-partition similarity (R2).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"

namespace aoiseg {

inline std::uint64_t switch_count(const SegmentationMap& seg, const Trajectory& trajectory) {
  std::uint64_t switches = 0;
  for (std::size_t k = 1; k < trajectory.cells.size(); ++k) {
    const std::size_t a = trajectory.cells[k - 1];
    const std::size_t b = trajectory.cells[k];
    if (a >= seg.size() || b >= seg.size()) throw InputError("trajectory cell out of bounds");
    if (seg[a] != seg[b]) ++switches;
  }
  return switches;
}

inline std::uint64_t total_switches(const SegmentationMap& seg, std::span<const Trajectory> trajectories) {
  std::uint64_t total = 0;
  for (const Trajectory& t : trajectories) total += switch_count(seg, t);
  return total;
}

// Same quantity from a transfer graph: boundary-crossing transition counts.
inline std::uint64_t total_switches(const SegmentationMap& seg, const TransferGraph& graph) {
  if (!(seg.shape() == graph.shape())) throw InputError("map and transfer graph dimensions differ");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    for (Direction d : kDirections) {
      const auto nb = seg.shape().neighbor(i, d);
      if (nb && seg[*nb] != seg[i]) total += graph.weight(i, d);
    }
  }
  return total;
}

/// Negated mean switches per trajectory; 0 is optimal.
inline double r1(const SegmentationMap& seg, std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) throw InputError("r1: empty trajectory set");
  return -static_cast<double>(total_switches(seg, trajectories)) / static_cast<double>(trajectories.size());
}

struct PairConfusion {
  std::uint64_t tp = 0;  // equivalent in both maps
  std::uint64_t fp = 0;  // equivalent in the prediction only
  std::uint64_t fn = 0;  // equivalent in the truth only
  bool operator==(const PairConfusion&) const = default;
};

namespace detail {

inline std::uint64_t choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// Sum of C(run, 2) over runs of equal values in a sorted sequence.
template <class T>
std::uint64_t equal_pairs_sorted(const std::vector<T>& sorted) {
  std::uint64_t pairs = 0;
  std::size_t run = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    run = (i > 0 && sorted[i] == sorted[i - 1]) ? run + 1 : 1;
    if (i + 1 == sorted.size() || sorted[i + 1] != sorted[i]) pairs += choose2(run);
  }
  return pairs;
}

}  // namespace detail

/// Pair counts from label co-occurrence (contingency) tallies rather than an
/// explicit enumeration of all cell pairs.
inline PairConfusion pair_confusion(const SegmentationMap& truth, const SegmentationMap& pred) {
  if (!(truth.shape() == pred.shape())) throw InputError("pair_confusion: dimension mismatch");
  const std::size_t n = truth.size();
  std::vector<std::pair<Label, Label>> joint(n);
  std::vector<Label> t(truth.labels().begin(), truth.labels().end());
  std::vector<Label> p(pred.labels().begin(), pred.labels().end());
  for (std::size_t i = 0; i < n; ++i) joint[i] = {truth[i], pred[i]};
  std::sort(joint.begin(), joint.end());
  std::sort(t.begin(), t.end());
  std::sort(p.begin(), p.end());
  const std::uint64_t both = detail::equal_pairs_sorted(joint);
  const std::uint64_t truth_pairs = detail::equal_pairs_sorted(t);
  const std::uint64_t pred_pairs = detail::equal_pairs_sorted(p);
  return {both, pred_pairs - both, truth_pairs - both};
}

inline double fmi(const PairConfusion& c) {
  if (c.tp == 0) return 0.0;
  const double tp = static_cast<double>(c.tp);
  return tp / std::sqrt((tp + static_cast<double>(c.fp)) * (tp + static_cast<double>(c.fn)));
}

inline double fmi(const SegmentationMap& truth, const SegmentationMap& pred) {
  return fmi(pair_confusion(truth, pred));
}

inline double co_aoi_rate(const PairConfusion& c) {
  if (c.tp + c.fn == 0) throw InputError("co_aoi_rate: truth has no equivalent cell pairs");
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

/// Fraction of truth-equivalent pairs that the prediction also co-locates.
inline double co_aoi_rate(const SegmentationMap& truth, const SegmentationMap& pred) {
  return co_aoi_rate(pair_confusion(truth, pred));
}

inline double r2(const SegmentationMap& pred, const SegmentationMap& road_partition) {
  return co_aoi_rate(road_partition, pred);
}

}  // namespace aoiseg
