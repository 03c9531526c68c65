#pragma once

// Road raster -> initial AOI partition: threshold dark pixels as road, label
// the non-road components, then dilate the labels over the road pixels.

#include <cstdint>
#include <vector>

#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"

namespace aoiseg {

struct GrayRaster {
  GridShape shape;
  std::vector<std::uint8_t> intensity;  // row-major, 0 = black

  GrayRaster() = default;
  GrayRaster(int rows, int cols, std::uint8_t fill = 255) : shape{rows, cols} {
    if (rows <= 0 || cols <= 0) throw InputError("raster dimensions must be positive");
    intensity.assign(shape.size(), fill);
  }
};

/// Road iff intensity <= cutoff (roads are drawn dark).
inline RoadMask threshold(const GrayRaster& raster, int cutoff) {
  if (cutoff < 0 || cutoff > 255) throw InputError("threshold cutoff must lie in [0,255]");
  RoadMask mask{raster.shape, std::vector<std::uint8_t>(raster.shape.size(), 0)};
  for (std::size_t i = 0; i < mask.cells.size(); ++i) mask.cells[i] = raster.intensity[i] <= cutoff ? 1 : 0;
  return mask;
}

/// Labels each maximal 4-connected non-road region 0, 1, ... in row-major
/// discovery order; road cells carry kRoadLabel.
inline SegmentationMap components(const RoadMask& mask) {
  const GridShape& shape = mask.shape;
  if (mask.road_count() == shape.size()) throw InputError("components: mask has no non-road cell");
  std::vector<Label> labels(shape.size(), -2);
  Label next = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (mask.is_road(i)) {
      labels[i] = kRoadLabel;
      continue;
    }
    if (labels[i] != -2) continue;
    std::vector<std::size_t> stack{i};
    labels[i] = next;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      for (Direction d : kDirections) {
        const auto nb = shape.neighbor(cur, d);
        if (nb && !mask.is_road(*nb) && labels[*nb] == -2) {
          labels[*nb] = next;
          stack.push_back(*nb);
        }
      }
    }
    ++next;
  }
  return SegmentationMap(shape.rows, shape.cols, std::move(labels));
}

/// Synchronous one-ring dilation of labelled regions into road cells until
/// none remain. A road cell takes the smallest label among its labelled
/// neighbours in the previous ring, which yields the smallest label at
/// minimal BFS distance. Labelled cells are never changed.
inline SegmentationMap expand(const SegmentationMap& seg) {
  const GridShape& shape = seg.shape();
  std::vector<Label> cur(seg.labels().begin(), seg.labels().end());
  bool any_labelled = false;
  for (Label l : cur) any_labelled = any_labelled || l != kRoadLabel;
  if (!any_labelled) throw InputError("expand: no labelled cell");
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < cur.size(); ++i)
    if (cur[i] == kRoadLabel) pending.push_back(i);
  while (!pending.empty()) {
    std::vector<std::pair<std::size_t, Label>> ring;
    std::vector<std::size_t> still;
    for (std::size_t i : pending) {
      Label best = kRoadLabel;
      for (Direction d : kDirections) {
        const auto nb = shape.neighbor(i, d);
        if (nb && cur[*nb] != kRoadLabel && (best == kRoadLabel || cur[*nb] < best)) best = cur[*nb];
      }
      if (best == kRoadLabel) {
        still.push_back(i);
      } else {
        ring.emplace_back(i, best);
      }
    }
    for (auto [i, label] : ring) cur[i] = label;
    pending.swap(still);
  }
  return SegmentationMap(shape.rows, shape.cols, std::move(cur));
}

/// threshold -> components -> expand, canonicalized.
inline SegmentationMap road_partition_from_raster(const GrayRaster& raster, int cutoff = 128) {
  return canonicalize(expand(components(threshold(raster, cutoff))));
}

}  // namespace aoiseg
