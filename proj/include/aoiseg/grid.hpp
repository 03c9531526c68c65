#pragma once

// Raster primitives shared by every module: segmentation maps, trajectories,
// transfer graphs and the 4-neighbour connectivity helpers built on them.

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aoiseg/error.hpp"

namespace aoiseg {

using Label = std::int32_t;

// Marks road pixels before they are absorbed into a neighbouring region.
inline constexpr Label kRoadLabel = -1;

struct GridCoord {
  int row = 0;
  int col = 0;
  auto operator<=>(const GridCoord&) const = default;
};

enum class Direction : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr std::array<Direction, 4> kDirections = {Direction::Up, Direction::Down,
                                                         Direction::Left, Direction::Right};
inline constexpr std::array<int, 4> kRowStep = {-1, 1, 0, 0};
inline constexpr std::array<int, 4> kColStep = {0, 0, -1, 1};

constexpr Direction opposite(Direction d) {
  switch (d) {
    case Direction::Up: return Direction::Down;
    case Direction::Down: return Direction::Up;
    case Direction::Left: return Direction::Right;
    case Direction::Right: return Direction::Left;
  }
  return d;
}

/// Dimensions of an M x N raster plus row-major index arithmetic.
struct GridShape {
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  bool contains(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }
  bool contains(GridCoord g) const { return contains(g.row, g.col); }
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c);
  }
  std::size_t index(GridCoord g) const { return index(g.row, g.col); }
  GridCoord coord(std::size_t idx) const {
    return {static_cast<int>(idx / static_cast<std::size_t>(cols)),
            static_cast<int>(idx % static_cast<std::size_t>(cols))};
  }

  // Neighbour of idx in direction d, or nullopt when it falls off the grid.
  std::optional<std::size_t> neighbor(std::size_t idx, Direction d) const {
    const GridCoord g = coord(idx);
    const int r = g.row + kRowStep[static_cast<int>(d)];
    const int c = g.col + kColStep[static_cast<int>(d)];
    if (!contains(r, c)) return std::nullopt;
    return index(r, c);
  }

  bool operator==(const GridShape&) const = default;
};

inline bool adjacent4(GridCoord a, GridCoord b) {
  return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1;
}

/// M x N label raster. Every cell carries exactly one AOI identifier.
class SegmentationMap {
 public:
  SegmentationMap() = default;

  SegmentationMap(int rows, int cols, Label fill = 0) : shape_{rows, cols} {
    check_dims(rows, cols);
    labels_.assign(shape_.size(), fill);
  }

  SegmentationMap(int rows, int cols, std::vector<Label> labels)
      : shape_{rows, cols}, labels_(std::move(labels)) {
    check_dims(rows, cols);
    if (labels_.size() != shape_.size()) {
      throw InputError("label count " + std::to_string(labels_.size()) + " does not match " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  // Each cell its own AOI, labelled by its row-major index.
  static SegmentationMap singletons(int rows, int cols) {
    SegmentationMap seg(rows, cols);
    std::iota(seg.labels_.begin(), seg.labels_.end(), Label{0});
    return seg;
  }

  int rows() const { return shape_.rows; }
  int cols() const { return shape_.cols; }
  std::size_t size() const { return labels_.size(); }
  const GridShape& shape() const { return shape_; }

  Label at(int r, int c) const { return labels_[shape_.index(r, c)]; }
  Label at(GridCoord g) const { return labels_[shape_.index(g)]; }
  Label operator[](std::size_t idx) const { return labels_[idx]; }
  void set(std::size_t idx, Label label) { labels_[idx] = label; }
  void set(GridCoord g, Label label) { labels_[shape_.index(g)] = label; }

  std::span<const Label> labels() const { return labels_; }

  Label max_label() const {
    return labels_.empty() ? Label{-1} : *std::max_element(labels_.begin(), labels_.end());
  }

  // Sorted distinct labels.
  std::vector<Label> distinct_labels() const {
    std::vector<Label> out(labels_.begin(), labels_.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::size_t label_count() const { return distinct_labels().size(); }

  bool contains_label(Label label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
  }

  bool operator==(const SegmentationMap&) const = default;

 private:
  static void check_dims(int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw InputError("grid dimensions must be positive");
  }

  GridShape shape_;
  std::vector<Label> labels_;
};

/// Relabels to 0..K-1 in order of first appearance (row-major).
inline SegmentationMap canonicalize(const SegmentationMap& seg) {
  std::unordered_map<Label, Label> remap;
  std::vector<Label> out(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(seg[i], static_cast<Label>(remap.size()));
    out[i] = it->second;
  }
  return SegmentationMap(seg.rows(), seg.cols(), std::move(out));
}

inline bool is_canonical(const SegmentationMap& seg) { return canonicalize(seg) == seg; }

namespace detail {

// Flood fill from `start` over cells carrying `label`, skipping `excluded`.
// Returns the number of cells reached.
inline std::size_t flood_count(const SegmentationMap& seg, std::size_t start, Label label,
                               std::optional<std::size_t> excluded = std::nullopt) {
  const GridShape& shape = seg.shape();
  std::vector<std::uint8_t> seen(seg.size(), 0);
  std::vector<std::size_t> stack{start};
  seen[start] = 1;
  if (excluded) seen[*excluded] = 1;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    ++reached;
    for (Direction d : kDirections) {
      const auto nb = shape.neighbor(cur, d);
      if (nb && !seen[*nb] && seg[*nb] == label) {
        seen[*nb] = 1;
        stack.push_back(*nb);
      }
    }
  }
  return reached;
}

}  // namespace detail

/// True iff the cells labelled `label` form one 4-connected component.
inline bool is_connected(const SegmentationMap& seg, Label label) {
  std::size_t first = seg.size();
  std::size_t count = 0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg[i] == label) {
      if (first == seg.size()) first = i;
      ++count;
    }
  }
  if (count == 0) throw InputError("label " + std::to_string(label) + " does not occur");
  return detail::flood_count(seg, first, label) == count;
}

/// Total coverage with non-negative labels and every label 4-connected.
inline bool is_valid(const SegmentationMap& seg) {
  if (seg.size() == 0) return false;
  for (Label l : seg.labels())
    if (l < 0) return false;
  // One flood per label; a label seen again outside its first component fails.
  std::vector<std::uint8_t> seen(seg.size(), 0);
  std::unordered_map<Label, std::uint8_t> visited_label;
  const GridShape& shape = seg.shape();
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seen[i]) continue;
    const Label label = seg[i];
    if (visited_label.contains(label)) return false;
    visited_label[label] = 1;
    std::vector<std::size_t> stack{i};
    seen[i] = 1;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      for (Direction d : kDirections) {
        const auto nb = shape.neighbor(cur, d);
        if (nb && !seen[*nb] && seg[*nb] == label) {
          seen[*nb] = 1;
          stack.push_back(*nb);
        }
      }
    }
  }
  return true;
}

/// Gives every 4-connected component of every label its own label; output is canonical.
inline SegmentationMap split_disconnected(const SegmentationMap& seg) {
  const GridShape& shape = seg.shape();
  std::vector<Label> out(seg.size(), -1);
  Label next = 0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (out[i] >= 0) continue;
    const Label label = seg[i];
    std::vector<std::size_t> stack{i};
    out[i] = next;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      for (Direction d : kDirections) {
        const auto nb = shape.neighbor(cur, d);
        if (nb && out[*nb] < 0 && seg[*nb] == label) {
          out[*nb] = next;
          stack.push_back(*nb);
        }
      }
    }
    ++next;
  }
  return canonicalize(SegmentationMap(seg.rows(), seg.cols(), std::move(out)));
}

/// Cells with at least one 4-neighbour in a different AOI, row-major.
inline std::vector<GridCoord> border_cells(const SegmentationMap& seg) {
  const GridShape& shape = seg.shape();
  std::vector<GridCoord> out;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    for (Direction d : kDirections) {
      const auto nb = shape.neighbor(i, d);
      if (nb && seg[*nb] != seg[i]) {
        out.push_back(shape.coord(i));
        break;
      }
    }
  }
  return out;
}

inline bool is_border_cell(const SegmentationMap& seg, std::size_t idx) {
  for (Direction d : kDirections) {
    const auto nb = seg.shape().neighbor(idx, d);
    if (nb && seg[*nb] != seg[idx]) return true;
  }
  return false;
}

/// Time-ordered flattened cell indices (row * cols + col).
struct Trajectory {
  std::vector<std::size_t> cells;

  std::size_t size() const { return cells.size(); }
  bool empty() const { return cells.empty(); }
  bool operator==(const Trajectory&) const = default;
};

/// Joins non-adjacent consecutive points with a row-first L path and collapses repeats.
inline Trajectory densify(std::span<const GridCoord> raw, const GridShape& shape) {
  if (raw.empty()) throw InputError("densify: empty point list");
  Trajectory out;
  auto push = [&](GridCoord g) {
    if (!shape.contains(g)) {
      throw InputError("densify: point (" + std::to_string(g.row) + "," + std::to_string(g.col) +
                       ") outside " + std::to_string(shape.rows) + "x" + std::to_string(shape.cols));
    }
    const std::size_t idx = shape.index(g);
    if (out.cells.empty() || out.cells.back() != idx) out.cells.push_back(idx);
  };
  GridCoord cur = raw.front();
  push(cur);
  for (std::size_t k = 1; k < raw.size(); ++k) {
    const GridCoord goal = raw[k];
    if (!shape.contains(goal)) push(goal);  // throws
    while (cur.row != goal.row) {
      cur.row += goal.row > cur.row ? 1 : -1;
      push(cur);
    }
    while (cur.col != goal.col) {
      cur.col += goal.col > cur.col ? 1 : -1;
      push(cur);
    }
  }
  return out;
}

/// Directional transition counts: weight(r, c, d) is the number of observed
/// moves from (r, c) to its neighbour in direction d.
class TransferGraph {
 public:
  TransferGraph() = default;
  TransferGraph(int rows, int cols) : shape_{rows, cols}, weight_(shape_.size() * 4, 0) {
    if (rows <= 0 || cols <= 0) throw InputError("grid dimensions must be positive");
  }

  const GridShape& shape() const { return shape_; }
  int rows() const { return shape_.rows; }
  int cols() const { return shape_.cols; }

  std::uint64_t weight(std::size_t idx, Direction d) const {
    return weight_[idx * 4 + static_cast<std::size_t>(d)];
  }
  std::uint64_t weight(int r, int c, Direction d) const { return weight(shape_.index(r, c), d); }

  // Transitions in both directions across the edge between idx and its d-neighbour.
  std::uint64_t undirected(std::size_t idx, Direction d) const {
    const auto nb = shape_.neighbor(idx, d);
    if (!nb) return 0;
    return weight(idx, d) + weight(*nb, opposite(d));
  }

  void add(std::size_t idx, Direction d, std::uint64_t count = 1) {
    weight_[idx * 4 + static_cast<std::size_t>(d)] += count;
  }

  std::uint64_t total() const { return std::accumulate(weight_.begin(), weight_.end(), std::uint64_t{0}); }
  std::uint64_t max_weight() const {
    return weight_.empty() ? 0 : *std::max_element(weight_.begin(), weight_.end());
  }

  std::span<const std::uint64_t> raw() const { return weight_; }

  TransferGraph& operator+=(const TransferGraph& other) {
    if (!(shape_ == other.shape_)) throw InputError("transfer graph dimension mismatch");
    for (std::size_t i = 0; i < weight_.size(); ++i) weight_[i] += other.weight_[i];
    return *this;
  }

  bool operator==(const TransferGraph&) const = default;

 private:
  GridShape shape_;
  std::vector<std::uint64_t> weight_;
};

// Direction of the step a -> b, or nullopt when they are not 4-adjacent.
inline std::optional<Direction> step_direction(const GridShape& shape, std::size_t a, std::size_t b) {
  for (Direction d : kDirections) {
    const auto nb = shape.neighbor(a, d);
    if (nb && *nb == b) return d;
  }
  return std::nullopt;
}

inline TransferGraph build_transfer_graph(std::span<const Trajectory> trajectories, int rows, int cols) {
  TransferGraph graph(rows, cols);
  const GridShape& shape = graph.shape();
  for (const Trajectory& t : trajectories) {
    for (std::size_t k = 0; k < t.cells.size(); ++k) {
      if (t.cells[k] >= shape.size()) {
        throw InputError("trajectory cell index " + std::to_string(t.cells[k]) + " out of bounds");
      }
      if (k == 0) continue;
      const std::size_t a = t.cells[k - 1];
      const std::size_t b = t.cells[k];
      if (a == b) continue;
      const auto d = step_direction(shape, a, b);
      if (!d) throw InputError("trajectory is not densified: cells " + std::to_string(a) + " and " +
                               std::to_string(b) + " are not 4-adjacent");
      graph.add(a, *d);
    }
  }
  return graph;
}

/// Boolean raster, true = road pixel.
struct RoadMask {
  GridShape shape;
  std::vector<std::uint8_t> cells;

  bool is_road(std::size_t idx) const { return cells[idx] != 0; }
  std::size_t road_count() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](auto v) { return v != 0; }));
  }
};

}  // namespace aoiseg
