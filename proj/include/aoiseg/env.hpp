#pragma once

// The AOI segmentation MDP. The agent visits border cells and either keeps a
// cell in its AOI or merges it into the AOI of one of its four neighbours.
// Rewards combine the drop in trajectory switches with the gain in road
// similarity: the share of the map's co-located cell pairs that the road
// partition also co-locates.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/metrics.hpp"
#include "aoiseg/synth.hpp"
#include "aoiseg/tensor.hpp"

namespace aoiseg {

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3, Origin = 4 };

inline constexpr std::size_t kActionCount = 5;
using ActionMask = std::array<bool, kActionCount>;

inline constexpr std::size_t action_index(Action a) { return static_cast<std::size_t>(a); }
inline constexpr Action action_from_index(std::size_t i) { return static_cast<Action>(i); }
inline constexpr Direction action_direction(Action a) { return static_cast<Direction>(static_cast<int>(a)); }

inline const char* action_name(Action a) {
  static constexpr std::array<const char*, kActionCount> names = {"up", "down", "left", "right", "origin"};
  return names[action_index(a)];
}

/// k1 weights the trajectory-switch term, k2 the road-similarity term.
struct RewardWeights {
  double trajectory = 0.6;
  double road = 0.4;

  void validate() const {
    if (!(trajectory >= 0.0 && road >= 0.0) || !std::isfinite(trajectory) || !std::isfinite(road) ||
        trajectory + road <= 0.0)
      throw InputError("reward weights must be non-negative, finite and not both zero");
  }
  bool operator==(const RewardWeights&) const = default;
};

/// Seven M x N channels, channel-major:
///   0 target one-hot, 1 AOI labels, 2-5 transitions up/down/left/right,
///   6 road-partition labels. Label and transition channels are scaled to [0, 1].
struct State {
  static constexpr std::size_t kChannels = 7;

  Tensor data;

  int rows() const { return static_cast<int>(data.shape[1]); }
  int cols() const { return static_cast<int>(data.shape[2]); }
  double at(std::size_t channel, int r, int c) const {
    return data.values[(channel * data.shape[1] + static_cast<std::size_t>(r)) * data.shape[2] +
                       static_cast<std::size_t>(c)];
  }
  std::span<const double> values() const { return data.values; }
  bool operator==(const State&) const = default;
};

struct Transition {
  State state;
  Action action = Action::Origin;
  double reward = 0.0;
  State next_state;
  ActionMask next_legal{};
  bool terminal = false;
};

inline State build_state(const SegmentationMap& seg, GridCoord target, const TransferGraph& graph,
                         const SegmentationMap& road) {
  if (!(seg.shape() == graph.shape()) || !(seg.shape() == road.shape()))
    throw InputError("build_state: map, transfer graph and road partition dimensions differ");
  if (!seg.shape().contains(target)) throw InputError("build_state: target outside grid");
  const std::size_t plane = seg.size();
  State s{Tensor({State::kChannels, static_cast<std::size_t>(seg.rows()), static_cast<std::size_t>(seg.cols())})};
  auto& v = s.data.values;
  v[seg.shape().index(target)] = 1.0;
  const double label_scale = 1.0 / static_cast<double>(seg.max_label() + 1);
  const double road_scale = 1.0 / static_cast<double>(road.max_label() + 1);
  const std::uint64_t max_w = graph.max_weight();
  const double weight_scale = max_w == 0 ? 0.0 : 1.0 / static_cast<double>(max_w);
  for (std::size_t i = 0; i < plane; ++i) {
    v[plane + i] = static_cast<double>(seg[i]) * label_scale;
    for (std::size_t d = 0; d < 4; ++d)
      v[(2 + d) * plane + i] = static_cast<double>(graph.weight(i, static_cast<Direction>(d))) * weight_scale;
    v[6 * plane + i] = static_cast<double>(road[i]) * road_scale;
  }
  return s;
}

namespace detail {

// Whether the AOI of `idx` stays 4-connected (or becomes empty) once idx leaves it.
inline bool removal_keeps_connected(const SegmentationMap& seg, std::size_t idx) {
  const GridShape& shape = seg.shape();
  const Label label = seg[idx];
  std::array<std::size_t, 4> same{};
  std::size_t n_same = 0;
  for (Direction d : kDirections) {
    const auto nb = shape.neighbor(idx, d);
    if (nb && seg[*nb] == label) same[n_same++] = *nb;
  }
  if (n_same <= 1) return true;
  // Every same-label neighbour must be reachable from the first without idx.
  std::vector<std::uint8_t> seen(seg.size(), 0);
  seen[idx] = 1;
  seen[same[0]] = 1;
  std::vector<std::size_t> stack{same[0]};
  std::size_t found = 1;
  while (!stack.empty() && found < n_same) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    for (Direction d : kDirections) {
      const auto nb = shape.neighbor(cur, d);
      if (!nb || seen[*nb] || seg[*nb] != label) continue;
      seen[*nb] = 1;
      stack.push_back(*nb);
      for (std::size_t k = 1; k < n_same; ++k)
        if (same[k] == *nb) ++found;
    }
  }
  return found == n_same;
}

}  // namespace detail

/// Origin is always legal. A directional action is legal iff the neighbour
/// exists and the target's AOI stays 4-connected (or vanishes) without the
/// target, whatever the neighbour's label.
inline ActionMask legal_actions(const SegmentationMap& seg, GridCoord target) {
  if (!seg.shape().contains(target)) throw InputError("legal_actions: target outside grid");
  ActionMask mask{};
  mask[action_index(Action::Origin)] = true;
  const std::size_t idx = seg.shape().index(target);
  const bool can_leave = detail::removal_keeps_connected(seg, idx);
  for (Direction d : kDirections) mask[static_cast<std::size_t>(d)] = can_leave && seg.shape().neighbor(idx, d);
  return mask;
}

inline SegmentationMap apply_action(const SegmentationMap& seg, GridCoord target, Action action) {
  const ActionMask mask = legal_actions(seg, target);
  if (!mask[action_index(action)])
    throw ContractViolation(std::string("apply_action: illegal action ") + action_name(action) + " at (" +
                            std::to_string(target.row) + "," + std::to_string(target.col) + ")");
  SegmentationMap next = seg;
  if (action == Action::Origin) return next;
  const std::size_t idx = seg.shape().index(target);
  next.set(idx, seg[*seg.shape().neighbor(idx, action_direction(action))]);
  return next;
}

/// co_aoi_rate(map, road), except that a map without co-located pairs (all
/// singletons) scores 1: none of its pairs contradicts the road.
inline double road_similarity(const SegmentationMap& map, const SegmentationMap& road) {
  const PairConfusion c = pair_confusion(map, road);
  return c.tp + c.fn == 0 ? 1.0 : co_aoi_rate(c);
}

/// k1 * (switches(prev) - switches(next)) + k2 * (sim(next) - sim(prev)), with
/// sim = road_similarity; both objectives recomputed from scratch.
inline double reward(const SegmentationMap& prev, const SegmentationMap& next, std::span<const Trajectory> trajectories,
                     const SegmentationMap& road, const RewardWeights& w) {
  if (!(prev.shape() == next.shape()) || !(prev.shape() == road.shape()))
    throw InputError("reward: dimension mismatch");
  const double sw_prev = static_cast<double>(total_switches(prev, trajectories));
  const double sw_next = static_cast<double>(total_switches(next, trajectories));
  const double cr_prev = road_similarity(prev, road);
  const double cr_next = road_similarity(next, road);
  return w.trajectory * (sw_prev - sw_next) + w.road * (cr_next - cr_prev);
}

/// Everything an episode needs besides the policy.
struct SegmentationProblem {
  SegmentationMap initial;
  SegmentationMap road;
  TransferGraph graph;
};

enum class InitialMap { Singletons, Road };

inline SegmentationProblem make_problem(const Instance& inst, InitialMap start = InitialMap::Singletons) {
  SegmentationProblem p;
  p.road = canonicalize(inst.road_partition);
  p.initial = start == InitialMap::Singletons ? SegmentationMap::singletons(inst.rows, inst.cols) : p.road;
  p.graph = build_transfer_graph(inst.trajectories, inst.rows, inst.cols);
  return p;
}

/// Mutable episode state with incrementally maintained objectives.
///
/// Switches are tracked through the transfer graph (a densified trajectory
/// switches exactly where it crosses an AOI boundary), and road similarity
/// through a label x road-label contingency table, so a step costs
/// O(1) besides the connectivity check.
class SegmentationEnv {
 public:
  SegmentationEnv(SegmentationProblem problem, RewardWeights weights)
      : problem_(std::move(problem)), weights_(weights) {
    weights_.validate();
    const GridShape& shape = problem_.initial.shape();
    if (!(shape == problem_.road.shape()) || !(shape == problem_.graph.shape()))
      throw InputError("environment: map, road partition and transfer graph dimensions differ");
    problem_.road = canonicalize(problem_.road);
    road_labels_ = static_cast<std::size_t>(problem_.road.max_label() + 1);
    reset();
  }

  const SegmentationProblem& problem() const { return problem_; }
  const RewardWeights& weights() const { return weights_; }
  const SegmentationMap& map() const { return seg_; }
  const GridShape& shape() const { return seg_.shape(); }

  void reset() { reset(problem_.initial); }

  void reset(const SegmentationMap& start) {
    if (!(start.shape() == problem_.initial.shape())) throw InputError("environment reset: dimension mismatch");
    seg_ = canonicalize(start);
    labels_ = static_cast<std::size_t>(seg_.max_label() + 1);
    joint_.assign(labels_ * road_labels_, 0);
    sizes_.assign(labels_, 0);
    for (std::size_t i = 0; i < seg_.size(); ++i) {
      ++joint(seg_[i], problem_.road[i]);
      ++sizes_[static_cast<std::size_t>(seg_[i])];
    }
    concordant_ = 0;
    for (auto n : joint_) concordant_ += detail::choose2(n);
    map_pairs_ = 0;
    for (auto n : sizes_) map_pairs_ += detail::choose2(n);
    switches_ = total_switches(seg_, problem_.graph);
  }

  std::uint64_t switches() const { return switches_; }
  double road_similarity() const { return similarity(concordant_, map_pairs_); }

  State state(GridCoord target) const { return build_state(seg_, target, problem_.graph, problem_.road); }
  ActionMask legal(GridCoord target) const { return legal_actions(seg_, target); }

  /// Reward the action would earn, without applying it. Legality is not checked.
  double preview(GridCoord target, Action action) const {
    const auto [dsw, dtp, dpairs] = deltas(target, action);
    return weights_.trajectory * static_cast<double>(-dsw) +
           weights_.road * (similarity(shifted(concordant_, dtp), shifted(map_pairs_, dpairs)) - road_similarity());
  }

  double step(GridCoord target, Action action) {
    if (!shape().contains(target)) throw InputError("step: target outside grid");
    if (!legal(target)[action_index(action)])
      throw ContractViolation(std::string("step: illegal action ") + action_name(action) + " at (" +
                              std::to_string(target.row) + "," + std::to_string(target.col) + ")");
    if (action == Action::Origin) return 0.0;
    const std::size_t idx = shape().index(target);
    const Label from = seg_[idx];
    const Label to = seg_[*shape().neighbor(idx, action_direction(action))];
    if (from == to) return 0.0;
    const auto [dsw, dtp, dpairs] = deltas(target, action);
    const double cr_before = road_similarity();
    const Label road = problem_.road[idx];
    --joint(from, road);
    ++joint(to, road);
    --sizes_[static_cast<std::size_t>(from)];
    ++sizes_[static_cast<std::size_t>(to)];
    seg_.set(idx, to);
    switches_ = shifted(switches_, dsw);
    concordant_ = shifted(concordant_, dtp);
    map_pairs_ = shifted(map_pairs_, dpairs);
    return weights_.trajectory * static_cast<double>(-dsw) + weights_.road * (road_similarity() - cr_before);
  }

 private:
  std::uint64_t& joint(Label label, Label road) {
    return joint_[static_cast<std::size_t>(label) * road_labels_ + static_cast<std::size_t>(road)];
  }
  std::uint64_t joint(Label label, Label road) const {
    return joint_[static_cast<std::size_t>(label) * road_labels_ + static_cast<std::size_t>(road)];
  }

  static double similarity(std::uint64_t concordant, std::uint64_t pairs) {
    return pairs == 0 ? 1.0 : static_cast<double>(concordant) / static_cast<double>(pairs);
  }
  static std::uint64_t shifted(std::uint64_t v, std::int64_t d) {
    return static_cast<std::uint64_t>(static_cast<std::int64_t>(v) + d);
  }

  struct Deltas {
    std::int64_t switches = 0, concordant = 0, map_pairs = 0;
  };

  // Changes in switches, concordant pairs and co-located map pairs if the
  // action were applied.
  Deltas deltas(GridCoord target, Action action) const {
    if (action == Action::Origin) return {};
    const std::size_t idx = shape().index(target);
    const auto dest = shape().neighbor(idx, action_direction(action));
    if (!dest) return {};
    const Label from = seg_[idx];
    const Label to = seg_[*dest];
    if (from == to) return {};
    std::int64_t dsw = 0;
    for (Direction d : kDirections) {
      const auto nb = shape().neighbor(idx, d);
      if (!nb) continue;
      const auto w = static_cast<std::int64_t>(problem_.graph.undirected(idx, d));
      const Label l = seg_[*nb];
      dsw += w * ((l != to ? 1 : 0) - (l != from ? 1 : 0));
    }
    const Label road = problem_.road[idx];
    const auto dtp = static_cast<std::int64_t>(joint(to, road)) - (static_cast<std::int64_t>(joint(from, road)) - 1);
    const auto dpairs = static_cast<std::int64_t>(sizes_[static_cast<std::size_t>(to)]) -
                        (static_cast<std::int64_t>(sizes_[static_cast<std::size_t>(from)]) - 1);
    return {dsw, dtp, dpairs};
  }

  SegmentationProblem problem_;
  RewardWeights weights_;
  SegmentationMap seg_;
  std::size_t labels_ = 0;
  std::size_t road_labels_ = 0;
  std::vector<std::uint64_t> joint_;
  std::vector<std::uint64_t> sizes_;
  std::uint64_t concordant_ = 0;
  std::uint64_t map_pairs_ = 0;
  std::uint64_t switches_ = 0;
};

struct EpisodeOptions {
  int traversals = 8;
  // End the episode after a traversal in which no cell changed AOI.
  bool stop_when_idle = false;
};

struct EpisodeSummary {
  double total_return = 0.0;
  std::size_t steps = 0;
  int traversals_run = 0;
};

/// Drives one episode on `env` from its current map.
///
/// Each traversal recomputes the border cells and visits them in row-major
/// order, skipping cells that stopped being on a border earlier in the same
/// pass. `policy(state, mask)` picks an action; each completed Transition is
/// handed to `on_transition` once the following state is known, and the final
/// one is marked terminal.
template <class Policy, class Observer>
EpisodeSummary run_episode(SegmentationEnv& env, Policy&& policy, const EpisodeOptions& options, Observer&& on_transition) {
  if (options.traversals < 1) throw InputError("run_episode: traversals must be at least 1");
  EpisodeSummary summary;
  std::optional<Transition> pending;
  for (int pass = 0; pass < options.traversals; ++pass) {
    ++summary.traversals_run;
    bool changed = false;
    const std::vector<GridCoord> cells = border_cells(env.map());
    for (GridCoord g : cells) {
      if (!is_border_cell(env.map(), env.shape().index(g))) continue;
      State s = env.state(g);
      const ActionMask mask = env.legal(g);
      if (pending) {
        pending->next_state = s;
        pending->next_legal = mask;
        on_transition(std::move(*pending));
        pending.reset();
      }
      const Action a = policy(std::as_const(s), mask);
      if (!mask[action_index(a)])
        throw ContractViolation(std::string("policy returned illegal action ") + action_name(a));
      const Label before = env.map().at(g);
      const double r = env.step(g, a);
      changed = changed || env.map().at(g) != before;
      summary.total_return += r;
      ++summary.steps;
      pending = Transition{std::move(s), a, r, State{}, ActionMask{}, false};
    }
    if (options.stop_when_idle && !changed) break;
  }
  if (pending) {
    pending->next_state = pending->state;
    pending->next_legal = ActionMask{};
    pending->terminal = true;
    on_transition(std::move(*pending));
  }
  return summary;
}

struct EpisodeResult {
  SegmentationMap final_map;
  std::vector<Transition> transitions;
  double total_return = 0.0;
};

/// Runs an episode from the problem's initial map and collects every transition.
template <class Policy>
EpisodeResult run_episode(const SegmentationProblem& problem, Policy&& policy, int traversals, const RewardWeights& w) {
  SegmentationEnv env(problem, w);
  EpisodeResult result;
  const EpisodeSummary summary = run_episode(env, std::forward<Policy>(policy), EpisodeOptions{traversals, false},
                                             [&](Transition&& t) { result.transitions.push_back(std::move(t)); });
  result.final_map = env.map();
  result.total_return = summary.total_return;
  return result;
}

}  // namespace aoiseg
