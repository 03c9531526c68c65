#pragma once

// Louvain community detection on weighted undirected graphs.
//
// Conventions: m is the total edge weight with each undirected edge counted
// once; a self-loop of weight w contributes 2w to its node's degree, so
// sum(degree) = 2m. Modularity Q = sum_c [in_c / 2m - (tot_c / 2m)^2].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "aoiseg/error.hpp"
#include "aoiseg/rng.hpp"

namespace aoiseg {

class WeightedGraph {
 public:
  WeightedGraph() = default;
  explicit WeightedGraph(std::size_t n) : adj_(n), self_(n, 0.0) {}

  std::size_t node_count() const { return adj_.size(); }

  /// Accumulates weight onto the edge {u, v}; u == v adds to the self-loop.
  void add_edge(std::size_t u, std::size_t v, double w) {
    if (u >= adj_.size() || v >= adj_.size()) throw InputError("add_edge: node out of range");
    if (!(w >= 0.0)) throw InputError("add_edge: weights must be non-negative");
    if (w == 0.0) return;
    if (u == v) {
      self_[u] += w;
    } else {
      adj_[u][v] += w;
      adj_[v][u] += w;
    }
    total_ += w;
  }

  double weight(std::size_t u, std::size_t v) const {
    if (u == v) return self_.at(u);
    const auto it = adj_.at(u).find(v);
    return it == adj_[u].end() ? 0.0 : it->second;
  }
  double self_loop(std::size_t u) const { return self_.at(u); }
  /// Neighbours other than u itself, ascending.
  const std::map<std::size_t, double>& neighbors(std::size_t u) const { return adj_.at(u); }
  double total_weight() const { return total_; }

  double degree(std::size_t u) const {
    double k = 2.0 * self_.at(u);
    for (const auto& [v, w] : adj_[u]) k += w;
    return k;
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (std::size_t u = 0; u < adj_.size(); ++u) {
      n += self_[u] > 0.0 ? 1 : 0;
      for (const auto& [v, w] : adj_[u]) n += v > u ? 1 : 0;
    }
    return n;
  }

 private:
  std::vector<std::map<std::size_t, double>> adj_;
  std::vector<double> self_;
  double total_ = 0.0;
};

/// 0 for an edgeless graph.
inline double modularity(const WeightedGraph& g, std::span<const std::size_t> community) {
  if (community.size() != g.node_count()) throw InputError("modularity: partition size mismatch");
  const double m2 = 2.0 * g.total_weight();
  if (m2 == 0.0) return 0.0;
  std::size_t groups = 0;
  for (std::size_t c : community) groups = std::max(groups, c + 1);
  std::vector<double> in(groups, 0.0), tot(groups, 0.0);
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    const std::size_t c = community[u];
    tot[c] += g.degree(u);
    in[c] += 2.0 * g.self_loop(u);
    for (const auto& [v, w] : g.neighbors(u))
      if (community[v] == c) in[c] += w;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < groups; ++c) q += in[c] / m2 - (tot[c] / m2) * (tot[c] / m2);
  return q;
}

/// Renumbers ids 0, 1, ... in order of first appearance.
inline std::vector<std::size_t> canonical_partition(std::span<const std::size_t> community) {
  std::map<std::size_t, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(community.size());
  for (std::size_t c : community) out.push_back(ids.emplace(c, ids.size()).first->second);
  return out;
}

namespace detail {

// Gains below this are treated as zero so round-off cannot cause endless moves.
inline constexpr double kModularityTolerance = 1e-12;

// Repeated sweeps in node order moving each node to the community with the
// largest strictly positive gain. Candidates are the node's own community,
// its neighbours' communities and, when `allow_new` holds, a fresh empty one.
// With `within` set, a node may only join communities whose members share its
// `within` group. Returns whether anything moved.
inline bool local_moves(const WeightedGraph& g, std::vector<std::size_t>& community, bool allow_new = true,
                        const std::vector<std::size_t>* within = nullptr) {
  const std::size_t n = g.node_count();
  const double m2 = 2.0 * g.total_weight();
  if (m2 == 0.0) return false;
  // Community ids may range up to 2n once fresh communities are opened.
  std::vector<double> degree(n), tot(2 * n + 1, 0.0);
  std::vector<std::size_t> members(2 * n + 1, 0);
  std::size_t next_free = 0;
  for (std::size_t u = 0; u < n; ++u) {
    degree[u] = g.degree(u);
    tot[community[u]] += degree[u];
    ++members[community[u]];
    next_free = std::max(next_free, community[u] + 1);
  }
  std::vector<double> link(2 * n + 1, 0.0);
  std::vector<std::size_t> touched;
  bool moved_any = false;
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t own = community[u];
      touched.clear();
      touched.push_back(own);
      for (const auto& [v, w] : g.neighbors(u)) {
        if (within && (*within)[v] != (*within)[u]) continue;
        const std::size_t c = community[v];
        if (std::find(touched.begin(), touched.end(), c) == touched.end()) touched.push_back(c);
        link[c] += w;
      }
      tot[own] -= degree[u];
      --members[own];
      // Gain of inserting u into c, up to the common factor 1/m.
      auto gain = [&](std::size_t c) { return link[c] - tot[c] * degree[u] / m2; };
      std::size_t best = own;
      double best_gain = gain(own);
      for (std::size_t c : touched) {
        const double gc = gain(c);
        if (gc > best_gain + kModularityTolerance) {
          best = c;
          best_gain = gc;
        }
      }
      if (allow_new && members[own] > 0 && 0.0 > best_gain + kModularityTolerance) {
        while (members[next_free] > 0 || tot[next_free] != 0.0) ++next_free;
        best = next_free;
      }
      tot[best] += degree[u];
      ++members[best];
      if (best != own) {
        community[u] = best;
        moved = moved_any = true;
      }
      for (std::size_t c : touched) link[c] = 0.0;
    }
    if (moved) {
      // Keep ids bounded by n between sweeps.
      std::vector<std::size_t> remapped = community;
      std::map<std::size_t, std::size_t> ids;
      for (std::size_t& c : remapped) c = ids.emplace(c, ids.size()).first->second;
      std::fill(tot.begin(), tot.end(), 0.0);
      std::fill(members.begin(), members.end(), 0);
      community = std::move(remapped);
      next_free = ids.size();
      for (std::size_t u = 0; u < n; ++u) {
        tot[community[u]] += degree[u];
        ++members[community[u]];
      }
    }
  }
  return moved_any;
}

inline WeightedGraph aggregate(const WeightedGraph& g, std::span<const std::size_t> community, std::size_t groups) {
  WeightedGraph out(groups);
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    out.add_edge(community[u], community[u], g.self_loop(u));
    for (const auto& [v, w] : g.neighbors(u))
      if (v > u) out.add_edge(community[u], community[v], w);
  }
  return out;
}

// Splits community `target` in two, moving one half to id `fresh`: signs of
// the leading eigenvector of the modularity matrix restricted to the
// community, then single-node and Kernighan-Lin moves between the halves.
// Returns the candidate; the caller decides whether it is better.
inline std::vector<std::size_t> bisect(const WeightedGraph& g, const std::vector<std::size_t>& partition,
                                       std::size_t target, std::size_t fresh) {
  const double m2 = 2.0 * g.total_weight();
  std::vector<std::size_t> nodes;
  for (std::size_t u = 0; u < partition.size(); ++u)
    if (partition[u] == target) nodes.push_back(u);
  const std::size_t s = nodes.size();
  if (s < 2 || m2 == 0.0) return partition;
  std::vector<std::size_t> local(partition.size(), s);
  for (std::size_t i = 0; i < s; ++i) local[nodes[i]] = i;
  std::vector<double> k(s), row_sum(s, 0.0);
  double k_total = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    k[i] = g.degree(nodes[i]);
    k_total += k[i];
  }
  // B x with B_ij = A_ij - k_i k_j / 2m - delta_ij sum_l B_il over the community.
  // Self-loops sit on the diagonal and cancel out of the row sums.
  std::vector<double> a_row(s, 0.0);
  for (std::size_t i = 0; i < s; ++i)
    for (const auto& [v, w] : g.neighbors(nodes[i]))
      if (local[v] < s) a_row[i] += w;
  for (std::size_t i = 0; i < s; ++i) row_sum[i] = a_row[i] - k[i] * k_total / m2;
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    double kx = 0.0;
    for (std::size_t i = 0; i < s; ++i) kx += k[i] * x[i];
    for (std::size_t i = 0; i < s; ++i) {
      double acc = 0.0;
      for (const auto& [v, w] : g.neighbors(nodes[i]))
        if (local[v] < s) acc += w * x[local[v]];
      y[i] = acc - k[i] * kx / m2 - row_sum[i] * x[i];
    }
  };
  // Gershgorin bound; the shift makes the top eigenvalue of B the dominant one.
  double shift = 0.0;
  for (std::size_t i = 0; i < s; ++i)
    shift = std::max(shift, 2.0 * a_row[i] + k[i] * k_total / m2 + std::abs(row_sum[i]));
  std::vector<double> x(s), y(s);
  Rng rng(0x5350'4C49ULL + s);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  for (int iter = 0; iter < 1000; ++iter) {
    apply(x, y);
    double norm = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      y[i] += shift * x[i];
      norm += y[i] * y[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return partition;
    double change = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      y[i] /= norm;
      change = std::max(change, std::abs(y[i] - x[i]));
    }
    x.swap(y);
    if (change < 1e-10) break;
  }
  std::vector<int> side(s);
  double tot[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < s; ++i) {
    side[i] = x[i] > 0.0 ? 1 : 0;
    tot[side[i]] += k[i];
  }
  bool moved = true;
  for (int sweep = 0; moved && sweep < 100; ++sweep) {
    moved = false;
    for (std::size_t i = 0; i < s; ++i) {
      double link[2] = {0.0, 0.0};
      for (const auto& [v, w] : g.neighbors(nodes[i]))
        if (local[v] < s && v != nodes[i]) link[side[local[v]]] += w;
      const int own = side[i], other = 1 - own;
      const double stay = link[own] - (tot[own] - k[i]) * k[i] / m2;
      const double go = link[other] - tot[other] * k[i] / m2;
      if (go > stay + kModularityTolerance) {
        tot[own] -= k[i];
        tot[other] += k[i];
        side[i] = other;
        moved = true;
      }
    }
  }
  // Kernighan-Lin passes: move every node once, best gain first even when
  // negative, then roll back to the best prefix. Quadratic, so small only.
  if (s <= 256) {
    auto gain_of = [&](std::size_t i) {
      double link[2] = {0.0, 0.0};
      for (const auto& [v, w] : g.neighbors(nodes[i]))
        if (local[v] < s && v != nodes[i]) link[side[local[v]]] += w;
      const int own = side[i], other = 1 - own;
      return (link[other] - tot[other] * k[i] / m2) - (link[own] - (tot[own] - k[i]) * k[i] / m2);
    };
    for (int pass = 0; pass < 50; ++pass) {
      std::vector<char> locked(s, 0);
      std::vector<std::size_t> order;
      double running = 0.0, best_total = 0.0;
      std::size_t best_prefix = 0;
      for (std::size_t step = 0; step < s; ++step) {
        std::size_t pick = s;
        double pick_gain = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
          if (locked[i]) continue;
          const double gi = gain_of(i);
          if (pick == s || gi > pick_gain) {
            pick = i;
            pick_gain = gi;
          }
        }
        locked[pick] = 1;
        order.push_back(pick);
        tot[side[pick]] -= k[pick];
        side[pick] = 1 - side[pick];
        tot[side[pick]] += k[pick];
        running += pick_gain;
        if (running > best_total + kModularityTolerance) {
          best_total = running;
          best_prefix = order.size();
        }
      }
      for (std::size_t j = order.size(); j-- > best_prefix;) {
        const std::size_t i = order[j];
        tot[side[i]] -= k[i];
        side[i] = 1 - side[i];
        tot[side[i]] += k[i];
      }
      if (best_prefix == 0) break;
    }
  }
  std::vector<std::size_t> candidate = partition;
  for (std::size_t i = 0; i < s; ++i)
    if (side[i] == 1) candidate[nodes[i]] = fresh;
  return candidate;
}

// One round of bisection refinement: split each community, then merge each
// pair of linked communities and split the union again. Every accepted
// candidate strictly raises modularity. Returns whether anything changed.
inline bool bisection_round(const WeightedGraph& g, std::vector<std::size_t>& partition) {
  bool changed = false;
  double q = modularity(g, partition);
  auto try_candidate = [&](std::vector<std::size_t> candidate) {
    const double cq = modularity(g, candidate);
    if (cq > q + kModularityTolerance) {
      partition = std::move(candidate);
      q = cq;
      changed = true;
      return true;
    }
    return false;
  };
  auto count = [&] {
    std::size_t c = 0;
    for (std::size_t x : partition) c = std::max(c, x + 1);
    return c;
  };
  partition = canonical_partition(partition);
  for (std::size_t c = 0; c < count(); ++c) try_candidate(bisect(g, partition, c, count()));
  // Pairs are collected up front. Ids stay stable within the round: merges
  // keep the lower id and splits only append, so a stale pair is merely a
  // different (still valid) candidate.
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t u = 0; u < partition.size(); ++u)
    for (const auto& [v, w] : g.neighbors(u))
      if (partition[u] < partition[v]) pairs.emplace(partition[u], partition[v]);
  for (const auto& [a, b] : pairs) {
    std::vector<std::size_t> merged = partition;
    for (std::size_t& x : merged)
      if (x == b) x = a;
    if (!try_candidate(bisect(g, merged, a, count()))) try_candidate(std::move(merged));
  }
  partition = canonical_partition(partition);
  return changed;
}

}  // namespace detail

namespace detail {

// One multi-level Louvain run followed by refinement rounds.
//
// Each level runs local moves and then collapses communities into nodes.
// Once no level moves, two refinements run on the original graph: node-level
// moves, and a subcluster step that splits every community into subclusters
// (local moves restricted to the community, from singletons) and lets whole
// subclusters change community. Last, communities and unions of linked
// pairs are bisected (see bisection_round), which escapes partitions where
// every single-node or subcluster move loses. Any accepted change
// restarts the cycle. Every
// accepted move strictly increases modularity, so the loop terminates.
inline std::vector<std::size_t> louvain_single(const WeightedGraph& graph) {
  const std::size_t n = graph.node_count();
  std::vector<std::size_t> partition(n);
  for (std::size_t u = 0; u < n; ++u) partition[u] = u;
  if (graph.total_weight() == 0.0) return partition;
  for (;;) {
    partition = canonical_partition(partition);
    std::size_t groups = 0;
    for (std::size_t c : partition) groups = std::max(groups, c + 1);
    WeightedGraph level = detail::aggregate(graph, partition, groups);
    for (;;) {
      std::vector<std::size_t> local(level.node_count());
      for (std::size_t u = 0; u < local.size(); ++u) local[u] = u;
      if (!detail::local_moves(level, local, false)) break;
      local = canonical_partition(local);
      std::size_t next_groups = 0;
      for (std::size_t c : local) next_groups = std::max(next_groups, c + 1);
      for (std::size_t& c : partition) c = local[c];
      level = detail::aggregate(level, local, next_groups);
    }
    if (detail::local_moves(graph, partition)) continue;

    std::vector<std::size_t> sub(n);
    for (std::size_t u = 0; u < n; ++u) sub[u] = u;
    detail::local_moves(graph, sub, false, &partition);
    sub = canonical_partition(sub);
    std::size_t sub_groups = 0;
    for (std::size_t c : sub) sub_groups = std::max(sub_groups, c + 1);
    std::vector<std::size_t> assignment(sub_groups);
    for (std::size_t u = 0; u < n; ++u) assignment[sub[u]] = partition[u];
    const WeightedGraph coarse = detail::aggregate(graph, sub, sub_groups);
    if (detail::local_moves(coarse, assignment)) {
      for (std::size_t u = 0; u < n; ++u) partition[u] = assignment[sub[u]];
      continue;
    }

    if (!detail::bisection_round(graph, partition)) break;
  }
  return canonical_partition(partition);
}

}  // namespace detail

namespace detail {

// Exhaustive search over restricted growth strings; tiny graphs only.
inline std::vector<std::size_t> exhaustive_best(const WeightedGraph& g, double& best_q) {
  const std::size_t n = g.node_count();
  const double m2 = 2.0 * g.total_weight();
  if (n == 0 || m2 == 0.0) {
    best_q = 0.0;
    std::vector<std::size_t> singletons(n);
    for (std::size_t u = 0; u < n; ++u) singletons[u] = u;
    return singletons;
  }
  std::vector<double> a(n * n, 0.0), k(n);
  for (std::size_t u = 0; u < n; ++u) {
    k[u] = g.degree(u);
    a[u * n + u] = 2.0 * g.self_loop(u);
    for (const auto& [v, w] : g.neighbors(u)) a[u * n + v] = w;
  }
  std::vector<std::size_t> c(n, 0), best(n, 0);
  std::vector<double> in(n), tot(n);
  best_q = -1.0;
  for (;;) {
    std::fill(in.begin(), in.end(), 0.0);
    std::fill(tot.begin(), tot.end(), 0.0);
    for (std::size_t u = 0; u < n; ++u) {
      tot[c[u]] += k[u];
      for (std::size_t v = 0; v < n; ++v)
        if (c[v] == c[u]) in[c[u]] += a[u * n + v];
    }
    double q = 0.0;
    for (std::size_t x = 0; x < n; ++x) q += in[x] / m2 - (tot[x] / m2) * (tot[x] / m2);
    if (q > best_q + kModularityTolerance) {
      best_q = q;
      best = c;
    }
    // Next restricted growth string: c[i] <= 1 + max(c[0..i-1]).
    std::size_t i = n;
    while (i-- > 1) {
      std::size_t prefix_max = 0;
      for (std::size_t j = 0; j < i; ++j) prefix_max = std::max(prefix_max, c[j]);
      if (c[i] <= prefix_max) {
        ++c[i];
        std::fill(c.begin() + static_cast<std::ptrdiff_t>(i) + 1, c.end(), 0);
        break;
      }
    }
    if (i == 0) break;
  }
  return best;
}

// Graphs up to this size are finished by exhaustive search.
inline constexpr std::size_t kExhaustiveNodes = 10;

}  // namespace detail

/// Multi-level Louvain with node-level, subcluster and bisection refinement
/// (see detail::louvain_single). Graphs of at most 10 nodes are then checked
/// exhaustively, so their result is a modularity maximum.
/// Output ids are canonical (first appearance in node order).
inline std::vector<std::size_t> louvain(const WeightedGraph& graph) {
  std::vector<std::size_t> best = detail::louvain_single(graph);
  if (graph.total_weight() == 0.0 || graph.node_count() > detail::kExhaustiveNodes) return best;
  double exact_q = 0.0;
  const std::vector<std::size_t> exact = detail::exhaustive_best(graph, exact_q);
  if (exact_q > modularity(graph, best) + detail::kModularityTolerance) best = canonical_partition(exact);
  return best;
}

}  // namespace aoiseg
