// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// fails.
//
//   acceptance --config <experiment.json> --work <dir> [criterion numbers...]
//
// Criteria 5-7 train through cmd_run with the given experiment config (six
// by six, five seeds, all four trajrl4aoi variants); the run lands in
// <work>/learning. Criterion 9 runs a small config twice under <work>.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "aoiseg/harness.hpp"
#include "oracles.hpp"

namespace {

using namespace aoiseg;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const SegmentationMap truth = oracle::random_labels(6, 6, 1 + static_cast<int>(rng.uniform(12)), rng);
    const SegmentationMap pred = oracle::random_labels(6, 6, 1 + static_cast<int>(rng.uniform(12)), rng);
    const PairConfusion c = pair_confusion(truth, pred);
    const oracle::Pairs p = oracle::all_pairs(truth, pred);
    if (c.tp != p.tp || c.fp != p.fp || c.fn != p.fn) ++mismatches;
    const double f = p.tp == 0 ? 0.0
                               : static_cast<double>(p.tp) / std::sqrt(static_cast<double>(p.tp + p.fp) *
                                                                       static_cast<double>(p.tp + p.fn));
    if (std::abs(fmi(truth, pred) - f) > 1e-12) ++mismatches;
    if (p.tp + p.fn > 0 &&
        std::abs(co_aoi_rate(truth, pred) - static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fn)) > 1e-12)
      ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0, fmt("%d mismatches over 200 map pairs, %.2f s", mismatches, secs)};
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const NetworkShape shape = TrainConfig{}.network_shape(6, 6);
  Rng rng(2);
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  for (int n = 0; n < 10; ++n) {
    QNetwork net(shape);
    net.initialize(rng);
    // Nonzero biases so every bias gradient carries signal.
    for (QNetwork::Block b : {QNetwork::kConv1B, QNetwork::kConv2B, QNetwork::kDenseB, QNetwork::kOutB})
      for (std::size_t i = 0; i < net.block_size(b); ++i) net.parameters()[net.block_offset(b) + i] = rng.uniform(-0.1, 0.1);
    for (int s = 0; s < 5; ++s) {
      State state{Tensor({static_cast<std::size_t>(shape.in_channels), 6, 6})};
      for (double& v : state.data.values) v = rng.uniform01();
      const GradCheckResult r = grad_check(net, state, rng.uniform(kActionCount), rng);
      worst = std::max(worst, r.max_relative_error);
      checked += r.checked;
      skipped += r.skipped;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && checked > 0 && secs < 30.0,
          fmt("max relative error %.3g over %zu parameters (%zu at ReLU kinks skipped), %.2f s", worst, checked,
              skipped, secs)};
}

double endpoint_objective(const SegmentationMap& map, const Instance& inst, const RewardWeights& w) {
  std::uint64_t sw = 0;
  for (const Trajectory& t : inst.trajectories) sw += oracle::consecutive_switches(map, t.cells);
  return -w.trajectory * static_cast<double>(sw) + w.road * oracle::road_similarity(map, inst.road_partition);
}

Outcome telescoping() {
  const Instance inst = generate_instance(SynthConfig{});
  Rng rng(3);
  double worst = 0.0;
  for (int e = 0; e < 100; ++e) {
    const SegmentationProblem p = make_problem(inst, e % 2 == 0 ? InitialMap::Singletons : InitialMap::Road);
    const RewardWeights w{rng.uniform(0.0, 1.0), rng.uniform(0.01, 1.0)};
    const auto policy = [&](const State&, const ActionMask& mask) {
      std::vector<std::size_t> legal;
      for (std::size_t a = 0; a < mask.size(); ++a)
        if (mask[a]) legal.push_back(a);
      return action_from_index(legal[rng.uniform(legal.size())]);
    };
    const EpisodeResult r = run_episode(p, policy, 8, w);
    double sum = 0.0;
    for (const Transition& t : r.transitions) sum += t.reward;
    const double expected = endpoint_objective(r.final_map, inst, w) - endpoint_objective(p.initial, inst, w);
    worst = std::max(worst, std::abs(sum - expected));
  }
  return {worst <= 1e-9, fmt("max |sum of rewards - objective difference| = %.3g over 100 episodes", worst)};
}

Outcome validity() {
  const Instance inst = generate_instance(SynthConfig{});
  const SegmentationProblem p = make_problem(inst);
  Rng rng(4);
  int violations = 0, actions = 0, merges = 0;
  SegmentationEnv env(p, RewardWeights{});
  while (actions < 10000) {
    if (actions % 250 == 0) env.reset(oracle::random_valid_map(6, 6, 2 + static_cast<int>(rng.uniform(20)), rng));
    const std::vector<GridCoord> border = border_cells(env.map());
    if (border.empty()) {
      env.reset();
      continue;
    }
    const GridCoord g = border[rng.uniform(border.size())];
    const ActionMask mask = env.legal(g);
    std::vector<std::size_t> legal;
    for (std::size_t a = 0; a < mask.size(); ++a)
      if (mask[a]) legal.push_back(a);
    const Label before = env.map().at(g);
    env.step(g, action_from_index(legal[rng.uniform(legal.size())]));
    ++actions;
    if (env.map().at(g) != before) ++merges;
    if (!oracle::valid_map(env.map())) ++violations;
  }
  return {violations == 0, fmt("%d violations after %d random legal actions (%d relabelled a cell)", violations,
                               actions, merges)};
}

// ---------------------------------------------------------------- learning

struct LearningRows {
  std::map<std::string, std::map<std::uint64_t, MethodRow>> by_method;
  bool ok = false;
  std::string error;
};

LearningRows learning_run(const fs::path& config_path, const fs::path& work) {
  LearningRows out;
  try {
    ExperimentConfig cfg = load_experiment_config(config_path);
    cfg.out_dir = (work / "learning").string();
    cmd_synth(cfg, true);
    const RunOutput run = cmd_run(cfg, true, std::max(1u, std::thread::hardware_concurrency()));
    for (const MethodRow& row : run.record.rows) out.by_method[row.method][row.seed] = row;
    std::printf("%s", run.csv.c_str());
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

Outcome end_to_end(const LearningRows& rows) {
  if (!rows.ok) return {false, "run failed: " + rows.error};
  const auto& full = rows.by_method.at("trajrl4aoi");
  int good = 0;
  double slowest = 0.0;
  std::string per_seed;
  for (const auto& [seed, row] : full) {
    const bool hit = row.fmi && row.cr && *row.fmi >= 0.90 && *row.cr >= 0.85;
    good += hit ? 1 : 0;
    slowest = std::max(slowest, row.seconds);
    per_seed += fmt(" %llu:%.3f/%.3f", static_cast<unsigned long long>(seed), row.fmi.value_or(-1), row.cr.value_or(-1));
  }
  return {good >= 3 && slowest <= 1800.0,
          fmt("%d of %zu seeds reach FMI >= 0.90 and CR >= 0.85; slowest seed %.0f s; seed:FMI/CR", good, full.size(),
              slowest) +
              per_seed};
}

double mean_fmi(const std::map<std::uint64_t, MethodRow>& rows) {
  double s = 0.0;
  for (const auto& [seed, row] : rows) s += row.fmi.value_or(0.0);
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

Outcome reward_ablation(const LearningRows& rows) {
  if (!rows.ok) return {false, "run failed: " + rows.error};
  const double both = mean_fmi(rows.by_method.at("trajrl4aoi_no_pp"));
  const double traj = mean_fmi(rows.by_method.at("trajrl4aoi_traj_only"));
  const double road = mean_fmi(rows.by_method.at("trajrl4aoi_road_only"));
  return {traj > road && both > traj && both > road,
          fmt("mean FMI without post-processing: both %.4f, trajectory-only %.4f, road-only %.4f", both, traj, road)};
}

Outcome post_process_ablation(const LearningRows& rows) {
  if (!rows.ok) return {false, "run failed: " + rows.error};
  const auto& after = rows.by_method.at("trajrl4aoi");
  const auto& before = rows.by_method.at("trajrl4aoi_no_pp");
  int not_worse = 0, better = 0;
  std::string per_seed;
  for (const auto& [seed, row] : after) {
    const double a = row.fmi.value_or(0.0), b = before.at(seed).fmi.value_or(0.0);
    not_worse += a >= b ? 1 : 0;
    better += a > b ? 1 : 0;
    per_seed += fmt(" %llu:%.3f->%.3f", static_cast<unsigned long long>(seed), b, a);
  }
  return {not_worse >= 3 && better >= 1,
          fmt("FMI not lower on %d seeds, higher on %d; seed:before->after", not_worse, better) + per_seed};
}

// ---------------------------------------------------------------- baselines

double exhaustive_modularity(const WeightedGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<std::size_t> c(n, 0);
  double best = -1.0;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      best = std::max(best, oracle::modularity_double_sum(g, c));
      return;
    }
    for (std::size_t k = 0; k <= used && k < n; ++k) {
      c[i] = k;
      rec(i + 1, std::max(used, k + 1));
    }
  };
  rec(0, 0);
  return best;
}

Outcome baseline_sanity() {
  std::string failures;
  int instances = 0;
  for (const GridSize& size : {GridSize{5, 5, 4}, GridSize{6, 6, 6}, GridSize{10, 10, 20}})
    for (std::uint64_t seed = 3047; seed < 3057; ++seed) {
      SynthConfig sc;
      sc.rows = size.rows;
      sc.cols = size.cols;
      sc.aoi_count = size.aoi_count;
      sc.seed = seed;
      const Instance inst = generate_instance(sc);
      const SegmentationMap start = SegmentationMap::singletons(inst.rows, inst.cols);
      if (total_switches(greedy_seg(start, inst.trajectories), inst.trajectories) > total_switches(start, inst.trajectories))
        failures += " greedy " + size.name() + "/" + std::to_string(seed);
      sc.road_merge_probability = 0.0;
      const Instance exact = generate_instance(sc);
      if (fmi(*exact.ground_truth, road_seg(exact.road_partition)) != 1.0)
        failures += " road_seg " + size.name() + "/" + std::to_string(seed);
      ++instances;
    }
  Rng rng(8);
  double worst_gap = 0.0;
  for (int t = 0; t < 20; ++t) {
    const WeightedGraph g = t % 2 == 0 ? oracle::planted_graph(rng) : oracle::erdos_renyi_graph(rng, 0.5);
    const double q = oracle::modularity_double_sum(g, louvain(g));
    worst_gap = std::max(worst_gap, exhaustive_modularity(g) - q);
  }
  if (worst_gap > 1e-9) failures += fmt(" louvain gap %.3g", worst_gap);
  return {failures.empty(), fmt("greedy and road_seg on %d instances, louvain on 20 graphs", instances) +
                                (failures.empty() ? std::string(", no failures") : ":" + failures)};
}

// Share of small graphs on which the heuristic stage alone (without the
// exhaustive finish) misses the maximum modularity.
void louvain_heuristic_info() {
  Rng rng(9);
  int misses = 0;
  const int graphs = 600;
  for (int t = 0; t < graphs; ++t) {
    const WeightedGraph g = t % 3 == 0 ? oracle::planted_graph(rng) : oracle::erdos_renyi_graph(rng, t % 3 == 1 ? 0.3 : 0.6);
    if (exhaustive_modularity(g) - oracle::modularity_double_sum(g, detail::louvain_single(g)) > 1e-9) ++misses;
  }
  std::printf("info: heuristic Louvain stage misses the optimum on %d of %d random graphs (<= 8 nodes); "
              "louvain() closes the gap exhaustively up to %zu nodes\n",
              misses, graphs, detail::kExhaustiveNodes);
}

Outcome determinism(const fs::path& work) {
  try {
    ExperimentConfig cfg;
    cfg.sizes = {GridSize{5, 5, 4}, GridSize{6, 6, 6}};
    cfg.methods = known_methods();
    cfg.seeds = {3047, 3048};
    cfg.train.episodes = 6;
    cfg.train.conv1 = 4;
    cfg.train.conv2 = 4;
    cfg.train.hidden = 16;
    std::vector<std::string> csv;
    std::vector<std::map<std::string, std::string>> checkpoints;
    for (unsigned jobs : {1u, 3u}) {
      cfg.out_dir = (work / ("determinism_" + std::to_string(jobs))).string();
      cmd_synth(cfg, true);
      cmd_run(cfg, true, jobs);
      csv.push_back(read_file(fs::path(cfg.out_dir) / "results.csv"));
      std::map<std::string, std::string> files;
      for (const auto& e : fs::recursive_directory_iterator(fs::path(cfg.out_dir) / "checkpoints"))
        if (e.is_regular_file()) files[fs::relative(e.path(), cfg.out_dir).string()] = read_file(e.path());
      checkpoints.push_back(std::move(files));
    }
    const bool same = csv[0] == csv[1] && checkpoints[0] == checkpoints[1] && !checkpoints[0].empty();
    return {same, fmt("results.csv (%zu bytes) and %zu checkpoints %s across two runs (1 and 3 worker threads)",
                      csv[0].size(), checkpoints[0].size(), same ? "identical" : "differ")};
  } catch (const std::exception& e) {
    return {false, std::string("run failed: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  fs::path config, work = "acceptance_work";
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      config = argv[++i];
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (!a.empty() && std::isdigit(static_cast<unsigned char>(a[0]))) {
      selected.insert(std::stoi(a));
    } else {
      std::fprintf(stderr, "usage: acceptance --config <experiment.json> [--work <dir>] [criterion...]\n");
      return 2;
    }
  }
  const auto wanted = [&](int c) { return selected.empty() || selected.contains(c); };
  if ((wanted(5) || wanted(6) || wanted(7)) && config.empty()) {
    std::fprintf(stderr, "criteria 5-7 need --config\n");
    return 2;
  }

  bool all = true;
  const auto report = [&](int n, const char* name, const Outcome& o) {
    std::printf("criterion %d (%s): %s: %s\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  };
  if (wanted(1)) report(1, "metric oracle", metric_oracle());
  if (wanted(2)) report(2, "gradients", gradients());
  if (wanted(3)) report(3, "reward telescoping", telescoping());
  if (wanted(4)) report(4, "validity", validity());
  if (wanted(5) || wanted(6) || wanted(7)) {
    const LearningRows rows = learning_run(config, work);
    if (wanted(5)) report(5, "end-to-end learning", end_to_end(rows));
    if (wanted(6)) report(6, "reward ablation", reward_ablation(rows));
    if (wanted(7)) report(7, "post-process ablation", post_process_ablation(rows));
  }
  if (wanted(8)) {
    report(8, "baseline sanity", baseline_sanity());
    louvain_heuristic_info();
  }
  if (wanted(9)) report(9, "determinism", determinism(work));
  return all ? 0 : 1;
}
