#pragma once

// Experiment orchestration behind the CLI: experiment configs, instance
// synthesis, method x seed runs with a metric table, and run records.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "aoiseg/baselines.hpp"
#include "aoiseg/ddqn.hpp"
#include "aoiseg/io.hpp"
#include "aoiseg/metrics.hpp"
#include "aoiseg/postprocess.hpp"
#include "aoiseg/synth.hpp"

namespace aoiseg {

/// Method names accepted in ExperimentConfig::methods. The trajrl4aoi
/// variants: full (post-processed), no_pp (same training, raw map), and the
/// single-reward ablations (k1:k2 = 1:0 and 0:1, raw map).
inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names = {
      "trajrl4aoi", "trajrl4aoi_no_pp", "trajrl4aoi_traj_only", "trajrl4aoi_road_only", "greedy", "road_seg",
      "dbscan",     "ckmeans",          "louvain",              "gclp"};
  return names;
}

struct GridSize {
  int rows = 6;
  int cols = 6;
  int aoi_count = 6;

  std::string name() const { return std::to_string(rows) + "x" + std::to_string(cols); }
  bool operator==(const GridSize&) const = default;
};

struct BaselineParams {
  double dbscan_eps = 1.5;
  int dbscan_min_pts = 4;
  int ckmeans_k_min = 2;
  int ckmeans_k_max = 10;
  double gclp_lambda = 1.0;
  int gclp_max_iters = 50;
  bool operator==(const BaselineParams&) const = default;
};

struct ExperimentConfig {
  std::vector<GridSize> sizes = {GridSize{}};
  std::vector<std::string> methods = {"trajrl4aoi"};
  SynthConfig synth;  // rows, cols and aoi_count come from each size
  TrainConfig train;  // seed comes from each run seed
  BaselineParams baselines;
  int post_process_rounds = 1;  // > 1 repeats post_process up to a fixpoint
  std::string out_dir = "runs/default";
  std::vector<std::uint64_t> seeds = {3047};

  void validate() const {
    if (sizes.empty()) throw ConfigError("experiment: at least one grid size is required");
    if (methods.empty()) throw ConfigError("experiment: at least one method is required");
    if (seeds.empty()) throw ConfigError("experiment: at least one seed is required");
    for (const std::string& m : methods)
      if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
        throw ConfigError("experiment: unknown method '" + m + "'");
    for (const GridSize& s : sizes) {
      SynthConfig c = synth;
      c.rows = s.rows;
      c.cols = s.cols;
      c.aoi_count = s.aoi_count;
      try {
        aoiseg::validate(c);
      } catch (const InputError& e) {
        throw ConfigError(std::string("experiment: size ") + s.name() + ": " + e.what());
      }
    }
    train.validate();
    if (post_process_rounds < 1 || post_process_rounds > 5)
      throw ConfigError("experiment: post_process_rounds must lie in [1, 5]");
    if (!(baselines.dbscan_eps > 0.0) || baselines.dbscan_min_pts < 1)
      throw ConfigError("experiment: dbscan needs eps > 0 and min_pts >= 1");
    if (baselines.ckmeans_k_min < 1 || baselines.ckmeans_k_min > baselines.ckmeans_k_max)
      throw ConfigError("experiment: ckmeans needs 1 <= k_min <= k_max");
    if (!(baselines.gclp_lambda >= 0.0) || baselines.gclp_max_iters < 1)
      throw ConfigError("experiment: gclp needs lambda >= 0 and max_iters >= 1");
  }

  SynthConfig synth_for(const GridSize& s) const {
    SynthConfig c = synth;
    c.rows = s.rows;
    c.cols = s.cols;
    c.aoi_count = s.aoi_count;
    return c;
  }
};

inline Json experiment_config_to_json(const ExperimentConfig& c) {
  Json sizes = Json::array();
  for (const GridSize& s : c.sizes) sizes.push_back({{"rows", s.rows}, {"cols", s.cols}, {"aoi_count", s.aoi_count}});
  Json synth = synth_config_to_json(c.synth);
  synth.erase("rows");
  synth.erase("cols");
  synth.erase("aoi_count");
  Json train = train_config_to_json(c.train);
  train.erase("seed");
  const BaselineParams& b = c.baselines;
  return Json{{"schema_version", kSchemaVersion},
              {"kind", "experiment"},
              {"sizes", sizes},
              {"methods", c.methods},
              {"synth", synth},
              {"train", train},
              {"baselines",
               {{"dbscan_eps", b.dbscan_eps},
                {"dbscan_min_pts", b.dbscan_min_pts},
                {"ckmeans_k_min", b.ckmeans_k_min},
                {"ckmeans_k_max", b.ckmeans_k_max},
                {"gclp_lambda", b.gclp_lambda},
                {"gclp_max_iters", b.gclp_max_iters}}},
              {"post_process_rounds", c.post_process_rounds},
              {"out_dir", c.out_dir},
              {"seeds", c.seeds}};
}

/// Missing keys keep their defaults; unknown keys and bad values are ConfigErrors.
inline ExperimentConfig experiment_config_from_json(const Json& j) {
  const std::string what = "experiment";
  detail::check_known_keys(j,
                           {"schema_version", "kind", "sizes", "methods", "synth", "train", "baselines",
                            "post_process_rounds", "out_dir", "seeds"},
                           what);
  int version = 0;
  detail::read_opt(j, "schema_version", version, what);
  if (version != kSchemaVersion) throw ConfigError(what + ": schema_version must be " + std::to_string(kSchemaVersion));
  std::string kind = "experiment";
  detail::read_opt(j, "kind", kind, what);
  if (kind != "experiment") throw ConfigError(what + ": kind must be 'experiment'");
  ExperimentConfig c;
  if (j.contains("sizes")) {
    if (!j.at("sizes").is_array()) throw ConfigError(what + ": sizes must be an array");
    c.sizes.clear();
    for (const Json& s : j.at("sizes")) {
      detail::check_known_keys(s, {"rows", "cols", "aoi_count"}, what + " size");
      GridSize g;
      detail::read_opt(s, "rows", g.rows, what);
      detail::read_opt(s, "cols", g.cols, what);
      detail::read_opt(s, "aoi_count", g.aoi_count, what);
      c.sizes.push_back(g);
    }
  }
  detail::read_opt(j, "methods", c.methods, what);
  if (j.contains("synth")) {
    Json synth = j.at("synth");
    if (synth.is_object() && (synth.contains("rows") || synth.contains("cols") || synth.contains("aoi_count")))
      throw ConfigError(what + ": grid dimensions belong in 'sizes', not 'synth'");
    c.synth = synth_config_from_json(synth);
  }
  if (j.contains("train")) {
    if (j.at("train").is_object() && j.at("train").contains("seed"))
      throw ConfigError(what + ": training seeds belong in 'seeds', not 'train'");
    c.train = train_config_from_json(j.at("train"));
  }
  if (j.contains("baselines")) {
    const Json& b = j.at("baselines");
    detail::check_known_keys(
        b, {"dbscan_eps", "dbscan_min_pts", "ckmeans_k_min", "ckmeans_k_max", "gclp_lambda", "gclp_max_iters"},
        what + " baselines");
    detail::read_opt(b, "dbscan_eps", c.baselines.dbscan_eps, what);
    detail::read_opt(b, "dbscan_min_pts", c.baselines.dbscan_min_pts, what);
    detail::read_opt(b, "ckmeans_k_min", c.baselines.ckmeans_k_min, what);
    detail::read_opt(b, "ckmeans_k_max", c.baselines.ckmeans_k_max, what);
    detail::read_opt(b, "gclp_lambda", c.baselines.gclp_lambda, what);
    detail::read_opt(b, "gclp_max_iters", c.baselines.gclp_max_iters, what);
  }
  detail::read_opt(j, "post_process_rounds", c.post_process_rounds, what);
  detail::read_opt(j, "out_dir", c.out_dir, what);
  detail::read_opt(j, "seeds", c.seeds, what);
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

/// FNV-1a over the serialized config without out_dir, so moving a run does
/// not change its identity.
inline std::string config_hash(const ExperimentConfig& c) {
  Json j = experiment_config_to_json(c);
  j.erase("out_dir");
  return hex64(fnv1a64(j.dump()));
}

// ------------------------------------------------------------------ records

struct MethodRow {
  std::string size;
  std::string method;
  std::uint64_t seed = 0;
  double r1 = 0.0;
  std::optional<double> r2;   // omitted for road_seg
  std::optional<double> fmi;  // absent without ground truth
  std::optional<double> cr;
  std::size_t aois = 0;
  double seconds = 0.0;
  SegmentationMap map;
  bool operator==(const MethodRow&) const = default;
};

struct RunRecord {
  std::string config_hash;
  Json config;
  std::vector<MethodRow> rows;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> artifacts;  // relative to the run directory
  bool operator==(const RunRecord&) const = default;
};

inline Json run_record_to_json(const RunRecord& r) {
  Json rows = Json::array();
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  for (const MethodRow& m : r.rows)
    rows.push_back({{"size", m.size},
                    {"method", m.method},
                    {"seed", m.seed},
                    {"r1", m.r1},
                    {"r2", opt(m.r2)},
                    {"fmi", opt(m.fmi)},
                    {"cr", opt(m.cr)},
                    {"aois", m.aois},
                    {"seconds", m.seconds},
                    {"map", map_to_json(m.map)}});
  return Json{{"schema_version", kSchemaVersion}, {"kind", "run_record"},
              {"config_hash", r.config_hash},       {"config", r.config},
              {"rows", rows},                       {"wall_clock_seconds", r.wall_clock_seconds},
              {"artifacts", r.artifacts}};
}

/// Rejects metrics outside their ranges: r1 <= 0, everything else in [0, 1].
inline RunRecord run_record_from_json(const Json& j) {
  const std::string what = "run_record";
  detail::check_header(j, what);
  RunRecord r;
  r.config_hash = detail::get_field<std::string>(j, "config_hash", what);
  if (!j.contains("config")) throw IoError(what + ": missing field 'config'");
  r.config = j.at("config");
  r.wall_clock_seconds = detail::get_field<double>(j, "wall_clock_seconds", what);
  r.artifacts = detail::get_field<std::vector<std::string>>(j, "artifacts", what);
  if (!j.contains("rows") || !j.at("rows").is_array()) throw IoError(what + ": rows must be an array");
  auto unit = [&](const Json& row, const char* key) -> std::optional<double> {
    if (!row.contains(key) || row.at(key).is_null()) return std::nullopt;
    const double v = detail::get_field<double>(row, key, what);
    if (!(v >= 0.0 && v <= 1.0)) throw IoError(what + ": " + key + " outside [0, 1]");
    return v;
  };
  for (const Json& row : j.at("rows")) {
    MethodRow m;
    m.size = detail::get_field<std::string>(row, "size", what);
    m.method = detail::get_field<std::string>(row, "method", what);
    m.seed = detail::get_field<std::uint64_t>(row, "seed", what);
    m.r1 = detail::get_field<double>(row, "r1", what);
    if (!(m.r1 <= 0.0)) throw IoError(what + ": r1 must be <= 0");
    m.r2 = unit(row, "r2");
    m.fmi = unit(row, "fmi");
    m.cr = unit(row, "cr");
    m.aois = detail::get_field<std::size_t>(row, "aois", what);
    m.seconds = detail::get_field<double>(row, "seconds", what);
    if (!row.contains("map")) throw IoError(what + ": row without map");
    m.map = map_from_json(row.at("map"));
    r.rows.push_back(std::move(m));
  }
  return r;
}

namespace detail {

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace detail

/// `size,method,seed,r1,r2,fmi,cr,aois`: per-seed rows, then a `mean` row per
/// size and method. Empty cells mean "not reported". Wall-clock is excluded
/// so identical runs give identical bytes.
inline std::string results_csv(const std::vector<MethodRow>& rows) {
  std::string out = "size,method,seed,r1,r2,fmi,cr,aois\n";
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].size == rows[i].size && rows[j].method == rows[i].method) ++j;
    auto mean = [&](auto get) -> std::optional<double> {
      double sum = 0.0;
      for (std::size_t k = i; k < j; ++k) {
        const std::optional<double> v = get(rows[k]);
        if (!v) return std::nullopt;
        sum += *v;
      }
      return sum / static_cast<double>(j - i);
    };
    double aois = 0.0;
    for (std::size_t k = i; k < j; ++k) {
      const MethodRow& m = rows[k];
      out += m.size + "," + m.method + "," + std::to_string(m.seed) + "," + detail::format_metric(m.r1) + "," +
             detail::format_metric(m.r2) + "," + detail::format_metric(m.fmi) + "," + detail::format_metric(m.cr) +
             "," + std::to_string(m.aois) + "\n";
      aois += static_cast<double>(m.aois);
    }
    out += rows[i].size + "," + rows[i].method + ",mean," +
           detail::format_metric(mean([](const MethodRow& m) { return std::optional<double>(m.r1); })) + "," +
           detail::format_metric(mean([](const MethodRow& m) { return m.r2; })) + "," +
           detail::format_metric(mean([](const MethodRow& m) { return m.fmi; })) + "," +
           detail::format_metric(mean([](const MethodRow& m) { return m.cr; })) + "," +
           detail::format_metric(aois / static_cast<double>(j - i)) + "\n";
    i = j;
  }
  return out;
}

// ------------------------------------------------------------------ methods

inline std::vector<GridCoord> all_packages(const Instance& inst) {
  std::vector<GridCoord> out;
  for (const auto& courier : inst.packages) out.insert(out.end(), courier.begin(), courier.end());
  return out;
}

inline SegmentationMap post_process_rounds(const SegmentationMap& seg, const TransferGraph& transfer, int rounds) {
  return rounds <= 1 ? post_process(seg, transfer) : post_process_fixpoint(seg, transfer, rounds);
}

inline SegmentationMap run_baseline(const std::string& method, const Instance& inst, std::uint64_t seed,
                                    const BaselineParams& p) {
  const TransferGraph transfer = build_transfer_graph(inst.trajectories, inst.rows, inst.cols);
  if (method == "greedy") return greedy_seg(SegmentationMap::singletons(inst.rows, inst.cols), transfer);
  if (method == "road_seg") return road_seg(inst.road_partition);
  if (method == "louvain") return louvain_grid(transfer);
  if (method == "gclp") return gclp_seg(transfer, p.gclp_lambda, p.gclp_max_iters);
  const std::vector<GridCoord> packages = all_packages(inst);
  if (method == "dbscan") return dbscan_seg(packages, p.dbscan_eps, p.dbscan_min_pts, inst.shape());
  if (method == "ckmeans") {
    const int k_max = std::min(p.ckmeans_k_max, static_cast<int>(packages.size()));
    return ckmeans_seg(packages, std::min(p.ckmeans_k_min, k_max), k_max, inst.shape(), seed);
  }
  throw ConfigError("unknown method '" + method + "'");
}

inline MethodRow score(const std::string& size, const std::string& method, std::uint64_t seed,
                       const SegmentationMap& map, const Instance& inst) {
  MethodRow row;
  row.size = size;
  row.method = method;
  row.seed = seed;
  row.map = canonicalize(map);
  // + 0.0 turns a negated zero into +0.
  row.r1 = inst.trajectories.empty() ? 0.0 : r1(map, inst.trajectories) + 0.0;
  if (method != "road_seg") row.r2 = r2(map, inst.road_partition);
  if (inst.ground_truth) {
    const PairConfusion c = pair_confusion(*inst.ground_truth, map);
    row.fmi = fmi(c);
    row.cr = co_aoi_rate(c);
  }
  row.aois = map.label_count();
  return row;
}

/// Greedy policy of a trained network from the problem's initial map.
inline SegmentationMap greedy_rollout(const SegmentationProblem& problem, const QNetwork& net,
                                      const RewardWeights& weights, int traversals) {
  SegmentationEnv env(problem, weights);
  auto greedy = [&](const State& s, const ActionMask& mask) {
    return action_from_index(masked_argmax(net.forward(s), mask));
  };
  run_episode(env, greedy, EpisodeOptions{traversals, false}, [](Transition&&) {});
  return env.map();
}

// ------------------------------------------------------------------ commands

inline std::filesystem::path instance_path(const std::filesystem::path& out_dir, const GridSize& s) {
  return out_dir / "instances" / (s.name() + ".json");
}

/// One instance per size under <out_dir>/instances. Existing files are kept
/// (IoError) unless `force`.
inline std::vector<std::filesystem::path> cmd_synth(const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  std::vector<std::filesystem::path> written;
  for (const GridSize& s : cfg.sizes) {
    const auto path = instance_path(cfg.out_dir, s);
    if (!force && std::filesystem::exists(path)) throw IoError(path.string() + " exists (use --force to overwrite)");
  }
  for (const GridSize& s : cfg.sizes) {
    const auto path = instance_path(cfg.out_dir, s);
    save_instance(generate_instance(cfg.synth_for(s)), path, true);
    written.push_back(path);
  }
  return written;
}

struct RunOutput {
  RunRecord record;
  std::string csv;
};

/// Every method on every size and seed. Jobs run on `jobs` threads, each on
/// its own copy of the instance; rows come back in config order, so the CSV
/// table and checkpoints do not depend on scheduling.
inline RunOutput cmd_run(const ExperimentConfig& cfg, bool force, unsigned jobs = 1) {
  cfg.validate();
  namespace fs = std::filesystem;
  const auto wall_start = std::chrono::steady_clock::now();
  const fs::path out = cfg.out_dir;
  const fs::path record_path = out / "run_record.json", csv_path = out / "results.csv";
  if (!force && (fs::exists(record_path) || fs::exists(csv_path)))
    throw IoError(out.string() + " already holds a run (use --force to overwrite)");
  std::vector<Instance> instances;
  for (const GridSize& s : cfg.sizes) {
    const fs::path p = instance_path(out, s);
    if (!fs::exists(p)) throw IoError(p.string() + " not found (run `synth` first)");
    instances.push_back(load_instance(p));
  }

  auto wants = [&](const std::string& m) { return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end(); };
  struct Variant {
    std::string tag;
    RewardWeights weights;
    std::vector<std::pair<std::string, bool>> methods;  // name, post-processed
  };
  std::vector<Variant> variants;
  {
    Variant both{"both", cfg.train.weights, {}};
    if (wants("trajrl4aoi")) both.methods.emplace_back("trajrl4aoi", true);
    if (wants("trajrl4aoi_no_pp")) both.methods.emplace_back("trajrl4aoi_no_pp", false);
    if (!both.methods.empty()) variants.push_back(both);
    if (wants("trajrl4aoi_traj_only")) variants.push_back({"traj_only", {1.0, 0.0}, {{"trajrl4aoi_traj_only", false}}});
    if (wants("trajrl4aoi_road_only")) variants.push_back({"road_only", {0.0, 1.0}, {{"trajrl4aoi_road_only", false}}});
  }

  // A job is one baseline or one training variant for one size and seed.
  struct Job {
    std::size_t size_index;
    std::uint64_t seed;
    std::string baseline;           // empty for training jobs
    std::optional<Variant> variant;
    std::vector<MethodRow> rows;
    std::vector<std::pair<fs::path, std::string>> files;
    std::exception_ptr error;
  };
  std::vector<Job> job_list;
  for (std::size_t si = 0; si < cfg.sizes.size(); ++si)
    for (std::uint64_t seed : cfg.seeds) {
      for (const Variant& v : variants) job_list.push_back(Job{si, seed, "", v, {}, {}, nullptr});
      for (const std::string& m : cfg.methods)
        if (m.rfind("trajrl4aoi", 0) != 0) job_list.push_back(Job{si, seed, m, std::nullopt, {}, {}, nullptr});
    }

  auto run_job = [&](Job& job) {
    const Instance inst = instances[job.size_index];
    const std::string size = cfg.sizes[job.size_index].name();
    const std::string stem = "seed" + std::to_string(job.seed);
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    if (!job.variant) {
      const SegmentationMap map = run_baseline(job.baseline, inst, job.seed, cfg.baselines);
      MethodRow row = score(size, job.baseline, job.seed, map, inst);
      row.seconds = elapsed();
      job.files.emplace_back(fs::path("maps") / size / (job.baseline + "_" + stem + ".json"), dump_json(map_to_json(row.map)));
      job.rows.push_back(std::move(row));
      return;
    }
    const Variant& v = *job.variant;
    TrainConfig tc = cfg.train;
    tc.seed = job.seed;
    tc.weights = v.weights;
    const SegmentationProblem problem = make_problem(inst);
    const TrainResult result = train(problem, tc, inst.ground_truth);
    const double train_seconds = elapsed();
    job.files.emplace_back(fs::path("checkpoints") / size / (v.tag + "_" + stem + ".bin"), serialize_checkpoint(result.net));
    job.files.emplace_back(fs::path("curves") / size / (v.tag + "_" + stem + ".csv"), curve_csv(result.curve));
    for (const auto& [name, pp] : v.methods) {
      const auto t1 = std::chrono::steady_clock::now();
      const SegmentationMap map = pp ? post_process_rounds(result.best_map, problem.graph, cfg.post_process_rounds)
                                     : result.best_map;
      MethodRow row = score(size, name, job.seed, map, inst);
      row.seconds = train_seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
      job.files.emplace_back(fs::path("maps") / size / (name + "_" + stem + ".json"), dump_json(map_to_json(row.map)));
      job.rows.push_back(std::move(row));
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < job_list.size(); k = next++) {
      try {
        run_job(job_list[k]);
      } catch (...) {
        job_list[k].error = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(job_list.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const Job& job : job_list)
    if (job.error) std::rethrow_exception(job.error);

  // Serialized assembly in config order: size, method, seed.
  RunRecord record;
  record.config_hash = config_hash(cfg);
  record.config = experiment_config_to_json(cfg);
  std::vector<std::string> artifacts;
  for (const Job& job : job_list)
    for (const auto& [rel, bytes] : job.files) {
      write_file(out / rel, bytes, true);
      artifacts.push_back(rel.generic_string());
    }
  for (std::size_t si = 0; si < cfg.sizes.size(); ++si)
    for (const std::string& m : cfg.methods)
      for (std::uint64_t seed : cfg.seeds)
        for (const Job& job : job_list)
          if (job.size_index == si && job.seed == seed)
            for (const MethodRow& row : job.rows)
              if (row.method == m) record.rows.push_back(row);
  RunOutput result;
  result.csv = results_csv(record.rows);
  write_file(csv_path, result.csv, true);
  artifacts.push_back("results.csv");
  artifacts.push_back("run_record.json");
  std::sort(artifacts.begin(), artifacts.end());
  record.artifacts = artifacts;
  record.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  write_file(record_path, dump_json(run_record_to_json(record)), true);
  result.record = std::move(record);
  return result;
}

}  // namespace aoiseg
