// aoiseg command-line front end. Exit codes: 0 ok, 2 config error, 3 I/O
// error, 4 invalid input, 5 training error, 1 anything else.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "aoiseg/harness.hpp"
#include "aoiseg/io.hpp"
#include "aoiseg/road_init.hpp"

namespace {

using namespace aoiseg;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::string instance;
  std::string map;
  std::string checkpoint;
  std::string packages;
  std::string trajectories;
  std::string raster;
  int cutoff = 128;
  int rounds = 1;
  int cell_px = 16;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
};

// `out_is_run_dir`: --out replaces the config's out_dir (synth, run).
ExperimentConfig experiment(const Options& o, bool out_is_run_dir) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (out_is_run_dir && !o.out.empty()) cfg.out_dir = o.out;
  if (o.seed) cfg.seeds = {*o.seed};
  cfg.validate();
  return cfg;
}

Instance instance(const Options& o) {
  if (o.instance.empty()) throw ConfigError("--instance is required");
  return load_instance(o.instance);
}

void require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
}

void print_metrics(const SegmentationMap& map, const Instance& inst) {
  const MethodRow row = score("", "", 0, map, inst);
  Json j{{"r1", row.r1},
         {"r2", *row.r2},
         {"aois", row.aois},
         {"switches", total_switches(map, inst.trajectories)},
         {"valid", is_valid(map)}};
  j["fmi"] = row.fmi ? Json(*row.fmi) : Json(nullptr);
  j["cr"] = row.cr ? Json(*row.cr) : Json(nullptr);
  std::cout << dump_json(j);
}

int cmd_synth(const Options& o) {
  for (const auto& p : aoiseg::cmd_synth(experiment(o, true), o.force)) std::cout << p.string() << "\n";
  return 0;
}

int cmd_run(const Options& o) {
  const RunOutput r = aoiseg::cmd_run(experiment(o, true), o.force, o.jobs);
  std::cout << r.csv;
  return 0;
}

// Trains one network on one instance: checkpoint, learning curve, raw and
// post-processed maps under --out.
int cmd_train(const Options& o) {
  require_out(o);
  const ExperimentConfig cfg = experiment(o, false);
  const Instance inst = instance(o);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seeds.front();
  const SegmentationProblem problem = make_problem(inst);
  const TrainResult result = train(problem, tc, inst.ground_truth);
  const std::filesystem::path out = o.out;
  const SegmentationMap final_map = post_process_rounds(result.best_map, problem.graph, cfg.post_process_rounds);
  write_file(out / "checkpoint.bin", serialize_checkpoint(result.net), o.force);
  write_file(out / "curve.csv", curve_csv(result.curve), o.force);
  save_map(canonicalize(result.best_map), out / "map_raw.json", o.force);
  save_map(final_map, out / "map.json", o.force);
  print_metrics(final_map, inst);
  return 0;
}

// Scores a map file, or the greedy rollout of a checkpoint, against an instance.
int cmd_eval(const Options& o) {
  const Instance inst = instance(o);
  if (o.map.empty() == o.checkpoint.empty()) throw ConfigError("give exactly one of --map and --checkpoint");
  SegmentationMap map;
  if (!o.map.empty()) {
    map = load_map(o.map);
  } else {
    const ExperimentConfig cfg = experiment(o, false);
    map = greedy_rollout(make_problem(inst), load_checkpoint(o.checkpoint), cfg.train.weights, cfg.train.traversals);
  }
  if (!(map.shape() == inst.shape())) throw InputError("map and instance dimensions differ");
  print_metrics(map, inst);
  return 0;
}

int cmd_postprocess(const Options& o) {
  require_out(o);
  const Instance inst = instance(o);
  if (o.map.empty()) throw ConfigError("--map is required");
  const SegmentationMap map = load_map(o.map);
  if (!is_valid(map)) throw InputError("map has a disconnected AOI");
  const SegmentationMap out =
      post_process_rounds(map, build_transfer_graph(inst.trajectories, inst.rows, inst.cols), o.rounds);
  save_map(out, o.out, o.force);
  print_metrics(out, inst);
  return 0;
}

int cmd_render(const Options& o) {
  require_out(o);
  if (o.map.empty()) throw ConfigError("--map is required");
  const SegmentationMap map = load_map(o.map);
  if (!is_valid(map)) throw InputError("map has a disconnected AOI");
  std::vector<Trajectory> trajectories;
  if (!o.instance.empty()) {
    Instance inst = load_instance(o.instance);
    if (!(inst.shape() == map.shape())) throw InputError("map and instance dimensions differ");
    trajectories = std::move(inst.trajectories);
  }
  write_file(o.out, render_ppm(map, trajectories, o.cell_px), o.force);
  return 0;
}

int cmd_roadinit(const Options& o) {
  require_out(o);
  if (o.raster.empty()) throw ConfigError("--raster is required");
  save_map(road_partition_from_raster(parse_pgm(read_file(o.raster)), o.cutoff), o.out, o.force);
  return 0;
}

// External data: packages and trajectories CSV on the raster's grid. The road
// partition comes from the raster; there is no ground truth.
int cmd_ingest(const Options& o) {
  require_out(o);
  if (o.raster.empty() || o.packages.empty() || o.trajectories.empty())
    throw ConfigError("--raster, --packages and --trajectories are required");
  const GrayRaster raster = parse_pgm(read_file(o.raster));
  Instance inst;
  inst.rows = raster.shape.rows;
  inst.cols = raster.shape.cols;
  inst.road_partition = road_partition_from_raster(raster, o.cutoff);
  inst.packages = parse_packages_csv(read_file(o.packages), raster.shape);
  inst.trajectories = parse_trajectories_csv(read_file(o.trajectories), raster.shape);
  save_instance(inst, o.out, o.force);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AOI segmentation from courier trajectories"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Replace the config's seed list with this seed");
    sub->add_option("--out", o.out, "Output directory or file");
    sub->add_flag("--force", o.force, "Overwrite existing outputs");
  };
  auto* synth = app.add_subcommand("synth", "Generate one instance per configured grid size");
  common(synth);
  auto* run = app.add_subcommand("run", "Run every method on every size and seed; print the table");
  common(run);
  run->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  auto* trn = app.add_subcommand("train", "Train one network on one instance");
  common(trn);
  trn->add_option("--instance", o.instance, "Instance JSON")->required();
  auto* eval = app.add_subcommand("eval", "Score a map or a checkpoint's greedy map");
  common(eval);
  eval->add_option("--instance", o.instance, "Instance JSON")->required();
  eval->add_option("--map", o.map, "Map JSON");
  eval->add_option("--checkpoint", o.checkpoint, "Network checkpoint");
  auto* pp = app.add_subcommand("postprocess", "Merge fragmented AOIs of a map");
  common(pp);
  pp->add_option("--instance", o.instance, "Instance JSON")->required();
  pp->add_option("--map", o.map, "Map JSON")->required();
  pp->add_option("--rounds", o.rounds, "Rounds until fixpoint (1..5)")->check(CLI::Range(1, 5));
  auto* render = app.add_subcommand("render", "Draw a map as a PPM image");
  common(render);
  render->add_option("--map", o.map, "Map JSON")->required();
  render->add_option("--instance", o.instance, "Overlay this instance's trajectories");
  render->add_option("--cell", o.cell_px, "Pixels per cell")->check(CLI::Range(1, 256));
  auto* roadinit = app.add_subcommand("roadinit", "Initial partition from a road raster (PGM)");
  common(roadinit);
  roadinit->add_option("--raster", o.raster, "Binary PGM, roads dark")->required();
  roadinit->add_option("--cutoff", o.cutoff, "Road iff intensity <= cutoff")->check(CLI::Range(0, 255));
  auto* ingest = app.add_subcommand("ingest", "Build an instance from CSV files and a road raster");
  common(ingest);
  ingest->add_option("--packages", o.packages, "courier_id,row,col")->required();
  ingest->add_option("--trajectories", o.trajectories, "courier_id,seq,row,col")->required();
  ingest->add_option("--raster", o.raster, "Binary PGM, roads dark")->required();
  ingest->add_option("--cutoff", o.cutoff, "Road iff intensity <= cutoff")->check(CLI::Range(0, 255));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(o);
    if (*run) return cmd_run(o);
    if (*trn) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*pp) return cmd_postprocess(o);
    if (*render) return cmd_render(o);
    if (*roadinit) return cmd_roadinit(o);
    if (*ingest) return cmd_ingest(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 4;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
