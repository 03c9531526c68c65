#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "aoiseg/harness.hpp"
#include "aoiseg/io.hpp"
#include "oracles.hpp"

using namespace aoiseg;
namespace fs = std::filesystem;

namespace {

// Fresh empty directory named after the running test.
fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path p = fs::temp_directory_path() / (std::string("aoiseg_") + info->test_suite_name() + "_" + info->name());
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny_experiment(const fs::path& dir, std::vector<std::string> methods) {
  ExperimentConfig cfg;
  cfg.out_dir = dir.string();
  cfg.methods = std::move(methods);
  cfg.seeds = {5, 6};
  cfg.train.episodes = 2;
  cfg.train.conv1 = 2;
  cfg.train.conv2 = 2;
  cfg.train.hidden = 4;
  cfg.train.batch_size = 4;
  cfg.train.traversals = 2;
  return cfg;
}

std::set<std::tuple<int, int, int>> colours(const std::string& ppm) {
  // Header is three lines: magic, size, maxval.
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) pos = ppm.find('\n', pos) + 1;
  std::set<std::tuple<int, int, int>> out;
  for (std::size_t i = pos; i + 2 < ppm.size(); i += 3)
    out.emplace(static_cast<unsigned char>(ppm[i]), static_cast<unsigned char>(ppm[i + 1]),
                static_cast<unsigned char>(ppm[i + 2]));
  return out;
}

}  // namespace

TEST(Fnv1a, PublishedVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
  EXPECT_EQ(hex64(1), "0000000000000001");
}

TEST(MapJson, RoundTripsAndRejectsMalformed) {
  Rng rng(111);
  const SegmentationMap seg = oracle::random_valid_map(4, 5, 4, rng);
  EXPECT_EQ(map_from_json(map_to_json(seg)), seg);
  EXPECT_EQ(map_to_json(seg)["labels"].size(), 20u);

  Json bad = map_to_json(seg);
  bad["schema_version"] = 2;
  EXPECT_THROW(map_from_json(bad), IoError);
  bad = map_to_json(seg);
  bad["kind"] = "instance";
  EXPECT_THROW(map_from_json(bad), IoError);
  bad = map_to_json(seg);
  bad["labels"].erase(0);
  EXPECT_THROW(map_from_json(bad), IoError);
  bad = map_to_json(seg);
  bad["labels"][3] = -1;
  EXPECT_THROW(map_from_json(bad), IoError);
  bad = map_to_json(seg);
  bad["labels"][3] = "x";
  EXPECT_THROW(map_from_json(bad), IoError);
  EXPECT_THROW(parse_json("{", "x"), IoError);
}

TEST(MapJson, FileRoundTrip) {
  const fs::path dir = scratch_dir();
  const SegmentationMap seg(2, 3, std::vector<Label>{0, 0, 1, 2, 2, 1});
  save_map(seg, dir / "m.json");
  EXPECT_EQ(load_map(dir / "m.json"), seg);
  EXPECT_THROW(save_map(seg, dir / "m.json", false), IoError);
  EXPECT_THROW(load_map(dir / "missing.json"), IoError);
}

TEST(InstanceJson, RoundTripsGeneratedInstances) {
  for (const auto& [rows, cols, k] : std::vector<std::tuple<int, int, int>>{{6, 6, 6}, {5, 5, 4}, {10, 10, 20}}) {
    SynthConfig cfg;
    cfg.rows = rows;
    cfg.cols = cols;
    cfg.aoi_count = k;
    const Instance inst = generate_instance(cfg);
    const Json j = instance_to_json(inst);
    EXPECT_EQ(instance_from_json(j), inst);
    // Serialization is a pure function of the instance.
    EXPECT_EQ(dump_json(j), dump_json(instance_to_json(instance_from_json(j))));
  }
}

TEST(InstanceJson, SchemaViolationsRejected) {
  const Instance inst = generate_instance(SynthConfig{});
  const Json good = instance_to_json(inst);

  Json bad = good;
  bad["trajectories"][0].push_back({5, 5});
  bad["trajectories"][0].push_back({0, 0});  // a jump, not a 4-step
  EXPECT_THROW(instance_from_json(bad), IoError);
  bad = good;
  bad["trajectories"][0][0] = {6, 0};
  EXPECT_THROW(instance_from_json(bad), IoError);
  bad = good;
  bad["packages"][0][0] = {0, -1};
  EXPECT_THROW(instance_from_json(bad), IoError);
  bad = good;
  bad["ground_truth"] = std::vector<int>{0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                                         0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1};
  EXPECT_THROW(instance_from_json(bad), IoError);  // label 1 is disconnected
  bad = good;
  bad.erase("road_partition");
  EXPECT_THROW(instance_from_json(bad), IoError);

  Json no_truth = good;
  no_truth["ground_truth"] = nullptr;
  EXPECT_FALSE(instance_from_json(no_truth).ground_truth.has_value());
}

TEST(ConfigJson, SynthAndTrainRoundTrip) {
  SynthConfig s;
  s.rows = 7;
  s.road_merge_probability = 0.25;
  s.seed = 99;
  const SynthConfig s2 = synth_config_from_json(synth_config_to_json(s));
  EXPECT_EQ(synth_config_to_json(s2), synth_config_to_json(s));
  TrainConfig t;
  t.episodes = 7;
  t.loss = TdLoss::Huber;
  t.weights = {0.3, 0.7};
  EXPECT_EQ(train_config_to_json(train_config_from_json(train_config_to_json(t))), train_config_to_json(t));
  EXPECT_THROW(train_config_from_json(Json{{"episdes", 3}}), ConfigError);
  EXPECT_THROW(train_config_from_json(Json{{"gamma", 1.0}}), ConfigError);
  EXPECT_THROW(train_config_from_json(Json{{"loss", "l1"}}), ConfigError);
  EXPECT_THROW(synth_config_from_json(Json{{"road_merge_probability", 2.0}}), ConfigError);
  EXPECT_EQ(train_config_from_json(Json::object()).episodes, TrainConfig{}.episodes);
}

TEST(ExperimentConfig, RoundTripAndValidation) {
  ExperimentConfig c;
  c.sizes = {{5, 5, 4}, {10, 10, 20}};
  c.methods = {"greedy", "trajrl4aoi"};
  c.seeds = {1, 2, 3};
  c.baselines.gclp_lambda = 0.5;
  const ExperimentConfig back = experiment_config_from_json(experiment_config_to_json(c));
  EXPECT_EQ(experiment_config_to_json(back), experiment_config_to_json(c));

  Json j = experiment_config_to_json(c);
  j["methods"] = {"greedy", "kmeans"};
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = experiment_config_to_json(c);
  j["methods"] = Json::array();
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = experiment_config_to_json(c);
  j["seeds"] = Json::array();
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = experiment_config_to_json(c);
  j["extra"] = 1;
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = experiment_config_to_json(c);
  j["sizes"][0]["aoi_count"] = 26;
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = experiment_config_to_json(c);
  j["train"]["seed"] = 4;
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);

  const ExperimentConfig partial = experiment_config_from_json(Json{{"schema_version", 1}, {"methods", {"road_seg"}}});
  EXPECT_EQ(partial.seeds, ExperimentConfig{}.seeds);
  EXPECT_EQ(partial.sizes, ExperimentConfig{}.sizes);
}

TEST(ExperimentConfig, HashIsStableAndIgnoresOutDir) {
  ExperimentConfig a;
  ExperimentConfig b = a;
  b.out_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a), config_hash(experiment_config_from_json(experiment_config_to_json(a))));
  b.seeds = {1};
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Csv, PackagesGroupByCourier) {
  const std::string text = "courier_id,row,col\n2,1,1\n1,0,0\n\n1, 0 ,1\r\n";
  const auto pk = parse_packages_csv(text, GridShape{3, 3});
  ASSERT_EQ(pk.size(), 2u);
  EXPECT_EQ(pk[0], (std::vector<GridCoord>{{0, 0}, {0, 1}}));
  EXPECT_EQ(pk[1], (std::vector<GridCoord>{{1, 1}}));
  EXPECT_THROW(parse_packages_csv("courier,row,col\n1,0,0\n", GridShape{3, 3}), IoError);
  EXPECT_THROW(parse_packages_csv("courier_id,row,col\n1,0\n", GridShape{3, 3}), IoError);
  EXPECT_THROW(parse_packages_csv("courier_id,row,col\n1,0,x\n", GridShape{3, 3}), IoError);
  EXPECT_THROW(parse_packages_csv("courier_id,row,col\n1,3,0\n", GridShape{3, 3}), IoError);
  EXPECT_THROW(parse_packages_csv("", GridShape{3, 3}), IoError);
}

TEST(Csv, TrajectoriesOrderBySeqAndDensify) {
  const std::string text = "courier_id,seq,row,col\n7,2,2,2\n7,1,0,0\n3,0,1,1\n";
  const auto ts = parse_trajectories_csv(text, GridShape{3, 3});
  ASSERT_EQ(ts.size(), 2u);
  EXPECT_EQ(ts[0].cells, (std::vector<std::size_t>{4}));
  // (0,0) -> (2,2), row first.
  EXPECT_EQ(ts[1].cells, (std::vector<std::size_t>{0, 3, 6, 7, 8}));
  EXPECT_THROW(parse_trajectories_csv("courier_id,seq,row,col\n1,0,0,0\n1,0,1,1\n", GridShape{3, 3}), IoError);
}

TEST(Pgm, RoundTripsAndRescales) {
  GrayRaster r(2, 3, 200);
  r.intensity[4] = 0;
  EXPECT_EQ(parse_pgm(encode_pgm(r)).intensity, r.intensity);
  EXPECT_EQ(parse_pgm(encode_pgm(r)).shape, r.shape);
  const std::string with_comment = std::string("P5\n# made by hand\n2 1\n1\n") + '\x00' + '\x01';
  const GrayRaster bw = parse_pgm(with_comment);
  EXPECT_EQ(bw.intensity, (std::vector<std::uint8_t>{0, 255}));
  EXPECT_THROW(parse_pgm("P2\n1 1\n255\n0"), IoError);
  EXPECT_THROW(parse_pgm(std::string("P5\n2 2\n255\n") + "abc"), IoError);
  EXPECT_THROW(parse_pgm(std::string("P5\n1 1\n65535\n") + "ab"), IoError);
  EXPECT_THROW(parse_pgm(std::string("P5\n1 1\n1\n") + '\x02'), IoError);
}

TEST(Render, OneAoiIsOneColour) {
  const std::string img = render_ppm(SegmentationMap(3, 4, 0), {}, 5);
  EXPECT_EQ(img.substr(0, 11), "P6\n20 15\n25");
  EXPECT_EQ(img.size(), std::string("P6\n20 15\n255\n").size() + 20 * 15 * 3);
  EXPECT_EQ(colours(img).size(), 1u);
}

TEST(Render, ThreeAoisGiveThreeColoursAndBytesAreStable) {
  Rng rng(112);
  const SegmentationMap seg = oracle::random_valid_map(6, 6, 3, rng);
  ASSERT_EQ(seg.label_count(), 3u);
  const std::string img = render_ppm(seg);
  EXPECT_EQ(colours(img).size(), 3u);
  EXPECT_EQ(img, render_ppm(seg));
  // Trajectory overlay adds black and nothing else.
  const std::vector<Trajectory> ts = {oracle::random_walk(6, 6, 10, rng)};
  const auto with = colours(render_ppm(seg, ts));
  EXPECT_EQ(with.size(), 4u);
  EXPECT_TRUE(with.count({0, 0, 0}));
}

TEST(Render, PaletteCyclesAfterThirtyTwo) {
  EXPECT_EQ(colours(render_ppm(SegmentationMap(1, 1, 32), {}, 1)), colours(render_ppm(SegmentationMap(1, 1, 0), {}, 1)));
  std::set<std::tuple<int, int, int>> distinct;
  for (const Rgb& c : kPalette) {
    distinct.emplace(c.r, c.g, c.b);
    EXPECT_FALSE(c == Rgb{});
  }
  EXPECT_EQ(distinct.size(), 32u);
}

TEST(Render, HorizontalStepDrawsAStraightLine) {
  const std::vector<Trajectory> ts = {Trajectory{{0, 1}}};
  const std::string img = render_ppm(SegmentationMap(1, 2, 0), ts, 4);
  const std::size_t header = std::string("P6\n8 4\n255\n").size();
  // Centres (2, 2) and (6, 2): row 2, columns 2..6 are black.
  for (int x = 0; x < 8; ++x) {
    const std::size_t at = header + static_cast<std::size_t>(2 * 8 + x) * 3;
    const bool black = img[at] == 0 && img[at + 1] == 0 && img[at + 2] == 0;
    EXPECT_EQ(black, x >= 2 && x <= 6) << "x=" << x;
  }
}

TEST(CmdSynth, DeterministicAndRefusesOverwrite) {
  const fs::path dir = scratch_dir();
  ExperimentConfig cfg;
  cfg.sizes = {{5, 5, 4}, {6, 6, 6}, {10, 10, 20}};
  cfg.out_dir = (dir / "a").string();
  const auto first = cmd_synth(cfg, false);
  ASSERT_EQ(first.size(), 3u);
  cfg.out_dir = (dir / "b").string();
  const auto second = cmd_synth(cfg, false);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(read_file(first[i]), read_file(second[i]));
  EXPECT_THROW(cmd_synth(cfg, false), IoError);
  EXPECT_NO_THROW(cmd_synth(cfg, true));
  for (const fs::path& p : first) {
    const Instance inst = load_instance(p);
    ASSERT_TRUE(inst.ground_truth);
    EXPECT_TRUE(oracle::valid_map(*inst.ground_truth));
    // Ground truth scores R1 = 0: recount switches directly.
    std::uint64_t switches = 0;
    for (const Trajectory& t : inst.trajectories) switches += oracle::consecutive_switches(*inst.ground_truth, t.cells);
    EXPECT_EQ(switches, 0u);
    EXPECT_EQ(r1(*inst.ground_truth, inst.trajectories), 0.0);
  }
  EXPECT_EQ(load_instance(first[2]).ground_truth->label_count(), 20u);
}

TEST(CmdRun, RoadSegOnExactRoadsScoresOne) {
  const fs::path dir = scratch_dir();
  ExperimentConfig cfg = tiny_experiment(dir, {"road_seg", "greedy"});
  cfg.synth.road_merge_probability = 0.0;
  cmd_synth(cfg, false);
  const RunOutput out = cmd_run(cfg, false);
  ASSERT_EQ(out.record.rows.size(), 4u);
  for (const MethodRow& row : out.record.rows) {
    EXPECT_EQ(row.size, "6x6");
    ASSERT_TRUE(row.fmi && row.cr);
    if (row.method == "road_seg") {
      EXPECT_EQ(*row.fmi, 1.0);
      EXPECT_FALSE(row.r2.has_value());
    } else {
      EXPECT_TRUE(row.r2.has_value());
    }
  }
  EXPECT_NE(out.csv.find("6x6,road_seg,5,0.000000,,1.000000,1.000000,"), std::string::npos) << out.csv;
  EXPECT_NE(out.csv.find("6x6,road_seg,mean,"), std::string::npos);
  EXPECT_EQ(read_file(dir / "results.csv"), out.csv);
}

TEST(CmdRun, ErrorsAreReported) {
  const fs::path dir = scratch_dir();
  ExperimentConfig cfg = tiny_experiment(dir, {"road_seg"});
  EXPECT_THROW(cmd_run(cfg, false), IoError);  // no instances yet
  cmd_synth(cfg, false);
  cfg.methods = {"road_seg", "kmeans"};
  EXPECT_THROW(cmd_run(cfg, false), ConfigError);
  cfg.methods = {"road_seg"};
  cmd_run(cfg, false);
  EXPECT_THROW(cmd_run(cfg, false), IoError);  // would overwrite
  EXPECT_NO_THROW(cmd_run(cfg, true));
}

TEST(CmdRun, DeterministicTablesCheckpointsAndRecordRoundTrip) {
  const fs::path dir = scratch_dir();
  const std::vector<std::string> methods = {"trajrl4aoi", "trajrl4aoi_no_pp", "greedy", "ckmeans", "louvain"};
  ExperimentConfig a = tiny_experiment(dir / "a", methods);
  ExperimentConfig b = tiny_experiment(dir / "b", methods);
  cmd_synth(a, false);
  cmd_synth(b, false);
  const RunOutput ra = cmd_run(a, false, 1);
  const RunOutput rb = cmd_run(b, false, 3);
  EXPECT_EQ(read_file(dir / "a" / "results.csv"), read_file(dir / "b" / "results.csv"));
  EXPECT_EQ(ra.record.artifacts, rb.record.artifacts);
  for (const std::string& rel : ra.record.artifacts) {
    if (rel == "run_record.json") continue;
    EXPECT_EQ(read_file(dir / "a" / rel), read_file(dir / "b" / rel)) << rel;
  }
  EXPECT_EQ(ra.record.config_hash, rb.record.config_hash);
  // Both variants of one training share the checkpoint.
  EXPECT_EQ(std::count_if(ra.record.artifacts.begin(), ra.record.artifacts.end(),
                          [](const std::string& s) { return s.starts_with("checkpoints/"); }),
            2);
  EXPECT_EQ(ra.record.rows.size(), methods.size() * 2);

  const RunRecord back = run_record_from_json(parse_json(read_file(dir / "a" / "run_record.json"), "record"));
  EXPECT_EQ(back, ra.record);
  EXPECT_EQ(config_hash(experiment_config_from_json(back.config)), back.config_hash);
}

TEST(RunRecord, RejectsOutOfRangeMetrics) {
  RunRecord r;
  r.config_hash = "0";
  r.config = Json::object();
  MethodRow row;
  row.size = "1x1";
  row.method = "greedy";
  row.map = SegmentationMap(1, 1, 0);
  row.fmi = 1.0;
  r.rows.push_back(row);
  EXPECT_EQ(run_record_from_json(run_record_to_json(r)), r);
  Json j = run_record_to_json(r);
  j["rows"][0]["fmi"] = 1.5;
  EXPECT_THROW(run_record_from_json(j), IoError);
  j = run_record_to_json(r);
  j["rows"][0]["r1"] = 0.5;
  EXPECT_THROW(run_record_from_json(j), IoError);
}

TEST(ResultsCsv, MeanRowAveragesSeeds) {
  MethodRow a;
  a.size = "6x6";
  a.method = "greedy";
  a.seed = 1;
  a.r1 = -1.0;
  a.r2 = 0.5;
  a.fmi = 0.25;
  a.aois = 3;
  MethodRow b = a;
  b.seed = 2;
  b.r1 = -2.0;
  b.fmi = 0.75;
  b.aois = 4;
  EXPECT_EQ(results_csv({a, b}),
            "size,method,seed,r1,r2,fmi,cr,aois\n"
            "6x6,greedy,1,-1.000000,0.500000,0.250000,,3\n"
            "6x6,greedy,2,-2.000000,0.500000,0.750000,,4\n"
            "6x6,greedy,mean,-1.500000,0.500000,0.500000,,3.500000\n");
}
