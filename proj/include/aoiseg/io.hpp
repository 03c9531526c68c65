#pragma once

// File formats: JSON maps, instances and configs (each carries schema_version
// and kind), CSV ingestion, binary PGM rasters and PPM rendering. The formats
// are described in docs/formats.md.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aoiseg/ddqn.hpp"
#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/road_init.hpp"
#include "aoiseg/synth.hpp"
#include "json.hpp"

namespace aoiseg {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ------------------------------------------------------------------ files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

/// Creates parent directories. Refuses to replace an existing file unless `force`.
inline void write_file(const std::filesystem::path& path, const std::string& bytes, bool force = true) {
  std::error_code ec;
  if (!force && std::filesystem::exists(path, ec))
    throw IoError(path.string() + " exists (use --force to overwrite)");
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw IoError(what + ": malformed JSON: " + e.what());
  }
}

/// Two-space indented, keys sorted, trailing newline; stable across runs.
inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

// ------------------------------------------------------------------ JSON helpers

namespace detail {

template <class T>
T get_field(const Json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) throw IoError(what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw IoError(what + ": field '" + key + "' has the wrong type");
  }
}

inline void check_header(const Json& j, const std::string& kind) {
  if (!j.is_object()) throw IoError(kind + ": expected a JSON object");
  const int version = get_field<int>(j, "schema_version", kind);
  if (version != kSchemaVersion)
    throw IoError(kind + ": unsupported schema_version " + std::to_string(version));
  const std::string found = get_field<std::string>(j, "kind", kind);
  if (found != kind) throw IoError("expected kind '" + kind + "', found '" + found + "'");
}

inline Json coords_to_json(std::span<const GridCoord> cells) {
  Json out = Json::array();
  for (GridCoord g : cells) out.push_back({g.row, g.col});
  return out;
}

inline std::vector<GridCoord> coords_from_json(const Json& j, const GridShape& shape, const std::string& what) {
  if (!j.is_array()) throw IoError(what + ": expected an array of [row, col] pairs");
  std::vector<GridCoord> out;
  out.reserve(j.size());
  for (const Json& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
      throw IoError(what + ": expected [row, col] integer pairs");
    const GridCoord g{p[0].get<int>(), p[1].get<int>()};
    if (!shape.contains(g)) throw IoError(what + ": cell (" + std::to_string(g.row) + ", " + std::to_string(g.col) + ") out of bounds");
    out.push_back(g);
  }
  return out;
}

inline std::vector<Label> labels_from_json(const Json& j, const GridShape& shape, const std::string& what) {
  if (!j.is_array() || j.size() != shape.size())
    throw IoError(what + ": labels must be an array of rows*cols integers");
  std::vector<Label> out;
  out.reserve(j.size());
  for (const Json& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw IoError(what + ": labels must be non-negative integers");
    out.push_back(static_cast<Label>(v.get<long long>()));
  }
  return out;
}

// Copies known keys of `j` into `fields`; unknown keys are a ConfigError so typos surface.
inline void check_known_keys(const Json& j, std::initializer_list<const char*> known, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(what + ": unknown key '" + key + "'");
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& into, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(what + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

// ------------------------------------------------------------------ maps

inline Json map_to_json(const SegmentationMap& seg) {
  return Json{{"schema_version", kSchemaVersion},
              {"kind", "segmentation_map"},
              {"rows", seg.rows()},
              {"cols", seg.cols()},
              {"labels", std::vector<Label>(seg.labels().begin(), seg.labels().end())}};
}

/// Checks shape and label types only; validity is the caller's concern.
inline SegmentationMap map_from_json(const Json& j) {
  const std::string what = "segmentation_map";
  detail::check_header(j, what);
  const int rows = detail::get_field<int>(j, "rows", what);
  const int cols = detail::get_field<int>(j, "cols", what);
  if (rows <= 0 || cols <= 0) throw IoError(what + ": dimensions must be positive");
  const GridShape shape{rows, cols};
  if (!j.contains("labels")) throw IoError(what + ": missing field 'labels'");
  return SegmentationMap(rows, cols, detail::labels_from_json(j.at("labels"), shape, what));
}

inline void save_map(const SegmentationMap& seg, const std::filesystem::path& path, bool force = true) {
  write_file(path, dump_json(map_to_json(seg)), force);
}

inline SegmentationMap load_map(const std::filesystem::path& path) {
  return map_from_json(parse_json(read_file(path), path.string()));
}

// ------------------------------------------------------------------ instances

inline Json instance_to_json(const Instance& inst) {
  Json trajectories = Json::array();
  for (const Trajectory& t : inst.trajectories) {
    std::vector<GridCoord> cells;
    for (std::size_t idx : t.cells) cells.push_back(inst.shape().coord(idx));
    trajectories.push_back(detail::coords_to_json(cells));
  }
  Json packages = Json::array();
  for (const auto& courier : inst.packages) packages.push_back(detail::coords_to_json(courier));
  Json truth = nullptr;
  if (inst.ground_truth)
    truth = std::vector<Label>(inst.ground_truth->labels().begin(), inst.ground_truth->labels().end());
  return Json{{"schema_version", kSchemaVersion},
              {"kind", "instance"},
              {"rows", inst.rows},
              {"cols", inst.cols},
              {"seed", inst.seed},
              {"ground_truth", truth},
              {"road_partition",
               std::vector<Label>(inst.road_partition.labels().begin(), inst.road_partition.labels().end())},
              {"trajectories", trajectories},
              {"packages", packages}};
}

/// Full schema check: maps are valid, trajectories are 4-connected and in
/// bounds, packages in bounds.
inline Instance instance_from_json(const Json& j) {
  const std::string what = "instance";
  detail::check_header(j, what);
  Instance inst;
  inst.rows = detail::get_field<int>(j, "rows", what);
  inst.cols = detail::get_field<int>(j, "cols", what);
  if (inst.rows <= 0 || inst.cols <= 0) throw IoError(what + ": dimensions must be positive");
  inst.seed = detail::get_field<std::uint64_t>(j, "seed", what);
  const GridShape shape = inst.shape();
  if (!j.contains("ground_truth") || !j.contains("road_partition") || !j.contains("trajectories") ||
      !j.contains("packages"))
    throw IoError(what + ": missing one of ground_truth, road_partition, trajectories, packages");
  if (!j.at("ground_truth").is_null()) {
    inst.ground_truth = SegmentationMap(inst.rows, inst.cols, detail::labels_from_json(j.at("ground_truth"), shape, what));
    if (!is_valid(*inst.ground_truth)) throw IoError(what + ": ground_truth has a disconnected AOI");
  }
  inst.road_partition = SegmentationMap(inst.rows, inst.cols, detail::labels_from_json(j.at("road_partition"), shape, what));
  if (!is_valid(inst.road_partition)) throw IoError(what + ": road_partition has a disconnected AOI");
  if (!j.at("trajectories").is_array()) throw IoError(what + ": trajectories must be an array");
  for (const Json& t : j.at("trajectories")) {
    Trajectory traj;
    for (GridCoord g : detail::coords_from_json(t, shape, what + " trajectory")) traj.cells.push_back(shape.index(g));
    if (traj.empty()) throw IoError(what + ": empty trajectory");
    inst.trajectories.push_back(std::move(traj));
  }
  try {
    build_transfer_graph(inst.trajectories, inst.rows, inst.cols);
  } catch (const InputError& e) {
    throw IoError(what + ": " + e.what());
  }
  if (!j.at("packages").is_array()) throw IoError(what + ": packages must be an array");
  for (const Json& p : j.at("packages")) inst.packages.push_back(detail::coords_from_json(p, shape, what + " packages"));
  return inst;
}

inline void save_instance(const Instance& inst, const std::filesystem::path& path, bool force = true) {
  write_file(path, dump_json(instance_to_json(inst)), force);
}

inline Instance load_instance(const std::filesystem::path& path) {
  return instance_from_json(parse_json(read_file(path), path.string()));
}

// ------------------------------------------------------------------ configs

inline Json synth_config_to_json(const SynthConfig& c) {
  return Json{{"rows", c.rows},
              {"cols", c.cols},
              {"aoi_count", c.aoi_count},
              {"trajectories_per_courier", c.trajectories_per_courier},
              {"packages_per_trajectory", c.packages_per_trajectory},
              {"road_merge_probability", c.road_merge_probability},
              {"commute", c.commute},
              {"seed", c.seed}};
}

/// Missing keys keep their defaults.
inline SynthConfig synth_config_from_json(const Json& j) {
  const std::string what = "synth config";
  detail::check_known_keys(j,
                           {"rows", "cols", "aoi_count", "trajectories_per_courier", "packages_per_trajectory",
                            "road_merge_probability", "commute", "seed"},
                           what);
  SynthConfig c;
  detail::read_opt(j, "rows", c.rows, what);
  detail::read_opt(j, "cols", c.cols, what);
  detail::read_opt(j, "aoi_count", c.aoi_count, what);
  detail::read_opt(j, "trajectories_per_courier", c.trajectories_per_courier, what);
  detail::read_opt(j, "packages_per_trajectory", c.packages_per_trajectory, what);
  detail::read_opt(j, "road_merge_probability", c.road_merge_probability, what);
  detail::read_opt(j, "commute", c.commute, what);
  detail::read_opt(j, "seed", c.seed, what);
  try {
    validate(c);
  } catch (const InputError& e) {
    throw ConfigError(what + ": " + e.what());
  }
  return c;
}

inline Json train_config_to_json(const TrainConfig& c) {
  return Json{{"episodes", c.episodes},
              {"lr", c.lr},
              {"lr_decay", c.lr_decay},
              {"gamma", c.gamma},
              {"epsilon_start", c.epsilon_start},
              {"epsilon_end", c.epsilon_end},
              {"epsilon_decay_fraction", c.epsilon_decay_fraction},
              {"batch_size", c.batch_size},
              {"buffer_capacity", c.buffer_capacity},
              {"target_sync_steps", c.target_sync_steps},
              {"train_every", c.train_every},
              {"seed", c.seed},
              {"traversals", c.traversals},
              {"k1", c.weights.trajectory},
              {"k2", c.weights.road},
              {"conv1", c.conv1},
              {"conv2", c.conv2},
              {"hidden", c.hidden},
              {"rms_decay", c.rms_decay},
              {"rms_epsilon", c.rms_epsilon},
              {"loss", c.loss == TdLoss::Huber ? "huber" : "squared"},
              {"huber_delta", c.huber_delta},
              {"stop_when_idle", c.stop_when_idle}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  const std::string what = "train config";
  detail::check_known_keys(j,
                           {"episodes", "lr", "lr_decay", "gamma", "epsilon_start", "epsilon_end",
                            "epsilon_decay_fraction", "batch_size", "buffer_capacity", "target_sync_steps",
                            "train_every", "seed", "traversals", "k1", "k2", "conv1", "conv2", "hidden", "rms_decay",
                            "rms_epsilon", "loss", "huber_delta", "stop_when_idle"},
                           what);
  TrainConfig c;
  detail::read_opt(j, "episodes", c.episodes, what);
  detail::read_opt(j, "lr", c.lr, what);
  detail::read_opt(j, "lr_decay", c.lr_decay, what);
  detail::read_opt(j, "gamma", c.gamma, what);
  detail::read_opt(j, "epsilon_start", c.epsilon_start, what);
  detail::read_opt(j, "epsilon_end", c.epsilon_end, what);
  detail::read_opt(j, "epsilon_decay_fraction", c.epsilon_decay_fraction, what);
  detail::read_opt(j, "batch_size", c.batch_size, what);
  detail::read_opt(j, "buffer_capacity", c.buffer_capacity, what);
  detail::read_opt(j, "target_sync_steps", c.target_sync_steps, what);
  detail::read_opt(j, "train_every", c.train_every, what);
  detail::read_opt(j, "seed", c.seed, what);
  detail::read_opt(j, "traversals", c.traversals, what);
  detail::read_opt(j, "k1", c.weights.trajectory, what);
  detail::read_opt(j, "k2", c.weights.road, what);
  detail::read_opt(j, "conv1", c.conv1, what);
  detail::read_opt(j, "conv2", c.conv2, what);
  detail::read_opt(j, "hidden", c.hidden, what);
  detail::read_opt(j, "rms_decay", c.rms_decay, what);
  detail::read_opt(j, "rms_epsilon", c.rms_epsilon, what);
  detail::read_opt(j, "huber_delta", c.huber_delta, what);
  detail::read_opt(j, "stop_when_idle", c.stop_when_idle, what);
  std::string loss = c.loss == TdLoss::Huber ? "huber" : "squared";
  detail::read_opt(j, "loss", loss, what);
  if (loss == "squared")
    c.loss = TdLoss::Squared;
  else if (loss == "huber")
    c.loss = TdLoss::Huber;
  else
    throw ConfigError(what + ": loss must be 'squared' or 'huber'");
  c.validate();
  return c;
}

// ------------------------------------------------------------------ CSV ingestion

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Rows of a headered CSV as integer fields; the header must match `columns`.
inline std::vector<std::vector<long long>> read_int_csv(const std::string& text, std::span<const std::string> columns,
                                                        const std::string& what) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<std::vector<long long>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    const std::string where = what + " line " + std::to_string(line_no);
    if (fields.size() != columns.size())
      throw IoError(where + ": expected " + std::to_string(columns.size()) + " fields");
    if (!header_seen) {
      for (std::size_t i = 0; i < columns.size(); ++i)
        if (fields[i] != columns[i]) throw IoError(where + ": header must be " + columns[0] + ",...");
      header_seen = true;
      continue;
    }
    std::vector<long long> values;
    for (const std::string& f : fields) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (f.empty() || used != f.size()) throw IoError(where + ": '" + f + "' is not an integer");
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }
  if (!header_seen) throw IoError(what + ": empty file");
  return rows;
}

inline GridCoord checked_coord(long long r, long long c, const GridShape& shape, const std::string& what) {
  if (r < 0 || c < 0 || r >= shape.rows || c >= shape.cols)
    throw IoError(what + ": cell (" + std::to_string(r) + ", " + std::to_string(c) + ") outside the " +
                  std::to_string(shape.rows) + "x" + std::to_string(shape.cols) + " grid");
  return {static_cast<int>(r), static_cast<int>(c)};
}

}  // namespace detail

/// Packages CSV `courier_id,row,col`, one list per courier in ascending id order.
inline std::vector<std::vector<GridCoord>> parse_packages_csv(const std::string& text, const GridShape& shape) {
  static const std::array<std::string, 3> cols = {"courier_id", "row", "col"};
  std::map<long long, std::vector<GridCoord>> by_courier;
  for (const auto& r : detail::read_int_csv(text, cols, "packages CSV"))
    by_courier[r[0]].push_back(detail::checked_coord(r[1], r[2], shape, "packages CSV"));
  std::vector<std::vector<GridCoord>> out;
  for (auto& [id, pts] : by_courier) out.push_back(std::move(pts));
  return out;
}

/// Trajectories CSV `courier_id,seq,row,col`: one trajectory per courier id,
/// points ordered by seq and densified into 4-connected steps.
inline std::vector<Trajectory> parse_trajectories_csv(const std::string& text, const GridShape& shape) {
  static const std::array<std::string, 4> cols = {"courier_id", "seq", "row", "col"};
  std::map<long long, std::map<long long, GridCoord>> by_courier;
  for (const auto& r : detail::read_int_csv(text, cols, "trajectories CSV")) {
    const GridCoord g = detail::checked_coord(r[2], r[3], shape, "trajectories CSV");
    if (!by_courier[r[0]].emplace(r[1], g).second)
      throw IoError("trajectories CSV: duplicate seq " + std::to_string(r[1]) + " for courier " + std::to_string(r[0]));
  }
  std::vector<Trajectory> out;
  for (const auto& [id, points] : by_courier) {
    std::vector<GridCoord> raw;
    for (const auto& [seq, g] : points) raw.push_back(g);
    out.push_back(densify(raw, shape));
  }
  return out;
}

// ------------------------------------------------------------------ PGM / PPM

/// Binary PGM (P5) with maxval <= 255; intensities rescale to 0..255.
inline GrayRaster parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> long {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos == start || pos - start > 9) throw IoError("PGM: bad header");
    return std::stol(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw IoError("PGM: expected binary P5 magic");
  pos = 2;
  const long width = number(), height = number(), maxval = number();
  if (width <= 0 || height <= 0) throw IoError("PGM: dimensions must be positive");
  if (maxval <= 0 || maxval > 255) throw IoError("PGM: only maxval 1..255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) throw IoError("PGM: bad header");
  ++pos;
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos != n) throw IoError("PGM: pixel data size does not match the header");
  GrayRaster raster(static_cast<int>(height), static_cast<int>(width));
  for (std::size_t i = 0; i < n; ++i) {
    const long v = static_cast<unsigned char>(bytes[pos + i]);
    if (v > maxval) throw IoError("PGM: pixel above maxval");
    raster.intensity[i] = static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval);
  }
  return raster;
}

inline std::string encode_pgm(const GrayRaster& raster) {
  std::string out = "P5\n" + std::to_string(raster.shape.cols) + " " + std::to_string(raster.shape.rows) + "\n255\n";
  out.append(raster.intensity.begin(), raster.intensity.end());
  return out;
}

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Fixed AOI colours; label l uses entry l mod 32. Black is reserved for trajectories.
inline constexpr std::array<Rgb, 32> kPalette = {{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},   {245, 130, 48},  {145, 30, 180},
    {70, 240, 240},  {240, 50, 230},  {210, 245, 60},  {250, 190, 212}, {0, 128, 128},   {220, 190, 255},
    {170, 110, 40},  {255, 250, 200}, {128, 0, 0},     {170, 255, 195}, {128, 128, 0},   {255, 215, 180},
    {0, 0, 128},     {128, 128, 128}, {255, 255, 255}, {31, 119, 180},  {255, 127, 14},  {44, 160, 44},
    {214, 39, 40},   {148, 103, 189}, {140, 86, 75},   {227, 119, 194}, {188, 189, 34},  {23, 190, 207},
    {174, 199, 232}, {152, 223, 138},
}};

/// P6 image, `cell_px` pixels per cell. Trajectories are black polylines
/// through cell centres.
inline std::string render_ppm(const SegmentationMap& seg, std::span<const Trajectory> trajectories = {},
                              int cell_px = 16) {
  if (cell_px < 1) throw InputError("render: cell size must be at least 1 pixel");
  const int w = seg.cols() * cell_px, h = seg.rows() * cell_px;
  std::vector<Rgb> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      px[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
          kPalette[static_cast<std::size_t>(seg.at(y / cell_px, x / cell_px)) % kPalette.size()];
  auto plot = [&](int x, int y) {
    if (x >= 0 && y >= 0 && x < w && y < h) px[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] = Rgb{};
  };
  auto centre = [&](std::size_t idx) {
    const GridCoord g = seg.shape().coord(idx);
    return std::pair{g.col * cell_px + cell_px / 2, g.row * cell_px + cell_px / 2};
  };
  for (const Trajectory& t : trajectories) {
    for (std::size_t idx : t.cells)
      if (idx >= seg.size()) throw InputError("render: trajectory cell out of bounds");
    if (t.cells.size() == 1) {
      const auto [x, y] = centre(t.cells[0]);
      plot(x, y);
    }
    for (std::size_t k = 0; k + 1 < t.cells.size(); ++k) {
      // Bresenham between consecutive centres.
      auto [x0, y0] = centre(t.cells[k]);
      const auto [x1, y1] = centre(t.cells[k + 1]);
      const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
      const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
      int err = dx + dy;
      for (;;) {
        plot(x0, y0);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
          err += dy;
          x0 += sx;
        }
        if (e2 <= dx) {
          err += dx;
          y0 += sy;
        }
      }
    }
  }
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + px.size() * 3);
  for (const Rgb& c : px) {
    out.push_back(static_cast<char>(c.r));
    out.push_back(static_cast<char>(c.g));
    out.push_back(static_cast<char>(c.b));
  }
  return out;
}

}  // namespace aoiseg
