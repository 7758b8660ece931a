// cityval command line: generate synthetic cities, build neighborhood
// graphs, train the valuation model, evaluate it against baselines, sweep
// the influence radius, predict single blocks, and render the learned-value
// reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cityval/cityval.hpp"

namespace fs = std::filesystem;
using cityval::json;

namespace {

int g_log_level = 1;  // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
  if (g_log_level >= 1) std::cerr << "[cityval] " << msg << "\n";
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cityval::ConfigError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw cityval::ValidationError(path + ": JSON parse error: " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw cityval::IoError("cannot write file: " + path);
  out << content;
  if (!out) throw cityval::IoError("write failed: " + path);
}

void require_input(const std::string& path, const char* what) {
  if (!fs::exists(path)) {
    throw cityval::ConfigError(std::string(what) + " not found: " + path);
  }
}

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

struct CommonOptions {
  std::string out_dir = "out";
  std::string road_model = "detour:1.3";
};

cityval::Graph obtain_graph(const std::vector<cityval::PoiRecord>& records,
                            const std::string& graph_path, double radius_km,
                            const std::string& road_model,
                            std::vector<std::string>* excluded = nullptr) {
  if (!graph_path.empty()) {
    require_input(graph_path, "graph file");
    log_info("loading graph " + graph_path);
    return cityval::load_graph(graph_path, records);
  }
  log_info("building graph (radius " + std::to_string(radius_km) + " km)");
  auto result = cityval::build_graph(records, radius_km, *cityval::make_road_model(road_model));
  if (excluded) *excluded = result.no_neighbor_blocks;
  return std::move(result.graph);
}

double mean_known_price(const std::vector<cityval::PoiRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.known_price) {
      sum += *r.known_price;
      ++n;
    }
  }
  if (n == 0) throw cityval::ValidationError("no block in the POI file has a price");
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------- generate

int cmd_generate(const std::string& config_path, const CommonOptions& common,
                 std::optional<std::uint64_t> seed_override) {
  cityval::RunManifest manifest;
  manifest.command = "generate";
  manifest.started_at = cityval::iso8601_now();

  cityval::SynthConfig config;
  if (!config_path.empty()) {
    require_input(config_path, "config file");
    manifest.add_input(config_path);
    config = cityval::SynthConfig::from_json(read_json_file(config_path));
  }
  if (seed_override) config.seed = *seed_override;
  config.validate();
  manifest.seed = config.seed;
  manifest.config_digest = cityval::fnv1a64_hex(config.to_json().dump());

  log_info("generating city: " + std::to_string(config.n_blocks) + " blocks, " +
           std::to_string(config.n_facilities) + " facilities");
  const cityval::SynthCity city = cityval::generate_city(config);

  const std::string poi_path = out_path(common.out_dir, "pois.jsonl");
  cityval::save_pois(poi_path, city.records);
  const std::string planted_path = out_path(common.out_dir, "planted.json");
  cityval::save_params(planted_path, city.planted,
                       {config.radius_km, config.seed, manifest.config_digest});
  const std::string config_copy = out_path(common.out_dir, "synth_config.json");
  write_text_file(config_copy, config.to_json().dump(2) + "\n");

  manifest.add_output(poi_path);
  manifest.add_output(planted_path);
  manifest.add_output(config_copy);
  manifest.finished_at = cityval::iso8601_now();
  manifest.write(out_path(common.out_dir, "manifest.json"));
  log_info("wrote " + poi_path);
  return 0;
}

// -------------------------------------------------------------- build-graph

int cmd_build_graph(const std::string& poi_path, double radius_km,
                    const CommonOptions& common) {
  cityval::RunManifest manifest;
  manifest.command = "build-graph";
  manifest.started_at = cityval::iso8601_now();
  require_input(poi_path, "POI file");
  manifest.add_input(poi_path);
  manifest.config_digest = cityval::fnv1a64_hex(
      json{{"radius_km", radius_km}, {"road_model", common.road_model}}.dump());

  const auto records = cityval::load_pois(poi_path);
  std::vector<std::string> excluded;
  const auto graph = obtain_graph(records, "", radius_km, common.road_model, &excluded);

  const std::string graph_path = out_path(common.out_dir, "graph.jsonl");
  cityval::save_graph(graph_path, graph);

  // neighbor-count diagnostics plus the blocks excluded for having none
  std::size_t total_neighbors = 0, total_blocks_nbrs = 0, total_fac_nbrs = 0;
  for (const auto& [center, ns] : graph) {
    (void)center;
    total_neighbors += ns.size();
    total_blocks_nbrs += ns.block_count;
    total_fac_nbrs += ns.size() - ns.block_count;
  }
  const double covered = static_cast<double>(graph.size());
  json diagnostics{
      {"radius_km", radius_km},
      {"road_model", common.road_model},
      {"covered_blocks", graph.size()},
      {"excluded_blocks", excluded},
      {"mean_neighbors", covered > 0 ? static_cast<double>(total_neighbors) / covered : 0.0},
      {"mean_block_neighbors", covered > 0 ? static_cast<double>(total_blocks_nbrs) / covered : 0.0},
      {"mean_facility_neighbors", covered > 0 ? static_cast<double>(total_fac_nbrs) / covered : 0.0}};
  const std::string diag_path = out_path(common.out_dir, "graph_diagnostics.json");
  write_text_file(diag_path, diagnostics.dump(2) + "\n");

  manifest.add_output(graph_path);
  manifest.add_output(diag_path);
  manifest.finished_at = cityval::iso8601_now();
  manifest.write(out_path(common.out_dir, "manifest.json"));
  log_info("graph covers " + std::to_string(graph.size()) + " blocks, " +
           std::to_string(excluded.size()) + " excluded");
  return 0;
}

// -------------------------------------------------------------------- train

cityval::TrainingConfig load_training_config(const std::string& config_path,
                                             std::optional<double> radius,
                                             std::optional<std::uint64_t> seed,
                                             std::optional<std::size_t> shards) {
  cityval::TrainingConfig config;
  if (!config_path.empty()) {
    require_input(config_path, "config file");
    config = cityval::TrainingConfig::from_json(read_json_file(config_path));
  }
  if (radius) config.radius_km = *radius;
  if (seed) config.seed = *seed;
  if (shards) config.shard_count = *shards;
  config.validate();
  return config;
}

int cmd_train(const std::string& poi_path, const std::string& graph_path,
              const std::string& config_path, const CommonOptions& common,
              std::optional<double> radius, std::optional<std::uint64_t> seed,
              std::optional<std::size_t> shards) {
  cityval::RunManifest manifest;
  manifest.command = "train";
  manifest.started_at = cityval::iso8601_now();
  require_input(poi_path, "POI file");
  manifest.add_input(poi_path);
  if (!config_path.empty()) manifest.add_input(config_path);

  const auto config = load_training_config(config_path, radius, seed, shards);
  manifest.seed = config.seed;
  manifest.config_digest = config.digest();

  const auto records = cityval::load_pois(poi_path);
  const auto layout = cityval::infer_layout(records);
  const auto graph =
      obtain_graph(records, graph_path, config.radius_km, common.road_model);
  if (!graph_path.empty()) manifest.add_input(graph_path);
  const auto split = cityval::split_dataset(cityval::priced_block_ids(records), config.seed);

  const std::string log_path = out_path(common.out_dir, "epochs.jsonl");
  std::ofstream epoch_log(log_path, std::ios::trunc);
  if (!epoch_log) throw cityval::IoError("cannot write epoch log: " + log_path);

  log_info("training on " + std::to_string(split.train_ids.size()) + " blocks, " +
           std::to_string(config.max_epochs) + " epochs max");
  const auto result = cityval::train(
      records, graph, split, layout, config, [&epoch_log](const cityval::EpochReport& r) {
        epoch_log << r.to_json().dump() << "\n";
        if (g_log_level >= 2 || (g_log_level >= 1 && r.epoch % 100 == 0)) {
          std::cerr << "[cityval] epoch " << r.epoch << " loss " << r.loss << "\n";
        }
      });
  epoch_log.close();

  const std::string model_path = out_path(common.out_dir, "model.json");
  cityval::save_params(model_path, result.best_params,
                       {config.radius_km, config.seed, config.digest()});

  manifest.add_output(model_path);
  manifest.add_output(log_path);
  manifest.finished_at = cityval::iso8601_now();
  manifest.write(out_path(common.out_dir, "manifest.json"));
  log_info("final loss " + std::to_string(result.epochs.back().loss) +
           ", best validation MAE " + std::to_string(result.best_validation_mae));
  return 0;
}

// ----------------------------------------------------------------- evaluate

int cmd_evaluate(const std::string& poi_path, const std::string& graph_path,
                 const std::string& snapshot_path, const std::string& baseline,
                 std::optional<std::uint64_t> split_seed,
                 std::optional<double> radius, const CommonOptions& common) {
  cityval::RunManifest manifest;
  manifest.command = "evaluate";
  manifest.started_at = cityval::iso8601_now();
  require_input(poi_path, "POI file");
  manifest.add_input(poi_path);

  if (snapshot_path.empty() == baseline.empty()) {
    throw cityval::ConfigError("pass exactly one of --snapshot or --baseline");
  }

  const auto records = cityval::load_pois(poi_path);
  const auto layout = cityval::infer_layout(records);

  double radius_km = 0.0;
  std::uint64_t seed = 0;
  cityval::ModelParams params;
  if (!snapshot_path.empty()) {
    require_input(snapshot_path, "snapshot");
    manifest.add_input(snapshot_path);
    auto [loaded, meta] = cityval::load_params(snapshot_path);
    params = std::move(loaded);
    radius_km = meta.radius_km;
    seed = meta.seed;
    if (split_seed && *split_seed != meta.seed) {
      throw cityval::ConfigError(
          "split seed " + std::to_string(*split_seed) +
          " does not match the snapshot's training seed " + std::to_string(meta.seed));
    }
    if (radius && *radius != radius_km) {
      throw cityval::ConfigError("radius flag does not match the snapshot's radius");
    }
  } else {
    if (!split_seed) throw cityval::ConfigError("--baseline requires --split-seed");
    if (!radius) throw cityval::ConfigError("--baseline requires --radius-km");
    seed = *split_seed;
    radius_km = *radius;
  }
  manifest.seed = seed;
  manifest.config_digest = cityval::fnv1a64_hex(
      json{{"method", snapshot_path.empty() ? baseline : "cityval"},
           {"seed", seed},
           {"radius_km", radius_km}}
          .dump());

  const auto graph = obtain_graph(records, graph_path, radius_km, common.road_model);
  if (!graph_path.empty()) manifest.add_input(graph_path);
  const auto split = cityval::split_dataset(cityval::priced_block_ids(records), seed);

  cityval::TestPredictions predictions;
  std::string method;
  if (!snapshot_path.empty()) {
    method = "cityval";
    predictions = cityval::predict_model_on_split(
        records, graph, split.test_ids, params, cityval::training_prices(records, split));
  } else {
    method = baseline;
    predictions = cityval::predict_baseline_on_split(baseline, records, graph, split,
                                                     split.test_ids, layout);
  }
  const auto report = cityval::to_report(method, predictions);

  const std::string json_path = out_path(common.out_dir, "eval.json");
  write_text_file(json_path, report.to_json().dump(2) + "\n");
  const std::string text_path = out_path(common.out_dir, "eval.txt");
  write_text_file(text_path, cityval::render_eval_table({report}));

  manifest.add_output(json_path);
  manifest.add_output(text_path);
  manifest.finished_at = cityval::iso8601_now();
  manifest.write(out_path(common.out_dir, "manifest.json"));
  std::cout << cityval::render_eval_table({report});
  return 0;
}

// -------------------------------------------------------------------- sweep

int cmd_sweep(const std::string& poi_path, const std::vector<double>& radii,
              const std::string& config_path, const CommonOptions& common,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> shards) {
  if (radii.size() < 2) throw cityval::ConfigError("sweep needs at least 2 radii");
  cityval::RunManifest manifest;
  manifest.command = "sweep";
  manifest.started_at = cityval::iso8601_now();
  require_input(poi_path, "POI file");
  manifest.add_input(poi_path);
  if (!config_path.empty()) manifest.add_input(config_path);

  const auto base_config = load_training_config(config_path, std::nullopt, seed, shards);
  manifest.seed = base_config.seed;
  manifest.config_digest = base_config.digest();

  const auto records = cityval::load_pois(poi_path);
  const auto layout = cityval::infer_layout(records);
  const auto split =
      cityval::split_dataset(cityval::priced_block_ids(records), base_config.seed);
  const auto known = cityval::training_prices(records, split);

  json curve = json::array();
  double best_val = std::numeric_limits<double>::infinity();
  double best_radius = 0.0;
  for (double radius_km : radii) {
    auto config = base_config;
    config.radius_km = radius_km;
    log_info("sweep: radius " + std::to_string(radius_km) + " km");
    const auto graph = obtain_graph(records, "", radius_km, common.road_model);
    double mean_neighbors = 0.0;
    for (const auto& [center, ns] : graph) {
      (void)center;
      mean_neighbors += static_cast<double>(ns.size());
    }
    if (!graph.empty()) mean_neighbors /= static_cast<double>(graph.size());

    const auto result = cityval::train(records, graph, split, layout, config);
    char dir_name[32];
    std::snprintf(dir_name, sizeof(dir_name), "radius_%.2f", radius_km);
    const std::string model_path = out_path(
        (fs::path(common.out_dir) / dir_name).string(), "model.json");
    cityval::save_params(model_path, result.best_params,
                         {radius_km, config.seed, config.digest()});
    manifest.add_output(model_path);

    const auto predictions = cityval::predict_model_on_split(
        records, graph, split.test_ids, result.best_params, known);
    const auto report = cityval::to_report("cityval", predictions);
    curve.push_back({{"radius_km", radius_km},
                     {"validation_mae", result.best_validation_mae},
                     {"mae", report.mae},
                     {"rmse", report.rmse},
                     {"r2", report.r2},
                     {"mean_neighbors", mean_neighbors}});
    if (result.best_validation_mae < best_val) {
      best_val = result.best_validation_mae;
      best_radius = radius_km;
    }
  }

  json curve_doc{{"curve", curve}, {"best_radius_by_validation_mae", best_radius}};
  const std::string curve_path = out_path(common.out_dir, "curve.json");
  write_text_file(curve_path, curve_doc.dump(2) + "\n");

  std::ostringstream table;
  table << std::left << std::setw(12) << "Radius(km)" << std::right << std::setw(14)
        << "ValMAE" << std::setw(14) << "MAE" << std::setw(14) << "RMSE"
        << std::setw(10) << "R2" << std::setw(16) << "MeanNeighbors" << "\n";
  table << std::string(80, '-') << "\n";
  for (const auto& row : curve) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-12.2f%14s%14s%14s%10.4f%16.1f\n",
                  row["radius_km"].get<double>(),
                  cityval::format_grouped(row["validation_mae"].get<double>()).c_str(),
                  cityval::format_grouped(row["mae"].get<double>()).c_str(),
                  cityval::format_grouped(row["rmse"].get<double>()).c_str(),
                  row["r2"].get<double>(), row["mean_neighbors"].get<double>());
    table << line;
  }
  table << "best radius by validation MAE: " << best_radius << " km\n";
  const std::string table_path = out_path(common.out_dir, "curve.txt");
  write_text_file(table_path, table.str());

  manifest.add_output(curve_path);
  manifest.add_output(table_path);
  manifest.finished_at = cityval::iso8601_now();
  manifest.write(out_path(common.out_dir, "manifest.json"));
  std::cout << table.str();
  return 0;
}

// ------------------------------------------------------------------ predict

json predict_one(const cityval::PoiRecord& block, const cityval::NeighborSet& nbrs,
                 const cityval::ModelParams& params,
                 const std::unordered_map<std::string, double>& known) {
  const auto trace = cityval::forward(block, nbrs, params, known);
  json contributions = json::array();
  std::vector<std::size_t> order(nbrs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&trace](std::size_t a, std::size_t b) {
    return trace.f[a] * trace.w[a] > trace.f[b] * trace.w[b];
  });
  const std::size_t top = std::min<std::size_t>(10, order.size());
  for (std::size_t i = 0; i < top; ++i) {
    const std::size_t j = order[i];
    contributions.push_back({{"id", nbrs.neighbor_ids[j]},
                             {"value", trace.w[j]},
                             {"weight", trace.f[j]},
                             {"contribution", trace.f[j] * trace.w[j]}});
  }
  return json{{"id", block.id},
              {"status", "ok"},
              {"prediction", trace.prediction},
              {"scale", trace.scale},
              {"neighbor_count", nbrs.size()},
              {"top_contributions", contributions}};
}

int cmd_predict(const std::string& snapshot_path, const std::string& poi_path,
                const std::string& graph_path, const std::vector<std::string>& ids,
                const std::string& block_json_path, const CommonOptions& common) {
  cityval::RunManifest manifest;
  manifest.command = "predict";
  manifest.started_at = cityval::iso8601_now();
  require_input(snapshot_path, "snapshot");
  require_input(poi_path, "POI file");
  manifest.add_input(snapshot_path);
  manifest.add_input(poi_path);
  auto [params, meta] = cityval::load_params(snapshot_path);
  const auto records = cityval::load_pois(poi_path);
  manifest.seed = meta.seed;
  manifest.config_digest = meta.config_digest;

  // deployment mode: every price observed in the file is usable
  std::unordered_map<std::string, double> known;
  std::unordered_map<std::string, const cityval::PoiRecord*> by_id;
  for (const auto& r : records) {
    by_id.emplace(r.id, &r);
    if (r.known_price) known.emplace(r.id, *r.known_price);
  }

  json results = json::array();
  if (!ids.empty()) {
    const auto graph =
        obtain_graph(records, graph_path, meta.radius_km, common.road_model);
    for (const auto& id : ids) {
      const auto rec = by_id.find(id);
      if (rec == by_id.end()) {
        throw cityval::ValidationError("block '" + id + "' is not in the POI file");
      }
      const auto ns = graph.find(id);
      if (ns == graph.end()) {
        results.push_back({{"id", id}, {"status", "uncoverable"}});
        continue;
      }
      results.push_back(predict_one(*rec->second, ns->second, params, known));
    }
  }

  if (!block_json_path.empty()) {
    require_input(block_json_path, "block JSON");
    cityval::PoiRecord block = cityval::poi_from_json(read_json_file(block_json_path));
    if (block.kind != cityval::PoiKind::residential_block) {
      throw cityval::ValidationError("ad-hoc record must be a residential block");
    }
    std::vector<std::pair<std::string, cityval::GeoPoint>> items;
    for (const auto& r : records) items.emplace_back(r.id, r.location);
    cityval::SpatialIndex index(std::move(items), meta.radius_km);
    const auto hits = index.radius_query(block.location, meta.radius_km, block.id);
    if (hits.empty()) {
      results.push_back({{"id", block.id}, {"status", "uncoverable"}});
    } else {
      const auto road = cityval::make_road_model(common.road_model);
      cityval::NeighborSet ns;
      ns.center_id = block.id;
      for (int pass = 0; pass < 2; ++pass) {
        const auto want = pass == 0 ? cityval::PoiKind::residential_block
                                    : cityval::PoiKind::facility;
        for (const auto& hit : hits) {
          const auto* nbr = by_id.at(hit.id);
          if (nbr->kind != want) continue;
          ns.neighbor_ids.push_back(hit.id);
          ns.euclidean_km.push_back(hit.km);
          ns.trajectory_km.push_back(std::max(
              hit.km, road->route_km(block.location, nbr->location, hit.km)));
          if (pass == 0) ++ns.block_count;
        }
      }
      results.push_back(predict_one(block, ns, params, known));
    }
  }

  const json doc{{"predictions", results}};
  const std::string path = out_path(common.out_dir, "predictions.json");
  write_text_file(path, doc.dump(2) + "\n");

  std::ostringstream table;
  table << std::left << std::setw(20) << "Block" << std::setw(14) << "Status"
        << std::right << std::setw(14) << "Prediction" << std::setw(10) << "Scale"
        << "\n";
  table << std::string(58, '-') << "\n";
  for (const auto& row : results) {
    table << std::left << std::setw(20) << row.at("id").get<std::string>()
          << std::setw(14) << row.at("status").get<std::string>();
    if (row.at("status") == "ok") {
      char cells[32];
      std::snprintf(cells, sizeof(cells), "%14s%10.4f",
                    cityval::format_grouped(row.at("prediction").get<double>()).c_str(),
                    row.at("scale").get<double>());
      table << cells;
    }
    table << "\n";
  }
  const std::string text_path = out_path(common.out_dir, "predictions.txt");
  write_text_file(text_path, table.str());
  manifest.add_output(path);
  manifest.add_output(text_path);
  manifest.finished_at = cityval::iso8601_now();
  manifest.write(out_path(common.out_dir, "manifest.json"));
  std::cout << table.str();
  return 0;
}

// ------------------------------------------------------------------- report

int cmd_report(const std::string& snapshot_path, const std::string& poi_path,
               const CommonOptions& common) {
  cityval::RunManifest manifest;
  manifest.command = "report";
  manifest.started_at = cityval::iso8601_now();
  require_input(snapshot_path, "snapshot");
  require_input(poi_path, "POI file");
  manifest.add_input(snapshot_path);
  manifest.add_input(poi_path);
  auto [params, meta] = cityval::load_params(snapshot_path);
  const auto records = cityval::load_pois(poi_path);
  manifest.seed = meta.seed;
  manifest.config_digest = meta.config_digest;
  const double city_mean = mean_known_price(records);

  const auto attr_prefs = cityval::attribute_preferences(params.theta, params.layout);
  const auto dist_prefs = cityval::distance_preferences(params.phi);
  const auto premiums = cityval::facility_premiums(params, records, city_mean);

  json jp = json::array();
  std::ostringstream text;
  text << "Attribute preferences (L1-normalized weight mass)\n";
  for (const auto& [attr, share] : attr_prefs) {
    char line[64];
    std::snprintf(line, sizeof(line), "  %-16s %.4f\n", attr.c_str(), share);
    text << line;
  }
  text << "\nDistance preferences (L1-normalized)\n";
  {
    char line[96];
    std::snprintf(line, sizeof(line), "  %-16s %.4f\n  %-16s %.4f\n", "euclidean",
                  dist_prefs[0], "trajectory", dist_prefs[1]);
    text << line;
  }
  text << "\nFacility premiums over the citywide mean ("
       << cityval::format_grouped(city_mean) << ")\n";
  for (const auto& entry : premiums) {
    char line[128];
    std::snprintf(line, sizeof(line), "  %-16s %s   (%zu facilities)\n",
                  cityval::to_string(entry.category).c_str(),
                  cityval::format_premium(city_mean, entry.premium).c_str(),
                  entry.facility_count);
    text << line;
    json ranking = json::array();
    for (const auto& fr : entry.ranking) {
      ranking.push_back({{"id", fr.id}, {"price", fr.price}});
    }
    jp.push_back({{"category", cityval::to_string(entry.category)},
                  {"mean_price", entry.mean_price},
                  {"premium", entry.premium},
                  {"facility_count", entry.facility_count},
                  {"ranking", std::move(ranking)}});
    text << "    top:";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, entry.ranking.size()); ++i) {
      text << " " << entry.ranking[i].id << "="
           << cityval::format_grouped(entry.ranking[i].price);
    }
    text << "\n";
  }

  json doc{{"city_mean", city_mean},
           {"attribute_preferences", attr_prefs},
           {"distance_preferences", {dist_prefs[0], dist_prefs[1]}},
           {"category_premiums", jp}};
  const std::string json_path = out_path(common.out_dir, "report.json");
  write_text_file(json_path, doc.dump(2) + "\n");
  const std::string text_path = out_path(common.out_dir, "report.txt");
  write_text_file(text_path, text.str());
  manifest.add_output(json_path);
  manifest.add_output(text_path);
  manifest.finished_at = cityval::iso8601_now();
  manifest.write(out_path(common.out_dir, "manifest.json"));
  std::cout << text.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learned valuation of city facilities from block prices"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string config_path, poi_path, graph_path, snapshot_path, baseline, block_json;
  std::vector<std::string> predict_ids;
  std::vector<double> radii;
  std::optional<double> radius;
  std::optional<std::uint64_t> seed, split_seed;
  std::optional<std::size_t> shards;

  app.add_option("--log-level", g_log_level, "0=quiet, 1=info, 2=debug")
      ->check(CLI::Range(0, 2));

  const auto add_common = [&common](CLI::App* cmd, bool with_road = true) {
    cmd->add_option("--out", common.out_dir, "output directory");
    if (with_road) {
      cmd->add_option("--road-model", common.road_model,
                      "detour:<factor> or manhattan");
    }
  };

  auto* generate = app.add_subcommand("generate", "generate a synthetic city");
  generate->add_option("--config", config_path, "synth config JSON");
  generate->add_option("--seed", seed, "override the config seed");
  add_common(generate, false);

  auto* build = app.add_subcommand("build-graph", "build the neighborhood graph");
  build->add_option("--pois", poi_path, "POI file")->required();
  build->add_option("--radius-km", radius, "influence radius")->required();
  add_common(build);

  auto* train = app.add_subcommand("train", "train the valuation model");
  train->add_option("--pois", poi_path, "POI file")->required();
  train->add_option("--graph", graph_path, "graph cache (built if absent)");
  train->add_option("--config", config_path, "training config JSON");
  train->add_option("--radius-km", radius, "influence radius (overrides config)");
  train->add_option("--seed", seed, "split/init seed (overrides config)");
  train->add_option("--shards", shards, "gradient shard count (overrides config)");
  add_common(train);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a model or baseline");
  evaluate->add_option("--pois", poi_path, "POI file")->required();
  evaluate->add_option("--graph", graph_path, "graph cache (built if absent)");
  evaluate->add_option("--snapshot", snapshot_path, "model snapshot");
  evaluate->add_option("--baseline", baseline,
                       "citywide_avg|macro_avg|micro_avg|linear_regression");
  evaluate->add_option("--split-seed,--seed", split_seed, "dataset split seed");
  evaluate->add_option("--radius-km", radius, "radius (baselines)");
  add_common(evaluate);

  auto* sweep = app.add_subcommand("sweep", "train and evaluate across radii");
  sweep->add_option("--pois", poi_path, "POI file")->required();
  sweep->add_option("--radii", radii, "radii in km")->required()->expected(2, 16);
  sweep->add_option("--config", config_path, "training config JSON");
  sweep->add_option("--seed", seed, "split/init seed (overrides config)");
  sweep->add_option("--shards", shards, "gradient shard count");
  add_common(sweep);

  auto* predict = app.add_subcommand("predict", "predict block values");
  predict->add_option("--snapshot", snapshot_path, "model snapshot")->required();
  predict->add_option("--pois", poi_path, "POI file")->required();
  predict->add_option("--graph", graph_path, "graph cache (built if absent)");
  predict->add_option("--ids", predict_ids, "block ids to predict");
  predict->add_option("--block-json", block_json, "ad-hoc block record (JSON file)");
  add_common(predict);

  auto* report = app.add_subcommand("report", "learned-value reports");
  report->add_option("--snapshot", snapshot_path, "model snapshot")->required();
  report->add_option("--pois", poi_path, "POI file")->required();
  add_common(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(config_path, common, seed);
    if (build->parsed()) return cmd_build_graph(poi_path, *radius, common);
    if (train->parsed())
      return cmd_train(poi_path, graph_path, config_path, common, radius, seed, shards);
    if (evaluate->parsed())
      return cmd_evaluate(poi_path, graph_path, snapshot_path, baseline, split_seed,
                          radius, common);
    if (sweep->parsed())
      return cmd_sweep(poi_path, radii, config_path, common, seed, shards);
    if (predict->parsed())
      return cmd_predict(snapshot_path, poi_path, graph_path, predict_ids, block_json,
                         common);
    if (report->parsed()) return cmd_report(snapshot_path, poi_path, common);
  } catch (const cityval::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cityval::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
