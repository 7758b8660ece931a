#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cityval/core.hpp"
#include "cityval/dataset.hpp"
#include "cityval/metrics.hpp"
#include "cityval/model.hpp"

namespace cityval {

struct BoundingBox {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;
};

inline std::unique_ptr<RoadModel> make_road_model(const std::string& spec) {
  if (spec == "manhattan") return std::make_unique<ManhattanRoadModel>();
  if (spec.rfind("detour:", 0) == 0) {
    const double factor = std::stod(spec.substr(7));
    return std::make_unique<DetourFactorRoadModel>(factor);
  }
  throw ConfigError("unknown road model '" + spec + "' (expected detour:<f> or manhattan)");
}

// Everything needed to fabricate a city whose prices follow the forward
// model exactly, so a training run can be checked against planted values.
struct SynthConfig {
  std::size_t n_blocks = 500;
  std::size_t n_facilities = 1500;
  BoundingBox bbox{39.80, 116.20, 39.98, 116.44};
  double radius_km = 1.0;
  std::array<double, 2> true_phi{-0.8, -0.4};
  // slot weights ~ theta_bias + U(-theta_scale, theta_scale); the positive
  // default keeps the planted scale factor high, matching markets where
  // facility values sit near the housing-price level
  double theta_scale = 0.15;
  double theta_bias = 0.4;
  std::optional<std::vector<double>> true_theta;  // explicit override
  std::map<std::string, std::pair<double, double>> category_price_ranges;
  double noise_stddev = 0.0;        // currency per m^2
  double known_fraction = 1.0;      // share of blocks with an observed price
  // facilities of one category gather in hard-edged disks around this many
  // sites (0 = uniform placement); real facility types cluster, and the
  // composition differences between neighborhoods are what identify
  // category values. Sites of different categories keep their disks apart:
  // facilities of mixed categories stacked on one spot would leave only
  // their value sum identifiable.
  std::size_t category_clusters = 12;
  double cluster_radius_km = 0.5;
  // this share of the blocks settles within the influence radius of a site,
  // round-robin, so no site goes unobserved; the rest spread uniformly
  double block_near_site_fraction = 0.5;
  // in clustered mode each site draws its own level from the category's
  // range and its facilities sit within this band of it: two schools in
  // different districts can be worth very different amounts
  double within_site_jitter = 150.0;
  std::uint64_t seed = 42;
  std::string road_model = "detour:1.3";
  std::size_t n_districts = 8;
  std::size_t n_developers = 12;
  std::size_t n_age_buckets = 5;
  std::size_t n_other = 3;

  SynthConfig() {
    category_price_ranges = {
        {"governmental", {61500.0, 62500.0}},
        {"educational", {58500.0, 59500.0}},
        {"financial", {55500.0, 56500.0}},
        {"transportation", {52500.0, 53500.0}},
        {"scenic", {49500.0, 50500.0}},
        {"medical", {46500.0, 47500.0}},
        {"commercial", {43500.0, 44500.0}},
        {"recreational", {40500.0, 41500.0}},
        {"cemetery", {37500.0, 38500.0}},
        {"wasteyard", {34500.0, 35500.0}},
    };
  }

  void validate() const {
    if (n_blocks == 0 || n_facilities == 0) {
      throw ConfigError("block and facility counts must be positive");
    }
    if (!(bbox.min_lat < bbox.max_lat) || !(bbox.min_lon < bbox.max_lon)) {
      throw ConfigError("degenerate bounding box");
    }
    validate_point({bbox.min_lat, bbox.min_lon});
    validate_point({bbox.max_lat, bbox.max_lon});
    if (!(radius_km > 0.0)) throw ConfigError("radius_km must be positive");
    if (noise_stddev < 0.0) throw ConfigError("noise_stddev must be >= 0");
    if (!(known_fraction > 0.0) || known_fraction > 1.0) {
      throw ConfigError("known_fraction must be in (0, 1]");
    }
    if (block_near_site_fraction < 0.0 || block_near_site_fraction > 1.0) {
      throw ConfigError("block_near_site_fraction must be in [0, 1]");
    }
    for (const auto& [name, range] : category_price_ranges) {
      facility_category_from_string(name);
      if (!(range.first > 0.0) || range.second < range.first) {
        throw ConfigError("bad price range for category " + name);
      }
    }
    if (category_price_ranges.size() != kFacilityCategoryCount) {
      throw ConfigError("price ranges must cover all facility categories");
    }
  }

  json to_json() const {
    json ranges = json::object();
    for (const auto& [name, range] : category_price_ranges) {
      ranges[name] = {range.first, range.second};
    }
    json j{{"n_blocks", n_blocks},
           {"n_facilities", n_facilities},
           {"bbox",
            {{"min_lat", bbox.min_lat},
             {"min_lon", bbox.min_lon},
             {"max_lat", bbox.max_lat},
             {"max_lon", bbox.max_lon}}},
           {"radius_km", radius_km},
           {"true_phi", std::vector<double>(true_phi.begin(), true_phi.end())},
           {"theta_scale", theta_scale},
           {"theta_bias", theta_bias},
           {"category_price_ranges", std::move(ranges)},
           {"noise_stddev", noise_stddev},
           {"known_fraction", known_fraction},
           {"category_clusters", category_clusters},
           {"cluster_radius_km", cluster_radius_km},
           {"block_near_site_fraction", block_near_site_fraction},
           {"within_site_jitter", within_site_jitter},
           {"seed", seed},
           {"road_model", road_model},
           {"n_districts", n_districts},
           {"n_developers", n_developers},
           {"n_age_buckets", n_age_buckets},
           {"n_other", n_other}};
    if (true_theta) j["true_theta"] = *true_theta;
    return j;
  }

  static SynthConfig from_json(const json& j) {
    SynthConfig c;
    if (j.contains("n_blocks")) c.n_blocks = j["n_blocks"].get<std::size_t>();
    if (j.contains("n_facilities")) c.n_facilities = j["n_facilities"].get<std::size_t>();
    if (j.contains("bbox")) {
      const auto& b = j["bbox"];
      c.bbox = {b.at("min_lat").get<double>(), b.at("min_lon").get<double>(),
                b.at("max_lat").get<double>(), b.at("max_lon").get<double>()};
    }
    if (j.contains("radius_km")) c.radius_km = j["radius_km"].get<double>();
    if (j.contains("true_phi")) {
      const auto phi = j["true_phi"].get<std::vector<double>>();
      if (phi.size() != 2) throw ConfigError("true_phi must have 2 entries");
      c.true_phi = {phi[0], phi[1]};
    }
    if (j.contains("theta_scale")) c.theta_scale = j["theta_scale"].get<double>();
    if (j.contains("theta_bias")) c.theta_bias = j["theta_bias"].get<double>();
    if (j.contains("true_theta")) c.true_theta = j["true_theta"].get<std::vector<double>>();
    if (j.contains("category_price_ranges")) {
      for (const auto& [name, range] : j["category_price_ranges"].items()) {
        const auto r = range.get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("price range for " + name + " must have 2 entries");
        c.category_price_ranges[name] = {r[0], r[1]};
      }
    }
    if (j.contains("noise_stddev")) c.noise_stddev = j["noise_stddev"].get<double>();
    if (j.contains("known_fraction")) c.known_fraction = j["known_fraction"].get<double>();
    if (j.contains("category_clusters")) c.category_clusters = j["category_clusters"].get<std::size_t>();
    if (j.contains("cluster_radius_km")) c.cluster_radius_km = j["cluster_radius_km"].get<double>();
    if (j.contains("block_near_site_fraction")) c.block_near_site_fraction = j["block_near_site_fraction"].get<double>();
    if (j.contains("within_site_jitter")) c.within_site_jitter = j["within_site_jitter"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("road_model")) c.road_model = j["road_model"].get<std::string>();
    if (j.contains("n_districts")) c.n_districts = j["n_districts"].get<std::size_t>();
    if (j.contains("n_developers")) c.n_developers = j["n_developers"].get<std::size_t>();
    if (j.contains("n_age_buckets")) c.n_age_buckets = j["n_age_buckets"].get<std::size_t>();
    if (j.contains("n_other")) c.n_other = j["n_other"].get<std::size_t>();
    c.validate();
    return c;
  }
};

struct SynthCity {
  std::vector<PoiRecord> records;
  AttributeLayout layout;
  ModelParams planted;  // price table covers facilities and unpriced blocks
  Graph graph;          // built with the config's radius and road model
};

namespace detail {

inline std::string padded_id(const char* prefix, std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%s_%06zu", prefix, i);
  return buf;
}

}  // namespace detail

// Facility prices are drawn per category; block prices are the fixed point
// of the forward model over the neighborhood graph (a block's value feeds
// its neighbors' values), plus optional Gaussian noise, clamped at a floor
// of 1 so prices stay positive. With zero noise every generated price is
// exactly the forward value under the planted parameters.
inline SynthCity generate_city(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const auto road = make_road_model(config.road_model);

  SynthCity city;
  city.records.reserve(config.n_blocks + config.n_facilities);

  // per-category hot spots first, then the facilities themselves
  const double deg_lat_per_km = 1.0 / 111.1950802335329;
  const double mid_lat = 0.5 * (config.bbox.min_lat + config.bbox.max_lat);
  const double deg_lon_per_km =
      deg_lat_per_km / std::max(0.05, std::cos(mid_lat * M_PI / 180.0));
  std::vector<std::vector<GeoPoint>> hot_spots(kFacilityCategoryCount);
  std::vector<std::vector<double>> site_values(kFacilityCategoryCount);
  std::vector<GeoPoint> all_sites;
  if (config.category_clusters > 0) {
    const double min_sep_km =
        std::max(3.0 * config.cluster_radius_km, 1.2 * config.radius_km);
    const std::size_t total_sites = kFacilityCategoryCount * config.category_clusters;
    for (std::size_t s = 0; s < total_sites; ++s) {
      GeoPoint candidate{};
      for (int attempt = 0; attempt < 200; ++attempt) {
        candidate = {rng.uniform(config.bbox.min_lat, config.bbox.max_lat),
                     rng.uniform(config.bbox.min_lon, config.bbox.max_lon)};
        bool clear = true;
        for (const auto& other : all_sites) {
          if (haversine_km(candidate, other) < min_sep_km) {
            clear = false;
            break;
          }
        }
        if (clear) break;
      }
      all_sites.push_back(candidate);
      const std::size_t cat = s % kFacilityCategoryCount;
      hot_spots[cat].push_back(candidate);
      const auto range = config.category_price_ranges.at(
          facility_category_names()[cat]);
      site_values[cat].push_back(rng.uniform(range.first, range.second));
    }
  }
  const auto clamp = [](double v, double lo, double hi) {
    return std::min(hi, std::max(lo, v));
  };

  std::unordered_map<std::string, double> facility_price;
  for (std::size_t i = 0; i < config.n_facilities; ++i) {
    PoiRecord r;
    r.id = detail::padded_id("fac", i + 1);
    r.kind = PoiKind::facility;
    const auto cat = static_cast<FacilityCategory>(rng.index(kFacilityCategoryCount));
    if (config.category_clusters > 0) {
      const std::size_t site = rng.index(config.category_clusters);
      const auto& spot = hot_spots[static_cast<std::size_t>(cat)][site];
      const double rr = config.cluster_radius_km * std::sqrt(rng.uniform());
      const double angle = 2.0 * M_PI * rng.uniform();
      r.location = {
          clamp(spot.lat + rr * std::cos(angle) * deg_lat_per_km,
                config.bbox.min_lat, config.bbox.max_lat),
          clamp(spot.lon + rr * std::sin(angle) * deg_lon_per_km,
                config.bbox.min_lon, config.bbox.max_lon)};
      facility_price[r.id] = std::max(
          1.0, site_values[static_cast<std::size_t>(cat)][site] +
                   rng.uniform(-config.within_site_jitter, config.within_site_jitter));
    } else {
      r.location = {rng.uniform(config.bbox.min_lat, config.bbox.max_lat),
                    rng.uniform(config.bbox.min_lon, config.bbox.max_lon)};
      const auto range = config.category_price_ranges.at(to_string(cat));
      facility_price[r.id] = rng.uniform(range.first, range.second);
    }
    r.category = cat;
    city.records.push_back(std::move(r));
  }

  SpatialIndex facility_index(
      [&] {
        std::vector<std::pair<std::string, GeoPoint>> items;
        for (const auto& r : city.records) items.emplace_back(r.id, r.location);
        return items;
      }(),
      config.radius_km);

  // blocks: resample a position until it can see at least one facility
  const std::vector<std::pair<std::string, std::size_t>> attr_specs = {
      {"type", 2},
      {"district", config.n_districts},
      {"developer", config.n_developers},
      {"age", config.n_age_buckets},
      {"other", config.n_other}};
  std::size_t next_site = 0;
  for (std::size_t i = 0; i < config.n_blocks; ++i) {
    PoiRecord r;
    r.id = detail::padded_id("blk", i + 1);
    r.kind = PoiKind::residential_block;
    const bool near_site = !all_sites.empty() &&
                           rng.uniform() < config.block_near_site_fraction;
    const GeoPoint* site = nullptr;
    if (near_site) {
      site = &all_sites[next_site % all_sites.size()];
      ++next_site;
    }
    bool placed = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      // a site may have drawn no facilities at all; give up on it after a
      // few tries and place the block anywhere covered
      if (site && attempt < 50) {
        const double rr = 0.6 * config.radius_km * std::sqrt(rng.uniform());
        const double angle = 2.0 * M_PI * rng.uniform();
        r.location = {clamp(site->lat + rr * std::cos(angle) * deg_lat_per_km,
                            config.bbox.min_lat, config.bbox.max_lat),
                      clamp(site->lon + rr * std::sin(angle) * deg_lon_per_km,
                            config.bbox.min_lon, config.bbox.max_lon)};
      } else {
        r.location = {rng.uniform(config.bbox.min_lat, config.bbox.max_lat),
                      rng.uniform(config.bbox.min_lon, config.bbox.max_lon)};
      }
      if (!facility_index.radius_query(r.location, config.radius_km).empty()) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw ConfigError("could not place block " + r.id +
                        " with a facility in radius; facility density too low");
    }
    for (const auto& [attr, cardinality] : attr_specs) {
      if (attr == "type") {
        r.attributes[attr] = rng.index(2) == 0 ? "apartment" : "house";
      } else {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%c%02u", std::toupper(attr[0]),
                      static_cast<unsigned>(rng.index(cardinality) + 1));
        r.attributes[attr] = buf;
      }
    }
    city.records.push_back(std::move(r));
  }

  city.layout = infer_layout(city.records);

  // planted attribute weights: one draw per category slot, unseen slots 0
  std::vector<double> theta(city.layout.total_slots, 0.0);
  for (std::size_t bi = 0; bi < city.layout.blocks.size(); ++bi) {
    const auto& block = city.layout.blocks[bi];
    for (std::size_t s = 0; s < block.categories.size(); ++s) {
      theta[block.offset + s] =
          config.theta_bias + rng.uniform(-config.theta_scale, config.theta_scale);
    }
  }
  if (config.true_theta) {
    if (config.true_theta->size() != city.layout.total_slots) {
      throw ConfigError("true_theta has " + std::to_string(config.true_theta->size()) +
                        " entries but the layout has " +
                        std::to_string(city.layout.total_slots) + " slots");
    }
    theta = *config.true_theta;
  }

  city.graph = build_graph(city.records, config.radius_km, *road).graph;

  // fixed point of block values: value_i = S_i * (F_i . w_i) where block
  // neighbors contribute their current values and facilities their planted
  // prices; contraction since S < 1 and F is a convex combination
  std::unordered_map<std::string, std::size_t> block_index;
  std::vector<std::size_t> blocks;  // indices into city.records
  for (std::size_t i = 0; i < city.records.size(); ++i) {
    if (city.records[i].kind == PoiKind::residential_block) {
      block_index.emplace(city.records[i].id, blocks.size());
      blocks.push_back(i);
    }
  }

  struct CompiledBlock {
    double scale = 0.0;
    std::vector<double> f;
    std::vector<std::int64_t> nbr_block;  // block index, or -1
    std::vector<double> nbr_fixed;        // facility price when nbr_block < 0
  };
  std::vector<CompiledBlock> compiled(blocks.size());
  double mean_facility = 0.0;
  for (const auto& [id, price] : facility_price) {
    (void)id;
    mean_facility += price;
  }
  mean_facility /= static_cast<double>(facility_price.size());

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const PoiRecord& block = city.records[blocks[b]];
    const auto ns = city.graph.find(block.id);
    if (ns == city.graph.end()) {
      throw Error("block " + block.id + " lost its neighbors during generation");
    }
    CompiledBlock& cb = compiled[b];
    cb.scale = attribute_scale(city.layout.encode(block.attributes), theta);
    cb.f = distance_weights(ns->second.euclidean_km, ns->second.trajectory_km,
                            config.true_phi);
    for (const auto& nid : ns->second.neighbor_ids) {
      const auto bit = block_index.find(nid);
      if (bit != block_index.end()) {
        cb.nbr_block.push_back(static_cast<std::int64_t>(bit->second));
        cb.nbr_fixed.push_back(0.0);
      } else {
        cb.nbr_block.push_back(-1);
        cb.nbr_fixed.push_back(facility_price.at(nid));
      }
    }
  }

  std::vector<double> value(blocks.size(), mean_facility), next(blocks.size());
  for (int iter = 0; iter < 1000; ++iter) {
    double max_delta = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const CompiledBlock& cb = compiled[b];
      double inner = 0.0;
      for (std::size_t j = 0; j < cb.f.size(); ++j) {
        const double w = cb.nbr_block[j] >= 0
                             ? value[static_cast<std::size_t>(cb.nbr_block[j])]
                             : cb.nbr_fixed[j];
        inner += cb.f[j] * w;
      }
      next[b] = cb.scale * inner;
      max_delta = std::max(max_delta, std::abs(next[b] - value[b]));
    }
    value.swap(next);
    if (max_delta <= 1e-13 * std::max(1.0, mean_facility)) break;
  }

  // choose the blocks whose price is observed
  const auto n_known = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.known_fraction *
                                               static_cast<double>(blocks.size()))));
  std::vector<std::size_t> order(blocks.size());
  for (std::size_t b = 0; b < order.size(); ++b) order[b] = b;
  rng.shuffle(order);
  std::vector<bool> known(blocks.size(), false);
  for (std::size_t b = 0; b < n_known; ++b) known[order[b]] = true;

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    PoiRecord& record = city.records[blocks[b]];
    if (known[b]) {
      const double noise = config.noise_stddev > 0.0
                               ? rng.normal(0.0, config.noise_stddev)
                               : 0.0;
      record.known_price = std::max(1.0, value[b] + noise);
    }
  }

  // planted parameter set: facilities plus the blocks without an observed price
  city.planted.layout = city.layout;
  city.planted.theta = std::move(theta);
  city.planted.phi = config.true_phi;
  for (const auto& r : city.records) {
    if (r.kind == PoiKind::facility || !r.known_price) {
      city.planted.price_ids.push_back(r.id);
    }
  }
  std::sort(city.planted.price_ids.begin(), city.planted.price_ids.end());
  city.planted.prices.reserve(city.planted.price_ids.size());
  for (const auto& id : city.planted.price_ids) {
    const auto fit = facility_price.find(id);
    if (fit != facility_price.end()) {
      city.planted.prices.push_back(fit->second);
    } else {
      city.planted.prices.push_back(value[block_index.at(id)]);
    }
  }
  city.planted.rebuild_price_index();
  return city;
}

// How close a learned parameter set is to the planted one. Price entries are
// matched by id over the planted table (optionally only those observed by at
// least min_observations blocks).
struct RecoveryReport {
  std::size_t compared_count = 0;
  double mean_relative_error = 0.0;
  double max_relative_error = 0.0;
  double price_pearson = 0.0;
  double theta_cosine = 0.0;
  double phi_cosine = 0.0;
  std::map<std::string, double> relative_errors;

  json to_json() const {
    return json{{"compared_count", compared_count},
                {"mean_relative_error", mean_relative_error},
                {"max_relative_error", max_relative_error},
                {"price_pearson", price_pearson},
                {"theta_cosine", theta_cosine},
                {"phi_cosine", phi_cosine},
                {"relative_errors", relative_errors}};
  }
};

inline RecoveryReport plant_report(
    const ModelParams& planted, const ModelParams& learned,
    const std::unordered_map<std::string, std::size_t>& observation_counts = {},
    std::size_t min_observations = 0) {
  RecoveryReport report;
  std::vector<double> planted_u, learned_u;
  for (std::size_t i = 0; i < planted.price_ids.size(); ++i) {
    const std::string& id = planted.price_ids[i];
    const double* lp = learned.find_price(id);
    if (!lp) {
      throw ValidationError("learned parameters are missing planted id '" + id + "'");
    }
    if (min_observations > 0) {
      const auto it = observation_counts.find(id);
      if (it == observation_counts.end() || it->second < min_observations) continue;
    }
    planted_u.push_back(planted.prices[i]);
    learned_u.push_back(*lp);
    const double rel = std::abs(*lp - planted.prices[i]) /
                       std::max(1e-12, std::abs(planted.prices[i]));
    report.relative_errors.emplace(id, rel);
    report.mean_relative_error += rel;
    report.max_relative_error = std::max(report.max_relative_error, rel);
  }
  report.compared_count = planted_u.size();
  if (report.compared_count > 0) {
    report.mean_relative_error /= static_cast<double>(report.compared_count);
  }
  if (report.compared_count >= 2) {
    report.price_pearson = pearson_correlation(planted_u, learned_u);
  }

  // align theta by (attribute, category); slots absent on one side count as 0
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> slots;
  const auto gather = [&slots](const ModelParams& p, bool first) {
    for (const auto& block : p.layout.blocks) {
      for (std::size_t s = 0; s < block.categories.size(); ++s) {
        auto& entry = slots[{block.attribute, block.categories[s]}];
        (first ? entry.first : entry.second) = p.theta[block.offset + s];
      }
    }
  };
  gather(planted, true);
  gather(learned, false);
  std::vector<double> ta, tb;
  for (const auto& [key, pair] : slots) {
    (void)key;
    ta.push_back(pair.first);
    tb.push_back(pair.second);
  }
  report.theta_cosine = ta.empty() ? 0.0 : cosine_similarity(ta, tb);
  report.phi_cosine =
      cosine_similarity({planted.phi[0], planted.phi[1]}, {learned.phi[0], learned.phi[1]});
  return report;
}

// Rank agreement of per-category premiums between two parameter sets.
inline double premium_rank_agreement(const ModelParams& planted,
                                     const ModelParams& learned,
                                     const std::vector<PoiRecord>& pois,
                                     double city_mean) {
  const auto a = facility_premiums(planted, pois, city_mean);
  const auto b = facility_premiums(learned, pois, city_mean);
  std::map<FacilityCategory, double> bp;
  for (const auto& entry : b) bp[entry.category] = entry.premium;
  std::vector<double> va, vb;
  for (const auto& entry : a) {
    const auto it = bp.find(entry.category);
    if (it == bp.end()) continue;
    va.push_back(entry.premium);
    vb.push_back(it->second);
  }
  return spearman_correlation(va, vb);
}

// Observation counts: how many residential-block neighborhoods contain each
// POI id.
inline std::unordered_map<std::string, std::size_t> observation_counts(const Graph& graph) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& [center, ns] : graph) {
    (void)center;
    for (const auto& id : ns.neighbor_ids) counts[id] += 1;
  }
  return counts;
}

}  // namespace cityval
