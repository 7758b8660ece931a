#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cityval/core.hpp"
#include "cityval/geo.hpp"

namespace cityval {

using json = nlohmann::json;

enum class PoiKind { residential_block, facility };

enum class FacilityCategory {
  governmental,
  educational,
  financial,
  recreational,
  medical,
  commercial,
  transportation,
  scenic,
  wasteyard,
  cemetery,
};

inline constexpr int kFacilityCategoryCount = 10;

inline const std::vector<std::string>& facility_category_names() {
  static const std::vector<std::string> names = {
      "governmental", "educational",    "financial", "recreational",
      "medical",      "commercial",     "transportation", "scenic",
      "wasteyard",    "cemetery"};
  return names;
}

inline std::string to_string(FacilityCategory c) {
  return facility_category_names()[static_cast<std::size_t>(c)];
}

inline FacilityCategory facility_category_from_string(const std::string& s) {
  const auto& names = facility_category_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == s) return static_cast<FacilityCategory>(i);
  }
  throw ValidationError("unknown facility category: " + s);
}

// One point of interest. Facilities carry a category and no attributes;
// residential blocks carry attributes and an optional observed price.
struct PoiRecord {
  std::string id;
  PoiKind kind = PoiKind::residential_block;
  std::optional<FacilityCategory> category;
  GeoPoint location;
  std::optional<double> known_price;              // currency per m^2
  std::map<std::string, std::string> attributes;  // blocks only
};

inline void validate_record(const PoiRecord& r) {
  if (r.id.empty()) throw ValidationError("record with empty id");
  validate_point(r.location);
  if (r.kind == PoiKind::facility) {
    if (!r.category) {
      throw ValidationError("facility '" + r.id + "' is missing a category");
    }
    if (!r.attributes.empty()) {
      throw ValidationError("facility '" + r.id + "' must not carry attributes");
    }
    if (r.known_price) {
      throw ValidationError("facility '" + r.id + "' must not carry a price");
    }
  } else {
    if (r.category) {
      throw ValidationError("residential block '" + r.id + "' must not carry a category");
    }
    if (r.known_price &&
        (!std::isfinite(*r.known_price) || *r.known_price <= 0.0)) {
      throw ValidationError("record '" + r.id + "': price must be finite and > 0");
    }
  }
}

inline json poi_to_json(const PoiRecord& r) {
  json j;
  j["id"] = r.id;
  j["kind"] = r.kind == PoiKind::facility ? "facility" : "residential_block";
  if (r.kind == PoiKind::facility) j["category"] = to_string(*r.category);
  j["lat"] = r.location.lat;
  j["lon"] = r.location.lon;
  if (r.known_price) {
    j["price"] = *r.known_price;
  } else {
    j["price"] = nullptr;
  }
  if (r.kind == PoiKind::residential_block) j["attributes"] = r.attributes;
  return j;
}

inline PoiRecord poi_from_json(const json& j) {
  PoiRecord r;
  if (!j.contains("id") || !j["id"].is_string()) {
    throw ValidationError("field 'id': required string");
  }
  r.id = j["id"].get<std::string>();
  if (!j.contains("kind") || !j["kind"].is_string()) {
    throw ValidationError("record '" + r.id + "', field 'kind': required string");
  }
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "residential_block") {
    r.kind = PoiKind::residential_block;
  } else if (kind == "facility") {
    r.kind = PoiKind::facility;
  } else {
    throw ValidationError("record '" + r.id + "', field 'kind': unknown value '" + kind + "'");
  }
  if (j.contains("category") && !j["category"].is_null()) {
    if (!j["category"].is_string()) {
      throw ValidationError("record '" + r.id + "', field 'category': must be a string");
    }
    r.category = facility_category_from_string(j["category"].get<std::string>());
  }
  if (!j.contains("lat") || !j["lat"].is_number() || !j.contains("lon") ||
      !j["lon"].is_number()) {
    throw ValidationError("record '" + r.id + "', fields 'lat'/'lon': required numbers");
  }
  r.location = GeoPoint{j["lat"].get<double>(), j["lon"].get<double>()};
  if (j.contains("price") && !j["price"].is_null()) {
    if (!j["price"].is_number()) {
      throw ValidationError("record '" + r.id + "', field 'price': must be a number or null");
    }
    r.known_price = j["price"].get<double>();
  }
  if (j.contains("attributes") && !j["attributes"].is_null()) {
    if (!j["attributes"].is_object()) {
      throw ValidationError("record '" + r.id + "', field 'attributes': must be an object");
    }
    for (const auto& [key, value] : j["attributes"].items()) {
      if (!value.is_string()) {
        throw ValidationError("record '" + r.id + "', attribute '" + key + "': must be a string");
      }
      r.attributes[key] = value.get<std::string>();
    }
  }
  validate_record(r);
  return r;
}

// Line-delimited JSON, one POI per line.
inline std::vector<PoiRecord> load_pois(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open POI file: " + path);
  std::vector<PoiRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": JSON parse error: " + e.what());
    }
    PoiRecord r;
    try {
      r = poi_from_json(j);
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(r.id).second) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": duplicate id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline void save_pois(const std::string& path, const std::vector<PoiRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write POI file: " + path);
  for (const auto& r : records) {
    out << poi_to_json(r).dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

// One-hot layout over the categorical attributes observed in a dataset.
// Each attribute gets a contiguous slot block: its sorted category values
// plus one reserved slot for values unseen at fit time.
struct AttributeLayout {
  struct Block {
    std::string attribute;
    std::vector<std::string> categories;  // sorted; unseen slot follows them
    std::size_t offset = 0;
  };

  std::vector<Block> blocks;
  std::size_t total_slots = 0;

  std::size_t unseen_slot(std::size_t block_index) const {
    const Block& b = blocks[block_index];
    return b.offset + b.categories.size();
  }

  // Active slot index per block, in block order.
  std::vector<std::uint32_t> encode(
      const std::map<std::string, std::string>& attrs) const {
    std::vector<std::uint32_t> slots;
    slots.reserve(blocks.size());
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const Block& b = blocks[bi];
      const auto it = attrs.find(b.attribute);
      std::size_t slot = unseen_slot(bi);
      if (it != attrs.end()) {
        const auto pos = std::lower_bound(b.categories.begin(),
                                          b.categories.end(), it->second);
        if (pos != b.categories.end() && *pos == it->second) {
          slot = b.offset + static_cast<std::size_t>(pos - b.categories.begin());
        }
      }
      slots.push_back(static_cast<std::uint32_t>(slot));
    }
    return slots;
  }

  json to_json() const {
    json out = json::array();
    for (const auto& b : blocks) {
      out.push_back({{"attribute", b.attribute}, {"categories", b.categories}});
    }
    return out;
  }

  static AttributeLayout from_json(const json& j) {
    AttributeLayout layout;
    for (const auto& jb : j) {
      Block b;
      b.attribute = jb.at("attribute").get<std::string>();
      b.categories = jb.at("categories").get<std::vector<std::string>>();
      b.offset = layout.total_slots;
      layout.total_slots += b.categories.size() + 1;
      layout.blocks.push_back(std::move(b));
    }
    return layout;
  }
};

inline AttributeLayout infer_layout(const std::vector<PoiRecord>& records) {
  std::map<std::string, std::set<std::string>> vocab;
  for (const auto& r : records) {
    if (r.kind != PoiKind::residential_block) continue;
    for (const auto& [key, value] : r.attributes) {
      vocab[key].insert(value);
    }
  }
  AttributeLayout layout;
  for (const auto& [attr, values] : vocab) {
    AttributeLayout::Block b;
    b.attribute = attr;
    b.categories.assign(values.begin(), values.end());
    b.offset = layout.total_slots;
    layout.total_slots += b.categories.size() + 1;
    layout.blocks.push_back(std::move(b));
  }
  return layout;
}

// Neighborhood of one residential block: residential-block neighbors first,
// then facilities, each segment ascending by straight-line distance with id
// tiebreak. Row 1 of the distance matrix is the straight line, row 2 the
// route; row 2 >= row 1 elementwise.
struct NeighborSet {
  std::string center_id;
  std::vector<std::string> neighbor_ids;
  std::vector<double> euclidean_km;
  std::vector<double> trajectory_km;
  std::size_t block_count = 0;  // leading entries that are residential blocks

  std::size_t size() const { return neighbor_ids.size(); }
};

using Graph = std::map<std::string, NeighborSet>;

struct GraphBuildResult {
  Graph graph;
  std::vector<std::string> no_neighbor_blocks;  // excluded, reported
};

inline GraphBuildResult build_graph(const std::vector<PoiRecord>& records,
                                    double radius_km,
                                    const RoadModel& road_model) {
  if (!(radius_km > 0.0)) throw ConfigError("graph radius must be positive");
  std::unordered_map<std::string, const PoiRecord*> by_id;
  std::vector<std::pair<std::string, GeoPoint>> items;
  items.reserve(records.size());
  for (const auto& r : records) {
    validate_record(r);
    if (!by_id.emplace(r.id, &r).second) {
      throw ValidationError("duplicate id '" + r.id + "'");
    }
    items.emplace_back(r.id, r.location);
  }
  SpatialIndex index(std::move(items), radius_km);

  GraphBuildResult result;
  for (const auto& r : records) {
    if (r.kind != PoiKind::residential_block) continue;
    const auto hits = index.radius_query(r.location, radius_km, r.id);
    if (hits.empty()) {
      result.no_neighbor_blocks.push_back(r.id);
      continue;
    }
    NeighborSet ns;
    ns.center_id = r.id;
    ns.neighbor_ids.reserve(hits.size());
    ns.euclidean_km.reserve(hits.size());
    ns.trajectory_km.reserve(hits.size());
    // residential blocks first, then facilities; hits are already sorted
    for (int pass = 0; pass < 2; ++pass) {
      const PoiKind want = pass == 0 ? PoiKind::residential_block : PoiKind::facility;
      for (const auto& hit : hits) {
        const PoiRecord* nbr = by_id.at(hit.id);
        if (nbr->kind != want) continue;
        ns.neighbor_ids.push_back(hit.id);
        ns.euclidean_km.push_back(hit.km);
        ns.trajectory_km.push_back(
            std::max(hit.km, road_model.route_km(r.location, nbr->location, hit.km)));
        if (pass == 0) ++ns.block_count;
      }
    }
    result.graph.emplace(r.id, std::move(ns));
  }
  std::sort(result.no_neighbor_blocks.begin(), result.no_neighbor_blocks.end());
  return result;
}

// Graph cache: one neighbor set per line, so expensive builds are reusable.
inline void save_graph(const std::string& path, const Graph& graph) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write graph file: " + path);
  for (const auto& [center, ns] : graph) {
    json j;
    j["center"] = center;
    j["neighbors"] = ns.neighbor_ids;
    j["euclidean_km"] = ns.euclidean_km;
    j["trajectory_km"] = ns.trajectory_km;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

// Loading recomputes block_count from the POI table and re-checks the
// distance-row invariant.
inline Graph load_graph(const std::string& path,
                        const std::vector<PoiRecord>& records) {
  std::unordered_map<std::string, PoiKind> kinds;
  for (const auto& r : records) kinds[r.id] = r.kind;

  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open graph file: " + path);
  Graph graph;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": JSON parse error: " + e.what());
    }
    NeighborSet ns;
    ns.center_id = j.at("center").get<std::string>();
    ns.neighbor_ids = j.at("neighbors").get<std::vector<std::string>>();
    ns.euclidean_km = j.at("euclidean_km").get<std::vector<double>>();
    ns.trajectory_km = j.at("trajectory_km").get<std::vector<double>>();
    if (ns.neighbor_ids.empty() ||
        ns.neighbor_ids.size() != ns.euclidean_km.size() ||
        ns.neighbor_ids.size() != ns.trajectory_km.size()) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": neighbor set '" + ns.center_id +
                            "' has inconsistent column counts");
    }
    for (std::size_t i = 0; i < ns.size(); ++i) {
      if (!std::isfinite(ns.euclidean_km[i]) || !std::isfinite(ns.trajectory_km[i]) ||
          ns.euclidean_km[i] < 0.0 ||
          ns.trajectory_km[i] < ns.euclidean_km[i]) {
        throw ValidationError(path + ":" + std::to_string(line_no) +
                              ": neighbor set '" + ns.center_id +
                              "' violates the distance-row invariant");
      }
      const auto it = kinds.find(ns.neighbor_ids[i]);
      if (it == kinds.end()) {
        throw ValidationError(path + ":" + std::to_string(line_no) +
                              ": unknown neighbor id '" + ns.neighbor_ids[i] + "'");
      }
      if (it->second == PoiKind::residential_block) {
        if (i != ns.block_count) {
          throw ValidationError(path + ":" + std::to_string(line_no) +
                                ": neighbor set '" + ns.center_id +
                                "' does not list blocks before facilities");
        }
        ++ns.block_count;
      }
    }
    graph.emplace(ns.center_id, std::move(ns));
  }
  return graph;
}

// 7:1:2 split of the priced residential blocks, reproducible by seed.
struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  std::vector<std::string> test_ids;
};

inline DatasetSplit split_dataset(std::vector<std::string> priced_block_ids,
                                  std::uint64_t seed) {
  if (priced_block_ids.size() < 10) {
    throw ValidationError("split requires at least 10 priced blocks, got " +
                          std::to_string(priced_block_ids.size()));
  }
  std::sort(priced_block_ids.begin(), priced_block_ids.end());
  Rng rng(seed);
  rng.shuffle(priced_block_ids);

  const auto n = priced_block_ids.size();
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));

  DatasetSplit split;
  split.train_ids.assign(priced_block_ids.begin(),
                         priced_block_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation_ids.assign(
      priced_block_ids.begin() + static_cast<std::ptrdiff_t>(n_train),
      priced_block_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test_ids.assign(priced_block_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                        priced_block_ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.validation_ids.begin(), split.validation_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

inline std::vector<std::string> priced_block_ids(const std::vector<PoiRecord>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (r.kind == PoiKind::residential_block && r.known_price) ids.push_back(r.id);
  }
  return ids;
}

inline std::unordered_map<std::string, double> price_map(
    const std::vector<PoiRecord>& records, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const PoiRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::unordered_map<std::string, double> prices;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end() || !it->second->known_price) {
      throw ValidationError("no known price for block '" + id + "'");
    }
    prices.emplace(id, *it->second->known_price);
  }
  return prices;
}

}  // namespace cityval
