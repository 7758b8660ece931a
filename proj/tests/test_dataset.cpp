#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "cityval/dataset.hpp"
#include "cityval/synth.hpp"

using namespace cityval;
namespace fs = std::filesystem;

namespace {

std::string temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cityval_dataset_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& line : lines) out << line << "\n";
}

PoiRecord block_at(const std::string& id, double lat, double lon,
                   std::optional<double> price = std::nullopt) {
  PoiRecord r;
  r.id = id;
  r.kind = PoiKind::residential_block;
  r.location = {lat, lon};
  r.known_price = price;
  r.attributes = {{"type", "house"}, {"district", "D01"}};
  return r;
}

PoiRecord facility_at(const std::string& id, double lat, double lon,
                      FacilityCategory cat = FacilityCategory::educational) {
  PoiRecord r;
  r.id = id;
  r.kind = PoiKind::facility;
  r.category = cat;
  r.location = {lat, lon};
  return r;
}

// independent all-pairs oracle for neighbor construction
Graph brute_force_graph(const std::vector<PoiRecord>& records, double radius_km,
                        const RoadModel& road) {
  Graph graph;
  for (const auto& center : records) {
    if (center.kind != PoiKind::residential_block) continue;
    struct Hit {
      const PoiRecord* rec;
      double km;
    };
    std::vector<Hit> hits;
    for (const auto& other : records) {
      if (other.id == center.id) continue;
      const double d = haversine_km(center.location, other.location);
      if (d <= radius_km) hits.push_back({&other, d});
    }
    if (hits.empty()) continue;
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      if (a.km != b.km) return a.km < b.km;
      return a.rec->id < b.rec->id;
    });
    NeighborSet ns;
    ns.center_id = center.id;
    for (int pass = 0; pass < 2; ++pass) {
      const PoiKind want = pass == 0 ? PoiKind::residential_block : PoiKind::facility;
      for (const auto& hit : hits) {
        if (hit.rec->kind != want) continue;
        ns.neighbor_ids.push_back(hit.rec->id);
        ns.euclidean_km.push_back(hit.km);
        ns.trajectory_km.push_back(
            std::max(hit.km, road.route_km(center.location, hit.rec->location, hit.km)));
        if (pass == 0) ++ns.block_count;
      }
    }
    graph.emplace(center.id, std::move(ns));
  }
  return graph;
}

bool graphs_equal(const Graph& a, const Graph& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [center, ns] : a) {
    const auto it = b.find(center);
    if (it == b.end()) return false;
    const NeighborSet& other = it->second;
    if (ns.neighbor_ids != other.neighbor_ids) return false;
    if (ns.block_count != other.block_count) return false;
    if (ns.euclidean_km != other.euclidean_km) return false;
    if (ns.trajectory_km != other.trajectory_km) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("loading an empty file yields an empty list") {
  const auto path = temp_file("empty.jsonl");
  write_lines(path, {});
  CHECK(load_pois(path).empty());
}

TEST_CASE("loading one valid facility line") {
  const auto path = temp_file("one_facility.jsonl");
  write_lines(path, {R"({"id":"f1","kind":"facility","category":"medical","lat":39.9,"lon":116.4,"price":null})"});
  const auto records = load_pois(path);
  REQUIRE(records.size() == 1);
  CHECK(records[0].kind == PoiKind::facility);
  CHECK(records[0].category == FacilityCategory::medical);
}

TEST_CASE("load errors carry line numbers and record ids") {
  const auto path = temp_file("bad.jsonl");

  write_lines(path, {R"({"id":"b1","kind":"residential_block","lat":39.9,"lon":116.4,"price":100.0,"attributes":{}})",
                     "{not json"});
  CHECK_THROWS_WITH(load_pois(path), Catch::Matchers::ContainsSubstring(":2:"));

  write_lines(path, {R"({"id":"b1","kind":"residential_block","lat":39.9,"lon":116.4,"price":-5.0,"attributes":{}})"});
  CHECK_THROWS_WITH(load_pois(path), Catch::Matchers::ContainsSubstring("b1"));

  write_lines(path, {R"({"id":"dup","kind":"facility","category":"scenic","lat":1.0,"lon":2.0})",
                     R"({"id":"dup","kind":"facility","category":"scenic","lat":1.1,"lon":2.0})"});
  CHECK_THROWS_WITH(load_pois(path), Catch::Matchers::ContainsSubstring("duplicate id 'dup'"));

  write_lines(path, {R"({"id":"f2","kind":"facility","lat":1.0,"lon":2.0})"});
  CHECK_THROWS_WITH(load_pois(path), Catch::Matchers::ContainsSubstring("category"));

  write_lines(path, {R"({"id":"x","kind":"shop","lat":1.0,"lon":2.0})"});
  CHECK_THROWS_WITH(load_pois(path), Catch::Matchers::ContainsSubstring("kind"));

  write_lines(path, {R"({"id":"b9","kind":"residential_block","lat":95.0,"lon":2.0,"price":null,"attributes":{}})"});
  CHECK_THROWS_AS(load_pois(path), ValidationError);

  write_lines(path, {R"({"id":"f3","kind":"facility","category":"scenic","lat":1.0,"lon":2.0,"price":7.0})"});
  CHECK_THROWS_WITH(load_pois(path), Catch::Matchers::ContainsSubstring("f3"));
}

TEST_CASE("poi records round-trip through the file format") {
  std::vector<PoiRecord> records = {
      block_at("b1", 39.90, 116.40, 52000.0),
      block_at("b2", 39.91, 116.41),
      facility_at("f1", 39.905, 116.405, FacilityCategory::wasteyard),
  };
  const auto path = temp_file("roundtrip.jsonl");
  save_pois(path, records);
  const auto loaded = load_pois(path);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].id == records[i].id);
    CHECK(loaded[i].kind == records[i].kind);
    CHECK(loaded[i].category == records[i].category);
    CHECK(loaded[i].location.lat == records[i].location.lat);
    CHECK(loaded[i].location.lon == records[i].location.lon);
    CHECK(loaded[i].known_price == records[i].known_price);
    CHECK(loaded[i].attributes == records[i].attributes);
  }
}

TEST_CASE("attribute layout reserves an unseen slot per attribute") {
  std::vector<PoiRecord> records = {block_at("b1", 0, 0), block_at("b2", 0.01, 0)};
  records[1].attributes = {{"type", "apartment"}, {"district", "D02"}};
  const auto layout = infer_layout(records);
  REQUIRE(layout.blocks.size() == 2);  // district, type (sorted)
  CHECK(layout.blocks[0].attribute == "district");
  CHECK(layout.blocks[1].attribute == "type");
  CHECK(layout.total_slots == 3 + 3);  // two seen values + unseen, per attribute

  const auto known = layout.encode({{"type", "house"}, {"district", "D01"}});
  const auto unseen = layout.encode({{"type", "loft"}, {"district", "D09"}});
  REQUIRE(known.size() == 2);
  CHECK(unseen[0] == layout.unseen_slot(0));
  CHECK(unseen[1] == layout.unseen_slot(1));
  CHECK(known[0] != unseen[0]);

  // encoding is exactly one active slot per attribute
  std::set<std::uint32_t> slots(known.begin(), known.end());
  CHECK(slots.size() == 2);
}

TEST_CASE("two nearby blocks list each other symmetrically") {
  std::vector<PoiRecord> records = {block_at("a", 0.0, 0.0),
                                    block_at("b", 0.0, 0.3 / 111.1950802335329)};
  DetourFactorRoadModel road(1.3);
  const auto result = build_graph(records, 0.5, road);
  REQUIRE(result.graph.size() == 2);
  CHECK(result.graph.at("a").neighbor_ids == std::vector<std::string>{"b"});
  CHECK(result.graph.at("b").neighbor_ids == std::vector<std::string>{"a"});
  CHECK(result.graph.at("a").block_count == 1);
}

TEST_CASE("graph undirectedness on a random city") {
  SynthConfig config;
  config.n_blocks = 120;
  config.n_facilities = 150;
  config.seed = 99;
  const auto city = generate_city(config);
  for (const auto& [center, ns] : city.graph) {
    for (std::size_t j = 0; j < ns.block_count; ++j) {
      const auto& other = city.graph.at(ns.neighbor_ids[j]);
      const auto& ids = other.neighbor_ids;
      CHECK(std::find(ids.begin(), ids.end(), center) != ids.end());
    }
  }
}

TEST_CASE("mean neighbor count is nondecreasing in the radius") {
  SynthConfig config;
  config.n_blocks = 100;
  config.n_facilities = 300;
  config.seed = 5;
  const auto city = generate_city(config);
  DetourFactorRoadModel road(1.3);
  double prev_mean = 0.0;
  for (double radius : {0.5, 1.0}) {
    const auto result = build_graph(city.records, radius, road);
    double mean = 0.0;
    for (const auto& [center, ns] : result.graph) {
      (void)center;
      mean += static_cast<double>(ns.size());
    }
    mean /= static_cast<double>(result.graph.size());
    CHECK(mean >= prev_mean);
    prev_mean = mean;
  }
}

TEST_CASE("graph construction matches the all-pairs oracle") {
  SynthConfig config;
  config.n_blocks = 200;
  config.n_facilities = 300;
  config.seed = 31;
  const auto city = generate_city(config);
  REQUIRE(city.records.size() == 500);
  DetourFactorRoadModel road(1.3);
  const auto fast = build_graph(city.records, 0.8, road);
  const auto slow = brute_force_graph(city.records, 0.8, road);
  CHECK(graphs_equal(fast.graph, slow));
}

TEST_CASE("graph columns respect the radius and the distance-row order") {
  SynthConfig config;
  config.n_blocks = 80;
  config.n_facilities = 200;
  config.seed = 17;
  config.road_model = "manhattan";
  const auto city = generate_city(config);
  for (const auto& [center, ns] : city.graph) {
    (void)center;
    REQUIRE(ns.size() >= 1);
    for (std::size_t j = 0; j < ns.size(); ++j) {
      CHECK(ns.euclidean_km[j] <= 1.0);
      CHECK(ns.trajectory_km[j] >= ns.euclidean_km[j]);
    }
    // each segment ascending by euclidean distance
    for (std::size_t j = 1; j < ns.block_count; ++j) {
      CHECK(ns.euclidean_km[j] >= ns.euclidean_km[j - 1]);
    }
    for (std::size_t j = ns.block_count + 1; j < ns.size(); ++j) {
      CHECK(ns.euclidean_km[j] >= ns.euclidean_km[j - 1]);
    }
  }
}

TEST_CASE("blocks with no neighbors are excluded and reported") {
  std::vector<PoiRecord> records = {
      block_at("near_a", 0.0, 0.0),
      block_at("near_b", 0.0, 0.002),
      block_at("lonely", 5.0, 5.0),
  };
  DetourFactorRoadModel road(1.3);
  const auto result = build_graph(records, 0.5, road);
  CHECK(result.graph.size() == 2);
  CHECK(result.no_neighbor_blocks == std::vector<std::string>{"lonely"});
}

TEST_CASE("graph cache round-trips exactly") {
  SynthConfig config;
  config.n_blocks = 60;
  config.n_facilities = 120;
  config.seed = 8;
  const auto city = generate_city(config);
  const auto path = temp_file("graph.jsonl");
  save_graph(path, city.graph);
  const auto loaded = load_graph(path, city.records);
  CHECK(graphs_equal(city.graph, loaded));
}

TEST_CASE("graph cache rejects corrupted rows") {
  std::vector<PoiRecord> records = {block_at("a", 0.0, 0.0), block_at("b", 0.0, 0.002)};
  const auto path = temp_file("bad_graph.jsonl");
  write_lines(path, {R"({"center":"a","neighbors":["b"],"euclidean_km":[0.5],"trajectory_km":[0.2]})"});
  CHECK_THROWS_AS(load_graph(path, records), ValidationError);
  write_lines(path, {R"({"center":"a","neighbors":["ghost"],"euclidean_km":[0.5],"trajectory_km":[0.6]})"});
  CHECK_THROWS_WITH(load_graph(path, records), Catch::Matchers::ContainsSubstring("ghost"));
}

TEST_CASE("split sizes follow the 7:1:2 rule") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("b" + std::to_string(i));
  const auto split = split_dataset(ids, 3);
  CHECK(split.train_ids.size() == 7);
  CHECK(split.validation_ids.size() == 1);
  CHECK(split.test_ids.size() == 2);

  ids.clear();
  for (int i = 0; i < 29534; ++i) ids.push_back("b" + std::to_string(i));
  const auto big = split_dataset(ids, 3);
  CHECK(big.train_ids.size() == 20674);
  CHECK(big.validation_ids.size() == 2953);
  CHECK(big.test_ids.size() == 5907);
}

TEST_CASE("split is deterministic and a disjoint partition") {
  std::vector<std::string> ids;
  for (int i = 0; i < 137; ++i) ids.push_back("blk" + std::to_string(i));
  const auto a = split_dataset(ids, 42);
  const auto b = split_dataset(ids, 42);
  CHECK(a.train_ids == b.train_ids);
  CHECK(a.validation_ids == b.validation_ids);
  CHECK(a.test_ids == b.test_ids);

  for (std::uint64_t seed : {1ULL, 7ULL, 1234ULL}) {
    const auto s = split_dataset(ids, seed);
    std::set<std::string> all;
    all.insert(s.train_ids.begin(), s.train_ids.end());
    all.insert(s.validation_ids.begin(), s.validation_ids.end());
    all.insert(s.test_ids.begin(), s.test_ids.end());
    CHECK(all.size() == ids.size());
    CHECK(s.train_ids.size() + s.validation_ids.size() + s.test_ids.size() == ids.size());
  }

  const auto c = split_dataset(ids, 43);
  CHECK(a.train_ids != c.train_ids);
}

TEST_CASE("split rejects tiny datasets") {
  CHECK_THROWS_AS(split_dataset({"a", "b", "c"}, 1), ValidationError);
}
