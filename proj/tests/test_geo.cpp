#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cityval/core.hpp"
#include "cityval/geo.hpp"

using namespace cityval;

namespace {

// independent oracle: linear scan over every point
std::vector<IdDistance> brute_force_query(
    const std::vector<std::pair<std::string, GeoPoint>>& items,
    const GeoPoint& center, double radius_km, const std::string& exclude_id) {
  std::vector<IdDistance> out;
  for (const auto& [id, point] : items) {
    if (id == exclude_id) continue;
    const double d = haversine_km(center, point);
    if (d <= radius_km) out.push_back({id, d});
  }
  std::sort(out.begin(), out.end(), [](const IdDistance& a, const IdDistance& b) {
    if (a.km != b.km) return a.km < b.km;
    return a.id < b.id;
  });
  return out;
}

bool same_results(const std::vector<IdDistance>& a, const std::vector<IdDistance>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].km != b[i].km) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("haversine identity and equator degree") {
  CHECK(haversine_km({39.9, 116.4}, {39.9, 116.4}) == 0.0);
  // one degree of longitude on the equator
  CHECK_THAT(haversine_km({0.0, 0.0}, {0.0, 1.0}),
             Catch::Matchers::WithinAbs(111.195, 0.001));
}

TEST_CASE("haversine symmetry on random pairs") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const GeoPoint a{rng.uniform(-80, 80), rng.uniform(-170, 170)};
    const GeoPoint b{rng.uniform(-80, 80), rng.uniform(-170, 170)};
    CHECK(haversine_km(a, b) == haversine_km(b, a));
  }
}

TEST_CASE("haversine rejects out-of-range coordinates") {
  CHECK_THROWS_AS(haversine_km({91.0, 0.0}, {0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(haversine_km({0.0, 181.0}, {0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(haversine_km({std::nan(""), 0.0}, {0.0, 0.0}), ValidationError);
}

TEST_CASE("haversine is a metric up to floating tolerance") {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const GeoPoint a{rng.uniform(-80, 80), rng.uniform(-170, 170)};
    const GeoPoint b{rng.uniform(-80, 80), rng.uniform(-170, 170)};
    const GeoPoint c{rng.uniform(-80, 80), rng.uniform(-170, 170)};
    const double ab = haversine_km(a, b);
    const double bc = haversine_km(b, c);
    const double ac = haversine_km(a, c);
    REQUIRE(ab >= 0.0);
    REQUIRE(ac <= ab + bc + 1e-9 * (ab + bc + 1.0));
  }
}

TEST_CASE("radius query on an empty city") {
  SpatialIndex index({}, 1.0);
  CHECK(index.radius_query({0.0, 0.0}, 0.5).empty());
}

TEST_CASE("radius query on a 3x3 grid finds the axis-adjacent points") {
  // grid spacing 0.4 km along meridians/parallels around (40, 116)
  const double dlat = 0.4 / 111.0;
  const double dlon = 0.4 / (111.0 * std::cos(40.0 * M_PI / 180.0));
  std::vector<std::pair<std::string, GeoPoint>> items;
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      items.emplace_back("p" + std::to_string(i + 1) + std::to_string(j + 1),
                         GeoPoint{40.0 + i * dlat, 116.0 + j * dlon});
    }
  }
  SpatialIndex index(items, 0.5);
  const auto hits = index.radius_query({40.0, 116.0}, 0.5, "p11");
  REQUIRE(hits.size() == 4);
  for (const auto& hit : hits) {
    CHECK((hit.id == "p01" || hit.id == "p21" || hit.id == "p10" || hit.id == "p12"));
    CHECK_THAT(hit.km, Catch::Matchers::WithinAbs(0.4, 0.005));
  }
  CHECK(same_results(hits, brute_force_query(items, {40.0, 116.0}, 0.5, "p11")));
}

TEST_CASE("radius query equals a linear scan") {
  Rng rng(23);
  // several random cities, 10k queries total
  for (int city = 0; city < 20; ++city) {
    const double lat0 = rng.uniform(-60, 60);
    const double lon0 = rng.uniform(-160, 160);
    const double span = rng.uniform(0.05, 0.3);
    std::vector<std::pair<std::string, GeoPoint>> items;
    const int n = city == 0 ? 1000 : 300;
    for (int i = 0; i < n; ++i) {
      items.emplace_back("poi" + std::to_string(i),
                         GeoPoint{lat0 + rng.uniform(0, span), lon0 + rng.uniform(0, span)});
    }
    const double max_radius = 3.0;
    SpatialIndex index(items, max_radius);
    const int queries = city == 0 ? 550 : 500;
    for (int q = 0; q < queries; ++q) {
      const GeoPoint center{lat0 + rng.uniform(0, span), lon0 + rng.uniform(0, span)};
      const double radius = rng.uniform(0.05, max_radius);
      const auto expected = brute_force_query(items, center, radius, "poi0");
      const auto actual = index.radius_query(center, radius, "poi0");
      REQUIRE(same_results(actual, expected));
    }
  }
}

TEST_CASE("radius query rejects a radius above the index maximum") {
  SpatialIndex index({{"a", {0.0, 0.0}}}, 1.0);
  CHECK_THROWS_AS(index.radius_query({0.0, 0.0}, 2.0), ConfigError);
  CHECK_THROWS_AS(index.radius_query({0.0, 0.0}, 0.0), ConfigError);
}

TEST_CASE("trajectory distance of a point to itself is zero") {
  DetourFactorRoadModel road(1.3);
  CHECK(trajectory_km({10.0, 20.0}, {10.0, 20.0}, road) == 0.0);
}

TEST_CASE("detour road model scales the straight line") {
  DetourFactorRoadModel road(1.3);
  const GeoPoint a{0.0, 0.0};
  // pick b one kilometer east
  const GeoPoint b{0.0, 1.0 / 111.1950802335329};
  const double euclid = haversine_km(a, b);
  CHECK_THAT(euclid, Catch::Matchers::WithinRel(1.0, 1e-9));
  CHECK_THAT(trajectory_km(a, b, road), Catch::Matchers::WithinRel(1.3, 1e-9));
}

TEST_CASE("fixed detour factor preserves distance order") {
  DetourFactorRoadModel road(1.3);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const GeoPoint a{rng.uniform(-60, 60), rng.uniform(-160, 160)};
    const GeoPoint b{a.lat + rng.uniform(-0.05, 0.05), a.lon + rng.uniform(-0.05, 0.05)};
    const GeoPoint c{a.lat + rng.uniform(-0.05, 0.05), a.lon + rng.uniform(-0.05, 0.05)};
    if (haversine_km(a, b) < haversine_km(a, c)) {
      CHECK(trajectory_km(a, b, road) < trajectory_km(a, c, road));
    }
  }
}

TEST_CASE("road models never undercut the straight line") {
  DetourFactorRoadModel detour(1.3);
  ManhattanRoadModel manhattan;
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const GeoPoint a{rng.uniform(-60, 60), rng.uniform(-160, 160)};
    const GeoPoint b{a.lat + rng.uniform(-0.1, 0.1), a.lon + rng.uniform(-0.1, 0.1)};
    const double euclid = haversine_km(a, b);
    const DistancePair p1{euclid, trajectory_km(a, b, detour)};
    const DistancePair p2{euclid, trajectory_km(a, b, manhattan)};
    CHECK(p1.trajectory_km >= p1.euclidean_km);
    CHECK(p2.trajectory_km >= p2.euclidean_km);
  }
}

TEST_CASE("distance pair rejects a route shorter than the straight line") {
  CHECK_THROWS_AS(DistancePair(2.0, 1.0), ValidationError);
  CHECK_THROWS_AS(DistancePair(-1.0, 1.0), ValidationError);
  CHECK_NOTHROW(DistancePair(1.0, 1.0));
}
