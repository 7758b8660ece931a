#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cityval/core.hpp"

namespace cityval {

inline constexpr double kEarthRadiusKm = 6371.0088;  // mean Earth radius

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]
};

inline void validate_point(const GeoPoint& p) {
  if (!std::isfinite(p.lat) || !std::isfinite(p.lon)) {
    throw ValidationError("geo point has non-finite coordinates");
  }
  if (p.lat < -90.0 || p.lat > 90.0) {
    throw ValidationError("latitude out of range: " + std::to_string(p.lat));
  }
  if (p.lon < -180.0 || p.lon > 180.0) {
    throw ValidationError("longitude out of range: " + std::to_string(p.lon));
  }
}

// Great-circle distance in kilometers.
inline double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  validate_point(a);
  validate_point(b);
  constexpr double deg = M_PI / 180.0;
  const double dlat = (b.lat - a.lat) * deg;
  const double dlon = (b.lon - a.lon) * deg;
  const double slat = std::sin(dlat / 2.0);
  const double slon = std::sin(dlon / 2.0);
  const double h = slat * slat +
                   std::cos(a.lat * deg) * std::cos(b.lat * deg) * slon * slon;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// One straight-line / on-road distance pair per graph edge, in kilometers.
// A route can never be shorter than the straight line.
struct DistancePair {
  double euclidean_km = 0.0;
  double trajectory_km = 0.0;

  DistancePair() = default;
  DistancePair(double euclid, double trajectory)
      : euclidean_km(euclid), trajectory_km(trajectory) {
    if (!std::isfinite(euclid) || !std::isfinite(trajectory)) {
      throw ValidationError("distance pair has non-finite entries");
    }
    if (euclid < 0.0 || trajectory < euclid) {
      throw ValidationError("distance pair must satisfy 0 <= euclidean <= trajectory");
    }
  }
};

// Supplies on-road distances when the dataset carries none.
class RoadModel {
public:
  virtual ~RoadModel() = default;
  virtual double route_km(const GeoPoint& a, const GeoPoint& b,
                          double euclidean_km) const = 0;
};

// route = factor * straight line; factor 1.3 is a typical urban detour ratio.
class DetourFactorRoadModel final : public RoadModel {
public:
  explicit DetourFactorRoadModel(double factor = 1.3) : factor_(factor) {
    if (!(factor >= 1.0)) {
      throw ConfigError("detour factor must be >= 1");
    }
  }
  double route_km(const GeoPoint&, const GeoPoint&,
                  double euclidean_km) const override {
    return factor_ * euclidean_km;
  }

private:
  double factor_;
};

// Axis-aligned street grid: travel along the north-south leg, then east-west.
class ManhattanRoadModel final : public RoadModel {
public:
  double route_km(const GeoPoint& a, const GeoPoint& b,
                  double) const override {
    const GeoPoint corner{b.lat, a.lon};
    return haversine_km(a, corner) + haversine_km(corner, b);
  }
};

inline double trajectory_km(const GeoPoint& a, const GeoPoint& b,
                            const RoadModel& road_model) {
  const double euclid = haversine_km(a, b);
  // clamp keeps the DistancePair invariant even if a model rounds low
  return std::max(euclid, road_model.route_km(a, b, euclid));
}

struct IdDistance {
  std::string id;
  double km = 0.0;
};

// Uniform grid over the indexed points. Cells are at least as wide as the
// largest supported query radius, so a query only ever inspects the 3x3
// block of cells around its center. Immutable once built; concurrent reads
// are safe. Assumes the data does not straddle the antimeridian.
class SpatialIndex {
public:
  SpatialIndex(std::vector<std::pair<std::string, GeoPoint>> items,
               double max_radius_km)
      : items_(std::move(items)), max_radius_km_(max_radius_km) {
    if (!(max_radius_km > 0.0)) {
      throw ConfigError("spatial index radius must be positive");
    }
    for (const auto& [id, point] : items_) {
      (void)id;
      validate_point(point);
    }
    if (items_.empty()) return;

    min_lat_ = max_lat_ = items_.front().second.lat;
    min_lon_ = max_lon_ = items_.front().second.lon;
    for (const auto& [id, point] : items_) {
      (void)id;
      min_lat_ = std::min(min_lat_, point.lat);
      max_lat_ = std::max(max_lat_, point.lat);
      min_lon_ = std::min(min_lon_, point.lon);
      max_lon_ = std::max(max_lon_, point.lon);
    }

    constexpr double km_per_deg_lat = 111.32;
    const double extreme_lat =
        std::max(std::abs(min_lat_), std::abs(max_lat_));
    // widen longitude cells near the poles so a radius never spans >1 cell
    const double cos_lat = std::max(0.01, std::cos(extreme_lat * M_PI / 180.0));
    cell_deg_lat_ = max_radius_km / km_per_deg_lat * 1.001;
    cell_deg_lon_ = max_radius_km / (km_per_deg_lat * cos_lat) * 1.001;

    for (std::uint32_t i = 0; i < items_.size(); ++i) {
      cells_[cell_key(items_[i].second)].push_back(i);
    }
  }

  double max_radius_km() const { return max_radius_km_; }
  std::size_t size() const { return items_.size(); }

  // All points within radius_km of center (ascending distance, id tiebreak),
  // excluding exclude_id.
  std::vector<IdDistance> radius_query(const GeoPoint& center,
                                       double radius_km,
                                       const std::string& exclude_id = "") const {
    validate_point(center);
    if (!(radius_km > 0.0)) {
      throw ConfigError("query radius must be positive");
    }
    if (radius_km > max_radius_km_ * (1.0 + 1e-12)) {
      throw ConfigError("query radius " + std::to_string(radius_km) +
                        " km exceeds index maximum " +
                        std::to_string(max_radius_km_) + " km");
    }
    std::vector<IdDistance> out;
    if (items_.empty()) return out;

    const auto [ci, cj] = cell_coords(center);
    for (std::int64_t di = -1; di <= 1; ++di) {
      for (std::int64_t dj = -1; dj <= 1; ++dj) {
        const auto it = cells_.find(pack(ci + di, cj + dj));
        if (it == cells_.end()) continue;
        for (std::uint32_t idx : it->second) {
          const auto& [id, point] = items_[idx];
          if (id == exclude_id) continue;
          const double d = haversine_km(center, point);
          if (d <= radius_km) out.push_back({id, d});
        }
      }
    }
    std::sort(out.begin(), out.end(), [](const IdDistance& a, const IdDistance& b) {
      if (a.km != b.km) return a.km < b.km;
      return a.id < b.id;
    });
    return out;
  }

private:
  std::pair<std::int64_t, std::int64_t> cell_coords(const GeoPoint& p) const {
    const auto i = static_cast<std::int64_t>(
        std::floor((p.lat - min_lat_) / cell_deg_lat_));
    const auto j = static_cast<std::int64_t>(
        std::floor((p.lon - min_lon_) / cell_deg_lon_));
    return {i, j};
  }

  static std::int64_t pack(std::int64_t i, std::int64_t j) {
    return (i << 32) ^ (j & 0xffffffffLL);
  }

  std::int64_t cell_key(const GeoPoint& p) const {
    const auto [i, j] = cell_coords(p);
    return pack(i, j);
  }

  std::vector<std::pair<std::string, GeoPoint>> items_;
  double max_radius_km_;
  double min_lat_ = 0.0, max_lat_ = 0.0, min_lon_ = 0.0, max_lon_ = 0.0;
  double cell_deg_lat_ = 1.0, cell_deg_lon_ = 1.0;
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> cells_;
};

}  // namespace cityval
