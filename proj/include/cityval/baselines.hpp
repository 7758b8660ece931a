#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cityval/core.hpp"
#include "cityval/dataset.hpp"

namespace cityval {

inline constexpr double kMinWeightDistanceKm = 0.01;  // floor for 1/d weights

// Mean of the training prices, predicted for every block.
struct CitywideAverage {
  double mean = 0.0;
};

inline CitywideAverage fit_citywide(const std::vector<double>& train_prices) {
  if (train_prices.empty()) {
    throw ValidationError("citywide average needs at least one training price");
  }
  double sum = 0.0;
  for (double p : train_prices) sum += p;
  return CitywideAverage{sum / static_cast<double>(train_prices.size())};
}

struct BaselinePrediction {
  double price = 0.0;
  bool citywide_fallback = false;  // no priced neighbor inside the radius
};

// Unweighted mean of the priced neighbors.
inline BaselinePrediction predict_macro_avg(
    const std::string& block_id, const Graph& graph,
    const std::unordered_map<std::string, double>& known_prices,
    double citywide_mean) {
  const auto ns = graph.find(block_id);
  double sum = 0.0;
  std::size_t count = 0;
  if (ns != graph.end()) {
    for (const auto& id : ns->second.neighbor_ids) {
      const auto it = known_prices.find(id);
      if (it == known_prices.end()) continue;
      sum += it->second;
      ++count;
    }
  }
  if (count == 0) return {citywide_mean, true};
  return {sum / static_cast<double>(count), false};
}

// Inverse-distance weighted mean of the priced neighbors, weight
// 1/max(d, 0.01 km).
inline BaselinePrediction predict_micro_avg(
    const std::string& block_id, const Graph& graph,
    const std::unordered_map<std::string, double>& known_prices,
    double citywide_mean) {
  const auto ns = graph.find(block_id);
  double numer = 0.0, denom = 0.0;
  if (ns != graph.end()) {
    const NeighborSet& n = ns->second;
    for (std::size_t j = 0; j < n.size(); ++j) {
      const auto it = known_prices.find(n.neighbor_ids[j]);
      if (it == known_prices.end()) continue;
      const double weight = 1.0 / std::max(n.euclidean_km[j], kMinWeightDistanceKm);
      numer += weight * it->second;
      denom += weight;
    }
  }
  if (denom == 0.0) return {citywide_mean, true};
  return {numer / denom, false};
}

// Flat-vector regression over the same factors: the block's one-hot
// attributes, per-category facility counts and mean straight-line distances
// inside the radius, and the mean price of its priced neighbors.
class LinearRegressionBaseline {
public:
  LinearRegressionBaseline(const AttributeLayout& layout) : layout_(layout) {
    feature_count_ = layout.total_slots + 2 * kFacilityCategoryCount + 1 + 1;
  }

  std::size_t feature_count() const { return feature_count_; }
  const std::vector<double>& weights() const { return weights_; }

  std::vector<double> features(
      const PoiRecord& block, const Graph& graph,
      const std::unordered_map<std::string, const PoiRecord*>& by_id,
      const std::unordered_map<std::string, double>& known_prices) const {
    std::vector<double> x(feature_count_, 0.0);
    for (std::uint32_t slot : layout_.encode(block.attributes)) x[slot] = 1.0;

    const std::size_t count_base = layout_.total_slots;
    const std::size_t dist_base = count_base + kFacilityCategoryCount;
    const std::size_t price_slot = dist_base + kFacilityCategoryCount;
    const std::size_t intercept_slot = price_slot + 1;
    x[intercept_slot] = 1.0;

    const auto ns = graph.find(block.id);
    if (ns == graph.end()) return x;
    const NeighborSet& n = ns->second;

    double price_sum = 0.0;
    std::size_t price_count = 0;
    for (std::size_t j = 0; j < n.size(); ++j) {
      const auto rec = by_id.find(n.neighbor_ids[j]);
      if (rec == by_id.end()) {
        throw ValidationError("unknown neighbor id '" + n.neighbor_ids[j] + "'");
      }
      if (rec->second->kind == PoiKind::facility) {
        const auto cat = static_cast<std::size_t>(*rec->second->category);
        x[count_base + cat] += 1.0;
        x[dist_base + cat] += n.euclidean_km[j];
      } else {
        const auto it = known_prices.find(n.neighbor_ids[j]);
        if (it != known_prices.end()) {
          price_sum += it->second;
          ++price_count;
        }
      }
    }
    for (std::size_t c = 0; c < kFacilityCategoryCount; ++c) {
      if (x[count_base + c] > 0.0) x[dist_base + c] /= x[count_base + c];
    }
    if (price_count > 0) x[price_slot] = price_sum / static_cast<double>(price_count);
    return x;
  }

  // Least squares by normal equations with a small ridge term for rank
  // safety.
  void fit(const std::vector<std::vector<double>>& rows,
           const std::vector<double>& targets, double damping = 1e-6) {
    if (rows.empty() || rows.size() != targets.size()) {
      throw ValidationError("regression needs equal non-zero rows and targets");
    }
    const std::size_t p = feature_count_;
    std::vector<double> ata(p * p, 0.0);
    std::vector<double> atb(p, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& x = rows[r];
      if (x.size() != p) throw ValidationError("feature row has wrong length");
      for (std::size_t i = 0; i < p; ++i) {
        if (x[i] == 0.0) continue;
        atb[i] += x[i] * targets[r];
        for (std::size_t j = i; j < p; ++j) ata[i * p + j] += x[i] * x[j];
      }
    }
    for (std::size_t i = 0; i < p; ++i) {
      ata[i * p + i] += damping;
      for (std::size_t j = 0; j < i; ++j) ata[i * p + j] = ata[j * p + i];
    }
    weights_ = solve_spd(ata, atb, p);
  }

  double predict(const std::vector<double>& x) const {
    if (weights_.empty()) throw ValidationError("regression predicted before fit");
    if (x.size() != feature_count_) throw ValidationError("feature row has wrong length");
    double y = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) y += weights_[i] * x[i];
    return y;
  }

private:
  // Cholesky solve of a symmetric positive-definite system.
  static std::vector<double> solve_spd(std::vector<double> a,
                                       std::vector<double> b, std::size_t p) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double sum = a[i * p + j];
        for (std::size_t t = 0; t < j; ++t) sum -= a[i * p + t] * a[j * p + t];
        if (i == j) {
          if (sum <= 0.0 || !std::isfinite(sum)) {
            throw Error("regression system is singular even with damping");
          }
          a[i * p + j] = std::sqrt(sum);
        } else {
          a[i * p + j] = sum / a[j * p + j];
        }
      }
    }
    // forward then back substitution
    for (std::size_t i = 0; i < p; ++i) {
      double sum = b[i];
      for (std::size_t t = 0; t < i; ++t) sum -= a[i * p + t] * b[t];
      b[i] = sum / a[i * p + i];
    }
    for (std::size_t ri = p; ri-- > 0;) {
      double sum = b[ri];
      for (std::size_t t = ri + 1; t < p; ++t) sum -= a[t * p + ri] * b[t];
      b[ri] = sum / a[ri * p + ri];
    }
    return b;
  }

  AttributeLayout layout_;
  std::size_t feature_count_ = 0;
  std::vector<double> weights_;
};

}  // namespace cityval
