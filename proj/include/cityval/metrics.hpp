#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cityval/core.hpp"
#include "cityval/dataset.hpp"
#include "cityval/model.hpp"

namespace cityval {

inline void check_same_length(const std::vector<double>& truth,
                              const std::vector<double>& pred) {
  if (truth.empty() || truth.size() != pred.size()) {
    throw ValidationError("metric inputs must be non-empty and equal length");
  }
}

inline double mae(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_same_length(truth, pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sum += std::abs(truth[i] - pred[i]);
  return sum / static_cast<double>(truth.size());
}

inline double rmse(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_same_length(truth, pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - pred[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(truth.size()));
}

// 1 - SS_res / SS_tot. Undefined for a constant truth vector.
inline double r2(const std::vector<double>& truth, const std::vector<double>& pred) {
  check_same_length(truth, pred);
  double mean = 0.0;
  for (double h : truth) mean += h;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) {
    throw ValidationError("r2 is undefined for a constant truth vector");
  }
  return 1.0 - ss_res / ss_tot;
}

struct EvalReport {
  std::string method;
  double mae = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  std::size_t test_count = 0;
  std::size_t uncovered_count = 0;  // test blocks without neighbors, skipped

  json to_json() const {
    return json{{"method", method},   {"mae", mae},
                {"rmse", rmse},       {"r2", r2},
                {"m", test_count},    {"uncovered", uncovered_count}};
  }
};

inline EvalReport evaluate_predictions(const std::string& method,
                                       const std::vector<double>& truth,
                                       const std::vector<double>& pred,
                                       std::size_t uncovered = 0) {
  EvalReport report;
  report.method = method;
  report.mae = mae(truth, pred);
  report.rmse = rmse(truth, pred);
  report.r2 = r2(truth, pred);
  report.test_count = truth.size();
  report.uncovered_count = uncovered;
  return report;
}

// Plain-text table: method, MAE, RMSE, R2 — one row per report.
inline std::string render_eval_table(const std::vector<EvalReport>& reports) {
  std::size_t name_width = 6;
  for (const auto& r : reports) name_width = std::max(name_width, r.method.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width) + 2) << "Method"
      << std::right << std::setw(14) << "MAE" << std::setw(14) << "RMSE"
      << std::setw(10) << "R2" << "\n";
  out << std::string(name_width + 2 + 14 + 14 + 10, '-') << "\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(name_width) + 2) << r.method
        << std::right << std::setw(14) << format_grouped(r.mae) << std::setw(14)
        << format_grouped(r.rmse) << std::setw(10) << std::fixed
        << std::setprecision(4) << r.r2 << "\n";
    out.unsetf(std::ios::fixed);
    out << std::setprecision(6);
  }
  return out.str();
}

// Share of absolute weight mass per attribute, L1-normalized across
// attributes. An all-zero weight vector reports a uniform distribution.
inline std::map<std::string, double> attribute_preferences(
    const std::vector<double>& theta, const AttributeLayout& layout) {
  if (theta.size() != layout.total_slots) {
    throw ValidationError("weight count does not match layout");
  }
  std::map<std::string, double> mass;
  double total = 0.0;
  for (const auto& block : layout.blocks) {
    double m = 0.0;
    const std::size_t end = block.offset + block.categories.size() + 1;
    for (std::size_t s = block.offset; s < end; ++s) m += std::abs(theta[s]);
    mass[block.attribute] = m;
    total += m;
  }
  if (total == 0.0) {
    const double uniform = layout.blocks.empty()
                               ? 0.0
                               : 1.0 / static_cast<double>(layout.blocks.size());
    for (auto& [attr, m] : mass) {
      (void)attr;
      m = uniform;
    }
  } else {
    for (auto& [attr, m] : mass) {
      (void)attr;
      m /= total;
    }
  }
  return mass;
}

// Relative pull of the two distance types, L1-normalized; (0.5, 0.5) when
// both weights are zero.
inline std::array<double, 2> distance_preferences(const std::array<double, 2>& phi) {
  const double total = std::abs(phi[0]) + std::abs(phi[1]);
  if (total == 0.0) return {0.5, 0.5};
  return {std::abs(phi[0]) / total, std::abs(phi[1]) / total};
}

struct FacilityRank {
  std::string id;
  double price = 0.0;
};

struct CategoryPremium {
  FacilityCategory category = FacilityCategory::governmental;
  double mean_price = 0.0;
  double premium = 0.0;  // mean learned price minus citywide mean
  std::size_t facility_count = 0;
  std::vector<FacilityRank> ranking;  // descending price, id tiebreak
};

// Per-category premiums over the citywide mean housing price, plus the
// per-facility ranking inside each category. Categories without facilities
// are omitted.
inline std::vector<CategoryPremium> facility_premiums(
    const ModelParams& params, const std::vector<PoiRecord>& pois,
    double city_mean) {
  std::map<FacilityCategory, CategoryPremium> by_cat;
  for (const auto& r : pois) {
    if (r.kind != PoiKind::facility) continue;
    const double* price = params.find_price(r.id);
    if (!price) {
      throw ValidationError("facility '" + r.id + "' missing from the price table");
    }
    auto& entry = by_cat[*r.category];
    entry.category = *r.category;
    entry.mean_price += *price;
    entry.facility_count += 1;
    entry.ranking.push_back({r.id, *price});
  }
  std::vector<CategoryPremium> out;
  for (auto& [cat, entry] : by_cat) {
    (void)cat;
    entry.mean_price /= static_cast<double>(entry.facility_count);
    entry.premium = entry.mean_price - city_mean;
    std::sort(entry.ranking.begin(), entry.ranking.end(),
              [](const FacilityRank& a, const FacilityRank& b) {
                if (a.price != b.price) return a.price > b.price;
                return a.id < b.id;
              });
    out.push_back(std::move(entry));
  }
  return out;
}

// "(66,125)+6,082" — citywide base plus signed offset.
inline std::string format_premium(double city_mean, double premium) {
  const std::string sign = premium < 0.0 ? "-" : "+";
  return "(" + format_grouped(city_mean) + ")" + sign +
         format_grouped(std::abs(premium));
}

inline double pearson_correlation(const std::vector<double>& a,
                                  const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ValidationError("correlation needs two equal-length vectors of size >= 2");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) {
    throw ValidationError("correlation is undefined for a constant vector");
  }
  return cov / std::sqrt(va * vb);
}

inline std::vector<double> ranks_of(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&values](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(values.size(), 0.0);
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;  // mean rank of ties
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = shared;
    i = j + 1;
  }
  return ranks;
}

inline double spearman_correlation(const std::vector<double>& a,
                                   const std::vector<double>& b) {
  return pearson_correlation(ranks_of(a), ranks_of(b));
}

inline double cosine_similarity(const std::vector<double>& a,
                                const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ValidationError("cosine needs two equal-length vectors");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace cityval
