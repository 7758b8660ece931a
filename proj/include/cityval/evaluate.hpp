#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cityval/baselines.hpp"
#include "cityval/core.hpp"
#include "cityval/dataset.hpp"
#include "cityval/metrics.hpp"
#include "cityval/model.hpp"
#include "cityval/trainer.hpp"

namespace cityval {

// Known prices visible to a predictor: the training split only, so neither
// validation nor test labels ever enter a feature.
inline std::unordered_map<std::string, double> training_prices(
    const std::vector<PoiRecord>& records, const DatasetSplit& split) {
  return price_map(records, split.train_ids);
}

struct TestPredictions {
  std::vector<std::string> ids;  // covered test blocks, ascending
  std::vector<double> truth;
  std::vector<double> predicted;
  std::size_t uncovered = 0;
};

inline EvalReport to_report(const std::string& method, const TestPredictions& p) {
  return evaluate_predictions(method, p.truth, p.predicted, p.uncovered);
}

inline TestPredictions predict_model_on_split(
    const std::vector<PoiRecord>& records, const Graph& graph,
    const std::vector<std::string>& eval_ids, const ModelParams& params,
    const std::unordered_map<std::string, double>& known_prices) {
  std::unordered_map<std::string, const PoiRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  TestPredictions out;
  std::vector<std::string> ids = eval_ids;
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    const auto ns = graph.find(id);
    if (ns == graph.end()) {
      ++out.uncovered;
      continue;
    }
    const PoiRecord& block = *by_id.at(id);
    if (!block.known_price) {
      throw ValidationError("evaluation block '" + id + "' has no ground-truth price");
    }
    out.ids.push_back(id);
    out.truth.push_back(*block.known_price);
    out.predicted.push_back(forward(block, ns->second, params, known_prices).prediction);
  }
  return out;
}

inline const std::vector<std::string>& baseline_tags() {
  static const std::vector<std::string> tags = {"citywide_avg", "macro_avg",
                                                "micro_avg", "linear_regression"};
  return tags;
}

inline TestPredictions predict_baseline_on_split(
    const std::string& tag, const std::vector<PoiRecord>& records,
    const Graph& graph, const DatasetSplit& split,
    const std::vector<std::string>& eval_ids, const AttributeLayout& layout) {
  std::unordered_map<std::string, const PoiRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  const auto known = training_prices(records, split);

  std::vector<double> train_prices;
  train_prices.reserve(split.train_ids.size());
  for (const auto& id : split.train_ids) train_prices.push_back(known.at(id));
  const CitywideAverage citywide = fit_citywide(train_prices);

  LinearRegressionBaseline regression(layout);
  if (tag == "linear_regression") {
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    for (const auto& id : split.train_ids) {
      rows.push_back(regression.features(*by_id.at(id), graph, by_id, known));
      targets.push_back(known.at(id));
    }
    regression.fit(rows, targets);
  }

  TestPredictions out;
  std::vector<std::string> ids = eval_ids;
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    const PoiRecord& block = *by_id.at(id);
    if (!block.known_price) {
      throw ValidationError("evaluation block '" + id + "' has no ground-truth price");
    }
    double prediction = 0.0;
    if (tag == "citywide_avg") {
      prediction = citywide.mean;
    } else if (tag == "macro_avg") {
      prediction = predict_macro_avg(id, graph, known, citywide.mean).price;
    } else if (tag == "micro_avg") {
      prediction = predict_micro_avg(id, graph, known, citywide.mean).price;
    } else if (tag == "linear_regression") {
      prediction = regression.predict(regression.features(block, graph, by_id, known));
    } else {
      throw ConfigError("unknown baseline '" + tag + "'");
    }
    out.ids.push_back(id);
    out.truth.push_back(*block.known_price);
    out.predicted.push_back(prediction);
  }
  return out;
}

}  // namespace cityval
