#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cityval/core.hpp"
#include "cityval/dataset.hpp"
#include "cityval/model.hpp"

namespace cityval {

// Defaults tuned on the synthetic suite (prices around 5e4 currency units,
// a few thousand training blocks). Price gradients and parameter gradients
// differ by many orders of magnitude, hence one rate per group.
struct LearningRates {
  double theta = 1e-11;
  double phi = 3e-10;
  double prices = 3.0;
};

struct TrainingConfig {
  double radius_km = 1.0;
  LearningRates rates;
  std::size_t max_epochs = 1000;
  double convergence_threshold = 0.0;  // epsilon on total loss
  std::size_t shard_count = 1;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(radius_km > 0.0)) throw ConfigError("radius_km must be positive");
    if (!(rates.theta > 0.0) || !(rates.phi > 0.0) || !(rates.prices > 0.0)) {
      throw ConfigError("learning rates must be positive");
    }
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (convergence_threshold < 0.0) throw ConfigError("convergence_threshold must be >= 0");
    if (shard_count < 1) throw ConfigError("shard_count must be >= 1");
  }

  json to_json() const {
    return json{{"radius_km", radius_km},
                {"learning_rate_theta", rates.theta},
                {"learning_rate_phi", rates.phi},
                {"learning_rate_prices", rates.prices},
                {"max_epochs", max_epochs},
                {"convergence_threshold", convergence_threshold},
                {"shard_count", shard_count},
                {"seed", seed}};
  }

  static TrainingConfig from_json(const json& j) {
    TrainingConfig c;
    if (j.contains("radius_km")) c.radius_km = j["radius_km"].get<double>();
    if (j.contains("learning_rate_theta")) c.rates.theta = j["learning_rate_theta"].get<double>();
    if (j.contains("learning_rate_phi")) c.rates.phi = j["learning_rate_phi"].get<double>();
    if (j.contains("learning_rate_prices")) c.rates.prices = j["learning_rate_prices"].get<double>();
    if (j.contains("max_epochs")) c.max_epochs = j["max_epochs"].get<std::size_t>();
    if (j.contains("convergence_threshold")) c.convergence_threshold = j["convergence_threshold"].get<double>();
    if (j.contains("shard_count")) c.shard_count = j["shard_count"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    c.validate();
    return c;
  }

  std::string digest() const { return fnv1a64_hex(to_json().dump()); }
};

// Gradient accumulation happens in fixed blocks of 64 instances. Block
// boundaries depend only on instance order, never on the shard count or on
// worker scheduling, and the reduce folds block partials in block order —
// that is what makes the reduced totals bit-identical for any sharding.
inline constexpr std::size_t kAccumBlock = 64;

struct ChunkGrad {
  std::vector<double> values;  // dense over the flat variable space
  double loss = 0.0;
};

// Keyed gradient sums for one shard's instances, held per accumulation
// block, plus the shard's loss contribution.
struct GradientShard {
  std::size_t first_chunk = 0;
  std::vector<ChunkGrad> chunks;

  double loss() const {
    double total = 0.0;
    for (const auto& c : chunks) total += c.loss;
    return total;
  }

  // touched variables, for key-oriented assertions
  std::vector<std::uint32_t> keys() const {
    std::vector<std::uint32_t> out;
    if (chunks.empty()) return out;
    const std::size_t n = chunks.front().values.size();
    for (std::uint32_t v = 0; v < n; ++v) {
      for (const auto& c : chunks) {
        if (c.values[v] != 0.0) {
          out.push_back(v);
          break;
        }
      }
    }
    return out;
  }
};

struct TotalGradient {
  std::vector<double> values;
  double loss = 0.0;
};

inline std::size_t chunk_count(std::size_t n_instances) {
  return (n_instances + kAccumBlock - 1) / kAccumBlock;
}

namespace detail {

inline void map_chunks(const std::vector<CompiledInstance>& instances,
                       const ModelParams& params, std::size_t first_chunk,
                       std::size_t n_chunks, GradientShard& out) {
  out.first_chunk = first_chunk;
  out.chunks.resize(n_chunks);
  const std::size_t n_vars = params.total_vars();
  for (std::size_t c = 0; c < n_chunks; ++c) {
    ChunkGrad& chunk = out.chunks[c];
    chunk.values.assign(n_vars, 0.0);
    const std::size_t begin = (first_chunk + c) * kAccumBlock;
    const std::size_t end = std::min(begin + kAccumBlock, instances.size());
    for (std::size_t i = begin; i < end; ++i) {
      const double loss = instance_loss_and_grad_into(
          instances[i], params,
          [&chunk](std::uint32_t var, double g) { chunk.values[var] += g; });
      if (!std::isfinite(loss)) {
        throw Error("non-finite loss at instance '" + instances[i].id + "'");
      }
      chunk.loss += loss;
    }
    for (double g : chunk.values) {
      if (!std::isfinite(g)) {
        throw Error("non-finite gradient in instances '" +
                    instances[begin].id + "'..'" + instances[end - 1].id + "'");
      }
    }
  }
}

}  // namespace detail

// Map: per-instance gradients, accumulated per variable within each shard.
// Params are read-only for the whole phase, so shards run concurrently.
inline std::vector<GradientShard> map_phase(
    const std::vector<CompiledInstance>& instances, const ModelParams& params,
    std::size_t shard_count) {
  if (shard_count < 1) throw ConfigError("shard_count must be >= 1");
  const std::size_t n_chunks = chunk_count(instances.size());
  shard_count = std::min(shard_count, std::max<std::size_t>(1, n_chunks));

  std::vector<GradientShard> shards(shard_count);
  if (n_chunks == 0) return shards;

  const std::size_t per_shard = (n_chunks + shard_count - 1) / shard_count;
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(shard_count);
  for (std::size_t s = 0; s < shard_count; ++s) {
    const std::size_t first = s * per_shard;
    const std::size_t count = first >= n_chunks ? 0 : std::min(per_shard, n_chunks - first);
    workers.emplace_back([&, s, first, count] {
      try {
        detail::map_chunks(instances, params, first, count, shards[s]);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return shards;
}

// Reduce: per-variable sums in canonical order — accumulation blocks sorted
// by position, independent of how they were distributed or of the order the
// shard list arrives in.
inline TotalGradient reduce_phase(const std::vector<GradientShard>& shards) {
  std::vector<const GradientShard*> ordered;
  std::size_t n_vars = 0;
  for (const auto& s : shards) {
    if (s.chunks.empty()) continue;
    ordered.push_back(&s);
    n_vars = std::max(n_vars, s.chunks.front().values.size());
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const GradientShard* a, const GradientShard* b) {
              return a->first_chunk < b->first_chunk;
            });

  TotalGradient total;
  total.values.assign(n_vars, 0.0);
  for (const GradientShard* s : ordered) {
    for (const auto& chunk : s->chunks) {
      for (std::size_t v = 0; v < chunk.values.size(); ++v) {
        total.values[v] += chunk.values[v];
      }
      total.loss += chunk.loss;
    }
  }
  return total;
}

// v <- v - rate * g per variable group; prices are projected back to >= 0.
inline void apply_update(ModelParams& params, const TotalGradient& total,
                         const TrainingConfig& config) {
  const std::size_t phi_base = params.phi_offset();
  const std::size_t price_base = params.price_offset();
  for (std::size_t v = 0; v < total.values.size(); ++v) {
    const double g = total.values[v];
    if (v < phi_base) {
      params.theta[v] -= config.rates.theta * g;
    } else if (v < price_base) {
      params.phi[v - phi_base] -= config.rates.phi * g;
    } else {
      double& p = params.prices[v - price_base];
      p = std::max(0.0, p - config.rates.prices * g);
    }
  }
}

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0.0;
  double grad_norm_theta = 0.0;
  double grad_norm_phi = 0.0;
  double grad_norm_prices = 0.0;
  double seconds = 0.0;
  std::optional<double> validation_mae;

  json to_json() const {
    json j{{"epoch", epoch},
           {"loss", loss},
           {"grad_norm_theta", grad_norm_theta},
           {"grad_norm_phi", grad_norm_phi},
           {"grad_norm_prices", grad_norm_prices},
           {"seconds", seconds}};
    if (validation_mae) j["validation_mae"] = *validation_mae;
    return j;
  }
};

struct TrainResult {
  ModelParams params;       // after the last epoch
  ModelParams best_params;  // best validation MAE (== params when no validation)
  double best_validation_mae = std::numeric_limits<double>::infinity();
  std::vector<EpochReport> epochs;
};

inline std::vector<CompiledInstance> compile_instances(
    const std::vector<PoiRecord>& records, const Graph& graph,
    const std::vector<std::string>& block_ids, const ModelParams& params,
    const std::unordered_map<std::string, double>& known_prices) {
  std::unordered_map<std::string, const PoiRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::vector<CompiledInstance> out;
  out.reserve(block_ids.size());
  std::vector<std::string> ids = block_ids;
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    const auto ns = graph.find(id);
    if (ns == graph.end()) continue;  // no neighbors inside the radius
    const auto rec = by_id.find(id);
    if (rec == by_id.end()) throw ValidationError("unknown block id '" + id + "'");
    out.push_back(compile_instance(*rec->second, ns->second, params, known_prices));
  }
  return out;
}

inline double mean_absolute_error_over(const std::vector<CompiledInstance>& instances,
                                       const ModelParams& params) {
  if (instances.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& inst : instances) {
    sum += std::abs(forward_compiled(inst, params).prediction - inst.truth);
  }
  return sum / static_cast<double>(instances.size());
}

// Full-batch loop: map, reduce, update, until the total loss drops below the
// threshold or the epoch budget runs out. A loss exceeding ten times the
// first epoch's is treated as divergence.
inline TrainResult train(
    const std::vector<PoiRecord>& records, const Graph& graph,
    const DatasetSplit& split, const AttributeLayout& layout,
    const TrainingConfig& config,
    const std::function<void(const EpochReport&)>& on_epoch = nullptr) {
  config.validate();
  const auto known_prices = price_map(records, split.train_ids);
  if (known_prices.empty()) throw ValidationError("empty training split");

  ModelParams params = init_params(records, layout, known_prices);
  const auto train_instances =
      compile_instances(records, graph, split.train_ids, params, known_prices);
  if (train_instances.empty()) {
    throw ValidationError("no training block has neighbors inside the radius");
  }
  const auto val_instances =
      compile_instances(records, graph, split.validation_ids, params, known_prices);

  TrainResult result;
  double initial_loss = 0.0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto shards = map_phase(train_instances, params, config.shard_count);
    const TotalGradient total = reduce_phase(shards);
    if (epoch == 1) initial_loss = total.loss;
    if (total.loss > 10.0 * initial_loss && initial_loss > 0.0) {
      throw Error("training diverged: epoch " + std::to_string(epoch) +
                  " loss " + std::to_string(total.loss) + " exceeds 10x initial " +
                  std::to_string(initial_loss));
    }
    apply_update(params, total, config);

    EpochReport report;
    report.epoch = epoch;
    report.loss = total.loss;
    const std::size_t phi_base = params.phi_offset();
    const std::size_t price_base = params.price_offset();
    double nt = 0.0, np = 0.0, nu = 0.0;
    for (std::size_t v = 0; v < total.values.size(); ++v) {
      const double g2 = total.values[v] * total.values[v];
      if (v < phi_base) {
        nt += g2;
      } else if (v < price_base) {
        np += g2;
      } else {
        nu += g2;
      }
    }
    report.grad_norm_theta = std::sqrt(nt);
    report.grad_norm_phi = std::sqrt(np);
    report.grad_norm_prices = std::sqrt(nu);

    if (!val_instances.empty()) {
      const double val_mae = mean_absolute_error_over(val_instances, params);
      report.validation_mae = val_mae;
      if (val_mae < result.best_validation_mae) {
        result.best_validation_mae = val_mae;
        result.best_params = params;
      }
    }
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(report);
    if (on_epoch) on_epoch(report);

    if (total.loss < config.convergence_threshold) break;
  }
  result.params = params;
  if (val_instances.empty()) result.best_params = result.params;
  return result;
}

}  // namespace cityval
