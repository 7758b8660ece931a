#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cityval/core.hpp"
#include "cityval/dataset.hpp"

namespace cityval {

inline constexpr int kDistanceTypes = 2;  // straight line, route
inline constexpr int kSnapshotVersion = 1;

// All learnable state: attribute weights, distance-type weights, and the
// price table for facilities and blocks without an observed price.
//
// The flat variable index space, used by gradients and the trainer, is
// [theta slots | phi (2) | price table entries].
struct ModelParams {
  AttributeLayout layout;
  std::vector<double> theta;          // one weight per one-hot slot
  std::array<double, 2> phi{0.0, 0.0};
  std::vector<std::string> price_ids;  // sorted; defines price indexing
  std::vector<double> prices;          // currency per m^2, kept >= 0

  std::unordered_map<std::string, std::uint32_t> price_index;

  std::size_t phi_offset() const { return theta.size(); }
  std::size_t price_offset() const { return theta.size() + kDistanceTypes; }
  std::size_t total_vars() const { return price_offset() + prices.size(); }

  void rebuild_price_index() {
    price_index.clear();
    price_index.reserve(price_ids.size());
    for (std::uint32_t i = 0; i < price_ids.size(); ++i) {
      price_index.emplace(price_ids[i], i);
    }
  }

  const double* find_price(const std::string& id) const {
    const auto it = price_index.find(id);
    return it == price_index.end() ? nullptr : &prices[it->second];
  }

  double flat_get(std::size_t var) const {
    if (var < theta.size()) return theta[var];
    if (var < price_offset()) return phi[var - phi_offset()];
    return prices[var - price_offset()];
  }

  void flat_set(std::size_t var, double value) {
    if (var < theta.size()) {
      theta[var] = value;
    } else if (var < price_offset()) {
      phi[var - phi_offset()] = value;
    } else {
      prices[var - price_offset()] = value;
    }
  }
};

// Neutral start: every learnable price at the mean observed price, theta and
// phi at zero (scale 1/2, uniform distance weights).
inline ModelParams init_params(
    const std::vector<PoiRecord>& records, const AttributeLayout& layout,
    const std::unordered_map<std::string, double>& known_prices) {
  double sum = 0.0;
  for (const auto& [id, price] : known_prices) {
    (void)id;
    sum += price;
  }
  const double mean =
      known_prices.empty() ? 0.0 : sum / static_cast<double>(known_prices.size());

  ModelParams params;
  params.layout = layout;
  params.theta.assign(layout.total_slots, 0.0);
  for (const auto& r : records) {
    if (r.kind == PoiKind::facility || known_prices.count(r.id) == 0) {
      params.price_ids.push_back(r.id);
    }
  }
  std::sort(params.price_ids.begin(), params.price_ids.end());
  params.prices.assign(params.price_ids.size(), mean);
  params.rebuild_price_index();
  return params;
}

// Softmax over the per-neighbor distance scores phi . D[:,j], computed with
// max subtraction. Entries are in (0,1) and sum to 1.
inline std::vector<double> distance_weights(const std::vector<double>& euclid,
                                            const std::vector<double>& traj,
                                            const std::array<double, 2>& phi) {
  const std::size_t k = euclid.size();
  if (k == 0) throw ValidationError("distance weights need at least one neighbor");
  if (traj.size() != k) throw ValidationError("distance rows differ in length");
  std::vector<double> f(k);
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    f[j] = phi[0] * euclid[j] + phi[1] * traj[j];
    max_score = std::max(max_score, f[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    f[j] = std::exp(f[j] - max_score);
    z += f[j];
  }
  for (std::size_t j = 0; j < k; ++j) f[j] /= z;
  return f;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Multiplicative discount in (0,1) from the block's own attributes.
inline double attribute_scale(const std::vector<std::uint32_t>& active_slots,
                              const std::vector<double>& theta) {
  double z = 0.0;
  for (std::uint32_t slot : active_slots) {
    if (slot >= theta.size()) {
      throw ValidationError("attribute slot " + std::to_string(slot) +
                            " outside weight layout of size " +
                            std::to_string(theta.size()));
    }
    z += theta[slot];
  }
  return sigmoid(z);
}

// Neighbor values in column order plus a parallel mask: learnable entries
// carry their price-table index, fixed entries -1.
struct AssembledW {
  std::vector<double> w;
  std::vector<std::int32_t> learnable;  // price index, or -1 when fixed
};

inline AssembledW assemble_w(
    const NeighborSet& nbrs, const ModelParams& params,
    const std::unordered_map<std::string, double>& known_prices) {
  AssembledW out;
  out.w.reserve(nbrs.size());
  out.learnable.reserve(nbrs.size());
  for (const auto& id : nbrs.neighbor_ids) {
    const auto known = known_prices.find(id);
    if (known != known_prices.end()) {
      out.w.push_back(known->second);
      out.learnable.push_back(-1);
      continue;
    }
    const auto it = params.price_index.find(id);
    if (it == params.price_index.end()) {
      throw ValidationError("neighbor '" + id +
                            "' is neither a known price nor a learnable value");
    }
    out.w.push_back(params.prices[it->second]);
    out.learnable.push_back(static_cast<std::int32_t>(it->second));
  }
  return out;
}

// One training/prediction instance in evaluation-ready form.
struct CompiledInstance {
  std::string id;
  double truth = 0.0;                     // observed price; 0 when unpriced
  bool has_truth = false;
  std::vector<std::uint32_t> slots;       // active theta slots
  std::vector<std::int32_t> w_learnable;  // price index, or -1
  std::vector<double> w_fixed;            // value when fixed; else 0
  std::vector<double> d_euclid;
  std::vector<double> d_traj;

  std::size_t k() const { return w_learnable.size(); }
};

inline CompiledInstance compile_instance(
    const PoiRecord& block, const NeighborSet& nbrs, const ModelParams& params,
    const std::unordered_map<std::string, double>& known_prices) {
  if (block.kind != PoiKind::residential_block) {
    throw ValidationError("'" + block.id + "' is not a residential block");
  }
  CompiledInstance inst;
  inst.id = block.id;
  if (block.known_price) {
    inst.truth = *block.known_price;
    inst.has_truth = true;
  }
  inst.slots = params.layout.encode(block.attributes);
  const AssembledW aw = assemble_w(nbrs, params, known_prices);
  inst.w_learnable = aw.learnable;
  inst.w_fixed.resize(aw.w.size(), 0.0);
  for (std::size_t j = 0; j < aw.w.size(); ++j) {
    if (aw.learnable[j] < 0) inst.w_fixed[j] = aw.w[j];
  }
  inst.d_euclid = nbrs.euclidean_km;
  inst.d_traj = nbrs.trajectory_km;
  return inst;
}

// Per-block forward pass with retained intermediates.
struct ForwardTrace {
  std::vector<double> w;
  std::vector<double> f;
  double scale = 0.0;       // S
  double prediction = 0.0;  // h_hat
};

inline ForwardTrace forward_compiled(const CompiledInstance& inst,
                                     const ModelParams& params) {
  const std::size_t k = inst.k();
  if (k == 0) throw ValidationError("instance '" + inst.id + "' has no neighbors");
  ForwardTrace trace;
  trace.w.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    trace.w[j] = inst.w_learnable[j] >= 0
                     ? params.prices[static_cast<std::size_t>(inst.w_learnable[j])]
                     : inst.w_fixed[j];
  }
  trace.f = distance_weights(inst.d_euclid, inst.d_traj, params.phi);
  trace.scale = attribute_scale(inst.slots, params.theta);
  double inner = 0.0;
  for (std::size_t j = 0; j < k; ++j) inner += trace.w[j] * trace.f[j];
  trace.prediction = trace.scale * inner;
  return trace;
}

inline ForwardTrace forward(const PoiRecord& block, const NeighborSet& nbrs,
                            const ModelParams& params,
                            const std::unordered_map<std::string, double>& known_prices) {
  return forward_compiled(compile_instance(block, nbrs, params, known_prices), params);
}

// Squared loss of one instance and its gradient, streamed into sink(var, g)
// over the flat variable space. Gradients:
//   d/du_j   = 2 (h_hat - h) S F_j                      (learnable values)
//   d/dtheta = 2 (h_hat - h) S (1 - S) x_slot (w . F)
//   d/dphi_r = 2 (h_hat - h) S sum_j w_j F_j (D_rj - sum_i F_i D_ri)
template <typename Sink>
inline double instance_loss_and_grad_into(const CompiledInstance& inst,
                                          const ModelParams& params,
                                          Sink&& sink) {
  if (!inst.has_truth) {
    throw ValidationError("instance '" + inst.id + "' has no known price");
  }
  const ForwardTrace trace = forward_compiled(inst, params);
  const double err = trace.prediction - inst.truth;
  const double loss = err * err;
  const double common = 2.0 * err * trace.scale;

  const std::size_t k = inst.k();
  double inner = 0.0, mean_e = 0.0, mean_t = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    inner += trace.w[j] * trace.f[j];
    mean_e += trace.f[j] * inst.d_euclid[j];
    mean_t += trace.f[j] * inst.d_traj[j];
  }

  const std::size_t phi_base = params.phi_offset();
  const std::size_t price_base = params.price_offset();

  const double g_theta = common * (1.0 - trace.scale) * inner;
  for (std::uint32_t slot : inst.slots) sink(slot, g_theta);

  double g_phi0 = 0.0, g_phi1 = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double wf = trace.w[j] * trace.f[j];
    g_phi0 += wf * (inst.d_euclid[j] - mean_e);
    g_phi1 += wf * (inst.d_traj[j] - mean_t);
  }
  sink(static_cast<std::uint32_t>(phi_base), common * g_phi0);
  sink(static_cast<std::uint32_t>(phi_base + 1), common * g_phi1);

  for (std::size_t j = 0; j < k; ++j) {
    if (inst.w_learnable[j] >= 0) {
      sink(static_cast<std::uint32_t>(price_base +
                                      static_cast<std::size_t>(inst.w_learnable[j])),
           common * trace.f[j]);
    }
  }
  return loss;
}

// Map-of-gradients form, keyed by flat variable index.
struct InstanceGradient {
  double loss = 0.0;
  std::map<std::uint32_t, double> entries;
};

inline InstanceGradient instance_loss_and_grad(
    const PoiRecord& block, const NeighborSet& nbrs, const ModelParams& params,
    const std::unordered_map<std::string, double>& known_prices) {
  const CompiledInstance inst = compile_instance(block, nbrs, params, known_prices);
  InstanceGradient out;
  out.loss = instance_loss_and_grad_into(
      inst, params, [&out](std::uint32_t var, double g) { out.entries[var] += g; });
  return out;
}

struct SnapshotMeta {
  double radius_km = 0.0;
  std::uint64_t seed = 0;
  std::string config_digest;
};

inline void save_params(const std::string& path, const ModelParams& params,
                        const SnapshotMeta& meta) {
  json j;
  j["version"] = kSnapshotVersion;
  j["theta"] = {{"layout", params.layout.to_json()}, {"values", params.theta}};
  j["phi"] = std::vector<double>(params.phi.begin(), params.phi.end());
  json prices = json::object();
  for (std::size_t i = 0; i < params.price_ids.size(); ++i) {
    prices[params.price_ids[i]] = params.prices[i];
  }
  j["prices"] = std::move(prices);
  j["meta"] = {{"radius_km", meta.radius_km},
               {"seed", meta.seed},
               {"config_digest", meta.config_digest}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write snapshot: " + path);
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline std::pair<ModelParams, SnapshotMeta> load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open snapshot: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("corrupt snapshot " + path + ": " + e.what());
  }
  if (!j.contains("version") || !j["version"].is_number_integer()) {
    throw ValidationError("corrupt snapshot " + path + ": missing version");
  }
  if (j["version"].get<int>() != kSnapshotVersion) {
    throw ValidationError("snapshot " + path + " has unsupported version " +
                          std::to_string(j["version"].get<int>()));
  }
  ModelParams params;
  SnapshotMeta meta;
  try {
    params.layout = AttributeLayout::from_json(j.at("theta").at("layout"));
    params.theta = j.at("theta").at("values").get<std::vector<double>>();
    const auto phi = j.at("phi").get<std::vector<double>>();
    if (phi.size() != kDistanceTypes) {
      throw ValidationError("snapshot " + path + ": phi must have 2 entries");
    }
    params.phi = {phi[0], phi[1]};
    for (const auto& [id, value] : j.at("prices").items()) {
      params.price_ids.push_back(id);
      params.prices.push_back(value.get<double>());
    }
    meta.radius_km = j.at("meta").at("radius_km").get<double>();
    meta.seed = j.at("meta").at("seed").get<std::uint64_t>();
    meta.config_digest = j.at("meta").at("config_digest").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError("corrupt snapshot " + path + ": " + e.what());
  }
  if (params.theta.size() != params.layout.total_slots) {
    throw ValidationError("snapshot " + path + ": weight count does not match layout");
  }
  params.rebuild_price_index();
  return {std::move(params), std::move(meta)};
}

}  // namespace cityval
