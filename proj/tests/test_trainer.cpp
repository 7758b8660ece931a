#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <map>

#include "cityval/synth.hpp"
#include "cityval/trainer.hpp"

using namespace cityval;

namespace {

AttributeLayout tiny_layout() {
  AttributeLayout layout;
  layout.blocks.push_back({"district", {"D01", "D02", "D03"}, 0});
  layout.blocks.push_back({"type", {"apartment", "house"}, 4});
  layout.total_slots = 7;
  return layout;
}

ModelParams random_params(Rng& rng, std::size_t n_prices) {
  ModelParams p;
  p.layout = tiny_layout();
  p.theta.resize(p.layout.total_slots);
  for (auto& t : p.theta) t = rng.uniform(-0.5, 0.5);
  p.phi = {rng.uniform(-1, 0), rng.uniform(-1, 0)};
  for (std::size_t i = 0; i < n_prices; ++i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "p%04zu", i);
    p.price_ids.push_back(buf);
    p.prices.push_back(rng.uniform(0.5, 2.0));
  }
  p.rebuild_price_index();
  return p;
}

std::vector<CompiledInstance> random_instances(Rng& rng, const ModelParams& params,
                                               std::size_t count) {
  std::vector<CompiledInstance> out;
  for (std::size_t i = 0; i < count; ++i) {
    CompiledInstance inst;
    inst.id = "inst" + std::to_string(i);
    inst.has_truth = true;
    inst.truth = rng.uniform(0.5, 2.0);
    inst.slots = {static_cast<std::uint32_t>(rng.index(4)),
                  static_cast<std::uint32_t>(4 + rng.index(3))};
    const std::size_t k = 1 + rng.index(20);
    for (std::size_t j = 0; j < k; ++j) {
      const double d = rng.uniform(0.0, 1.0);
      inst.d_euclid.push_back(d);
      inst.d_traj.push_back(d * 1.3);
      if (rng.uniform() < 0.25) {
        inst.w_learnable.push_back(-1);
        inst.w_fixed.push_back(rng.uniform(0.5, 2.0));
      } else {
        inst.w_learnable.push_back(static_cast<std::int32_t>(rng.index(params.prices.size())));
        inst.w_fixed.push_back(0.0);
      }
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace

TEST_CASE("mapping an empty training set yields zero loss") {
  Rng rng(1);
  const auto params = random_params(rng, 10);
  const auto shards = map_phase({}, params, 4);
  const auto total = reduce_phase(shards);
  CHECK(total.loss == 0.0);
  for (const double g : total.values) CHECK(g == 0.0);
}

TEST_CASE("a single shard equals the sequential per-instance sum") {
  Rng rng(5);
  const auto params = random_params(rng, 40);
  const auto instances = random_instances(rng, params, 60);  // one accumulation block

  const auto shards = map_phase(instances, params, 1);
  const auto total = reduce_phase(shards);

  std::vector<double> expected(params.total_vars(), 0.0);
  double expected_loss = 0.0;
  for (const auto& inst : instances) {
    expected_loss += instance_loss_and_grad_into(
        inst, params, [&expected](std::uint32_t var, double g) { expected[var] += g; });
  }
  CHECK(total.loss == expected_loss);
  CHECK(total.values == expected);
}

TEST_CASE("reduced totals are bit-identical across shard counts") {
  Rng rng(99);
  const auto params = random_params(rng, 300);
  const auto instances = random_instances(rng, params, 1000);

  const auto start = std::chrono::steady_clock::now();
  const auto total1 = reduce_phase(map_phase(instances, params, 1));
  const auto total2 = reduce_phase(map_phase(instances, params, 2));
  const auto total8 = reduce_phase(map_phase(instances, params, 8));
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  REQUIRE(total1.values.size() == total2.values.size());
  REQUIRE(total1.values.size() == total8.values.size());
  CHECK(total1.loss == total2.loss);
  CHECK(total1.loss == total8.loss);
  CHECK(total1.values == total2.values);
  CHECK(total1.values == total8.values);
  CHECK(seconds < 10.0);
}

TEST_CASE("permuting the shard list leaves the reduction bit-identical") {
  Rng rng(123);
  const auto params = random_params(rng, 100);
  const auto instances = random_instances(rng, params, 500);

  auto shards = map_phase(instances, params, 6);
  const auto baseline = reduce_phase(shards);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(shards);
    const auto total = reduce_phase(shards);
    CHECK(total.loss == baseline.loss);
    CHECK(total.values == baseline.values);
  }
}

TEST_CASE("reducing one shard returns its own sums") {
  Rng rng(7);
  const auto params = random_params(rng, 20);
  const auto instances = random_instances(rng, params, 30);
  auto shards = map_phase(instances, params, 1);
  REQUIRE(shards.size() == 1);
  const auto total = reduce_phase(shards);
  CHECK(total.loss == shards[0].loss());
  REQUIRE(shards[0].chunks.size() == 1);
  CHECK(total.values == shards[0].chunks[0].values);
}

TEST_CASE("shards with disjoint keys reduce to the key union") {
  GradientShard a, b;
  a.first_chunk = 0;
  a.chunks.push_back({std::vector<double>{1.5, 0.0, 0.0, 0.0}, 1.0});
  b.first_chunk = 1;
  b.chunks.push_back({std::vector<double>{0.0, 0.0, -2.5, 0.0}, 2.0});
  CHECK(a.keys() == std::vector<std::uint32_t>{0});
  CHECK(b.keys() == std::vector<std::uint32_t>{2});

  const auto total = reduce_phase({a, b});
  CHECK(total.values == std::vector<double>{1.5, 0.0, -2.5, 0.0});
  CHECK(total.loss == 3.0);
}

TEST_CASE("updates move each group by its own rate and clamp prices") {
  ModelParams params;
  params.layout = tiny_layout();
  params.theta.assign(7, 1.0);
  params.phi = {0.5, 0.5};
  params.price_ids = {"a", "b"};
  params.prices = {10.0, 1.0};
  params.rebuild_price_index();

  TrainingConfig config;
  config.rates = {0.5, 0.25, 1.0};

  TotalGradient zero;
  zero.values.assign(params.total_vars(), 0.0);
  auto copy = params;
  apply_update(copy, zero, config);
  CHECK(copy.theta == params.theta);
  CHECK(copy.phi == params.phi);
  CHECK(copy.prices == params.prices);

  TotalGradient grad;
  grad.values.assign(params.total_vars(), 0.0);
  grad.values[0] = 1.0;                          // theta slot
  grad.values[params.phi_offset()] = 1.0;        // phi entry
  grad.values[params.price_offset() + 0] = 2.0;  // price "a"
  grad.values[params.price_offset() + 1] = 5.0;  // price "b" projected to 0
  apply_update(params, grad, config);
  CHECK(params.theta[0] == 0.5);
  CHECK(params.phi[0] == 0.25);
  CHECK(params.prices[0] == 8.0);
  CHECK(params.prices[1] == 0.0);
}

TEST_CASE("a facility shared by two blocks accumulates both gradients") {
  ModelParams params;
  params.layout = tiny_layout();
  params.theta.assign(7, 0.0);  // scale exactly one half
  params.phi = {0.0, 0.0};
  params.price_ids = {"shared"};
  params.prices = {100.0};
  params.rebuild_price_index();

  std::vector<CompiledInstance> instances(2);
  for (int i = 0; i < 2; ++i) {
    instances[i].id = "b" + std::to_string(i);
    instances[i].has_truth = true;
    instances[i].slots = {};
    instances[i].w_learnable = {0};
    instances[i].w_fixed = {0.0};
    instances[i].d_euclid = {0.5};
    instances[i].d_traj = {0.65};
  }
  instances[0].truth = 40.0;  // error +10, gradient 2*10*0.5 = 10
  instances[1].truth = 55.0;  // error -5,  gradient 2*(-5)*0.5 = -5

  const auto total = reduce_phase(map_phase(instances, params, 2));
  CHECK(total.values[params.price_offset()] == 5.0);
  CHECK(total.loss == 100.0 + 25.0);
}

TEST_CASE("training on a clean planted city decreases the loss monotonically") {
  SynthConfig config;
  config.n_blocks = 150;
  config.n_facilities = 300;
  config.noise_stddev = 0.0;
  config.known_fraction = 1.0;
  config.seed = 11;
  const auto city = generate_city(config);

  TrainingConfig tc;
  tc.radius_km = config.radius_km;
  tc.rates = {1e-16, 1e-16, 0.01};
  tc.max_epochs = 150;
  tc.seed = 3;
  const auto split = split_dataset(priced_block_ids(city.records), tc.seed);
  const auto result = train(city.records, city.graph, split, city.layout, tc);

  REQUIRE(result.epochs.size() == 150);
  for (std::size_t e = 1; e < result.epochs.size(); ++e) {
    CHECK(result.epochs[e].loss <= result.epochs[e - 1].loss * (1.0 + 1e-12));
  }
  CHECK(result.epochs.back().loss < result.epochs.front().loss);
}

TEST_CASE("a threshold above the initial loss stops after one epoch") {
  SynthConfig config;
  config.n_blocks = 60;
  config.n_facilities = 150;
  config.seed = 9;
  const auto city = generate_city(config);

  TrainingConfig tc;
  tc.radius_km = config.radius_km;
  tc.convergence_threshold = 1e30;
  tc.max_epochs = 50;
  tc.seed = 2;
  const auto split = split_dataset(priced_block_ids(city.records), tc.seed);
  const auto result = train(city.records, city.graph, split, city.layout, tc);
  CHECK(result.epochs.size() == 1);
}

TEST_CASE("runaway learning rates abort with a divergence error") {
  SynthConfig config;
  config.n_blocks = 60;
  config.n_facilities = 150;
  config.seed = 9;
  const auto city = generate_city(config);

  TrainingConfig tc;
  tc.radius_km = config.radius_km;
  tc.rates = {1e-16, 1e-16, 1e3};
  tc.max_epochs = 50;
  tc.seed = 2;
  const auto split = split_dataset(priced_block_ids(city.records), tc.seed);
  CHECK_THROWS_WITH(train(city.records, city.graph, split, city.layout, tc),
                    Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("a non-finite loss names the offending instance") {
  Rng rng(2);
  auto params = random_params(rng, 4);
  auto instances = random_instances(rng, params, 3);
  instances[1].w_learnable[0] = -1;
  instances[1].w_fixed[0] = 1e308;
  CHECK_THROWS_WITH(map_phase(instances, params, 1),
                    Catch::Matchers::ContainsSubstring("inst1"));
}

TEST_CASE("learned premiums rank facility categories like the planted city") {
  SynthConfig config;
  config.n_blocks = 500;
  config.n_facilities = 1200;
  config.cluster_radius_km = 0.08;
  config.theta_bias = 0.7;
  config.theta_scale = 0.05;
  config.true_phi = {-1.0, -0.5};
  config.known_fraction = 0.8;
  config.noise_stddev = 0.0;
  config.seed = 404;
  const auto city = generate_city(config);

  TrainingConfig tc;
  tc.radius_km = config.radius_km;
  tc.rates = {1e-11, 3e-10, 3.0};
  tc.max_epochs = 6000;
  tc.seed = 6;
  const auto split = split_dataset(priced_block_ids(city.records), tc.seed);
  const auto result = train(city.records, city.graph, split, city.layout, tc);

  double city_mean = 0.0;
  std::size_t priced = 0;
  for (const auto& r : city.records) {
    if (r.known_price) {
      city_mean += *r.known_price;
      ++priced;
    }
  }
  city_mean /= static_cast<double>(priced);
  const double agreement =
      premium_rank_agreement(city.planted, result.best_params, city.records, city_mean);
  CHECK(agreement >= 0.9);
}

TEST_CASE("training is reproducible and independent of the shard count") {
  SynthConfig config;
  config.n_blocks = 100;
  config.n_facilities = 200;
  config.noise_stddev = 500.0;
  config.known_fraction = 0.8;
  config.seed = 55;
  const auto city = generate_city(config);

  TrainingConfig tc;
  tc.radius_km = config.radius_km;
  tc.rates = {1e-16, 1e-16, 0.01};
  tc.max_epochs = 40;
  tc.seed = 5;
  const auto split = split_dataset(priced_block_ids(city.records), tc.seed);

  const auto a = train(city.records, city.graph, split, city.layout, tc);
  const auto b = train(city.records, city.graph, split, city.layout, tc);
  tc.shard_count = 3;
  const auto c = train(city.records, city.graph, split, city.layout, tc);

  CHECK(a.params.theta == b.params.theta);
  CHECK(a.params.phi == b.params.phi);
  CHECK(a.params.prices == b.params.prices);
  CHECK(a.params.theta == c.params.theta);
  CHECK(a.params.phi == c.params.phi);
  CHECK(a.params.prices == c.params.prices);
  REQUIRE(a.epochs.size() == c.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].loss == c.epochs[e].loss);
  }
  CHECK(std::isfinite(a.best_validation_mae));
}
