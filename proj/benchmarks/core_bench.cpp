#include <benchmark/benchmark.h>

#include "catcoup/coupling.hpp"
#include "catcoup/gadget.hpp"
#include "catcoup/gumbel.hpp"
#include "catcoup/numeric.hpp"
#include "catcoup/train.hpp"
#include "catcoup/transport.hpp"

using namespace catcoup;

namespace {

Vec simplex_of(std::size_t k, Rng& rng) {
  Vec l = rng.normal_vector(k);
  for (double& x : l) x *= 1.5;
  return softmax(l);
}

void BM_gumbel_argmax(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Vec logits = rng.normal_vector(k);
  Vec noise(k);
  for (auto _ : state) {
    for (double& g : noise) g = rng.gumbel();
    benchmark::DoNotOptimize(gumbel_argmax(logits, noise));
  }
}
BENCHMARK(BM_gumbel_argmax)->Arg(10)->Arg(50)->Arg(146);

void BM_conditional_gumbels(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Vec logits = rng.normal_vector(k);
  for (auto _ : state)
    benchmark::DoNotOptimize(sample_conditional_gumbels(logits, 0, rng));
}
BENCHMARK(BM_conditional_gumbels)->Arg(10)->Arg(146);

void BM_transport_solve(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Vec p = simplex_of(k, rng), q = simplex_of(k, rng);
  Mat cost(k, k);
  for (double& c : cost.data) c = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(solve_transport(p, q, cost));
}
BENCHMARK(BM_transport_solve)->Arg(10)->Arg(40)->Arg(146);

void BM_gadget2_conditional(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const Gadget2Parameters params = make_gadget2(k, 5, {64, 64}, rng);
  const Vec logits = rng.normal_vector(k);
  for (auto _ : state) benchmark::DoNotOptimize(gadget2_conditional(params, logits));
}
BENCHMARK(BM_gadget2_conditional)->Arg(10)->Arg(40);

void BM_gadget1_counterfactual(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const Gadget1Parameters params = make_gadget1(k, {64, 64}, rng);
  const Vec l1 = rng.normal_vector(k), l2 = rng.normal_vector(k);
  const Gadget1Tables tables = gadget1_tables(params, l1, l2);
  for (auto _ : state)
    benchmark::DoNotOptimize(gadget1_counterfactual_from(tables, 0, rng));
}
BENCHMARK(BM_gadget1_counterfactual)->Arg(10)->Arg(40);

void BM_training_step(benchmark::State& state) {
  const std::size_t k = 10, z = 5;
  Rng rng(6);
  ModelConfig config;
  config.outcome_count = k;
  config.cluster_count = z;
  const GadgetParams params = init_gadget(config, rng);
  Mat g(k, k);
  for (double& x : g.data) x = rng.normal();
  PairBatch batch;
  for (int i = 0; i < 64; ++i) batch.push_back({rng.normal_vector(k), rng.normal_vector(k)});
  const NoiseBatch noise = make_noise_batch(GadgetKind::Gadget2, k, z, 64, 16, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gradient(params, batch, noise, g, 1.0));
}
BENCHMARK(BM_training_step);

}  // namespace

BENCHMARK_MAIN();
