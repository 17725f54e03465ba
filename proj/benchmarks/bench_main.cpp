#include <benchmark/benchmark.h>

#include "echodoa/adam.hpp"
#include "echodoa/counter_rng.hpp"
#include "echodoa/dataset.hpp"
#include "echodoa/music.hpp"
#include "echodoa/network.hpp"
#include "echodoa/signal_sim.hpp"
#include "echodoa/training.hpp"
#include "echodoa/triangulation.hpp"

using namespace echodoa;

namespace {

const SimConfig kConfig{};

ArrayGeometry half_wave() { return ArrayGeometry::pair_in_wavelengths(0.5, wavelength(kConfig)); }

void BM_SimulateBaseband(benchmark::State& state) {
  const auto g = half_wave();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(simulate_baseband({25.0, 0.9, 10.0, 0}, g, kConfig, ++seed));
}
BENCHMARK(BM_SimulateBaseband);

void BM_ToBaseband(benchmark::State& state) {
  const auto wave = add_awgn(synthesize_echo({25.0, 0.9, 10.0, 0}, half_wave(), kConfig), 10.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(to_baseband(wave, kConfig));
}
BENCHMARK(BM_ToBaseband);

void BM_MusicEstimate(benchmark::State& state) {
  const auto g = half_wave();
  const auto base = simulate_baseband({25.0, 0.9, 10.0, 0}, g, kConfig, 1);
  MusicOptions options;
  options.grid_step_deg = 0.25;
  for (auto _ : state) benchmark::DoNotOptimize(estimate_doa_music(base, g, kConfig, options));
}
BENCHMARK(BM_MusicEstimate);

void BM_NetworkInference(benchmark::State& state) {
  const auto spec = NetworkSpec::standard(static_cast<int>(state.range(0)));
  const auto net = Network<float>::initialized(spec, 1);
  const auto checkpoint = Checkpoint::from_network(net, InputPrep{}, {});
  const NeuralEstimator estimator(checkpoint);
  const auto base = simulate_baseband({25.0, 0.9, 10.0, 0}, half_wave(), kConfig, 1);
  for (auto _ : state) benchmark::DoNotOptimize(estimator.estimate(base));
}
BENCHMARK(BM_NetworkInference)->Arg(128)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  // One sample: forward, backward, and an ADAM update.
  const auto spec = NetworkSpec::standard(static_cast<int>(state.range(0)));
  auto net = Network<float>::initialized(spec, 1);
  auto grads = net.zero_gradients();
  auto adam = AdamState<float>::zeros_like(net.parameters());
  Workspace<float> ws;
  std::vector<float> input(spec.input_size());
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = static_cast<float>(to_unit(hash_key(2, i)) - 0.5);
  for (auto _ : state) {
    const float p = net.forward(input, ws);
    net.backward_from(2.0f * (p - 0.3f), ws, grads);
    adam_step(net.parameters(), grads, AdamHyper{}, adam);
  }
}
BENCHMARK(BM_TrainStep)->Arg(128)->Arg(512)->Unit(benchmark::kMicrosecond);

void BM_GenerateDataset(benchmark::State& state) {
  SweepSpec s;
  s.records_per_cell = 1;
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(s, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.record_count()));
}
BENCHMARK(BM_GenerateDataset)->Unit(benchmark::kMillisecond);

void BM_Triangulate(benchmark::State& state) {
  const RangeMeasurement m1{{-0.25, 0.0}, 2.0155644370746373, 0.01}, m2{{0.25, 0.0}, 2.0155644370746373, 0.01};
  for (auto _ : state) benchmark::DoNotOptimize(triangulate(m1, m2));
}
BENCHMARK(BM_Triangulate);

}  // namespace

BENCHMARK_MAIN();
