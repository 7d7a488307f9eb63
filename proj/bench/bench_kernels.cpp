// OpenMP kernels against their serial references.
#include "stela/experiment.hpp"

#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include <omp.h>

using namespace stela;

namespace {

void BM_SdfParallel(benchmark::State& state) {
  const Scene s = make_scene(SceneKind::kForest, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_sdf(s, 0.05).values().data());
  state.counters["threads"] = omp_get_max_threads();
}

void BM_SdfSerial(benchmark::State& state) {
  const Scene s = make_scene(SceneKind::kForest, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_sdf_reference(s, 0.05).values().data());
}

struct SweepFixture {
  ExperimentConfig config;
  ExperimentContext context;
  std::vector<RunSpec> specs;

  SweepFixture() {
    config = default_experiment("simple_obstacle", "ltv_sde");
    config.trajectories = 1;
    config.repetitions = 4;
    config.sigma_x_indices = {2};
    config.sigma_z_indices = {2};
    context = prepare_experiment(config);
    specs = enumerate_runs(config);
  }
};

const SweepFixture& sweep_fixture() {
  static const SweepFixture f;
  return f;
}

void BM_SweepParallel(benchmark::State& state) {
  const auto& f = sweep_fixture();
  const int jobs = omp_get_max_threads();
  for (auto _ : state) benchmark::DoNotOptimize(execute_runs(f.config, f.context, f.specs, jobs).size());
  state.counters["threads"] = jobs;
  state.counters["runs"] = static_cast<double>(f.specs.size());
}

void BM_SweepSerial(benchmark::State& state) {
  const auto& f = sweep_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(execute_runs_serial(f.config, f.context, f.specs).size());
  state.counters["runs"] = static_cast<double>(f.specs.size());
}

}  // namespace

BENCHMARK(BM_SdfParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SdfSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)->Unit(benchmark::kMillisecond)->Iterations(2);
BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond)->Iterations(2);

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
