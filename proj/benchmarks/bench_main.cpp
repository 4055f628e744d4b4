#include <benchmark/benchmark.h>

#include <vector>

#include "sharpiv/cube_grid.hpp"
#include "sharpiv/dgp.hpp"
#include "sharpiv/finite_sample.hpp"
#include "sharpiv/propensity.hpp"
#include "sharpiv/sharp_test.hpp"

namespace {

sharpiv::Dataset make_data(std::int64_t n) {
  sharpiv::FllBinaryConfig cfg;
  cfg.J = 20;
  cfg.n = n;
  cfg.lambda = 0.4;
  return sharpiv::gen_fll_binary(cfg, 42);
}

void bm_estimate_nu(benchmark::State& state) {
  const sharpiv::Dataset ds = make_data(state.range(0));
  const sharpiv::PropensityFit fit = sharpiv::fit_frequency(ds);
  const sharpiv::CubeGrid grid = sharpiv::build_grid(2, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sharpiv::estimate_nu(ds, fit, grid));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_estimate_nu)->Arg(1000)->Arg(4000);

void bm_bootstrap_replicate(benchmark::State& state) {
  const sharpiv::Dataset ds = make_data(state.range(0));
  const sharpiv::PropensityFit fit = sharpiv::fit_frequency(ds);
  const sharpiv::CubeGrid grid = sharpiv::build_grid(2, 5);
  const sharpiv::BootstrapWeights bw =
      sharpiv::draw_weights(ds.n(), 1 << 20, sharpiv::WeightDist::Normal1, 7);
  std::vector<double> w(ds.n());
  std::vector<double> p_b(ds.n());
  int b = 0;
  for (auto _ : state) {
    bw.fill(b++ & ((1 << 20) - 1), 0, w);
    sharpiv::refit_weighted_into(fit, ds.d, w.data(), p_b);
    benchmark::DoNotOptimize(sharpiv::estimate_nu(ds, fit, grid, &w));
  }
}
BENCHMARK(bm_bootstrap_replicate)->Arg(1000)->Arg(4000);

void bm_weight_fill(benchmark::State& state) {
  const sharpiv::BootstrapWeights bw = sharpiv::draw_weights(
      static_cast<std::size_t>(state.range(0)), 1 << 20,
      sharpiv::WeightDist::Normal1, 11);
  std::vector<double> w(static_cast<std::size_t>(state.range(0)));
  int b = 0;
  for (auto _ : state) {
    bw.fill(b++ & ((1 << 20) - 1), 0, w);
    benchmark::DoNotOptimize(w.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_weight_fill)->Arg(1000)->Arg(100000);

void bm_width_simulation(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sharpiv::fs_critical_width(state.range(0), 0.00125, 1'000'000,
                                   ++seed));
  }
}
BENCHMARK(bm_width_simulation)->Arg(50)->Arg(800);

}  // namespace

BENCHMARK_MAIN();
