// Micro-benchmarks for the hot paths: right-hand-side evaluation,
// network forward/backward, spectral transforms, and solver steps.
#include <benchmark/benchmark.h>

#include <vector>

#include "ncm/grid.hpp"
#include "ncm/nn.hpp"
#include "ncm/rhs.hpp"
#include "ncm/rng.hpp"
#include "ncm/solvers.hpp"
#include "ncm/spectral.hpp"
#include "ncm/training.hpp"

using namespace ncm;

namespace {

std::vector<double> random_state(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> u(n);
    for (double& x : u) x = rng.normal();
    return u;
}

void bm_burgers_rhs(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const PeriodicGrid grid{n, 1.0};
    BurgersRhs rhs(grid, 5e-4);
    const std::vector<double> u = random_state(n, 1);
    std::vector<double> out(n);
    for (auto _ : state) {
        rhs.eval(u, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(bm_burgers_rhs)->Arg(64)->Arg(1024)->Arg(4096);

void bm_ks_rhs(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const PeriodicGrid grid{n, 64.0};
    KsRhs rhs(grid);
    const std::vector<double> u = random_state(n, 2);
    std::vector<double> out(n);
    for (auto _ : state) {
        rhs.eval(u, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(bm_ks_rhs)->Arg(128)->Arg(1024);

void bm_nn_forward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const CnnArchitecture arch =
        state.range(1) == 0 ? CnnArchitecture::small() : CnnArchitecture::large();
    Rng rng(3);
    const CnnParams params = init_params(arch, rng);
    const std::vector<double> u = random_state(n, 4);
    std::vector<double> out(n);
    for (auto _ : state) {
        nn_forward(arch, params, u, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(bm_nn_forward)->Args({64, 0})->Args({128, 1});

void bm_nn_backward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const CnnArchitecture arch =
        state.range(1) == 0 ? CnnArchitecture::small() : CnnArchitecture::large();
    Rng rng(5);
    const CnnParams params = init_params(arch, rng);
    const std::vector<double> u = random_state(n, 6);
    const std::vector<double> cot = random_state(n, 7);
    std::vector<double> du(n), dth(arch.param_count());
    for (auto _ : state) {
        nn_backward(arch, params, u, cot, dth, du);
        benchmark::DoNotOptimize(dth.data());
    }
}
BENCHMARK(bm_nn_backward)->Args({64, 0})->Args({128, 1});

void bm_dft(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const std::vector<double> u = random_state(n, 8);
    for (auto _ : state) {
        auto hat = dft(u);
        benchmark::DoNotOptimize(hat.data());
    }
}
BENCHMARK(bm_dft)->Arg(128)->Arg(1024)->Arg(4096);

void bm_rk4_step(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const PeriodicGrid grid{n, 1.0};
    BurgersRhs rhs(grid, 5e-4);
    const std::vector<double> u0 = random_state(n, 9);
    SolverConfig cfg;
    cfg.method = Method::rk4;
    cfg.dt = 1e-5;
    const std::vector<double> times = {0.0, 1e-5};
    for (auto _ : state) {
        const SolveRecord rec = solve(rhs, u0, 0.0, times, cfg);
        benchmark::DoNotOptimize(rec.snapshots.data());
    }
}
BENCHMARK(bm_rk4_step)->Arg(64)->Arg(1024);

void bm_etdrk4_step(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const PeriodicGrid grid{n, 64.0};
    Rng rng(10);
    const CnnArchitecture arch = CnnArchitecture::large();
    const CnnParams params = init_params(arch, rng);
    const ClosureModel model(Equation::kuramoto_sivashinsky, grid, 0.0,
                             ClosureModel::Form::spectral, &arch, &params);
    const std::vector<double> u0 = random_state(n, 11);
    const std::vector<double> times = {0.0, 0.5};
    for (auto _ : state) {
        const SolveRecord rec = etdrk4_solve(model.split(), u0, 0.0, times, 0.05);
        benchmark::DoNotOptimize(rec.snapshots.data());
    }
}
BENCHMARK(bm_etdrk4_step)->Arg(128);

} // namespace

BENCHMARK_MAIN();
