#include <benchmark/benchmark.h>

#include "hg/clustering.hpp"
#include "hg/hgconv.hpp"
#include "hg/random.hpp"
#include "hg/refconv.hpp"

using namespace hg;

namespace {

Dense<float> noise(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    Dense<float> m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

KernelSet<float> kernels(std::size_t cin, std::size_t cout, std::uint64_t seed) {
    KernelSet<float> k = KernelSet<float>::zeros(cin, cout);
    for (std::size_t d = 0; d < kNumDirections; ++d) k.weights[d] = noise(cin, cout, seed + d);
    return k;
}

}  // namespace

static void BM_Spmm(benchmark::State& state) {
    const GridShape shape(state.range(0), state.range(0));
    const auto a = pixel_adjacency<float>(shape, Direction::right);
    const auto x = noise(shape.pixels(), 32, 1);
    for (auto _ : state) benchmark::DoNotOptimize(spmm(a, x));
    state.SetItemsProcessed(state.iterations() * a.nnz() * 32);
}
BENCHMARK(BM_Spmm)->Arg(32)->Arg(64)->Arg(128);

static void BM_ConvAsGraph(benchmark::State& state) {
    const GridShape shape(state.range(0), state.range(0));
    const auto x = noise(shape.pixels(), 16, 2);
    const auto k = kernels(16, 16, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv_as_graph(x, shape, k));
}
BENCHMARK(BM_ConvAsGraph)->Arg(32)->Arg(64);

static void BM_Conv3x3Dense(benchmark::State& state) {
    const GridShape shape(state.range(0), state.range(0));
    const auto x = noise(shape.pixels(), 16, 2);
    const auto k = kernels(16, 16, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv3x3_dense(x, shape, k));
}
BENCHMARK(BM_Conv3x3Dense)->Arg(32)->Arg(64);

static void BM_Cluster(benchmark::State& state) {
    const GridShape shape(state.range(0), state.range(0));
    auto x = noise(shape.pixels(), 3, 4);
    ClusterConfig cfg;
    cfg.seed = 5;
    for (auto _ : state) benchmark::DoNotOptimize(cluster(x, shape, cfg));
}
BENCHMARK(BM_Cluster)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_HgModuleForward(benchmark::State& state) {
    const GridShape shape(64, 64);
    const std::size_t c = state.range(0);
    const auto x = noise(shape.pixels(), c, 6);
    ClusterConfig cfg;
    cfg.seed = 7;
    const auto s = cluster(x, shape, cfg).assignment;
    const auto g = build_group_adjacency(s, shape);
    HGConvModule<float> m;
    m.layers.push_back({kernels(c, c, 8), BNParams<float>::identity(c)});
    for (auto _ : state) benchmark::DoNotOptimize(hg_module_forward(x, s, g, m));
}
BENCHMARK(BM_HgModuleForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
