#include "hg/flops.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hg/error.hpp"
#include "hg/random.hpp"

namespace hg {

FlopCount HgLayerFlops::total() const noexcept {
    return std::accumulate(sparse.begin(), sparse.end(), FlopCount{0}) +
           std::accumulate(dense.begin(), dense.end(), FlopCount{0}) + bn_relu;
}

FlopCount flops_conv3x3(std::size_t h, std::size_t w, std::size_t cin, std::size_t cout) {
    if (h == 0 || w == 0 || cin == 0 || cout == 0) throw DomainError("flops_conv3x3: all dimensions must be >= 1");
    return FlopCount{2} * 9 * h * w * cin * cout;
}

template <typename T>
FlopsReport flops_hg_module(const Sparse<T>& s, const GroupAdjacencySet<T>& g, std::size_t cin, std::size_t cout,
                            std::size_t layers) {
    if (!g.refined) throw DomainError("flops_hg_module: group adjacency must be refined");
    if (s.cols() != g.groups()) throw ShapeError("flops_hg_module: assignment columns do not match groups");
    if (cin == 0 || cout == 0) throw DomainError("flops_hg_module: channel counts must be >= 1");
    const FlopCount nnz_s = s.nnz();
    const FlopCount groups = g.groups();

    FlopsReport r;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = l == 0 ? cin : cout;
        r.regular += flops_conv3x3(s.rows(), 1, in, cout);
        HgLayerFlops lf;
        for (std::size_t d = 0; d < kNumDirections; ++d) {
            lf.sparse[d] = 2 * FlopCount{g.adjacency[d].nnz()} * in;
            lf.dense[d] = 2 * groups * in * cout;
        }
        lf.bn_relu = 5 * groups * cout;
        r.layers.push_back(lf);
    }
    r.normalization = 2 * nnz_s;
    r.pooling = 2 * nnz_s * cin;
    r.unpooling = 2 * nnz_s * (layers == 0 ? cin : cout);
    r.hg_total = r.normalization + r.pooling + r.unpooling;
    for (const auto& lf : r.layers) r.hg_total += lf.total();
    r.ratio = r.regular > 0 ? static_cast<double>(r.hg_total) / static_cast<double>(r.regular) : 0.0;
    return r;
}

FlopCount flops_clustering(std::size_t pixels, std::size_t groups, std::size_t channels, const ClusterConfig& cfg) {
    const FlopCount nnz = FlopCount{pixels} * std::min(cfg.candidates_per_pixel, groups);
    const FlopCount dim = channels + 2;
    const FlopCount per_iteration = 5 * FlopCount{pixels} * groups + 3 * nnz * dim + 4 * nnz + 2 * nnz * dim + nnz;
    return 3 * 8 * FlopCount{channels} * pixels + per_iteration * cfg.iterations;
}

FlopsReport flops_fixture_report(const FlopsFixture& f) {
    const GridShape shape(f.height, f.width);
    if (f.channels == 0) throw DomainError("flops fixture: channels must be >= 1");
    Rng rng = make_rng(derive_seed(f.seed, {0}));
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    Dense<float> x(shape.pixels(), f.channels);
    for (float& v : x.data()) v = dist(rng);

    ClusterConfig cfg;
    cfg.downsample_ratio = f.ratio;
    cfg.seed = derive_seed(f.seed, {1});
    const SlicResult<float> slic = cluster(x, shape, cfg);
    const GroupAdjacencySet<float> g = build_group_adjacency(slic.assignment, shape);
    FlopsReport r = flops_hg_module(slic.assignment, g, f.channels, f.channels, f.layers);
    r.clustering = flops_clustering(shape.pixels(), g.groups(), f.channels, cfg);
    return r;
}

std::string FlopsReport::to_text() const {
    std::ostringstream out;
    out << "regular_flops: " << regular << '\n';
    out << "hg_normalization_flops: " << normalization << '\n';
    out << "hg_pooling_flops: " << pooling << '\n';
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (Direction d : kAllDirections)
            out << "hg_layer" << l << "_sparse_" << name(d) << "_flops: " << layers[l].sparse[index_of(d)] << '\n';
        for (Direction d : kAllDirections)
            out << "hg_layer" << l << "_dense_" << name(d) << "_flops: " << layers[l].dense[index_of(d)] << '\n';
        out << "hg_layer" << l << "_bn_relu_flops: " << layers[l].bn_relu << '\n';
    }
    out << "hg_unpooling_flops: " << unpooling << '\n';
    out << "hg_total_flops: " << hg_total << '\n';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", ratio);
    out << "ratio_hg_over_regular: " << buf << '\n';
    out << "clustering_flops_excluded: " << clustering << '\n';
    return out.str();
}

template FlopsReport flops_hg_module(const Sparse<float>&, const GroupAdjacencySet<float>&, std::size_t, std::size_t,
                                     std::size_t);
template FlopsReport flops_hg_module(const Sparse<double>&, const GroupAdjacencySet<double>&, std::size_t, std::size_t,
                                     std::size_t);

}  // namespace hg
