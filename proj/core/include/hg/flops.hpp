#pragma once

// Analytic FLOP accounting. A multiply-accumulate counts 2 FLOPs, a sparse
// product costs 2 * nnz per output channel, and BN + ReLU costs 5 per element.
// Counts for the HG module come from the actual sparsity of S and of the
// refined group adjacency, so they vary per input.

#include <array>
#include <cstdint>
#include <string>

#include "hg/clustering.hpp"
#include "hg/grid.hpp"
#include "hg/hgconv.hpp"

namespace hg {

using FlopCount = std::uint64_t;

struct HgLayerFlops {
    std::array<FlopCount, kNumDirections> sparse{};  ///< 2 * nnz(A_d) * c_in
    std::array<FlopCount, kNumDirections> dense{};   ///< 2 * N_grp * c_in * c_out
    FlopCount bn_relu = 0;                            ///< 5 * N_grp * c_out

    FlopCount total() const noexcept;
};

struct FlopsReport {
    FlopCount regular = 0;        ///< L regular 3x3 conv layers at full resolution
    FlopCount normalization = 0;  ///< building col/row-normalized views of S: 2 * nnz(S)
    FlopCount pooling = 0;        ///< 2 * nnz(S) * c_in
    std::vector<HgLayerFlops> layers;
    FlopCount unpooling = 0;      ///< 2 * nnz(S) * c_out
    FlopCount clustering = 0;     ///< reported separately, excluded from hg_total
    FlopCount hg_total = 0;
    double ratio = 0.0;           ///< hg_total / regular

    /// "key: value" lines, one field per line.
    std::string to_text() const;
};

/// 2 * 9 * h * w * cin * cout. Throws DomainError on a zero dimension.
FlopCount flops_conv3x3(std::size_t h, std::size_t w, std::size_t cin, std::size_t cout);

/// HG module cost from the actual nnz of `s` and of the refined `g`. The
/// regular baseline is L full-resolution 3x3 layers over the s.rows() pixels.
/// Throws DomainError when g is not refined.
template <typename T>
FlopsReport flops_hg_module(const Sparse<T>& s, const GroupAdjacencySet<T>& g, std::size_t cin, std::size_t cout,
                            std::size_t layers);

/// Estimated cost of importance estimation plus the SLIC iterations:
/// importance 3 * 8 * C per pixel; per iteration candidate search 5 * N_pix * G,
/// distances 3 * nnz * (C + 2), softmax 4 * nnz, center update 2 * nnz * (C + 2) + nnz.
FlopCount flops_clustering(std::size_t pixels, std::size_t groups, std::size_t channels, const ClusterConfig& cfg);

struct FlopsFixture {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t channels = 64;
    Ratio ratio{1, 64};
    std::size_t layers = 3;
    std::uint64_t seed = 0;
};

/// Clusters seeded uniform-noise features of the fixture's size with the
/// default clustering settings, refines the group adjacency and reports the
/// module cost, clustering included as a separate field.
FlopsReport flops_fixture_report(const FlopsFixture& f);

}  // namespace hg
