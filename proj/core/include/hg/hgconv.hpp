#pragma once

// Heterogeneous grid convolution: pool pixels into groups through the soft
// assignment S, convolve direction-wise on the coarsened group graph, and
// unpool back to pixels.
//
//   Z_0 = col_normalize(S)^T X
//   Z_l = ReLU(BN(sum_d D_d^-1 A_d Z_{l-1} W_d))        l = 1..L
//   Z   = row_normalize(S) Z_L
//
// where A_d = S^T A_pix,d S is refined by noise canceling and max-direction
// selection before the degrees D_d are taken.

#include <array>
#include <vector>

#include "hg/grid.hpp"
#include "hg/linalg.hpp"
#include "hg/refconv.hpp"

namespace hg {

/// Coarsened adjacency values below this are dropped during refinement.
inline constexpr double kAdjacencyFilter = 1e-7;

template <typename T>
struct GroupAdjacencySet {
    DirectionalAdjacency<T> adjacency;
    /// Clamped degrees of `adjacency`; filled in by refine().
    std::array<Diagonal<T>, kNumDirections> degrees;
    bool refined = false;

    std::size_t groups() const noexcept { return adjacency[0].rows(); }
    const Sparse<T>& operator[](Direction d) const noexcept { return adjacency[index_of(d)]; }
};

struct RefineOptions {
    bool noise_cancel = true;
    bool max_direction = true;
    double degree_eps = kDefaultDegreeEps;
};

template <typename T>
struct BNParams {
    std::vector<T> gamma;
    std::vector<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);

    /// gamma = 1, beta = 0, running mean 0, running variance 1.
    static BNParams identity(std::size_t channels);
    std::size_t channels() const noexcept { return gamma.size(); }
    void validate() const;
};

enum class BnMode { train, eval };

template <typename T>
struct HGLayer {
    KernelSet<T> kernels;
    BNParams<T> bn;
};

template <typename T>
struct HGConvModule {
    std::vector<HGLayer<T>> layers;
    /// When false each layer is ReLU(conv) with no normalization.
    bool batch_norm = true;

    std::size_t in_channels() const;
    std::size_t out_channels() const;
    /// Throws ShapeError when consecutive layers disagree on channels.
    void validate() const;
};

// ---- pooling ----------------------------------------------------------------

/// col_normalize(S)^T X: assignment-weighted mean of each group's pixels.
template <typename T>
Dense<T> pool(const Sparse<T>& s, const Dense<T>& x);

/// row_normalize(S) Z.
template <typename T>
Dense<T> unpool(const Sparse<T>& s, const Dense<T>& z);

// ---- group adjacency --------------------------------------------------------

/// S^T A_d S for every direction; the result is not yet refined.
template <typename T>
GroupAdjacencySet<T> coarsen_all(const Sparse<T>& s, const DirectionalAdjacency<T>& pixel_adj);

/// Drops entries below kAdjacencyFilter, resets the self-loop to the identity
/// and clears the diagonals of every other direction.
template <typename T>
GroupAdjacencySet<T> clean_adjacency(const GroupAdjacencySet<T>& g);

/// A_d <- max(0, A_d - A_opposite(d)) for every non-self direction, computed
/// from the incoming values, followed by clean_adjacency.
template <typename T>
GroupAdjacencySet<T> noise_cancel(const GroupAdjacencySet<T>& g);

/// For every ordered pair (i, j), i != j, keeps only the direction with the
/// largest weight; ties go to the direction earliest in canonical order.
template <typename T>
GroupAdjacencySet<T> max_direction(const GroupAdjacencySet<T>& g);

/// Noise cancel (or just clean) then max-direction per `opts`, then degrees.
template <typename T>
GroupAdjacencySet<T> refine(const GroupAdjacencySet<T>& g, const RefineOptions& opts = {});

/// coarsen_all followed by refine.
template <typename T>
GroupAdjacencySet<T> build_group_adjacency(const Sparse<T>& s, const GridShape& shape, const RefineOptions& opts = {});

// ---- convolution ------------------------------------------------------------

/// sum_d D_d^-1 A_d Z W_d over a refined group graph.
template <typename T>
Dense<T> group_conv(const GroupAdjacencySet<T>& g, const Dense<T>& z, const KernelSet<T>& k,
                    T eps = static_cast<T>(kDefaultDegreeEps));

template <typename T>
struct BnForward {
    Dense<T> output;          ///< gamma * normalized + beta
    Dense<T> normalized;      ///< (z - mean) / sqrt(var + eps)
    std::vector<T> mean;
    std::vector<T> variance;  ///< biased batch variance in train mode, running variance in eval mode
    std::vector<T> inv_std;
};

/// Per-channel batch normalization over rows. Does not touch running stats.
template <typename T>
BnForward<T> batch_norm_forward(const Dense<T>& z, const BNParams<T>& bn, BnMode mode);

/// running <- (1 - momentum) running + momentum batch, with the unbiased
/// batch variance.
template <typename T>
void update_running_stats(BNParams<T>& bn, const BnForward<T>& f, std::size_t rows);

template <typename T>
Dense<T> relu(const Dense<T>& z);

/// One HG-convolution, batch norm and ReLU. Train mode normalizes with the
/// batch statistics over groups and updates the running statistics.
template <typename T>
Dense<T> hg_layer(const GroupAdjacencySet<T>& g, const Dense<T>& z, HGLayer<T>& layer, BnMode mode,
                  bool batch_norm = true);

template <typename T>
Dense<T> hg_layer(const GroupAdjacencySet<T>& g, const Dense<T>& z, const HGLayer<T>& layer, bool batch_norm = true);

template <typename T>
Dense<T> hg_module_forward(const Dense<T>& x, const Sparse<T>& s, const GroupAdjacencySet<T>& g,
                           HGConvModule<T>& m, BnMode mode);

/// Eval-mode forward; parameters are left untouched.
template <typename T>
Dense<T> hg_module_forward(const Dense<T>& x, const Sparse<T>& s, const GroupAdjacencySet<T>& g,
                           const HGConvModule<T>& m);

}  // namespace hg
