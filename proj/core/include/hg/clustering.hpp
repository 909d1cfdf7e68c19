#pragma once

// Data-adaptive grouping of pixels: an importance map drives cluster-center
// sampling, and a differentiable SLIC iteration turns the sampled centers into
// a sparse soft assignment S (N_pix x N_grp, row-stochastic).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hg/grid.hpp"
#include "hg/linalg.hpp"
#include "hg/random.hpp"

namespace hg {

/// Per-pixel non-negative score; higher means more likely to seed a cluster.
struct ImportanceMap {
    GridShape shape;
    std::vector<double> values;
};

/// Per-pixel weight in [0, 1].
struct AttentionMap {
    GridShape shape;
    std::vector<double> values;

    /// Throws DomainError when a value falls outside [0, 1] or sizes disagree.
    void validate() const;
};

enum class Sampler { uniform_random, importance, topk_random };

std::string_view to_string(Sampler s) noexcept;
/// Accepts "uniform-random", "importance", "topk-random".
Sampler parse_sampler(std::string_view text);

/// N_grp / N_pix as an exact fraction.
struct Ratio {
    std::uint64_t num = 1;
    std::uint64_t den = 64;

    double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
    /// "1/64" or a decimal such as "0.015625".
    static Ratio parse(std::string_view text);
    std::string str() const;
    friend bool operator==(const Ratio&, const Ratio&) = default;
};

struct ClusterConfig {
    Ratio downsample_ratio{1, 64};
    std::size_t iterations = 5;
    double temperature = 0.05;
    double position_weight = 1.0;
    std::size_t candidates_per_pixel = 9;
    Sampler sampler = Sampler::topk_random;
    std::size_t oversample = 3;
    double topk_fraction = 0.75;
    double focus_weight = 10.0;
    std::uint64_t seed = 0;

    /// Throws DomainError on out-of-range fields.
    void validate() const;
    /// max(1, round(ratio * pixels)).
    std::size_t group_count(std::size_t pixels) const;

    friend bool operator==(const ClusterConfig&, const ClusterConfig&) = default;
};

/// Cluster centers. `vectors` is G x (C + 2): the feature part followed by the
/// (row, col) position scaled by 1 / max(H, W). The position part is stored
/// unweighted; the position weight enters only through distances.
template <typename T>
struct CenterSet {
    std::vector<std::size_t> seeds;
    Dense<T> vectors;

    std::size_t size() const noexcept { return vectors.rows(); }
    std::size_t feature_dim() const noexcept { return vectors.cols() - 2; }
};

/// Mean L2 distance from each pixel's feature vector to its in-bounds
/// 8-neighbors. A 1x1 grid has importance 0.
template <typename T>
ImportanceMap importance_map(const Dense<T>& x, const GridShape& shape);

/// imp / max(imp) + alpha * attn; the division is skipped when max(imp) = 0.
ImportanceMap modulate_importance(const ImportanceMap& imp, const AttentionMap& attn, double alpha);

/// Column k of a per-pixel class-probability matrix.
template <typename T>
AttentionMap attention_object(const Dense<T>& probs, const GridShape& shape, std::size_t k);

/// Normalized entropy -sum p log p / log K per pixel.
template <typename T>
AttentionMap attention_uncertainty(const Dense<T>& probs, const GridShape& shape);

/// Draws n distinct seed pixels with the configured strategy. Throws
/// DomainError when n == 0 or n > pixel count.
std::vector<std::size_t> sample_centers(const ImportanceMap& imp, std::size_t n, const ClusterConfig& cfg, Rng& rng);
/// Same, with the generator seeded from cfg.seed.
std::vector<std::size_t> sample_centers(const ImportanceMap& imp, std::size_t n, const ClusterConfig& cfg);

/// Positions of all pixels, N x 2, in units of 1 / max(H, W).
template <typename T>
Dense<T> pixel_positions(const GridShape& shape);

/// [x | positions], the per-pixel vectors that centers average.
template <typename T>
Dense<T> augment_with_positions(const Dense<T>& x, const GridShape& shape);

template <typename T>
CenterSet<T> make_centers(const Dense<T>& x, const GridShape& shape, std::vector<std::size_t> seeds);

// ---- one SLIC step, split into the pieces the autodiff tape reuses ----------

/// Candidate pattern: row p holds the min(k, G) spatially nearest centers,
/// ties broken by seed pixel index. Values are all 1.
template <typename T>
Sparse<T> slic_candidates(const Dense<T>& positions, const CenterSet<T>& centers, std::size_t k);

/// -d_pg / tau for every stored (p, g) of `pattern`, where
/// d_pg = |x_p - f_g|^2 + lambda^2 |pos_p - q_g|^2.
template <typename T>
std::vector<T> slic_logits(const Dense<T>& x, const Dense<T>& positions, const Sparse<T>& pattern,
                           const Dense<T>& center_vectors, T position_weight, T temperature);

/// Softmax of `logits` within each row of `pattern`.
template <typename T>
std::vector<T> sparse_row_softmax(const Sparse<T>& pattern, std::span<const T> logits);

/// Column sums below this keep their previous center.
inline constexpr double kEmptyGroupMass = 1e-12;

/// Weighted mean of augmented pixel vectors under the column-normalized
/// assignment; empty groups keep `previous`.
template <typename T>
Dense<T> update_centers(const Sparse<T>& s, const Dense<T>& augmented, const Dense<T>& previous);

template <typename T>
struct SlicResult {
    Sparse<T> assignment;              ///< S after the final iteration
    CenterSet<T> centers;              ///< centers after the final update
    CenterSet<T> assignment_centers;   ///< centers that produced the final S
};

/// Observer called after every assignment step with (iteration, S).
template <typename T>
using SlicObserver = std::function<void(std::size_t, const Sparse<T>&)>;

template <typename T>
SlicResult<T> diff_slic(const Dense<T>& x, const GridShape& shape, const CenterSet<T>& centers,
                        const ClusterConfig& cfg, const SlicObserver<T>& observer = {});

/// importance -> (optional focus) -> sampling -> diff_slic, all seeded by cfg.seed.
template <typename T>
SlicResult<T> cluster(const Dense<T>& x, const GridShape& shape, const ClusterConfig& cfg,
                      const AttentionMap* attention = nullptr);

}  // namespace hg
