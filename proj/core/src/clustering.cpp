#include "hg/clustering.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include "hg/error.hpp"

namespace hg {

// ---- configuration ----------------------------------------------------------

std::string_view to_string(Sampler s) noexcept {
    switch (s) {
        case Sampler::uniform_random: return "uniform-random";
        case Sampler::importance: return "importance";
        case Sampler::topk_random: return "topk-random";
    }
    return "unknown";
}

Sampler parse_sampler(std::string_view text) {
    if (text == "uniform-random") return Sampler::uniform_random;
    if (text == "importance") return Sampler::importance;
    if (text == "topk-random") return Sampler::topk_random;
    throw ConfigError("unknown sampler '" + std::string(text) + "'");
}

namespace {

std::uint64_t parse_uint(std::string_view text, std::string_view what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw ConfigError("bad " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

}  // namespace

Ratio Ratio::parse(std::string_view text) {
    Ratio r;
    if (const auto slash = text.find('/'); slash != std::string_view::npos) {
        r.num = parse_uint(text.substr(0, slash), "ratio numerator");
        r.den = parse_uint(text.substr(slash + 1), "ratio denominator");
    } else {
        const auto dot = text.find('.');
        const std::string_view whole = text.substr(0, dot);
        const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
        if (frac.size() > 18) throw ConfigError("ratio has too many decimal digits");
        std::uint64_t scale = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
        const std::uint64_t w = whole.empty() ? 0 : parse_uint(whole, "ratio");
        const std::uint64_t f = frac.empty() ? 0 : parse_uint(frac, "ratio");
        r.num = w * scale + f;
        r.den = scale;
    }
    if (r.den == 0) throw ConfigError("ratio denominator is zero");
    const std::uint64_t g = std::gcd(r.num, r.den);
    if (g > 1) {
        r.num /= g;
        r.den /= g;
    }
    return r;
}

std::string Ratio::str() const { return std::to_string(num) + "/" + std::to_string(den); }

void ClusterConfig::validate() const {
    if (downsample_ratio.den == 0 || downsample_ratio.num == 0 || downsample_ratio.num > downsample_ratio.den)
        throw DomainError("downsample ratio must lie in (0, 1]");
    if (iterations < 1) throw DomainError("iterations must be >= 1");
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    if (!(position_weight >= 0.0)) throw DomainError("position weight must be >= 0");
    if (candidates_per_pixel < 1) throw DomainError("candidates per pixel must be >= 1");
    if (oversample < 1) throw DomainError("oversample factor must be >= 1");
    if (!(topk_fraction >= 0.0 && topk_fraction <= 1.0)) throw DomainError("top-k fraction must lie in [0, 1]");
    if (!(focus_weight >= 0.0)) throw DomainError("focus weight must be >= 0");
}

std::size_t ClusterConfig::group_count(std::size_t pixels) const {
    // Round half up: floor(p * num / den + 1/2), computed as quotient + remainder.
    const std::uint64_t den = downsample_ratio.den;
    const std::uint64_t q = pixels / den;
    const std::uint64_t rem = pixels % den;
    const std::uint64_t rounded = q * downsample_ratio.num + (2 * rem * downsample_ratio.num + den) / (2 * den);
    return std::max<std::size_t>(1, static_cast<std::size_t>(rounded));
}

void AttentionMap::validate() const {
    if (values.size() != shape.pixels()) throw ShapeError("AttentionMap: value count does not match grid");
    for (double v : values)
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("AttentionMap: value outside [0, 1]");
}

// ---- importance and attention -----------------------------------------------

template <typename T>
ImportanceMap importance_map(const Dense<T>& x, const GridShape& shape) {
    if (x.rows() != shape.pixels()) throw ShapeError("importance_map: feature rows do not match grid");
    ImportanceMap out{shape, std::vector<double>(shape.pixels(), 0.0)};
    const long h = static_cast<long>(shape.height());
    const long w = static_cast<long>(shape.width());
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
        const long r = static_cast<long>(shape.row_of(p));
        const long c = static_cast<long>(shape.col_of(p));
        double total = 0.0;
        int count = 0;
        for (Direction d : kAllDirections) {
            if (d == Direction::self) continue;
            const auto [dr, dc] = displacement(d);
            if (r + dr < 0 || c + dc < 0 || r + dr >= h || c + dc >= w) continue;
            const std::size_t q = shape.index(static_cast<std::size_t>(r + dr), static_cast<std::size_t>(c + dc));
            double sq = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) {
                const double diff = static_cast<double>(x(p, k)) - static_cast<double>(x(q, k));
                sq += diff * diff;
            }
            total += std::sqrt(sq);
            ++count;
        }
        out.values[p] = count > 0 ? total / count : 0.0;
    }
    return out;
}

ImportanceMap modulate_importance(const ImportanceMap& imp, const AttentionMap& attn, double alpha) {
    if (!(imp.shape == attn.shape) || imp.values.size() != attn.values.size())
        throw ShapeError("modulate_importance: importance and attention grids differ");
    if (!(alpha >= 0.0)) throw DomainError("modulate_importance: alpha must be >= 0");
    attn.validate();
    const double peak = imp.values.empty() ? 0.0 : *std::max_element(imp.values.begin(), imp.values.end());
    ImportanceMap out{imp.shape, imp.values};
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double base = peak > 0.0 ? imp.values[i] / peak : imp.values[i];
        out.values[i] = base + alpha * attn.values[i];
    }
    return out;
}

namespace {

template <typename T>
void check_probabilities(const Dense<T>& probs, const GridShape& shape) {
    if (probs.rows() != shape.pixels()) throw ShapeError("attention: probability rows do not match grid");
    for (std::size_t p = 0; p < probs.rows(); ++p) {
        double sum = 0.0;
        for (T v : probs.row(p)) {
            if (!(v >= T(0) && v <= T(1))) throw DomainError("attention: probability outside [0, 1]");
            sum += static_cast<double>(v);
        }
        if (std::abs(sum - 1.0) > 1e-4) throw DomainError("attention: probability row does not sum to 1");
    }
}

}  // namespace

template <typename T>
AttentionMap attention_object(const Dense<T>& probs, const GridShape& shape, std::size_t k) {
    if (k >= probs.cols()) throw DomainError("attention_object: class index out of range");
    check_probabilities(probs, shape);
    AttentionMap out{shape, std::vector<double>(shape.pixels())};
    for (std::size_t p = 0; p < shape.pixels(); ++p) out.values[p] = static_cast<double>(probs(p, k));
    return out;
}

template <typename T>
AttentionMap attention_uncertainty(const Dense<T>& probs, const GridShape& shape) {
    if (probs.cols() < 2) throw DomainError("attention_uncertainty: needs at least two classes");
    check_probabilities(probs, shape);
    const double norm = std::log(static_cast<double>(probs.cols()));
    AttentionMap out{shape, std::vector<double>(shape.pixels())};
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
        double h = 0.0;
        for (T v : probs.row(p))
            if (v > T(0)) h -= static_cast<double>(v) * std::log(static_cast<double>(v));
        out.values[p] = std::clamp(h / norm, 0.0, 1.0);
    }
    return out;
}

// ---- sampling ---------------------------------------------------------------

namespace {

/// Moves `count` uniformly chosen elements of pool into pool[0, count) in draw order.
void partial_shuffle(std::vector<std::size_t>& pool, std::size_t count, Rng& rng) {
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
}

std::vector<std::size_t> sample_uniform(std::size_t total, std::size_t n, Rng& rng) {
    std::vector<std::size_t> pool(total);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    partial_shuffle(pool, n, rng);
    pool.resize(n);
    return pool;
}

// Weighted sampling without replacement via exponential keys log(u) / w;
// the n largest keys are an exact sequential draw proportional to weight.
std::vector<std::size_t> sample_weighted(const std::vector<double>& weights, std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::pair<double, std::size_t>> keyed;
    std::vector<std::size_t> zero_weight;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double u = unit(rng);
        if (weights[i] > 0.0)
            keyed.emplace_back(std::log(std::max(u, std::numeric_limits<double>::min())) / weights[i], i);
        else
            zero_weight.push_back(i);
    }
    const std::size_t take = std::min(n, keyed.size());
    std::partial_sort(keyed.begin(), keyed.begin() + static_cast<long>(take), keyed.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < take; ++i) out.push_back(keyed[i].second);
    if (out.size() < n) {
        partial_shuffle(zero_weight, n - out.size(), rng);
        out.insert(out.end(), zero_weight.begin(), zero_weight.begin() + static_cast<long>(n - out.size()));
    }
    return out;
}

std::vector<std::size_t> sample_topk_random(const std::vector<double>& weights, std::size_t n,
                                            const ClusterConfig& cfg, Rng& rng) {
    const std::size_t total = weights.size();
    std::vector<std::size_t> pool(total);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    const std::size_t candidates = std::min(total, cfg.oversample * n);
    partial_shuffle(pool, candidates, rng);
    // Stable: equal importance keeps the (random) draw order.
    std::stable_sort(pool.begin(), pool.begin() + static_cast<long>(candidates),
                     [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
    const auto top = static_cast<std::size_t>(std::ceil(cfg.topk_fraction * static_cast<double>(n)));
    const std::size_t keep = std::min({top, n, candidates});
    std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<long>(keep));
    std::vector<char> used(total, 0);
    for (std::size_t c : chosen) used[c] = 1;
    std::vector<std::size_t> rest;
    rest.reserve(total - keep);
    for (std::size_t i = 0; i < total; ++i)
        if (!used[i]) rest.push_back(i);
    partial_shuffle(rest, n - keep, rng);
    chosen.insert(chosen.end(), rest.begin(), rest.begin() + static_cast<long>(n - keep));
    return chosen;
}

}  // namespace

std::vector<std::size_t> sample_centers(const ImportanceMap& imp, std::size_t n, const ClusterConfig& cfg, Rng& rng) {
    const std::size_t total = imp.values.size();
    if (n == 0) throw DomainError("sample_centers: need at least one center");
    if (n > total)
        throw DomainError("sample_centers: " + std::to_string(n) + " centers requested from " +
                          std::to_string(total) + " pixels");
    for (double v : imp.values)
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("sample_centers: importance must be finite and >= 0");
    switch (cfg.sampler) {
        case Sampler::uniform_random: return sample_uniform(total, n, rng);
        case Sampler::importance: return sample_weighted(imp.values, n, rng);
        case Sampler::topk_random: return sample_topk_random(imp.values, n, cfg, rng);
    }
    throw DomainError("sample_centers: unknown sampler");
}

std::vector<std::size_t> sample_centers(const ImportanceMap& imp, std::size_t n, const ClusterConfig& cfg) {
    Rng rng = make_rng(cfg.seed);
    return sample_centers(imp, n, cfg, rng);
}

// ---- centers ----------------------------------------------------------------

template <typename T>
Dense<T> pixel_positions(const GridShape& shape) {
    const T unit = T(1) / static_cast<T>(std::max(shape.height(), shape.width()));
    Dense<T> pos(shape.pixels(), 2);
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
        pos(p, 0) = static_cast<T>(shape.row_of(p)) * unit;
        pos(p, 1) = static_cast<T>(shape.col_of(p)) * unit;
    }
    return pos;
}

template <typename T>
Dense<T> augment_with_positions(const Dense<T>& x, const GridShape& shape) {
    if (x.rows() != shape.pixels()) throw ShapeError("augment_with_positions: feature rows do not match grid");
    const Dense<T> pos = pixel_positions<T>(shape);
    Dense<T> out(x.rows(), x.cols() + 2);
    for (std::size_t p = 0; p < x.rows(); ++p) {
        auto dst = out.row(p);
        std::copy(x.row(p).begin(), x.row(p).end(), dst.begin());
        dst[x.cols()] = pos(p, 0);
        dst[x.cols() + 1] = pos(p, 1);
    }
    return out;
}

template <typename T>
CenterSet<T> make_centers(const Dense<T>& x, const GridShape& shape, std::vector<std::size_t> seeds) {
    if (seeds.empty()) throw DomainError("make_centers: empty seed set");
    std::vector<std::size_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw DomainError("make_centers: seed pixels must be distinct");
    if (sorted.back() >= shape.pixels()) throw DomainError("make_centers: seed pixel out of range");
    const Dense<T> aug = augment_with_positions(x, shape);
    Dense<T> vectors(seeds.size(), aug.cols());
    for (std::size_t g = 0; g < seeds.size(); ++g) std::copy(aug.row(seeds[g]).begin(), aug.row(seeds[g]).end(), vectors.row(g).begin());
    return CenterSet<T>{std::move(seeds), std::move(vectors)};
}

// ---- SLIC step pieces -------------------------------------------------------

template <typename T>
Sparse<T> slic_candidates(const Dense<T>& positions, const CenterSet<T>& centers, std::size_t k) {
    const std::size_t groups = centers.size();
    const std::size_t take = std::min(k, groups);
    const std::size_t pos_col = centers.feature_dim();
    std::vector<std::size_t> offsets(positions.rows() + 1, 0);
    std::vector<std::size_t> indices;
    indices.reserve(positions.rows() * take);
    struct Candidate {
        T dist;
        std::size_t seed;
        std::size_t group;
    };
    std::vector<Candidate> all(groups);
    for (std::size_t p = 0; p < positions.rows(); ++p) {
        for (std::size_t g = 0; g < groups; ++g) {
            const T dr = positions(p, 0) - centers.vectors(g, pos_col);
            const T dc = positions(p, 1) - centers.vectors(g, pos_col + 1);
            all[g] = {dr * dr + dc * dc, centers.seeds[g], g};
        }
        if (take < groups)
            std::partial_sort(all.begin(), all.begin() + static_cast<long>(take), all.end(),
                              [](const Candidate& a, const Candidate& b) {
                                  return a.dist != b.dist ? a.dist < b.dist : a.seed < b.seed;
                              });
        const std::size_t first = indices.size();
        for (std::size_t i = 0; i < take; ++i) indices.push_back(all[i].group);
        std::sort(indices.begin() + static_cast<long>(first), indices.end());
        offsets[p + 1] = indices.size();
    }
    std::vector<T> ones(indices.size(), T(1));
    return Sparse<T>::from_csr(positions.rows(), groups, std::move(offsets), std::move(indices), std::move(ones));
}

template <typename T>
std::vector<T> slic_logits(const Dense<T>& x, const Dense<T>& positions, const Sparse<T>& pattern,
                           const Dense<T>& center_vectors, T position_weight, T temperature) {
    const std::size_t c = x.cols();
    if (center_vectors.cols() != c + 2) throw ShapeError("slic_logits: center dimension does not match features");
    if (pattern.rows() != x.rows() || pattern.cols() != center_vectors.rows())
        throw ShapeError("slic_logits: pattern does not match pixels x groups");
    const T lambda2 = position_weight * position_weight;
    std::vector<T> logits(pattern.nnz());
    for (std::size_t p = 0; p < pattern.rows(); ++p) {
        const auto groups = pattern.row_indices(p);
        for (std::size_t k = 0; k < groups.size(); ++k) {
            const auto f = center_vectors.row(groups[k]);
            T feat = T(0);
            for (std::size_t j = 0; j < c; ++j) {
                const T diff = x(p, j) - f[j];
                feat += diff * diff;
            }
            const T dr = positions(p, 0) - f[c];
            const T dc = positions(p, 1) - f[c + 1];
            logits[pattern.offsets()[p] + k] = -(feat + lambda2 * (dr * dr + dc * dc)) / temperature;
        }
    }
    return logits;
}

template <typename T>
std::vector<T> sparse_row_softmax(const Sparse<T>& pattern, std::span<const T> logits) {
    if (logits.size() != pattern.nnz()) throw ShapeError("sparse_row_softmax: logit count does not match pattern");
    std::vector<T> out(logits.size());
    const auto off = pattern.offsets();
    for (std::size_t r = 0; r < pattern.rows(); ++r) {
        if (off[r] == off[r + 1]) continue;
        T peak = logits[off[r]];
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) peak = std::max(peak, logits[k]);
        T sum = T(0);
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
            out[k] = std::exp(logits[k] - peak);
            sum += out[k];
        }
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) out[k] /= sum;
    }
    return out;
}

template <typename T>
Dense<T> update_centers(const Sparse<T>& s, const Dense<T>& augmented, const Dense<T>& previous) {
    if (s.rows() != augmented.rows() || s.cols() != previous.rows() || augmented.cols() != previous.cols())
        throw ShapeError("update_centers: dimension mismatch");
    std::vector<T> mass(s.cols(), T(0));
    for (std::size_t k = 0; k < s.nnz(); ++k) mass[s.indices()[k]] += s.values()[k];
    Dense<T> pooled = spmm(sp_transpose(col_normalize(s)), augmented);
    for (std::size_t g = 0; g < s.cols(); ++g)
        if (!(static_cast<double>(mass[g]) >= kEmptyGroupMass))
            std::copy(previous.row(g).begin(), previous.row(g).end(), pooled.row(g).begin());
    return pooled;
}

template <typename T>
SlicResult<T> diff_slic(const Dense<T>& x, const GridShape& shape, const CenterSet<T>& centers,
                        const ClusterConfig& cfg, const SlicObserver<T>& observer) {
    cfg.validate();
    if (x.rows() != shape.pixels()) throw ShapeError("diff_slic: feature rows do not match grid");
    if (centers.size() == 0 || centers.vectors.cols() != x.cols() + 2 || centers.seeds.size() != centers.size())
        throw ShapeError("diff_slic: center set does not match features");
    const Dense<T> positions = pixel_positions<T>(shape);
    const Dense<T> augmented = augment_with_positions(x, shape);
    const auto lambda = static_cast<T>(cfg.position_weight);
    const auto tau = static_cast<T>(cfg.temperature);

    CenterSet<T> current = centers;
    CenterSet<T> previous = centers;
    Sparse<T> s;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const Sparse<T> pattern = slic_candidates(positions, current, cfg.candidates_per_pixel);
        const std::vector<T> logits = slic_logits(x, positions, pattern, current.vectors, lambda, tau);
        s = pattern.with_values(sparse_row_softmax<T>(pattern, logits));
        if (observer) observer(it, s);
        previous = current;
        current.vectors = update_centers(s, augmented, current.vectors);
    }
    return SlicResult<T>{std::move(s), std::move(current), std::move(previous)};
}

template <typename T>
SlicResult<T> cluster(const Dense<T>& x, const GridShape& shape, const ClusterConfig& cfg,
                      const AttentionMap* attention) {
    cfg.validate();
    ImportanceMap imp = importance_map(x, shape);
    if (attention != nullptr) imp = modulate_importance(imp, *attention, cfg.focus_weight);
    const std::size_t n = cfg.group_count(shape.pixels());
    CenterSet<T> centers = make_centers(x, shape, sample_centers(imp, n, cfg));
    return diff_slic(x, shape, centers, cfg);
}

#define HG_INSTANTIATE_CLUSTERING(T)                                                                             \
    template ImportanceMap importance_map(const Dense<T>&, const GridShape&);                                    \
    template AttentionMap attention_object(const Dense<T>&, const GridShape&, std::size_t);                      \
    template AttentionMap attention_uncertainty(const Dense<T>&, const GridShape&);                              \
    template Dense<T> pixel_positions(const GridShape&);                                                         \
    template Dense<T> augment_with_positions(const Dense<T>&, const GridShape&);                                 \
    template CenterSet<T> make_centers(const Dense<T>&, const GridShape&, std::vector<std::size_t>);             \
    template Sparse<T> slic_candidates(const Dense<T>&, const CenterSet<T>&, std::size_t);                       \
    template std::vector<T> slic_logits(const Dense<T>&, const Dense<T>&, const Sparse<T>&, const Dense<T>&, T,  \
                                        T);                                                                      \
    template std::vector<T> sparse_row_softmax(const Sparse<T>&, std::span<const T>);                            \
    template Dense<T> update_centers(const Sparse<T>&, const Dense<T>&, const Dense<T>&);                        \
    template SlicResult<T> diff_slic(const Dense<T>&, const GridShape&, const CenterSet<T>&,                     \
                                     const ClusterConfig&, const SlicObserver<T>&);                              \
    template SlicResult<T> cluster(const Dense<T>&, const GridShape&, const ClusterConfig&, const AttentionMap*);

HG_INSTANTIATE_CLUSTERING(float)
HG_INSTANTIATE_CLUSTERING(double)

#undef HG_INSTANTIATE_CLUSTERING

}  // namespace hg
