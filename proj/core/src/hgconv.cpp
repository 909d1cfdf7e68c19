#include "hg/hgconv.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "hg/error.hpp"

namespace hg {

template <typename T>
BNParams<T> BNParams<T>::identity(std::size_t channels) {
    BNParams bn;
    bn.gamma.assign(channels, T(1));
    bn.beta.assign(channels, T(0));
    bn.running_mean.assign(channels, T(0));
    bn.running_var.assign(channels, T(1));
    return bn;
}

template <typename T>
void BNParams<T>::validate() const {
    const std::size_t c = gamma.size();
    if (beta.size() != c || running_mean.size() != c || running_var.size() != c)
        throw ShapeError("BNParams: per-channel vectors differ in length");
    if (!(eps > T(0))) throw DomainError("BNParams: eps must be positive");
    for (T v : running_var)
        if (!(v >= T(0))) throw DomainError("BNParams: negative running variance");
}

template <typename T>
std::size_t HGConvModule<T>::in_channels() const {
    if (layers.empty()) throw ShapeError("HGConvModule: no layers");
    return layers.front().kernels.in_channels();
}

template <typename T>
std::size_t HGConvModule<T>::out_channels() const {
    if (layers.empty()) throw ShapeError("HGConvModule: no layers");
    return layers.back().kernels.out_channels();
}

template <typename T>
void HGConvModule<T>::validate() const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].kernels.validate();
        layers[l].bn.validate();
        if (layers[l].bn.channels() != layers[l].kernels.out_channels())
            throw ShapeError("HGConvModule: layer " + std::to_string(l) + " batch norm width differs from kernel output");
        if (l > 0 && layers[l].kernels.in_channels() != layers[l - 1].kernels.out_channels())
            throw ShapeError("HGConvModule: channel chain broken at layer " + std::to_string(l));
    }
}

// ---- pooling ----------------------------------------------------------------

template <typename T>
Dense<T> pool(const Sparse<T>& s, const Dense<T>& x) {
    if (s.rows() != x.rows())
        throw ShapeError("pool: assignment has " + std::to_string(s.rows()) + " pixels, features have " +
                         std::to_string(x.rows()));
    return spmm(sp_transpose(col_normalize(s)), x);
}

template <typename T>
Dense<T> unpool(const Sparse<T>& s, const Dense<T>& z) {
    if (s.cols() != z.rows())
        throw ShapeError("unpool: assignment has " + std::to_string(s.cols()) + " groups, features have " +
                         std::to_string(z.rows()));
    return spmm(row_normalize(s), z);
}

// ---- group adjacency --------------------------------------------------------

template <typename T>
GroupAdjacencySet<T> coarsen_all(const Sparse<T>& s, const DirectionalAdjacency<T>& pixel_adj) {
    GroupAdjacencySet<T> g;
    for (std::size_t d = 0; d < kNumDirections; ++d) g.adjacency[d] = sp_coarsen(s, pixel_adj[d]);
    return g;
}

namespace {

template <typename T>
std::vector<Triplet<T>> triplets_of(const Sparse<T>& a) {
    std::vector<Triplet<T>> out;
    out.reserve(a.nnz());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto idx = a.row_indices(r);
        const auto val = a.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) out.push_back({r, idx[k], val[k]});
    }
    return out;
}

}  // namespace

template <typename T>
GroupAdjacencySet<T> clean_adjacency(const GroupAdjacencySet<T>& g) {
    const std::size_t n = g.groups();
    GroupAdjacencySet<T> out;
    for (Direction d : kAllDirections) {
        if (d == Direction::self) {
            out.adjacency[index_of(d)] = Sparse<T>::identity(n);
            continue;
        }
        std::vector<Triplet<T>> kept;
        for (const auto& e : triplets_of(g[d]))
            if (e.row != e.col && !(static_cast<double>(e.value) < kAdjacencyFilter)) kept.push_back(e);
        out.adjacency[index_of(d)] = Sparse<T>::from_triplets(n, n, std::move(kept));
    }
    return out;
}

template <typename T>
GroupAdjacencySet<T> noise_cancel(const GroupAdjacencySet<T>& g) {
    if (g.refined) throw DomainError("noise_cancel: adjacency already refined");
    const std::size_t n = g.groups();
    GroupAdjacencySet<T> out;
    out.adjacency[index_of(Direction::self)] = g[Direction::self];
    for (Direction d : kAllDirections) {
        if (d == Direction::self) continue;
        auto entries = triplets_of(g[d]);
        for (auto e : triplets_of(g[opposite(d)])) {
            e.value = -e.value;
            entries.push_back(e);
        }
        // from_triplets sums the pairs; clamp the differences at zero.
        const Sparse<T> diff = Sparse<T>::from_triplets(n, n, std::move(entries));
        std::vector<Triplet<T>> positive;
        for (const auto& e : triplets_of(diff))
            if (e.value > T(0)) positive.push_back(e);
        out.adjacency[index_of(d)] = Sparse<T>::from_triplets(n, n, std::move(positive));
    }
    return clean_adjacency(out);
}

template <typename T>
GroupAdjacencySet<T> max_direction(const GroupAdjacencySet<T>& g) {
    const std::size_t n = g.groups();
    struct Entry {
        std::size_t row;
        std::size_t col;
        std::size_t dir;
        T value;
    };
    std::vector<Entry> entries;
    for (Direction d : kAllDirections) {
        if (d == Direction::self) continue;
        for (const auto& e : triplets_of(g[d]))
            if (e.row != e.col) entries.push_back({e.row, e.col, index_of(d), e.value});
    }
    // Within each (row, col) the winner sorts first: largest value, then earliest direction.
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.row, a.col) != std::tie(b.row, b.col) ? std::tie(a.row, a.col) < std::tie(b.row, b.col)
               : a.value != b.value                             ? a.value > b.value
                                                                : a.dir < b.dir;
    });
    std::array<std::vector<Triplet<T>>, kNumDirections> kept;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i > 0 && entries[i].row == entries[i - 1].row && entries[i].col == entries[i - 1].col) continue;
        kept[entries[i].dir].push_back({entries[i].row, entries[i].col, entries[i].value});
    }
    GroupAdjacencySet<T> out = g;
    for (Direction d : kAllDirections) {
        if (d == Direction::self) continue;
        out.adjacency[index_of(d)] = Sparse<T>::from_triplets(n, n, std::move(kept[index_of(d)]));
    }
    return out;
}

template <typename T>
GroupAdjacencySet<T> refine(const GroupAdjacencySet<T>& g, const RefineOptions& opts) {
    if (g.refined) throw DomainError("refine: adjacency already refined");
    GroupAdjacencySet<T> out = opts.noise_cancel ? noise_cancel(g) : clean_adjacency(g);
    if (opts.max_direction) out = max_direction(out);
    for (std::size_t d = 0; d < kNumDirections; ++d)
        out.degrees[d] = degree(out.adjacency[d], static_cast<T>(opts.degree_eps));
    out.refined = true;
    return out;
}

template <typename T>
GroupAdjacencySet<T> build_group_adjacency(const Sparse<T>& s, const GridShape& shape, const RefineOptions& opts) {
    if (s.rows() != shape.pixels()) throw ShapeError("build_group_adjacency: assignment rows do not match grid");
    return refine(coarsen_all(s, pixel_adjacency_all<T>(shape)), opts);
}

// ---- convolution ------------------------------------------------------------

template <typename T>
Dense<T> group_conv(const GroupAdjacencySet<T>& g, const Dense<T>& z, const KernelSet<T>& k, T eps) {
    if (!g.refined) throw DomainError("group_conv: adjacency is not refined");
    if (z.rows() != g.groups())
        throw ShapeError("group_conv: features have " + std::to_string(z.rows()) + " rows, graph has " +
                         std::to_string(g.groups()) + " groups");
    return directional_sum(normalized_propagators(g.adjacency, eps), z, k);
}

template <typename T>
BnForward<T> batch_norm_forward(const Dense<T>& z, const BNParams<T>& bn, BnMode mode) {
    const std::size_t n = z.rows();
    const std::size_t c = z.cols();
    if (bn.channels() != c)
        throw ShapeError("batch_norm: " + std::to_string(c) + " channels vs " + std::to_string(bn.channels()) +
                         " parameters");
    BnForward<T> f;
    if (mode == BnMode::train) {
        f.mean.assign(c, T(0));
        f.variance.assign(c, T(0));
        if (n > 0) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) f.mean[j] += z(i, j);
            for (T& m : f.mean) m /= static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const T d = z(i, j) - f.mean[j];
                    f.variance[j] += d * d;
                }
            for (T& v : f.variance) v /= static_cast<T>(n);
        }
    } else {
        f.mean = bn.running_mean;
        f.variance = bn.running_var;
    }
    f.inv_std.resize(c);
    for (std::size_t j = 0; j < c; ++j) f.inv_std[j] = T(1) / std::sqrt(f.variance[j] + bn.eps);
    f.normalized = Dense<T>(n, c);
    f.output = Dense<T>(n, c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const T xhat = (z(i, j) - f.mean[j]) * f.inv_std[j];
            f.normalized(i, j) = xhat;
            f.output(i, j) = bn.gamma[j] * xhat + bn.beta[j];
        }
    return f;
}

template <typename T>
void update_running_stats(BNParams<T>& bn, const BnForward<T>& f, std::size_t rows) {
    const T unbias = rows > 1 ? static_cast<T>(rows) / static_cast<T>(rows - 1) : T(1);
    for (std::size_t j = 0; j < bn.channels(); ++j) {
        bn.running_mean[j] = (T(1) - bn.momentum) * bn.running_mean[j] + bn.momentum * f.mean[j];
        bn.running_var[j] = (T(1) - bn.momentum) * bn.running_var[j] + bn.momentum * f.variance[j] * unbias;
    }
}

template <typename T>
Dense<T> relu(const Dense<T>& z) {
    Dense<T> out = z;
    for (T& v : out.data()) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
Dense<T> hg_layer(const GroupAdjacencySet<T>& g, const Dense<T>& z, HGLayer<T>& layer, BnMode mode,
                  bool batch_norm) {
    const Dense<T> conv = group_conv(g, z, layer.kernels);
    if (!batch_norm) return relu(conv);
    const BnForward<T> f = batch_norm_forward(conv, layer.bn, mode);
    if (mode == BnMode::train) update_running_stats(layer.bn, f, conv.rows());
    return relu(f.output);
}

template <typename T>
Dense<T> hg_layer(const GroupAdjacencySet<T>& g, const Dense<T>& z, const HGLayer<T>& layer, bool batch_norm) {
    const Dense<T> conv = group_conv(g, z, layer.kernels);
    if (!batch_norm) return relu(conv);
    return relu(batch_norm_forward(conv, layer.bn, BnMode::eval).output);
}

template <typename T>
Dense<T> hg_module_forward(const Dense<T>& x, const Sparse<T>& s, const GroupAdjacencySet<T>& g,
                           HGConvModule<T>& m, BnMode mode) {
    m.validate();
    Dense<T> z = pool(s, x);
    for (auto& layer : m.layers) z = hg_layer(g, z, layer, mode, m.batch_norm);
    return unpool(s, z);
}

template <typename T>
Dense<T> hg_module_forward(const Dense<T>& x, const Sparse<T>& s, const GroupAdjacencySet<T>& g,
                           const HGConvModule<T>& m) {
    m.validate();
    Dense<T> z = pool(s, x);
    for (const auto& layer : m.layers) z = hg_layer(g, z, layer, m.batch_norm);
    return unpool(s, z);
}

#define HG_INSTANTIATE_HGCONV(T)                                                                                \
    template struct BNParams<T>;                                                                                \
    template struct HGConvModule<T>;                                                                            \
    template Dense<T> pool(const Sparse<T>&, const Dense<T>&);                                                  \
    template Dense<T> unpool(const Sparse<T>&, const Dense<T>&);                                                \
    template GroupAdjacencySet<T> coarsen_all(const Sparse<T>&, const DirectionalAdjacency<T>&);                \
    template GroupAdjacencySet<T> clean_adjacency(const GroupAdjacencySet<T>&);                                \
    template GroupAdjacencySet<T> noise_cancel(const GroupAdjacencySet<T>&);                                    \
    template GroupAdjacencySet<T> max_direction(const GroupAdjacencySet<T>&);                                   \
    template GroupAdjacencySet<T> refine(const GroupAdjacencySet<T>&, const RefineOptions&);                    \
    template GroupAdjacencySet<T> build_group_adjacency(const Sparse<T>&, const GridShape&,                     \
                                                        const RefineOptions&);                                  \
    template Dense<T> group_conv(const GroupAdjacencySet<T>&, const Dense<T>&, const KernelSet<T>&, T);         \
    template BnForward<T> batch_norm_forward(const Dense<T>&, const BNParams<T>&, BnMode);                      \
    template void update_running_stats(BNParams<T>&, const BnForward<T>&, std::size_t);                         \
    template Dense<T> relu(const Dense<T>&);                                                                    \
    template Dense<T> hg_layer(const GroupAdjacencySet<T>&, const Dense<T>&, HGLayer<T>&, BnMode, bool);        \
    template Dense<T> hg_layer(const GroupAdjacencySet<T>&, const Dense<T>&, const HGLayer<T>&, bool);          \
    template Dense<T> hg_module_forward(const Dense<T>&, const Sparse<T>&, const GroupAdjacencySet<T>&,         \
                                        HGConvModule<T>&, BnMode);                                              \
    template Dense<T> hg_module_forward(const Dense<T>&, const Sparse<T>&, const GroupAdjacencySet<T>&,         \
                                        const HGConvModule<T>&);

HG_INSTANTIATE_HGCONV(float)
HG_INSTANTIATE_HGCONV(double)

#undef HG_INSTANTIATE_HGCONV

}  // namespace hg
