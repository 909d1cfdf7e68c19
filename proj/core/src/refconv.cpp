#include "hg/refconv.hpp"

#include <string>

#include "hg/error.hpp"

namespace hg {

template <typename T>
KernelSet<T> KernelSet<T>::zeros(std::size_t cin, std::size_t cout) {
    KernelSet k;
    for (auto& w : k.weights) w = Dense<T>(cin, cout);
    return k;
}

template <typename T>
void KernelSet<T>::validate() const {
    for (const auto& w : weights)
        if (w.rows() != weights[0].rows() || w.cols() != weights[0].cols())
            throw ShapeError("KernelSet: direction kernels disagree in shape");
}

namespace {

template <typename T>
void check_input(const char* op, const Dense<T>& x, const GridShape& shape, const KernelSet<T>& k) {
    k.validate();
    if (x.rows() != shape.pixels())
        throw ShapeError(std::string(op) + ": input has " + std::to_string(x.rows()) + " rows, grid has " +
                         std::to_string(shape.pixels()) + " pixels");
    if (x.cols() != k.in_channels())
        throw ShapeError(std::string(op) + ": input has " + std::to_string(x.cols()) + " channels, kernel expects " +
                         std::to_string(k.in_channels()));
}

}  // namespace

template <typename T>
Dense<T> conv3x3_dense(const Dense<T>& x, const GridShape& shape, const KernelSet<T>& k) {
    check_input("conv3x3_dense", x, shape, k);
    const std::size_t cin = k.in_channels();
    const std::size_t cout = k.out_channels();
    const long h = static_cast<long>(shape.height());
    const long w = static_cast<long>(shape.width());
    Dense<T> out(shape.pixels(), cout);
    for (long r = 0; r < h; ++r) {
        for (long c = 0; c < w; ++c) {
            auto z = out.row(shape.index(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
            for (Direction d : kAllDirections) {
                const auto [dr, dc] = displacement(d);
                const long rr = r + dr;
                const long cc = c + dc;
                if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
                const auto tap = x.row(shape.index(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)));
                const auto& wd = k[d];
                for (std::size_t i = 0; i < cin; ++i)
                    for (std::size_t o = 0; o < cout; ++o) z[o] += tap[i] * wd(i, o);
            }
        }
    }
    return out;
}

template <typename T>
DirectionalAdjacency<T> normalized_propagators(const DirectionalAdjacency<T>& adj, T eps) {
    DirectionalAdjacency<T> out;
    for (std::size_t d = 0; d < kNumDirections; ++d) out[d] = inverse_scale_rows(degree(adj[d], eps), adj[d]);
    return out;
}

template <typename T>
Dense<T> directional_sum(const DirectionalAdjacency<T>& propagators, const Dense<T>& x, const KernelSet<T>& k) {
    k.validate();
    if (x.cols() != k.in_channels())
        throw ShapeError("directional_sum: input has " + std::to_string(x.cols()) + " channels, kernel expects " +
                         std::to_string(k.in_channels()));
    Dense<T> out(propagators[0].rows(), k.out_channels());
    for (std::size_t d = 0; d < kNumDirections; ++d) {
        if (propagators[d].nnz() == 0) continue;
        out = add(out, matmul(spmm(propagators[d], x), k.weights[d]));
    }
    return out;
}

template <typename T>
Dense<T> conv_as_graph(const Dense<T>& x, const GridShape& shape, const KernelSet<T>& k, T eps) {
    check_input("conv_as_graph", x, shape, k);
    return directional_sum(normalized_propagators(pixel_adjacency_all<T>(shape), eps), x, k);
}

#define HG_INSTANTIATE_REFCONV(T)                                                                              \
    template struct KernelSet<T>;                                                                              \
    template Dense<T> conv3x3_dense(const Dense<T>&, const GridShape&, const KernelSet<T>&);                   \
    template DirectionalAdjacency<T> normalized_propagators(const DirectionalAdjacency<T>&, T);                \
    template Dense<T> directional_sum(const DirectionalAdjacency<T>&, const Dense<T>&, const KernelSet<T>&);  \
    template Dense<T> conv_as_graph(const Dense<T>&, const GridShape&, const KernelSet<T>&, T);

HG_INSTANTIATE_REFCONV(float)
HG_INSTANTIATE_REFCONV(double)

#undef HG_INSTANTIATE_REFCONV

}  // namespace hg
