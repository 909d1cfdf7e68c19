#include "hg/grid.hpp"

#include <algorithm>

#include "hg/error.hpp"

namespace hg {

std::string_view name(Direction d) noexcept {
    constexpr std::array<std::string_view, kNumDirections> names = {
        "self", "left", "right", "up", "down", "up_left", "up_right", "down_left", "down_right",
    };
    return names[index_of(d)];
}

GridShape::GridShape(std::size_t height, std::size_t width) : height_(height), width_(width) {
    if (height == 0 || width == 0) throw ShapeError("GridShape: height and width must be >= 1");
}

template <typename T>
Sparse<T> pixel_adjacency(const GridShape& shape, Direction d) {
    const auto [dr, dc] = displacement(d);
    const std::size_t n = shape.pixels();
    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<std::size_t> indices;
    indices.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        const auto r = static_cast<long>(shape.row_of(p)) + dr;
        const auto c = static_cast<long>(shape.col_of(p)) + dc;
        if (r >= 0 && c >= 0 && r < static_cast<long>(shape.height()) && c < static_cast<long>(shape.width()))
            indices.push_back(shape.index(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
        offsets[p + 1] = indices.size();
    }
    std::vector<T> values(indices.size(), T(1));
    return Sparse<T>::from_csr(n, n, std::move(offsets), std::move(indices), std::move(values));
}

template <typename T>
DirectionalAdjacency<T> pixel_adjacency_all(const GridShape& shape) {
    DirectionalAdjacency<T> out;
    for (Direction d : kAllDirections) out[index_of(d)] = pixel_adjacency<T>(shape, d);
    return out;
}

template <typename T>
Diagonal<T> degree(const Sparse<T>& a, T eps) {
    if (!(eps > T(0))) throw DomainError("degree: eps must be positive");
    if (a.rows() != a.cols()) throw ShapeError("degree: adjacency must be square");
    std::vector<T> d(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        T sum = T(0);
        for (T v : a.row_values(r)) {
            if (v < T(0)) throw DomainError("degree: negative adjacency entry");
            sum += v;
        }
        d[r] = std::max(sum, eps);
    }
    return Diagonal<T>(std::move(d));
}

template Sparse<float> pixel_adjacency(const GridShape&, Direction);
template Sparse<double> pixel_adjacency(const GridShape&, Direction);
template DirectionalAdjacency<float> pixel_adjacency_all(const GridShape&);
template DirectionalAdjacency<double> pixel_adjacency_all(const GridShape&);
template Diagonal<float> degree(const Sparse<float>&, float);
template Diagonal<double> degree(const Sparse<double>&, double);

}  // namespace hg
