#include "hg/visualize.hpp"

#include <set>

#include "hg/error.hpp"
#include "hg/random.hpp"

namespace hg {

std::vector<std::array<std::uint8_t, 3>> group_colors(std::size_t groups, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::uniform_int_distribution<int> channel(32, 223);
    std::set<std::array<std::uint8_t, 3>> used{kCenterMarker};
    std::vector<std::array<std::uint8_t, 3>> out;
    out.reserve(groups);
    while (out.size() < groups) {
        std::array<std::uint8_t, 3> c{};
        for (auto& v : c) v = static_cast<std::uint8_t>(channel(rng));
        if (used.insert(c).second) out.push_back(c);
    }
    return out;
}

template <typename T>
Image cluster_visualize(const Sparse<T>& s, const GridShape& shape, const CenterSet<T>& centers,
                        std::uint64_t seed) {
    if (s.rows() != shape.pixels()) throw ShapeError("cluster_visualize: assignment rows do not match grid");
    const auto colors = group_colors(s.cols(), seed);
    Image img{shape.width(), shape.height(), 3, std::vector<std::uint8_t>(shape.pixels() * 3, 0)};
    for (std::size_t p = 0; p < s.rows(); ++p) {
        const auto idx = s.row_indices(p);
        const auto val = s.row_values(p);
        if (idx.empty()) continue;
        std::size_t best = 0;
        for (std::size_t k = 1; k < idx.size(); ++k)
            if (val[k] > val[best]) best = k;
        const auto& c = colors[idx[best]];
        std::copy(c.begin(), c.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(3 * p));
    }
    for (std::size_t seed_pixel : centers.seeds) {
        if (seed_pixel >= shape.pixels()) throw ShapeError("cluster_visualize: center outside grid");
        std::copy(kCenterMarker.begin(), kCenterMarker.end(),
                  img.pixels.begin() + static_cast<std::ptrdiff_t>(3 * seed_pixel));
    }
    return img;
}

template Image cluster_visualize(const Sparse<float>&, const GridShape&, const CenterSet<float>&, std::uint64_t);
template Image cluster_visualize(const Sparse<double>&, const GridShape&, const CenterSet<double>&, std::uint64_t);

}  // namespace hg
