#pragma once

#include <array>
#include <cstdint>

#include "hg/clustering.hpp"
#include "hg/pnm.hpp"

namespace hg {

/// Color drawn over center pixels. Group colors never take this value.
inline constexpr std::array<std::uint8_t, 3> kCenterMarker = {255, 0, 255};

/// Pairwise distinct RGB colors, one per group, drawn from `seed`.
std::vector<std::array<std::uint8_t, 3>> group_colors(std::size_t groups, std::uint64_t seed);

/// RGB image coloring each pixel by its argmax group (ties: lower group),
/// with the seed pixel of every center overdrawn in kCenterMarker.
template <typename T>
Image cluster_visualize(const Sparse<T>& s, const GridShape& shape, const CenterSet<T>& centers,
                        std::uint64_t seed);

}  // namespace hg
