#pragma once

// Oracle suites shared by the CLI's conv-check and the test binaries.

#include <cstdint>
#include <string>
#include <vector>

#include "hg/grid.hpp"

namespace hg {

struct CheckCase {
    std::string name;
    double max_abs_diff = 0.0;
    double tolerance = 0.0;

    bool passed() const noexcept { return max_abs_diff <= tolerance; }
};

inline constexpr double kEquivalenceTolerance = 1e-4;

/// Every h x w with 1 <= h, w <= max_side.
std::vector<GridShape> grid_shapes_up_to(std::size_t max_side);

/// Parses "3x4,8x8"; throws DomainError on malformed text.
std::vector<GridShape> parse_grid_shapes(const std::string& text);

/// conv_as_graph against conv3x3_dense in 32-bit, random inputs and kernels
/// in [-1, 1]. One case per (shape, channel count), worst over `seeds` draws.
std::vector<CheckCase> conv_equivalence_suite(const std::vector<GridShape>& shapes,
                                              const std::vector<std::size_t>& channels, std::size_t seeds,
                                              std::uint64_t root_seed = 0);

/// One HG layer with S = I, no batch norm and no noise canceling against
/// conv_as_graph. Inputs and kernels are drawn from [0, 1] so the trailing
/// ReLU is the identity.
std::vector<CheckCase> identity_grouping_suite(const std::vector<GridShape>& shapes,
                                               const std::vector<std::size_t>& channels, std::size_t seeds,
                                               std::uint64_t root_seed = 0);

}  // namespace hg
