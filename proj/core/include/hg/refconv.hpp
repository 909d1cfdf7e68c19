#pragma once

// Two independent routes to the same 3x3 zero-padded cross-correlation: direct
// loops over pixel taps, and a sum of per-direction graph convolutions
// sum_d D_d^-1 A_d X W_d. The first is the oracle for the second.

#include <array>

#include "hg/grid.hpp"
#include "hg/linalg.hpp"

namespace hg {

/// Nine Cin x Cout tap matrices. weights[index_of(d)] is applied to the
/// neighbor at displacement(d).
template <typename T>
struct KernelSet {
    std::array<Dense<T>, kNumDirections> weights;

    static KernelSet zeros(std::size_t cin, std::size_t cout);

    Dense<T>& operator[](Direction d) noexcept { return weights[index_of(d)]; }
    const Dense<T>& operator[](Direction d) const noexcept { return weights[index_of(d)]; }

    std::size_t in_channels() const noexcept { return weights[0].rows(); }
    std::size_t out_channels() const noexcept { return weights[0].cols(); }

    /// Throws ShapeError when the nine matrices disagree in shape.
    void validate() const;
};

/// Direct-loop cross-correlation with zero padding.
template <typename T>
Dense<T> conv3x3_dense(const Dense<T>& x, const GridShape& shape, const KernelSet<T>& k);

/// D^-1 A for each direction, degrees clamped at eps.
template <typename T>
DirectionalAdjacency<T> normalized_propagators(const DirectionalAdjacency<T>& adj, T eps);

/// sum_d (P_d X) W_d in canonical direction order. Directions whose propagator
/// has no entries are skipped.
template <typename T>
Dense<T> directional_sum(const DirectionalAdjacency<T>& propagators, const Dense<T>& x, const KernelSet<T>& k);

/// The same convolution as conv3x3_dense evaluated through pixel adjacency
/// matrices and clamped degrees.
template <typename T>
Dense<T> conv_as_graph(const Dense<T>& x, const GridShape& shape, const KernelSet<T>& k,
                       T eps = static_cast<T>(kDefaultDegreeEps));

}  // namespace hg
