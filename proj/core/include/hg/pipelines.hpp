#pragma once

// Seeded, well-conditioned fixtures for finite-difference checking. Every
// fixture returns a scalar loss so gradcheck() can compare full gradients.
//
// Non-differentiable pieces (center sampling, the candidate pattern, refined
// group adjacency) are computed once at the fixture's base point and held
// fixed, which matches what backward() treats as constant.

#include <cstdint>
#include <vector>

#include "hg/autodiff.hpp"

namespace hg::ad {

/// Loss = sum(R * (A B)) for random A (3x4), B (4x2), fixed R.
Pipeline make_matmul_pipeline(std::uint64_t seed);

/// Loss = sum(R * conv_as_graph(x)) on a 3x4 grid, 2 -> 3 channels.
/// Parameters: x and the nine direction kernels.
Pipeline make_conv_pipeline(std::uint64_t seed);

struct HgFixtureOptions {
    std::size_t height = 2;
    std::size_t width = 3;
    std::size_t channels = 2;
    std::size_t groups = 2;
    std::size_t layers = 1;
    /// Eval mode uses running statistics calibrated at the base point. With
    /// only two groups, train-mode BN maps each channel to about +-1 whatever
    /// the kernels are, which leaves W gradients at the eps-noise level.
    BnMode mode = BnMode::eval;
    std::uint64_t seed = 5;
};

/// Full HG pipeline: SLIC logits -> S -> pool -> L x (group conv, BN, ReLU)
/// -> unpool -> pixel cross-entropy. Parameters, in order:
///   "x", then per layer l: "W[l].<direction>" x 9, "gamma[l]", "beta[l]",
///   then "assignment_logits" (an additive offset on the final logits).
/// BN shifts of 0.5 + sqrt(G - 1) keep every ReLU input >= 0.5, away from
/// the kink, in train mode and in the calibrated eval mode.
Pipeline make_hg_pipeline(const HgFixtureOptions& opts = {});

/// Loss = sum(R * unpool(S, pool(S, x))) with S from taped SLIC on a 4x4 grid.
/// Parameters: "x", "assignment_logits".
Pipeline make_slic_pipeline(std::uint64_t seed, bool unrolled = false);

/// Gradients of the HG pipeline grouped by parameter role.
struct GradientSet {
    std::vector<KernelSet<double>> kernels;
    std::vector<Matrix> gamma;
    std::vector<Matrix> beta;
    Matrix x;
    Matrix assignment_logits;
};

/// Runs make_hg_pipeline's forward and backward once and unpacks the result.
GradientSet hg_gradient_set(const Pipeline& hg_pipeline, std::size_t layers);

/// Parameter class of a pipeline parameter name: "W", "gamma", "beta", "x", ...
std::string parameter_class(const std::string& param_name);

}  // namespace hg::ad
