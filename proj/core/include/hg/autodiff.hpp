#pragma once

// Reverse-mode differentiation over the HG-Conv pipeline.
//
// A Tape records primitive operations on 64-bit dense matrices. Every
// primitive evaluates its forward value with the same kernel the untaped code
// uses, so taped and untaped outputs agree bit for bit. backward() walks the
// record in reverse and returns a fresh Gradients object; the tape itself is
// never modified by a backward pass.
//
// Sparse operands come in two kinds: constant matrices (pixel and group
// adjacency) and fixed patterns whose values are a taped nnz x 1 column (the
// assignment matrix S). Only values are differentiated, never patterns.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hg/clustering.hpp"
#include "hg/grid.hpp"
#include "hg/hgconv.hpp"
#include "hg/linalg.hpp"
#include "hg/refconv.hpp"

namespace hg::ad {

using Matrix = Dense<double>;
using Pattern = std::shared_ptr<const Sparse<double>>;

struct Var {
    std::size_t id = 0;
};

class Tape;

class Gradients {
public:
    /// Gradient for `v`; a zero matrix of v's shape when nothing flowed into it.
    const Matrix& operator[](Var v) const { return grads_.at(v.id); }

private:
    friend class Tape;
    std::vector<Matrix> grads_;
};

class Tape {
public:
    /// Differentiable input.
    Var leaf(Matrix value);
    /// Input excluded from differentiation.
    Var constant(Matrix value);

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // ---- dense primitives ---------------------------------------------------
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double factor);
    /// a + 1 x c row vector broadcast over rows.
    Var add_row(Var a, Var bias);
    Var relu(Var a);
    Var concat_cols(Var a, Var b);
    /// Row r of the result is prev[r] where keep_prev[r] is set, else next[r].
    Var merge_rows(Var prev, Var next, std::vector<char> keep_prev);
    Var softmax_rows(Var a);
    /// Mean over rows of -log softmax(logits)[label].
    Var cross_entropy(Var logits, std::vector<std::size_t> labels);
    Var sum(Var a);
    /// Per-channel batch norm, gamma/beta as 1 x c rows. Eval mode uses the
    /// running statistics of `stats`; train mode ignores them.
    Var batch_norm(Var z, Var gamma, Var beta, const BNParams<double>& stats, BnMode mode);

    // ---- sparse primitives --------------------------------------------------
    /// Constant sparse operand times taped dense operand.
    Var spmm(std::shared_ptr<const Sparse<double>> a, Var x);
    /// pattern-with-values(values) times x; differentiable in both.
    Var sparse_spmm(Pattern pattern, Var values, Var x);
    /// out[k] = values[perm[k]].
    Var gather(Var values, std::shared_ptr<const std::vector<std::size_t>> perm);
    Var sparse_row_softmax(Pattern pattern, Var logits);
    Var sparse_col_normalize(Pattern pattern, Var values);
    Var sparse_row_normalize(Pattern pattern, Var values);
    /// SLIC logits -d/tau for every stored (p, g); `positions` is constant.
    Var slic_logits(Var x, std::shared_ptr<const Matrix> positions, Pattern pattern, Var centers,
                    double position_weight, double temperature);

    /// Reverse sweep from `output` seeded with `seed` (same shape as output).
    Gradients backward(Var output, const Matrix& seed) const;
    /// backward() with a seed of ones; `output` must be 1 x 1.
    Gradients backward(Var output) const;

private:
    using Backward = std::function<void(const Matrix& grad, std::vector<Matrix>& grads)>;
    struct Node {
        Matrix value;
        bool requires_grad = false;
        Backward backward;
    };

    Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward);
    bool any_requires_grad(std::initializer_list<Var> inputs) const;

    std::vector<Node> nodes_;
};

// ---- composite builders -----------------------------------------------------

/// Kernel weights for the nine directions as tape variables.
using KernelVars = std::array<Var, kNumDirections>;

KernelVars leaf_kernels(Tape& tape, const KernelSet<double>& k);
KernelVars constant_kernels(Tape& tape, const KernelSet<double>& k);

/// Taped directional_sum with constant propagators; same arithmetic order.
Var directional_sum(Tape& tape, const DirectionalAdjacency<double>& propagators, Var x, const KernelVars& k);

Var conv_as_graph(Tape& tape, Var x, const GridShape& shape, const KernelVars& k, double eps = kDefaultDegreeEps);

Var group_conv(Tape& tape, const GroupAdjacencySet<double>& g, Var z, const KernelVars& k,
               double eps = kDefaultDegreeEps);

/// A soft assignment on the tape: fixed pattern, taped values.
struct TapedAssignment {
    Pattern pattern;
    Var values;
};

Var pool(Tape& tape, const TapedAssignment& s, Var x);
Var unpool(Tape& tape, const TapedAssignment& s, Var z);

struct LayerVars {
    KernelVars kernels;
    Var gamma;
    Var beta;
};

LayerVars leaf_layer(Tape& tape, const HGLayer<double>& layer);

/// Taped hg_module_forward. In train mode the running statistics of `m` are
/// not updated here; see update_running_stats().
Var hg_module_forward(Tape& tape, Var x, const TapedAssignment& s, const GroupAdjacencySet<double>& g,
                      const HGConvModule<double>& m, const std::vector<LayerVars>& layers, BnMode mode);

struct TapedSlic {
    TapedAssignment assignment;
    Var logits;
    /// Centers that produced the final assignment (untaped value).
    CenterSet<double> assignment_centers;
};

/// Differentiable SLIC. By default only the final assignment step is taped;
/// the centers it uses are constants computed by running the earlier
/// iterations untaped. With `unrolled`, every iteration including the center
/// updates is recorded. `logit_offset`, when given, is added to the final
/// logits (it exposes the logit gradient as an ordinary leaf).
TapedSlic diff_slic(Tape& tape, Var x, const GridShape& shape, const CenterSet<double>& initial,
                    const ClusterConfig& cfg, bool unrolled = false, std::optional<Var> logit_offset = {});

/// Taped last SLIC step against fixed centers and a fixed candidate pattern.
TapedSlic slic_step(Tape& tape, Var x, const GridShape& shape, const CenterSet<double>& centers, Pattern pattern,
                    const ClusterConfig& cfg, std::optional<Var> logit_offset = {});

// ---- pipelines and finite-difference checking -------------------------------

/// A differentiable function of named parameters, rebuilt on a fresh tape for
/// every evaluation. An empty `build` is the identity on the first parameter.
struct Pipeline {
    std::string name;
    std::vector<std::string> param_names;
    std::vector<Matrix> params;
    std::function<Var(Tape&, std::span<const Var>)> build;
};

struct TapedRun {
    Tape tape;
    std::vector<Var> inputs;
    Var output;
};

TapedRun forward_with_tape(const Pipeline& p, std::span<const Matrix> inputs);
TapedRun forward_with_tape(const Pipeline& p);

struct GradcheckEntry {
    std::string param;
    double max_rel_error = 0.0;
    double max_abs_analytic = 0.0;
};

struct GradcheckReport {
    double max_rel_error = 0.0;
    std::string offending_param;
    std::size_t offending_index = 0;
    std::vector<GradcheckEntry> per_param;
};

inline constexpr double kDefaultGradcheckStep = 1e-5;

/// Central differences (f(x+h) - f(x-h)) / 2h against backward() for every
/// coordinate of every parameter. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8). The pipeline output must be 1 x 1.
/// Throws DomainError for h <= 0 and NumericError on non-finite values.
GradcheckReport gradcheck(const Pipeline& p, double h = kDefaultGradcheckStep);

}  // namespace hg::ad
