#include "hg/pipelines.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "hg/error.hpp"
#include "hg/random.hpp"

namespace hg::ad {

namespace {

Matrix uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

KernelSet<double> uniform_kernels(std::size_t cin, std::size_t cout, double bound, Rng& rng) {
    KernelSet<double> k;
    for (auto& w : k.weights) w = uniform(cin, cout, -bound, bound, rng);
    return k;
}

Matrix row_of(const std::vector<double>& v) { return Matrix(1, v.size(), v); }

}  // namespace

Pipeline make_matmul_pipeline(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    Pipeline p;
    p.name = "matmul";
    p.param_names = {"a", "b"};
    p.params = {uniform(3, 4, -1.0, 1.0, rng), uniform(4, 2, -1.0, 1.0, rng)};
    auto weights = std::make_shared<const Matrix>(uniform(3, 2, -1.0, 1.0, rng));
    p.build = [weights](Tape& t, std::span<const Var> in) {
        return t.sum(t.mul(t.matmul(in[0], in[1]), t.constant(*weights)));
    };
    return p;
}

Pipeline make_conv_pipeline(std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const GridShape shape(3, 4);
    Pipeline p;
    p.name = "conv";
    p.param_names.push_back("x");
    p.params.push_back(uniform(shape.pixels(), 2, 0.0, 1.0, rng));
    const KernelSet<double> k = uniform_kernels(2, 3, 0.5, rng);
    for (Direction d : kAllDirections) {
        p.param_names.push_back("W[0]." + std::string(name(d)));
        p.params.push_back(k[d]);
    }
    auto weights = std::make_shared<const Matrix>(uniform(shape.pixels(), 3, -1.0, 1.0, rng));
    p.build = [weights, shape](Tape& t, std::span<const Var> in) {
        KernelVars kv;
        for (std::size_t d = 0; d < kNumDirections; ++d) kv[d] = in[1 + d];
        return t.sum(t.mul(conv_as_graph(t, in[0], shape, kv), t.constant(*weights)));
    };
    return p;
}

Pipeline make_hg_pipeline(const HgFixtureOptions& opts) {
    Rng rng = make_rng(opts.seed);
    const GridShape shape(opts.height, opts.width);
    const std::size_t c = opts.channels;

    ClusterConfig cfg;
    cfg.iterations = 3;
    // A soft assignment keeps every logit gradient well above the
    // finite-difference noise floor.
    cfg.temperature = 0.5;
    cfg.position_weight = 1.0;

    const Matrix x = uniform(shape.pixels(), c, 0.0, 1.0, rng);
    std::vector<std::size_t> seeds;
    for (std::size_t g = 0; g < opts.groups; ++g) seeds.push_back(g * (shape.pixels() - 1) / std::max<std::size_t>(1, opts.groups - 1));
    const CenterSet<double> initial = make_centers(x, shape, seeds);
    const SlicResult<double> base = diff_slic(x, shape, initial, cfg);
    auto pattern = std::make_shared<const Sparse<double>>(
        slic_candidates(pixel_positions<double>(shape), base.assignment_centers, cfg.candidates_per_pixel));
    auto adjacency = std::make_shared<const GroupAdjacencySet<double>>(build_group_adjacency(base.assignment, shape));

    auto module = std::make_shared<HGConvModule<double>>();
    for (std::size_t l = 0; l < opts.layers; ++l) {
        HGLayer<double> layer{uniform_kernels(c, c, 0.6, rng), BNParams<double>::identity(c)};
        std::uniform_real_distribution<double> gamma(0.5, 1.0);
        for (double& g : layer.bn.gamma) g = gamma(rng);
        // Batch-normalized values over G rows are bounded by sqrt(G - 1).
        for (double& b : layer.bn.beta) b = 0.5 + std::sqrt(static_cast<double>(opts.groups - 1));
        module->layers.push_back(std::move(layer));
    }
    if (opts.mode == BnMode::eval) {
        // Running statistics = batch statistics at the base point (unbiased
        // variance), so every normalized value still lies within [-1, 1] for
        // two groups and the beta shift keeps ReLU inputs >= 0.5.
        HGConvModule<double> calibrate = *module;
        for (auto& l : calibrate.layers) l.bn.momentum = 1.0;
        hg_module_forward(x, base.assignment, *adjacency, calibrate, BnMode::train);
        for (std::size_t l = 0; l < opts.layers; ++l) {
            module->layers[l].bn.running_mean = calibrate.layers[l].bn.running_mean;
            module->layers[l].bn.running_var = calibrate.layers[l].bn.running_var;
        }
    }

    Pipeline p;
    p.name = "hg";
    p.param_names.push_back("x");
    p.params.push_back(x);
    for (std::size_t l = 0; l < opts.layers; ++l) {
        const std::string tag = "[" + std::to_string(l) + "]";
        for (Direction d : kAllDirections) {
            p.param_names.push_back("W" + tag + "." + std::string(name(d)));
            p.params.push_back(module->layers[l].kernels[d]);
        }
        p.param_names.push_back("gamma" + tag);
        p.params.push_back(row_of(module->layers[l].bn.gamma));
        p.param_names.push_back("beta" + tag);
        p.params.push_back(row_of(module->layers[l].bn.beta));
    }
    p.param_names.push_back("assignment_logits");
    p.params.push_back(Matrix(pattern->nnz(), 1));

    std::vector<std::size_t> labels(shape.pixels());
    std::bernoulli_distribution coin(0.5);
    for (auto& l : labels) l = coin(rng) ? 1 : 0;

    const auto centers = std::make_shared<const CenterSet<double>>(base.assignment_centers);
    const BnMode mode = opts.mode;
    p.build = [=](Tape& t, std::span<const Var> in) {
        const Var xv = in[0];
        std::vector<LayerVars> layers(module->layers.size());
        std::size_t next = 1;
        for (auto& lv : layers) {
            for (std::size_t d = 0; d < kNumDirections; ++d) lv.kernels[d] = in[next++];
            lv.gamma = in[next++];
            lv.beta = in[next++];
        }
        const TapedSlic slic = slic_step(t, xv, shape, *centers, pattern, cfg, in[next]);
        const Var out = hg_module_forward(t, xv, slic.assignment, *adjacency, *module, layers, mode);
        return t.cross_entropy(out, labels);
    };
    return p;
}

Pipeline make_slic_pipeline(std::uint64_t seed, bool unrolled) {
    Rng rng = make_rng(seed);
    const GridShape shape(4, 4);
    ClusterConfig cfg;
    cfg.iterations = 3;
    cfg.temperature = 0.5;

    const Matrix x = uniform(shape.pixels(), 2, 0.0, 1.0, rng);
    const auto initial = std::make_shared<const CenterSet<double>>(make_centers(x, shape, {0, 6, 15}));
    auto weights = std::make_shared<const Matrix>(uniform(shape.pixels(), 2, -1.0, 1.0, rng));

    Pipeline p;
    p.name = unrolled ? "slic-unrolled" : "slic";
    p.param_names = {"x", "assignment_logits"};
    p.params = {x, Matrix(shape.pixels() * initial->size(), 1)};

    if (unrolled) {
        p.build = [=](Tape& t, std::span<const Var> in) {
            const TapedSlic s = diff_slic(t, in[0], shape, *initial, cfg, true, in[1]);
            return t.sum(t.mul(unpool(t, s.assignment, pool(t, s.assignment, in[0])), t.constant(*weights)));
        };
        return p;
    }
    // Fix the final-step centers at the base point; see the file comment.
    const SlicResult<double> base = hg::diff_slic(x, shape, *initial, cfg);
    const auto centers = std::make_shared<const CenterSet<double>>(base.assignment_centers);
    auto pattern = std::make_shared<const Sparse<double>>(
        slic_candidates(pixel_positions<double>(shape), *centers, cfg.candidates_per_pixel));
    p.build = [=](Tape& t, std::span<const Var> in) {
        const TapedSlic s = slic_step(t, in[0], shape, *centers, pattern, cfg, in[1]);
        return t.sum(t.mul(unpool(t, s.assignment, pool(t, s.assignment, in[0])), t.constant(*weights)));
    };
    return p;
}

GradientSet hg_gradient_set(const Pipeline& hg_pipeline, std::size_t layers) {
    const std::size_t expected = 1 + layers * (kNumDirections + 2) + 1;
    if (hg_pipeline.params.size() != expected) throw ShapeError("hg_gradient_set: parameter layout mismatch");
    const TapedRun run = forward_with_tape(hg_pipeline);
    const Gradients g = run.tape.backward(run.output);
    GradientSet out;
    std::size_t next = 0;
    out.x = g[run.inputs[next++]];
    for (std::size_t l = 0; l < layers; ++l) {
        KernelSet<double> k;
        for (std::size_t d = 0; d < kNumDirections; ++d) k.weights[d] = g[run.inputs[next++]];
        out.kernels.push_back(std::move(k));
        out.gamma.push_back(g[run.inputs[next++]]);
        out.beta.push_back(g[run.inputs[next++]]);
    }
    out.assignment_logits = g[run.inputs[next]];
    return out;
}

std::string parameter_class(const std::string& param_name) {
    const auto cut = param_name.find_first_of("[.");
    return cut == std::string::npos ? param_name : param_name.substr(0, cut);
}

}  // namespace hg::ad
