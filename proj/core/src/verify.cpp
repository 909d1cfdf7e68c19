#include "hg/verify.hpp"

#include <algorithm>
#include <sstream>

#include "hg/error.hpp"
#include "hg/hgconv.hpp"
#include "hg/random.hpp"
#include "hg/refconv.hpp"

namespace hg {

namespace {

Dense<float> uniform(std::size_t rows, std::size_t cols, float lo, float hi, Rng& rng) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Dense<float> m(rows, cols);
    for (float& v : m.data()) v = dist(rng);
    return m;
}

KernelSet<float> uniform_kernels(std::size_t c, float lo, float hi, Rng& rng) {
    KernelSet<float> k;
    for (auto& w : k.weights) w = uniform(c, c, lo, hi, rng);
    return k;
}

std::string case_name(const char* prefix, const GridShape& s, std::size_t c) {
    return std::string(prefix) + " " + std::to_string(s.height()) + "x" + std::to_string(s.width()) + " c=" +
           std::to_string(c);
}

}  // namespace

std::vector<GridShape> grid_shapes_up_to(std::size_t max_side) {
    std::vector<GridShape> out;
    for (std::size_t h = 1; h <= max_side; ++h)
        for (std::size_t w = 1; w <= max_side; ++w) out.emplace_back(h, w);
    return out;
}

std::vector<GridShape> parse_grid_shapes(const std::string& text) {
    std::vector<GridShape> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto x = item.find('x');
        try {
            if (x == std::string::npos) throw DomainError("");
            std::size_t used_h = 0, used_w = 0;
            const std::string hs = item.substr(0, x), ws = item.substr(x + 1);
            const unsigned long h = std::stoul(hs, &used_h);
            const unsigned long w = std::stoul(ws, &used_w);
            if (used_h != hs.size() || used_w != ws.size()) throw DomainError("");
            out.emplace_back(h, w);
        } catch (const std::exception&) {
            throw DomainError("bad grid size '" + item + "', expected HxW");
        }
    }
    if (out.empty()) throw DomainError("empty grid size list");
    return out;
}

std::vector<CheckCase> conv_equivalence_suite(const std::vector<GridShape>& shapes,
                                              const std::vector<std::size_t>& channels, std::size_t seeds,
                                              std::uint64_t root_seed) {
    std::vector<CheckCase> out;
    for (const GridShape& shape : shapes) {
        for (std::size_t c : channels) {
            CheckCase cc{case_name("conv", shape, c), 0.0, kEquivalenceTolerance};
            for (std::size_t s = 0; s < seeds; ++s) {
                Rng rng = make_rng(derive_seed(root_seed, {shape.height(), shape.width(), c, s}));
                const Dense<float> x = uniform(shape.pixels(), c, -1.0f, 1.0f, rng);
                const KernelSet<float> k = uniform_kernels(c, -1.0f, 1.0f, rng);
                const double d = max_abs_diff(conv_as_graph(x, shape, k), conv3x3_dense(x, shape, k));
                cc.max_abs_diff = std::max(cc.max_abs_diff, d);
            }
            out.push_back(cc);
        }
    }
    return out;
}

std::vector<CheckCase> identity_grouping_suite(const std::vector<GridShape>& shapes,
                                               const std::vector<std::size_t>& channels, std::size_t seeds,
                                               std::uint64_t root_seed) {
    std::vector<CheckCase> out;
    const RefineOptions opts{.noise_cancel = false, .max_direction = true};
    for (const GridShape& shape : shapes) {
        const Sparse<float> s = Sparse<float>::identity(shape.pixels());
        const GroupAdjacencySet<float> g = build_group_adjacency(s, shape, opts);
        for (std::size_t c : channels) {
            CheckCase cc{case_name("identity-grouping", shape, c), 0.0, kEquivalenceTolerance};
            for (std::size_t i = 0; i < seeds; ++i) {
                Rng rng = make_rng(derive_seed(root_seed, {0x1D, shape.height(), shape.width(), c, i}));
                const Dense<float> x = uniform(shape.pixels(), c, 0.0f, 1.0f, rng);
                HGConvModule<float> m;
                m.batch_norm = false;
                m.layers.push_back({uniform_kernels(c, 0.0f, 1.0f, rng), BNParams<float>::identity(c)});
                const double d = max_abs_diff(hg_module_forward(x, s, g, m), conv_as_graph(x, shape, m.layers[0].kernels));
                cc.max_abs_diff = std::max(cc.max_abs_diff, d);
            }
            out.push_back(cc);
        }
    }
    return out;
}

}  // namespace hg
