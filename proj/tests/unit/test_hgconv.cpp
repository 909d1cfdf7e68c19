#include <gtest/gtest.h>

#include <cmath>

#include "hg/error.hpp"
#include "hg/hgconv.hpp"
#include "hg/verify.hpp"
#include "test_util.hpp"

using namespace hg;
using hg::test::random_assignment;
using hg::test::random_dense;
using hg::test::random_kernels;

namespace {

Sparse<double> hard_1x4() {
    return Sparse<double>::from_dense(Dense<double>::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}}));
}

GroupAdjacencySet<double> empty_set(std::size_t g) {
    GroupAdjacencySet<double> out;
    for (auto& a : out.adjacency) a = Sparse<double>(g, g);
    return out;
}

}  // namespace

// ---- pooling ----------------------------------------------------------------

TEST(Pool, SingleGroupIsGlobalMean) {
    auto x = Dense<double>::from_rows({{1}, {3}, {5}, {7}});
    EXPECT_EQ(pool(Sparse<double>::from_dense(Dense<double>(4, 1, 1.0)), x), Dense<double>::from_rows({{4}}));
}

TEST(Pool, HardGroups) {
    auto x = Dense<double>::from_rows({{1}, {3}, {5}, {7}});
    EXPECT_EQ(pool(hard_1x4(), x), Dense<double>::from_rows({{2}, {6}}));
}

TEST(Pool, ConstantsArePreserved) {
    hg::Rng rng = make_rng(1);
    auto s = random_assignment(20, 5, 3, rng);
    auto p = pool(s, Dense<double>(20, 2, 0.7));
    for (double v : p.data()) EXPECT_NEAR(v, 0.7, 1e-12);
    auto u = unpool(s, Dense<double>(5, 2, -1.5));
    for (double v : u.data()) EXPECT_NEAR(v, -1.5, 1e-12);
}

TEST(Pool, LinearInFeatures) {
    hg::Rng rng = make_rng(2);
    auto s = random_assignment(12, 4, 2, rng);
    auto x = random_dense<double>(12, 3, rng);
    auto y = random_dense<double>(12, 3, rng);
    EXPECT_LE(max_abs_diff(pool(s, add(scale(x, 2.0), y)), add(scale(pool(s, x), 2.0), pool(s, y))), 1e-12);
    auto z = random_dense<double>(4, 3, rng);
    EXPECT_LE(max_abs_diff(unpool(s, scale(z, -3.0)), scale(unpool(s, z), -3.0)), 1e-12);
}

TEST(Unpool, HardGroupsAndIdentity) {
    EXPECT_EQ(unpool(hard_1x4(), Dense<double>::from_rows({{2}, {6}})), Dense<double>::from_rows({{2}, {2}, {6}, {6}}));
    hg::Rng rng = make_rng(3);
    auto x = random_dense<double>(6, 2, rng);
    auto id = Sparse<double>::identity(6);
    EXPECT_EQ(unpool(id, pool(id, x)), x);
    EXPECT_THROW(pool(id, Dense<double>(5, 2)), ShapeError);
    EXPECT_THROW(unpool(id, Dense<double>(5, 2)), ShapeError);
}

// ---- coarsening and refinement ------------------------------------------------

TEST(Coarsen, OneByFourFixture) {
    auto g = coarsen_all(hard_1x4(), pixel_adjacency_all<double>(GridShape(1, 4)));
    EXPECT_FALSE(g.refined);
    EXPECT_EQ(g[Direction::right].to_dense(), Dense<double>::from_rows({{1, 1}, {0, 1}}));
    EXPECT_EQ(g[Direction::left].to_dense(), Dense<double>::from_rows({{1, 0}, {1, 1}}));
}

TEST(Coarsen, IdentityAndSingleGroup) {
    const GridShape s(3, 4);
    const auto pix = pixel_adjacency_all<double>(s);
    auto id = coarsen_all(Sparse<double>::identity(12), pix);
    for (std::size_t d = 0; d < kNumDirections; ++d) EXPECT_EQ(id.adjacency[d], pix[d]);
    auto one = coarsen_all(Sparse<double>::from_dense(Dense<double>(12, 1, 1.0)), pix);
    for (std::size_t d = 0; d < kNumDirections; ++d) EXPECT_EQ(one.adjacency[d].at(0, 0), double(pix[d].nnz()));
    EXPECT_THROW(coarsen_all(Sparse<double>::identity(5), pix), ShapeError);
}

TEST(NoiseCancel, OneByFourFixture) {
    auto g = noise_cancel(coarsen_all(hard_1x4(), pixel_adjacency_all<double>(GridShape(1, 4))));
    EXPECT_EQ(g[Direction::right].to_dense(), Dense<double>::from_rows({{0, 1}, {0, 0}}));
    EXPECT_EQ(g[Direction::left].to_dense(), Dense<double>::from_rows({{0, 0}, {1, 0}}));
    EXPECT_EQ(g[Direction::self], Sparse<double>::identity(2));
}

TEST(NoiseCancel, SymmetricConnectionsCancel) {
    auto g = empty_set(3);
    auto m = Sparse<double>::from_triplets(3, 3, {{0, 1, 2.0}, {1, 2, 0.5}, {2, 2, 1.0}});
    g.adjacency[index_of(Direction::up)] = m;
    g.adjacency[index_of(Direction::down)] = m;
    auto r = noise_cancel(g);
    EXPECT_EQ(r[Direction::up].nnz(), 0u);
    EXPECT_EQ(r[Direction::down].nnz(), 0u);
}

TEST(NoiseCancel, FiltersTinyEntriesAndRejectsRefinedInput) {
    auto g = empty_set(2);
    g.adjacency[index_of(Direction::right)] = Sparse<double>::from_triplets(2, 2, {{0, 1, 5e-8}, {1, 0, 0.3}});
    auto r = noise_cancel(g);
    EXPECT_EQ(r[Direction::right].at(0, 1), 0.0);
    EXPECT_EQ(r[Direction::right].at(1, 0), 0.3);
    EXPECT_THROW(noise_cancel(refine(g)), DomainError);
}

TEST(MaxDirection, KeepsStrongest) {
    auto g = empty_set(2);
    g.adjacency[index_of(Direction::right)] = Sparse<double>::from_triplets(2, 2, {{0, 1, 0.7}});
    g.adjacency[index_of(Direction::down_right)] = Sparse<double>::from_triplets(2, 2, {{0, 1, 0.3}});
    g.adjacency[index_of(Direction::up)] = Sparse<double>::from_triplets(2, 2, {{1, 0, 0.2}});
    auto r = max_direction(clean_adjacency(g));
    EXPECT_EQ(r[Direction::right].at(0, 1), 0.7);
    EXPECT_EQ(r[Direction::down_right].nnz(), 0u);
    EXPECT_EQ(r[Direction::up].at(1, 0), 0.2);  // single direction: unchanged
}

TEST(MaxDirection, TieGoesToEarlierDirection) {
    auto g = empty_set(2);
    g.adjacency[index_of(Direction::down)] = Sparse<double>::from_triplets(2, 2, {{0, 1, 0.5}});
    g.adjacency[index_of(Direction::right)] = Sparse<double>::from_triplets(2, 2, {{0, 1, 0.5}});
    auto r = max_direction(clean_adjacency(g));
    EXPECT_EQ(r[Direction::right].at(0, 1), 0.5);
    EXPECT_EQ(r[Direction::down].nnz(), 0u);
}

TEST(Refine, MatchesReferenceFixture) {
    // Expected values from tests/oracles/hg_oracle.py.
    const GridShape shape(2, 3);
    auto s = Sparse<double>::from_dense(Dense<double>::from_rows(
        {{0.8, 0.1, 0.1}, {0.6, 0.3, 0.1}, {0.1, 0.2, 0.7}, {0.5, 0.4, 0.1}, {0.2, 0.7, 0.1}, {0.05, 0.15, 0.8}}));
    auto g = build_group_adjacency(s, shape);
    ASSERT_TRUE(g.refined);
    EXPECT_EQ(g[Direction::self], Sparse<double>::identity(3));
    const auto near = [](const Sparse<double>& a, const Dense<double>& b) { return max_abs_diff(a.to_dense(), b) <= 1e-12; };
    EXPECT_TRUE(near(g[Direction::left], Dense<double>::from_rows({{0, 0, 0}, {0, 0, 0}, {0.615, 0.685, 0}})));
    EXPECT_TRUE(near(g[Direction::right], Dense<double>::from_rows({{0, 0, 0.615}, {0, 0, 0.685}, {0, 0, 0}})));
    EXPECT_TRUE(near(g[Direction::up], Dense<double>::from_rows({{0, 0, 0}, {0.635, 0, 0}, {0, 0, 0}})));
    EXPECT_TRUE(near(g[Direction::down], Dense<double>::from_rows({{0, 0.635, 0}, {0, 0, 0}, {0, 0, 0}})));
    for (Direction d : {Direction::up_left, Direction::up_right, Direction::down_left, Direction::down_right})
        EXPECT_EQ(g[d].nnz(), 0u) << name(d);
}

TEST(Refine, InvariantsOnRandomSoftAssignments) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        hg::Rng rng = make_rng(seed);
        const GridShape shape(1 + rng() % 8, 1 + rng() % 8);
        const std::size_t groups = 1 + rng() % 8;
        auto s = random_assignment(shape.pixels(), groups, 1 + rng() % 4, rng);
        auto raw = coarsen_all(s, pixel_adjacency_all<double>(shape));
        auto nc = noise_cancel(raw);
        for (Direction d : kAllDirections) {
            if (d == Direction::self) continue;
            const auto& a = nc[d];
            const auto& b = nc[opposite(d)];
            for (std::size_t i = 0; i < groups; ++i)
                for (std::size_t j = 0; j < groups; ++j) EXPECT_EQ(std::min(a.at(i, j), b.at(i, j)), 0.0);
        }
        auto g = refine(raw);
        EXPECT_EQ(g[Direction::self], Sparse<double>::identity(groups));
        for (std::size_t i = 0; i < groups; ++i)
            for (std::size_t j = 0; j < groups; ++j) {
                if (i == j) continue;
                int count = 0;
                for (Direction d : kAllDirections)
                    if (d != Direction::self) count += g[d].at(i, j) != 0.0;
                EXPECT_LE(count, 1);
            }
        for (Direction d : kAllDirections) {
            for (double v : g[d].values()) EXPECT_FALSE(v > 0.0 && v < kAdjacencyFilter);
            for (double v : g[d].values()) EXPECT_GE(v, 0.0);
            if (d != Direction::self)
                for (std::size_t i = 0; i < groups; ++i) EXPECT_EQ(g[d].at(i, i), 0.0);
            ASSERT_EQ(g.degrees[index_of(d)].size(), groups);
        }
    }
}

TEST(Refine, TogglesAreIndependent) {
    hg::Rng rng = make_rng(7);
    const GridShape shape(5, 5);
    auto raw = coarsen_all(random_assignment(25, 4, 3, rng), pixel_adjacency_all<double>(shape));
    auto none = refine(raw, {.noise_cancel = false, .max_direction = false});
    auto clean = clean_adjacency(raw);
    for (std::size_t d = 0; d < kNumDirections; ++d) EXPECT_EQ(none.adjacency[d], clean.adjacency[d]);
    auto nc_only = refine(raw, {.noise_cancel = true, .max_direction = false});
    auto nc = noise_cancel(raw);
    for (std::size_t d = 0; d < kNumDirections; ++d) EXPECT_EQ(nc_only.adjacency[d], nc.adjacency[d]);
}

// ---- convolution and the module ----------------------------------------------

TEST(GroupConv, OneByFourHandEvaluation) {
    auto g = build_group_adjacency(hard_1x4(), GridShape(1, 4));
    auto k = KernelSet<double>::zeros(1, 1);
    k[Direction::right] = Dense<double>::from_rows({{2}});
    k[Direction::left] = Dense<double>::from_rows({{3}});
    EXPECT_EQ(group_conv(g, Dense<double>::from_rows({{1}, {5}}), k), Dense<double>::from_rows({{10}, {3}}));
}

TEST(GroupConv, IdentityKernelAndZeroKernel) {
    hg::Rng rng = make_rng(8);
    const GridShape shape(4, 4);
    auto g = build_group_adjacency(random_assignment(16, 5, 3, rng), shape);
    auto z = random_dense<double>(5, 2, rng);
    auto k = KernelSet<double>::zeros(2, 2);
    EXPECT_EQ(group_conv(g, z, k), Dense<double>(5, 2));
    k[Direction::self] = Dense<double>::from_rows({{1, 0}, {0, 1}});
    EXPECT_EQ(group_conv(g, z, k), z);
    EXPECT_THROW(group_conv(g, random_dense<double>(5, 3, rng), k), ShapeError);
    EXPECT_THROW(group_conv(coarsen_all(random_assignment(16, 5, 3, rng), pixel_adjacency_all<double>(shape)), z, k),
                 DomainError);
}

TEST(BatchNorm, IdentityParamsPassNonNegativeInput) {
    hg::Rng rng = make_rng(9);
    auto z = random_dense<double>(6, 3, rng, 0.0, 2.0);
    auto bn = BNParams<double>::identity(3);
    auto f = batch_norm_forward(z, bn, BnMode::eval);
    EXPECT_LE(max_abs_diff(relu(f.output), z), 1e-5);
}

TEST(BatchNorm, ZeroGammaGivesReluBeta) {
    hg::Rng rng = make_rng(10);
    auto z = random_dense<double>(6, 2, rng);
    auto bn = BNParams<double>::identity(2);
    bn.gamma = {0.0, 0.0};
    bn.beta = {0.4, -0.3};
    for (BnMode mode : {BnMode::train, BnMode::eval}) {
        auto out = relu(batch_norm_forward(z, bn, mode).output);
        for (std::size_t i = 0; i < 6; ++i) {
            EXPECT_EQ(out(i, 0), 0.4);
            EXPECT_EQ(out(i, 1), 0.0);
        }
    }
}

TEST(BatchNorm, TrainModeStatistics) {
    auto z = Dense<double>::from_rows({{1, 2}, {3, 5}, {6, 4}});
    auto bn = BNParams<double>::identity(2);
    auto f = batch_norm_forward(z, bn, BnMode::train);
    const auto expected = Dense<double>::from_rows({{-1.1355486, -1.33630191}, {-0.16222123, 1.06904153}, {1.29776983, 0.26726038}});
    EXPECT_LE(max_abs_diff(f.output, expected), 1e-8);
    for (std::size_t j = 0; j < 2; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < 3; ++i) mean += f.output(i, j) / 3;
        EXPECT_NEAR(mean, 0.0, 1e-4);
    }
    update_running_stats(bn, f, 3);
    EXPECT_NEAR(bn.running_mean[0], 0.33333333333333333, 1e-12);
    EXPECT_NEAR(bn.running_mean[1], 0.36666666666666667, 1e-12);
    EXPECT_NEAR(bn.running_var[0], 1.5333333333333333, 1e-12);
    EXPECT_NEAR(bn.running_var[1], 1.1333333333333333, 1e-12);
}

TEST(Module, MatchesReferenceFixture) {
    // Expected values from tests/oracles/hg_oracle.py.
    const GridShape shape(2, 3);
    auto s = Sparse<double>::from_dense(Dense<double>::from_rows(
        {{0.8, 0.1, 0.1}, {0.6, 0.3, 0.1}, {0.1, 0.2, 0.7}, {0.5, 0.4, 0.1}, {0.2, 0.7, 0.1}, {0.05, 0.15, 0.8}}));
    Dense<double> x(6, 2);
    for (std::size_t p = 0; p < 6; ++p) {
        x(p, 0) = double(p * 5 % 7) / 7;
        x(p, 1) = double(p * 3 % 5) / 5;
    }
    HGLayer<double> layer{KernelSet<double>::zeros(2, 2), BNParams<double>::identity(2)};
    for (std::size_t i = 0; i < kNumDirections; ++i) {
        const double d = double(i);
        layer.kernels.weights[i] =
            Dense<double>::from_rows({{std::sin(d + 1), std::cos(d + 2)}, {std::cos(d + 3), std::sin(d + 4)}});
    }
    layer.bn.gamma = {1.0, 0.5};
    layer.bn.beta = {0.1, 0.2};
    HGConvModule<double> m;
    m.layers.push_back(layer);
    auto g = build_group_adjacency(s, shape);
    auto out = hg_module_forward(x, s, g, m, BnMode::train);
    const auto expected = Dense<double>::from_rows({{0.15880608143555405, 0.6855603881504343},
                                                    {0.27082632533988493, 0.54619328929712785},
                                                    {0.83159196028805116, 0.11238088033905601},
                                                    {0.32683644729205036, 0.47650973987047446},
                                                    {0.49486681314854669, 0.26745909159051479},
                                                    {0.90638285879535718, 0.063306661988261792}});
    EXPECT_LE(max_abs_diff(out, expected), 1e-12);
    EXPECT_NEAR(m.layers[0].bn.running_mean[0], 0.015498494344682888, 1e-12);
    EXPECT_NEAR(m.layers[0].bn.running_mean[1], -0.052734811623670323, 1e-12);
    EXPECT_NEAR(m.layers[0].bn.running_var[0], 0.9092762039254767, 1e-12);
    EXPECT_NEAR(m.layers[0].bn.running_var[1], 0.94678900538581756, 1e-12);
}

TEST(Module, IdentityGroupingEqualsConvAsGraph) {
    const auto cases = identity_grouping_suite(grid_shapes_up_to(8), {1, 2, 3, 4}, 3);
    for (const auto& c : cases) EXPECT_TRUE(c.passed()) << c.name << " " << c.max_abs_diff;
}

TEST(Module, ZeroLayersIsSmoothing) {
    hg::Rng rng = make_rng(11);
    const GridShape shape(4, 4);
    auto s = random_assignment(16, 3, 2, rng);
    auto x = random_dense<double>(16, 2, rng);
    HGConvModule<double> m;
    auto g = build_group_adjacency(s, shape);
    EXPECT_EQ(hg_module_forward(x, s, g, m), unpool(s, pool(s, x)));
}

TEST(Module, ConstantInputStaysConstant) {
    // Self-only kernel fixture: with W_self = I every group keeps its pooled
    // value, so a constant field survives pooling, the layer and unpooling.
    hg::Rng rng = make_rng(12);
    const GridShape shape(4, 4);
    auto s = random_assignment(16, 5, 3, rng);
    auto g = build_group_adjacency(s, shape);
    HGConvModule<double> m;
    HGLayer<double> layer{KernelSet<double>::zeros(2, 2), BNParams<double>::identity(2)};
    layer.kernels[Direction::self] = Dense<double>::from_rows({{1, 0}, {0, 1}});
    m.layers.push_back(layer);
    auto out = hg_module_forward(Dense<double>(16, 2, 0.6), s, g, m);
    for (double v : out.data()) EXPECT_NEAR(v, 0.6, 1e-5);
}

TEST(Module, ChannelChainValidated) {
    HGConvModule<double> m;
    m.layers.push_back({KernelSet<double>::zeros(2, 3), BNParams<double>::identity(3)});
    m.layers.push_back({KernelSet<double>::zeros(2, 2), BNParams<double>::identity(2)});
    EXPECT_THROW(m.validate(), ShapeError);
}
