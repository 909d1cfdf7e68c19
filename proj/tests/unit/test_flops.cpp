#include <gtest/gtest.h>

#include <numeric>

#include "hg/error.hpp"
#include "hg/flops.hpp"
#include "test_util.hpp"

using namespace hg;

TEST(Flops, Conv3x3) {
    EXPECT_EQ(flops_conv3x3(64, 64, 64, 64), 301989888u);
    EXPECT_EQ(flops_conv3x3(1, 1, 1, 1), 18u);
    EXPECT_THROW(flops_conv3x3(1, 1, 1, 0), DomainError);
    EXPECT_THROW(flops_conv3x3(0, 1, 1, 1), DomainError);
}

TEST(Flops, IdentityAssignmentNoSavings) {
    const GridShape shape(4, 4);
    auto s = Sparse<float>::identity(16);
    auto g = build_group_adjacency(s, shape);
    auto r = flops_hg_module(s, g, 1, 1, 1);
    EXPECT_GT(r.ratio, 0.0);
    // HG work on the identity grouping is at least the cost of a 1x1 layer.
    EXPECT_GE(r.hg_total, FlopCount{2} * 16);
}

TEST(Flops, TotalsAreSumsOfParts) {
    hg::Rng rng = make_rng(1);
    const GridShape shape(6, 6);
    auto s = hg::test::random_assignment(36, 5, 3, rng);
    auto g = build_group_adjacency(s, shape);
    auto r = flops_hg_module(s, g, 3, 4, 2);
    FlopCount sum = r.normalization + r.pooling + r.unpooling;
    for (const auto& l : r.layers) {
        EXPECT_EQ(l.total(), std::accumulate(l.sparse.begin(), l.sparse.end(), FlopCount{0}) +
                                 std::accumulate(l.dense.begin(), l.dense.end(), FlopCount{0}) + l.bn_relu);
        sum += l.total();
    }
    EXPECT_EQ(r.hg_total, sum);
    EXPECT_EQ(r.pooling, 2 * s.nnz() * 3);
    EXPECT_EQ(r.unpooling, 2 * s.nnz() * 4);
    EXPECT_EQ(r.normalization, 2 * s.nnz());
    EXPECT_EQ(r.layers[0].sparse[1], 2 * g.adjacency[1].nnz() * 3);
    EXPECT_EQ(r.layers[1].sparse[1], 2 * g.adjacency[1].nnz() * 4);
    EXPECT_EQ(r.layers[0].dense[0], FlopCount{2} * 5 * 3 * 4);
    EXPECT_EQ(r.layers[1].bn_relu, FlopCount{5} * 5 * 4);
    EXPECT_EQ(r.regular, flops_conv3x3(6, 6, 3, 4) + flops_conv3x3(6, 6, 4, 4));
}

TEST(Flops, DoublingInputChannelsDoublesPooling) {
    hg::Rng rng = make_rng(2);
    auto s = hg::test::random_assignment(25, 4, 2, rng);
    auto g = build_group_adjacency(s, GridShape(5, 5));
    EXPECT_EQ(flops_hg_module(s, g, 16, 8, 1).pooling * 2, flops_hg_module(s, g, 32, 8, 1).pooling);
}

TEST(Flops, RejectsUnrefinedAdjacency) {
    auto s = Sparse<double>::identity(4);
    auto raw = coarsen_all(s, pixel_adjacency_all<double>(GridShape(2, 2)));
    EXPECT_THROW(flops_hg_module(s, raw, 1, 1, 1), DomainError);
}

TEST(Flops, FixtureRatioAndMonotonicity) {
    FlopsFixture f;
    f.seed = 3;
    double previous = 1e9;
    for (Ratio r : {Ratio{1, 16}, Ratio{1, 64}, Ratio{1, 256}}) {
        f.ratio = r;
        const auto report = flops_fixture_report(f);
        if (r == Ratio{1, 64}) EXPECT_LE(report.ratio, 0.10);
        EXPECT_LE(report.ratio, previous) << r.str();
        EXPECT_GT(report.clustering, 0u);
        previous = report.ratio;
    }
}

TEST(Flops, TextReport) {
    FlopsFixture f;
    f.height = f.width = 8;
    f.channels = 2;
    f.layers = 1;
    const std::string text = flops_fixture_report(f).to_text();
    for (const char* key : {"regular_flops: ", "hg_pooling_flops: ", "hg_layer0_sparse_right_flops: ",
                            "hg_layer0_dense_self_flops: ", "hg_layer0_bn_relu_flops: ", "hg_unpooling_flops: ",
                            "hg_total_flops: ", "ratio_hg_over_regular: ", "clustering_flops_excluded: "})
        EXPECT_NE(text.find(key), std::string::npos) << key;
}
