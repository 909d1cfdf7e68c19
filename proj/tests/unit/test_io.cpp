#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "hg/config.hpp"
#include "hg/error.hpp"
#include "hg/pnm.hpp"
#include "hg/tensor_file.hpp"
#include "hg/visualize.hpp"

using namespace hg;

namespace {

std::vector<std::uint8_t> bytes(std::string_view s) { return {s.begin(), s.end()}; }

template <typename F>
std::string error_message(F&& f) {
    try {
        f();
    } catch (const IoError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Pnm, MinimalGray) {
    const Image img = read_pnm(bytes("P5 1 1 255 \xff"));
    EXPECT_EQ(img.width, 1u);
    EXPECT_EQ(img.height, 1u);
    EXPECT_EQ(img.channels, 1u);
    EXPECT_EQ(img.pixels, std::vector<std::uint8_t>{255});
}

TEST(Pnm, CommentsAndWhitespace) {
    const Image img = read_pnm(bytes("P5\n# made by hand\n2\t\n 1 # trailing\n255\n\x01\x02"));
    EXPECT_EQ(img.width, 2u);
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{1, 2}));
}

TEST(Pnm, ColorRoundTrip) {
    Image img{3, 2, 3, {}};
    for (std::size_t i = 0; i < 18; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 13));
    const auto encoded = write_pnm(img);
    EXPECT_EQ(std::string(encoded.begin(), encoded.begin() + 11), "P6\n3 2\n255\n");
    EXPECT_EQ(read_pnm(encoded), img);
    EXPECT_EQ(write_pnm(read_pnm(encoded)), encoded);
}

TEST(Pnm, Errors) {
    EXPECT_NE(error_message([] { read_pnm(bytes("P3 1 1 255 0")); }).find("bad magic"), std::string::npos);
    EXPECT_NE(error_message([] { read_pnm(bytes("P5 1 1 65535 \x01\x01")); }).find("maxval must be 255, got 65535"),
              std::string::npos);
    EXPECT_NE(error_message([] { read_pnm(bytes("P6 2 2 255 \x01\x02\x03")); })
                  .find("truncated payload, expected 12 bytes, got 3"),
              std::string::npos);
    EXPECT_THROW(read_pnm(bytes("P5 1")), IoError);
    EXPECT_THROW(read_pnm({}), IoError);
}

TEST(Pnm, FileErrors) {
    EXPECT_THROW(read_file("/nonexistent/dir/x.pgm"), IoError);
    EXPECT_THROW(write_file("/nonexistent/dir/x.pgm", {1}), IoError);
}

TEST(Pnm, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "hg_test_io.pgm";
    const Image img{2, 2, 1, {0, 64, 128, 255}};
    write_file(path, write_pnm(img));
    EXPECT_EQ(read_pnm(read_file(path)), img);
    std::filesystem::remove(path);
}

TEST(Pnm, ImageFeatures) {
    const Image img{2, 1, 3, {0, 51, 255, 102, 204, 0}};
    const auto x = image_features<double>(img);
    ASSERT_EQ(x.rows(), 2u);
    ASSERT_EQ(x.cols(), 3u);
    EXPECT_DOUBLE_EQ(x(0, 1), 0.2);
    EXPECT_DOUBLE_EQ(x(0, 2), 1.0);
    EXPECT_DOUBLE_EQ(x(1, 1), 0.8);
}

TEST(TensorFile, RoundTrip) {
    for (const auto& dims : std::vector<std::vector<std::uint32_t>>{{3}, {2, 3}, {1, 2, 2}, {2, 1, 1, 2}}) {
        Tensor t{dims, {}};
        for (std::size_t i = 0; i < t.element_count(); ++i) t.values.push_back(0.5f * static_cast<float>(i) - 1.0f);
        const auto encoded = write_tensor(t);
        EXPECT_EQ(encoded.size(), 8 + 4 * dims.size() + 4 * t.element_count());
        EXPECT_EQ(read_tensor(encoded), t);
    }
}

TEST(TensorFile, LittleEndianLayout) {
    const auto b = write_tensor(Tensor{{1}, {1.0f}});
    const std::vector<std::uint8_t> expected = {'H', 'G', 'T', '1', 1, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f};
    EXPECT_EQ(b, expected);
}

TEST(TensorFile, Errors) {
    auto good = write_tensor(Tensor{{2, 2}, {1, 2, 3, 4}});
    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(read_tensor(bad_magic), IoError);
    auto short_payload = good;
    short_payload.pop_back();
    EXPECT_THROW(read_tensor(short_payload), IoError);
    auto long_payload = good;
    long_payload.push_back(0);
    EXPECT_THROW(read_tensor(long_payload), IoError);
    auto rank0 = good;
    rank0[4] = 0;
    EXPECT_THROW(read_tensor(rank0), IoError);
    auto rank5 = good;
    rank5[4] = 5;
    EXPECT_THROW(read_tensor(rank5), IoError);
}

TEST(TensorFile, DenseConversion) {
    const auto m = Dense<double>::from_rows({{1, 2, 3}, {4, 5, 6}});
    const Tensor t = to_tensor(m);
    EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{2, 3}));
    EXPECT_EQ(to_dense<double>(t), m);
    EXPECT_THROW(to_dense<double>(Tensor{{6}, {1, 2, 3, 4, 5, 6}}), ShapeError);
}

TEST(Config, EmptyTextGivesDefaults) { EXPECT_EQ(parse_config(""), RunConfig{}); }

TEST(Config, ParsesValues) {
    const RunConfig c = parse_config(
        "[cluster]\nratio = 1/16\niterations = 3\ntemperature = 0.1\nsampler = importance\nseed = 42\n"
        "[module]\nlayers = 2\nbatch_norm = false\n");
    EXPECT_EQ(c.cluster.downsample_ratio, (Ratio{1, 16}));
    EXPECT_EQ(c.cluster.iterations, 3u);
    EXPECT_DOUBLE_EQ(c.cluster.temperature, 0.1);
    EXPECT_EQ(c.cluster.sampler, Sampler::importance);
    EXPECT_EQ(c.cluster.seed, 42u);
    EXPECT_EQ(c.module.layers, 2u);
    EXPECT_FALSE(c.module.batch_norm);
    EXPECT_TRUE(c.module.noise_cancel);
}

TEST(Config, SerializeRoundTrip) {
    RunConfig c;
    c.cluster.temperature = 0.1 + 0.2;
    c.cluster.focus_weight = 1.0 / 3.0;
    c.cluster.sampler = Sampler::importance;
    c.module.degree_eps = 3e-9;
    c.module.max_direction = false;
    const std::string text = serialize_config(c);
    EXPECT_EQ(parse_config(text), c);
    EXPECT_EQ(serialize_config(parse_config(text)), text);
}

TEST(Config, Rejections) {
    EXPECT_THROW(parse_config("[cluster]\nratoi = 1/64\n"), ConfigError);
    EXPECT_THROW(parse_config("[clusters]\nratio = 1/64\n"), ConfigError);
    EXPECT_THROW(parse_config("[extra]\n"), ConfigError);
    EXPECT_THROW(parse_config("[cluster]\niterations = many\n"), ConfigError);
    EXPECT_THROW(parse_config("[cluster]\ntemperature = -1\n"), ConfigError);
    EXPECT_THROW(parse_config("[module]\nbatch_norm = maybe\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/run.ini"), IoError);
}

TEST(Visualize, GroupColorsDistinctAndAvoidMarker) {
    const auto colors = group_colors(200, 5);
    std::set<std::array<std::uint8_t, 3>> unique(colors.begin(), colors.end());
    EXPECT_EQ(unique.size(), 200u);
    EXPECT_EQ(unique.count(kCenterMarker), 0u);
    EXPECT_EQ(group_colors(200, 5), colors);
}

TEST(Visualize, SingleGroup) {
    const GridShape shape(2, 3);
    const auto x = Dense<double>(6, 1, 0.5);
    auto centers = make_centers(x, shape, {4});
    const auto s = Sparse<double>::from_dense(Dense<double>(6, 1, 1.0));
    const Image img = cluster_visualize(s, shape, centers, 1);
    ASSERT_EQ(img.channels, 3u);
    ASSERT_EQ(img.pixels.size(), 18u);
    std::set<std::array<std::uint8_t, 3>> seen;
    for (std::size_t p = 0; p < 6; ++p) seen.insert({img.pixels[3 * p], img.pixels[3 * p + 1], img.pixels[3 * p + 2]});
    EXPECT_EQ(seen.size(), 2u);  // group color + marker
    EXPECT_EQ(img.pixels[12], kCenterMarker[0]);
    EXPECT_EQ(img.pixels[13], kCenterMarker[1]);
}

TEST(Visualize, TwoGroupsOnStrip) {
    const GridShape shape(1, 4);
    const auto x = Dense<double>(4, 1, 0.5);
    auto centers = make_centers(x, shape, {0, 3});
    const auto s = Sparse<double>::from_dense(Dense<double>::from_rows({{1, 0}, {0.6, 0.4}, {0.5, 0.5}, {0, 1}}));
    const Image img = cluster_visualize(s, shape, centers, 9);
    const auto px = [&](std::size_t p) {
        return std::array<std::uint8_t, 3>{img.pixels[3 * p], img.pixels[3 * p + 1], img.pixels[3 * p + 2]};
    };
    const auto colors = group_colors(2, 9);
    EXPECT_EQ(px(0), kCenterMarker);
    EXPECT_EQ(px(1), colors[0]);
    EXPECT_EQ(px(2), colors[0]);  // tie goes to the lower group
    EXPECT_EQ(px(3), kCenterMarker);
    EXPECT_EQ(cluster_visualize(s, shape, centers, 9), img);
}
