// hgconv: command-line front end for clustering, oracle checks, gradient
// checks, FLOPs accounting and the synthetic training demo.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hg/autodiff.hpp"
#include "hg/clustering.hpp"
#include "hg/config.hpp"
#include "hg/error.hpp"
#include "hg/flops.hpp"
#include "hg/hgconv.hpp"
#include "hg/pipelines.hpp"
#include "hg/pnm.hpp"
#include "hg/tensor_file.hpp"
#include "hg/traindemo.hpp"
#include "hg/verify.hpp"
#include "hg/visualize.hpp"

namespace {

enum ExitCode : int {
    kOk = 0,
    kVerificationFailed = 1,
    kUsage = 2,
    kIo = 3,
    kConfig = 4,
};

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  verification failure (tolerance exceeded, non-finite training loss)\n"
    "  2  usage error (unknown flag, bad option value)\n"
    "  3  I/O error (unreadable or malformed input file, unwritable output)\n"
    "  4  configuration file parse failure\n";

// ---- cluster ----------------------------------------------------------------

struct ClusterArgs {
    std::string input;
    std::string config;
    std::string out_viz;
    std::string out_assign;
    std::string attention;
    std::optional<double> alpha;
    std::optional<std::uint64_t> seed;
};

hg::AttentionMap load_attention(const std::string& path, const hg::GridShape& shape) {
    const hg::Tensor t = hg::read_tensor(hg::read_file(path));
    if (t.element_count() != shape.pixels())
        throw hg::IoError("attention tensor has " + std::to_string(t.element_count()) + " values, image has " +
                          std::to_string(shape.pixels()) + " pixels");
    hg::AttentionMap a{shape, std::vector<double>(t.values.begin(), t.values.end())};
    try {
        a.validate();
    } catch (const hg::DomainError& e) {
        throw hg::IoError(std::string("attention tensor: ") + e.what());
    }
    return a;
}

int run_cluster(const ClusterArgs& args) {
    hg::RunConfig cfg = args.config.empty() ? hg::RunConfig{} : hg::load_config(args.config);
    if (args.seed) cfg.cluster.seed = *args.seed;
    if (args.alpha) cfg.cluster.focus_weight = *args.alpha;
    cfg.cluster.validate();

    const hg::Image img = hg::read_pnm(hg::read_file(args.input));
    const hg::GridShape shape = img.shape();
    const hg::Dense<float> x = hg::image_features<float>(img);
    std::optional<hg::AttentionMap> attention;
    if (!args.attention.empty()) attention = load_attention(args.attention, shape);

    const hg::SlicResult<float> slic = hg::cluster(x, shape, cfg.cluster, attention ? &*attention : nullptr);
    const hg::GroupAdjacencySet<float> g =
        hg::build_group_adjacency(slic.assignment, shape, cfg.module.refine_options());

    if (!args.out_viz.empty())
        hg::write_file(args.out_viz,
                       hg::write_pnm(hg::cluster_visualize(slic.assignment, shape, slic.assignment_centers,
                                                           cfg.cluster.seed)));
    if (!args.out_assign.empty())
        hg::write_file(args.out_assign, hg::write_tensor(hg::to_tensor(slic.assignment.to_dense())));

    std::vector<std::size_t> sizes(g.groups(), 0);
    for (std::size_t p = 0; p < slic.assignment.rows(); ++p) {
        const auto idx = slic.assignment.row_indices(p);
        const auto val = slic.assignment.row_values(p);
        if (idx.empty()) continue;
        const auto best = std::max_element(val.begin(), val.end()) - val.begin();
        ++sizes[idx[static_cast<std::size_t>(best)]];
    }
    std::printf("pixels: %zu\n", shape.pixels());
    std::printf("groups: %zu\n", g.groups());
    std::printf("mean_cluster_size: %.6f\n", static_cast<double>(shape.pixels()) / static_cast<double>(g.groups()));
    std::printf("max_cluster_size: %zu\n", *std::max_element(sizes.begin(), sizes.end()));
    std::printf("empty_clusters: %zu\n", static_cast<std::size_t>(std::count(sizes.begin(), sizes.end(), 0)));
    std::printf("assignment_nnz: %zu\n", slic.assignment.nnz());
    for (hg::Direction d : hg::kAllDirections)
        std::printf("adjacency_nnz_%s: %zu\n", std::string(hg::name(d)).c_str(), g[d].nnz());
    return kOk;
}

// ---- conv-check -------------------------------------------------------------

int run_conv_check(const std::string& sizes, std::size_t seeds) {
    const auto shapes = sizes.empty() ? hg::grid_shapes_up_to(8) : hg::parse_grid_shapes(sizes);
    bool ok = true;
    double worst = 0.0;
    const auto report = [&](const std::vector<hg::CheckCase>& cases) {
        for (const auto& c : cases) {
            std::printf("%-28s max_abs_diff %.3e  %s\n", c.name.c_str(), c.max_abs_diff, c.passed() ? "ok" : "FAIL");
            ok = ok && c.passed();
            worst = std::max(worst, c.max_abs_diff);
        }
    };
    report(hg::conv_equivalence_suite(shapes, {1, 3}, seeds));
    report(hg::identity_grouping_suite(shapes, {1, 4}, seeds));
    std::printf("overall max_abs_diff %.3e tolerance %.0e: %s\n", worst, hg::kEquivalenceTolerance,
                ok ? "PASS" : "FAIL");
    return ok ? kOk : kVerificationFailed;
}

// ---- gradcheck --------------------------------------------------------------

int run_gradcheck(const std::string& pipeline, double h, bool unrolled) {
    if (!(h > 0.0)) throw hg::DomainError("--h must be positive");
    hg::ad::Pipeline p;
    if (pipeline == "hg") p = hg::ad::make_hg_pipeline();
    else if (pipeline == "conv") p = hg::ad::make_conv_pipeline(3);
    else p = hg::ad::make_slic_pipeline(11, unrolled);
    constexpr double kTolerance = 1e-5;
    const hg::ad::GradcheckReport r = hg::ad::gradcheck(p, h);
    for (const auto& e : r.per_param)
        std::printf("%-22s max_rel_error %.3e  max_abs_grad %.3e\n", e.param.c_str(), e.max_rel_error,
                    e.max_abs_analytic);
    const bool ok = r.max_rel_error <= kTolerance;
    std::printf("pipeline %s h %.1e max_rel_error %.3e at %s[%zu] tolerance %.0e: %s\n", p.name.c_str(), h,
                r.max_rel_error, r.offending_param.c_str(), r.offending_index, kTolerance, ok ? "PASS" : "FAIL");
    return ok ? kOk : kVerificationFailed;
}

// ---- train-demo -------------------------------------------------------------

int run_train_demo(const hg::demo::TrainOptions& opts, std::size_t samples, const std::string& out_path) {
    std::ofstream out;
    if (!out_path.empty()) {
        out.open(out_path, std::ios::trunc);
        if (!out) throw hg::IoError("cannot open " + out_path + " for writing");
    }
    std::printf("parameters: %zu\n", hg::demo::init_model(opts.seed).parameter_count());
    hg::demo::run_train_demo(samples, opts, [&](const hg::demo::EpochMetrics& m) {
        const std::string line = hg::demo::format_metrics(m);
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        if (out) out << line << '\n';
    });
    if (out && !out.flush()) throw hg::IoError("write failed: " + out_path);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous grid convolution toolkit", "hgconv"};
    app.footer(kExitCodeHelp);
    app.set_version_flag("--version", std::string("hgconv ") + HGCONV_VERSION);
    app.require_subcommand(1);

    ClusterArgs cluster_args;
    auto* cluster = app.add_subcommand("cluster", "Cluster an image into groups and report statistics");
    cluster->add_option("--input", cluster_args.input, "PGM/PPM input image")->required();
    cluster->add_option("--config", cluster_args.config, "INI run configuration");
    cluster->add_option("--out-viz", cluster_args.out_viz, "PPM visualization output");
    cluster->add_option("--out-assign", cluster_args.out_assign, "HGT1 dense assignment output");
    cluster->add_option("--attention", cluster_args.attention, "HGT1 attention map with values in [0, 1]");
    cluster->add_option("--alpha", cluster_args.alpha, "attention weight (overrides the config)");
    cluster->add_option("--seed", cluster_args.seed, "random seed (overrides the config)");

    std::string sizes;
    std::size_t seeds = 50;
    auto* conv_check = app.add_subcommand("conv-check", "Check graph convolution against the dense oracle");
    conv_check->add_option("--sizes", sizes, "comma-separated HxW list (default: all up to 8x8)");
    conv_check->add_option("--seeds", seeds, "random draws per case")->check(CLI::PositiveNumber);

    std::string pipeline = "hg";
    double h = hg::ad::kDefaultGradcheckStep;
    bool unrolled = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare reverse-mode gradients with finite differences");
    gradcheck->add_option("--pipeline", pipeline, "hg, conv or slic")
        ->check(CLI::IsMember({"hg", "conv", "slic"}));
    gradcheck->set_help_flag("--help", "Print this help message and exit");
    gradcheck->add_option("--h", h, "central-difference step");
    gradcheck->add_flag("--unrolled", unrolled, "differentiate through every SLIC iteration (slic only)");

    hg::FlopsFixture fixture;
    std::string ratio = "1/64";
    auto* flops = app.add_subcommand("flops", "FLOPs of the HG module versus regular 3x3 convolution");
    flops->add_option("--height", fixture.height)->check(CLI::PositiveNumber);
    flops->add_option("--width", fixture.width)->check(CLI::PositiveNumber);
    flops->add_option("--channels", fixture.channels)->check(CLI::PositiveNumber);
    flops->add_option("--ratio", ratio, "groups per pixel, e.g. 1/64");
    flops->add_option("--layers", fixture.layers)->check(CLI::PositiveNumber);
    flops->add_option("--seed", fixture.seed);

    hg::demo::TrainOptions train_opts;
    std::size_t samples = 200;
    std::string metrics_out;
    auto* train = app.add_subcommand("train-demo", "Train on the synthetic rectangle segmentation task");
    train->add_option("--epochs", train_opts.epochs)->check(CLI::PositiveNumber);
    train->add_option("--lr", train_opts.lr)->check(CLI::NonNegativeNumber);
    train->add_option("--seed", train_opts.seed);
    train->add_option("--samples", samples, "dataset size (>= 5)");
    train->add_option("--out", metrics_out, "metrics output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*cluster) return run_cluster(cluster_args);
        if (*conv_check) return run_conv_check(sizes, seeds);
        if (*gradcheck) return run_gradcheck(pipeline, h, unrolled);
        if (*flops) {
            try {
                fixture.ratio = hg::Ratio::parse(ratio);
            } catch (const hg::ConfigError& e) {
                throw hg::DomainError(std::string("--ratio: ") + e.what());
            }
            std::fputs(hg::flops_fixture_report(fixture).to_text().c_str(), stdout);
            return kOk;
        }
        if (*train) return run_train_demo(train_opts, samples, metrics_out);
    } catch (const hg::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kIo;
    } catch (const hg::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfig;
    } catch (const hg::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kVerificationFailed;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
