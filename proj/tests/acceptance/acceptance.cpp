// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance [--cli <path-to-hgconv>] [--only N]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hg/autodiff.hpp"
#include "hg/clustering.hpp"
#include "hg/flops.hpp"
#include "hg/hgconv.hpp"
#include "hg/pipelines.hpp"
#include "hg/pnm.hpp"
#include "hg/random.hpp"
#include "hg/tensor_file.hpp"
#include "hg/traindemo.hpp"
#include "hg/verify.hpp"

namespace fs = std::filesystem;
using namespace hg;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Dense<double> uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dense<double> m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

Outcome worst_case(const std::vector<CheckCase>& cases, double seconds, double limit) {
    double worst = 0.0;
    bool ok = true;
    for (const auto& c : cases) {
        worst = std::max(worst, c.max_abs_diff);
        ok = ok && c.passed();
    }
    return {ok && seconds < limit, std::to_string(cases.size()) + " cases, max|d| " + fmt("%.3g", worst) + ", " +
                                       fmt("%.2f", seconds) + " s (limit " + fmt("%.0f", limit) + " s)"};
}

Outcome criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cases = conv_equivalence_suite(grid_shapes_up_to(8), {1, 3}, 50);
    return worst_case(cases, seconds_since(t0), 10.0);
}

Outcome criterion2() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cases = identity_grouping_suite(grid_shapes_up_to(8), {1, 2, 3, 4}, 5);
    return worst_case(cases, seconds_since(t0), 5.0);
}

Outcome criterion3() {
    const auto s = Sparse<double>::from_dense(Dense<double>::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}}));
    const auto raw = coarsen_all(s, pixel_adjacency_all<double>(GridShape(1, 4)));
    const auto cleaned = noise_cancel(raw);
    const bool before = raw[Direction::right].to_dense() == Dense<double>::from_rows({{1, 1}, {0, 1}});
    const bool after = cleaned[Direction::right].to_dense() == Dense<double>::from_rows({{0, 1}, {0, 0}});
    return {before && after, std::string("before refinement ") + (before ? "exact" : "MISMATCH") +
                                 ", after noise canceling " + (after ? "exact" : "MISMATCH")};
}

Sparse<double> random_soft_assignment(std::size_t pixels, std::size_t groups, Rng& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    const std::size_t k = std::min<std::size_t>(groups, 1 + rng() % 4);
    std::vector<Triplet<double>> t;
    for (std::size_t p = 0; p < pixels; ++p) {
        std::vector<std::size_t> cols(groups);
        for (std::size_t g = 0; g < groups; ++g) cols[g] = g;
        std::shuffle(cols.begin(), cols.end(), rng);
        std::vector<double> w(k);
        double total = 0.0;
        for (auto& v : w) total += v = u(rng);
        for (std::size_t i = 0; i < k; ++i) t.push_back({p, cols[i], w[i] / total});
    }
    return Sparse<double>::from_triplets(pixels, groups, t);
}

Outcome criterion4() {
    std::size_t violations = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng = make_rng(derive_seed(seed, {4}));
        const GridShape shape(1 + rng() % 8, 1 + rng() % 8);
        const std::size_t groups = 1 + rng() % 8;
        const auto raw = coarsen_all(random_soft_assignment(shape.pixels(), groups, rng),
                                     pixel_adjacency_all<double>(shape));
        const auto nc = noise_cancel(raw);
        const auto g = refine(raw);
        for (Direction d : kAllDirections) {
            if (d == Direction::self) continue;
            for (std::size_t i = 0; i < groups; ++i)
                for (std::size_t j = 0; j < groups; ++j)
                    violations += std::min(nc[d].at(i, j), nc[opposite(d)].at(i, j)) != 0.0;
        }
        violations += !(g[Direction::self] == Sparse<double>::identity(groups));
        for (std::size_t i = 0; i < groups; ++i)
            for (std::size_t j = 0; j < groups; ++j) {
                if (i == j) continue;
                int count = 0;
                for (Direction d : kAllDirections)
                    if (d != Direction::self) count += g[d].at(i, j) != 0.0;
                violations += count > 1;
            }
        for (Direction d : kAllDirections)
            for (double v : g[d].values()) violations += v > 0.0 && v < 1e-7;
    }
    return {violations == 0, "100 fixtures, " + std::to_string(violations) + " violations"};
}

Outcome criterion5() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = ad::gradcheck(ad::make_hg_pipeline(), 1e-5);
    std::map<std::string, double> by_class;
    for (const auto& e : report.per_param) {
        double& v = by_class[ad::parameter_class(e.param)];
        v = std::max(v, e.max_rel_error);
    }
    const double secs = seconds_since(t0);
    bool ok = secs < 30.0;
    std::string detail;
    for (const char* cls : {"W", "gamma", "beta", "x", "assignment_logits"}) {
        const auto it = by_class.find(cls);
        ok = ok && it != by_class.end() && it->second <= 1e-5;
        detail += std::string(cls) + " " + (it == by_class.end() ? "missing" : fmt("%.2g", it->second)) + ", ";
    }
    return {ok, detail + fmt("%.2f", secs) + " s"};
}

Outcome criterion6() {
    const auto t0 = std::chrono::steady_clock::now();
    FlopsFixture f;
    double at64 = 0.0, previous = INFINITY;
    bool monotone = true;
    std::string ratios;
    for (Ratio r : {Ratio{1, 16}, Ratio{1, 64}, Ratio{1, 256}}) {
        f.ratio = r;
        const double ratio = flops_fixture_report(f).ratio;
        monotone = monotone && ratio <= previous;
        previous = ratio;
        if (r == Ratio{1, 64}) at64 = ratio;
        ratios += r.str() + "=" + fmt("%.4f", ratio) + " ";
    }
    const double secs = seconds_since(t0);
    return {at64 <= 0.10 && monotone && secs < 60.0,
            ratios + (monotone ? "monotone" : "NOT monotone") + ", " + fmt("%.2f", secs) + " s"};
}

Outcome criterion7() {
    // Row sums after every iteration.
    const GridShape shape(16, 16);
    Rng rng = make_rng(7);
    const auto x = uniform(shape.pixels(), 3, rng);
    ClusterConfig cfg;
    cfg.downsample_ratio = {1, 16};
    const auto seeds = sample_centers(importance_map(x, shape), cfg.group_count(shape.pixels()), cfg);
    double worst_row = 0.0;
    std::size_t iterations = 0;
    diff_slic<double>(x, shape, make_centers(x, shape, seeds), cfg, [&](std::size_t, const Sparse<double>& s) {
        ++iterations;
        for (std::size_t r = 0; r < s.rows(); ++r) {
            double sum = 0.0;
            for (double v : s.row_values(r)) sum += v;
            worst_row = std::max(worst_row, std::abs(sum - 1.0));
        }
    });
    const bool rows_ok = worst_row <= 1e-5 && iterations == cfg.iterations;

    // Two blobs separate cleanly.
    const GridShape blob_shape(6, 8);
    Dense<double> blobs(48, 1);
    for (std::size_t p = 0; p < 48; ++p) blobs(p, 0) = blob_shape.col_of(p) < 4 ? 0.0 : 1.0;
    ClusterConfig blob_cfg;
    blob_cfg.position_weight = 0.0;
    blob_cfg.iterations = 10;
    const auto blob_s = diff_slic(blobs, blob_shape,
                                  make_centers(blobs, blob_shape, {blob_shape.index(2, 1), blob_shape.index(3, 6)}),
                                  blob_cfg)
                            .assignment.to_dense();
    bool blob_ok = true;
    for (std::size_t p = 0; p < 48; ++p) {
        const std::size_t want = blob_shape.col_of(p) < 4 ? 0 : 1;
        blob_ok = blob_ok && blob_s(p, want) > blob_s(p, 1 - want);
    }

    // Seeded runs repeat exactly.
    ClusterConfig det_cfg;
    det_cfg.seed = 11;
    const auto xf = uniform(shape.pixels(), 3, rng);
    const auto a = cluster(xf, shape, det_cfg);
    const auto b = cluster(xf, shape, det_cfg);
    const bool det_ok = a.assignment == b.assignment && a.centers.vectors == b.centers.vectors;

    return {rows_ok && blob_ok && det_ok, "max|rowsum-1| " + fmt("%.2g", worst_row) + ", two-blob " +
                                              (blob_ok ? "consistent" : "INCONSISTENT") + ", repeat runs " +
                                              (det_ok ? "identical" : "DIFFER")};
}

Outcome criterion8() {
    const auto t0 = std::chrono::steady_clock::now();
    const GridShape shape(32, 32);
    Rng rng = make_rng(8);
    const auto x = uniform(shape.pixels(), 3, rng);
    const auto imp = importance_map(x, shape);
    AttentionMap mask{shape, std::vector<double>(shape.pixels(), 0.0)};
    // 10% of the pixels: a 32 x 10 vertical band minus a few rows -> 102 pixels.
    std::size_t covered = 0;
    for (std::size_t p = 0; p < shape.pixels() && covered < shape.pixels() / 10; ++p)
        if (shape.col_of(p) >= 11 && shape.col_of(p) < 15) {
            mask.values[p] = 1.0;
            ++covered;
        }
    ClusterConfig cfg;
    const std::size_t n = cfg.group_count(shape.pixels());
    const auto inside_fraction = [&](double alpha) {
        const auto modulated = modulate_importance(imp, mask, alpha);
        std::size_t inside = 0, total = 0;
        for (std::uint64_t draw = 0; draw < 1000; ++draw) {
            Rng r = make_rng(derive_seed(draw, {8}));
            for (std::size_t p : sample_centers(modulated, n, cfg, r)) {
                inside += mask.values[p] > 0.0;
                ++total;
            }
        }
        return double(inside) / double(total);
    };
    const double f0 = inside_fraction(0.0);
    const double f10 = inside_fraction(10.0);
    const double secs = seconds_since(t0);
    return {f10 >= 2.0 * f0 && secs < 10.0, "mask " + fmt("%.3f", double(covered) / double(shape.pixels())) +
                                                ", inside alpha=0 " + fmt("%.3f", f0) + ", alpha=10 " +
                                                fmt("%.3f", f10) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome criterion9() {
    const auto t0 = std::chrono::steady_clock::now();
    const demo::TrainOptions opts;
    const auto full = demo::run_train_demo(200, opts);
    const double secs = seconds_since(t0);
    // Training is sequential, so a shorter run must reproduce the prefix bit for bit.
    demo::TrainOptions shorter = opts;
    shorter.epochs = 2;
    const auto prefix = demo::run_train_demo(200, shorter);
    bool det = true;
    for (std::size_t e = 0; e < 2; ++e) det = det && prefix[e].loss == full[e].loss && prefix[e].val_acc == full[e].val_acc;
    const double acc = full.back().val_acc;
    const bool loss_drop = full[4].loss < full[0].loss;
    return {acc >= 0.85 && loss_drop && det && secs < 120.0,
            "val_acc " + fmt("%.4f", acc) + ", loss epoch1 " + fmt("%.4f", full[0].loss) + " epoch5 " +
                fmt("%.4f", full[4].loss) + ", " + (det ? "deterministic" : "NOT deterministic") + ", " +
                fmt("%.1f", secs) + " s"};
}

// ---- criterion 10 -------------------------------------------------------------

struct CliRun {
    int code = -1;
    std::string out;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

CliRun run_cli(const std::string& cli, const std::string& args, const fs::path& scratch) {
    const fs::path out = scratch / "stdout.txt";
    const std::string cmd = quote(cli) + " " + args + " >" + quote(out.string()) + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    const auto bytes = read_file(out);
    r.out.assign(bytes.begin(), bytes.end());
    return r;
}

Outcome criterion10(const std::string& cli) {
    std::vector<std::string> failures;

    // In-library round trips.
    Rng rng = make_rng(10);
    for (std::size_t channels : {1u, 3u}) {
        Image img{7, 5, channels, {}};
        for (std::size_t i = 0; i < 35 * channels; ++i) img.pixels.push_back(static_cast<std::uint8_t>(rng()));
        const auto bytes = write_pnm(img);
        if (write_pnm(read_pnm(bytes)) != bytes || read_pnm(bytes) != img) failures.push_back("pnm round trip");
    }
    Tensor t{{2, 3, 4}, {}};
    std::uniform_real_distribution<float> u(-1e3f, 1e3f);
    for (std::size_t i = 0; i < 24; ++i) t.values.push_back(u(rng));
    t.values[0] = -0.0f;
    t.values[1] = 1e-40f;  // subnormal
    const auto tb = write_tensor(t);
    if (write_tensor(read_tensor(tb)) != tb) failures.push_back("hgt1 round trip");

    if (cli.empty()) {
        failures.push_back("no --cli given");
    } else {
        const fs::path scratch = fs::temp_directory_path() / ("hg_acceptance_" + std::to_string(::getpid()));
        fs::create_directories(scratch);
        Image img{24, 16, 3, {}};
        for (std::size_t i = 0; i < img.width * img.height * 3; ++i)
            img.pixels.push_back(static_cast<std::uint8_t>((i * 37 + (i / 72) * 91) % 256));
        const fs::path input = scratch / "in.ppm";
        write_file(input, write_pnm(img));
        const std::string in = quote(input.string());
        const std::string viz = quote((scratch / "viz.ppm").string());
        const std::string assign = quote((scratch / "s.hgt").string());
        const std::string metrics = quote((scratch / "m.txt").string());

        const std::vector<std::pair<std::string, std::vector<fs::path>>> commands = {
            {"cluster --input " + in + " --seed 5 --out-viz " + viz + " --out-assign " + assign,
             {scratch / "viz.ppm", scratch / "s.hgt"}},
            {"conv-check --sizes 3x4,5x5 --seeds 3", {}},
            {"gradcheck --pipeline conv", {}},
            {"flops --height 16 --width 16 --channels 8 --seed 2", {}},
            {"train-demo --samples 5 --epochs 1 --seed 3 --out " + metrics, {scratch / "m.txt"}},
        };
        for (const auto& [args, files] : commands) {
            const std::string name = args.substr(0, args.find(' '));
            const CliRun first = run_cli(cli, args, scratch);
            std::vector<std::vector<std::uint8_t>> first_files;
            for (const auto& f : files) first_files.push_back(fs::exists(f) ? read_file(f) : std::vector<std::uint8_t>{});
            const CliRun second = run_cli(cli, args, scratch);
            if (first.code != 0) failures.push_back(name + " exit " + std::to_string(first.code));
            if (first.out != second.out) failures.push_back(name + " stdout differs");
            for (std::size_t i = 0; i < files.size(); ++i)
                if (first_files[i].empty() || !fs::exists(files[i]) || read_file(files[i]) != first_files[i])
                    failures.push_back(name + " output file differs");
        }
        if (read_pnm(read_file(scratch / "viz.ppm")).channels != 3) failures.push_back("viz not RGB");

        fs::path bad_cfg = scratch / "bad.ini";
        write_file(bad_cfg, {'[', 'x', ']', '\n'});
        const std::vector<std::pair<std::string, int>> codes = {
            {"--help", 0},
            {"gradcheck --pipeline conv --h 1e-300", 1},
            {"", 2},
            {"flops --layers 0", 2},
            {"cluster --input " + quote((scratch / "missing.pgm").string()), 3},
            {"cluster --input " + in + " --config " + quote(bad_cfg.string()), 4},
        };
        for (const auto& [args, want] : codes) {
            const int got = run_cli(cli, args, scratch).code;
            if (got != want)
                failures.push_back("'" + args + "' exit " + std::to_string(got) + " want " + std::to_string(want));
        }
        fs::remove_all(scratch);
    }

    std::string detail = "pnm/hgt1 round trips, 5 subcommands twice, 6 exit-code cases";
    if (!failures.empty()) {
        detail = "";
        for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
    }
    return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--cli" && i + 1 < argc) {
            cli = argv[++i];
        } else if (a == "--only" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--cli PATH] [--only N]\n", argv[0]);
            return 2;
        }
    }

    const std::vector<std::function<Outcome()>> criteria = {
        criterion1, criterion2, criterion3, criterion4, criterion5,
        criterion6, criterion7, criterion8, criterion9, [&] { return criterion10(cli); },
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.passed;
        std::printf("criterion %zu: %s  %s\n", i + 1, o.passed ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
