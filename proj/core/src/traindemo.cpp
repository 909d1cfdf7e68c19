#include "hg/traindemo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hg/autodiff.hpp"
#include "hg/error.hpp"
#include "hg/random.hpp"

namespace hg::demo {

namespace {

// Sub-stream tags under the root seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kTrainClusterStream = 3;
constexpr std::uint64_t kEvalClusterStream = 4;

const GridShape kShape(kImageSize, kImageSize);

SyntheticSample make_sample(Rng& rng) {
    std::normal_distribution<double> background(0.3, 0.05);
    std::normal_distribution<double> foreground(0.7, 0.05);
    std::uniform_int_distribution<std::size_t> side(6, 16);
    const std::size_t h = side(rng);
    const std::size_t w = side(rng);
    const std::size_t top = std::uniform_int_distribution<std::size_t>(0, kImageSize - h)(rng);
    const std::size_t left = std::uniform_int_distribution<std::size_t>(0, kImageSize - w)(rng);

    SyntheticSample s{Dense<double>(kShape.pixels(), 1), std::vector<std::size_t>(kShape.pixels(), 0)};
    for (std::size_t r = 0; r < kImageSize; ++r) {
        for (std::size_t c = 0; c < kImageSize; ++c) {
            const std::size_t p = kShape.index(r, c);
            const bool inside = r >= top && r < top + h && c >= left && c < left + w;
            const double v = inside ? foreground(rng) : background(rng);
            s.image(p, 0) = std::clamp(v, 0.0, 1.0);
            s.labels[p] = inside ? 1 : 0;
        }
    }
    return s;
}

Dense<double> uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Dense<double> m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

std::vector<double> uniform_vector(std::size_t n, double bound, Rng& rng) {
    const Dense<double> m = uniform(1, n, bound, rng);
    return {m.data().begin(), m.data().end()};
}

KernelSet<double> uniform_kernels(std::size_t cin, std::size_t cout, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(kNumDirections * cin));
    KernelSet<double> k;
    for (auto& w : k.weights) w = uniform(cin, cout, bound, rng);
    return k;
}

Dense<double> row_of(const std::vector<double>& v) { return Dense<double>(1, v.size(), v); }

CenterSet<double> initial_centers(const Dense<double>& features, const ClusterConfig& cfg, std::uint64_t seed) {
    const ImportanceMap imp = importance_map(features, kShape);
    Rng rng = make_rng(seed);
    const auto seeds = sample_centers(imp, cfg.group_count(kShape.pixels()), cfg, rng);
    return make_centers(features, kShape, seeds);
}

Dense<double> stem_forward(const DemoModel& m, const Dense<double>& image) {
    Dense<double> out = conv_as_graph(image, kShape, m.stem);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += m.stem_bias[j];
    return out;
}

void sgd_step(Dense<double>& param, const Dense<double>& grad, double lr) {
    auto p = param.data();
    const auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

void sgd_step(std::vector<double>& param, const Dense<double>& grad, double lr) {
    const auto g = grad.data();
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * g[i];
}

// One taped forward/backward on a sample; returns the loss.
double train_step(DemoModel& model, const SyntheticSample& sample, const ClusterConfig& cfg, std::uint64_t seed,
                  double lr) {
    using namespace hg::ad;
    Tape tape;
    const Var x = tape.constant(sample.image);
    const KernelVars stem = leaf_kernels(tape, model.stem);
    const Var stem_bias = tape.leaf(row_of(model.stem_bias));
    std::vector<LayerVars> layers;
    for (const auto& l : model.module.layers) layers.push_back(leaf_layer(tape, l));
    const Var wc = tape.leaf(model.classifier);
    const Var bc = tape.leaf(row_of(model.classifier_bias));

    const Var features = tape.add_row(ad::conv_as_graph(tape, x, kShape, stem), stem_bias);
    const CenterSet<double> initial = initial_centers(tape.value(features), cfg, seed);
    const TapedSlic slic = ad::diff_slic(tape, features, kShape, initial, cfg);
    const Sparse<double> s = slic.assignment.pattern->with_values(
        {tape.value(slic.assignment.values).data().begin(), tape.value(slic.assignment.values).data().end()});
    const GroupAdjacencySet<double> g = build_group_adjacency(s, kShape);

    const Var z = ad::hg_module_forward(tape, features, slic.assignment, g, model.module, layers, BnMode::train);
    const Var logits = tape.add_row(tape.matmul(z, wc), bc);
    const Var loss = tape.cross_entropy(logits, sample.labels);
    const double loss_value = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_value)) return loss_value;

    const Gradients grads = tape.backward(loss);
    // Running statistics from the same batch, before the weights move.
    {
        HGConvModule<double> scratch = model.module;
        hg_module_forward(tape.value(features), s, g, scratch, BnMode::train);
        for (std::size_t l = 0; l < scratch.layers.size(); ++l) {
            model.module.layers[l].bn.running_mean = scratch.layers[l].bn.running_mean;
            model.module.layers[l].bn.running_var = scratch.layers[l].bn.running_var;
        }
    }
    for (std::size_t d = 0; d < kNumDirections; ++d) sgd_step(model.stem.weights[d], grads[stem[d]], lr);
    sgd_step(model.stem_bias, grads[stem_bias], lr);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& layer = model.module.layers[l];
        for (std::size_t d = 0; d < kNumDirections; ++d)
            sgd_step(layer.kernels.weights[d], grads[layers[l].kernels[d]], lr);
        sgd_step(layer.bn.gamma, grads[layers[l].gamma], lr);
        sgd_step(layer.bn.beta, grads[layers[l].beta], lr);
    }
    sgd_step(model.classifier, grads[wc], lr);
    sgd_step(model.classifier_bias, grads[bc], lr);
    return loss_value;
}

}  // namespace

Dataset generate_dataset(std::size_t n, std::uint64_t seed) {
    if (n < 5) throw DomainError("generate_dataset: need at least 5 samples for a train/validation split");
    Dataset d;
    const std::size_t n_val = n / 5;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = make_rng(derive_seed(seed, {kDataStream, i}));
        (i < n - n_val ? d.train : d.validation).push_back(make_sample(rng));
    }
    return d;
}

std::size_t DemoModel::parameter_count() const {
    std::size_t n = stem_bias.size() + classifier.size() + classifier_bias.size();
    for (const auto& w : stem.weights) n += w.size();
    for (const auto& l : module.layers) {
        for (const auto& w : l.kernels.weights) n += w.size();
        n += l.bn.gamma.size() + l.bn.beta.size();
    }
    return n;
}

DemoModel init_model(std::uint64_t seed) {
    Rng rng = make_rng(derive_seed(seed, {kInitStream}));
    DemoModel m;
    m.stem = uniform_kernels(1, kStemChannels, rng);
    m.stem_bias = uniform_vector(kStemChannels, 1.0 / std::sqrt(double(kNumDirections)), rng);
    for (int l = 0; l < 2; ++l)
        m.module.layers.push_back({uniform_kernels(kStemChannels, kStemChannels, rng),
                                   BNParams<double>::identity(kStemChannels)});
    const double bound = 1.0 / std::sqrt(double(kStemChannels));
    m.classifier = uniform(kStemChannels, kClasses, bound, rng);
    m.classifier_bias = uniform_vector(kClasses, bound, rng);
    return m;
}

ClusterConfig demo_cluster_config() {
    ClusterConfig cfg;
    cfg.downsample_ratio = Ratio{1, 16};
    return cfg;
}

std::string format_metrics(const EpochMetrics& m) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f val_acc %.6f", m.epoch, m.loss, m.val_acc);
    return buf;
}

Dense<double> predict(const DemoModel& model, const SyntheticSample& sample, std::uint64_t cluster_seed) {
    const ClusterConfig cfg = demo_cluster_config();
    const Dense<double> features = stem_forward(model, sample.image);
    const CenterSet<double> initial = initial_centers(features, cfg, cluster_seed);
    const SlicResult<double> slic = diff_slic(features, kShape, initial, cfg);
    const GroupAdjacencySet<double> g = build_group_adjacency(slic.assignment, kShape);
    Dense<double> z = hg_module_forward(features, slic.assignment, g, model.module);
    Dense<double> out = matmul(z, model.classifier);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += model.classifier_bias[j];
    return out;
}

double evaluate(const DemoModel& model, const std::vector<SyntheticSample>& samples, std::uint64_t seed) {
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Dense<double> scores = predict(model, samples[i], derive_seed(seed, {kEvalClusterStream, i}));
        for (std::size_t p = 0; p < scores.rows(); ++p) {
            const std::size_t guess = scores(p, 1) > scores(p, 0) ? 1 : 0;
            correct += guess == samples[i].labels[p];
        }
        total += scores.rows();
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<EpochMetrics> train(DemoModel& model, const Dataset& data, const TrainOptions& opts,
                                const std::function<void(const EpochMetrics&)>& on_epoch) {
    if (!(opts.lr >= 0.0)) throw DomainError("train: learning rate must be >= 0");
    if (opts.epochs == 0) throw DomainError("train: epochs must be >= 1");
    if (data.train.empty()) throw DomainError("train: empty training set");
    const ClusterConfig cfg = demo_cluster_config();
    std::vector<EpochMetrics> history;
    for (std::size_t e = 1; e <= opts.epochs; ++e) {
        double total = 0.0;
        for (std::size_t i = 0; i < data.train.size(); ++i) {
            const double loss =
                train_step(model, data.train[i], cfg, derive_seed(opts.seed, {kTrainClusterStream, i}), opts.lr);
            if (!std::isfinite(loss))
                throw NumericError("train: non-finite loss in epoch " + std::to_string(e) + ", sample " +
                                   std::to_string(i));
            total += loss;
        }
        EpochMetrics m{e, total / static_cast<double>(data.train.size()), evaluate(model, data.validation, opts.seed)};
        history.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    return history;
}

std::vector<EpochMetrics> run_train_demo(std::size_t samples, const TrainOptions& opts,
                                         const std::function<void(const EpochMetrics&)>& on_epoch) {
    const Dataset data = generate_dataset(samples, opts.seed);
    DemoModel model = init_model(opts.seed);
    return train(model, data, opts, on_epoch);
}

}  // namespace hg::demo
