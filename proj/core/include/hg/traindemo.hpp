#pragma once

// Synthetic two-class segmentation: find the bright rectangle in a noisy
// 32x32 image. The model is a 3x3 stem conv (1 -> 8), an HG-Conv module
// (ratio 1/16, two layers, 8 -> 8) and a per-pixel linear classifier, trained
// end to end with plain SGD through the autodiff tape. Clustering is re-run
// on the stem features for every forward pass.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hg/clustering.hpp"
#include "hg/hgconv.hpp"
#include "hg/refconv.hpp"

namespace hg::demo {

inline constexpr std::size_t kImageSize = 32;
inline constexpr std::size_t kStemChannels = 8;
inline constexpr std::size_t kClasses = 2;

struct SyntheticSample {
    Dense<double> image;              ///< 1024 x 1, values in [0, 1]
    std::vector<std::size_t> labels;  ///< 1 inside the rectangle
};

struct Dataset {
    std::vector<SyntheticSample> train;
    std::vector<SyntheticSample> validation;
};

/// Background N(0.3, 0.05), one rectangle with sides in [6, 16] filled with
/// N(0.7, 0.05), clamped to [0, 1]. The first 80% of the samples (by index)
/// train, the rest validate. Throws DomainError when n < 5.
Dataset generate_dataset(std::size_t n, std::uint64_t seed);

struct DemoModel {
    KernelSet<double> stem;
    std::vector<double> stem_bias;
    HGConvModule<double> module;
    Dense<double> classifier;  ///< 8 x 2
    std::vector<double> classifier_bias;

    std::size_t parameter_count() const;
};

/// Weights and biases uniform in +-1/sqrt(fan_in); BN gamma = 1, beta = 0.
DemoModel init_model(std::uint64_t seed);

/// The demo's clustering settings: defaults with ratio 1/16.
ClusterConfig demo_cluster_config();

struct TrainOptions {
    std::size_t epochs = 15;
    double lr = 0.1;
    std::uint64_t seed = 1;
};

struct EpochMetrics {
    std::size_t epoch = 0;  ///< 1-based
    double loss = 0.0;      ///< mean training loss over the epoch
    double val_acc = 0.0;   ///< validation pixel accuracy after the epoch
};

/// "epoch <i> loss <f> val_acc <f>"
std::string format_metrics(const EpochMetrics& m);

/// Per-pixel class scores in eval mode; clustering is seeded by `cluster_seed`.
Dense<double> predict(const DemoModel& model, const SyntheticSample& sample, std::uint64_t cluster_seed);

/// Fraction of correctly classified validation pixels.
double evaluate(const DemoModel& model, const std::vector<SyntheticSample>& samples, std::uint64_t seed);

/// Per-sample SGD in index order. Throws DomainError for lr < 0 or epochs == 0
/// and NumericError, naming the epoch, on a non-finite loss.
std::vector<EpochMetrics> train(DemoModel& model, const Dataset& data, const TrainOptions& opts,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// generate_dataset + init_model + train, all derived from opts.seed.
std::vector<EpochMetrics> run_train_demo(std::size_t samples, const TrainOptions& opts,
                                         const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace hg::demo
