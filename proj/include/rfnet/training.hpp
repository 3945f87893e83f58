#pragma once

// Adam training of the float model: augmentation pipeline, stepped learning
// rate, per-epoch loss/lambda/alpha/beta log. Deterministic in (config, seed);
// gradients accumulate in sample-index order.

#include <array>
#include <string>
#include <vector>

#include "rfnet/datagen.hpp"
#include "rfnet/network.hpp"

namespace rfnet {

struct TrainConfig {
    std::uint64_t seed = 0;
    int epochs = 20;
    double lr = 1e-4;
    int lr_decay_every = 15;  // epochs between /10 steps
    int batch = 4;
    int resolution = 64;
    std::vector<int> channel_plan{16, 32, 64, 128, 256};
    int reduction = 4;
    FusionVariant variant = FusionVariant::Full;
    bool augment = true;
};

struct EpochStats {
    int epoch = 0;
    double loss_bce = 0.0;
    double loss_iou = 0.0;
    double lr = 0.0;
    std::array<double, 5> mean_lambda{};
    std::array<double, 5> alpha{};
    std::array<double, 5> beta{};
};

class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamList<float>& params, double lr);

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

// Identical geometric transform on rgb/depth/gt: horizontal flip (p=0.5),
// rotation within ±10° (nearest), random border crop up to 10% per side with
// resize back (bilinear for rgb/depth, nearest for the mask).
SamplePair augment_sample(const SamplePair& sample, Rng& rng);

// Plain-data resampling helpers (no autograd), used by augmentation and eval.
Tensor<float> resize_bilinear_image(const Tensor<float>& img, int out_h, int out_w);
Tensor<float> resize_nearest_image(const Tensor<float>& img, int out_h, int out_w);

RFNetModel<float> train(const std::vector<SamplePair>& data, const TrainConfig& config,
                        std::vector<EpochStats>& log);

void write_epoch_csv(const std::string& path, const std::vector<EpochStats>& log);

// Sigmoid saliency map from a forward pass, detached from the graph.
Tensor<float> predict_map(const RFNetModel<float>& model, const SamplePair& sample);

}  // namespace rfnet
