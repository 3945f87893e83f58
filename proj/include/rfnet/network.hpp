#pragma once

// Dual-stream encoder, per-stage adaptive fusion, plain conv-upsample
// decoder with a single saliency head, and the BCE/IoU losses.

#include <string>
#include <vector>

#include "rfnet/checkpoint.hpp"
#include "rfnet/fusion.hpp"
#include "rfnet/tensor.hpp"

namespace rfnet {

struct ModelConfig {
    std::vector<int> channel_plan{16, 32, 64, 128, 256};
    int reduction = 4;
    FusionVariant variant = FusionVariant::Full;
};

template <class T>
struct EncoderStream {
    std::vector<Tensor<T>> conv_w, conv_b;  // stage i: 3x3 pad 1, then relu + 2x2 max pool

    static EncoderStream init(int in_channels, const std::vector<int>& plan, Rng& rng) {
        EncoderStream enc;
        int in_c = in_channels;
        for (int out_c : plan) {
            enc.conv_w.push_back(fanin_init<T>({out_c, in_c, 3, 3}, in_c * 9, rng));
            enc.conv_b.push_back(Tensor<T>::zeros({out_c}, true));
            in_c = out_c;
        }
        return enc;
    }

    std::vector<Tensor<T>> forward(const Tensor<T>& x) const {
        std::vector<Tensor<T>> features;
        Tensor<T> cur = x;
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            cur = spatial_max_pool(relu(conv2d(cur, conv_w[i], conv_b[i], 1, 1, 1)), 2, 2);
            features.push_back(cur);
        }
        return features;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            const std::string stage = prefix + ".stage" + std::to_string(i + 1);
            out.push_back({stage + ".kernel", conv_w[i]});
            out.push_back({stage + ".bias", conv_b[i]});
        }
    }
};

template <class T>
struct DecoderParams {
    std::vector<Tensor<T>> lat_w, lat_b;  // 3x3 laterals onto a common width
    Tensor<T> head_w, head_b;             // 1x1 to the logit map

    static DecoderParams init(const std::vector<int>& plan, Rng& rng) {
        DecoderParams dec;
        const int width = plan.front();
        for (int c : plan) {
            dec.lat_w.push_back(fanin_init<T>({width, c, 3, 3}, c * 9, rng));
            dec.lat_b.push_back(Tensor<T>::zeros({width}, true));
        }
        dec.head_w = fanin_init<T>({1, width, 1, 1}, width, rng);
        dec.head_b = Tensor<T>::zeros({1}, true);
        return dec;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t i = 0; i < lat_w.size(); ++i) {
            const std::string stage = prefix + ".lateral" + std::to_string(i + 1);
            out.push_back({stage + ".kernel", lat_w[i]});
            out.push_back({stage + ".bias", lat_b[i]});
        }
        out.push_back({prefix + ".head.kernel", head_w});
        out.push_back({prefix + ".head.bias", head_b});
    }
};

template <class T>
struct ForwardResult {
    Tensor<T> logits;                 // 1×H×W, pre-sigmoid
    Tensor<T> lambda;                 // 5 depth-confidence values
    std::vector<Tensor<T>> fused;     // per-stage fusion outputs
    std::vector<T> alphas, betas;     // stage blend weights (raw values)
};

template <class T>
struct RFNetModel {
    ModelConfig config;
    EncoderStream<T> rgb_encoder, depth_encoder;
    LwaParams<T> lwa;                           // Full variant only
    std::vector<FusionStageParams<T>> stages;   // one per encoder stage
    DecoderParams<T> decoder;

    static RFNetModel init(const ModelConfig& config, std::uint64_t seed) {
        check_shape(config.channel_plan.size() == 5, "model: channel plan must have 5 stages");
        RFNetModel m;
        m.config = config;
        Rng rng(seed);
        m.rgb_encoder = EncoderStream<T>::init(3, config.channel_plan, rng);
        m.depth_encoder = EncoderStream<T>::init(1, config.channel_plan, rng);
        if (variant_uses_lwa(config.variant)) {
            m.lwa = LwaParams<T>::init(config.channel_plan[0], config.reduction, rng);
        }
        int prev = 0;
        for (int c : config.channel_plan) {
            m.stages.push_back(FusionStageParams<T>::init(c, prev, config.reduction, config.variant, rng));
            prev = c;
        }
        m.decoder = DecoderParams<T>::init(config.channel_plan, rng);
        return m;
    }

    ParamList<T> named_params() {
        ParamList<T> params;
        rgb_encoder.collect("encoder.rgb", params);
        depth_encoder.collect("encoder.depth", params);
        if (variant_uses_lwa(config.variant)) lwa.collect("lwa", params);
        for (std::size_t i = 0; i < stages.size(); ++i) {
            stages[i].collect("fusion.stage" + std::to_string(i + 1), params);
        }
        decoder.collect("decoder", params);
        return params;
    }

    ForwardResult<T> forward(const Tensor<T>& rgb, const Tensor<T>& depth) const {
        check_shape(rgb.rank() == 3 && rgb.dim(0) == 3, "forward: rgb must be 3×H×W, got " + shape_str(rgb.shape()));
        check_shape(depth.rank() == 3 && depth.dim(0) == 1,
                    "forward: depth must be 1×H×W, got " + shape_str(depth.shape()));
        check_shape(rgb.dim(1) == depth.dim(1) && rgb.dim(2) == depth.dim(2),
                    "forward: rgb and depth resolutions differ");
        const int h = rgb.dim(1), w = rgb.dim(2);
        check_shape(h % 32 == 0 && w % 32 == 0, "forward: input resolution " + std::to_string(h) + "x" +
                                                    std::to_string(w) + " must be divisible by 32");

        auto rgb_feats = rgb_encoder.forward(rgb);
        auto depth_feats = depth_encoder.forward(depth);

        ForwardResult<T> result;
        if (variant_uses_lwa(config.variant)) {
            result.lambda = lwa_forward(rgb_feats[0], depth_feats[0], lwa).lambda;
        } else {
            result.lambda = Tensor<T>::full({5}, T(1));
        }

        for (std::size_t i = 0; i < stages.size(); ++i) {
            auto lambda_i = select(result.lambda, static_cast<int>(i));
            const Tensor<T>* prev = (i == 0) ? nullptr : &result.fused.back();
            result.fused.push_back(af_fuse(rgb_feats[i], depth_feats[i], lambda_i, stages[i], prev));
            result.alphas.push_back(stages[i].alpha.item());
            result.betas.push_back(stages[i].beta.item());
        }

        Tensor<T> top;
        for (int i = static_cast<int>(stages.size()) - 1; i >= 0; --i) {
            auto lateral = conv2d(result.fused[static_cast<std::size_t>(i)], decoder.lat_w[static_cast<std::size_t>(i)],
                                  decoder.lat_b[static_cast<std::size_t>(i)], 1, 1, 1);
            if (!top.defined()) {
                top = lateral;
            } else {
                top = add(lateral, upsample_bilinear(top, lateral.dim(1), lateral.dim(2)));
            }
        }
        auto logit_small = conv2d(top, decoder.head_w, decoder.head_b);
        result.logits = upsample_bilinear(logit_small, h, w);
        return result;
    }
};

// ---------------------------------------------------------------------------
// Losses

template <class T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& gt) {
    return bce_with_logits(logits, gt);
}

// 1 - (|P∩G| + eps) / (|P∪G| + eps) on sigmoid probabilities, eps = 1.
template <class T>
Tensor<T> iou_loss(const Tensor<T>& logits, const Tensor<T>& gt) {
    check_shape(logits.shape() == gt.shape(), "iou_loss: shape mismatch");
    auto p = sigmoid(logits);
    auto inter = sum(mul(p, gt));
    auto uni = sub(add(sum(p), sum(gt)), inter);
    auto ratio = divide(add_scalar(inter, T(1)), add_scalar(uni, T(1)));
    return sub(Tensor<T>::scalar(T(1)), ratio);
}

// ---------------------------------------------------------------------------
// Checkpoint bridge. Alongside the learnable tensors the file carries three
// meta entries (channel plan, reduction, variant) so a model can be rebuilt
// from the file alone.

template <class T>
std::vector<CheckpointEntry> model_entries(RFNetModel<T>& model) {
    std::vector<CheckpointEntry> entries;
    {
        CheckpointEntry meta;
        meta.name = "meta.channel_plan";
        meta.shape = {static_cast<int>(model.config.channel_plan.size())};
        for (int c : model.config.channel_plan) meta.data.push_back(static_cast<float>(c));
        entries.push_back(std::move(meta));
        entries.push_back({"meta.reduction", {1}, {static_cast<float>(model.config.reduction)}});
        entries.push_back({"meta.variant", {1}, {static_cast<float>(static_cast<int>(model.config.variant))}});
    }
    for (auto& p : model.named_params()) {
        CheckpointEntry e;
        e.name = p.name;
        e.shape = p.tensor.shape();
        e.data.reserve(p.tensor.data().size());
        for (T v : p.tensor.data()) e.data.push_back(static_cast<float>(v));
        entries.push_back(std::move(e));
    }
    return entries;
}

template <class T>
void save_model(const std::string& path, RFNetModel<T>& model) {
    save_checkpoint(path, model_entries(model));
}

template <class T>
RFNetModel<T> load_model(const std::string& path) {
    auto entries = load_checkpoint(path);
    ModelConfig config;
    config.channel_plan.clear();
    bool have_plan = false, have_reduction = false, have_variant = false;
    for (const auto& e : entries) {
        if (e.name == "meta.channel_plan") {
            for (float v : e.data) config.channel_plan.push_back(static_cast<int>(v));
            have_plan = true;
        } else if (e.name == "meta.reduction") {
            config.reduction = static_cast<int>(e.data.at(0));
            have_reduction = true;
        } else if (e.name == "meta.variant") {
            config.variant = static_cast<FusionVariant>(static_cast<int>(e.data.at(0)));
            have_variant = true;
        }
    }
    if (!have_plan || !have_reduction || !have_variant) {
        throw IoError(path + ": checkpoint lacks model meta entries");
    }
    RFNetModel<T> model = RFNetModel<T>::init(config, 0);
    auto params = model.named_params();
    std::size_t loaded = 0;
    for (auto& p : params) {
        bool found = false;
        for (const auto& e : entries) {
            if (e.name != p.name) continue;
            check_shape(e.shape == p.tensor.shape(), path + ": shape mismatch for " + p.name);
            for (std::size_t i = 0; i < e.data.size(); ++i) p.tensor.data()[i] = static_cast<T>(e.data[i]);
            found = true;
            ++loaded;
            break;
        }
        if (!found) throw IoError(path + ": checkpoint is missing tensor " + p.name);
    }
    if (loaded + 3 != entries.size()) {
        throw IoError(path + ": checkpoint holds tensors the model does not expect");
    }
    return model;
}

}  // namespace rfnet
