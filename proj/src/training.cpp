#include "rfnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace rfnet {

void Adam::step(ParamList<float>& params, double lr) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].tensor.data().size(), 0.0f);
            v_[i].assign(params[i].tensor.data().size(), 0.0f);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& data = params[i].tensor.data();
        const auto& grad = params[i].tensor.grad();
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = grad[j];
            m_[i][j] = static_cast<float>(beta1_ * m_[i][j] + (1.0 - beta1_) * g);
            v_[i][j] = static_cast<float>(beta2_ * v_[i][j] + (1.0 - beta2_) * g * g);
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            data[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

Tensor<float> hflip_image(const Tensor<float>& img) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<float> out(img.data().size());
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out[(static_cast<std::size_t>(ch) * h + y) * w + x] =
                    img.data()[(static_cast<std::size_t>(ch) * h + y) * w + (w - 1 - x)];
            }
        }
    }
    return Tensor<float>::from_data(img.shape(), std::move(out));
}

Tensor<float> rotate_nearest_image(const Tensor<float>& img, double degrees) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cos_t = std::cos(rad), sin_t = std::sin(rad);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    std::vector<float> out(img.data().size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Inverse rotation of the destination coordinate.
            const double dy = y - cy, dx = x - cx;
            const double sy = cos_t * dy + sin_t * dx + cy;
            const double sx = -sin_t * dy + cos_t * dx + cx;
            const int iy = std::clamp(static_cast<int>(std::lround(sy)), 0, h - 1);
            const int ix = std::clamp(static_cast<int>(std::lround(sx)), 0, w - 1);
            for (int ch = 0; ch < c; ++ch) {
                out[(static_cast<std::size_t>(ch) * h + y) * w + x] =
                    img.data()[(static_cast<std::size_t>(ch) * h + iy) * w + ix];
            }
        }
    }
    return Tensor<float>::from_data(img.shape(), std::move(out));
}

Tensor<float> crop_image(const Tensor<float>& img, int top, int bottom, int left, int right) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int nh = h - top - bottom, nw = w - left - right;
    std::vector<float> out(static_cast<std::size_t>(c) * nh * nw);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < nh; ++y) {
            for (int x = 0; x < nw; ++x) {
                out[(static_cast<std::size_t>(ch) * nh + y) * nw + x] =
                    img.data()[(static_cast<std::size_t>(ch) * h + (y + top)) * w + (x + left)];
            }
        }
    }
    return Tensor<float>::from_data({c, nh, nw}, std::move(out));
}

}  // namespace

Tensor<float> resize_bilinear_image(const Tensor<float>& img, int out_h, int out_w) {
    return upsample_bilinear(img, out_h, out_w);  // input carries no grad
}

Tensor<float> resize_nearest_image(const Tensor<float>& img, int out_h, int out_w) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<float> out(static_cast<std::size_t>(c) * out_h * out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(h - 1, static_cast<int>((y + 0.5) * h / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(w - 1, static_cast<int>((x + 0.5) * w / out_w));
            for (int ch = 0; ch < c; ++ch) {
                out[(static_cast<std::size_t>(ch) * out_h + y) * out_w + x] =
                    img.data()[(static_cast<std::size_t>(ch) * h + sy) * w + sx];
            }
        }
    }
    return Tensor<float>::from_data({c, out_h, out_w}, std::move(out));
}

SamplePair augment_sample(const SamplePair& sample, Rng& rng) {
    SamplePair out = sample;
    if (rng.bernoulli(0.5)) {
        out.rgb = hflip_image(out.rgb);
        out.depth = hflip_image(out.depth);
        out.gt = hflip_image(out.gt);
    }
    const double angle = rng.uniform(-10.0, 10.0);
    out.rgb = rotate_nearest_image(out.rgb, angle);
    out.depth = rotate_nearest_image(out.depth, angle);
    out.gt = rotate_nearest_image(out.gt, angle);

    const int h = out.rgb.dim(1), w = out.rgb.dim(2);
    const int top = static_cast<int>(rng.uniform(0.0, 0.1) * h);
    const int bottom = static_cast<int>(rng.uniform(0.0, 0.1) * h);
    const int left = static_cast<int>(rng.uniform(0.0, 0.1) * w);
    const int right = static_cast<int>(rng.uniform(0.0, 0.1) * w);
    if (top + bottom + left + right > 0) {
        out.rgb = resize_bilinear_image(crop_image(out.rgb, top, bottom, left, right), h, w);
        out.depth = resize_bilinear_image(crop_image(out.depth, top, bottom, left, right), h, w);
        out.gt = resize_nearest_image(crop_image(out.gt, top, bottom, left, right), h, w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop

RFNetModel<float> train(const std::vector<SamplePair>& data, const TrainConfig& config,
                        std::vector<EpochStats>& log) {
    if (data.empty()) throw std::runtime_error("train: empty dataset");
    for (const auto& s : data) {
        check_shape(s.rgb.dim(1) == config.resolution && s.rgb.dim(2) == config.resolution,
                    "train: sample resolution does not match config");
    }

    ModelConfig mc;
    mc.channel_plan = config.channel_plan;
    mc.reduction = config.reduction;
    mc.variant = config.variant;
    RFNetModel<float> model = RFNetModel<float>::init(mc, config.seed);
    ParamList<float> params = model.named_params();
    Adam optimizer;

    const int n = static_cast<int>(data.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    Rng root(config.seed);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = config.lr / std::pow(10.0, (epoch - 1) / std::max(1, config.lr_decay_every));

        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        Rng shuffle = root.fork(0x5AFEull * static_cast<std::uint64_t>(epoch));
        for (int i = n - 1; i > 0; --i) {
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(shuffle.uniform_int(0, i))]);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        std::array<double, 5> lambda_sum{};

        int cursor = 0;
        int batch_index = 0;
        while (cursor < n) {
            const int batch_n = std::min(config.batch, n - cursor);
            for (auto& p : params) p.tensor.zero_grad();
            for (int b = 0; b < batch_n; ++b) {
                const int idx = order[static_cast<std::size_t>(cursor + b)];
                SamplePair sample = data[static_cast<std::size_t>(idx)];
                if (config.augment) {
                    Rng aug = root.fork(0xA06ull + static_cast<std::uint64_t>(epoch) * 1000003ull +
                                        static_cast<std::uint64_t>(idx));
                    sample = augment_sample(sample, aug);
                }
                auto fw = model.forward(sample.rgb, sample.depth);
                auto l_bce = bce_loss(fw.logits, sample.gt);
                auto l_iou = iou_loss(fw.logits, sample.gt);
                auto total = scale(add(l_bce, l_iou), 1.0f / static_cast<float>(batch_n));
                if (!std::isfinite(total.item())) {
                    throw std::runtime_error("train: NaN loss in epoch " + std::to_string(epoch) + ", batch " +
                                             std::to_string(batch_index));
                }
                backward(total);
                stats.loss_bce += l_bce.item();
                stats.loss_iou += l_iou.item();
                for (int k = 0; k < 5; ++k) {
                    lambda_sum[static_cast<std::size_t>(k)] += fw.lambda.data()[static_cast<std::size_t>(k)];
                }
            }
            optimizer.step(params, lr);
            cursor += batch_n;
            ++batch_index;
        }

        stats.loss_bce /= n;
        stats.loss_iou /= n;
        for (int k = 0; k < 5; ++k) {
            stats.mean_lambda[static_cast<std::size_t>(k)] = lambda_sum[static_cast<std::size_t>(k)] / n;
            stats.alpha[static_cast<std::size_t>(k)] = model.stages[static_cast<std::size_t>(k)].alpha.item();
            stats.beta[static_cast<std::size_t>(k)] = model.stages[static_cast<std::size_t>(k)].beta.item();
        }
        log.push_back(stats);
    }
    return model;
}

void write_epoch_csv(const std::string& path, const std::vector<EpochStats>& log) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write epoch csv: " + path);
    os << "epoch,loss_bce,loss_iou,lr";
    for (int k = 1; k <= 5; ++k) os << ",lambda" << k;
    for (int k = 1; k <= 5; ++k) os << ",alpha" << k;
    for (int k = 1; k <= 5; ++k) os << ",beta" << k;
    os << "\n";
    char buf[64];
    for (const auto& s : log) {
        os << s.epoch;
        std::snprintf(buf, sizeof(buf), ",%.8f,%.8f,%.8g", s.loss_bce, s.loss_iou, s.lr);
        os << buf;
        for (double v : s.mean_lambda) {
            std::snprintf(buf, sizeof(buf), ",%.8f", v);
            os << buf;
        }
        for (double v : s.alpha) {
            std::snprintf(buf, sizeof(buf), ",%.8f", v);
            os << buf;
        }
        for (double v : s.beta) {
            std::snprintf(buf, sizeof(buf), ",%.8f", v);
            os << buf;
        }
        os << "\n";
    }
}

Tensor<float> predict_map(const RFNetModel<float>& model, const SamplePair& sample) {
    auto fw = model.forward(sample.rgb, sample.depth);
    auto map = sigmoid(fw.logits);
    return Tensor<float>::from_data(map.shape(), map.data());
}

}  // namespace rfnet
