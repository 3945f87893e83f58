#pragma once

// Cross-modal fusion blocks: layer-wise depth-confidence attention (LWA),
// trident spatial attention (TSA), channel attention with shared fusing,
// the quality-weighted cross-reference blocks qCRM, and the adaptive
// alpha/beta blend AF that feeds each decoder stage.

#include <array>
#include <string>
#include <vector>

#include "rfnet/random.hpp"
#include "rfnet/tensor.hpp"

namespace rfnet {

template <class T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

// Two-layer perceptron on a rank-1 descriptor, relu on the hidden layer.
template <class T>
Tensor<T> mlp2(const Tensor<T>& x, const Tensor<T>& w1, const Tensor<T>& b1, const Tensor<T>& w2,
               const Tensor<T>& b2) {
    auto h = relu(add(matmul(w1, reshape(x, {x.dim(0), 1})), reshape(b1, {b1.dim(0), 1})));
    auto y = add(matmul(w2, h), reshape(b2, {b2.dim(0), 1}));
    return reshape(y, {y.dim(0)});
}

inline int reduced_width(int channels, int reduction) { return std::max(1, channels / reduction); }

// ---------------------------------------------------------------------------
// Layer-wise attention: stage-1 features from both streams in, five depth
// confidence scalars out.

template <class T>
struct LwaParams {
    Tensor<T> conv_r_w, conv_r_b;  // 1x1, C -> C, RGB stream
    Tensor<T> conv_d_w, conv_d_b;  // 1x1, C -> C, depth stream
    Tensor<T> mlp_w1, mlp_b1;      // C -> C/r
    Tensor<T> mlp_w2, mlp_b2;      // C/r -> 5

    static LwaParams init(int channels, int reduction, Rng& rng) {
        LwaParams p;
        const int hidden = reduced_width(channels, reduction);
        p.conv_r_w = fanin_init<T>({channels, channels, 1, 1}, channels, rng);
        p.conv_r_b = Tensor<T>::zeros({channels}, true);
        p.conv_d_w = fanin_init<T>({channels, channels, 1, 1}, channels, rng);
        p.conv_d_b = Tensor<T>::zeros({channels}, true);
        p.mlp_w1 = fanin_init<T>({hidden, channels}, channels, rng);
        p.mlp_b1 = Tensor<T>::zeros({hidden}, true);
        p.mlp_w2 = fanin_init<T>({5, hidden}, hidden, rng);
        p.mlp_b2 = Tensor<T>::zeros({5}, true);
        return p;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".conv_r.kernel", conv_r_w});
        out.push_back({prefix + ".conv_r.bias", conv_r_b});
        out.push_back({prefix + ".conv_d.kernel", conv_d_w});
        out.push_back({prefix + ".conv_d.bias", conv_d_b});
        out.push_back({prefix + ".mlp.w1", mlp_w1});
        out.push_back({prefix + ".mlp.b1", mlp_b1});
        out.push_back({prefix + ".mlp.w2", mlp_w2});
        out.push_back({prefix + ".mlp.b2", mlp_b2});
    }
};

template <class T>
struct LwaResult {
    Tensor<T> lambda;      // 5 values in (0,1)
    Tensor<T> similarity;  // C×C softmax rows
};

template <class T>
LwaResult<T> lwa_forward(const Tensor<T>& r1, const Tensor<T>& d1, const LwaParams<T>& p) {
    check_shape(r1.rank() == 3 && d1.rank() == 3, "lwa_forward: C×H×W inputs required");
    check_shape(r1.shape() == d1.shape(), "lwa_forward: modality shapes differ, " + shape_str(r1.shape()) + " vs " +
                                              shape_str(d1.shape()));
    const int c = r1.dim(0), h = r1.dim(1), w = r1.dim(2);
    auto rp = reshape(conv2d(r1, p.conv_r_w, p.conv_r_b), {c, h * w});
    auto dp = reshape(conv2d(d1, p.conv_d_w, p.conv_d_b), {c, h * w});
    auto scores = scale(matmul(rp, transpose2d(dp)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(c))));
    auto sim = softmax(scores, 1);
    auto fused = add(rp, dp);
    // Residual shortcut on the early-fused sum keeps gradients alive.
    auto attended = add(matmul(sim, fused), fused);
    auto descriptor = global_avg_pool(reshape(attended, {c, h, w}));
    LwaResult<T> result;
    result.lambda = sigmoid(mlp2(descriptor, p.mlp_w1, p.mlp_b1, p.mlp_w2, p.mlp_b2));
    result.similarity = sim;
    return result;
}

// ---------------------------------------------------------------------------
// Spatial attention: vanilla single-branch and the trident variant.

template <class T>
struct SaParams {
    Tensor<T> w, b;  // 2 -> 1, k=7, pad 3

    static SaParams init(Rng& rng) {
        SaParams p;
        p.w = fanin_init<T>({1, 2, 7, 7}, 2 * 7 * 7, rng);
        p.b = Tensor<T>::zeros({1}, true);
        return p;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".kernel", w});
        out.push_back({prefix + ".bias", b});
    }
};

// Channel-pooled two-plane descriptor shared by both spatial attentions.
template <class T>
Tensor<T> pooled_planes(const Tensor<T>& f) {
    return concat<T>({channel_avg_pool(f), channel_max_pool(f)}, 0);
}

template <class T>
Tensor<T> vanilla_sa(const Tensor<T>& f, const SaParams<T>& p) {
    return sigmoid(conv2d(pooled_planes(f), p.w, p.b, 1, 3, 1));
}

template <class T>
struct TsaParams {
    // Three 2->1 branches over the pooled planes, k=3, dilations 1/3/5 with
    // matching padding, then a 1x1 fuse down to one map.
    std::array<Tensor<T>, 3> branch_w;
    std::array<Tensor<T>, 3> branch_b;
    Tensor<T> fuse_w, fuse_b;  // 3 -> 1, 1x1

    static constexpr std::array<int, 3> kDilations{1, 3, 5};

    static TsaParams init(Rng& rng) {
        TsaParams p;
        for (int i = 0; i < 3; ++i) {
            p.branch_w[static_cast<std::size_t>(i)] = fanin_init<T>({1, 2, 3, 3}, 2 * 3 * 3, rng);
            p.branch_b[static_cast<std::size_t>(i)] = Tensor<T>::zeros({1}, true);
        }
        p.fuse_w = fanin_init<T>({1, 3, 1, 1}, 3, rng);
        p.fuse_b = Tensor<T>::zeros({1}, true);
        return p;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (int i = 0; i < 3; ++i) {
            const std::string b = prefix + ".branch" + std::to_string(i + 1);
            out.push_back({b + ".kernel", branch_w[static_cast<std::size_t>(i)]});
            out.push_back({b + ".bias", branch_b[static_cast<std::size_t>(i)]});
        }
        out.push_back({prefix + ".fuse.kernel", fuse_w});
        out.push_back({prefix + ".fuse.bias", fuse_b});
    }
};

template <class T>
Tensor<T> tsa_forward(const Tensor<T>& f, const TsaParams<T>& p) {
    auto planes = pooled_planes(f);
    std::vector<Tensor<T>> branches;
    branches.reserve(3);
    for (int i = 0; i < 3; ++i) {
        const int d = TsaParams<T>::kDilations[static_cast<std::size_t>(i)];
        branches.push_back(conv2d(planes, p.branch_w[static_cast<std::size_t>(i)],
                                  p.branch_b[static_cast<std::size_t>(i)], 1, d, d));
    }
    return sigmoid(conv2d(concat(branches, 0), p.fuse_w, p.fuse_b));
}

// ---------------------------------------------------------------------------
// Channel attention: shared MLP over average- and max-pooled descriptors.

template <class T>
struct CaParams {
    Tensor<T> w1, b1, w2, b2;  // C -> C/r -> C

    static CaParams init(int channels, int reduction, Rng& rng) {
        CaParams p;
        const int hidden = reduced_width(channels, reduction);
        p.w1 = fanin_init<T>({hidden, channels}, channels, rng);
        p.b1 = Tensor<T>::zeros({hidden}, true);
        p.w2 = fanin_init<T>({channels, hidden}, hidden, rng);
        p.b2 = Tensor<T>::zeros({channels}, true);
        return p;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".w1", w1});
        out.push_back({prefix + ".b1", b1});
        out.push_back({prefix + ".w2", w2});
        out.push_back({prefix + ".b2", b2});
    }
};

template <class T>
Tensor<T> channel_attention(const Tensor<T>& f, const CaParams<T>& p) {
    const int c = f.dim(0);
    auto avg = mlp2(global_avg_pool(f), p.w1, p.b1, p.w2, p.b2);
    auto mx = mlp2(global_max_pool(f), p.w1, p.b1, p.w2, p.b2);
    return reshape(sigmoid(add(avg, mx)), {c, 1, 1});
}

// Elementwise maximum of two attention maps, min-max normalized to [0,1].
// Degenerate constant maps normalize to 0 through the epsilon guard.
template <class T>
Tensor<T> shared_fuse(const Tensor<T>& a, const Tensor<T>& b) {
    check_shape(a.shape() == b.shape(), "shared_fuse: attention shapes differ");
    auto m = maximum(a, b);
    Shape ones(static_cast<std::size_t>(m.rank()), 1);
    auto lo = reshape(reduce_min(m), ones);
    auto span = add_scalar(sub(reduce_max(m), reduce_min(m)), static_cast<T>(1e-8));
    return divide(sub(m, lo), reshape(span, ones));
}

// ---------------------------------------------------------------------------
// Cross-reference fusion blocks.

// qCRM with channel attention: CA_f ⊗ CA_r ⊗ R + λ · CA_f ⊗ CA_d ⊗ D.
template <class T>
Tensor<T> qcrm_ca(const Tensor<T>& r, const Tensor<T>& d, const Tensor<T>& lambda_i, const CaParams<T>& pr,
                  const CaParams<T>& pd) {
    check_shape(r.shape() == d.shape(), "qcrm_ca: modality shapes differ");
    check_shape(lambda_i.size() == 1, "qcrm_ca: lambda must be a scalar");
    auto ca_r = channel_attention(r, pr);
    auto ca_d = channel_attention(d, pd);
    auto ca_f = shared_fuse(ca_r, ca_d);
    auto rgb_term = mul(ca_f, mul(ca_r, r));
    auto depth_term = mul(ca_f, mul(ca_d, d));
    return add(rgb_term, mul(reshape(lambda_i, {1, 1, 1}), depth_term));
}

// Same structure with trident spatial attention; broadcasting is spatial.
template <class T>
Tensor<T> qcrm_tsa(const Tensor<T>& r, const Tensor<T>& d, const Tensor<T>& lambda_i, const TsaParams<T>& pr,
                   const TsaParams<T>& pd) {
    check_shape(r.shape() == d.shape(), "qcrm_tsa: modality shapes differ");
    auto sa_r = tsa_forward(r, pr);
    auto sa_d = tsa_forward(d, pd);
    auto sa_f = shared_fuse(sa_r, sa_d);
    auto rgb_term = mul(sa_f, mul(sa_r, r));
    auto depth_term = mul(sa_f, mul(sa_d, d));
    return add(rgb_term, mul(reshape(lambda_i, {1, 1, 1}), depth_term));
}

// Vanilla-SA analog, kept for the ablation baseline.
template <class T>
Tensor<T> qcrm_sa(const Tensor<T>& r, const Tensor<T>& d, const Tensor<T>& lambda_i, const SaParams<T>& pr,
                  const SaParams<T>& pd) {
    check_shape(r.shape() == d.shape(), "qcrm_sa: modality shapes differ");
    auto sa_r = vanilla_sa(r, pr);
    auto sa_d = vanilla_sa(d, pd);
    auto sa_f = shared_fuse(sa_r, sa_d);
    auto rgb_term = mul(sa_f, mul(sa_r, r));
    auto depth_term = mul(sa_f, mul(sa_d, d));
    return add(rgb_term, mul(reshape(lambda_i, {1, 1, 1}), depth_term));
}

// Channel-concatenated CRM baseline.
template <class T>
Tensor<T> crm_concat(const Tensor<T>& r, const Tensor<T>& d, const CaParams<T>& pr, const CaParams<T>& pd) {
    auto ca_r = channel_attention(r, pr);
    auto ca_d = channel_attention(d, pd);
    auto ca_f = shared_fuse(ca_r, ca_d);
    return concat<T>({mul(ca_f, mul(ca_r, r)), mul(ca_f, mul(ca_d, d))}, 0);
}

// Additive CRM: the concat replaced by addition, no quality weighting.
template <class T>
Tensor<T> crm_add(const Tensor<T>& r, const Tensor<T>& d, const CaParams<T>& pr, const CaParams<T>& pd) {
    auto ca_r = channel_attention(r, pr);
    auto ca_d = channel_attention(d, pd);
    auto ca_f = shared_fuse(ca_r, ca_d);
    return add(mul(ca_f, mul(ca_r, r)), mul(ca_f, mul(ca_d, d)));
}

// ---------------------------------------------------------------------------
// Per-stage adaptive fusion.

enum class FusionVariant { AddOnly, Ca, CaTsa, CaSa, CaTsaAdaptive, Full };

inline bool variant_uses_ca(FusionVariant v) { return v != FusionVariant::AddOnly; }
inline bool variant_uses_tsa(FusionVariant v) {
    return v == FusionVariant::CaTsa || v == FusionVariant::CaTsaAdaptive || v == FusionVariant::Full;
}
inline bool variant_uses_sa(FusionVariant v) { return v == FusionVariant::CaSa; }
inline bool variant_learns_alpha_beta(FusionVariant v) {
    return v == FusionVariant::CaTsaAdaptive || v == FusionVariant::Full;
}
inline bool variant_uses_lwa(FusionVariant v) { return v == FusionVariant::Full; }

std::string variant_name(FusionVariant v);
FusionVariant parse_variant(const std::string& name);

template <class T>
struct FusionStageParams {
    FusionVariant variant = FusionVariant::Full;
    CaParams<T> ca_r, ca_d;
    TsaParams<T> tsa_r, tsa_d;
    SaParams<T> sa_r, sa_d;
    Tensor<T> alpha, beta;         // scalars; learnable only in adaptive variants
    Tensor<T> merge_w, merge_b;    // concat(C_prev + C) -> C, 3x3; stage 1 has none

    static FusionStageParams init(int channels, int prev_channels, int reduction, FusionVariant variant, Rng& rng) {
        FusionStageParams p;
        p.variant = variant;
        if (variant_uses_ca(variant)) {
            p.ca_r = CaParams<T>::init(channels, reduction, rng);
            p.ca_d = CaParams<T>::init(channels, reduction, rng);
        }
        if (variant_uses_tsa(variant)) {
            p.tsa_r = TsaParams<T>::init(rng);
            p.tsa_d = TsaParams<T>::init(rng);
        }
        if (variant_uses_sa(variant)) {
            p.sa_r = SaParams<T>::init(rng);
            p.sa_d = SaParams<T>::init(rng);
        }
        const bool learn = variant_learns_alpha_beta(variant);
        p.alpha = Tensor<T>::scalar(T(0.5), learn);
        p.beta = Tensor<T>::scalar(T(0.5), learn);
        if (prev_channels > 0) {
            const int in_c = prev_channels + channels;
            p.merge_w = fanin_init<T>({channels, in_c, 3, 3}, in_c * 9, rng);
            p.merge_b = Tensor<T>::zeros({channels}, true);
        }
        return p;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        if (variant_uses_ca(variant)) {
            ca_r.collect(prefix + ".ca_r", out);
            ca_d.collect(prefix + ".ca_d", out);
        }
        if (variant_uses_tsa(variant)) {
            tsa_r.collect(prefix + ".tsa_r", out);
            tsa_d.collect(prefix + ".tsa_d", out);
        }
        if (variant_uses_sa(variant)) {
            sa_r.collect(prefix + ".sa_r", out);
            sa_d.collect(prefix + ".sa_d", out);
        }
        if (variant_learns_alpha_beta(variant)) {
            out.push_back({prefix + ".alpha", alpha});
            out.push_back({prefix + ".beta", beta});
        }
        if (merge_w.defined()) {
            out.push_back({prefix + ".merge.kernel", merge_w});
            out.push_back({prefix + ".merge.bias", merge_b});
        }
    }
};

// AF = alpha·qCRM^CA + beta·qCRM^TSA, then the cross-level merge: max-pool
// the previous stage output, concatenate on channels and fuse back to the
// stage width.
template <class T>
Tensor<T> af_fuse(const Tensor<T>& r, const Tensor<T>& d, const Tensor<T>& lambda_i,
                  const FusionStageParams<T>& stage, const Tensor<T>* f_prev) {
    check_shape(r.shape() == d.shape(), "af_fuse: modality shapes differ");
    Tensor<T> fused;
    switch (stage.variant) {
        case FusionVariant::AddOnly:
            fused = add(r, d);
            break;
        case FusionVariant::Ca:
            fused = qcrm_ca(r, d, lambda_i, stage.ca_r, stage.ca_d);
            break;
        case FusionVariant::CaSa: {
            auto shape3 = Shape{1, 1, 1};
            auto a = reshape(stage.alpha, shape3);
            auto b = reshape(stage.beta, shape3);
            fused = add(mul(a, qcrm_ca(r, d, lambda_i, stage.ca_r, stage.ca_d)),
                        mul(b, qcrm_sa(r, d, lambda_i, stage.sa_r, stage.sa_d)));
            break;
        }
        default: {
            auto shape3 = Shape{1, 1, 1};
            auto a = reshape(stage.alpha, shape3);
            auto b = reshape(stage.beta, shape3);
            fused = add(mul(a, qcrm_ca(r, d, lambda_i, stage.ca_r, stage.ca_d)),
                        mul(b, qcrm_tsa(r, d, lambda_i, stage.tsa_r, stage.tsa_d)));
            break;
        }
    }
    if (f_prev == nullptr) return fused;
    check_shape(stage.merge_w.defined(), "af_fuse: stage has no merge convolution for a previous level");
    auto pooled = spatial_max_pool(*f_prev, 2, 2);
    check_shape(pooled.dim(1) == fused.dim(1) && pooled.dim(2) == fused.dim(2),
                "af_fuse: resolution mismatch after pooling, " + shape_str(pooled.shape()) + " vs " +
                    shape_str(fused.shape()));
    return conv2d(concat<T>({pooled, fused}, 0), stage.merge_w, stage.merge_b, 1, 1, 1);
}

// Stage-1 form: no previous level to merge.
template <class T>
Tensor<T> af_fuse(const Tensor<T>& r, const Tensor<T>& d, const Tensor<T>& lambda_i,
                  const FusionStageParams<T>& stage) {
    return af_fuse(r, d, lambda_i, stage, static_cast<const Tensor<T>*>(nullptr));
}

}  // namespace rfnet
