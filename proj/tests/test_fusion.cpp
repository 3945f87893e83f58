#include <cmath>

#include "doctest.h"
#include "rfnet/fusion.hpp"
#include "rfnet/gradcheck.hpp"

using namespace rfnet;

using Tf = Tensor<float>;
using Td = Tensor<double>;

namespace {

template <class T>
void zero_all(ParamList<T>& params) {
    for (auto& p : params) std::fill(p.tensor.data().begin(), p.tensor.data().end(), T(0));
}

}  // namespace

TEST_CASE("lwa outputs five confidences in (0,1)") {
    Rng rng(1);
    for (int trial = 0; trial < 25; ++trial) {
        const int c = rng.uniform_int(2, 8), h = rng.uniform_int(2, 8), w = rng.uniform_int(2, 8);
        auto params = LwaParams<float>::init(c, 4, rng);
        auto r1 = uniform_init<float>({c, h, w}, -3.0f, 3.0f, rng, false);
        auto d1 = uniform_init<float>({c, h, w}, -3.0f, 3.0f, rng, false);
        auto res = lwa_forward(r1, d1, params);
        REQUIRE(res.lambda.shape() == Shape{5});
        for (float v : res.lambda.data()) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
        }
        // Every similarity row is a distribution.
        const int n = res.similarity.dim(1);
        for (int row = 0; row < res.similarity.dim(0); ++row) {
            float total = 0.0f;
            for (int j = 0; j < n; ++j) total += res.similarity.data()[static_cast<std::size_t>(row * n + j)];
            CHECK(total == doctest::Approx(1.0f).epsilon(1e-6));
        }
    }
}

TEST_CASE("lwa with zero MLP gives lambda 0.5") {
    Rng rng(2);
    auto params = LwaParams<float>::init(4, 4, rng);
    std::fill(params.mlp_w1.data().begin(), params.mlp_w1.data().end(), 0.0f);
    std::fill(params.mlp_w2.data().begin(), params.mlp_w2.data().end(), 0.0f);
    std::fill(params.mlp_b1.data().begin(), params.mlp_b1.data().end(), 0.0f);
    std::fill(params.mlp_b2.data().begin(), params.mlp_b2.data().end(), 0.0f);
    auto r1 = uniform_init<float>({4, 6, 6}, -1.0f, 1.0f, rng, false);
    auto d1 = uniform_init<float>({4, 6, 6}, -1.0f, 1.0f, rng, false);
    auto res = lwa_forward(r1, d1, params);
    for (float v : res.lambda.data()) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("lwa similarity is symmetric when both modalities coincide") {
    Rng rng(3);
    auto params = LwaParams<float>::init(4, 4, rng);
    // Same 1x1 kernels for both streams.
    params.conv_d_w.data() = params.conv_r_w.data();
    params.conv_d_b.data() = params.conv_r_b.data();
    auto x = uniform_init<float>({4, 6, 6}, -1.0f, 1.0f, rng, false);
    auto res = lwa_forward(x, x, params);
    for (float v : res.lambda.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
    // Transpose oracle on the similarity product: with R' == D' the raw
    // C×C score matrix must equal its own transpose.
    const int c = 4;
    auto rp = reshape(conv2d(x, params.conv_r_w, params.conv_r_b), {4, 36});
    auto scores = matmul(rp, transpose2d(rp));
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) {
            CHECK(scores.data()[static_cast<std::size_t>(i * c + j)] ==
                  doctest::Approx(scores.data()[static_cast<std::size_t>(j * c + i)]).epsilon(1e-6));
        }
    }
}

TEST_CASE("lwa rejects mismatched modalities") {
    Rng rng(4);
    auto params = LwaParams<float>::init(4, 4, rng);
    auto r1 = Tf::zeros({4, 6, 6});
    auto d1 = Tf::zeros({4, 5, 6});
    CHECK_THROWS_AS(lwa_forward(r1, d1, params), ShapeError);
}

TEST_CASE("vanilla SA: zero kernel gives uniform 0.5 and shape 1×H×W") {
    Rng rng(5);
    auto params = SaParams<float>::init(rng);
    ParamList<float> plist;
    params.collect("sa", plist);
    zero_all(plist);
    auto f = uniform_init<float>({6, 9, 9}, -2.0f, 2.0f, rng, false);
    auto map = vanilla_sa(f, params);
    REQUIRE(map.shape() == Shape{1, 9, 9});
    for (float v : map.data()) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("vanilla SA is shift-equivariant away from borders") {
    Rng rng(6);
    auto params = SaParams<float>::init(rng);
    const int h = 16, w = 16, dy = 2, dx = 3;
    auto f = uniform_init<float>({3, h, w}, 0.0f, 1.0f, rng, false);
    // Shift the input with zero fill.
    std::vector<float> shifted(f.data().size(), 0.0f);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int sy = y - dy, sx = x - dx;
                if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                    shifted[(static_cast<std::size_t>(c) * h + y) * w + x] =
                        f.data()[(static_cast<std::size_t>(c) * h + sy) * w + sx];
                }
            }
        }
    }
    auto fs = Tf::from_data({3, h, w}, std::move(shifted));
    auto sa = vanilla_sa(f, params);
    auto sa_shifted = vanilla_sa(fs, params);
    // Interior: stay clear of the zero-filled border plus the kernel radius.
    const int margin = 3;
    for (int y = dy + margin; y < h - margin; ++y) {
        for (int x = dx + margin; x < w - margin; ++x) {
            const float a = sa.data()[static_cast<std::size_t>(y - dy) * w + (x - dx)];
            const float b = sa_shifted.data()[static_cast<std::size_t>(y) * w + x];
            CHECK(a == doctest::Approx(b).epsilon(1e-6));
        }
    }
}

TEST_CASE("tsa: zero fuse conv gives uniform 0.5") {
    Rng rng(7);
    auto params = TsaParams<float>::init(rng);
    std::fill(params.fuse_w.data().begin(), params.fuse_w.data().end(), 0.0f);
    std::fill(params.fuse_b.data().begin(), params.fuse_b.data().end(), 0.0f);
    auto f = uniform_init<float>({4, 7, 7}, -2.0f, 2.0f, rng, false);
    auto map = tsa_forward(f, params);
    REQUIRE(map.shape() == Shape{1, 7, 7});
    for (float v : map.data()) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("tsa sees five steps out, vanilla SA cannot") {
    Rng rng(8);
    auto tsa_params = TsaParams<float>::init(rng);
    auto sa_params = SaParams<float>::init(rng);
    const int h = 12, w = 12, cy = 6, cx = 6;
    auto f = uniform_init<float>({2, h, w}, 0.2f, 0.8f, rng, false);
    auto perturbed_data = f.data();
    // Poke one pixel 5 steps to the right in every channel.
    for (int c = 0; c < 2; ++c) perturbed_data[(static_cast<std::size_t>(c) * h + cy) * w + (cx + 5)] += 0.5f;
    auto fp = Tf::from_data({2, h, w}, std::move(perturbed_data));

    auto tsa_a = tsa_forward(f, tsa_params);
    auto tsa_b = tsa_forward(fp, tsa_params);
    const auto at = [&](const Tf& m) { return m.data()[static_cast<std::size_t>(cy) * w + cx]; };
    CHECK(at(tsa_a) != at(tsa_b));  // dilation-5 branch reaches the probe

    auto sa_a = vanilla_sa(f, sa_params);
    auto sa_b = vanilla_sa(fp, sa_params);
    CHECK(at(sa_a) == at(sa_b));  // k=7 radius is 3: out of reach, bitwise equal
}

TEST_CASE("tsa reduces to a k=3 vanilla SA when the extra branches vanish") {
    Rng rng(9);
    auto params = TsaParams<float>::init(rng);
    for (int branch : {1, 2}) {
        auto& w = params.branch_w[static_cast<std::size_t>(branch)];
        auto& b = params.branch_b[static_cast<std::size_t>(branch)];
        std::fill(w.data().begin(), w.data().end(), 0.0f);
        std::fill(b.data().begin(), b.data().end(), 0.0f);
    }
    params.fuse_w.data() = {1.0f, 0.0f, 0.0f};
    params.fuse_b.data() = {0.0f};

    auto f = uniform_init<float>({5, 8, 8}, -1.0f, 1.0f, rng, false);
    auto tsa = tsa_forward(f, params);
    // k=3 vanilla SA built from branch 1's kernel.
    auto direct = sigmoid(conv2d(pooled_planes(f), params.branch_w[0], params.branch_b[0], 1, 1, 1));
    REQUIRE(tsa.shape() == direct.shape());
    for (std::size_t i = 0; i < tsa.data().size(); ++i) {
        CHECK(tsa.data()[i] == doctest::Approx(direct.data()[i]).epsilon(1e-6));
    }
}

TEST_CASE("channel attention basics") {
    Rng rng(10);
    auto params = CaParams<float>::init(6, 4, rng);
    auto f = uniform_init<float>({6, 5, 5}, -2.0f, 2.0f, rng, false);
    auto ca = channel_attention(f, params);
    REQUIRE(ca.shape() == Shape{6, 1, 1});
    for (float v : ca.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }

    ParamList<float> plist;
    params.collect("ca", plist);
    zero_all(plist);
    auto flat = channel_attention(f, params);
    for (float v : flat.data()) CHECK(v == doctest::Approx(0.5f));
}

TEST_CASE("channel attention monotonicity under positive identity-like MLP") {
    // Identity-ish MLP with positive pass-through weights: scaling one
    // channel's activations up must not decrease its attention weight.
    const int c = 4;
    CaParams<float> params;
    params.w1 = Tensor<float>::zeros({c, c});
    params.b1 = Tensor<float>::zeros({c});
    params.w2 = Tensor<float>::zeros({c, c});
    params.b2 = Tensor<float>::zeros({c});
    for (int i = 0; i < c; ++i) {
        params.w1.data()[static_cast<std::size_t>(i * c + i)] = 1.0f;
        params.w2.data()[static_cast<std::size_t>(i * c + i)] = 1.0f;
    }
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto f = uniform_init<float>({c, 4, 4}, 0.1f, 1.0f, rng, false);
        auto base = channel_attention(f, params);
        auto boosted_data = f.data();
        for (int i = 0; i < 16; ++i) boosted_data[static_cast<std::size_t>(i)] *= 2.0f;  // channel 0
        auto boosted = channel_attention(Tf::from_data({c, 4, 4}, std::move(boosted_data)), params);
        CHECK(boosted.data()[0] >= base.data()[0]);
    }
}

TEST_CASE("shared_fuse hand values and degenerate case") {
    auto a = Tf::from_data({2, 1, 1}, {0.2f, 0.8f});
    auto b = Tf::from_data({2, 1, 1}, {0.6f, 0.4f});
    auto fused = shared_fuse(a, b);
    CHECK(fused.data()[0] == doctest::Approx(0.0f));
    CHECK(fused.data()[1] == doctest::Approx(1.0f));

    auto c1 = Tf::full({3, 1, 1}, 0.7f);
    auto c2 = Tf::full({3, 1, 1}, 0.7f);
    auto flat = shared_fuse(c1, c2);
    for (float v : flat.data()) CHECK(v == doctest::Approx(0.0f));
}

TEST_CASE("shared_fuse stays in [0,1] and is symmetric") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = rng.uniform_int(2, 8);
        auto a = uniform_init<float>({n, 1, 1}, 0.0f, 1.0f, rng, false);
        auto b = uniform_init<float>({n, 1, 1}, 0.0f, 1.0f, rng, false);
        auto ab = shared_fuse(a, b);
        auto ba = shared_fuse(b, a);
        for (std::size_t i = 0; i < ab.data().size(); ++i) {
            CHECK(ab.data()[i] >= 0.0f);
            CHECK(ab.data()[i] <= 1.0f);
            CHECK(ab.data()[i] == doctest::Approx(ba.data()[i]));
        }
    }
}

TEST_CASE("qcrm_ca: lambda 0 kills the depth path, and is linear in lambda") {
    Rng rng(13);
    const int c = 4, h = 5, w = 5;
    auto pr = CaParams<float>::init(c, 4, rng);
    auto pd = CaParams<float>::init(c, 4, rng);
    auto r = uniform_init<float>({c, h, w}, -1.0f, 1.0f, rng, false);
    auto d = uniform_init<float>({c, h, w}, -1.0f, 1.0f, rng, false);

    auto out0 = qcrm_ca(r, d, Tf::scalar(0.0f), pr, pd);
    // lambda = 0 leaves exactly the calibrated RGB stream.
    auto ca_r = channel_attention(r, pr);
    auto ca_d = channel_attention(d, pd);
    auto ca_f = shared_fuse(ca_r, ca_d);
    auto rgb_only = mul(ca_f, mul(ca_r, r));
    for (std::size_t i = 0; i < out0.data().size(); ++i) {
        CHECK(out0.data()[i] == doctest::Approx(rgb_only.data()[i]));
    }

    // Exactly linear in lambda: out(2t) - out(0) == 2 (out(t) - out(0)).
    auto out1 = qcrm_ca(r, d, Tf::scalar(0.35f), pr, pd);
    auto out2 = qcrm_ca(r, d, Tf::scalar(0.70f), pr, pd);
    for (std::size_t i = 0; i < out0.data().size(); ++i) {
        const float once = out1.data()[i] - out0.data()[i];
        const float twice = out2.data()[i] - out0.data()[i];
        CHECK(twice == doctest::Approx(2.0f * once).epsilon(1e-5));
    }

    // lambda = 1 is the additive CRM.
    auto out_one = qcrm_ca(r, d, Tf::scalar(1.0f), pr, pd);
    auto additive = crm_add(r, d, pr, pd);
    for (std::size_t i = 0; i < out_one.data().size(); ++i) {
        CHECK(out_one.data()[i] == doctest::Approx(additive.data()[i]).epsilon(1e-6));
    }
}

TEST_CASE("crm_concat stacks both calibrated streams") {
    Rng rng(14);
    const int c = 3;
    auto pr = CaParams<float>::init(c, 4, rng);
    auto pd = CaParams<float>::init(c, 4, rng);
    auto r = uniform_init<float>({c, 4, 4}, -1.0f, 1.0f, rng, false);
    auto d = uniform_init<float>({c, 4, 4}, -1.0f, 1.0f, rng, false);
    auto cat = crm_concat(r, d, pr, pd);
    CHECK(cat.shape() == Shape{2 * c, 4, 4});
}

TEST_CASE("af_fuse reduction identity: (alpha,beta,lambda)=(1,0,1) is additive CRM") {
    Rng rng(15);
    const int c = 4, h = 6, w = 6;
    auto stage = FusionStageParams<float>::init(c, 0, 4, FusionVariant::Full, rng);
    stage.alpha.data()[0] = 1.0f;
    stage.beta.data()[0] = 0.0f;
    auto r = uniform_init<float>({c, h, w}, -1.0f, 1.0f, rng, false);
    auto d = uniform_init<float>({c, h, w}, -1.0f, 1.0f, rng, false);
    auto af = af_fuse(r, d, Tf::scalar(1.0f), stage);
    auto additive = crm_add(r, d, stage.ca_r, stage.ca_d);
    REQUIRE(af.shape() == additive.shape());
    for (std::size_t i = 0; i < af.data().size(); ++i) {
        CHECK(af.data()[i] == doctest::Approx(additive.data()[i]).epsilon(1e-6));
    }
}

TEST_CASE("af_fuse with alpha=beta=0 and no previous level is zero") {
    Rng rng(16);
    auto stage = FusionStageParams<float>::init(3, 0, 4, FusionVariant::Full, rng);
    stage.alpha.data()[0] = 0.0f;
    stage.beta.data()[0] = 0.0f;
    auto r = uniform_init<float>({3, 4, 4}, -1.0f, 1.0f, rng, false);
    auto d = uniform_init<float>({3, 4, 4}, -1.0f, 1.0f, rng, false);
    auto af = af_fuse(r, d, Tf::scalar(0.5f), stage);
    for (float v : af.data()) CHECK(v == 0.0f);
}

TEST_CASE("af_fuse gradient of alpha is the inner product with the CA branch") {
    Rng rng(17);
    const int c = 3, h = 4, w = 4;
    auto stage = FusionStageParams<double>::init(c, 0, 4, FusionVariant::Full, rng);
    auto r = uniform_init<double>({c, h, w}, -1.0, 1.0, rng, false);
    auto d = uniform_init<double>({c, h, w}, -1.0, 1.0, rng, false);
    auto lambda = Td::scalar(0.6);
    auto proj = make_projection({c, h, w}, rng);

    auto out = af_fuse(r, d, lambda, stage);
    auto loss = project(out, proj);
    backward(loss);

    // d loss / d alpha = <d loss / d AF, qcrm_ca>; here d loss / d AF is the
    // projection weights themselves.
    auto ca_branch = qcrm_ca(r, d, lambda, stage.ca_r, stage.ca_d);
    double expected = 0.0;
    for (std::size_t i = 0; i < ca_branch.data().size(); ++i) {
        expected += proj.data()[i] * ca_branch.data()[i];
    }
    CHECK(stage.alpha.grad()[0] == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("af_fuse cross-level merge and resolution check") {
    Rng rng(18);
    const int c = 4;
    auto stage = FusionStageParams<float>::init(c, c, 4, FusionVariant::Full, rng);
    auto r = uniform_init<float>({c, 4, 4}, -1.0f, 1.0f, rng, false);
    auto d = uniform_init<float>({c, 4, 4}, -1.0f, 1.0f, rng, false);
    auto prev_ok = uniform_init<float>({c, 8, 8}, -1.0f, 1.0f, rng, false);
    auto fused = af_fuse(r, d, Tf::scalar(0.5f), stage, &prev_ok);
    CHECK(fused.shape() == Shape{c, 4, 4});

    auto prev_bad = uniform_init<float>({c, 12, 12}, -1.0f, 1.0f, rng, false);
    CHECK_THROWS_AS(af_fuse(r, d, Tf::scalar(0.5f), stage, &prev_bad), ShapeError);
}

TEST_CASE("attention maps stay strictly inside (0,1)") {
    Rng rng(19);
    for (int trial = 0; trial < 30; ++trial) {
        const int c = rng.uniform_int(1, 6), h = rng.uniform_int(2, 8), w = rng.uniform_int(2, 8);
        auto f = uniform_init<float>({c, h, w}, -5.0f, 5.0f, rng, false);
        auto tsa_params = TsaParams<float>::init(rng);
        auto sa_params = SaParams<float>::init(rng);
        for (auto& map : {tsa_forward(f, tsa_params), vanilla_sa(f, sa_params)}) {
            REQUIRE(map.shape() == Shape{1, h, w});
            for (float v : map.data()) {
                CHECK(v > 0.0f);
                CHECK(v < 1.0f);
            }
        }
    }
}
