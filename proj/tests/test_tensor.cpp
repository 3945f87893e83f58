#include <cmath>
#include <vector>

#include "doctest.h"
#include "rfnet/kernels.hpp"
#include "rfnet/tensor.hpp"

using namespace rfnet;

using Tf = Tensor<float>;
using Td = Tensor<double>;

TEST_CASE("conv2d identity kernel") {
    auto in = Tf::full({1, 3, 3}, 1.0f);
    auto w = Tf::from_data({1, 1, 1, 1}, {1.0f});
    auto b = Tf::zeros({1});
    auto out = conv2d(in, w, b, 1, 0, 1);
    CHECK(out.shape() == Shape{1, 3, 3});
    for (float v : out.data()) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("conv2d averaging kernel center element") {
    auto in = Tf::from_data({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto w = Tf::full({1, 1, 3, 3}, 1.0f / 9.0f);
    auto b = Tf::zeros({1});
    auto out = conv2d(in, w, b, 1, 1, 1);
    CHECK(out.shape() == Shape{1, 3, 3});
    // Center element sees all nine inputs: (1+...+9)/9 = 5.
    CHECK(out.data()[4] == doctest::Approx(5.0f));
}

TEST_CASE("conv2d dilation with matched padding keeps resolution") {
    Rng rng(7);
    auto in = uniform_init<float>({1, 8, 8}, -1.0f, 1.0f, rng, false);
    auto w = uniform_init<float>({1, 1, 3, 3}, -1.0f, 1.0f, rng, false);
    auto b = Tf::zeros({1});
    auto out = conv2d(in, w, b, 1, 3, 3);
    CHECK(out.shape() == Shape{1, 8, 8});
}

TEST_CASE("conv2d kronecker delta is identity for any dilation") {
    Rng rng(11);
    for (int dilation : {1, 2, 3}) {
        auto in = uniform_init<float>({2, 7, 7}, -2.0f, 2.0f, rng, false);
        // Delta kernel: each output channel copies the matching input channel.
        std::vector<float> wd(2 * 2 * 3 * 3, 0.0f);
        for (int k = 0; k < 2; ++k) wd[static_cast<std::size_t>((k * 2 + k) * 9 + 4)] = 1.0f;
        auto w = Tf::from_data({2, 2, 3, 3}, wd);
        auto b = Tf::zeros({2});
        auto out = conv2d(in, w, b, 1, dilation, dilation);
        REQUIRE(out.shape() == in.shape());
        for (std::size_t i = 0; i < out.data().size(); ++i) CHECK(out.data()[i] == doctest::Approx(in.data()[i]));
    }
}

TEST_CASE("conv2d rejects channel mismatch") {
    auto in = Tf::zeros({2, 4, 4});
    auto w = Tf::zeros({1, 3, 3, 3});
    auto b = Tf::zeros({1});
    CHECK_THROWS_AS(conv2d(in, w, b, 1, 1, 1), ShapeError);
}

TEST_CASE("conv2d parallel kernel matches serial reference") {
    Rng rng(23);
    for (int stride : {1, 2}) {
        for (int dilation : {1, 2}) {
            auto in = uniform_init<double>({3, 9, 11}, -1.0, 1.0, rng, false);
            auto w = uniform_init<double>({4, 3, 3, 3}, -1.0, 1.0, rng, false);
            auto b = uniform_init<double>({4}, -1.0, 1.0, rng, false);
            Conv2dGeom g{3, 9, 11, 4, 3, 3, stride, 2, dilation, 0, 0};
            g.out_h = conv2d_out_extent(9, 3, stride, 2, dilation);
            g.out_w = conv2d_out_extent(11, 3, stride, 2, dilation);
            std::vector<double> fast(static_cast<std::size_t>(4 * g.out_h * g.out_w));
            std::vector<double> ref(fast.size());
            kernels::conv2d_forward(in.data().data(), w.data().data(), b.data().data(), fast.data(), g);
            serial::conv2d_forward(in.data().data(), w.data().data(), b.data().data(), ref.data(), g);
            for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("matmul identity, hand value, annihilation") {
    auto eye = Tf::from_data({2, 2}, {1, 0, 0, 1});
    auto bm = Tf::from_data({2, 2}, {5, 6, 7, 8});
    auto prod = matmul(eye, bm);
    for (std::size_t i = 0; i < 4; ++i) CHECK(prod.data()[i] == doctest::Approx(bm.data()[i]));

    auto am = Tf::from_data({2, 2}, {1, 2, 3, 4});
    auto hand = matmul(am, bm);
    CHECK(hand.data() == std::vector<float>{19, 22, 43, 50});

    auto z = Tf::zeros({3, 2});
    auto anyb = Tf::from_data({2, 4}, {1, -2, 3, -4, 5, -6, 7, -8});
    auto zero = matmul(z, anyb);
    for (float v : zero.data()) CHECK(v == 0.0f);

    CHECK_THROWS_AS(matmul(Tf::zeros({2, 3}), Tf::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul parallel kernel matches serial reference") {
    Rng rng(5);
    auto a = uniform_init<double>({17, 9}, -1.0, 1.0, rng, false);
    auto b = uniform_init<double>({9, 13}, -1.0, 1.0, rng, false);
    std::vector<double> fast(17 * 13), ref(17 * 13);
    kernels::matmul_forward(a.data().data(), b.data().data(), fast.data(), 17, 9, 13);
    serial::matmul_forward(a.data().data(), b.data().data(), ref.data(), 17, 9, 13);
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("softmax basics") {
    auto x = Tf::from_data({2}, {0, 0});
    auto s = softmax(x, 0);
    CHECK(s.data()[0] == doctest::Approx(0.5f));
    CHECK(s.data()[1] == doctest::Approx(0.5f));

    auto big = Tf::from_data({2}, {1000, 1000});
    auto sb = softmax(big, 0);
    CHECK(sb.data()[0] == doctest::Approx(0.5f));
    CHECK(all_finite(sb));

    auto lg = Tf::from_data({2}, {std::log(1.0f), std::log(3.0f)});
    auto sl = softmax(lg, 0);
    CHECK(sl.data()[0] == doctest::Approx(0.25f));
    CHECK(sl.data()[1] == doctest::Approx(0.75f));
}

TEST_CASE("softmax slices sum to one under extreme magnitudes") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = uniform_init<float>({3, 5}, -1000.0f, 1000.0f, rng, false);
        for (int axis : {0, 1}) {
            auto s = softmax(x, axis);
            REQUIRE(all_finite(s));
            const int n = x.dim(axis);
            const int other = s.size() / n;
            for (int o = 0; o < other; ++o) {
                float total = 0.0f;
                for (int j = 0; j < n; ++j) {
                    total += (axis == 0) ? s.data()[static_cast<std::size_t>(j * other + o)]
                                         : s.data()[static_cast<std::size_t>(o * n + j)];
                }
                CHECK(total == doctest::Approx(1.0f).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("sigmoid and relu") {
    auto x = Tf::from_data({3}, {0.0f, 10.0f, -10.0f});
    auto s = sigmoid(x);
    CHECK(s.data()[0] == doctest::Approx(0.5f));
    CHECK(s.data()[1] > 0.0f);
    CHECK(s.data()[1] < 1.0f);
    CHECK(s.data()[2] > 0.0f);
    auto r = relu(Tf::from_data({3}, {-1.0f, 0.0f, 2.0f}));
    CHECK(r.data() == std::vector<float>{0, 0, 2});
}

TEST_CASE("broadcast mul does per-channel scaling") {
    auto f = Tf::from_data({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    auto w = Tf::from_data({2, 1, 1}, {2, 10});
    auto out = mul(f, w);
    CHECK(out.data() == std::vector<float>{2, 4, 6, 8, 50, 60, 70, 80});
}

TEST_CASE("broadcast mul commutes and matches explicit expansion") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int c = rng.uniform_int(1, 4), h = rng.uniform_int(1, 4), w = rng.uniform_int(1, 4);
        auto a = uniform_init<float>({c, h, w}, -2.0f, 2.0f, rng, false);
        auto b = uniform_init<float>({c, 1, 1}, -2.0f, 2.0f, rng, false);
        auto ab = mul(a, b);
        auto ba = mul(b, a);
        for (int i = 0; i < ab.size(); ++i) {
            const int ch = i / (h * w);
            const float expect = a.data()[static_cast<std::size_t>(i)] * b.data()[static_cast<std::size_t>(ch)];
            CHECK(ab.data()[static_cast<std::size_t>(i)] == doctest::Approx(expect));
            CHECK(ba.data()[static_cast<std::size_t>(i)] == doctest::Approx(expect));
        }
    }
}

TEST_CASE("non-broadcastable shapes rejected") {
    CHECK_THROWS_AS(add(Tf::zeros({2, 3}), Tf::zeros({2, 2})), ShapeError);
    CHECK_THROWS_AS(mul(Tf::zeros({2, 3}), Tf::zeros({3})), ShapeError);
}

TEST_CASE("concat shape algebra") {
    auto a = Tf::full({1, 2, 2}, 1.0f);
    auto b = Tf::full({1, 2, 2}, 2.0f);
    auto c = Tf::full({1, 2, 2}, 3.0f);
    auto cat = concat<float>({a, b, c}, 0);
    CHECK(cat.shape() == Shape{3, 2, 2});
    CHECK(cat.data()[0] == 1.0f);
    CHECK(cat.data()[4] == 2.0f);
    CHECK(cat.data()[8] == 3.0f);
    CHECK_THROWS_AS(concat<float>({a, Tf::zeros({1, 3, 2})}, 0), ShapeError);
}

TEST_CASE("global average pool") {
    auto c1 = Tf::full({3, 4, 4}, 2.5f);
    auto g1 = global_avg_pool(c1);
    CHECK(g1.shape() == Shape{3});
    for (float v : g1.data()) CHECK(v == doctest::Approx(2.5f));

    auto m = Tf::from_data({1, 2, 2}, {1, 2, 3, 4});
    CHECK(global_avg_pool(m).data()[0] == doctest::Approx(2.5f));

    auto z = global_avg_pool(Tf::zeros({2, 3, 3}));
    for (float v : z.data()) CHECK(v == 0.0f);
}

TEST_CASE("channel average and max pool") {
    auto single = Tf::from_data({1, 2, 2}, {1, 2, 3, 4});
    auto cap1 = channel_avg_pool(single);
    auto cmp1 = channel_max_pool(single);
    CHECK(cap1.data() == single.data());
    CHECK(cmp1.data() == single.data());

    auto two = Tf::from_data({2, 1, 1}, {3, 5});
    CHECK(channel_avg_pool(two).data()[0] == doctest::Approx(4.0f));
    CHECK(channel_max_pool(two).data()[0] == doctest::Approx(5.0f));

    auto neg = Tf::from_data({2, 1, 1}, {-2, -7});
    CHECK(channel_max_pool(neg).data()[0] == doctest::Approx(-2.0f));
}

TEST_CASE("spatial max pool windows") {
    auto f = Tf::from_data({1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
    auto p = spatial_max_pool(f, 2, 2);
    CHECK(p.shape() == Shape{1, 2, 2});
    CHECK(p.data() == std::vector<float>{6, 8, 14, 16});
}

TEST_CASE("upsample bilinear preserves constants and resolution") {
    auto f = Tf::full({2, 3, 3}, 0.7f);
    auto up = upsample_bilinear(f, 6, 6);
    CHECK(up.shape() == Shape{2, 6, 6});
    for (float v : up.data()) CHECK(v == doctest::Approx(0.7f));
}

TEST_CASE("select picks one lambda entry") {
    auto v = Tf::from_data({5}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f});
    CHECK(select(v, 2).item() == doctest::Approx(0.3f));
    CHECK_THROWS_AS(select(v, 5), ShapeError);
}

TEST_CASE("forward ops keep finite values on finite input") {
    Rng rng(41);
    auto x = uniform_init<float>({4, 6, 6}, -1e3f, 1e3f, rng, false);
    CHECK(all_finite(sigmoid(x)));
    CHECK(all_finite(relu(x)));
    CHECK(all_finite(softmax(x, 0)));
    CHECK(all_finite(global_avg_pool(x)));
    CHECK(all_finite(spatial_max_pool(x, 2, 2)));
    CHECK(all_finite(upsample_bilinear(x, 9, 9)));
}
