#include <cmath>

#include "doctest.h"
#include "rfnet/gradcheck.hpp"
#include "rfnet/tensor.hpp"

using namespace rfnet;

using Td = Tensor<double>;

TEST_CASE("fan-out accumulates: d(x+x)/dx == 2 exactly") {
    auto x = Td::from_data({3}, {1.0, -2.0, 0.5}, true);
    auto y = sum(add(x, x));
    backward(y);
    for (double g : x.grad()) CHECK(g == 2.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = Td::from_data({2}, {1.0, 2.0}, true);
    auto y = add(x, x);
    CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("tape visits shared subgraphs once") {
    auto x = Td::scalar(3.0, true);
    auto s = mul(x, x);        // x^2
    auto t = add(s, s);        // 2 x^2, s reused
    auto loss = sum(mul(t, t));  // 4 x^4
    backward(loss);
    // d/dx 4x^4 = 16 x^3 = 432; double-visiting any node would break this.
    CHECK(x.grad()[0] == doctest::Approx(432.0));
}

TEST_CASE("sigmoid derivative at zero") {
    auto x = Td::scalar(0.0, true);
    auto y = sigmoid(x);
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(0.25));
    auto rep = grad_check("sigmoid@0", [](const std::vector<Td>& l) { return sigmoid(l[0]); }, {Td::scalar(0.0)});
    CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(101);
    for (int seed = 0; seed < 10; ++seed) {
        Rng local = rng.fork(static_cast<std::uint64_t>(seed));
        const int c = local.uniform_int(1, 4), h = local.uniform_int(1, 6), w = local.uniform_int(1, 6);
        Shape shape{c, h, w};
        auto x = uniform_init<double>(shape, -2.0, 2.0, local, false);
        auto proj = make_projection(shape, local);

        auto sig = grad_check("sigmoid", [&](const std::vector<Td>& l) { return project(sigmoid(l[0]), proj); }, {x});
        CHECK_MESSAGE(sig.max_rel_err < 1e-4, sig.name << " seed " << seed << " err " << sig.max_rel_err);

        // Keep relu inputs away from the kink.
        auto xr = uniform_init<double>(shape, 0.1, 2.0, local, false);
        auto xr2 = uniform_init<double>(shape, -2.0, -0.1, local, false);
        auto rl = grad_check(
            "relu",
            [&](const std::vector<Td>& l) { return project(relu(sub(l[0], l[1])), proj); }, {xr, xr2});
        CHECK_MESSAGE(rl.max_rel_err < 1e-4, rl.name << " seed " << seed << " err " << rl.max_rel_err);
    }
}

TEST_CASE("broadcast binary op gradients") {
    Rng rng(202);
    for (int seed = 0; seed < 10; ++seed) {
        Rng local = rng.fork(static_cast<std::uint64_t>(seed));
        const int c = local.uniform_int(1, 4), h = local.uniform_int(1, 5), w = local.uniform_int(1, 5);
        Shape full{c, h, w}, chan{c, 1, 1}, spat{1, h, w};
        auto a = uniform_init<double>(full, -2.0, 2.0, local, false);
        auto b = uniform_init<double>(chan, 0.5, 2.0, local, false);
        auto s = uniform_init<double>(spat, 0.5, 2.0, local, false);
        auto proj = make_projection(full, local);

        for (auto [name, fn] : std::vector<std::pair<const char*, GradCheckFn>>{
                 {"add_bcast", [&](const std::vector<Td>& l) { return project(add(l[0], l[1]), proj); }},
                 {"sub_bcast", [&](const std::vector<Td>& l) { return project(sub(l[0], l[1]), proj); }},
                 {"mul_bcast", [&](const std::vector<Td>& l) { return project(mul(l[0], l[1]), proj); }},
                 {"div_bcast", [&](const std::vector<Td>& l) { return project(divide(l[0], l[1]), proj); }}}) {
            auto rep = grad_check(name, fn, {a, b});
            CHECK_MESSAGE(rep.max_rel_err < 1e-4, name << " seed " << seed << " err " << rep.max_rel_err);
        }
        auto spatial = grad_check(
            "mul_spatial", [&](const std::vector<Td>& l) { return project(mul(l[0], l[1]), proj); }, {a, s});
        CHECK(spatial.max_rel_err < 1e-4);
    }
}

TEST_CASE("matmul and softmax gradients") {
    Rng rng(303);
    for (int seed = 0; seed < 10; ++seed) {
        Rng local = rng.fork(static_cast<std::uint64_t>(seed));
        const int m = local.uniform_int(1, 5), k = local.uniform_int(1, 5), n = local.uniform_int(1, 5);
        auto a = uniform_init<double>({m, k}, -2.0, 2.0, local, false);
        auto b = uniform_init<double>({k, n}, -2.0, 2.0, local, false);
        auto proj = make_projection({m, n}, local);
        auto rep = grad_check(
            "matmul", [&](const std::vector<Td>& l) { return project(matmul(l[0], l[1]), proj); }, {a, b});
        CHECK_MESSAGE(rep.max_rel_err < 1e-4, "matmul seed " << seed << " err " << rep.max_rel_err);

        auto x = uniform_init<double>({m, n}, -3.0, 3.0, local, false);
        for (int axis : {0, 1}) {
            auto srep = grad_check(
                "softmax", [&, axis](const std::vector<Td>& l) { return project(softmax(l[0], axis), proj); }, {x});
            CHECK_MESSAGE(srep.max_rel_err < 1e-4, "softmax axis " << axis << " err " << srep.max_rel_err);
        }
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(404);
    for (int seed = 0; seed < 10; ++seed) {
        Rng local = rng.fork(static_cast<std::uint64_t>(seed));
        auto in = uniform_init<double>({1, 4, 4}, -1.0, 1.0, local, false);
        auto w = uniform_init<double>({2, 1, 3, 3}, -1.0, 1.0, local, false);
        auto b = uniform_init<double>({2}, -1.0, 1.0, local, false);
        auto proj = make_projection({2, 4, 4}, local);
        auto rep = grad_check(
            "conv2d", [&](const std::vector<Td>& l) { return project(conv2d(l[0], l[1], l[2], 1, 1, 1), proj); },
            {in, w, b});
        CHECK_MESSAGE(rep.max_rel_err < 1e-4, "conv2d seed " << seed << " err " << rep.max_rel_err);
    }
    // Strided and dilated geometry.
    Rng local(42);
    auto in = uniform_init<double>({2, 6, 6}, -1.0, 1.0, local, false);
    auto w = uniform_init<double>({1, 2, 3, 3}, -1.0, 1.0, local, false);
    auto b = uniform_init<double>({1}, -1.0, 1.0, local, false);
    auto out_shape = conv2d(in, w, b, 2, 2, 2).shape();
    auto proj = make_projection(out_shape, local);
    auto rep = grad_check(
        "conv2d_s2d2", [&](const std::vector<Td>& l) { return project(conv2d(l[0], l[1], l[2], 2, 2, 2), proj); },
        {in, w, b});
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("pooling, resampling, reduction gradients") {
    Rng rng(505);
    for (int seed = 0; seed < 10; ++seed) {
        Rng local = rng.fork(static_cast<std::uint64_t>(seed));
        auto x = uniform_init<double>({3, 4, 4}, -2.0, 2.0, local, false);
        auto proj_c = make_projection({3}, local);
        auto proj_s = make_projection({1, 4, 4}, local);
        auto proj_p = make_projection({3, 2, 2}, local);
        auto proj_u = make_projection({3, 7, 5}, local);

        struct Case {
            const char* name;
            GradCheckFn fn;
        };
        const Case cases[] = {
            {"gap", [&](const std::vector<Td>& l) { return project(global_avg_pool(l[0]), proj_c); }},
            {"gmp", [&](const std::vector<Td>& l) { return project(global_max_pool(l[0]), proj_c); }},
            {"cap", [&](const std::vector<Td>& l) { return project(channel_avg_pool(l[0]), proj_s); }},
            {"cmp", [&](const std::vector<Td>& l) { return project(channel_max_pool(l[0]), proj_s); }},
            {"maxpool", [&](const std::vector<Td>& l) { return project(spatial_max_pool(l[0], 2, 2), proj_p); }},
            {"upsample", [&](const std::vector<Td>& l) { return project(upsample_bilinear(l[0], 7, 5), proj_u); }},
            {"sum", [&](const std::vector<Td>& l) { return sum(l[0]); }},
            {"reduce_max", [&](const std::vector<Td>& l) { return reduce_max(l[0]); }},
            {"reduce_min", [&](const std::vector<Td>& l) { return reduce_min(l[0]); }},
        };
        for (const auto& c : cases) {
            auto rep = grad_check(c.name, c.fn, {x});
            CHECK_MESSAGE(rep.max_rel_err < 1e-4, c.name << " seed " << seed << " err " << rep.max_rel_err);
        }
    }
}

TEST_CASE("concat, select, reshape, transpose, maximum gradients") {
    Rng rng(606);
    auto a = uniform_init<double>({2, 3, 3}, -1.0, 1.0, rng, false);
    auto b = uniform_init<double>({1, 3, 3}, -1.0, 1.0, rng, false);
    auto proj = make_projection({3, 3, 3}, rng);
    auto rep = grad_check(
        "concat", [&](const std::vector<Td>& l) { return project(concat<double>({l[0], l[1]}, 0), proj); }, {a, b});
    CHECK(rep.max_rel_err < 1e-4);

    auto v = uniform_init<double>({5}, -1.0, 1.0, rng, false);
    rep = grad_check("select", [](const std::vector<Td>& l) { return select(l[0], 3); }, {v});
    CHECK(rep.max_rel_err < 1e-4);

    auto m = uniform_init<double>({3, 4}, -1.0, 1.0, rng, false);
    auto projt = make_projection({4, 3}, rng);
    rep = grad_check(
        "transpose", [&](const std::vector<Td>& l) { return project(transpose2d(l[0]), projt); }, {m});
    CHECK(rep.max_rel_err < 1e-4);

    auto projr = make_projection({12}, rng);
    rep = grad_check("reshape", [&](const std::vector<Td>& l) { return project(reshape(l[0], {12}), projr); }, {m});
    CHECK(rep.max_rel_err < 1e-4);

    auto c = uniform_init<double>({2, 3, 3}, 0.5, 1.5, rng, false);
    auto projm = make_projection({2, 3, 3}, rng);
    rep = grad_check(
        "maximum", [&](const std::vector<Td>& l) { return project(maximum(l[0], l[1]), projm); }, {a, c});
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("bce_with_logits gradient and values") {
    auto z = Td::zeros({2, 2}, false);
    auto y = Td::from_data({2, 2}, {1, 0, 1, 0});
    CHECK(bce_with_logits(z, y).item() == doctest::Approx(std::log(2.0)));

    Rng rng(707);
    auto logits = uniform_init<double>({1, 3, 3}, -2.0, 2.0, rng, false);
    auto target = Td::from_data({1, 3, 3}, {1, 0, 0, 1, 1, 0, 0, 1, 0});
    auto rep = grad_check(
        "bce", [&](const std::vector<Td>& l) { return bce_with_logits(l[0], l[1]); }, {logits, target});
    CHECK(rep.max_rel_err < 1e-4);
}
