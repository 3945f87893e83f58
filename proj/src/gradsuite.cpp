#include "rfnet/gradsuite.hpp"

#include <algorithm>

#include "rfnet/config.hpp"
#include "rfnet/fusion.hpp"
#include "rfnet/network.hpp"

namespace rfnet {

namespace {

using Td = Tensor<double>;

std::vector<Td> with_params(std::vector<Td> leaves, ParamList<double>& params) {
    for (auto& p : params) leaves.push_back(p.tensor);
    return leaves;
}

// Finite differences are only meaningful where the function is locally
// smooth. Zero-initialized biases put the channel-attention maps exactly on
// the min-max normalizer's degenerate guard point, so every module is
// checked at a generic nearby point instead: all parameters re-drawn from a
// small uniform.
void randomize_params(ParamList<double>& params, Rng& rng) {
    for (auto& p : params) {
        for (auto& v : p.tensor.data()) v = rng.uniform(-0.5, 0.5);
    }
}

// Merges max_rel_err across seeds under one report name.
void fold(std::vector<GradCheckReport>& out, const GradCheckReport& rep) {
    for (auto& existing : out) {
        if (existing.name == rep.name) {
            existing.max_rel_err = std::max(existing.max_rel_err, rep.max_rel_err);
            existing.elements += rep.elements;
            existing.pass = existing.pass && rep.pass;
            return;
        }
    }
    out.push_back(rep);
}

void op_checks(std::vector<GradCheckReport>& out, Rng& rng) {
    const int c = rng.uniform_int(1, 8), h = rng.uniform_int(2, 8), w = rng.uniform_int(2, 8);
    const Shape chw{c, h, w};
    auto x = uniform_init<double>(chw, -2.0, 2.0, rng, false);
    auto y = uniform_init<double>(chw, 0.5, 2.0, rng, false);
    auto chan = uniform_init<double>({c, 1, 1}, 0.5, 2.0, rng, false);
    auto proj = make_projection(chw, rng);

    fold(out, grad_check("op.add", [&](const std::vector<Td>& l) { return project(add(l[0], l[1]), proj); }, {x, y}));
    fold(out, grad_check("op.sub", [&](const std::vector<Td>& l) { return project(sub(l[0], l[1]), proj); }, {x, y}));
    fold(out, grad_check("op.mul", [&](const std::vector<Td>& l) { return project(mul(l[0], l[1]), proj); }, {x, y}));
    fold(out, grad_check("op.div", [&](const std::vector<Td>& l) { return project(divide(l[0], l[1]), proj); }, {x, y}));
    fold(out, grad_check("op.mul_broadcast",
                         [&](const std::vector<Td>& l) { return project(mul(l[0], l[1]), proj); }, {x, chan}));
    fold(out, grad_check("op.maximum",
                         [&](const std::vector<Td>& l) { return project(maximum(l[0], l[1]), proj); }, {x, y}));
    fold(out, grad_check("op.scale",
                         [&](const std::vector<Td>& l) { return project(scale(l[0], 1.7), proj); }, {x}));
    fold(out, grad_check("op.add_scalar",
                         [&](const std::vector<Td>& l) { return project(add_scalar(l[0], 0.3), proj); }, {x}));
    fold(out, grad_check("op.sigmoid",
                         [&](const std::vector<Td>& l) { return project(sigmoid(l[0]), proj); }, {x}));
    {
        // Bound relu inputs away from its kink.
        auto pos = uniform_init<double>(chw, 0.2, 2.0, rng, false);
        auto sign = uniform_init<double>(chw, -1.0, 1.0, rng, false);
        for (auto& v : sign.data()) v = v >= 0.0 ? 1.0 : -1.0;
        fold(out, grad_check("op.relu",
                             [&](const std::vector<Td>& l) { return project(relu(mul(l[0], sign)), proj); }, {pos}));
    }
    {
        const int m = rng.uniform_int(1, 6), k = rng.uniform_int(1, 6), n = rng.uniform_int(1, 6);
        auto a = uniform_init<double>({m, k}, -2.0, 2.0, rng, false);
        auto b = uniform_init<double>({k, n}, -2.0, 2.0, rng, false);
        auto pj = make_projection({m, n}, rng);
        fold(out, grad_check("op.matmul",
                             [&](const std::vector<Td>& l) { return project(matmul(l[0], l[1]), pj); }, {a, b}));
        auto sm = uniform_init<double>({m, n}, -3.0, 3.0, rng, false);
        fold(out, grad_check("op.softmax",
                             [&](const std::vector<Td>& l) { return project(softmax(l[0], 1), pj); }, {sm}));
        auto pt = make_projection({k, m}, rng);
        fold(out, grad_check("op.transpose",
                             [&](const std::vector<Td>& l) { return project(transpose2d(l[0]), pt); }, {a}));
    }
    {
        const int k = rng.uniform_int(1, 3) * 2 + 1;  // odd kernels 3/5/7
        const int dilation = rng.uniform_int(1, 2);
        const int pad = dilation * (k - 1) / 2;
        const int oc = rng.uniform_int(1, 4);
        auto in = uniform_init<double>(chw, -1.0, 1.0, rng, false);
        auto wt = uniform_init<double>({oc, c, k, k}, -1.0, 1.0, rng, false);
        auto bs = uniform_init<double>({oc}, -1.0, 1.0, rng, false);
        auto pj = make_projection({oc, h, w}, rng);
        fold(out, grad_check("op.conv2d",
                             [&, pad, dilation](const std::vector<Td>& l) {
                                 return project(conv2d(l[0], l[1], l[2], 1, pad, dilation), pj);
                             },
                             {in, wt, bs}));
    }
    {
        auto pj_c = make_projection({c}, rng);
        auto pj_s = make_projection({1, h, w}, rng);
        fold(out, grad_check("op.global_avg_pool",
                             [&](const std::vector<Td>& l) { return project(global_avg_pool(l[0]), pj_c); }, {x}));
        fold(out, grad_check("op.global_max_pool",
                             [&](const std::vector<Td>& l) { return project(global_max_pool(l[0]), pj_c); }, {x}));
        fold(out, grad_check("op.channel_avg_pool",
                             [&](const std::vector<Td>& l) { return project(channel_avg_pool(l[0]), pj_s); }, {x}));
        fold(out, grad_check("op.channel_max_pool",
                             [&](const std::vector<Td>& l) { return project(channel_max_pool(l[0]), pj_s); }, {x}));
    }
    {
        const int ph = (h - 2) / 2 + 1, pw = (w - 2) / 2 + 1;
        auto pj = make_projection({c, ph, pw}, rng);
        fold(out, grad_check("op.spatial_max_pool",
                             [&](const std::vector<Td>& l) { return project(spatial_max_pool(l[0], 2, 2), pj); }, {x}));
        auto pj_up = make_projection({c, h * 2, w * 2}, rng);
        fold(out, grad_check("op.upsample_bilinear",
                             [&](const std::vector<Td>& l) {
                                 return project(upsample_bilinear(l[0], h * 2, w * 2), pj_up);
                             },
                             {x}));
    }
    {
        auto parts_pj = make_projection({2 * c, h, w}, rng);
        auto x2 = uniform_init<double>(chw, -2.0, 2.0, rng, false);
        fold(out, grad_check("op.concat",
                             [&](const std::vector<Td>& l) {
                                 return project(concat<double>({l[0], l[1]}, 0), parts_pj);
                             },
                             {x, x2}));
        auto vec = uniform_init<double>({5}, -1.0, 1.0, rng, false);
        const int idx = rng.uniform_int(0, 4);
        fold(out, grad_check("op.select", [idx](const std::vector<Td>& l) { return select(l[0], idx); }, {vec}));
        fold(out, grad_check("op.sum", [](const std::vector<Td>& l) { return sum(l[0]); }, {x}));
        fold(out, grad_check("op.reduce_max", [](const std::vector<Td>& l) { return reduce_max(l[0]); }, {x}));
        fold(out, grad_check("op.reduce_min", [](const std::vector<Td>& l) { return reduce_min(l[0]); }, {x}));
        auto pj_r = make_projection({c * h * w}, rng);
        fold(out, grad_check("op.reshape",
                             [&](const std::vector<Td>& l) { return project(reshape(l[0], {c * h * w}), pj_r); }, {x}));
    }
    {
        auto logits = uniform_init<double>({1, h, w}, -2.0, 2.0, rng, false);
        std::vector<double> mask(static_cast<std::size_t>(h) * w);
        for (auto& v : mask) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
        auto gt = Td::from_data({1, h, w}, std::move(mask));
        fold(out, grad_check("op.bce_with_logits",
                             [&](const std::vector<Td>& l) { return bce_with_logits(l[0], gt); }, {logits}));
    }
}

void module_checks(std::vector<GradCheckReport>& out, Rng& rng) {
    const int c = rng.uniform_int(2, 8) & ~1;  // even channel count
    const int h = rng.uniform_int(2, 8), w = rng.uniform_int(2, 8);
    const Shape chw{c, h, w};
    auto r = uniform_init<double>(chw, -1.0, 1.0, rng, false);
    auto d = uniform_init<double>(chw, -1.0, 1.0, rng, false);
    auto proj = make_projection(chw, rng);

    {
        auto params = LwaParams<double>::init(c, 4, rng);
        ParamList<double> plist;
        params.collect("lwa", plist);
        randomize_params(plist, rng);
        auto pj = make_projection({5}, rng);
        fold(out, grad_check("module.lwa",
                             [&, params, pj](const std::vector<Td>& l) {
                                 return project(lwa_forward(l[0], l[1], params).lambda, pj);
                             },
                             with_params({r, d}, plist)));
    }
    {
        auto params = SaParams<double>::init(rng);
        ParamList<double> plist;
        params.collect("sa", plist);
        randomize_params(plist, rng);
        auto pj = make_projection({1, h, w}, rng);
        fold(out, grad_check("module.vanilla_sa",
                             [&, params, pj](const std::vector<Td>& l) {
                                 return project(vanilla_sa(l[0], params), pj);
                             },
                             with_params({r}, plist)));
    }
    {
        auto params = TsaParams<double>::init(rng);
        ParamList<double> plist;
        params.collect("tsa", plist);
        randomize_params(plist, rng);
        auto pj = make_projection({1, h, w}, rng);
        fold(out, grad_check("module.tsa",
                             [&, params, pj](const std::vector<Td>& l) {
                                 return project(tsa_forward(l[0], params), pj);
                             },
                             with_params({r}, plist)));
    }
    {
        auto params = CaParams<double>::init(c, 4, rng);
        ParamList<double> plist;
        params.collect("ca", plist);
        randomize_params(plist, rng);
        auto pj = make_projection({c, 1, 1}, rng);
        fold(out, grad_check("module.channel_attention",
                             [&, params, pj](const std::vector<Td>& l) {
                                 return project(channel_attention(l[0], params), pj);
                             },
                             with_params({r}, plist)));
    }
    {
        auto a = uniform_init<double>({c, 1, 1}, 0.05, 0.95, rng, false);
        auto b = uniform_init<double>({c, 1, 1}, 0.05, 0.95, rng, false);
        auto pj = make_projection({c, 1, 1}, rng);
        fold(out, grad_check("module.shared_fuse",
                             [&, pj](const std::vector<Td>& l) { return project(shared_fuse(l[0], l[1]), pj); },
                             {a, b}));
    }
    {
        auto ca_r = CaParams<double>::init(c, 4, rng);
        auto ca_d = CaParams<double>::init(c, 4, rng);
        ParamList<double> plist;
        ca_r.collect("ca_r", plist);
        ca_d.collect("ca_d", plist);
        randomize_params(plist, rng);
        auto lambda = uniform_init<double>({1}, 0.2, 0.8, rng, false);
        fold(out, grad_check("module.qcrm_ca",
                             [&, ca_r, ca_d, proj](const std::vector<Td>& l) {
                                 return project(qcrm_ca(l[0], l[1], l[2], ca_r, ca_d), proj);
                             },
                             with_params({r, d, lambda}, plist)));
    }
    {
        auto tsa_r = TsaParams<double>::init(rng);
        auto tsa_d = TsaParams<double>::init(rng);
        ParamList<double> plist;
        tsa_r.collect("tsa_r", plist);
        tsa_d.collect("tsa_d", plist);
        randomize_params(plist, rng);
        auto lambda = uniform_init<double>({1}, 0.2, 0.8, rng, false);
        fold(out, grad_check("module.qcrm_tsa",
                             [&, tsa_r, tsa_d, proj](const std::vector<Td>& l) {
                                 return project(qcrm_tsa(l[0], l[1], l[2], tsa_r, tsa_d), proj);
                             },
                             with_params({r, d, lambda}, plist)));
    }
    {
        auto ca_r = CaParams<double>::init(c, 4, rng);
        auto ca_d = CaParams<double>::init(c, 4, rng);
        ParamList<double> plist;
        ca_r.collect("ca_r", plist);
        ca_d.collect("ca_d", plist);
        randomize_params(plist, rng);
        auto pj2 = make_projection({2 * c, h, w}, rng);
        fold(out, grad_check("module.crm_concat",
                             [&, ca_r, ca_d, pj2](const std::vector<Td>& l) {
                                 return project(crm_concat(l[0], l[1], ca_r, ca_d), pj2);
                             },
                             with_params({r, d}, plist)));
    }
    {
        // AF with a previous level: alpha, beta and lambda enter as leaves.
        auto stage = FusionStageParams<double>::init(c, c, 4, FusionVariant::Full, rng);
        ParamList<double> plist;
        stage.collect("af", plist);
        randomize_params(plist, rng);
        auto lambda = uniform_init<double>({1}, 0.2, 0.8, rng, false);
        auto prev = uniform_init<double>({c, h * 2, w * 2}, -1.0, 1.0, rng, false);
        fold(out, grad_check("module.af_fuse",
                             [&, stage, proj](const std::vector<Td>& l) {
                                 return project(af_fuse(l[0], l[1], l[2], stage, &l[3]), proj);
                             },
                             with_params({r, d, lambda, prev}, plist)));
    }
    {
        auto logits = uniform_init<double>({1, h, w}, -2.0, 2.0, rng, false);
        std::vector<double> mask(static_cast<std::size_t>(h) * w);
        for (auto& v : mask) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
        auto gt = Td::from_data({1, h, w}, std::move(mask));
        fold(out, grad_check("module.bce_loss",
                             [&](const std::vector<Td>& l) { return bce_loss(l[0], gt); }, {logits}));
        fold(out, grad_check("module.iou_loss",
                             [&](const std::vector<Td>& l) { return iou_loss(l[0], gt); }, {logits}));
    }
}

void model_check(std::vector<GradCheckReport>& out, std::uint64_t seed) {
    // End-to-end micro model: sampled probes per tensor, 1e-3 tolerance.
    ModelConfig mc;
    mc.channel_plan = {4, 8, 8, 8, 8};
    mc.variant = FusionVariant::Full;
    RFNetModel<double> model = RFNetModel<double>::init(mc, seed);
    Rng rng(seed ^ 0x3A0DE1ull);
    auto rgb = uniform_init<double>({3, 32, 32}, 0.0, 1.0, rng, false);
    auto depth = uniform_init<double>({1, 32, 32}, 0.0, 1.0, rng, false);
    std::vector<double> mask(32 * 32);
    for (auto& v : mask) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
    auto gt = Td::from_data({1, 32, 32}, std::move(mask));

    ParamList<double> params = model.named_params();
    // Nudge every parameter off the zero-bias init so the attention
    // normalizers sit at a smooth point (see randomize_params above).
    for (auto& p : params) {
        for (auto& v : p.tensor.data()) v += rng.uniform(-0.2, 0.2);
    }
    std::vector<Td> leaves{rgb, depth};
    for (auto& p : params) leaves.push_back(p.tensor);

    auto fn = [&model, gt](const std::vector<Td>& l) {
        auto fw = model.forward(l[0], l[1]);
        return add(bce_loss(fw.logits, gt), iou_loss(fw.logits, gt));
    };
    fold(out, grad_check_sampled("model.micro32", fn, leaves, rng, 4, 1e-5, 1e-3));
}

}  // namespace

GradScope parse_grad_scope(const std::string& name) {
    if (name == "op" || name == "ops") return GradScope::Ops;
    if (name == "module" || name == "modules") return GradScope::Modules;
    if (name == "model") return GradScope::Model;
    if (name == "all") return GradScope::All;
    throw ConfigError("unknown grad-check scope '" + name + "' (expected op|module|model|all)");
}

std::vector<GradCheckReport> run_grad_suite(GradScope scope, std::uint64_t seed, int seeds) {
    std::vector<GradCheckReport> reports;
    for (int s = 0; s < seeds; ++s) {
        Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(s));
        if (scope == GradScope::Ops || scope == GradScope::All) op_checks(reports, rng);
        if (scope == GradScope::Modules || scope == GradScope::All) module_checks(reports, rng);
    }
    if (scope == GradScope::Model || scope == GradScope::All) model_check(reports, seed);
    return reports;
}

bool all_pass(const std::vector<GradCheckReport>& reports) {
    for (const auto& r : reports) {
        if (!r.pass) return false;
    }
    return !reports.empty();
}

}  // namespace rfnet
