#pragma once

// Central finite-difference verification of the analytic gradients. Runs in
// double precision: (f(x+eps) - f(x-eps)) / 2eps per element against the
// gradient produced by backward().

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rfnet/tensor.hpp"

namespace rfnet {

struct GradCheckReport {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    int elements = 0;
    bool pass = false;
};

// Scalar functional of the leaf tensors; re-evaluated for every probe.
using GradCheckFn = std::function<Tensor<double>(const std::vector<Tensor<double>>& leaves)>;

// Relative error with a floor: elements whose gradients are tiny in both
// routes are compared absolutely, which keeps finite-difference roundoff
// (~1e-10 for O(1) losses) from masquerading as relative error.
inline double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

inline GradCheckReport grad_check(const std::string& name, const GradCheckFn& fn, std::vector<Tensor<double>> leaves,
                                  double eps = 1e-5, double tolerance = 1e-4) {
    for (auto& leaf : leaves) leaf.node()->requires_grad = true;

    Tensor<double> loss = fn(leaves);
    check_shape(loss.size() == 1, "grad_check: functional must return a scalar");
    for (auto& leaf : leaves) leaf.zero_grad();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckReport report;
    report.name = name;
    report.tolerance = tolerance;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& data = leaves[li].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + eps;
            const double up = fn(leaves).item();
            data[i] = saved - eps;
            const double down = fn(leaves).item();
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            report.max_rel_err = std::max(report.max_rel_err, grad_rel_err(analytic[li][i], numeric));
            report.elements++;
        }
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

// Like grad_check, but probes at most `probes_per_leaf` randomly chosen
// elements per leaf. Used for the end-to-end model check where exhaustive
// probing of every parameter would be wasteful.
inline GradCheckReport grad_check_sampled(const std::string& name, const GradCheckFn& fn,
                                          std::vector<Tensor<double>> leaves, Rng& rng, int probes_per_leaf,
                                          double eps = 1e-5, double tolerance = 1e-4) {
    for (auto& leaf : leaves) leaf.node()->requires_grad = true;
    Tensor<double> loss = fn(leaves);
    check_shape(loss.size() == 1, "grad_check: functional must return a scalar");
    for (auto& leaf : leaves) leaf.zero_grad();
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckReport report;
    report.name = name;
    report.tolerance = tolerance;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& data = leaves[li].data();
        const int n = static_cast<int>(data.size());
        for (int probe = 0; probe < std::min(probes_per_leaf, n); ++probe) {
            const auto i = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
            const double saved = data[i];
            data[i] = saved + eps;
            const double up = fn(leaves).item();
            data[i] = saved - eps;
            const double down = fn(leaves).item();
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            report.max_rel_err = std::max(report.max_rel_err, grad_rel_err(analytic[li][i], numeric));
            report.elements++;
        }
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

// Fixed random projection turning a tensor-valued output into a scalar, so
// whole modules can be checked with one backward pass. Build the weights
// once and capture them in the functional: they must not change between
// finite-difference probes.
inline Tensor<double> make_projection(const Shape& shape, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(numel(shape)));
    const double inv = 1.0 / std::sqrt(static_cast<double>(w.size()));
    for (auto& v : w) v = rng.uniform(-1.0, 1.0) * inv;
    return Tensor<double>::from_data(shape, std::move(w));
}

inline Tensor<double> project(const Tensor<double>& out, const Tensor<double>& weights) {
    return sum(mul(out, weights));
}

}  // namespace rfnet
