#include "rfnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rfnet/checkpoint.hpp"

namespace rfnet {

namespace {

constexpr double kEps = 1e-12;

void check_pair(const Tensor<float>& pred, const Tensor<float>& gt, const char* op) {
    check_shape(pred.shape() == gt.shape(),
                std::string(op) + ": prediction and ground truth shapes differ, " + shape_str(pred.shape()) + " vs " +
                    shape_str(gt.shape()));
}

bool gt_at(const Tensor<float>& gt, std::size_t i) { return gt.data()[i] >= 0.5f; }

double mean_of(const std::vector<float>& v) {
    double acc = 0.0;
    for (float x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double adaptive_threshold(const Tensor<float>& pred) {
    return std::min(1.0, 2.0 * mean_of(pred.data()));
}

// ---- structure measure pieces ------------------------------------------------

// 2*mean / (mean^2 + 1 + std) over the masked prediction values.
double object_score(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double m = 0.0;
    for (double v : values) m += v;
    m /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - m) * (v - m);
    const double sd = values.size() > 1 ? std::sqrt(var / (static_cast<double>(values.size()) - 1.0)) : 0.0;
    return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

double s_object(const Tensor<float>& pred, const Tensor<float>& gt) {
    std::vector<double> fg, bg;
    double gt_mean = 0.0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        if (gt_at(gt, i)) {
            fg.push_back(pred.data()[i]);
            gt_mean += 1.0;
        } else {
            bg.push_back(1.0 - pred.data()[i]);
        }
    }
    gt_mean /= static_cast<double>(pred.data().size());
    return gt_mean * object_score(fg) + (1.0 - gt_mean) * object_score(bg);
}

// SSIM-style block similarity between a region of the prediction and mask.
double region_ssim(const std::vector<double>& p, const std::vector<double>& g) {
    const double n = static_cast<double>(p.size());
    if (p.empty()) return 1.0;
    double mp = 0.0, mg = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        mp += p[i];
        mg += g[i];
    }
    mp /= n;
    mg /= n;
    double vp = 0.0, vg = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        vp += (p[i] - mp) * (p[i] - mp);
        vg += (g[i] - mg) * (g[i] - mg);
        cov += (p[i] - mp) * (g[i] - mg);
    }
    const double denom_n = n - 1.0 + kEps;
    vp /= denom_n;
    vg /= denom_n;
    cov /= denom_n;
    const double alpha = 4.0 * mp * mg * cov;
    const double beta = (mp * mp + mg * mg) * (vp + vg);
    if (alpha != 0.0) return alpha / (beta + kEps);
    return (beta == 0.0) ? 1.0 : 0.0;
}

double s_region(const Tensor<float>& pred, const Tensor<float>& gt) {
    const int h = pred.dim(1), w = pred.dim(2);
    const auto idx = [w](int y, int x) { return static_cast<std::size_t>(y) * w + x; };
    // Ground-truth centroid; image center if empty.
    double total = 0.0, sx = 0.0, sy = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (gt_at(gt, idx(y, x))) {
                total += 1.0;
                sx += x;
                sy += y;
            }
        }
    }
    int cx = w / 2, cy = h / 2;
    if (total > 0.0) {
        cx = std::clamp(static_cast<int>(std::lround(sx / total)), 0, w - 1);
        cy = std::clamp(static_cast<int>(std::lround(sy / total)), 0, h - 1);
    }
    // Quadrants split at the centroid (inclusive on the top-left side).
    double score = 0.0;
    const double area = static_cast<double>(h) * w;
    for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx) {
            const int y0 = qy == 0 ? 0 : cy + 1;
            const int y1 = qy == 0 ? cy + 1 : h;
            const int x0 = qx == 0 ? 0 : cx + 1;
            const int x1 = qx == 0 ? cx + 1 : w;
            std::vector<double> p, g;
            p.reserve(static_cast<std::size_t>(std::max(0, y1 - y0)) * static_cast<std::size_t>(std::max(0, x1 - x0)));
            g.reserve(p.capacity());
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    p.push_back(pred.data()[idx(y, x)]);
                    g.push_back(gt_at(gt, idx(y, x)) ? 1.0 : 0.0);
                }
            }
            const double weight = static_cast<double>(p.size()) / area;
            score += weight * region_ssim(p, g);
        }
    }
    return score;
}

}  // namespace

double mae(const Tensor<float>& pred, const Tensor<float>& gt) {
    check_pair(pred, gt, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        acc += std::abs(static_cast<double>(pred.data()[i]) - static_cast<double>(gt.data()[i]));
    }
    return acc / static_cast<double>(pred.data().size());
}

double f_measure_thresholded(const Tensor<float>& pred, const Tensor<float>& gt, double threshold, double beta2) {
    check_pair(pred, gt, "f_measure");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        const bool p = pred.data()[i] >= threshold;
        const bool g = gt_at(gt, i);
        if (p && g) ++tp;
        if (p && !g) ++fp;
        if (!p && g) ++fn;
    }
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
}

double f_measure(const Tensor<float>& pred, const Tensor<float>& gt, double beta2) {
    return f_measure_thresholded(pred, gt, adaptive_threshold(pred), beta2);
}

double s_measure(const Tensor<float>& pred, const Tensor<float>& gt, double alpha) {
    check_pair(pred, gt, "s_measure");
    check_shape(pred.rank() == 3 && pred.dim(0) == 1, "s_measure: 1×H×W maps required");
    double gt_mean = 0.0;
    for (std::size_t i = 0; i < gt.data().size(); ++i) gt_mean += gt_at(gt, i) ? 1.0 : 0.0;
    gt_mean /= static_cast<double>(gt.data().size());
    const double pred_mean = mean_of(pred.data());
    // Reference-implementation conventions for degenerate ground truth.
    if (gt_mean == 0.0) return 1.0 - pred_mean;
    if (gt_mean == 1.0) return pred_mean;
    const double s = alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt);
    return std::clamp(s, 0.0, 1.0);
}

double e_measure(const Tensor<float>& pred, const Tensor<float>& gt) {
    check_pair(pred, gt, "e_measure");
    const double t = adaptive_threshold(pred);
    const std::size_t n = pred.data().size();
    std::vector<double> bin(n);
    for (std::size_t i = 0; i < n; ++i) bin[i] = pred.data()[i] >= t ? 1.0 : 0.0;
    double gt_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) gt_sum += gt_at(gt, i) ? 1.0 : 0.0;

    double acc = 0.0;
    if (gt_sum == 0.0) {
        // All-background ground truth: score the background agreement.
        for (std::size_t i = 0; i < n; ++i) acc += 1.0 - bin[i];
    } else if (gt_sum == static_cast<double>(n)) {
        for (std::size_t i = 0; i < n; ++i) acc += bin[i];
    } else {
        double mu_p = 0.0;
        for (double v : bin) mu_p += v;
        mu_p /= static_cast<double>(n);
        const double mu_g = gt_sum / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ap = bin[i] - mu_p;
            const double ag = (gt_at(gt, i) ? 1.0 : 0.0) - mu_g;
            const double xi = 2.0 * ap * ag / (ap * ap + ag * ag + kEps);
            acc += (xi + 1.0) * (xi + 1.0) / 4.0;
        }
    }
    return acc / static_cast<double>(n);
}

SampleMetrics compute_sample_metrics(int id, const Tensor<float>& pred, const Tensor<float>& gt) {
    SampleMetrics m;
    m.id = id;
    m.mae = mae(pred, gt);
    m.f = f_measure(pred, gt);
    m.s = s_measure(pred, gt);
    m.e = e_measure(pred, gt);
    return m;
}

MetricsReport aggregate(const std::vector<SampleMetrics>& rows) {
    MetricsReport report;
    report.count = static_cast<int>(rows.size());
    if (rows.empty()) return report;
    double sums[4] = {0, 0, 0, 0};
    double comp[4] = {0, 0, 0, 0};
    for (const auto& r : rows) {
        const double vals[4] = {r.mae, r.f, r.s, r.e};
        for (int k = 0; k < 4; ++k) {
            const double y = vals[k] - comp[k];
            const double t = sums[k] + y;
            comp[k] = (t - sums[k]) - y;
            sums[k] = t;
        }
    }
    const double n = static_cast<double>(rows.size());
    report.mae = sums[0] / n;
    report.f_measure = sums[1] / n;
    report.s_measure = sums[2] / n;
    report.e_measure = sums[3] / n;
    return report;
}

void write_metrics_csv(const std::string& path, const std::vector<SampleMetrics>& rows) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write metrics csv: " + path);
    os << "sample_id,mae,f,s,e\n";
    char line[160];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f\n", r.id, r.mae, r.f, r.s, r.e);
        os << line;
    }
    const MetricsReport agg = aggregate(rows);
    std::snprintf(line, sizeof(line), "aggregate,%.6f,%.6f,%.6f,%.6f\n", agg.mae, agg.f_measure, agg.s_measure,
                  agg.e_measure);
    os << line;
}

}  // namespace rfnet
