#pragma once

// Saliency evaluation measures: MAE, adaptive-threshold F-measure (beta^2 =
// 0.3), structure measure (alpha = 0.5) and enhanced-alignment measure.
// Degenerate ground truths follow the reference implementations' documented
// fallbacks; aggregates are compensated sums in sample order.

#include <functional>
#include <string>
#include <vector>

#include "rfnet/tensor.hpp"

namespace rfnet {

struct MetricsReport {
    double mae = 0.0;
    double f_measure = 0.0;
    double s_measure = 0.0;
    double e_measure = 0.0;
    int count = 0;
};

struct SampleMetrics {
    int id = 0;
    double mae = 0.0, f = 0.0, s = 0.0, e = 0.0;
};

double mae(const Tensor<float>& pred, const Tensor<float>& gt);
double f_measure(const Tensor<float>& pred, const Tensor<float>& gt, double beta2 = 0.3);
double f_measure_thresholded(const Tensor<float>& pred, const Tensor<float>& gt, double threshold,
                             double beta2 = 0.3);
double s_measure(const Tensor<float>& pred, const Tensor<float>& gt, double alpha = 0.5);
double e_measure(const Tensor<float>& pred, const Tensor<float>& gt);

SampleMetrics compute_sample_metrics(int id, const Tensor<float>& pred, const Tensor<float>& gt);

// Mean over samples (Kahan-compensated, in index order).
MetricsReport aggregate(const std::vector<SampleMetrics>& rows);

// Fixed column order: sample_id, mae, f, s, e, with a trailing aggregate row.
void write_metrics_csv(const std::string& path, const std::vector<SampleMetrics>& rows);

}  // namespace rfnet
