#pragma once

#include <vector>

#include "damo/losses.hpp"

namespace damo {

struct MetricReport {
    double rmse = 0.0;      // meters
    double abs_rel = 0.0;
    double rmse_log = 0.0;  // natural log
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    double scale = 1.0;     // applied median scalar
};

// Median over valid pixels; even counts take the lower-middle element.
double masked_median(const Tensor2& values, const Tensor2& mask);

// Rescales predictions by s = median(gt) / median(pred) over valid pixels, the
// global-scale removal used before metric computation.
struct MedianScaled {
    MaskedDepthPair pair;
    double scale = 1.0;
};
MedianScaled median_scale(const MaskedDepthPair& pair);

MetricReport compute_metrics(const MaskedDepthPair& pair, bool apply_median_scaling);

// Per-image reports averaged field-wise into a dataset summary.
MetricReport average_reports(const std::vector<MetricReport>& reports);

}  // namespace damo
