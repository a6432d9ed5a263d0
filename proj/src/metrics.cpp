#include "damo/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace damo {

double masked_median(const Tensor2& values, const Tensor2& mask) {
    if (values.shape() != mask.shape()) {
        throw ShapeError("median mask shape mismatch");
    }
    std::vector<double> valid;
    valid.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (mask[i] == 1.0) valid.push_back(values[i]);
    }
    if (valid.empty()) {
        throw DegenerateInputError("median of an empty valid set");
    }
    const std::size_t mid = (valid.size() - 1) / 2;
    std::nth_element(valid.begin(), valid.begin() + mid, valid.end());
    return valid[mid];
}

MedianScaled median_scale(const MaskedDepthPair& pair) {
    validate_pair(pair);
    const double med_pred = masked_median(pair.pred, pair.mask);
    if (!(med_pred > 0.0)) {
        throw DomainError("median of predictions must be positive for scaling");
    }
    const double med_gt = masked_median(pair.gt, pair.mask);
    const double s = med_gt / med_pred;

    MedianScaled out{pair, s};
    for (std::size_t i = 0; i < pair.mask.size(); ++i) {
        if (pair.mask[i] == 1.0) out.pair.pred[i] = pair.pred[i] * s;
    }
    return out;
}

MetricReport compute_metrics(const MaskedDepthPair& input, bool apply_median_scaling) {
    validate_pair(input);
    MaskedDepthPair pair = input;
    MetricReport report;
    if (apply_median_scaling) {
        MedianScaled scaled = median_scale(input);
        pair = std::move(scaled.pair);
        report.scale = scaled.scale;
    }

    std::size_t n = 0;
    double sum_sq = 0.0, sum_rel = 0.0, sum_logsq = 0.0;
    std::size_t n1 = 0, n2 = 0, n3 = 0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (std::size_t i = 0; i < pair.mask.size(); ++i) {
        if (pair.mask[i] != 1.0) continue;
        const double p = pair.pred[i];
        const double g = pair.gt[i];
        if (!(p > 0.0)) {
            throw DomainError("nonpositive prediction under the mask");
        }
        ++n;
        const double diff = p - g;
        sum_sq += diff * diff;
        sum_rel += std::abs(diff) / g;
        const double ld = std::log(p) - std::log(g);
        sum_logsq += ld * ld;
        const double ratio = std::max(p / g, g / p);
        if (ratio < t1) ++n1;
        if (ratio < t2) ++n2;
        if (ratio < t3) ++n3;
    }
    if (n == 0) {
        throw DegenerateInputError("metrics need at least one valid pixel");
    }
    report.rmse = std::sqrt(sum_sq / double(n));
    report.abs_rel = sum_rel / double(n);
    report.rmse_log = std::sqrt(sum_logsq / double(n));
    report.delta1 = double(n1) / double(n);
    report.delta2 = double(n2) / double(n);
    report.delta3 = double(n3) / double(n);
    return report;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
    if (reports.empty()) {
        throw DegenerateInputError("cannot average zero reports");
    }
    MetricReport avg;
    avg.scale = 0.0;
    for (const MetricReport& r : reports) {
        avg.rmse += r.rmse;
        avg.abs_rel += r.abs_rel;
        avg.rmse_log += r.rmse_log;
        avg.delta1 += r.delta1;
        avg.delta2 += r.delta2;
        avg.delta3 += r.delta3;
        avg.scale += r.scale;
    }
    const double k = double(reports.size());
    avg.rmse /= k;
    avg.abs_rel /= k;
    avg.rmse_log /= k;
    avg.delta1 /= k;
    avg.delta2 /= k;
    avg.delta3 /= k;
    avg.scale /= k;
    return avg;
}

}  // namespace damo
