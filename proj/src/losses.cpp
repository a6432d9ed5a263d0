#include "damo/losses.hpp"

#include <cmath>

namespace damo {

void validate_pair(const MaskedDepthPair& pair) {
    if (pair.pred.shape() != pair.gt.shape() || pair.pred.shape() != pair.mask.shape()) {
        throw ShapeError("depth pair tensors must share one shape");
    }
    for (std::size_t i = 0; i < pair.mask.size(); ++i) {
        const double m = pair.mask[i];
        if (m != 0.0 && m != 1.0) {
            throw DomainError("mask entries must be 0 or 1");
        }
        if (m == 1.0 && !(pair.gt[i] > 0.0)) {
            throw DomainError("ground-truth depth must be positive under the mask");
        }
    }
}

BerhuPixel berhu_pixel(double r, double tau) {
    const double a = std::abs(r);
    if (a <= tau) {
        return {a, r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)};
    }
    // algebraically (r^2 + tau^2) / (2 tau); this form gives exactly tau at
    // the branch switch because r / tau is exactly 1 there
    return {0.5 * (r * (r / tau) + tau), r / tau};
}

namespace {

std::size_t count_valid(const MaskedDepthPair& pair) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < pair.mask.size(); ++i) {
        if (pair.mask[i] == 1.0) ++n;
    }
    return n;
}

}  // namespace

double berhu_tau(const MaskedDepthPair& pair) {
    validate_pair(pair);
    if (count_valid(pair) == 0) {
        throw DegenerateInputError("berhu needs at least one valid pixel");
    }
    double max_err = 0.0;
    for (std::size_t i = 0; i < pair.mask.size(); ++i) {
        if (pair.mask[i] != 1.0) continue;
        max_err = std::max(max_err, std::abs(pair.pred[i] - pair.gt[i]));
    }
    return 0.2 * max_err;
}

BerhuResult berhu_given_tau(const MaskedDepthPair& pair, double tau) {
    validate_pair(pair);
    const std::size_t n_valid = count_valid(pair);
    if (n_valid == 0) {
        throw DegenerateInputError("berhu needs at least one valid pixel");
    }
    BerhuResult out;
    out.d_pred = Tensor2(pair.pred.h(), pair.pred.w(), 0.0);
    if (tau == 0.0) {
        // pred == gt everywhere under the mask; defined as zero loss, zero grad.
        return out;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pair.mask.size(); ++i) {
        if (pair.mask[i] != 1.0) continue;
        const BerhuPixel pl = berhu_pixel(pair.pred[i] - pair.gt[i], tau);
        sum += pl.value;
        out.d_pred[i] = pl.d_residual / double(n_valid);
    }
    out.loss = sum / double(n_valid);
    return out;
}

BerhuResult berhu(const MaskedDepthPair& pair) {
    return berhu_given_tau(pair, berhu_tau(pair));
}

BerhuResult weighted_berhu_given_tau(const MaskedDepthPair& pair,
                                     const WeightMatrix& weights, double tau,
                                     Reduction reduction) {
    validate_pair(pair);
    if (weights.grid.shape() != pair.pred.shape()) {
        throw ShapeError("weight matrix shape does not match the depth pair");
    }
    if (count_valid(pair) == 0) {
        throw DegenerateInputError("weighted berhu needs at least one valid pixel");
    }
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < pair.mask.size(); ++i) {
        if (pair.mask[i] == 1.0) weight_sum += weights.grid[i];
    }
    if (reduction == Reduction::WeightedMean && weight_sum == 0.0) {
        throw DegenerateInputError("effective weight is zero over the valid pixels");
    }
    const double denom = reduction == Reduction::WeightedMean ? weight_sum : 1.0;

    BerhuResult out;
    out.d_pred = Tensor2(pair.pred.h(), pair.pred.w(), 0.0);
    if (tau == 0.0) {
        return out;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < pair.mask.size(); ++i) {
        if (pair.mask[i] != 1.0) continue;
        const BerhuPixel pl = berhu_pixel(pair.pred[i] - pair.gt[i], tau);
        sum += weights.grid[i] * pl.value;
        out.d_pred[i] = weights.grid[i] * pl.d_residual / denom;
    }
    out.loss = sum / denom;
    return out;
}

BerhuResult weighted_berhu(const MaskedDepthPair& pair, const WeightMatrix& weights,
                           Reduction reduction) {
    return weighted_berhu_given_tau(pair, weights, berhu_tau(pair), reduction);
}

BatchBerhuResult weighted_berhu_batch(const Tensor4& pred,
                                      const std::vector<Tensor2>& gts,
                                      const std::vector<Tensor2>& masks,
                                      const WeightMatrix& weights,
                                      Reduction reduction) {
    if (pred.c() != 1) {
        throw ShapeError("batch berhu expects single-channel predictions");
    }
    if (gts.size() != std::size_t(pred.n()) || masks.size() != gts.size()) {
        throw ShapeError("batch berhu target count does not match the batch");
    }
    const Shape2 img{pred.h(), pred.w()};
    if (weights.grid.shape() != img) {
        throw ShapeError("weight matrix shape does not match the predictions");
    }

    double max_err = 0.0;
    double weight_sum = 0.0;
    std::size_t n_valid = 0;
    for (int b = 0; b < pred.n(); ++b) {
        MaskedDepthPair pair{squeeze_slice(pred, b), gts[b], masks[b]};
        validate_pair(pair);
        for (std::size_t i = 0; i < pair.mask.size(); ++i) {
            if (pair.mask[i] != 1.0) continue;
            ++n_valid;
            max_err = std::max(max_err, std::abs(pair.pred[i] - pair.gt[i]));
            weight_sum += weights.grid[i];
        }
    }
    if (n_valid == 0) {
        throw DegenerateInputError("batch berhu needs at least one valid pixel");
    }
    if (reduction == Reduction::WeightedMean && weight_sum == 0.0) {
        throw DegenerateInputError("effective weight is zero over the batch");
    }

    BatchBerhuResult out;
    out.d_pred = Tensor4(pred.shape(), 0.0);
    const double tau = 0.2 * max_err;
    if (tau == 0.0) {
        return out;
    }
    const double denom = reduction == Reduction::WeightedMean ? weight_sum : 1.0;
    double sum = 0.0;
    for (int b = 0; b < pred.n(); ++b) {
        for (int i = 0; i < pred.h(); ++i) {
            for (int j = 0; j < pred.w(); ++j) {
                if (masks[std::size_t(b)].at(i, j) != 1.0) continue;
                const double w = weights.grid.at(i, j);
                const BerhuPixel pl =
                    berhu_pixel(pred.at(b, 0, i, j) - gts[std::size_t(b)].at(i, j), tau);
                sum += w * pl.value;
                out.d_pred.at(b, 0, i, j) = w * pl.d_residual / denom;
            }
        }
    }
    out.loss = sum / denom;
    return out;
}

}  // namespace damo
