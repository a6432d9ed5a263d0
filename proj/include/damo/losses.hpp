#pragma once

#include <vector>

#include "damo/geometry.hpp"
#include "damo/tensor.hpp"

namespace damo {

// Prediction/ground-truth depth pair with a {0,1} validity mask. gt must be
// positive wherever the mask is set.
struct MaskedDepthPair {
    Tensor2 pred;
    Tensor2 gt;
    Tensor2 mask;
};

void validate_pair(const MaskedDepthPair& pair);

struct BerhuResult {
    double loss = 0.0;
    Tensor2 d_pred;
};

struct BerhuPixel {
    double value = 0.0;
    double d_residual = 0.0;
};

// One pixel of Eq-style reverse Huber: |r| up to tau, then the quadratic
// branch written as 0.5 * (r * (r / tau) + tau) so the two branches agree
// bitwise at |r| == tau. Requires tau > 0.
BerhuPixel berhu_pixel(double residual, double tau);

// Reverse Huber with threshold tau = 0.2 * max valid absolute error: L1 below
// tau, (r^2 + tau^2) / (2 tau) above, mean over valid pixels. tau is frozen in
// the backward pass. pred == gt everywhere gives loss 0 with zero gradient.
BerhuResult berhu(const MaskedDepthPair& pair);

// Same per-pixel loss with an externally fixed threshold; used by the
// finite-difference oracle, which must not differentiate through tau.
BerhuResult berhu_given_tau(const MaskedDepthPair& pair, double tau);

double berhu_tau(const MaskedDepthPair& pair);

enum class Reduction { WeightedMean, WeightedSum };

// Per-pixel Berhu times the weight matrix, reduced as sum(W * L * mask) /
// sum(W * mask) so that uniform weights reproduce berhu exactly.
BerhuResult weighted_berhu(const MaskedDepthPair& pair, const WeightMatrix& weights,
                           Reduction reduction = Reduction::WeightedMean);

BerhuResult weighted_berhu_given_tau(const MaskedDepthPair& pair,
                                     const WeightMatrix& weights, double tau,
                                     Reduction reduction = Reduction::WeightedMean);

struct BatchBerhuResult {
    double loss = 0.0;
    Tensor4 d_pred;  // (n, 1, h, w)
};

// Batch variant used by the trainer: one tau over every valid pixel in the
// batch, one weighted-mean reduction over the union.
BatchBerhuResult weighted_berhu_batch(const Tensor4& pred,
                                      const std::vector<Tensor2>& gts,
                                      const std::vector<Tensor2>& masks,
                                      const WeightMatrix& weights,
                                      Reduction reduction = Reduction::WeightedMean);

}  // namespace damo
