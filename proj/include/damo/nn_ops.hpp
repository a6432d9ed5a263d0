#pragma once

#include <vector>

#include "damo/tensor.hpp"

namespace damo {

// Cross-correlation parameters, NCHW weights (out_channels, in_channels, kh, kw).
struct ConvParams {
    Tensor4 weights;
    std::vector<double> bias;
    int stride = 1;
    int pad_h = 0;
    int pad_w = 0;
    int dilation = 1;

    int out_channels() const { return weights.n(); }
    int in_channels() const { return weights.c(); }
    int kh() const { return weights.h(); }
    int kw() const { return weights.w(); }
};

ConvParams make_conv(int out_channels, int in_channels, int kh, int kw,
                     int stride = 1, int pad_h = 0, int pad_w = 0, int dilation = 1);

// Learned per-location sampling displacements for a square KxK kernel.
// Channel layout: channels (2k, 2k+1) hold (d_row, d_col) for grid position
// k = u*K + v, positions enumerated row-major over the kernel grid.
struct OffsetField {
    Tensor4 offsets;  // (n, 2*K*K, h_out, w_out)

    int kernel_size() const;
};

struct LayerGrads {
    Tensor4 d_input;
    Tensor4 d_weights;
    std::vector<double> d_bias;
    Tensor4 d_offsets;  // filled by deform_conv2d_backward only
};

Shape4 conv2d_output_shape(const Shape4& x, const ConvParams& p);

Tensor4 conv2d_forward(const Tensor4& x, const ConvParams& p);
LayerGrads conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& d_out);

// Kernel-weighted interpolation sum(q) g(q_r, pr) * g(q_c, pc) * x[q] with
// g(a, b) = max(0, 1 - |a - b|); locations outside the image contribute zero.
double bilinear_sample(const Tensor4& x, int n, int c, double pr, double pc);

// Derivative of the interpolant with respect to the sampling coordinate.
// At integer |a - b| the left-branch subgradient is used, so at a grid node
// the reported slope is the backward difference.
double bilinear_sample_dpr(const Tensor4& x, int n, int c, double pr, double pc);
double bilinear_sample_dpc(const Tensor4& x, int n, int c, double pr, double pc);

Tensor4 deform_conv2d_forward(const Tensor4& x, const ConvParams& p, const OffsetField& off);
LayerGrads deform_conv2d_backward(const Tensor4& x, const ConvParams& p,
                                  const OffsetField& off, const Tensor4& d_out);

// Convolution whose output is reinterpreted as an OffsetField; p must produce
// exactly 2*K*K channels.
OffsetField offset_conv(const Tensor4& x, const ConvParams& p);

enum class StripPool { Max, Mean };

// Row reduction to (n, c, h, 1) and column reduction to (n, c, 1, w). The max
// backward routes each gradient to the first occurrence of the extremum in
// scan order.
Tensor4 strip_pool_h(const Tensor4& x, StripPool kind = StripPool::Max);
Tensor4 strip_pool_v(const Tensor4& x, StripPool kind = StripPool::Max);
Tensor4 strip_pool_h_backward(const Tensor4& x, const Tensor4& d_out,
                              StripPool kind = StripPool::Max);
Tensor4 strip_pool_v_backward(const Tensor4& x, const Tensor4& d_out,
                              StripPool kind = StripPool::Max);

// Strip pooling module: broadcast-add the two strip descriptors, fuse with a
// 1x1 convolution, sigmoid-gate the input.
Tensor4 spm_forward(const Tensor4& x, const ConvParams& fuse,
                    StripPool kind = StripPool::Max);
LayerGrads spm_backward(const Tensor4& x, const ConvParams& fuse, const Tensor4& d_out,
                        StripPool kind = StripPool::Max);

struct FilterBankGrads {
    Tensor4 d_input;
    std::vector<Tensor4> d_weights;
    std::vector<std::vector<double>> d_bias;
};

// Parallel rectangular convolutions over the same input, outputs concatenated
// along channels. All banks must agree on output spatial dims.
Tensor4 rect_filter_bank(const Tensor4& x, const std::vector<ConvParams>& banks);
FilterBankGrads rect_filter_bank_backward(const Tensor4& x,
                                          const std::vector<ConvParams>& banks,
                                          const Tensor4& d_out);

Tensor4 maxpool2(const Tensor4& x);
Tensor4 maxpool2_backward(const Tensor4& x, const Tensor4& d_out);

Tensor4 upsample_nn2(const Tensor4& x);
Tensor4 upsample_nn2_backward(const Shape4& input_shape, const Tensor4& d_out);

Tensor4 relu(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& x, const Tensor4& d_out);

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);

}  // namespace damo
