#include "damo/nn_ops.hpp"

#include <cmath>

namespace damo {

ConvParams make_conv(int out_channels, int in_channels, int kh, int kw,
                     int stride, int pad_h, int pad_w, int dilation) {
    if (out_channels < 1 || in_channels < 1 || kh < 1 || kw < 1) {
        throw ShapeError("conv kernel dims must be >= 1");
    }
    if (stride < 1 || dilation < 1 || pad_h < 0 || pad_w < 0) {
        throw ShapeError("invalid conv stride/padding/dilation");
    }
    ConvParams p;
    p.weights = Tensor4({out_channels, in_channels, kh, kw}, 0.0);
    p.bias.assign(out_channels, 0.0);
    p.stride = stride;
    p.pad_h = pad_h;
    p.pad_w = pad_w;
    p.dilation = dilation;
    return p;
}

int OffsetField::kernel_size() const {
    const int ch = offsets.c();
    int k = 1;
    while (2 * k * k < ch) ++k;
    if (2 * k * k != ch) {
        throw ShapeError("offset channel count is not 2*K*K");
    }
    return k;
}

Shape4 conv2d_output_shape(const Shape4& x, const ConvParams& p) {
    if (x.c != p.in_channels()) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(x.c) +
                         " channels, kernel expects " + std::to_string(p.in_channels()));
    }
    if (int(p.bias.size()) != p.out_channels()) {
        throw ShapeError("conv bias length does not match out_channels");
    }
    const int eff_kh = p.dilation * (p.kh() - 1) + 1;
    const int eff_kw = p.dilation * (p.kw() - 1) + 1;
    const int out_h = (x.h + 2 * p.pad_h - eff_kh) / p.stride + 1;
    const int out_w = (x.w + 2 * p.pad_w - eff_kw) / p.stride + 1;
    if (x.h + 2 * p.pad_h < eff_kh || x.w + 2 * p.pad_w < eff_kw || out_h < 1 || out_w < 1) {
        throw ShapeError("conv2d produces an empty output");
    }
    return {x.n, p.out_channels(), out_h, out_w};
}

Tensor4 conv2d_forward(const Tensor4& x, const ConvParams& p) {
    const Shape4 os = conv2d_output_shape(x.shape(), p);
    Tensor4 out(os, 0.0);
    const int kh = p.kh(), kw = p.kw();
    const int H = x.h(), W = x.w();

    for (int n = 0; n < os.n; ++n) {
        for (int o = 0; o < os.c; ++o) {
            for (int i = 0; i < os.h; ++i) {
                double* orow = &out.at(n, o, i, 0);
                for (int j = 0; j < os.w; ++j) orow[j] = p.bias[o];
            }
            for (int ci = 0; ci < x.c(); ++ci) {
                for (int i = 0; i < os.h; ++i) {
                    double* orow = &out.at(n, o, i, 0);
                    for (int u = 0; u < kh; ++u) {
                        const int r = i * p.stride - p.pad_h + u * p.dilation;
                        if (r < 0 || r >= H) continue;
                        const double* xrow = &x.at(n, ci, r, 0);
                        const double* wrow = &p.weights.at(o, ci, u, 0);
                        for (int j = 0; j < os.w; ++j) {
                            const int cbase = j * p.stride - p.pad_w;
                            double acc = 0.0;
                            for (int v = 0; v < kw; ++v) {
                                const int c = cbase + v * p.dilation;
                                if (c < 0 || c >= W) continue;
                                acc += wrow[v] * xrow[c];
                            }
                            orow[j] += acc;
                        }
                    }
                }
            }
        }
    }
    return out;
}

LayerGrads conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& d_out) {
    const Shape4 os = conv2d_output_shape(x.shape(), p);
    if (d_out.shape() != os) {
        throw ShapeError("conv2d_backward d_out shape mismatch: got " +
                         to_string(d_out.shape()) + ", expected " + to_string(os));
    }
    LayerGrads g;
    g.d_input = Tensor4(x.shape(), 0.0);
    g.d_weights = Tensor4(p.weights.shape(), 0.0);
    g.d_bias.assign(p.bias.size(), 0.0);

    const int kh = p.kh(), kw = p.kw();
    const int H = x.h(), W = x.w();

    for (int n = 0; n < os.n; ++n) {
        for (int o = 0; o < os.c; ++o) {
            for (int i = 0; i < os.h; ++i) {
                const double* drow = &d_out.at(n, o, i, 0);
                for (int j = 0; j < os.w; ++j) g.d_bias[o] += drow[j];
            }
            for (int ci = 0; ci < x.c(); ++ci) {
                for (int i = 0; i < os.h; ++i) {
                    const double* drow = &d_out.at(n, o, i, 0);
                    for (int u = 0; u < kh; ++u) {
                        const int r = i * p.stride - p.pad_h + u * p.dilation;
                        if (r < 0 || r >= H) continue;
                        const double* xrow = &x.at(n, ci, r, 0);
                        double* dxrow = &g.d_input.at(n, ci, r, 0);
                        const double* wrow = &p.weights.at(o, ci, u, 0);
                        double* dwrow = &g.d_weights.at(o, ci, u, 0);
                        for (int j = 0; j < os.w; ++j) {
                            const double go = drow[j];
                            if (go == 0.0) continue;
                            const int cbase = j * p.stride - p.pad_w;
                            for (int v = 0; v < kw; ++v) {
                                const int c = cbase + v * p.dilation;
                                if (c < 0 || c >= W) continue;
                                dwrow[v] += go * xrow[c];
                                dxrow[c] += go * wrow[v];
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

namespace {

// Triangular kernel g(a, b) = max(0, 1 - |a - b|).
inline double hat(double a, double b) {
    const double d = std::abs(a - b);
    return d < 1.0 ? 1.0 - d : 0.0;
}

// d/db of hat(a, b), left-branch value where |a - b| lands on an integer.
inline double hat_db(double a, double b) {
    const double d = b - a;
    if (d > -1.0 && d <= 0.0) return 1.0;
    if (d > 0.0 && d <= 1.0) return -1.0;
    return 0.0;
}

}  // namespace

double bilinear_sample(const Tensor4& x, int n, int c, double pr, double pc) {
    const int H = x.h(), W = x.w();
    if (pr <= -1.0 || pr >= double(H) || pc <= -1.0 || pc >= double(W)) {
        return 0.0;
    }
    const int r0 = int(std::floor(pr));
    const int c0 = int(std::floor(pc));
    const double fr = pr - r0;
    const double fc = pc - c0;

    double val = 0.0;
    for (int dr = 0; dr < 2; ++dr) {
        const int r = r0 + dr;
        if (r < 0 || r >= H) continue;
        const double wr = dr == 0 ? 1.0 - fr : fr;
        if (wr == 0.0) continue;
        for (int dc = 0; dc < 2; ++dc) {
            const int col = c0 + dc;
            if (col < 0 || col >= W) continue;
            const double wc = dc == 0 ? 1.0 - fc : fc;
            if (wc == 0.0) continue;
            val += wr * wc * x.at(n, c, r, col);
        }
    }
    return val;
}

double bilinear_sample_dpr(const Tensor4& x, int n, int c, double pr, double pc) {
    const int H = x.h(), W = x.w();
    const int rb = int(std::floor(pr));
    const int cb = int(std::floor(pc));
    double val = 0.0;
    // Three candidate rows: at integer pr the left-branch rule shifts support
    // down by one node, so the plain floor pair is not enough.
    for (int r = rb - 1; r <= rb + 1; ++r) {
        if (r < 0 || r >= H) continue;
        const double dg = hat_db(double(r), pr);
        if (dg == 0.0) continue;
        double row_val = 0.0;
        for (int col = cb; col <= cb + 1; ++col) {
            if (col < 0 || col >= W) continue;
            const double wc = hat(double(col), pc);
            if (wc == 0.0) continue;
            row_val += wc * x.at(n, c, r, col);
        }
        val += dg * row_val;
    }
    return val;
}

double bilinear_sample_dpc(const Tensor4& x, int n, int c, double pr, double pc) {
    const int H = x.h(), W = x.w();
    const int rb = int(std::floor(pr));
    const int cb = int(std::floor(pc));
    double val = 0.0;
    for (int col = cb - 1; col <= cb + 1; ++col) {
        if (col < 0 || col >= W) continue;
        const double dg = hat_db(double(col), pc);
        if (dg == 0.0) continue;
        double col_val = 0.0;
        for (int r = rb; r <= rb + 1; ++r) {
            if (r < 0 || r >= H) continue;
            const double wr = hat(double(r), pr);
            if (wr == 0.0) continue;
            col_val += wr * x.at(n, c, r, col);
        }
        val += dg * col_val;
    }
    return val;
}

namespace {

void check_deform_shapes(const Tensor4& x, const ConvParams& p, const OffsetField& off,
                         const Shape4& os) {
    if (p.kh() != p.kw()) {
        throw ShapeError("deform_conv2d requires a square kernel");
    }
    const int k = p.kh();
    if (off.offsets.c() != 2 * k * k) {
        throw ShapeError("offset field has " + std::to_string(off.offsets.c()) +
                         " channels, expected " + std::to_string(2 * k * k));
    }
    if (off.offsets.n() != x.n() || off.offsets.h() != os.h || off.offsets.w() != os.w) {
        throw ShapeError("offset field dims " + to_string(off.offsets.shape()) +
                         " do not match conv output " + to_string(os));
    }
}

}  // namespace

Tensor4 deform_conv2d_forward(const Tensor4& x, const ConvParams& p, const OffsetField& off) {
    const Shape4 os = conv2d_output_shape(x.shape(), p);
    check_deform_shapes(x, p, off, os);
    const int k = p.kh();
    Tensor4 out(os, 0.0);

    for (int n = 0; n < os.n; ++n) {
        for (int i = 0; i < os.h; ++i) {
            for (int j = 0; j < os.w; ++j) {
                const int rbase = i * p.stride - p.pad_h;
                const int cbase = j * p.stride - p.pad_w;
                for (int u = 0; u < k; ++u) {
                    for (int v = 0; v < k; ++v) {
                        const int kk = u * k + v;
                        const double pr = rbase + u * p.dilation + off.offsets.at(n, 2 * kk, i, j);
                        const double pc = cbase + v * p.dilation + off.offsets.at(n, 2 * kk + 1, i, j);
                        for (int ci = 0; ci < x.c(); ++ci) {
                            const double val = bilinear_sample(x, n, ci, pr, pc);
                            if (val == 0.0) continue;
                            for (int o = 0; o < os.c; ++o) {
                                out.at(n, o, i, j) += p.weights.at(o, ci, u, v) * val;
                            }
                        }
                    }
                }
                for (int o = 0; o < os.c; ++o) {
                    out.at(n, o, i, j) += p.bias[o];
                }
            }
        }
    }
    return out;
}

LayerGrads deform_conv2d_backward(const Tensor4& x, const ConvParams& p,
                                  const OffsetField& off, const Tensor4& d_out) {
    const Shape4 os = conv2d_output_shape(x.shape(), p);
    check_deform_shapes(x, p, off, os);
    if (d_out.shape() != os) {
        throw ShapeError("deform_conv2d_backward d_out shape mismatch");
    }
    const int k = p.kh();
    const int H = x.h(), W = x.w();

    LayerGrads g;
    g.d_input = Tensor4(x.shape(), 0.0);
    g.d_weights = Tensor4(p.weights.shape(), 0.0);
    g.d_bias.assign(p.bias.size(), 0.0);
    g.d_offsets = Tensor4(off.offsets.shape(), 0.0);

    for (int n = 0; n < os.n; ++n) {
        for (int o = 0; o < os.c; ++o) {
            for (int i = 0; i < os.h; ++i) {
                for (int j = 0; j < os.w; ++j) g.d_bias[o] += d_out.at(n, o, i, j);
            }
        }
        for (int i = 0; i < os.h; ++i) {
            for (int j = 0; j < os.w; ++j) {
                const int rbase = i * p.stride - p.pad_h;
                const int cbase = j * p.stride - p.pad_w;
                for (int u = 0; u < k; ++u) {
                    for (int v = 0; v < k; ++v) {
                        const int kk = u * k + v;
                        const double pr = rbase + u * p.dilation + off.offsets.at(n, 2 * kk, i, j);
                        const double pc = cbase + v * p.dilation + off.offsets.at(n, 2 * kk + 1, i, j);
                        double d_pr = 0.0, d_pc = 0.0;
                        for (int ci = 0; ci < x.c(); ++ci) {
                            const double val = bilinear_sample(x, n, ci, pr, pc);
                            // Total upstream weight reaching this sample.
                            double wsum = 0.0;
                            for (int o = 0; o < os.c; ++o) {
                                const double go = d_out.at(n, o, i, j);
                                g.d_weights.at(o, ci, u, v) += go * val;
                                wsum += go * p.weights.at(o, ci, u, v);
                            }
                            if (wsum == 0.0) continue;
                            d_pr += wsum * bilinear_sample_dpr(x, n, ci, pr, pc);
                            d_pc += wsum * bilinear_sample_dpc(x, n, ci, pr, pc);
                            // Scatter into the interpolation neighborhood.
                            if (pr > -1.0 && pr < double(H) && pc > -1.0 && pc < double(W)) {
                                const int r0 = int(std::floor(pr));
                                const int c0 = int(std::floor(pc));
                                for (int dr = 0; dr < 2; ++dr) {
                                    const int r = r0 + dr;
                                    if (r < 0 || r >= H) continue;
                                    const double wr = hat(double(r), pr);
                                    if (wr == 0.0) continue;
                                    for (int dc = 0; dc < 2; ++dc) {
                                        const int col = c0 + dc;
                                        if (col < 0 || col >= W) continue;
                                        const double wc = hat(double(col), pc);
                                        if (wc == 0.0) continue;
                                        g.d_input.at(n, ci, r, col) += wsum * wr * wc;
                                    }
                                }
                            }
                        }
                        g.d_offsets.at(n, 2 * kk, i, j) = d_pr;
                        g.d_offsets.at(n, 2 * kk + 1, i, j) = d_pc;
                    }
                }
            }
        }
    }
    return g;
}

OffsetField offset_conv(const Tensor4& x, const ConvParams& p) {
    const int oc = p.out_channels();
    int k = 1;
    while (2 * k * k < oc) ++k;
    if (2 * k * k != oc) {
        throw ShapeError("offset_conv out_channels must equal 2*K*K, got " +
                         std::to_string(oc));
    }
    return OffsetField{conv2d_forward(x, p)};
}

Tensor4 strip_pool_h(const Tensor4& x, StripPool kind) {
    Tensor4 out({x.n(), x.c(), x.h(), 1}, 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int i = 0; i < x.h(); ++i) {
                const double* row = &x.at(n, c, i, 0);
                double acc = kind == StripPool::Max ? row[0] : 0.0;
                for (int j = 0; j < x.w(); ++j) {
                    if (kind == StripPool::Max) {
                        if (row[j] > acc) acc = row[j];
                    } else {
                        acc += row[j];
                    }
                }
                out.at(n, c, i, 0) = kind == StripPool::Max ? acc : acc / double(x.w());
            }
        }
    }
    return out;
}

Tensor4 strip_pool_v(const Tensor4& x, StripPool kind) {
    Tensor4 out({x.n(), x.c(), 1, x.w()}, 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int j = 0; j < x.w(); ++j) {
                double acc = kind == StripPool::Max ? x.at(n, c, 0, j) : 0.0;
                for (int i = 0; i < x.h(); ++i) {
                    const double v = x.at(n, c, i, j);
                    if (kind == StripPool::Max) {
                        if (v > acc) acc = v;
                    } else {
                        acc += v;
                    }
                }
                out.at(n, c, 0, j) = kind == StripPool::Max ? acc : acc / double(x.h());
            }
        }
    }
    return out;
}

Tensor4 strip_pool_h_backward(const Tensor4& x, const Tensor4& d_out, StripPool kind) {
    if (d_out.shape() != Shape4{x.n(), x.c(), x.h(), 1}) {
        throw ShapeError("strip_pool_h_backward d_out shape mismatch");
    }
    Tensor4 dx(x.shape(), 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int i = 0; i < x.h(); ++i) {
                const double g = d_out.at(n, c, i, 0);
                if (kind == StripPool::Mean) {
                    const double share = g / double(x.w());
                    for (int j = 0; j < x.w(); ++j) dx.at(n, c, i, j) += share;
                    continue;
                }
                const double* row = &x.at(n, c, i, 0);
                int arg = 0;
                for (int j = 1; j < x.w(); ++j) {
                    if (row[j] > row[arg]) arg = j;
                }
                dx.at(n, c, i, arg) += g;
            }
        }
    }
    return dx;
}

Tensor4 strip_pool_v_backward(const Tensor4& x, const Tensor4& d_out, StripPool kind) {
    if (d_out.shape() != Shape4{x.n(), x.c(), 1, x.w()}) {
        throw ShapeError("strip_pool_v_backward d_out shape mismatch");
    }
    Tensor4 dx(x.shape(), 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int j = 0; j < x.w(); ++j) {
                const double g = d_out.at(n, c, 0, j);
                if (kind == StripPool::Mean) {
                    const double share = g / double(x.h());
                    for (int i = 0; i < x.h(); ++i) dx.at(n, c, i, j) += share;
                    continue;
                }
                int arg = 0;
                for (int i = 1; i < x.h(); ++i) {
                    if (x.at(n, c, i, j) > x.at(n, c, arg, j)) arg = i;
                }
                dx.at(n, c, arg, j) += g;
            }
        }
    }
    return dx;
}

namespace {

void check_spm_fuse(const Tensor4& x, const ConvParams& fuse) {
    if (fuse.kh() != 1 || fuse.kw() != 1 || fuse.stride != 1 ||
        fuse.pad_h != 0 || fuse.pad_w != 0) {
        throw ShapeError("spm fuse must be an unpadded stride-1 1x1 conv");
    }
    if (fuse.in_channels() != x.c() || fuse.out_channels() != x.c()) {
        throw ShapeError("spm fuse must map " + std::to_string(x.c()) + " -> " +
                         std::to_string(x.c()) + " channels");
    }
}

Tensor4 strip_broadcast_sum(const Tensor4& yh, const Tensor4& yv, const Shape4& shape) {
    Tensor4 y(shape, 0.0);
    for (int n = 0; n < shape.n; ++n) {
        for (int c = 0; c < shape.c; ++c) {
            for (int i = 0; i < shape.h; ++i) {
                const double a = yh.at(n, c, i, 0);
                for (int j = 0; j < shape.w; ++j) {
                    y.at(n, c, i, j) = a + yv.at(n, c, 0, j);
                }
            }
        }
    }
    return y;
}

}  // namespace

Tensor4 spm_forward(const Tensor4& x, const ConvParams& fuse, StripPool kind) {
    check_spm_fuse(x, fuse);
    const Tensor4 yh = strip_pool_h(x, kind);
    const Tensor4 yv = strip_pool_v(x, kind);
    const Tensor4 y = strip_broadcast_sum(yh, yv, x.shape());
    const Tensor4 gate = sigmoid(conv2d_forward(y, fuse));
    Tensor4 z(x.shape(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * gate[i];
    return z;
}

LayerGrads spm_backward(const Tensor4& x, const ConvParams& fuse, const Tensor4& d_out,
                        StripPool kind) {
    check_spm_fuse(x, fuse);
    if (d_out.shape() != x.shape()) {
        throw ShapeError("spm_backward d_out shape mismatch");
    }
    const Tensor4 yh = strip_pool_h(x, kind);
    const Tensor4 yv = strip_pool_v(x, kind);
    const Tensor4 y = strip_broadcast_sum(yh, yv, x.shape());
    const Tensor4 gate = sigmoid(conv2d_forward(y, fuse));

    Tensor4 d_x(x.shape(), 0.0);
    Tensor4 d_s(x.shape(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        d_x[i] = d_out[i] * gate[i];
        d_s[i] = d_out[i] * x[i] * gate[i] * (1.0 - gate[i]);
    }

    LayerGrads fg = conv2d_backward(y, fuse, d_s);

    Tensor4 d_yh({x.n(), x.c(), x.h(), 1}, 0.0);
    Tensor4 d_yv({x.n(), x.c(), 1, x.w()}, 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int i = 0; i < x.h(); ++i) {
                for (int j = 0; j < x.w(); ++j) {
                    const double g = fg.d_input.at(n, c, i, j);
                    d_yh.at(n, c, i, 0) += g;
                    d_yv.at(n, c, 0, j) += g;
                }
            }
        }
    }
    const Tensor4 d_x_h = strip_pool_h_backward(x, d_yh, kind);
    const Tensor4 d_x_v = strip_pool_v_backward(x, d_yv, kind);
    for (std::size_t i = 0; i < x.size(); ++i) d_x[i] += d_x_h[i] + d_x_v[i];

    LayerGrads g;
    g.d_input = std::move(d_x);
    g.d_weights = std::move(fg.d_weights);
    g.d_bias = std::move(fg.d_bias);
    return g;
}

Tensor4 rect_filter_bank(const Tensor4& x, const std::vector<ConvParams>& banks) {
    if (banks.empty()) {
        throw ShapeError("filter bank needs at least one bank");
    }
    std::vector<Tensor4> outs;
    outs.reserve(banks.size());
    int total_c = 0;
    for (const ConvParams& b : banks) {
        outs.push_back(conv2d_forward(x, b));
        total_c += outs.back().c();
        if (outs.back().h() != outs.front().h() || outs.back().w() != outs.front().w()) {
            throw ShapeError("filter banks disagree on output spatial dims");
        }
    }
    Tensor4 out({x.n(), total_c, outs.front().h(), outs.front().w()}, 0.0);
    for (int n = 0; n < x.n(); ++n) {
        int co = 0;
        for (const Tensor4& t : outs) {
            for (int c = 0; c < t.c(); ++c, ++co) {
                for (int i = 0; i < t.h(); ++i) {
                    for (int j = 0; j < t.w(); ++j) {
                        out.at(n, co, i, j) = t.at(n, c, i, j);
                    }
                }
            }
        }
    }
    return out;
}

FilterBankGrads rect_filter_bank_backward(const Tensor4& x,
                                          const std::vector<ConvParams>& banks,
                                          const Tensor4& d_out) {
    if (banks.empty()) {
        throw ShapeError("filter bank needs at least one bank");
    }
    FilterBankGrads g;
    g.d_input = Tensor4(x.shape(), 0.0);
    int cstart = 0;
    for (const ConvParams& b : banks) {
        const Shape4 os = conv2d_output_shape(x.shape(), b);
        if (cstart + os.c > d_out.c() || d_out.h() != os.h || d_out.w() != os.w) {
            throw ShapeError("filter bank backward d_out shape mismatch");
        }
        Tensor4 slice(os, 0.0);
        for (int n = 0; n < os.n; ++n) {
            for (int c = 0; c < os.c; ++c) {
                for (int i = 0; i < os.h; ++i) {
                    for (int j = 0; j < os.w; ++j) {
                        slice.at(n, c, i, j) = d_out.at(n, cstart + c, i, j);
                    }
                }
            }
        }
        LayerGrads bg = conv2d_backward(x, b, slice);
        for (std::size_t i = 0; i < g.d_input.size(); ++i) g.d_input[i] += bg.d_input[i];
        g.d_weights.push_back(std::move(bg.d_weights));
        g.d_bias.push_back(std::move(bg.d_bias));
        cstart += os.c;
    }
    if (cstart != d_out.c()) {
        throw ShapeError("filter bank backward d_out has extra channels");
    }
    return g;
}

Tensor4 maxpool2(const Tensor4& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0) {
        throw ShapeError("maxpool2 requires even spatial dims, got " + to_string(x.shape()));
    }
    Tensor4 out({x.n(), x.c(), x.h() / 2, x.w() / 2}, 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int i = 0; i < out.h(); ++i) {
                for (int j = 0; j < out.w(); ++j) {
                    double m = x.at(n, c, 2 * i, 2 * j);
                    m = std::max(m, x.at(n, c, 2 * i, 2 * j + 1));
                    m = std::max(m, x.at(n, c, 2 * i + 1, 2 * j));
                    m = std::max(m, x.at(n, c, 2 * i + 1, 2 * j + 1));
                    out.at(n, c, i, j) = m;
                }
            }
        }
    }
    return out;
}

Tensor4 maxpool2_backward(const Tensor4& x, const Tensor4& d_out) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0) {
        throw ShapeError("maxpool2 requires even spatial dims");
    }
    if (d_out.shape() != Shape4{x.n(), x.c(), x.h() / 2, x.w() / 2}) {
        throw ShapeError("maxpool2_backward d_out shape mismatch");
    }
    Tensor4 dx(x.shape(), 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int i = 0; i < d_out.h(); ++i) {
                for (int j = 0; j < d_out.w(); ++j) {
                    // First occurrence in scan order takes the gradient.
                    int br = 2 * i, bc = 2 * j;
                    double best = x.at(n, c, br, bc);
                    const int rows[2] = {2 * i, 2 * i + 1};
                    const int cols[2] = {2 * j, 2 * j + 1};
                    for (int a = 0; a < 2; ++a) {
                        for (int b = 0; b < 2; ++b) {
                            const double v = x.at(n, c, rows[a], cols[b]);
                            if (v > best) {
                                best = v;
                                br = rows[a];
                                bc = cols[b];
                            }
                        }
                    }
                    dx.at(n, c, br, bc) += d_out.at(n, c, i, j);
                }
            }
        }
    }
    return dx;
}

Tensor4 upsample_nn2(const Tensor4& x) {
    Tensor4 out({x.n(), x.c(), x.h() * 2, x.w() * 2}, 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int i = 0; i < out.h(); ++i) {
                const double* src = &x.at(n, c, i / 2, 0);
                double* dst = &out.at(n, c, i, 0);
                for (int j = 0; j < out.w(); ++j) dst[j] = src[j / 2];
            }
        }
    }
    return out;
}

Tensor4 upsample_nn2_backward(const Shape4& input_shape, const Tensor4& d_out) {
    if (d_out.shape() != Shape4{input_shape.n, input_shape.c,
                                input_shape.h * 2, input_shape.w * 2}) {
        throw ShapeError("upsample_nn2_backward d_out shape mismatch");
    }
    Tensor4 dx(input_shape, 0.0);
    for (int n = 0; n < input_shape.n; ++n) {
        for (int c = 0; c < input_shape.c; ++c) {
            for (int i = 0; i < d_out.h(); ++i) {
                const double* src = &d_out.at(n, c, i, 0);
                double* dst = &dx.at(n, c, i / 2, 0);
                for (int j = 0; j < d_out.w(); ++j) dst[j / 2] += src[j];
            }
        }
    }
    return dx;
}

Tensor4 relu(const Tensor4& x) {
    Tensor4 out(x.shape(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return out;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& d_out) {
    if (d_out.shape() != x.shape()) {
        throw ShapeError("relu_backward d_out shape mismatch");
    }
    Tensor4 dx(x.shape(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? d_out[i] : 0.0;
    return dx;
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
        throw ShapeError("concat_channels dims mismatch: " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
    }
    Tensor4 out({a.n(), a.c() + b.c(), a.h(), a.w()}, 0.0);
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c) {
            for (int i = 0; i < a.h(); ++i) {
                for (int j = 0; j < a.w(); ++j) out.at(n, c, i, j) = a.at(n, c, i, j);
            }
        }
        for (int c = 0; c < b.c(); ++c) {
            for (int i = 0; i < b.h(); ++i) {
                for (int j = 0; j < b.w(); ++j) out.at(n, a.c() + c, i, j) = b.at(n, c, i, j);
            }
        }
    }
    return out;
}

}  // namespace damo
