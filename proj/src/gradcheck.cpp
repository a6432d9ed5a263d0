#include "damo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "damo/losses.hpp"
#include "damo/model.hpp"
#include "damo/nn_ops.hpp"

namespace damo {

double worst_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    if (analytic.size() != numeric.size()) {
        throw ShapeError("gradient size mismatch in comparison");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

namespace {

Tensor4 random_tensor(Rng& rng, Shape4 shape, double lo, double hi) {
    Tensor4 t(shape, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Signed probe weights of magnitude [0.5, 1.5]; a random linear functional of
// the op output catches routing errors a plain sum would cancel.
Tensor4 random_probe(Rng& rng, Shape4 shape) {
    Tensor4 t(shape, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double mag = rng.uniform(0.5, 1.5);
        t[i] = rng.uniform01() < 0.5 ? -mag : mag;
    }
    return t;
}

double probe_dot(const Tensor4& probe, const Tensor4& out) {
    if (probe.shape() != out.shape()) {
        throw ShapeError("probe shape mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) s += probe[i] * out[i];
    return s;
}

// Globally distinct entries: a shuffled grid of levels with jitter confined
// to 80% of each slot, so every pairwise gap is at least 0.2 / size and a
// +-step probe cannot flip any argmax.
Tensor4 distinct_tensor(Rng& rng, Shape4 shape) {
    Tensor4 t(shape, 0.0);
    const std::size_t n = t.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = (double(perm[i]) + 0.1 + 0.8 * rng.uniform01()) / double(n);
    }
    return t;
}

ConvParams random_conv(Rng& rng, int oc, int ic, int kh, int kw, int stride, int ph, int pw,
                       int dilation = 1) {
    ConvParams p = make_conv(oc, ic, kh, kw, stride, ph, pw, dilation);
    for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] = rng.uniform(-1.0, 1.0);
    for (double& b : p.bias) b = rng.uniform(-0.5, 0.5);
    return p;
}

// Numeric gradients of a scalar probe with respect to the conv parameters.
struct NumericConvGrads {
    std::vector<double> d_weights;
    std::vector<double> d_bias;
};

NumericConvGrads numeric_conv_grads(const ConvParams& p,
                                    const std::function<double(const ConvParams&)>& f,
                                    double step) {
    NumericConvGrads out;
    ConvParams probe = p;
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        const double orig = probe.weights[i];
        probe.weights[i] = orig + step;
        const double fp = f(probe);
        probe.weights[i] = orig - step;
        const double fm = f(probe);
        probe.weights[i] = orig;
        out.d_weights.push_back((fp - fm) / (2.0 * step));
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
        const double orig = probe.bias[i];
        probe.bias[i] = orig + step;
        const double fp = f(probe);
        probe.bias[i] = orig - step;
        const double fm = f(probe);
        probe.bias[i] = orig;
        out.d_bias.push_back((fp - fm) / (2.0 * step));
    }
    return out;
}

double check_conv2d_case(Rng& rng, double step) {
    const Tensor4 x = random_tensor(rng, {1, 2, 5, 6}, -1.0, 1.0);
    const ConvParams p = random_conv(rng, 3, 2, 3, 3, 1, 1, 1);
    const Tensor4 probe = random_probe(rng, conv2d_output_shape(x.shape(), p));

    const LayerGrads g = conv2d_backward(x, p, probe);
    const Tensor4 num_dx = numeric_gradient(
        [&](const Tensor4& xi) { return probe_dot(probe, conv2d_forward(xi, p)); }, x, step);
    const NumericConvGrads num_p = numeric_conv_grads(
        p, [&](const ConvParams& pi) { return probe_dot(probe, conv2d_forward(x, pi)); },
        step);

    double worst = worst_rel_err(g.d_input.values(), num_dx.values());
    worst = std::max(worst, worst_rel_err(g.d_weights.values(), num_p.d_weights));
    worst = std::max(worst, worst_rel_err(g.d_bias, num_p.d_bias));
    return worst;
}

OffsetField random_offsets(Rng& rng, Shape4 shape) {
    // fractional parts pinned to +-[0.3, 0.45]: a 1e-6 probe stays off the
    // interpolation kinks
    Tensor4 t(shape, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double mag = rng.uniform(0.3, 0.45);
        const double whole = double(int(rng.uniform_index(3))) - 1.0;
        t[i] = whole + (rng.uniform01() < 0.5 ? -mag : mag);
    }
    return OffsetField{std::move(t)};
}

double check_deform_conv2d_case(Rng& rng, double step) {
    const Tensor4 x = random_tensor(rng, {1, 2, 5, 6}, -1.0, 1.0);
    const ConvParams p = random_conv(rng, 2, 2, 3, 3, 1, 1, 1);
    const Shape4 os = conv2d_output_shape(x.shape(), p);
    const OffsetField off = random_offsets(rng, {1, 18, os.h, os.w});
    const Tensor4 probe = random_probe(rng, os);

    const LayerGrads g = deform_conv2d_backward(x, p, off, probe);
    const Tensor4 num_dx = numeric_gradient(
        [&](const Tensor4& xi) { return probe_dot(probe, deform_conv2d_forward(xi, p, off)); },
        x, step);
    const NumericConvGrads num_p = numeric_conv_grads(
        p,
        [&](const ConvParams& pi) { return probe_dot(probe, deform_conv2d_forward(x, pi, off)); },
        step);
    const Tensor4 num_doff = numeric_gradient(
        [&](const Tensor4& oi) {
            return probe_dot(probe, deform_conv2d_forward(x, p, OffsetField{oi}));
        },
        off.offsets, step);

    double worst = worst_rel_err(g.d_input.values(), num_dx.values());
    worst = std::max(worst, worst_rel_err(g.d_weights.values(), num_p.d_weights));
    worst = std::max(worst, worst_rel_err(g.d_bias, num_p.d_bias));
    worst = std::max(worst, worst_rel_err(g.d_offsets.values(), num_doff.values()));
    return worst;
}

double check_filter_bank_case(Rng& rng, double step) {
    const Tensor4 x = random_tensor(rng, {1, 2, 4, 6}, -1.0, 1.0);
    std::vector<ConvParams> banks;
    banks.push_back(random_conv(rng, 2, 2, 1, 3, 1, 0, 1));
    banks.push_back(random_conv(rng, 3, 2, 3, 3, 1, 1, 1));
    Tensor4 out = rect_filter_bank(x, banks);
    const Tensor4 probe = random_probe(rng, out.shape());

    const FilterBankGrads g = rect_filter_bank_backward(x, banks, probe);
    const Tensor4 num_dx = numeric_gradient(
        [&](const Tensor4& xi) { return probe_dot(probe, rect_filter_bank(xi, banks)); }, x,
        step);
    double worst = worst_rel_err(g.d_input.values(), num_dx.values());
    for (std::size_t b = 0; b < banks.size(); ++b) {
        std::vector<ConvParams> probe_banks = banks;
        const NumericConvGrads num_p = numeric_conv_grads(
            banks[b],
            [&](const ConvParams& pi) {
                probe_banks[b] = pi;
                return probe_dot(probe, rect_filter_bank(x, probe_banks));
            },
            step);
        worst = std::max(worst, worst_rel_err(g.d_weights[b].values(), num_p.d_weights));
        worst = std::max(worst, worst_rel_err(g.d_bias[b], num_p.d_bias));
    }
    return worst;
}

double check_strip_pool_case(Rng& rng, double step, bool horizontal) {
    const Tensor4 x = distinct_tensor(rng, {1, 2, 4, 5});
    const Tensor4 out = horizontal ? strip_pool_h(x) : strip_pool_v(x);
    const Tensor4 probe = random_probe(rng, out.shape());

    const Tensor4 dx = horizontal ? strip_pool_h_backward(x, probe)
                                  : strip_pool_v_backward(x, probe);
    const Tensor4 num_dx = numeric_gradient(
        [&](const Tensor4& xi) {
            return probe_dot(probe, horizontal ? strip_pool_h(xi) : strip_pool_v(xi));
        },
        x, step);
    return worst_rel_err(dx.values(), num_dx.values());
}

double check_spm_case(Rng& rng, double step) {
    const Tensor4 x = distinct_tensor(rng, {1, 2, 3, 4});
    const ConvParams fuse = random_conv(rng, 2, 2, 1, 1, 1, 0, 0);
    const Tensor4 probe = random_probe(rng, x.shape());

    const LayerGrads g = spm_backward(x, fuse, probe);
    const Tensor4 num_dx = numeric_gradient(
        [&](const Tensor4& xi) { return probe_dot(probe, spm_forward(xi, fuse)); }, x, step);
    const NumericConvGrads num_p = numeric_conv_grads(
        fuse, [&](const ConvParams& pi) { return probe_dot(probe, spm_forward(x, pi)); },
        step);

    double worst = worst_rel_err(g.d_input.values(), num_dx.values());
    worst = std::max(worst, worst_rel_err(g.d_weights.values(), num_p.d_weights));
    worst = std::max(worst, worst_rel_err(g.d_bias, num_p.d_bias));
    return worst;
}

double check_maxpool2_case(Rng& rng, double step) {
    const Tensor4 x = distinct_tensor(rng, {1, 2, 4, 6});
    const Tensor4 probe = random_probe(rng, {1, 2, 2, 3});

    const Tensor4 dx = maxpool2_backward(x, probe);
    const Tensor4 num_dx = numeric_gradient(
        [&](const Tensor4& xi) { return probe_dot(probe, maxpool2(xi)); }, x, step);
    return worst_rel_err(dx.values(), num_dx.values());
}

double check_upsample_case(Rng& rng, double step) {
    const Tensor4 x = random_tensor(rng, {1, 2, 3, 4}, -1.0, 1.0);
    const Tensor4 probe = random_probe(rng, {1, 2, 6, 8});

    const Tensor4 dx = upsample_nn2_backward(x.shape(), probe);
    const Tensor4 num_dx = numeric_gradient(
        [&](const Tensor4& xi) { return probe_dot(probe, upsample_nn2(xi)); }, x, step);
    return worst_rel_err(dx.values(), num_dx.values());
}

double check_relu_case(Rng& rng, double step) {
    // entries kept away from the hinge at zero
    Tensor4 x({1, 2, 3, 4}, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double mag = rng.uniform(0.1, 1.0);
        x[i] = rng.uniform01() < 0.5 ? -mag : mag;
    }
    const Tensor4 probe = random_probe(rng, x.shape());

    const Tensor4 dx = relu_backward(x, probe);
    const Tensor4 num_dx = numeric_gradient(
        [&](const Tensor4& xi) { return probe_dot(probe, relu(xi)); }, x, step);
    return worst_rel_err(dx.values(), num_dx.values());
}

// Residuals pinned to +-[0.1, 0.4] with one designated 0.6 maximum, so tau is
// 0.12 and no pixel sits near |r| in {0, tau}.
MaskedDepthPair random_depth_pair(Rng& rng, int h, int w) {
    MaskedDepthPair pair;
    pair.gt = Tensor2(h, w, 0.0);
    pair.pred = Tensor2(h, w, 0.0);
    pair.mask = Tensor2(h, w, 0.0);
    const double tau = 0.12;
    for (std::size_t i = 0; i < pair.gt.size(); ++i) {
        pair.gt[i] = rng.uniform(1.0, 3.0);
        double r = rng.uniform(0.1, 0.4);
        if (r > tau - 2e-3 && r < tau + 2e-3) r += 5e-3;
        if (rng.uniform01() < 0.5) r = -r;
        pair.pred[i] = pair.gt[i] + r;
        pair.mask[i] = rng.uniform01() < 0.85 ? 1.0 : 0.0;
    }
    pair.mask[0] = 1.0;
    pair.pred[0] = pair.gt[0] + (rng.uniform01() < 0.5 ? -0.6 : 0.6);
    return pair;
}

double check_berhu_case(Rng& rng, double step) {
    const MaskedDepthPair pair = random_depth_pair(rng, 4, 6);
    const double tau = berhu_tau(pair);
    const BerhuResult res = berhu(pair);
    const Tensor2 num = numeric_gradient(
        [&](const Tensor2& pred) {
            MaskedDepthPair probe{pred, pair.gt, pair.mask};
            return berhu_given_tau(probe, tau).loss;
        },
        pair.pred, step);
    return worst_rel_err(res.d_pred.values(), num.values());
}

double check_weighted_berhu_case(Rng& rng, double step) {
    const MaskedDepthPair pair = random_depth_pair(rng, 4, 8);
    const WeightMatrix weights = spherical_weight_matrix(4, 8);
    const double tau = berhu_tau(pair);
    const BerhuResult res = weighted_berhu(pair, weights);
    const Tensor2 num = numeric_gradient(
        [&](const Tensor2& pred) {
            MaskedDepthPair probe{pred, pair.gt, pair.mask};
            return weighted_berhu_given_tau(probe, weights, tau).loss;
        },
        pair.pred, step);
    return worst_rel_err(res.d_pred.values(), num.values());
}

double check_network_case(Rng& rng, double step) {
    DamoConfig cfg;
    cfg.height = 8;
    cfg.width = 16;
    cfg.stage_widths = {6, 8, 10};
    cfg.spm_stages = 2;
    cfg.seed = rng.next_u64();
    ModelState model = ModelState::build(cfg);

    // Move the offset path off its zero init: at exactly-integer sampling
    // positions the interpolant is kinked and no finite difference agrees
    // with any one-sided convention. Tiny weights plus a +-[0.2, 0.45]
    // channel bias keep every sample a safe distance from the grid.
    for (EncoderStage& st : model.stages) {
        if (!st.has_offset) continue;
        for (std::size_t i = 0; i < st.offset.weights.size(); ++i) {
            st.offset.weights[i] = rng.uniform(-0.001, 0.001);
        }
        for (double& b : st.offset.bias) {
            const double mag = rng.uniform(0.2, 0.45);
            b = rng.uniform01() < 0.5 ? -mag : mag;
        }
    }

    const Tensor4 rgb = random_tensor(rng, {1, 3, 8, 16}, 0.1, 1.0);
    ForwardResult fwd = forward(model, rgb);
    const Tensor4 probe = random_probe(rng, fwd.depth.shape());
    const ParamGrads grads = backward(model, fwd.cache, probe);

    // layer classes: stem, conv blocks, offset path, spm fuse, decoder, head
    const char* class_prefixes[] = {"stem.", "enc0.conv", "enc0.offset", "enc0.spm",
                                    "dec", "head"};
    std::vector<ParamRef> params = model.params();
    double worst = 0.0;
    for (const char* prefix : class_prefixes) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].name.rfind(prefix, 0) == 0) members.push_back(i);
        }
        // five random probe entries per layer class
        for (int probe_i = 0; probe_i < 5; ++probe_i) {
            const std::size_t pi = members[rng.uniform_index(members.size())];
            const std::size_t entry = rng.uniform_index(params[pi].size);
            double* slot = params[pi].data + entry;
            const double orig = *slot;
            *slot = orig + step;
            const double fp = probe_dot(probe, forward(model, rgb).depth);
            *slot = orig - step;
            const double fm = probe_dot(probe, forward(model, rgb).depth);
            *slot = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double analytic = grads.values[pi][entry];
            worst = std::max(worst, worst_rel_err({analytic}, {numeric}));
        }
    }
    return worst;
}

}  // namespace

const std::vector<GradCheckOp>& gradcheck_registry() {
    static const std::vector<GradCheckOp> ops = {
        {"conv2d", 1e-5, check_conv2d_case},
        {"deform_conv2d", 1e-5, check_deform_conv2d_case},
        {"filter_bank", 1e-5, check_filter_bank_case},
        {"strip_pool_h", 1e-5,
         [](Rng& rng, double step) { return check_strip_pool_case(rng, step, true); }},
        {"strip_pool_v", 1e-5,
         [](Rng& rng, double step) { return check_strip_pool_case(rng, step, false); }},
        {"spm", 1e-5, check_spm_case},
        {"maxpool2", 1e-5, check_maxpool2_case},
        {"upsample_nn2", 1e-5, check_upsample_case},
        {"relu", 1e-5, check_relu_case},
        {"berhu", 1e-6, check_berhu_case},
        {"weighted_berhu", 1e-6, check_weighted_berhu_case},
        {"network", 1e-4, check_network_case},
    };
    return ops;
}

GradCheckResult run_gradcheck_op(const GradCheckOp& op, std::uint64_t seed, int cases,
                                 double step) {
    if (cases < 1) {
        throw UsageError("gradcheck needs at least one case");
    }
    Rng rng(seed);
    GradCheckResult res;
    res.op = op.name;
    res.cases = cases;
    res.tolerance = op.tolerance;
    for (int i = 0; i < cases; ++i) {
        res.worst_rel_err = std::max(res.worst_rel_err, op.run_case(rng, step));
    }
    res.passed = res.worst_rel_err < op.tolerance;
    return res;
}

std::vector<GradCheckResult> run_gradcheck(const std::string& op_name, std::uint64_t seed,
                                           int cases, double step) {
    std::vector<GradCheckResult> out;
    for (const GradCheckOp& op : gradcheck_registry()) {
        if (op_name.empty() || op.name == op_name) {
            out.push_back(run_gradcheck_op(op, seed, cases, step));
        }
    }
    if (out.empty()) {
        throw UsageError("unknown gradcheck op '" + op_name + "'");
    }
    return out;
}

}  // namespace damo
