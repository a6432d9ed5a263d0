#include "damo/model.hpp"

#include <cmath>

#include "damo/rng.hpp"

namespace damo {

void validate_config(const DamoConfig& config) {
    if (config.height < 1 || config.width != 2 * config.height) {
        throw ConfigError("config requires width == 2 * height with height >= 1");
    }
    if (config.stage_widths.empty()) {
        throw ConfigError("config needs at least one stage");
    }
    const int n_stages = int(config.stage_widths.size());
    int div = 1;
    for (int s = 1; s < n_stages; ++s) div *= 2;
    if (config.height % div != 0) {
        throw ConfigError("height must be divisible by 2^(stages-1)");
    }
    for (int w : config.stage_widths) {
        if (w < 1) throw ConfigError("stage widths must be positive");
    }
    if (config.spm_stages < 0 || config.spm_stages > n_stages) {
        throw ConfigError("spm_stages must lie in [0, stage count]");
    }
    if (config.banks.empty()) {
        throw ConfigError("config needs at least one filter bank");
    }
    if (config.stage_widths[0] % int(config.banks.size()) != 0) {
        throw ConfigError("first stage width must split evenly across the banks");
    }
    for (const BankSpec& b : config.banks) {
        if (b.kh < 1 || b.kw < 1 || b.kh % 2 == 0 || b.kw % 2 == 0) {
            throw ConfigError("bank kernels must be odd so padding preserves dims");
        }
    }
}

namespace {

void he_init(ConvParams& p, Rng& rng) {
    const double fan_in = double(p.in_channels()) * p.kh() * p.kw();
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        p.weights[i] = std_dev * rng.normal();
    }
    // biases stay zero
}

}  // namespace

ModelState ModelState::build(const DamoConfig& config) {
    validate_config(config);
    ModelState m;
    m.config_ = config;
    Rng rng(config.seed);

    const int n_stages = int(config.stage_widths.size());
    const int stem_out = config.stage_widths[0];
    const int per_bank = stem_out / int(config.banks.size());
    for (const BankSpec& b : config.banks) {
        ConvParams p = make_conv(per_bank, 3, b.kh, b.kw, 1, (b.kh - 1) / 2, (b.kw - 1) / 2);
        he_init(p, rng);
        m.stem.push_back(std::move(p));
    }

    for (int s = 0; s < n_stages; ++s) {
        const int ic = s == 0 ? stem_out : config.stage_widths[s - 1];
        const int oc = config.stage_widths[s];
        EncoderStage st;
        st.conv1 = make_conv(oc, ic, 3, 3, 1, 1, 1);
        he_init(st.conv1, rng);
        st.has_spm = s < config.spm_stages;
        st.has_spm_pre = st.has_spm && config.spm_stack_all;
        if (st.has_spm_pre) {
            st.spm_pre = make_conv(oc, oc, 1, 1);
            he_init(st.spm_pre, rng);
        }
        st.has_offset = config.use_deformable;
        if (st.has_offset) {
            // zero init: training starts at the plain-convolution identity
            st.offset = make_conv(18, oc, 3, 3, 1, 1, 1);
        }
        st.conv2 = make_conv(oc, oc, 3, 3, 1, 1, 1);
        he_init(st.conv2, rng);
        if (st.has_spm) {
            st.spm_fuse = make_conv(oc, oc, 1, 1);
            he_init(st.spm_fuse, rng);
        }
        m.stages.push_back(std::move(st));
    }

    for (int d = n_stages - 2; d >= 0; --d) {
        const int ic = config.stage_widths[d + 1] + config.stage_widths[d];
        ConvParams p = make_conv(config.stage_widths[d], ic, 3, 3, 1, 1, 1);
        he_init(p, rng);
        m.decoder.push_back(std::move(p));
    }

    m.head = make_conv(1, config.stage_widths[0], 1, 1);
    he_init(m.head, rng);
    return m;
}

namespace {

template <typename Ref, typename Conv>
void push_conv(std::vector<Ref>& out, const std::string& prefix, Conv& p) {
    out.push_back(Ref{prefix + ".w", p.weights.shape(), p.weights.data(), p.weights.size()});
    out.push_back(Ref{prefix + ".b", Shape4{int(p.bias.size()), 1, 1, 1}, p.bias.data(),
                      p.bias.size()});
}

template <typename Ref, typename Model>
std::vector<Ref> collect_params(Model& m) {
    std::vector<Ref> out;
    for (std::size_t b = 0; b < m.stem.size(); ++b) {
        push_conv<Ref>(out, "stem.bank" + std::to_string(b), m.stem[b]);
    }
    for (std::size_t s = 0; s < m.stages.size(); ++s) {
        const std::string p = "enc" + std::to_string(s);
        auto& st = m.stages[s];
        push_conv<Ref>(out, p + ".conv1", st.conv1);
        if (st.has_spm_pre) push_conv<Ref>(out, p + ".spm_pre", st.spm_pre);
        if (st.has_offset) push_conv<Ref>(out, p + ".offset", st.offset);
        push_conv<Ref>(out, p + ".conv2", st.conv2);
        if (st.has_spm) push_conv<Ref>(out, p + ".spm", st.spm_fuse);
    }
    const int n_stages = int(m.stages.size());
    for (std::size_t i = 0; i < m.decoder.size(); ++i) {
        const int d = n_stages - 2 - int(i);
        push_conv<Ref>(out, "dec" + std::to_string(d) + ".conv", m.decoder[i]);
    }
    push_conv<Ref>(out, "head", m.head);
    return out;
}

}  // namespace

std::vector<ParamRef> ModelState::params() {
    return collect_params<ParamRef>(*this);
}

std::vector<ConstParamRef> ModelState::params() const {
    return collect_params<ConstParamRef>(*this);
}

std::size_t ModelState::param_count() const {
    std::size_t total = 0;
    for (const ConstParamRef& r : params()) total += r.size;
    return total;
}

const std::vector<double>& ParamGrads::by_name(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return values[i];
    }
    throw UsageError("no gradient named " + name);
}

ForwardResult forward(const ModelState& state, const Tensor4& rgb) {
    const DamoConfig& cfg = state.config();
    if (rgb.c() != 3 || rgb.h() != cfg.height || rgb.w() != cfg.width) {
        throw ShapeError("model input must be (n, 3, " + std::to_string(cfg.height) +
                         ", " + std::to_string(cfg.width) + "), got " +
                         to_string(rgb.shape()));
    }
    ForwardCache cache;
    cache.model_version = state.version();
    cache.input = rgb;
    cache.stem_pre = rect_filter_bank(rgb, state.stem);
    cache.stem_act = relu(cache.stem_pre);

    const int n_stages = int(state.stages.size());
    Tensor4 cur = cache.stem_act;
    for (int s = 0; s < n_stages; ++s) {
        const EncoderStage& st = state.stages[s];
        StageCache sc;
        sc.input = std::move(cur);
        sc.b1_pre = conv2d_forward(sc.input, st.conv1);
        sc.b1_act = relu(sc.b1_pre);
        const Tensor4* block2_in = &sc.b1_act;
        if (st.has_spm_pre) {
            sc.spm_pre_out = spm_forward(sc.b1_act, st.spm_pre);
            block2_in = &sc.spm_pre_out;
        }
        if (st.has_offset) {
            sc.offsets = offset_conv(*block2_in, st.offset);
            sc.b2_pre = deform_conv2d_forward(*block2_in, st.conv2, sc.offsets);
        } else {
            sc.b2_pre = conv2d_forward(*block2_in, st.conv2);
        }
        sc.b2_act = relu(sc.b2_pre);
        sc.stage_out = st.has_spm ? spm_forward(sc.b2_act, st.spm_fuse) : sc.b2_act;
        cur = s + 1 < n_stages ? maxpool2(sc.stage_out) : sc.stage_out;
        cache.stages.push_back(std::move(sc));
    }

    for (std::size_t i = 0; i < state.decoder.size(); ++i) {
        const int d = n_stages - 2 - int(i);
        DecoderCache dc;
        dc.up_in = std::move(cur);
        Tensor4 up = upsample_nn2(dc.up_in);
        dc.concat = concat_channels(up, cache.stages[d].stage_out);
        dc.conv_pre = conv2d_forward(dc.concat, state.decoder[i]);
        dc.conv_act = relu(dc.conv_pre);
        cur = dc.conv_act;
        cache.decoder.push_back(std::move(dc));
    }

    cache.head_in = std::move(cur);
    ForwardResult res;
    res.depth = conv2d_forward(cache.head_in, state.head);
    res.cache = std::move(cache);
    return res;
}

namespace {

struct GradSink {
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;

    void add_conv(const std::string& prefix, const Tensor4& d_w,
                  const std::vector<double>& d_b) {
        names.push_back(prefix + ".w");
        values.push_back(d_w.values());
        names.push_back(prefix + ".b");
        values.push_back(d_b);
    }
};

Tensor4 slice_channels(const Tensor4& x, int c_begin, int c_end) {
    Tensor4 out({x.n(), c_end - c_begin, x.h(), x.w()}, 0.0);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = c_begin; c < c_end; ++c) {
            for (int i = 0; i < x.h(); ++i) {
                for (int j = 0; j < x.w(); ++j) {
                    out.at(n, c - c_begin, i, j) = x.at(n, c, i, j);
                }
            }
        }
    }
    return out;
}

}  // namespace

ParamGrads backward(const ModelState& state, const ForwardCache& cache,
                    const Tensor4& d_depth) {
    if (cache.model_version != state.version()) {
        throw UsageError("forward cache is stale: parameters changed since it was built");
    }
    const int n_stages = int(state.stages.size());
    if (cache.stages.size() != std::size_t(n_stages) ||
        cache.decoder.size() != state.decoder.size()) {
        throw UsageError("forward cache does not match this model");
    }
    const Shape4 want{cache.input.n(), 1, cache.input.h(), cache.input.w()};
    if (d_depth.shape() != want) {
        throw ShapeError("d_depth must have shape " + to_string(want));
    }

    // Grads are collected per layer then reordered to params() order at the end.
    GradSink head_g, stem_g;
    std::vector<GradSink> stage_g(n_stages), dec_g(state.decoder.size());

    LayerGrads hg = conv2d_backward(cache.head_in, state.head, d_depth);
    head_g.add_conv("head", hg.d_weights, hg.d_bias);
    Tensor4 d_cur = std::move(hg.d_input);

    std::vector<Tensor4> d_stage_out(n_stages);
    for (int s = 0; s < n_stages; ++s) {
        d_stage_out[s] = Tensor4(cache.stages[s].stage_out.shape(), 0.0);
    }

    for (int i = int(state.decoder.size()) - 1; i >= 0; --i) {
        const int d = n_stages - 2 - i;
        const DecoderCache& dc = cache.decoder[i];
        Tensor4 d_pre = relu_backward(dc.conv_pre, d_cur);
        LayerGrads cg = conv2d_backward(dc.concat, state.decoder[i], d_pre);
        dec_g[i].add_conv("dec" + std::to_string(d) + ".conv", cg.d_weights, cg.d_bias);
        const int c_up = dc.up_in.c();
        Tensor4 d_up = slice_channels(cg.d_input, 0, c_up);
        Tensor4 d_skip = slice_channels(cg.d_input, c_up, cg.d_input.c());
        for (std::size_t k = 0; k < d_skip.size(); ++k) d_stage_out[d][k] += d_skip[k];
        d_cur = upsample_nn2_backward(dc.up_in.shape(), d_up);
    }
    // d_cur now reaches the encoder bottleneck output.
    for (std::size_t k = 0; k < d_cur.size(); ++k) d_stage_out[n_stages - 1][k] += d_cur[k];

    Tensor4 d_stem_act;
    for (int s = n_stages - 1; s >= 0; --s) {
        const EncoderStage& st = state.stages[s];
        const StageCache& sc = cache.stages[s];
        const std::string prefix = "enc" + std::to_string(s);

        Tensor4 d_b2_act;
        if (st.has_spm) {
            LayerGrads sg = spm_backward(sc.b2_act, st.spm_fuse, d_stage_out[s]);
            stage_g[s].add_conv(prefix + ".spm", sg.d_weights, sg.d_bias);
            d_b2_act = std::move(sg.d_input);
        } else {
            d_b2_act = std::move(d_stage_out[s]);
        }
        Tensor4 d_b2_pre = relu_backward(sc.b2_pre, d_b2_act);

        const Tensor4& block2_in = st.has_spm_pre ? sc.spm_pre_out : sc.b1_act;
        Tensor4 d_block2_in;
        if (st.has_offset) {
            LayerGrads dg = deform_conv2d_backward(block2_in, st.conv2, sc.offsets, d_b2_pre);
            stage_g[s].add_conv(prefix + ".conv2", dg.d_weights, dg.d_bias);
            d_block2_in = std::move(dg.d_input);
            LayerGrads og = conv2d_backward(block2_in, st.offset, dg.d_offsets);
            stage_g[s].add_conv(prefix + ".offset", og.d_weights, og.d_bias);
            for (std::size_t k = 0; k < d_block2_in.size(); ++k) {
                d_block2_in[k] += og.d_input[k];
            }
        } else {
            LayerGrads dg = conv2d_backward(block2_in, st.conv2, d_b2_pre);
            stage_g[s].add_conv(prefix + ".conv2", dg.d_weights, dg.d_bias);
            d_block2_in = std::move(dg.d_input);
        }

        Tensor4 d_b1_act;
        if (st.has_spm_pre) {
            LayerGrads sg = spm_backward(sc.b1_act, st.spm_pre, d_block2_in);
            stage_g[s].add_conv(prefix + ".spm_pre", sg.d_weights, sg.d_bias);
            d_b1_act = std::move(sg.d_input);
        } else {
            d_b1_act = std::move(d_block2_in);
        }
        Tensor4 d_b1_pre = relu_backward(sc.b1_pre, d_b1_act);
        LayerGrads c1g = conv2d_backward(sc.input, st.conv1, d_b1_pre);
        stage_g[s].add_conv(prefix + ".conv1", c1g.d_weights, c1g.d_bias);

        if (s > 0) {
            Tensor4 d_pooled_src =
                maxpool2_backward(cache.stages[s - 1].stage_out, c1g.d_input);
            for (std::size_t k = 0; k < d_pooled_src.size(); ++k) {
                d_stage_out[s - 1][k] += d_pooled_src[k];
            }
        } else {
            d_stem_act = std::move(c1g.d_input);
        }
    }

    Tensor4 d_stem_pre = relu_backward(cache.stem_pre, d_stem_act);
    FilterBankGrads fbg = rect_filter_bank_backward(cache.input, state.stem, d_stem_pre);
    for (std::size_t b = 0; b < state.stem.size(); ++b) {
        stem_g.add_conv("stem.bank" + std::to_string(b), fbg.d_weights[b], fbg.d_bias[b]);
    }

    // Reorder to the canonical params() order.
    ParamGrads out;
    auto take = [](GradSink& sink, const std::string& name) -> std::vector<double> {
        for (std::size_t i = 0; i < sink.names.size(); ++i) {
            if (sink.names[i] == name) return std::move(sink.values[i]);
        }
        throw UsageError("missing gradient for " + name);
    };
    auto index_after = [](const std::string& name, std::size_t pos) {
        int v = 0;
        while (pos < name.size() && name[pos] >= '0' && name[pos] <= '9') {
            v = v * 10 + (name[pos] - '0');
            ++pos;
        }
        return v;
    };
    for (const ConstParamRef& ref : state.params()) {
        GradSink* sink = nullptr;
        if (ref.name.rfind("stem.", 0) == 0) {
            sink = &stem_g;
        } else if (ref.name.rfind("enc", 0) == 0) {
            sink = &stage_g[std::size_t(index_after(ref.name, 3))];
        } else if (ref.name.rfind("dec", 0) == 0) {
            const int d = index_after(ref.name, 3);
            sink = &dec_g[std::size_t(n_stages - 2 - d)];
        } else {
            sink = &head_g;
        }
        out.names.push_back(ref.name);
        out.values.push_back(take(*sink, ref.name));
    }
    return out;
}

}  // namespace damo
