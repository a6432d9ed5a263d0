#include "damo/trainer.hpp"

#include <cmath>

#include "damo/rng.hpp"

namespace damo {

AdamState AdamState::init(const ModelState& model) {
    AdamState s;
    for (const ConstParamRef& p : model.params()) {
        s.m.emplace_back(p.size, 0.0);
        s.v.emplace_back(p.size, 0.0);
    }
    return s;
}

double poly_lr(double base_lr, std::uint64_t iter, std::uint64_t max_iter, double power) {
    if (iter > max_iter) {
        throw UsageError("poly_lr iteration exceeds max_iter");
    }
    if (max_iter == 0) return base_lr;
    return base_lr * std::pow(1.0 - double(iter) / double(max_iter), power);
}

void adam_step(ModelState& model, const ParamGrads& grads, AdamState& state, double lr) {
    std::vector<ParamRef> params = model.params();
    if (grads.values.size() != params.size() || state.m.size() != params.size()) {
        throw ShapeError("adam_step gradient/moment slots do not match the model");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads.values[i].size() != params[i].size || grads.names[i] != params[i].name) {
            throw ShapeError("adam_step gradient " + grads.names[i] +
                             " does not align with parameter " + params[i].name);
        }
        double* w = params[i].data;
        const std::vector<double>& g = grads.values[i];
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (std::size_t k = 0; k < g.size(); ++k) {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            w[k] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
    model.bump_version();
}

namespace {

Tensor4 stack_rgb(const std::vector<TrainSample>& data, const std::vector<std::size_t>& idx,
                  std::size_t begin, std::size_t end) {
    const Tensor4& first = data[idx[begin]].rgb;
    Tensor4 out({int(end - begin), 3, first.h(), first.w()}, 0.0);
    for (std::size_t b = begin; b < end; ++b) {
        const Tensor4& src = data[idx[b]].rgb;
        if (src.shape() != first.shape()) {
            throw ShapeError("training samples disagree on image dims");
        }
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < src.h(); ++i) {
                for (int j = 0; j < src.w(); ++j) {
                    out.at(int(b - begin), c, i, j) = src.at(0, c, i, j);
                }
            }
        }
    }
    return out;
}

}  // namespace

TrainResult train(ModelState model, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg) {
    if (data.empty()) {
        throw DegenerateInputError("train needs at least one sample");
    }
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.base_lr >= 0.0)) {
        throw ConfigError("train config needs epochs >= 1, batch_size >= 1, lr >= 0");
    }
    const DamoConfig& mc = model.config();
    for (const TrainSample& s : data) {
        if (s.rgb.h() != mc.height || s.rgb.w() != mc.width || s.rgb.n() != 1) {
            throw ShapeError("sample dims do not match the model config");
        }
    }

    const WeightMatrix weights =
        cfg.weighting == Weighting::Spherical
            ? spherical_weight_matrix(mc.height, mc.width)
            : WeightMatrix{Tensor2(mc.height, mc.width, 1.0)};

    AdamState adam = AdamState::init(model);
    Rng shuffle_rng(cfg.seed);

    const std::size_t n = data.size();
    const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::uint64_t max_iter = std::uint64_t(cfg.epochs) * batches_per_epoch;
    std::uint64_t iter = 0;

    TrainResult result{std::move(model), {}};
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with our own draws so the permutation is seed-stable.
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = shuffle_rng.uniform_index(i);
            std::swap(order[i - 1], order[j]);
        }
        double loss_sum = 0.0;
        double epoch_lr = 0.0;
        std::size_t batch_count = 0;
        for (std::size_t b = 0; b < n; b += cfg.batch_size) {
            const std::size_t end = std::min(n, b + cfg.batch_size);
            Tensor4 rgb = stack_rgb(data, order, b, end);
            std::vector<Tensor2> gts, masks;
            for (std::size_t s = b; s < end; ++s) {
                gts.push_back(data[order[s]].depth.depth);
                masks.push_back(data[order[s]].depth.mask);
            }

            ForwardResult fwd = forward(result.model, rgb);
            BatchBerhuResult loss =
                weighted_berhu_batch(fwd.depth, gts, masks, weights, cfg.reduction);
            if (!std::isfinite(loss.loss)) {
                throw DomainError("training loss became non-finite");
            }
            ParamGrads grads = backward(result.model, fwd.cache, loss.d_pred);

            const double lr = poly_lr(cfg.base_lr, iter, max_iter, cfg.poly_power);
            if (batch_count == 0) epoch_lr = lr;
            adam_step(result.model, grads, adam, lr);

            loss_sum += loss.loss;
            ++iter;
            ++batch_count;
        }
        result.history.push_back(
            {epoch, loss_sum / double(batch_count), epoch_lr});
    }
    return result;
}

std::vector<AblationRow> run_ablation(const DamoConfig& model_cfg,
                                      const TrainConfig& train_cfg,
                                      const std::vector<TrainSample>& data) {
    struct Variant {
        const char* name;
        bool spm;
        bool deformable;
        Weighting weighting;
    };
    const Variant variants[] = {
        {"base", false, false, Weighting::Uniform},
        {"+spm", true, false, Weighting::Uniform},
        {"+deformable", false, true, Weighting::Uniform},
        {"+spherical", false, false, Weighting::Spherical},
    };

    std::vector<AblationRow> rows;
    for (const Variant& v : variants) {
        DamoConfig mc = model_cfg;
        mc.spm_stages = v.spm ? std::min(3, int(mc.stage_widths.size())) : 0;
        mc.use_deformable = v.deformable;
        TrainConfig tc = train_cfg;
        tc.weighting = v.weighting;

        TrainResult result = train(ModelState::build(mc), data, tc);
        AblationRow row;
        row.variant = v.name;
        row.final_epoch_loss = result.history.back().mean_loss;
        row.uniform_berhu = evaluate_uniform_berhu(result.model, data);
        rows.push_back(std::move(row));
    }
    return rows;
}

double evaluate_uniform_berhu(const ModelState& model, const std::vector<TrainSample>& data) {
    if (data.empty()) {
        throw DegenerateInputError("evaluation needs at least one sample");
    }
    const DamoConfig& mc = model.config();
    const WeightMatrix uniform{Tensor2(mc.height, mc.width, 1.0)};
    double sum = 0.0;
    for (const TrainSample& s : data) {
        ForwardResult fwd = forward(model, s.rgb);
        std::vector<Tensor2> gts{s.depth.depth};
        std::vector<Tensor2> masks{s.depth.mask};
        sum += weighted_berhu_batch(fwd.depth, gts, masks, uniform).loss;
    }
    return sum / double(data.size());
}

}  // namespace damo
