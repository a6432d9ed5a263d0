#pragma once

#include <cstdint>
#include <vector>

#include "damo/losses.hpp"
#include "damo/model.hpp"
#include "damo/scene.hpp"

namespace damo {

// Per-parameter Adam moments, slot-aligned with ModelState::params().
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState init(const ModelState& model);
};

enum class Weighting { Spherical, Uniform };

struct TrainConfig {
    double base_lr = 1e-4;
    int epochs = 1;
    int batch_size = 4;
    double poly_power = 0.9;
    std::uint64_t seed = 0;
    Weighting weighting = Weighting::Spherical;
    Reduction reduction = Reduction::WeightedMean;
};

double poly_lr(double base_lr, std::uint64_t iter, std::uint64_t max_iter, double power);

// Standard bias-corrected Adam update, applied in place.
void adam_step(ModelState& model, const ParamGrads& grads, AdamState& state, double lr);

struct TrainSample {
    Tensor4 rgb;  // (1, 3, h, w)
    DepthMap depth;
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;  // rate used at the first step of the epoch
};

struct TrainResult {
    ModelState model;
    std::vector<EpochRecord> history;
};

TrainResult train(ModelState model, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg);

// Mean uniform-weight Berhu of the model over a dataset; the common yardstick
// the ablation table compares variants on.
double evaluate_uniform_berhu(const ModelState& model, const std::vector<TrainSample>& data);

struct AblationRow {
    std::string variant;
    double final_epoch_loss = 0.0;  // mean loss of the variant's own objective, last epoch
    double uniform_berhu = 0.0;     // common yardstick with the final parameters
};

// Trains {base, +spm, +deformable, +spherical} from the same seed and budget.
// The base run disables all three; each variant enables exactly one.
std::vector<AblationRow> run_ablation(const DamoConfig& model_cfg,
                                      const TrainConfig& train_cfg,
                                      const std::vector<TrainSample>& data);

}  // namespace damo
