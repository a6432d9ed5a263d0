#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "damo/nn_ops.hpp"

namespace damo {

struct BankSpec {
    int kh = 3;
    int kw = 3;

    bool operator==(const BankSpec&) const = default;
};

struct DamoConfig {
    int height = 32;
    int width = 64;  // equirectangular aspect: width == 2 * height
    std::vector<int> stage_widths = {16, 32, 64, 128};
    int spm_stages = 3;
    bool spm_stack_all = false;
    bool use_deformable = true;
    std::vector<BankSpec> banks = {{3, 9}, {3, 3}};
    std::uint64_t seed = 0;

    bool operator==(const DamoConfig&) const = default;
};

void validate_config(const DamoConfig& config);

struct ParamRef {
    std::string name;
    Shape4 dims;
    double* data;
    std::size_t size;
};

struct ConstParamRef {
    std::string name;
    Shape4 dims;
    const double* data;
    std::size_t size;
};

// Gradient buffers aligned index-for-index with ModelState::params().
struct ParamGrads {
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;

    const std::vector<double>& by_name(const std::string& name) const;
};

struct EncoderStage {
    ConvParams conv1;
    ConvParams spm_pre;  // stack-all placement after block 1
    ConvParams offset;
    ConvParams conv2;    // sampled deformably when offsets are in play
    ConvParams spm_fuse; // standard last-block placement
    bool has_offset = false;
    bool has_spm = false;
    bool has_spm_pre = false;
};

// Named, ordered parameter store plus the layer structure itself. The order
// params() reports is the checkpoint order and the Adam slot order.
class ModelState {
public:
    static ModelState build(const DamoConfig& config);

    const DamoConfig& config() const { return config_; }
    std::uint64_t version() const { return version_; }
    void bump_version() { ++version_; }

    std::vector<ParamRef> params();
    std::vector<ConstParamRef> params() const;
    std::size_t param_count() const;

    std::vector<ConvParams> stem;
    std::vector<EncoderStage> stages;
    std::vector<ConvParams> decoder;  // deepest resolution first
    ConvParams head;

private:
    DamoConfig config_;
    std::uint64_t version_ = 1;
};

struct StageCache {
    Tensor4 input;
    Tensor4 b1_pre, b1_act;
    Tensor4 spm_pre_out;
    OffsetField offsets;
    Tensor4 b2_pre, b2_act;
    Tensor4 stage_out;  // skip source, before pooling
};

struct DecoderCache {
    Tensor4 up_in;
    Tensor4 concat;
    Tensor4 conv_pre, conv_act;
};

struct ForwardCache {
    std::uint64_t model_version = 0;
    Tensor4 input;
    Tensor4 stem_pre, stem_act;
    std::vector<StageCache> stages;
    std::vector<DecoderCache> decoder;
    Tensor4 head_in;
};

struct ForwardResult {
    Tensor4 depth;  // (n, 1, height, width), linear output, no activation
    ForwardCache cache;
};

ForwardResult forward(const ModelState& state, const Tensor4& rgb);

// Exact adjoint of forward over the cached activations. The cache must come
// from a forward on the same parameter version.
ParamGrads backward(const ModelState& state, const ForwardCache& cache,
                    const Tensor4& d_depth);

}  // namespace damo
