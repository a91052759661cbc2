#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "melrvq/dsp.hpp"
#include "melrvq/rvq_train.hpp"
#include "melrvq/ssl.hpp"

namespace melrvq::cli {

// Operator mistakes (bad flags, unknown config keys, malformed values) map
// to exit code 1, unlike data errors which map to 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// One declarative document driving every pipeline stage. Every field has a
// default; a config file supplies overrides, and command-line flags override
// the file. Unknown keys are rejected.
struct PipelineConfig {
    uint64_t seed = 42;
    DspConfig dsp;
    RvqDims rvq;                 // input_dim is always taken from dsp.mel_bins
    TrainConfig rvq_train;
    MaskConfig mask;
    SslModelConfig model;        // input/head/codebook dims follow dsp + rvq
    SslTrainConfig ssl_train;
    int iterate_latent_layer = -1;  // -1 = model.layers - 1
    int iterate_code_dim = 16;

    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig from_file(const std::string& path);

    nlohmann::json to_json() const;  // the effective, fully-expanded config
    std::string hash_hex() const;

    // Seeds for each stage, split from the root seed by the documented
    // scheme (see derive_seed).
    uint64_t stage_seed(const char* stage) const;

    // Derived views with all cross-field dims resolved.
    TrainConfig rvq_train_resolved() const;
    SslModelConfig model_resolved() const;
    SslTrainConfig ssl_train_resolved() const;
    MaskConfig mask_resolved() const;
    RvqDims rvq_dims_resolved() const;
};

}  // namespace melrvq::cli
