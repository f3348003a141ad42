#pragma once

#include "usseg/infer.hpp"
#include "usseg/net.hpp"
#include "usseg/synth.hpp"
#include "usseg/trainer.hpp"

#include <string>
#include <vector>

namespace usseg {

struct TrainSection {
    SamplerConfig sampler;
    TrainConfig train;
    NetConfig net;
};

struct InferSection {
    InferConfig infer;
    double min_defect_mm = 3.0;
};

struct EvalSection {
    uint32_t gate_lo = 0;
    uint32_t gate_hi = 0;  // 0 = end of the (downsampled) time axis
    std::vector<double> confidences = {0.99,   0.999,   0.9999,
                                       0.99999, 0.999999, 0.9999999};
};

struct PipelineSection {
    int train_volumes = 4;
    std::string sample_name = "sample";
};

// Top-level run configuration; sections mirror the module config types.
// Unknown keys anywhere raise ConfigError naming the key path.
struct RunConfig {
    uint64_t seed = 0;
    SynthConfig synth;
    TrainSection train;
    InferSection infer;
    EvalSection eval;
    PipelineSection pipeline;
    bool has_synth = false;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text, const std::string& origin);

} // namespace usseg
