#pragma once

#include "usseg/net.hpp"
#include "usseg/volume.hpp"

#include <functional>

namespace usseg {

enum class SweepMode { forward, backward, both };
enum class Sidedness { upper, two_sided };

struct InferConfig {
    double confidence = 0.9999999;  // per-voxel, c = 1 - false-call rate
    PadMode padding = PadMode::edge;
    SweepMode sweep = SweepMode::both;
    Sidedness sidedness = Sidedness::upper;
    int time_downsample = 10;  // applied by prepare_for_inference, not by sweep
};

// Test hook: receives each frame's model input batch (lane-major, W values
// per lane) just before prediction.
using FrameObserver =
    std::function<void(uint32_t frame, const std::vector<double>& inputs, std::size_t n_lanes)>;

// One sequential pass over frames. The volume must be enveloped, normalized
// to the model's stored scale, and already time-downsampled. Frames are
// processed in scan order; each (time, beam) lane keeps a rolling window of
// the last W clean-believed values (measured where unflagged, the predicted
// Weibull mean where flagged), seeded by scan-axis padding. A voxel is
// flagged when its measured value exceeds the predicted distribution's
// confidence quantile (two-sided mode also flags the lower tail).
ScanVolume sweep_forward(const ProbNet& net, const ScanVolume& vol, const InferConfig& cfg,
                         const FrameObserver* observer = nullptr);

// Forward sweep of the frame-reversed volume, reversed back.
ScanVolume sweep_backward(const ProbNet& net, const ScanVolume& vol, const InferConfig& cfg);

// Dispatches on cfg.sweep; `both` returns the logical AND of the passes.
ScanVolume sweep(const ProbNet& net, const ScanVolume& vol, const InferConfig& cfg);

// Elementwise AND of two masks with identical dims.
ScanVolume combine_masks(const ScanVolume& a, const ScanVolume& b);

struct PipelineResult {
    ScanVolume forward;
    ScanVolume backward;
    ScanVolume combined;
    ScanVolume final;
    int area_filter = 0;
};

// Forward sweep, backward sweep, logical AND, then per-plane area opening
// at the pixel filter implied by min_defect_mm.
PipelineResult run_pipeline(const ProbNet& net, const ScanVolume& vol, const InferConfig& cfg,
                            double min_defect_mm);

// Envelope (if rf), time-downsample, and scale by 1/net.norm_scale.
ScanVolume prepare_for_inference(const ScanVolume& vol, const ProbNet& net,
                                 int time_downsample);

} // namespace usseg
