#include "usseg/infer.hpp"

#include "usseg/morph.hpp"
#include "usseg/parallel.hpp"

#include <stdexcept>
#include <vector>

namespace usseg {

ScanVolume sweep_forward(const ProbNet& net, const ScanVolume& vol, const InferConfig& cfg,
                         const FrameObserver* observer) {
    if (vol.kind() != VolumeKind::envelope)
        throw std::invalid_argument("sweep: volume must be enveloped");
    if (!(cfg.confidence > 0.0) || !(cfg.confidence < 1.0))
        throw std::invalid_argument("sweep: confidence must be in (0, 1)");
    const uint32_t W = static_cast<uint32_t>(net.config.window);
    const uint32_t n_lanes = vol.n_time() * vol.n_beams();

    // Seed every lane's rolling window from the scan-axis padding.
    const ScanVolume padded = pad_scan_axis(vol, W, cfg.padding);
    // inputs[lane*W + j]: oldest-to-newest clean-believed values per lane,
    // lane index = t * n_beams + b (matching frame memory order).
    std::vector<double> inputs(static_cast<std::size_t>(n_lanes) * W);
    for (uint32_t j = 0; j < W; ++j) {
        const float* frame = padded.data().data() + static_cast<std::size_t>(j) * n_lanes;
        for (uint32_t lane = 0; lane < n_lanes; ++lane)
            inputs[static_cast<std::size_t>(lane) * W + j] = frame[lane];
    }

    ScanVolume mask(vol.n_frames(), vol.n_time(), vol.n_beams(), VolumeKind::mask, vol.calib());
    std::vector<WeibullParams> params;
    for (uint32_t f = 0; f < vol.n_frames(); ++f) {
        if (observer) (*observer)(f, inputs, n_lanes);
        forward(net, inputs, n_lanes, params);

        const float* measured_frame = vol.data().data() + static_cast<std::size_t>(f) * n_lanes;
        float* mask_frame = mask.data().data() + static_cast<std::size_t>(f) * n_lanes;
        parallel_for(n_lanes, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t lane = lo; lane < hi; ++lane) {
                const double measured = measured_frame[lane];
                const WeibullParams& p = params[lane];
                bool flagged = measured > weibull::quantile(p, cfg.confidence);
                if (cfg.sidedness == Sidedness::two_sided && !flagged)
                    flagged = measured < weibull::quantile(p, 1.0 - cfg.confidence);
                mask_frame[lane] = flagged ? 1.0f : 0.0f;

                // Slide the window: flagged voxels enter as the predicted
                // clean mean so they cannot contaminate later predictions.
                double* window = inputs.data() + lane * W;
                for (uint32_t j = 0; j + 1 < W; ++j) window[j] = window[j + 1];
                window[W - 1] = flagged ? weibull::mean(p) : measured;
            }
        });
    }
    return mask;
}

ScanVolume sweep_backward(const ProbNet& net, const ScanVolume& vol, const InferConfig& cfg) {
    return reverse_frames(sweep_forward(net, reverse_frames(vol), cfg, nullptr));
}

ScanVolume sweep(const ProbNet& net, const ScanVolume& vol, const InferConfig& cfg) {
    switch (cfg.sweep) {
    case SweepMode::forward: return sweep_forward(net, vol, cfg, nullptr);
    case SweepMode::backward: return sweep_backward(net, vol, cfg);
    case SweepMode::both:
        return combine_masks(sweep_forward(net, vol, cfg, nullptr), sweep_backward(net, vol, cfg));
    }
    throw std::logic_error("sweep: invalid mode");
}

ScanVolume combine_masks(const ScanVolume& a, const ScanVolume& b) {
    if (a.kind() != VolumeKind::mask || b.kind() != VolumeKind::mask)
        throw std::invalid_argument("combine_masks: inputs must be masks");
    if (a.n_frames() != b.n_frames() || a.n_time() != b.n_time() || a.n_beams() != b.n_beams())
        throw std::invalid_argument("combine_masks: dimension mismatch");
    ScanVolume out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = (a.data()[i] != 0.0f && b.data()[i] != 0.0f) ? 1.0f : 0.0f;
    return out;
}

PipelineResult run_pipeline(const ProbNet& net, const ScanVolume& vol, const InferConfig& cfg,
                            double min_defect_mm) {
    ScanVolume fwd = sweep_forward(net, vol, cfg, nullptr);
    ScanVolume bwd = sweep_backward(net, vol, cfg);
    ScanVolume combined = combine_masks(fwd, bwd);
    const int filter = filter_from_min_size(min_defect_mm, vol.calib());
    ScanVolume final_mask =
        filter > 1 ? area_opening(combined, filter, Connectivity::eight) : combined;
    return PipelineResult{std::move(fwd), std::move(bwd), std::move(combined),
                          std::move(final_mask), filter};
}

ScanVolume prepare_for_inference(const ScanVolume& vol, const ProbNet& net,
                                 int time_downsample) {
    if (time_downsample < 1)
        throw std::invalid_argument("prepare_for_inference: time_downsample must be >= 1");
    if (!(net.norm_scale > 0.0))
        throw std::invalid_argument("prepare_for_inference: model norm_scale must be > 0");
    ScanVolume env = vol.kind() == VolumeKind::rf ? envelope(vol) : vol;
    if (env.kind() != VolumeKind::envelope)
        throw std::invalid_argument("prepare_for_inference: need an rf or envelope volume");
    ScanVolume ds = downsample_time(env, static_cast<uint32_t>(time_downsample));
    const float inv = static_cast<float>(1.0 / net.norm_scale);
    for (float& v : ds.data()) v *= inv;
    return ds;
}

} // namespace usseg
