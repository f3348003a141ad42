#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "usseg/infer.hpp"
#include "usseg/morph.hpp"
#include "usseg/rng.hpp"
#include "usseg/weibull.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace usseg;

namespace {

NetConfig small_config() {
    NetConfig cfg;
    cfg.window = 16;
    cfg.head_kernels = {3};
    cfg.channels = {2};
    cfg.fc_widths = {4};
    return cfg;
}

// Net that predicts (0.5, 1.5) for every input: zeroed weights, output
// biases kept from init. Quantiles are then known in closed form.
ProbNet constant_net() {
    ProbNet net = make_net(small_config(), 1);
    const auto [a_idx, b_idx] = output_bias_indices(net.config);
    const double a_bias = net.params[a_idx];
    const double b_bias = net.params[b_idx];
    std::fill(net.params.begin(), net.params.end(), 0.0);
    net.params[a_idx] = a_bias;
    net.params[b_idx] = b_bias;
    return net;
}

ScanVolume uniform_envelope(uint32_t frames, uint32_t time, uint32_t beams, double lo, double hi,
                            uint64_t seed) {
    AxisCalib calib;
    calib.front_wall_index = 0;
    ScanVolume vol(frames, time, beams, VolumeKind::envelope, calib);
    Rng rng(seed);
    for (float& v : vol.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return vol;
}

InferConfig upper_cfg(double confidence) {
    InferConfig cfg;
    cfg.confidence = confidence;
    cfg.padding = PadMode::edge;
    cfg.sidedness = Sidedness::upper;
    return cfg;
}

} // namespace

TEST_CASE("constant net flags exactly the quantile exceedances") {
    const ProbNet net = constant_net();
    ScanVolume vol = uniform_envelope(40, 3, 4, 0.0, 1.0, 5);
    const double q99 = weibull::quantile({0.5, 1.5}, 0.99);

    const ScanVolume mask = sweep_forward(net, vol, upper_cfg(0.99), nullptr);
    for (uint32_t f = 0; f < vol.n_frames(); ++f)
        for (uint32_t t = 0; t < vol.n_time(); ++t)
            for (uint32_t b = 0; b < vol.n_beams(); ++b)
                CHECK((mask.at(f, t, b) != 0.0f) == (vol.at(f, t, b) > q99));
}

TEST_CASE("a 10x outlier is flagged at every tested confidence") {
    const ProbNet net = constant_net();
    ScanVolume vol = uniform_envelope(60, 4, 4, 0.1, 1.0, 9);
    float lane_max = 0.0f;
    for (uint32_t f = 0; f < 60; ++f) lane_max = std::max(lane_max, vol.at(f, 2, 2));
    vol.at(30, 2, 2) = 10.0f * lane_max;

    for (double c : {0.99, 0.999, 0.9999, 0.99999, 0.999999, 0.9999999}) {
        const ScanVolume mask = sweep_forward(net, vol, upper_cfg(c), nullptr);
        CHECK(mask.at(30, 2, 2) == 1.0f);
    }
}

TEST_CASE("flag sets are monotone in confidence") {
    const ProbNet net = make_net(small_config(), 3);
    ScanVolume vol = uniform_envelope(50, 4, 4, 0.0, 1.5, 11);
    ScanVolume prev = sweep_forward(net, vol, upper_cfg(0.9), nullptr);
    for (double c : {0.99, 0.999, 0.9999}) {
        const ScanVolume cur = sweep_forward(net, vol, upper_cfg(c), nullptr);
        for (std::size_t i = 0; i < cur.size(); ++i)
            if (cur.data()[i] != 0.0f) CHECK(prev.data()[i] != 0.0f);
        prev = cur;
    }
}

TEST_CASE("two-sided mode also flags the lower tail") {
    const ProbNet net = constant_net();
    ScanVolume vol = uniform_envelope(40, 2, 2, 0.3, 0.8, 13);
    vol.at(20, 1, 1) = 1e-5f;  // far below quantile(1-c)

    InferConfig cfg = upper_cfg(0.99);
    const ScanVolume upper_only = sweep_forward(net, vol, cfg, nullptr);
    CHECK(upper_only.at(20, 1, 1) == 0.0f);

    cfg.sidedness = Sidedness::two_sided;
    const ScanVolume two_sided = sweep_forward(net, vol, cfg, nullptr);
    CHECK(two_sided.at(20, 1, 1) == 1.0f);
}

TEST_CASE("backward sweep is the frame-reversed forward sweep") {
    const ProbNet net = make_net(small_config(), 21);
    ScanVolume vol = uniform_envelope(45, 3, 3, 0.0, 1.0, 17);
    const ScanVolume bwd = sweep_backward(net, vol, upper_cfg(0.99));
    const ScanVolume fwd_rev = sweep_forward(net, reverse_frames(vol), upper_cfg(0.99), nullptr);
    const ScanVolume expect = reverse_frames(fwd_rev);
    CHECK(std::equal(bwd.data().begin(), bwd.data().end(), expect.data().begin()));
}

TEST_CASE("causality: truncating the volume reproduces the mask prefix") {
    const ProbNet net = make_net(small_config(), 33);
    ScanVolume vol = uniform_envelope(50, 3, 3, 0.0, 1.2, 23);
    const ScanVolume full = sweep_forward(net, vol, upper_cfg(0.99), nullptr);

    const uint32_t cut = 28;
    AxisCalib calib = vol.calib();
    ScanVolume prefix(cut, vol.n_time(), vol.n_beams(), VolumeKind::envelope, calib);
    std::copy_n(vol.data().begin(), prefix.size(), prefix.data().begin());
    const ScanVolume partial = sweep_forward(net, prefix, upper_cfg(0.99), nullptr);
    for (std::size_t i = 0; i < partial.size(); ++i)
        CHECK(partial.data()[i] == full.data()[i]);
}

TEST_CASE("substituted sentinel never re-enters the model inputs") {
    const ProbNet net = constant_net();
    ScanVolume vol = uniform_envelope(60, 3, 3, 0.1, 0.9, 31);
    const uint32_t f0 = 20, t0 = 1, b0 = 2;
    const double sentinel = 777.25;
    vol.at(f0, t0, b0) = static_cast<float>(sentinel);

    bool flagged_seen = false;
    bool sentinel_leaked = false;
    const uint32_t W = static_cast<uint32_t>(net.config.window);
    FrameObserver obs = [&](uint32_t frame, const std::vector<double>& inputs,
                            std::size_t n_lanes) {
        if (frame <= f0) return;
        const std::size_t lane = static_cast<std::size_t>(t0) * vol.n_beams() + b0;
        for (uint32_t j = 0; j < W; ++j)
            if (inputs[lane * W + j] == sentinel) sentinel_leaked = true;
        (void)n_lanes;
    };
    const ScanVolume mask = sweep_forward(net, vol, upper_cfg(0.999), &obs);
    flagged_seen = mask.at(f0, t0, b0) != 0.0f;
    CHECK(flagged_seen);
    CHECK_FALSE(sentinel_leaked);
}

TEST_CASE("combine is an AND: idempotent, commutative, contractive") {
    AxisCalib calib;
    calib.front_wall_index = 0;
    ScanVolume a(6, 2, 2, VolumeKind::mask, calib);
    ScanVolume b(6, 2, 2, VolumeKind::mask, calib);
    Rng rng(3);
    for (float& v : a.data()) v = rng.u01() < 0.4 ? 1.0f : 0.0f;
    for (float& v : b.data()) v = rng.u01() < 0.4 ? 1.0f : 0.0f;

    const ScanVolume ab = combine_masks(a, b);
    const ScanVolume ba = combine_masks(b, a);
    const ScanVolume aa = combine_masks(a, a);
    ScanVolume zeros(6, 2, 2, VolumeKind::mask, calib);
    const ScanVolume az = combine_masks(a, zeros);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(ab.data()[i] == ba.data()[i]);
        CHECK(aa.data()[i] == a.data()[i]);
        CHECK(az.data()[i] == 0.0f);
        CHECK(ab.data()[i] <= a.data()[i]);
        CHECK(ab.data()[i] <= b.data()[i]);
    }

    ScanVolume wrong(5, 2, 2, VolumeKind::mask, calib);
    CHECK_THROWS_AS(combine_masks(a, wrong), std::invalid_argument);
}

TEST_CASE("pipeline stages shrink: final within combined within forward") {
    const ProbNet net = make_net(small_config(), 41);
    ScanVolume vol = uniform_envelope(64, 4, 16, 0.0, 1.3, 47);
    vol.calib().scan_step_mm = 0.8;
    vol.calib().beam_pitch_mm = 0.8;
    const PipelineResult stages = run_pipeline(net, vol, upper_cfg(0.99), 3.0);
    CHECK(stages.area_filter == 11);
    for (std::size_t i = 0; i < vol.size(); ++i) {
        CHECK(stages.final.data()[i] <= stages.combined.data()[i]);
        CHECK(stages.combined.data()[i] <= stages.forward.data()[i]);
        CHECK(stages.combined.data()[i] <= stages.backward.data()[i]);
    }
}

TEST_CASE("sweep rejects invalid inputs") {
    const ProbNet net = constant_net();
    ScanVolume vol = uniform_envelope(30, 2, 2, 0.0, 1.0, 51);
    CHECK_THROWS_AS(sweep_forward(net, vol, upper_cfg(0.0), nullptr), std::invalid_argument);
    CHECK_THROWS_AS(sweep_forward(net, vol, upper_cfg(1.0), nullptr), std::invalid_argument);

    AxisCalib calib;
    calib.front_wall_index = 0;
    ScanVolume rf(30, 2, 2, VolumeKind::rf, calib);
    CHECK_THROWS_AS(sweep_forward(net, rf, upper_cfg(0.99), nullptr), std::invalid_argument);
}

TEST_CASE("prepare_for_inference envelopes, downsamples, normalizes") {
    AxisCalib calib;
    calib.front_wall_index = 10;
    ScanVolume rf(20, 100, 3, VolumeKind::rf, calib);
    Rng rng(61);
    for (float& v : rf.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    ProbNet net = constant_net();
    net.norm_scale = 2.0;

    const ScanVolume prepared = prepare_for_inference(rf, net, 10);
    CHECK(prepared.kind() == VolumeKind::envelope);
    CHECK(prepared.n_time() == 10);
    CHECK(prepared.calib().front_wall_index == 1);

    const ScanVolume env = downsample_time(envelope(rf), 10);
    for (std::size_t i = 0; i < prepared.size(); ++i)
        CHECK(prepared.data()[i] == doctest::Approx(env.data()[i] * 0.5f).epsilon(1e-6));

    ProbNet bad = net;
    bad.norm_scale = 0.0;
    CHECK_THROWS_AS(prepare_for_inference(rf, bad, 10), std::invalid_argument);
}
