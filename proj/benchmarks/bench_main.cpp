// Microbenchmarks for the hot paths: envelope extraction, batched forward
// prediction, one sweep frame, and per-plane area opening.
#include <benchmark/benchmark.h>

#include "usseg/infer.hpp"
#include "usseg/morph.hpp"
#include "usseg/net.hpp"
#include "usseg/rng.hpp"
#include "usseg/volume.hpp"

#include <vector>

using namespace usseg;

namespace {

ScanVolume random_volume(uint32_t frames, uint32_t time, uint32_t beams, VolumeKind kind,
                         uint64_t seed) {
    AxisCalib calib;
    calib.front_wall_index = 0;
    ScanVolume vol(frames, time, beams, kind, calib);
    Rng rng(seed);
    for (float& v : vol.data())
        v = static_cast<float>(kind == VolumeKind::mask ? (rng.u01() < 0.2 ? 1.0 : 0.0)
                                                        : rng.uniform(0.0, 1.0));
    return vol;
}

ProbNet bench_net() {
    NetConfig cfg;
    cfg.window = 64;
    cfg.head_kernels = {3, 5};
    cfg.channels = {4, 8};
    cfg.fc_widths = {32, 16};
    return make_net(cfg, 1);
}

} // namespace

static void BM_Envelope(benchmark::State& state) {
    AxisCalib calib;
    calib.front_wall_index = 0;
    ScanVolume rf(16, static_cast<uint32_t>(state.range(0)), 32, VolumeKind::rf, calib);
    Rng rng(2);
    for (float& v : rf.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto _ : state) {
        ScanVolume env = envelope(rf);
        benchmark::DoNotOptimize(env.data().data());
    }
    state.SetItemsProcessed(state.iterations() * rf.size());
}
BENCHMARK(BM_Envelope)->Arg(512)->Arg(600)->Arg(1024);

static void BM_ForwardBatch(benchmark::State& state) {
    const ProbNet net = bench_net();
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    std::vector<double> x(n * 64);
    for (double& v : x) v = rng.uniform(0.0, 1.0);
    std::vector<WeibullParams> out;
    for (auto _ : state) {
        forward(net, x, n, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ForwardBatch)->Arg(256)->Arg(1024)->Arg(4096);

static void BM_SweepFrame(benchmark::State& state) {
    const ProbNet net = bench_net();
    // one frame's worth of lanes: time x beams after downsampling
    ScanVolume vol = random_volume(70, 60, 32, VolumeKind::envelope, 5);
    InferConfig cfg;
    cfg.confidence = 0.99;
    for (auto _ : state) {
        ScanVolume mask = sweep_forward(net, vol, cfg, nullptr);
        benchmark::DoNotOptimize(mask.data().data());
    }
    // per-frame figure: one volume pass covers n_frames frames
    state.SetItemsProcessed(state.iterations() * vol.n_frames());
}
BENCHMARK(BM_SweepFrame)->Unit(benchmark::kMillisecond);

static void BM_AreaOpening(benchmark::State& state) {
    ScanVolume mask = random_volume(128, 8, 128, VolumeKind::mask, 7);
    for (auto _ : state) {
        ScanVolume opened = area_opening(mask, 11, Connectivity::eight);
        benchmark::DoNotOptimize(opened.data().data());
    }
    state.SetItemsProcessed(state.iterations() * mask.size());
}
BENCHMARK(BM_AreaOpening);

BENCHMARK_MAIN();
