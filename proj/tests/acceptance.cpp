// Acceptance suite: runs every release criterion end to end and prints one
// pass/fail line per criterion. Exits nonzero if any criterion fails.
//
// The synthetic scenario (criteria 5-9) is built once: four clean training
// volumes plus validation, a pretext-trained forecaster, a large clean
// volume for false-call calibration, and two stepped defect samples with
// twelve defects each (3-9 mm, circles and squares).

#include "oracles.hpp"
#include "detection_reference.hpp"
#include "usseg/error.hpp"
#include "usseg/eval.hpp"
#include "usseg/infer.hpp"
#include "usseg/morph.hpp"
#include "usseg/net.hpp"
#include "usseg/rng.hpp"
#include "usseg/synth.hpp"
#include "usseg/trainer.hpp"
#include "usseg/volume.hpp"
#include "usseg/weibull.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

using namespace usseg;
using Clock = std::chrono::steady_clock;

namespace {

double secs(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

struct Check {
    bool ok = true;
    int asserts = 0;
    std::string first_error;
    std::string note;

    void require(bool cond, const std::string& msg) {
        ++asserts;
        if (!cond && ok) {
            ok = false;
            first_error = msg;
        }
    }
    void annotate(const std::string& text) { note = text; }
};

int g_failures = 0;

void criterion(int id, const std::string& name, const std::function<void(Check&)>& fn) {
    Check check;
    try {
        fn(check);
    } catch (const std::exception& e) {
        check.require(false, std::string("exception: ") + e.what());
    }
    if (check.ok) {
        std::printf("[PASS] criterion %2d: %s (%d checks%s%s)\n", id, name.c_str(), check.asserts,
                    check.note.empty() ? "" : "; ", check.note.c_str());
    } else {
        ++g_failures;
        std::printf("[FAIL] criterion %2d: %s — %s\n", id, name.c_str(),
                    check.first_error.c_str());
    }
    std::fflush(stdout);
}

// --- shared synthetic scenario ---------------------------------------------

SynthConfig scenario_base(int frames, int beams, double thickness, uint64_t seed) {
    SynthConfig cfg;
    cfg.frames = frames;
    cfg.time = 600;
    cfg.beams = beams;
    cfg.calib = AxisCalib{0.8, 0.8, 1e8, 3.0, 50};
    cfg.steps = {StepSpec{0, frames, thickness}};
    cfg.front_wall_amplitude = 1.0;
    cfg.back_wall_amplitude = 0.9;
    cfg.attenuation_db_per_mm = 0.3;
    cfg.speckle_amplitude = 0.04;
    cfg.beam_gain_std = 0.05;
    cfg.footprint_spread_mm = 0.8;
    cfg.seed = seed;
    return cfg;
}

std::vector<DefectRecord> defect_layout_a() {
    std::vector<DefectRecord> v;
    auto add = [&](int id, DefectShape s, double w, int f, int b, double d) {
        DefectRecord r;
        r.id = id;
        r.shape = s;
        r.width_mm = w;
        r.center_frame = f;
        r.center_beam = b;
        r.depth_mm = d;
        r.reflectivity = 0.85;
        r.shadowing = 0.5;
        v.push_back(r);
    };
    add(1, DefectShape::circle, 3.0, 25, 8, 2.4);
    add(2, DefectShape::square, 6.0, 25, 21, 2.6);
    add(3, DefectShape::circle, 9.0, 60, 14, 3.4);
    add(4, DefectShape::square, 4.5, 95, 7, 2.5);
    add(5, DefectShape::circle, 6.0, 95, 22, 3.0);
    add(6, DefectShape::square, 9.0, 135, 14, 2.8);
    add(7, DefectShape::circle, 4.5, 175, 8, 2.4);
    add(8, DefectShape::square, 3.0, 175, 21, 3.2);
    add(9, DefectShape::circle, 7.5, 215, 14, 2.4);
    add(10, DefectShape::square, 7.5, 255, 8, 2.8);
    add(11, DefectShape::circle, 6.0, 255, 22, 3.6);
    add(12, DefectShape::square, 6.0, 295, 14, 3.5);
    return v;
}

std::vector<DefectRecord> defect_layout_b() {
    // same widths, reshuffled geometry for the held-out sample
    std::vector<DefectRecord> v = defect_layout_a();
    int i = 0;
    for (DefectRecord& d : v) {
        d.center_frame = 25 + (i * 53) % 290;
        d.center_beam = 8 + (i * 7) % 17;
        d.depth_mm = 2.4 + 0.1 * (i % 12);
        ++i;
    }
    std::sort(v.begin(), v.end(),
              [](const DefectRecord& a, const DefectRecord& b) {
                  return a.center_frame < b.center_frame;
              });
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k].center_frame - v[k - 1].center_frame < 25)
            v[k].center_frame = v[k - 1].center_frame + 25;
    return v;
}

// Evaluation gate on the downsampled time axis: after the front-wall
// ring-down, before the first back wall and any defect repeat echoes.
constexpr uint32_t kGateLo = 12;
constexpr uint32_t kGateHi = 32;
constexpr double kConfidences[] = {0.99, 0.999, 0.9999, 0.99999, 0.999999, 0.9999999};

struct Scenario {
    ProbNet model;
    TrainResult train_result;

    ScanVolume clean_mask_099;   // forward sweep of the big clean volume
    ScanVolume clean_final_top;  // full pipeline of the same volume at 0.9999999
    std::size_t clean_voxels = 0;

    TruthSet truth_a;
    ScanVolume prep_a;  // defect sample A, inference-ready
    std::map<double, PipelineResult> pipelines_a;
    std::map<double, EvalReport> reports_a;

    TruthSet truth_b;
    EvalReport report_b;  // held-out sample at the top confidence

    double t_synth = 0, t_train = 0, t_infer = 0, t_eval = 0;

    Scenario()
        : clean_mask_099(1, 1, 1, VolumeKind::mask, AxisCalib{0.8, 0.8, 1e8, 3.0, 0}),
          clean_final_top(1, 1, 1, VolumeKind::mask, AxisCalib{0.8, 0.8, 1e8, 3.0, 0}),
          truth_a{{}, ScanVolume(1, 1, 1, VolumeKind::mask, AxisCalib{0.8, 0.8, 1e8, 3.0, 0})},
          prep_a(1, 1, 1, VolumeKind::envelope, AxisCalib{0.8, 0.8, 1e8, 3.0, 0}),
          truth_b{{}, ScanVolume(1, 1, 1, VolumeKind::mask, AxisCalib{0.8, 0.8, 1e8, 3.0, 0})} {}
};

Scenario build_scenario() {
    Scenario sc;
    const auto t0 = Clock::now();

    // synth: clean corpus + defect sample A
    std::vector<ScanVolume> train_envs;
    for (int i = 0; i < 4; ++i) {
        auto [vol, truth] = generate(scenario_base(260, 28, 4.5 + 0.5 * i, 100 + i));
        train_envs.push_back(envelope(vol));
    }
    auto [val_rf, val_truth] = generate(scenario_base(260, 28, 5.2, 200));
    const ScanVolume val_env = envelope(val_rf);

    SynthConfig cfg_a = scenario_base(340, 32, 5.5, 400);
    cfg_a.steps = {StepSpec{0, 170, 5.5}, StepSpec{170, 340, 7.0}};
    cfg_a.defects = defect_layout_a();
    auto [rf_a, truth_a] = generate(cfg_a);
    sc.truth_a = std::move(truth_a);
    const auto t1 = Clock::now();
    sc.t_synth = secs(t0, t1);

    // train
    std::vector<const ScanVolume*> train_ptrs;
    for (const ScanVolume& v : train_envs) train_ptrs.push_back(&v);
    NetConfig net_cfg;
    net_cfg.window = 64;
    net_cfg.head_kernels = {3, 5};
    net_cfg.channels = {4, 8};
    net_cfg.fc_widths = {32, 16};
    SamplerConfig sampler;
    sampler.window = 64;
    sampler.stride = 64;
    sampler.time_downsample = 5;
    TrainConfig tc;
    tc.batch_size = 4096;
    tc.learning_rate = 2e-3;
    tc.patience = 3;
    tc.max_epochs = 14;
    tc.seed = 7;
    sc.train_result = train(make_net(net_cfg, 7), train_ptrs, val_env, sampler, tc);
    sc.model = sc.train_result.model;
    const auto t2 = Clock::now();
    sc.t_train = secs(t1, t2);

    // inference on sample A across the confidence set (top confidence timed)
    sc.prep_a = prepare_for_inference(rf_a, sc.model, 10);
    for (double c : kConfidences) {
        InferConfig icfg;
        icfg.confidence = c;
        const auto ta = Clock::now();
        PipelineResult stages = run_pipeline(sc.model, sc.prep_a, icfg, 3.0);
        const auto tb = Clock::now();
        if (c == 0.9999999) sc.t_infer = secs(ta, tb);

        EvalConfig ecfg;
        ecfg.gate_lo = kGateLo;
        ecfg.gate_hi = kGateHi;
        ecfg.sample_name = "A";
        ecfg.confidence = c;
        std::map<std::string, const ScanVolume*> sm{{"forward", &stages.forward},
                                                    {"backward", &stages.backward},
                                                    {"combined", &stages.combined},
                                                    {"final", &stages.final}};
        const auto tc0 = Clock::now();
        sc.reports_a.emplace(c, evaluate(sm, "final", sc.prep_a, sc.truth_a.records, ecfg));
        const auto tc1 = Clock::now();
        if (c == 0.9999999) sc.t_eval = secs(tc0, tc1);
        sc.pipelines_a.emplace(c, std::move(stages));
    }

    // clean false-call volume (criterion 5)
    auto [clean_rf, clean_truth] = generate(scenario_base(360, 32, 5.8, 300));
    const ScanVolume clean_prep = prepare_for_inference(clean_rf, sc.model, 10);
    InferConfig clean_cfg;
    clean_cfg.confidence = 0.99;
    sc.clean_mask_099 = sweep_forward(sc.model, clean_prep, clean_cfg, nullptr);
    sc.clean_voxels = sc.clean_mask_099.size();
    InferConfig clean_top;
    clean_top.confidence = 0.9999999;
    sc.clean_final_top = run_pipeline(sc.model, clean_prep, clean_top, 3.0).final;

    // held-out defect sample B at the top confidence (criterion 9)
    SynthConfig cfg_b = scenario_base(340, 32, 5.5, 500);
    cfg_b.steps = {StepSpec{0, 170, 5.5}, StepSpec{170, 340, 7.0}};
    cfg_b.defects = defect_layout_b();
    auto [rf_b, truth_b] = generate(cfg_b);
    sc.truth_b = std::move(truth_b);
    const ScanVolume prep_b = prepare_for_inference(rf_b, sc.model, 10);
    InferConfig icfg_b;
    icfg_b.confidence = 0.9999999;
    PipelineResult stages_b = run_pipeline(sc.model, prep_b, icfg_b, 3.0);
    EvalConfig ecfg_b;
    ecfg_b.gate_lo = kGateLo;
    ecfg_b.gate_hi = kGateHi;
    ecfg_b.sample_name = "B";
    ecfg_b.confidence = 0.9999999;
    std::map<std::string, const ScanVolume*> smb{{"final", &stages_b.final}};
    sc.report_b = evaluate(smb, "final", prep_b, sc.truth_b.records, ecfg_b);

    return sc;
}

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

// --- criteria ----------------------------------------------------------------

static void criterion_1_weibull(Check& check) {
    const auto t0 = Clock::now();
    Rng rng(101);
    for (int i = 0; i < 10000; ++i) {
        const WeibullParams p{rng.uniform(0.01, 10.0), rng.uniform(0.3, 10.0)};
        const double c = rng.uniform(1e-6, 1.0 - 1e-6);
        check.require(std::abs(weibull::cdf(weibull::quantile(p, c), p) - c) < 1e-12,
                      "quantile/CDF round-trip exceeded 1e-12");
    }
    for (int i = 0; i < 40; ++i) {
        const double a = rng.uniform(0.05, 4.0);
        const double b = rng.uniform(0.4, 6.0);
        auto integrand = [&](double x) {
            return x * (b / a) * std::pow(x / a, b - 1.0) * std::exp(-std::pow(x / a, b));
        };
        const double hi = a * std::pow(45.0, 1.0 / b);
        const double numeric = oracle::tanh_sinh(integrand, hi);
        check.require(std::abs(weibull::mean({a, b}) - numeric) < 1e-8,
                      "mean vs numerical integration exceeded 1e-8");
    }
    for (int i = 0; i < 60; ++i) {
        const double a = rng.uniform(0.05, 4.0);
        const double b = rng.uniform(0.4, 6.0);
        // keep (x/a)^b <= 30 so the oracle's density value stays
        // representable; the deep tail is exercised by the CDF identity
        const double x = a * std::pow(30.0 * rng.uniform(1e-3, 1.0), 1.0 / b);
        auto shape_fn = [&](double t) {
            return std::pow(t / a, b - 1.0) * std::exp(-std::pow(t / a, b));
        };
        const double z = oracle::tanh_sinh(shape_fn, a * std::pow(42.0, 1.0 / b));
        check.require(std::abs(weibull::log_pdf(x, {a, b}) - std::log(shape_fn(x) / z)) < 1e-10,
                      "log_pdf vs quadrature-normalized oracle exceeded 1e-10");
    }
    const double elapsed = secs(t0, Clock::now());
    check.require(elapsed < 5.0, "runtime exceeded 5 s");
    check.annotate("runtime " + std::to_string(elapsed).substr(0, 4) + " s");
}

static void criterion_2_gradients(Check& check) {
    const auto t0 = Clock::now();
    NetConfig cfg;
    cfg.window = 8;
    cfg.head_kernels = {3};
    cfg.channels = {2};
    cfg.fc_widths = {4};

    auto loss_of = [](const ProbNet& net, const std::vector<double>& x,
                      const std::vector<double>& y) {
        std::vector<WeibullParams> params;
        forward(net, x, y.size(), params);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc -= weibull::log_pdf(y[i], params[i]);
        return acc / static_cast<double>(y.size());
    };

    for (uint64_t seed = 1; seed <= 5; ++seed) {
        ProbNet net = make_net(cfg, seed);
        Rng rng(seed * 100 + 1);
        std::vector<double> x(6 * 8), y(6);
        for (double& v : x) v = rng.uniform(0.0, 1.0);
        for (double& v : y) v = rng.uniform(0.01, 1.0);
        std::vector<double> grad;
        nll_backward(net, x, y, 6, grad);

        const double step = 1e-6;
        double max_rel = 0.0;
        int kinks = 0;
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            auto fd_at = [&](double h) {
                ProbNet plus = net;
                plus.params[i] += h;
                ProbNet minus = net;
                minus.params[i] -= h;
                return (loss_of(plus, x, y) - loss_of(minus, x, y)) / (2 * h);
            };
            const double fd = fd_at(step);
            const double fd_fine = fd_at(step / 4.0);
            if (std::abs(fd - fd_fine) > 1e-3 * std::max(1.0, std::abs(fd_fine))) {
                ++kinks;  // activation kink inside the stencil
                continue;
            }
            const double denom = std::max({std::abs(fd_fine), std::abs(grad[i]), 1e-5});
            max_rel = std::max(max_rel, std::abs(fd_fine - grad[i]) / denom);
        }
        check.require(max_rel < 1e-4, "gradient relative error " + std::to_string(max_rel) +
                                          " at seed " + std::to_string(seed));
        check.require(kinks * 10 < static_cast<int>(net.params.size()),
                      "too many kink-affected parameters to verify");
    }
    const double elapsed = secs(t0, Clock::now());
    check.require(elapsed < 30.0, "runtime exceeded 30 s");
    check.annotate("runtime " + std::to_string(elapsed).substr(0, 4) + " s");
}

static void criterion_3_table_arithmetic(Check& check) {
    check.require(std::round(detection_accuracy_pct(15, 23) * 100.0) / 100.0 == 39.47,
                  "(15 TP, 23 FP) did not give 39.47%");
    check.require(std::round(detection_accuracy_pct(25, 20) * 100.0) / 100.0 == 55.56,
                  "(25 TP, 20 FP) did not give 55.56%");
    int reproduced = 0, excluded = 0;
    for (const detref::Row& row : detref::kRows) {
        int tp;
        if (row.accuracy_pct == 100.0) {
            tp = detref::kDefectsPerSample[row.sample];
        } else {
            const double implied =
                row.accuracy_pct * row.false_positives / (100.0 - row.accuracy_pct);
            const double tol = 1.5 * 0.005 * row.false_positives * 100.0 /
                                   ((100.0 - row.accuracy_pct) * (100.0 - row.accuracy_pct)) +
                               1e-9;
            if (std::abs(implied - std::round(implied)) > tol) {
                ++excluded;
                continue;
            }
            tp = static_cast<int>(std::lround(implied));
        }
        const double got =
            std::round(detection_accuracy_pct(tp, row.false_positives) * 100.0) / 100.0;
        check.require(got == row.accuracy_pct,
                      "published pair not reproduced at confidence " +
                          std::to_string(row.confidence) + " sample " +
                          std::to_string(row.sample) + " stage " + std::string(1, row.stage));
        ++reproduced;
    }
    check.require(reproduced == 71, "expected 71 reproducible rows");
    check.require(excluded == 1, "expected exactly 1 excluded row");
    check.annotate("71 rows exact, 1 excluded (non-integer implied TP)");
}

static void criterion_4_morph_oracles(Check& check) {
    Rng rng(404);
    for (int i = 0; i < 100; ++i) {
        Mask2D field(32, 32);
        const double density = rng.uniform(0.2, 0.5);
        for (uint8_t& v : field.v) v = rng.u01() < density ? 1 : 0;
        for (Connectivity conn : {Connectivity::four, Connectivity::eight}) {
            const LabelField got = label_components(field, conn);
            const std::vector<int> expect = oracle::propagate_labels(field, conn);
            // same partition up to relabeling
            std::map<int, int> fwd, bwd;
            bool same = true;
            for (std::size_t k = 0; k < got.v.size(); ++k) {
                const int g = got.v[k], e = expect[k];
                if ((g == 0) != (e == 0)) same = false;
                if (g == 0 || !same) continue;
                auto [fit, fnew] = fwd.try_emplace(g, e);
                if (!fnew && fit->second != e) same = false;
                auto [bit, bnew] = bwd.try_emplace(e, g);
                if (!bnew && bit->second != g) same = false;
            }
            check.require(same, "label_components disagrees with the propagation oracle");
        }
    }
    // area_opening vs label/count/drop oracle on random mask volumes
    for (int i = 0; i < 100; ++i) {
        AxisCalib calib;
        calib.front_wall_index = 0;
        ScanVolume vol(32, 2, 32, VolumeKind::mask, calib);
        const double density = rng.uniform(0.15, 0.45);
        for (float& v : vol.data()) v = rng.u01() < density ? 1.0f : 0.0f;
        const int filter = 2 + static_cast<int>(rng.below(6));
        for (Connectivity conn : {Connectivity::four, Connectivity::eight}) {
            const ScanVolume opened = area_opening(vol, filter, conn);
            for (uint32_t t = 0; t < 2; ++t) {
                Mask2D plane(32, 32);
                for (int f = 0; f < 32; ++f)
                    for (int b = 0; b < 32; ++b)
                        plane.at(f, b) = vol.at(f, t, b) != 0.0f;
                const std::vector<int> labels = oracle::propagate_labels(plane, conn);
                std::map<int, int> sizes;
                for (int l : labels)
                    if (l) ++sizes[l];
                for (int f = 0; f < 32 && check.ok; ++f)
                    for (int b = 0; b < 32; ++b) {
                        const int l = labels[static_cast<std::size_t>(f) * 32 + b];
                        const bool keep = l != 0 && sizes[l] >= filter;
                        check.require((opened.at(f, t, b) != 0.0f) == keep,
                                      "area_opening disagrees with the per-plane oracle");
                        if (!check.ok) break;
                    }
            }
        }
    }
}

int main() {
    std::printf("acceptance suite\n================\n");
    criterion(1, "Weibull math vs oracles", criterion_1_weibull);
    criterion(2, "full-net gradient verification", criterion_2_gradients);
    criterion(3, "published detection-table arithmetic", criterion_3_table_arithmetic);
    criterion(4, "morphology vs brute-force oracles", criterion_4_morph_oracles);

    std::printf("building the synthetic scenario (train + sweeps)...\n");
    std::fflush(stdout);
    Scenario sc = build_scenario();

    criterion(5, "clean-volume false-call calibration", [&](Check& check) {
        check.require(sc.clean_voxels >= 100000, "clean volume smaller than 1e5 voxels");
        std::size_t flags = 0;
        for (float v : sc.clean_mask_099.data()) flags += v != 0.0f;
        const double fraction = static_cast<double>(flags) / sc.clean_voxels;
        check.require(fraction >= 0.0 && fraction <= 0.02,
                      "flagged fraction " + std::to_string(fraction) + " outside [0, 0.02]");
        // at the top threshold the full pipeline leaves the clean volume empty
        std::size_t residue = 0;
        for (float v : sc.clean_final_top.data()) residue += v != 0.0f;
        check.require(residue == 0, "clean-volume pipeline at c=0.9999999 left " +
                                        std::to_string(residue) + " flagged voxels");
        char note[96];
        std::snprintf(note, sizeof note, "flagged %.4f%% of %zu voxels at c=0.99",
                      100.0 * fraction, sc.clean_voxels);
        check.annotate(note);
    });

    criterion(6, "end-to-end detection at c=0.9999999", [&](Check& check) {
        const EvalReport& rep = sc.reports_a.at(0.9999999);
        check.require(sc.truth_a.records.size() >= 10, "needs at least 10 defects");
        const StageDetection* final_stage = nullptr;
        for (const StageDetection& s : rep.stages)
            if (s.stage == "final") final_stage = &s;
        check.require(final_stage != nullptr, "final stage missing");
        if (final_stage) {
            check.require(final_stage->tp == static_cast<int>(sc.truth_a.records.size()),
                          "not all defects detected: " + std::to_string(final_stage->tp));
            check.require(final_stage->fp == 0,
                          "false positives present: " + std::to_string(final_stage->fp));
            check.require(final_stage->accuracy_pct == 100.0, "accuracy not 100%");
        }
        // localization: depth within one downsampled time step's depth
        // equivalent (flat-bottom-hole-like defects), in-plane within a pitch
        const AxisCalib& calib = sc.prep_a.calib();
        const double depth_step = calib.depth_mm(calib.front_wall_index + 1);
        for (const DefectEval& d : rep.defects) {
            if (d.depth_error_mm)
                check.require(std::abs(*d.depth_error_mm) <= depth_step,
                              "depth error " + std::to_string(*d.depth_error_mm) +
                                  " mm exceeds one time step for defect " + std::to_string(d.id));
            if (d.in_plane_error_mm)
                check.require(*d.in_plane_error_mm < calib.beam_pitch_mm,
                              "in-plane error exceeds the element pitch for defect " +
                                  std::to_string(d.id));
        }

        const double full_run = sc.t_synth + sc.t_train + sc.t_infer + sc.t_eval;
        check.require(full_run < 600.0, "full run exceeded 10 minutes");
        check.require(sc.t_infer < 60.0, "inference stage exceeded 60 s");
        char note[128];
        std::snprintf(note, sizeof note,
                      "12/12 detected, 0 FP; synth %.0fs train %.0fs infer %.0fs eval %.1fs",
                      sc.t_synth, sc.t_train, sc.t_infer, sc.t_eval);
        check.annotate(note);
    });

    criterion(7, "trend reproduction across the confidence set", [&](Check& check) {
        double prev_mae = 1e30;
        for (double c : kConfidences) {
            const EvalReport& rep = sc.reports_a.at(c);
            // (a) sizing MAE non-increasing with confidence
            check.require(rep.mae_mm <= prev_mae + 1e-12,
                          "MAE increased at confidence " + std::to_string(c));
            prev_mae = rep.mae_mm;
            // (b) combined-sweep false positives never exceed either sweep's
            std::map<std::string, const StageDetection*> stages;
            for (const StageDetection& s : rep.stages) stages[s.stage] = &s;
            check.require(stages.count("forward") && stages.count("backward") &&
                              stages.count("combined") && stages.count("final"),
                          "stage reports missing");
            check.require(stages["combined"]->fp <= stages["forward"]->fp &&
                              stages["combined"]->fp <= stages["backward"]->fp,
                          "combined FPs exceed a single sweep at confidence " +
                              std::to_string(c));
            // (c) area thresholding never drops a true detection
            check.require(stages["final"]->tp == stages["combined"]->tp,
                          "area opening removed a true detection at confidence " +
                              std::to_string(c));
        }
        char note[96];
        std::snprintf(note, sizeof note, "MAE %.2f -> %.2f mm over 6 thresholds",
                      sc.reports_a.at(kConfidences[0]).mae_mm,
                      sc.reports_a.at(0.9999999).mae_mm);
        check.annotate(note);
    });

    criterion(8, "oversizing property at c=0.9999999", [&](Check& check) {
        const EvalReport& rep = sc.reports_a.at(0.9999999);
        int detected = 0, oversized = 0;
        for (const DefectEval& d : rep.defects)
            if (d.detected) {
                ++detected;
                if (d.measured_width_mm >= d.true_width_mm) ++oversized;
            }
        check.require(detected > 0, "no defects detected");
        check.require(10 * oversized >= 9 * detected,
                      "fewer than 90% of defects oversized: " + std::to_string(oversized) + "/" +
                          std::to_string(detected));
        check.annotate(std::to_string(oversized) + "/" + std::to_string(detected) +
                       " measured at or above true width");
    });

    criterion(9, "oversize calibration transfer", [&](Check& check) {
        const EvalReport& rep_a = sc.reports_a.at(0.9999999);
        const double offset = calibrate_offset(rep_a);
        check.require(offset > 0.0, "calibration sample shows no oversize bias");
        const double raw_mae = sc.report_b.mae_mm;
        const double corrected = apply_offset_mae(sc.report_b, offset);
        check.require(raw_mae > 0.0, "held-out sample has zero MAE before correction");
        check.require(corrected <= 0.7 * raw_mae,
                      "correction reduced MAE by less than 30%: " + std::to_string(raw_mae) +
                          " -> " + std::to_string(corrected));
        char note[96];
        std::snprintf(note, sizeof note, "offset %.2f mm, MAE %.2f -> %.2f mm (-%.0f%%)", offset,
                      raw_mae, corrected, 100.0 * (1.0 - corrected / raw_mae));
        check.annotate(note);
    });

    criterion(10, "invariant suite", [&](Check& check) {
        // inference causality: a truncated volume reproduces the mask prefix
        NetConfig small;
        small.window = 16;
        small.head_kernels = {3};
        small.channels = {2};
        small.fc_widths = {4};
        ProbNet net = make_net(small, 11);
        AxisCalib calib;
        calib.front_wall_index = 0;
        ScanVolume vol(48, 3, 3, VolumeKind::envelope, calib);
        Rng rng(1001);
        for (float& v : vol.data()) v = static_cast<float>(rng.uniform(0.0, 1.2));
        InferConfig icfg;
        icfg.confidence = 0.99;
        const ScanVolume full = sweep_forward(net, vol, icfg, nullptr);
        ScanVolume prefix(30, 3, 3, VolumeKind::envelope, calib);
        std::copy_n(vol.data().begin(), prefix.size(), prefix.data().begin());
        const ScanVolume part = sweep_forward(net, prefix, icfg, nullptr);
        bool causal = true;
        for (std::size_t i = 0; i < part.size(); ++i)
            causal = causal && part.data()[i] == full.data()[i];
        check.require(causal, "truncation test failed (mask prefix differs)");

        // substitution: a flagged sentinel never reappears in model inputs
        const auto [a_idx, b_idx] = output_bias_indices(small);
        ProbNet fixed = make_net(small, 3);
        const double keep_a = fixed.params[a_idx], keep_b = fixed.params[b_idx];
        std::fill(fixed.params.begin(), fixed.params.end(), 0.0);
        fixed.params[a_idx] = keep_a;
        fixed.params[b_idx] = keep_b;
        ScanVolume svol = vol;
        const double sentinel = 512.5;
        svol.at(20, 1, 1) = static_cast<float>(sentinel);
        bool leaked = false;
        FrameObserver obs = [&](uint32_t frame, const std::vector<double>& inputs,
                                std::size_t) {
            if (frame <= 20) return;
            const std::size_t lane = 1 * svol.n_beams() + 1;
            for (int j = 0; j < small.window; ++j)
                if (inputs[lane * 16 + j] == sentinel) leaked = true;
        };
        const ScanVolume smask = sweep_forward(fixed, svol, icfg, &obs);
        check.require(smask.at(20, 1, 1) == 1.0f, "sentinel voxel was not flagged");
        check.require(!leaked, "sentinel value leaked into later model inputs");

        // confidence-monotonic flag subsets
        ScanVolume prev = sweep_forward(net, vol, icfg, nullptr);
        for (double c : {0.999, 0.9999}) {
            InferConfig tighter;
            tighter.confidence = c;
            const ScanVolume cur = sweep_forward(net, vol, tighter, nullptr);
            for (std::size_t i = 0; i < cur.size(); ++i)
                if (cur.data()[i] != 0.0f)
                    check.require(prev.data()[i] != 0.0f,
                                  "higher confidence flagged a voxel the lower one did not");
            prev = cur;
        }

        // AND contractivity and idempotence
        const ScanVolume fwd = sc.pipelines_a.at(0.99).forward;
        const ScanVolume bwd = sc.pipelines_a.at(0.99).backward;
        const ScanVolume comb = combine_masks(fwd, bwd);
        const ScanVolume comb2 = combine_masks(comb, comb);
        for (std::size_t i = 0; i < comb.size(); ++i) {
            check.require(comb.data()[i] <= fwd.data()[i] && comb.data()[i] <= bwd.data()[i],
                          "AND is not contractive");
            check.require(comb2.data()[i] == comb.data()[i], "AND is not idempotent");
            if (!check.ok) break;
        }

        // area-opening idempotence on a real stage mask
        const ScanVolume& final_mask = sc.pipelines_a.at(0.999).final;
        const ScanVolume reopened = area_opening(final_mask, 11, Connectivity::eight);
        bool idem = true;
        for (std::size_t i = 0; i < final_mask.size(); ++i)
            idem = idem && reopened.data()[i] == final_mask.data()[i];
        check.require(idem, "area opening is not idempotent on the final mask");

        // USV and model round-trips
        const std::string vpath = temp_file("acceptance_vol.usv");
        write_volume(vol, vpath);
        const ScanVolume vol_rt = read_volume(vpath);
        bool usv_exact = vol_rt.n_frames() == vol.n_frames();
        for (std::size_t i = 0; i < vol.size() && usv_exact; ++i)
            usv_exact = vol_rt.data()[i] == vol.data()[i];
        check.require(usv_exact, "USV round-trip not bit-exact");

        const std::string mpath = temp_file("acceptance_model.ussm");
        save_model(sc.model, mpath);
        const ProbNet model_rt = load_model(mpath);
        check.require(model_rt.params.size() == sc.model.params.size() &&
                          model_rt.config.window == sc.model.config.window,
                      "model round-trip changed the configuration");
        bool params_match = true;
        for (std::size_t i = 0; i < sc.model.params.size(); ++i)
            params_match = params_match &&
                           model_rt.params[i] == static_cast<double>(static_cast<float>(
                                                     sc.model.params[i]));
        check.require(params_match, "model round-trip not exact at f32");
    });

    criterion(11, "stride harness", [&](Check& check) {
        Rng rng(1111);
        for (int i = 0; i < 200; ++i) {
            const std::size_t L = 1 + rng.below(500);
            const int W = 1 + static_cast<int>(rng.below(90));
            const int S = 1 + static_cast<int>(rng.below(80));
            check.require(count_windows(L, W, S) == oracle::enumerate_windows(L, W, S),
                          "count_windows disagrees with enumeration");
        }

        // stride study on a small corpus: stride 256 must not beat stride 8
        SynthConfig cfg = scenario_base(400, 6, 5.0, 900);
        cfg.time = 400;
        auto [train_rf, t1] = generate(cfg);
        cfg.seed = 901;
        auto [val_rf, t2] = generate(cfg);
        cfg.seed = 902;
        auto [test_rf, t3] = generate(cfg);
        const ScanVolume train_env = envelope(train_rf);
        const ScanVolume val_env = envelope(val_rf);
        const ScanVolume test_env = envelope(test_rf);

        NetConfig net_cfg;
        net_cfg.window = 64;
        net_cfg.head_kernels = {3};
        net_cfg.channels = {2};
        net_cfg.fc_widths = {8};
        SamplerConfig sampler;
        sampler.window = 64;
        sampler.stride = 64;
        sampler.time_downsample = 5;
        TrainConfig tc;
        tc.batch_size = 2048;
        tc.learning_rate = 2e-3;
        tc.patience = 3;
        tc.max_epochs = 6;
        tc.seed = 17;
        tc.test_stride = 1;

        const std::vector<int> strides{8, 256};
        const auto rows =
            stride_study(net_cfg, {&train_env}, val_env, test_env, sampler, tc, strides, 2);
        check.require(rows.size() == 2, "expected two stride rows");
        SamplerConfig s8 = sampler;
        s8.stride = 8;
        SamplerConfig s256 = sampler;
        s256.stride = 256;
        check.require(rows[0].dataset_size == build_dataset({&train_env}, s8).size(),
                      "stride-8 dataset size mismatch");
        check.require(rows[1].dataset_size == build_dataset({&train_env}, s256).size(),
                      "stride-256 dataset size mismatch");
        check.require(rows[1].mean_test_ll <= rows[0].mean_test_ll,
                      "stride 256 beat stride 8 in mean test log-likelihood");
        const std::string csv = temp_file("acceptance_strides.csv");
        write_stride_csv(rows, csv);
        check.require(std::filesystem::file_size(csv) > 0, "stride CSV not written");
        char note[128];
        std::snprintf(note, sizeof note, "LL(8)=%.3f (n=%zu) vs LL(256)=%.3f (n=%zu)",
                      rows[0].mean_test_ll, rows[0].dataset_size, rows[1].mean_test_ll,
                      rows[1].dataset_size);
        check.annotate(note);
    });

    std::printf("================\n%s: %d criterion(s) failed\n",
                g_failures == 0 ? "SUCCESS" : "FAILURE", g_failures);
    return g_failures == 0 ? 0 : 1;
}
