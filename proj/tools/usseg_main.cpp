// usseg command line: synthetic scan generation, pretext training, sweep
// inference, evaluation, and rendering, wired through a single JSON config.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include "usseg/config.hpp"
#include "usseg/error.hpp"
#include "usseg/eval.hpp"
#include "usseg/infer.hpp"
#include "usseg/morph.hpp"
#include "usseg/net.hpp"
#include "usseg/parallel.hpp"
#include "usseg/rng.hpp"
#include "usseg/synth.hpp"
#include "usseg/trainer.hpp"
#include "usseg/volume.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace usseg;

namespace {

struct GateFlag {
    uint32_t lo = 0;
    uint32_t hi = 0;
    bool set = false;
};

void parse_gate(const std::string& text, GateFlag& gate) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("--gate", "expected lo:hi");
    gate.lo = static_cast<uint32_t>(std::stoul(text.substr(0, colon)));
    gate.hi = static_cast<uint32_t>(std::stoul(text.substr(colon + 1)));
    gate.set = true;
}

SynthConfig clean_variant(SynthConfig cfg, uint64_t seed) {
    cfg.defects.clear();
    cfg.seed = seed;
    return cfg;
}

void run_synth(const RunConfig& cfg, const std::string& out, const std::string& truth_path,
               const std::string& truth_mask_path, bool clean, std::optional<uint64_t> seed) {
    if (!cfg.has_synth) throw ConfigError("synth: config file has no synth section");
    SynthConfig scfg = cfg.synth;
    if (seed) scfg.seed = *seed;
    if (clean) scfg.defects.clear();
    auto [vol, truth] = generate(scfg);
    write_volume(vol, out);
    if (!truth_path.empty()) write_truth_csv(truth.records, truth_path);
    if (!truth_mask_path.empty()) write_volume(truth.mask, truth_mask_path);
}

ProbNet run_train(const RunConfig& cfg, const std::vector<std::string>& train_paths,
                  const std::string& val_path, std::optional<int> stride,
                  const std::string& model_out, const std::string& history_out) {
    std::vector<ScanVolume> train_vols;
    std::vector<const ScanVolume*> train_ptrs;
    for (const std::string& path : train_paths) {
        ScanVolume vol = read_volume(path);
        train_vols.push_back(vol.kind() == VolumeKind::rf ? envelope(vol) : std::move(vol));
    }
    for (const ScanVolume& vol : train_vols) train_ptrs.push_back(&vol);
    ScanVolume val = read_volume(val_path);
    if (val.kind() == VolumeKind::rf) val = envelope(val);

    SamplerConfig sampler = cfg.train.sampler;
    if (stride) sampler.stride = *stride;
    ProbNet net = make_net(cfg.train.net, cfg.train.train.seed);
    TrainResult result = train(std::move(net), train_ptrs, val, sampler, cfg.train.train);
    std::fprintf(stderr, "trained %zu epochs, best val NLL %.6g (epoch %d), %zu parameters\n",
                 result.history.size(), result.best_val_nll, result.best_epoch,
                 result.model.params.size());
    save_model(result.model, model_out);
    if (!history_out.empty()) write_history_csv(result.history, history_out);
    return result.model;
}

struct InferOutputs {
    PipelineResult stages;
    ScanVolume prepared;
};

InferOutputs run_infer(const ProbNet& net, const ScanVolume& raw, const InferConfig& icfg,
                       double min_defect_mm) {
    ScanVolume prepared = prepare_for_inference(raw, net, icfg.time_downsample);
    PipelineResult stages = run_pipeline(net, prepared, icfg, min_defect_mm);
    return InferOutputs{std::move(stages), std::move(prepared)};
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
    fs::path p(path);
    fs::path stem = p.stem();
    stem += suffix;
    stem += p.extension();
    return (p.parent_path() / stem).string();
}

EvalReport run_eval(const ScanVolume& mask, const ScanVolume& env_ds,
                    const std::vector<DefectRecord>& truth, const EvalSection& esec,
                    const std::string& sample, double confidence,
                    const std::map<std::string, const ScanVolume*>& extra_stages) {
    EvalConfig ecfg;
    ecfg.gate_lo = esec.gate_lo;
    ecfg.gate_hi = esec.gate_hi;
    ecfg.sample_name = sample;
    ecfg.confidence = confidence;
    std::map<std::string, const ScanVolume*> stages = extra_stages;
    stages["final"] = &mask;
    return evaluate(stages, "final", env_ds, truth, ecfg);
}

EvalReport read_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report " + path);
    nlohmann::json j;
    in >> j;
    EvalReport r;
    r.sample = j.at("sample").get<std::string>();
    r.confidence = j.at("confidence").get<double>();
    for (const auto& sj : j.at("stages"))
        r.stages.push_back(StageDetection{sj.at("stage").get<std::string>(),
                                          sj.at("tp").get<int>(), sj.at("fp").get<int>(),
                                          sj.at("accuracy_pct").get<double>()});
    for (const auto& dj : j.at("defects")) {
        DefectEval d;
        d.id = dj.at("id").get<int>();
        d.detected = dj.at("detected").get<bool>();
        d.true_width_mm = dj.at("true_width_mm").get<double>();
        if (d.detected) {
            d.measured_width_mm = dj.at("measured_width_mm").get<double>();
            d.equiv_diam_mm = dj.at("equivalent_diameter_mm").get<double>();
            d.sizing_error_mm = dj.at("sizing_error_mm").get<double>();
            if (dj.contains("in_plane_error_mm"))
                d.in_plane_error_mm = dj.at("in_plane_error_mm").get<double>();
            if (dj.contains("depth_mm")) d.depth_mm = dj.at("depth_mm").get<double>();
            if (dj.contains("depth_error_mm"))
                d.depth_error_mm = dj.at("depth_error_mm").get<double>();
        }
        r.defects.push_back(std::move(d));
    }
    const auto& agg = j.at("aggregates");
    r.n_detected = agg.at("n_detected").get<int>();
    r.mae_mm = agg.at("mae_mm").get<double>();
    r.std_mm = agg.at("std_mm").get<double>();
    for (const auto& wj : agg.at("by_width"))
        r.by_width[wj.at("width_mm").get<double>()] = {wj.at("mae_mm").get<double>(),
                                                       wj.at("std_mm").get<double>()};
    return r;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised volumetric anomaly segmentation for ultrasonic scans"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads (0 = hardware)");

    std::string config_path;
    std::string out, truth_path, truth_mask_path, val_path, model_path, history_path;
    std::vector<std::string> train_paths;
    std::optional<uint64_t> seed_flag;
    std::optional<int> stride_flag;
    bool clean = false;

    // synth
    CLI::App* synth = app.add_subcommand("synth", "generate a seeded synthetic rf volume");
    synth->add_option("--config", config_path, "JSON run config")->required();
    synth->add_option("--out", out, "output USV rf volume")->required();
    synth->add_option("--truth", truth_path, "output truth CSV");
    synth->add_option("--truth-mask", truth_mask_path, "output truth mask USV");
    uint64_t synth_seed = 0;
    CLI::Option* synth_seed_opt = synth->add_option("--seed", synth_seed, "override synth.seed");
    synth->add_flag("--clean", clean, "drop all defects from the config");

    // train
    CLI::App* train_cmd = app.add_subcommand("train", "pretext-train a forecaster");
    train_cmd->add_option("--config", config_path, "JSON run config")->required();
    train_cmd->add_option("--train", train_paths, "training USV volumes")->required();
    train_cmd->add_option("--val", val_path, "validation USV volume")->required();
    int stride_val = 0;
    CLI::Option* stride_opt = train_cmd->add_option("--stride", stride_val, "sampling stride");
    train_cmd->add_option("--out", model_path, "output USSM model")->required();
    train_cmd->add_option("--history", history_path, "training history CSV");

    // infer
    CLI::App* infer_cmd = app.add_subcommand("infer", "segment a volume with a trained model");
    std::string in_path, mask_out;
    double confidence_flag = -1.0;
    std::string sweep_flag;
    double min_defect_flag = -1.0;
    bool stages_flag = false;
    infer_cmd->add_option("--config", config_path, "JSON run config");
    infer_cmd->add_option("--model", model_path, "USSM model")->required();
    infer_cmd->add_option("--in", in_path, "input USV volume (rf or envelope)")->required();
    infer_cmd->add_option("--confidence", confidence_flag, "per-voxel confidence in (0,1)");
    infer_cmd->add_option("--sweep", sweep_flag, "forward | backward | both");
    infer_cmd->add_option("--min-defect-mm", min_defect_flag, "area-opening minimum size");
    infer_cmd->add_flag("--stages", stages_flag, "also write forward/backward/combined masks");
    infer_cmd->add_option("--out", mask_out, "output USV mask")->required();

    // eval
    CLI::App* eval_cmd = app.add_subcommand("eval", "score a mask against truth");
    std::string report_path, sample_name = "sample";
    std::string fwd_mask_path, bwd_mask_path, comb_mask_path;
    double report_confidence = 0.0;
    GateFlag gate;
    eval_cmd->add_option("--config", config_path, "JSON run config (eval section)");
    eval_cmd->add_option("--mask", mask_out, "predicted USV mask")->required();
    eval_cmd->add_option("--truth", truth_path, "truth CSV")->required();
    eval_cmd->add_option("--volume", in_path, "measured USV volume (rf or envelope)")->required();
    eval_cmd->add_option("--report", report_path, "output report JSON")->required();
    eval_cmd->add_option("--forward-mask", fwd_mask_path, "forward-sweep stage mask");
    eval_cmd->add_option("--backward-mask", bwd_mask_path, "backward-sweep stage mask");
    eval_cmd->add_option("--combined-mask", comb_mask_path, "combined-sweep stage mask");
    eval_cmd->add_option("--gate", [&gate](const std::vector<std::string>& vals) {
        parse_gate(vals.at(0), gate);
        return true;
    }, "time gate lo:hi on the mask's time axis");
    eval_cmd->add_option("--sample", sample_name, "sample name for the report");
    eval_cmd->add_option("--confidence", report_confidence, "confidence recorded in the report");

    // render
    CLI::App* render_cmd = app.add_subcommand("render", "write PGM images from a volume");
    std::string cscan_out;
    std::vector<std::string> bscan_args;
    GateFlag render_gate;
    render_cmd->add_option("--in", in_path, "input USV volume")->required();
    render_cmd->add_option("--cscan", cscan_out, "output C-scan PGM");
    render_cmd->add_option("--bscan", bscan_args, "frame index and output B-scan PGM")
        ->expected(2);
    render_cmd->add_option("--gate", [&render_gate](const std::vector<std::string>& vals) {
        parse_gate(vals.at(0), render_gate);
        return true;
    }, "time gate lo:hi for the C-scan");

    // tables
    CLI::App* tables_cmd = app.add_subcommand("tables", "aggregate report JSONs into CSV tables");
    std::vector<std::string> report_inputs;
    std::string sizing_csv, detection_csv;
    tables_cmd->add_option("--reports", report_inputs, "input report JSONs")->required();
    tables_cmd->add_option("--sizing", sizing_csv, "output sizing CSV");
    tables_cmd->add_option("--detection", detection_csv, "output detection CSV");

    // stride-study
    CLI::App* stride_cmd = app.add_subcommand("stride-study", "dataset-size vs stride sweep");
    std::vector<int> strides;
    int repeats = 3;
    std::string stride_csv, test_path;
    stride_cmd->add_option("--config", config_path, "JSON run config")->required();
    stride_cmd->add_option("--train", train_paths, "training USV volumes")->required();
    stride_cmd->add_option("--val", val_path, "validation USV volume")->required();
    stride_cmd->add_option("--test", test_path, "test USV volume")->required();
    stride_cmd->add_option("--strides", strides, "stride values")->required();
    stride_cmd->add_option("--repeats", repeats, "models per stride");
    stride_cmd->add_option("--out", stride_csv, "output CSV")->required();

    // pipeline
    CLI::App* pipeline_cmd =
        app.add_subcommand("pipeline", "synth + train + infer + eval in one run");
    std::string out_dir;
    pipeline_cmd->add_option("--config", config_path, "JSON run config")->required();
    pipeline_cmd->add_option("--out-dir", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) set_max_threads(threads);

    try {
        if (*synth) {
            RunConfig cfg = load_run_config(config_path);
            run_synth(cfg, out, truth_path, truth_mask_path, clean,
                      synth_seed_opt->count() ? std::optional<uint64_t>(synth_seed) : std::nullopt);
        } else if (*train_cmd) {
            RunConfig cfg = load_run_config(config_path);
            if (stride_opt->count()) stride_flag = stride_val;
            run_train(cfg, train_paths, val_path, stride_flag, model_path, history_path);
        } else if (*infer_cmd) {
            RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
            InferSection icfg = cfg.infer;
            if (confidence_flag >= 0.0) {
                if (!(confidence_flag > 0.0) || !(confidence_flag < 1.0))
                    throw ConfigError("--confidence must lie strictly inside (0, 1)");
                icfg.infer.confidence = confidence_flag;
            }
            if (!sweep_flag.empty()) {
                if (sweep_flag == "forward") icfg.infer.sweep = SweepMode::forward;
                else if (sweep_flag == "backward") icfg.infer.sweep = SweepMode::backward;
                else if (sweep_flag == "both") icfg.infer.sweep = SweepMode::both;
                else throw ConfigError("--sweep must be forward, backward, or both");
            }
            if (min_defect_flag > 0.0) icfg.min_defect_mm = min_defect_flag;
            ProbNet net = load_model(model_path);
            ScanVolume raw = read_volume(in_path);
            InferOutputs result = run_infer(net, raw, icfg.infer, icfg.min_defect_mm);
            switch (icfg.infer.sweep) {
            case SweepMode::forward: write_volume(result.stages.forward, mask_out); break;
            case SweepMode::backward: write_volume(result.stages.backward, mask_out); break;
            case SweepMode::both: write_volume(result.stages.final, mask_out); break;
            }
            if (stages_flag) {
                write_volume(result.stages.forward, with_suffix(mask_out, "_forward"));
                write_volume(result.stages.backward, with_suffix(mask_out, "_backward"));
                write_volume(result.stages.combined, with_suffix(mask_out, "_combined"));
                write_volume(result.stages.final, with_suffix(mask_out, "_final"));
            }
        } else if (*eval_cmd) {
            ScanVolume mask = read_volume(mask_out);
            if (mask.kind() != VolumeKind::mask)
                throw FormatError(mask_out + ": --mask must be a mask volume");
            ScanVolume vol = read_volume(in_path);
            if (vol.kind() == VolumeKind::rf) vol = envelope(vol);
            uint32_t factor = static_cast<uint32_t>(
                std::lround(static_cast<double>(vol.n_time()) / mask.n_time()));
            if (factor == 0) factor = 1;
            ScanVolume env_ds = downsample_time(vol, factor);
            if (env_ds.n_time() != mask.n_time())
                throw FormatError("eval: volume and mask time axes are incompatible");
            std::vector<DefectRecord> truth = read_truth_csv(truth_path);
            EvalSection esec;
            if (!config_path.empty()) esec = load_run_config(config_path).eval;
            if (gate.set) {
                esec.gate_lo = gate.lo;
                esec.gate_hi = gate.hi;
            }
            std::map<std::string, const ScanVolume*> stages;
            std::optional<ScanVolume> fwd_mask, bwd_mask, comb_mask;
            if (!fwd_mask_path.empty()) {
                fwd_mask = read_volume(fwd_mask_path);
                stages["forward"] = &*fwd_mask;
            }
            if (!bwd_mask_path.empty()) {
                bwd_mask = read_volume(bwd_mask_path);
                stages["backward"] = &*bwd_mask;
            }
            if (!comb_mask_path.empty()) {
                comb_mask = read_volume(comb_mask_path);
                stages["combined"] = &*comb_mask;
            }
            EvalReport report =
                run_eval(mask, env_ds, truth, esec, sample_name, report_confidence, stages);
            write_report_json(report, report_path);
        } else if (*render_cmd) {
            ScanVolume vol = read_volume(in_path);
            if (!cscan_out.empty()) {
                const uint32_t lo = render_gate.set ? render_gate.lo : 0;
                const uint32_t hi = render_gate.set ? render_gate.hi : vol.n_time();
                write_pgm(cscan_amplitude(vol, lo, hi), cscan_out);
            }
            if (!bscan_args.empty()) {
                const uint32_t frame = static_cast<uint32_t>(std::stoul(bscan_args.at(0)));
                write_pgm(bscan(vol, frame), bscan_args.at(1));
            }
        } else if (*tables_cmd) {
            std::vector<EvalReport> reports;
            for (const std::string& path : report_inputs)
                reports.push_back(read_report_json(path));
            if (!sizing_csv.empty()) write_sizing_csv(reports, sizing_csv);
            if (!detection_csv.empty()) write_detection_csv(reports, detection_csv);
        } else if (*stride_cmd) {
            RunConfig cfg = load_run_config(config_path);
            std::vector<ScanVolume> train_vols;
            for (const std::string& path : train_paths) {
                ScanVolume vol = read_volume(path);
                train_vols.push_back(vol.kind() == VolumeKind::rf ? envelope(vol)
                                                                  : std::move(vol));
            }
            std::vector<const ScanVolume*> ptrs;
            for (const ScanVolume& vol : train_vols) ptrs.push_back(&vol);
            ScanVolume val = read_volume(val_path);
            if (val.kind() == VolumeKind::rf) val = envelope(val);
            ScanVolume test = read_volume(test_path);
            if (test.kind() == VolumeKind::rf) test = envelope(test);
            auto rows = stride_study(cfg.train.net, ptrs, val, test, cfg.train.sampler,
                                     cfg.train.train, strides, repeats);
            write_stride_csv(rows, stride_csv);
        } else if (*pipeline_cmd) {
            RunConfig cfg = load_run_config(config_path);
            if (!cfg.has_synth) throw ConfigError("pipeline: config file has no synth section");
            fs::create_directories(out_dir);
            auto path_in = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

            // synth: the defective sample plus clean train/val volumes
            auto [vol, truth] = generate(cfg.synth);
            write_volume(vol, path_in("sample.usv"));
            write_truth_csv(truth.records, path_in("truth.csv"));
            write_volume(truth.mask, path_in("truth_mask.usv"));
            std::vector<std::string> clean_paths;
            for (int i = 0; i < cfg.pipeline.train_volumes; ++i) {
                auto [cvol, ct] = generate(clean_variant(cfg.synth, cfg.synth.seed + 1 + i));
                clean_paths.push_back(path_in("train_" + std::to_string(i + 1) + ".usv"));
                write_volume(cvol, clean_paths.back());
            }
            auto [vvol, vt] = generate(
                clean_variant(cfg.synth, cfg.synth.seed + 1 + cfg.pipeline.train_volumes));
            write_volume(vvol, path_in("val.usv"));

            // train
            ProbNet model = run_train(cfg, clean_paths, path_in("val.usv"), std::nullopt,
                                      path_in("model.ussm"), path_in("history.csv"));

            // infer at the configured confidence, stage masks included
            InferOutputs result = run_infer(model, vol, cfg.infer.infer, cfg.infer.min_defect_mm);
            write_volume(result.stages.forward, path_in("mask_forward.usv"));
            write_volume(result.stages.backward, path_in("mask_backward.usv"));
            write_volume(result.stages.combined, path_in("mask_combined.usv"));
            write_volume(result.stages.final, path_in("mask_final.usv"));

            // eval across the configured confidence set, then tables
            std::vector<EvalReport> reports;
            for (double c : cfg.eval.confidences) {
                InferConfig icfg = cfg.infer.infer;
                icfg.confidence = c;
                InferOutputs r = run_infer(model, vol, icfg, cfg.infer.min_defect_mm);
                std::map<std::string, const ScanVolume*> stages{
                    {"forward", &r.stages.forward},
                    {"backward", &r.stages.backward},
                    {"combined", &r.stages.combined}};
                EvalReport report = run_eval(r.stages.final, r.prepared, truth.records, cfg.eval,
                                             cfg.pipeline.sample_name, c, stages);
                char name[64];
                std::snprintf(name, sizeof name, "report_%.9g.json", c);
                write_report_json(report, path_in(name));
                reports.push_back(std::move(report));
            }
            write_sizing_csv(reports, path_in("sizing.csv"));
            write_detection_csv(reports, path_in("detection.csv"));
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::invalid_argument& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
