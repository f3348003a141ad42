#include "usseg/config.hpp"

#include "usseg/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace usseg {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ConfigError(path + "." + it.key() + ": unknown key");
}

template <typename T>
T get_or(const json& j, const char* key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

SynthConfig parse_synth(const json& j, uint64_t default_seed) {
    const std::string path = "synth";
    reject_unknown(j, path,
                   {"frames", "time", "beams", "scan_step_mm", "beam_pitch_mm", "sample_rate_hz",
                    "velocity_mm_per_us", "front_wall_index", "steps", "front_wall_amplitude",
                    "back_wall_amplitude", "pulse_frequency_hz", "pulse_cycles",
                    "attenuation_db_per_mm", "speckle_amplitude", "speckle_corr_frames",
                    "speckle_corr_beams", "speckle_corr_time", "beam_gain_std",
                    "footprint_spread_mm", "repeat_echo", "defects", "seed"});
    SynthConfig cfg;
    cfg.seed = get_or<uint64_t>(j, "seed", path, default_seed);
    cfg.frames = get_or<int>(j, "frames", path, cfg.frames);
    cfg.time = get_or<int>(j, "time", path, cfg.time);
    cfg.beams = get_or<int>(j, "beams", path, cfg.beams);
    cfg.calib.scan_step_mm = get_or<double>(j, "scan_step_mm", path, cfg.calib.scan_step_mm);
    cfg.calib.beam_pitch_mm = get_or<double>(j, "beam_pitch_mm", path, cfg.calib.beam_pitch_mm);
    cfg.calib.sample_rate_hz = get_or<double>(j, "sample_rate_hz", path, cfg.calib.sample_rate_hz);
    cfg.calib.velocity_mm_per_us =
        get_or<double>(j, "velocity_mm_per_us", path, cfg.calib.velocity_mm_per_us);
    cfg.calib.front_wall_index =
        get_or<uint32_t>(j, "front_wall_index", path, cfg.calib.front_wall_index);
    cfg.front_wall_amplitude =
        get_or<double>(j, "front_wall_amplitude", path, cfg.front_wall_amplitude);
    cfg.back_wall_amplitude =
        get_or<double>(j, "back_wall_amplitude", path, cfg.back_wall_amplitude);
    cfg.pulse_frequency_hz = get_or<double>(j, "pulse_frequency_hz", path, cfg.pulse_frequency_hz);
    cfg.pulse_cycles = get_or<double>(j, "pulse_cycles", path, cfg.pulse_cycles);
    cfg.attenuation_db_per_mm =
        get_or<double>(j, "attenuation_db_per_mm", path, cfg.attenuation_db_per_mm);
    cfg.speckle_amplitude = get_or<double>(j, "speckle_amplitude", path, cfg.speckle_amplitude);
    cfg.speckle_corr_frames =
        get_or<double>(j, "speckle_corr_frames", path, cfg.speckle_corr_frames);
    cfg.speckle_corr_beams = get_or<double>(j, "speckle_corr_beams", path, cfg.speckle_corr_beams);
    cfg.speckle_corr_time = get_or<double>(j, "speckle_corr_time", path, cfg.speckle_corr_time);
    cfg.beam_gain_std = get_or<double>(j, "beam_gain_std", path, cfg.beam_gain_std);
    cfg.footprint_spread_mm =
        get_or<double>(j, "footprint_spread_mm", path, cfg.footprint_spread_mm);
    cfg.repeat_echo = get_or<bool>(j, "repeat_echo", path, cfg.repeat_echo);

    if (j.contains("steps")) {
        if (!j.at("steps").is_array()) throw ConfigError("synth.steps: expected an array");
        for (std::size_t i = 0; i < j.at("steps").size(); ++i) {
            const json& sj = j.at("steps").at(i);
            const std::string sp = "synth.steps[" + std::to_string(i) + "]";
            reject_unknown(sj, sp, {"from_frame", "to_frame", "thickness_mm"});
            StepSpec s;
            s.from_frame = get_or<int>(sj, "from_frame", sp, 0);
            s.to_frame = get_or<int>(sj, "to_frame", sp, 0);
            s.thickness_mm = get_or<double>(sj, "thickness_mm", sp, 0.0);
            cfg.steps.push_back(s);
        }
    }
    if (cfg.steps.empty())
        cfg.steps.push_back(StepSpec{0, cfg.frames, 6.0});

    if (j.contains("defects")) {
        if (!j.at("defects").is_array()) throw ConfigError("synth.defects: expected an array");
        for (std::size_t i = 0; i < j.at("defects").size(); ++i) {
            const json& dj = j.at("defects").at(i);
            const std::string dp = "synth.defects[" + std::to_string(i) + "]";
            reject_unknown(dj, dp,
                           {"id", "shape", "width_mm", "center_frame", "center_beam", "depth_mm",
                            "reflectivity", "shadowing"});
            DefectRecord d;
            d.id = get_or<int>(dj, "id", dp, static_cast<int>(i) + 1);
            const std::string shape = get_or<std::string>(dj, "shape", dp, "circle");
            if (shape == "circle") d.shape = DefectShape::circle;
            else if (shape == "square") d.shape = DefectShape::square;
            else throw ConfigError(dp + ".shape: must be 'circle' or 'square'");
            d.width_mm = get_or<double>(dj, "width_mm", dp, d.width_mm);
            d.center_frame = get_or<int>(dj, "center_frame", dp, d.center_frame);
            d.center_beam = get_or<int>(dj, "center_beam", dp, d.center_beam);
            d.depth_mm = get_or<double>(dj, "depth_mm", dp, d.depth_mm);
            d.reflectivity = get_or<double>(dj, "reflectivity", dp, d.reflectivity);
            d.shadowing = get_or<double>(dj, "shadowing", dp, d.shadowing);
            cfg.defects.push_back(d);
        }
    }
    return cfg;
}

TrainSection parse_train(const json& j, uint64_t default_seed) {
    const std::string path = "train";
    reject_unknown(j, path,
                   {"window", "stride", "time_downsample", "batch_size", "learning_rate",
                    "patience", "max_epochs", "seed", "validation_stride", "test_stride", "net"});
    TrainSection s;
    s.sampler.window = get_or<int>(j, "window", path, s.sampler.window);
    s.sampler.stride = get_or<int>(j, "stride", path, s.sampler.stride);
    s.sampler.time_downsample = get_or<int>(j, "time_downsample", path, s.sampler.time_downsample);
    s.train.batch_size = get_or<std::size_t>(j, "batch_size", path, s.train.batch_size);
    s.train.learning_rate = get_or<double>(j, "learning_rate", path, s.train.learning_rate);
    s.train.patience = get_or<int>(j, "patience", path, s.train.patience);
    s.train.max_epochs = get_or<int>(j, "max_epochs", path, s.train.max_epochs);
    s.train.seed = get_or<uint64_t>(j, "seed", path, default_seed);
    s.train.validation_stride =
        get_or<int>(j, "validation_stride", path, s.train.validation_stride);
    s.train.test_stride = get_or<int>(j, "test_stride", path, s.train.test_stride);
    if (j.contains("net")) {
        const json& nj = j.at("net");
        reject_unknown(nj, "train.net", {"heads", "channels", "fc", "leaky_slope"});
        s.net.head_kernels = get_or<std::vector<int>>(nj, "heads", "train.net", s.net.head_kernels);
        s.net.channels = get_or<std::vector<int>>(nj, "channels", "train.net", s.net.channels);
        s.net.fc_widths = get_or<std::vector<int>>(nj, "fc", "train.net", s.net.fc_widths);
        s.net.leaky_slope = get_or<double>(nj, "leaky_slope", "train.net", s.net.leaky_slope);
    }
    s.net.window = s.sampler.window;
    return s;
}

InferSection parse_infer(const json& j) {
    const std::string path = "infer";
    reject_unknown(j, path,
                   {"confidence", "padding", "sweep", "sidedness", "time_downsample",
                    "min_defect_mm"});
    InferSection s;
    s.infer.confidence = get_or<double>(j, "confidence", path, s.infer.confidence);
    const std::string padding = get_or<std::string>(j, "padding", path, "edge");
    if (padding == "edge") s.infer.padding = PadMode::edge;
    else if (padding == "reflect") s.infer.padding = PadMode::reflect;
    else if (padding == "zero") s.infer.padding = PadMode::zero;
    else throw ConfigError("infer.padding: must be edge, reflect, or zero");
    const std::string sweep = get_or<std::string>(j, "sweep", path, "both");
    if (sweep == "forward") s.infer.sweep = SweepMode::forward;
    else if (sweep == "backward") s.infer.sweep = SweepMode::backward;
    else if (sweep == "both") s.infer.sweep = SweepMode::both;
    else throw ConfigError("infer.sweep: must be forward, backward, or both");
    const std::string sided = get_or<std::string>(j, "sidedness", path, "upper");
    if (sided == "upper") s.infer.sidedness = Sidedness::upper;
    else if (sided == "two_sided") s.infer.sidedness = Sidedness::two_sided;
    else throw ConfigError("infer.sidedness: must be upper or two_sided");
    s.infer.time_downsample = get_or<int>(j, "time_downsample", path, s.infer.time_downsample);
    s.min_defect_mm = get_or<double>(j, "min_defect_mm", path, s.min_defect_mm);
    if (!(s.infer.confidence > 0.0) || !(s.infer.confidence < 1.0))
        throw ConfigError("infer.confidence: must lie strictly inside (0, 1)");
    return s;
}

EvalSection parse_eval(const json& j) {
    reject_unknown(j, "eval", {"gate_lo", "gate_hi", "confidences"});
    EvalSection s;
    s.gate_lo = get_or<uint32_t>(j, "gate_lo", "eval", s.gate_lo);
    s.gate_hi = get_or<uint32_t>(j, "gate_hi", "eval", s.gate_hi);
    s.confidences = get_or<std::vector<double>>(j, "confidences", "eval", s.confidences);
    for (double c : s.confidences)
        if (!(c > 0.0) || !(c < 1.0))
            throw ConfigError("eval.confidences: every value must lie in (0, 1)");
    return s;
}

PipelineSection parse_pipeline(const json& j) {
    reject_unknown(j, "pipeline", {"train_volumes", "sample_name"});
    PipelineSection s;
    s.train_volumes = get_or<int>(j, "train_volumes", "pipeline", s.train_volumes);
    s.sample_name = get_or<std::string>(j, "sample_name", "pipeline", s.sample_name);
    if (s.train_volumes < 1) throw ConfigError("pipeline.train_volumes: must be >= 1");
    return s;
}

} // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    reject_unknown(j, "config", {"seed", "synth", "train", "infer", "eval", "pipeline"});
    RunConfig cfg;
    cfg.seed = get_or<uint64_t>(j, "seed", "config", 0);
    if (j.contains("synth")) {
        cfg.synth = parse_synth(j.at("synth"), cfg.seed);
        cfg.has_synth = true;
    }
    cfg.train = j.contains("train") ? parse_train(j.at("train"), cfg.seed)
                                    : parse_train(json::object(), cfg.seed);
    cfg.infer = j.contains("infer") ? parse_infer(j.at("infer")) : InferSection{};
    cfg.eval = j.contains("eval") ? parse_eval(j.at("eval")) : EvalSection{};
    cfg.pipeline = j.contains("pipeline") ? parse_pipeline(j.at("pipeline")) : PipelineSection{};
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path);
}

} // namespace usseg
