#include "usseg/synth.hpp"

#include "usseg/error.hpp"
#include "usseg/parallel.hpp"
#include "usseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace usseg {

namespace {

constexpr uint64_t kStreamSpeckle = 0x5350434bULL;  // "SPCK"
constexpr uint64_t kStreamGain = 0x4741494eULL;     // "GAIN"

double attenuation_factor(double depth_mm, double db_per_mm) {
    return std::pow(10.0, -db_per_mm * 2.0 * depth_mm / 20.0);
}

// Gaussian-windowed sinusoid centered at dt = 0, unit peak.
struct ToneBurst {
    double carrier;  // radians per sample
    double sigma;    // samples
    double half_support;

    ToneBurst(double pulse_frequency_hz, double pulse_cycles, double sample_rate_hz) {
        const double samples_per_cycle = sample_rate_hz / pulse_frequency_hz;
        carrier = 2.0 * 3.14159265358979323846 / samples_per_cycle;
        sigma = pulse_cycles * samples_per_cycle / 6.0;
        half_support = 4.0 * sigma;
    }
    double at(double dt) const {
        if (std::abs(dt) > half_support) return 0.0;
        return std::exp(-dt * dt / (2.0 * sigma * sigma)) * std::cos(carrier * dt);
    }
    // Half-width of the burst envelope at half maximum.
    double half_amplitude_halfwidth() const { return sigma * std::sqrt(2.0 * std::log(2.0)); }
};

void validate_config(const SynthConfig& cfg) {
    if (cfg.frames < 1 || cfg.time < 1 || cfg.beams < 1)
        throw ConfigError("synth.frames/time/beams must all be >= 1");
    if (cfg.calib.front_wall_index >= static_cast<uint32_t>(cfg.time))
        throw ConfigError("synth.front_wall_index must be < synth.time");
    if (cfg.steps.empty()) throw ConfigError("synth.steps must not be empty");
    int cursor = 0;
    for (std::size_t i = 0; i < cfg.steps.size(); ++i) {
        const StepSpec& s = cfg.steps[i];
        const std::string key = "synth.steps[" + std::to_string(i) + "]";
        if (s.from_frame != cursor)
            throw ConfigError(key + ".from_frame: steps must tile [0, frames) contiguously");
        if (s.to_frame <= s.from_frame) throw ConfigError(key + ".to_frame must exceed from_frame");
        if (!(s.thickness_mm > 0.0)) throw ConfigError(key + ".thickness_mm must be > 0");
        if (cfg.calib.time_index(s.thickness_mm) >= cfg.time - 1)
            throw ConfigError(key + ".thickness_mm: back wall falls outside the time window");
        cursor = s.to_frame;
    }
    if (cursor != cfg.frames)
        throw ConfigError("synth.steps must cover frames [0, " + std::to_string(cfg.frames) + ")");

    for (std::size_t i = 0; i < cfg.defects.size(); ++i) {
        const DefectRecord& d = cfg.defects[i];
        const std::string key = "synth.defects[" + std::to_string(i) + "]";
        if (!(d.width_mm > 0.0)) throw ConfigError(key + ".width_mm must be > 0");
        if (!(d.reflectivity > 0.0) || d.reflectivity > 1.0)
            throw ConfigError(key + ".reflectivity must be in (0, 1]");
        if (d.shadowing < 0.0 || d.shadowing > 1.0)
            throw ConfigError(key + ".shadowing must be in [0, 1]");
        if (d.center_frame < 0 || d.center_frame >= cfg.frames)
            throw ConfigError(key + ".center_frame out of range");
        if (d.center_beam < 0 || d.center_beam >= cfg.beams)
            throw ConfigError(key + ".center_beam out of range");
        double local = 0.0;
        for (const StepSpec& s : cfg.steps)
            if (d.center_frame >= s.from_frame && d.center_frame < s.to_frame)
                local = s.thickness_mm;
        if (!(d.depth_mm > 0.0) || d.depth_mm >= local)
            throw ConfigError(key + ".depth_mm must lie within the local thickness " +
                              std::to_string(local));
    }
    if (!(cfg.speckle_amplitude >= 0.0)) throw ConfigError("synth.speckle_amplitude must be >= 0");
    if (!(cfg.beam_gain_std >= 0.0)) throw ConfigError("synth.beam_gain_std must be >= 0");
}

// Separable Gaussian smoothing along one axis of a (frames, time, beams)
// block, kernel normalized to unit L2 so white-noise variance is preserved.
void smooth_axis(std::vector<double>& data, int nf, int nt, int nb, int axis, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double l2 = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        l2 += w * w;
    }
    const double norm = 1.0 / std::sqrt(l2);
    for (double& w : kernel) w *= norm;

    const int dims[3] = {nf, nt, nb};
    const std::size_t strides[3] = {static_cast<std::size_t>(nt) * nb,
                                    static_cast<std::size_t>(nb), 1};
    const int len = dims[axis];
    const std::size_t stride = strides[axis];

    // Enumerate all lines along `axis`.
    const int o1 = axis == 0 ? 1 : 0;
    const int o2 = axis == 2 ? 1 : 2;
    const std::size_t n_lines = static_cast<std::size_t>(dims[o1]) * dims[o2];
    std::vector<double> out(data.size());
    parallel_for(n_lines, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> line(static_cast<std::size_t>(len));
        for (std::size_t li = lo; li < hi; ++li) {
            const std::size_t i1 = li / dims[o2];
            const std::size_t i2 = li % dims[o2];
            const std::size_t base = i1 * strides[o1] + i2 * strides[o2];
            for (int i = 0; i < len; ++i) line[static_cast<std::size_t>(i)] = data[base + i * stride];
            for (int i = 0; i < len; ++i) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int j = i + k;
                    if (j < 0 || j >= len) continue;
                    acc += kernel[static_cast<std::size_t>(k + radius)] *
                           line[static_cast<std::size_t>(j)];
                }
                out[base + i * stride] = acc;
            }
        }
    });
    data.swap(out);
}

// Distance (mm) from a pixel center to the defect footprint boundary;
// 0 inside the footprint.
double footprint_distance_mm(const DefectRecord& d, int frame, int beam, const AxisCalib& calib) {
    const double dx = (frame - d.center_frame) * calib.scan_step_mm;
    const double dy = (beam - d.center_beam) * calib.beam_pitch_mm;
    if (d.shape == DefectShape::circle) {
        const double r = d.width_mm / 2.0;
        return std::max(0.0, std::hypot(dx, dy) - r);
    }
    const double h = d.width_mm / 2.0;
    const double ox = std::max(0.0, std::abs(dx) - h);
    const double oy = std::max(0.0, std::abs(dy) - h);
    return std::hypot(ox, oy);
}

} // namespace

bool footprint_contains(const DefectRecord& d, int frame, int beam, const AxisCalib& calib) {
    return footprint_distance_mm(d, frame, beam, calib) == 0.0;
}

std::pair<ScanVolume, TruthSet> generate(const SynthConfig& cfg) {
    validate_config(cfg);
    const int nf = cfg.frames, nt = cfg.time, nb = cfg.beams;
    const std::size_t total = static_cast<std::size_t>(nf) * nt * nb;

    // Correlated speckle: counter-seeded white noise shaped by separable
    // Gaussian smoothing (unit-L2 kernels keep the variance).
    std::vector<double> speckle(total, 0.0);
    if (cfg.speckle_amplitude > 0.0) {
        const uint64_t noise_seed = mix_seed(cfg.seed, kStreamSpeckle);
        parallel_for(total, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i)
                speckle[i] = counter_normal(noise_seed, i);
        });
        smooth_axis(speckle, nf, nt, nb, 0, cfg.speckle_corr_frames);
        smooth_axis(speckle, nf, nt, nb, 1, cfg.speckle_corr_time);
        smooth_axis(speckle, nf, nt, nb, 2, cfg.speckle_corr_beams);
        for (double& x : speckle) x *= cfg.speckle_amplitude;
    }

    std::vector<double> beam_gain(static_cast<std::size_t>(nb), 1.0);
    if (cfg.beam_gain_std > 0.0) {
        const uint64_t gain_seed = mix_seed(cfg.seed, kStreamGain);
        for (int b = 0; b < nb; ++b)
            beam_gain[static_cast<std::size_t>(b)] =
                std::exp(cfg.beam_gain_std * counter_normal(gain_seed, static_cast<uint64_t>(b)));
    }

    const ToneBurst burst(cfg.pulse_frequency_hz, cfg.pulse_cycles, cfg.calib.sample_rate_hz);

    std::vector<double> step_thickness(static_cast<std::size_t>(nf), 0.0);
    for (const StepSpec& s : cfg.steps)
        for (int f = s.from_frame; f < s.to_frame; ++f)
            step_thickness[static_cast<std::size_t>(f)] = s.thickness_mm;

    ScanVolume vol(static_cast<uint32_t>(nf), static_cast<uint32_t>(nt),
                   static_cast<uint32_t>(nb), VolumeKind::rf, cfg.calib);
    ScanVolume mask(static_cast<uint32_t>(nf), static_cast<uint32_t>(nt),
                    static_cast<uint32_t>(nb), VolumeKind::mask, cfg.calib);

    const std::size_t n_traces = static_cast<std::size_t>(nf) * nb;
    parallel_for(n_traces, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> trace(static_cast<std::size_t>(nt));
        for (std::size_t ti = lo; ti < hi; ++ti) {
            const int f = static_cast<int>(ti / nb);
            const int b = static_cast<int>(ti % nb);
            const double thickness = step_thickness[static_cast<std::size_t>(f)];
            const double t_front = static_cast<double>(cfg.calib.front_wall_index);
            const double t_back = cfg.calib.time_index(thickness);

            double back_amp =
                cfg.back_wall_amplitude * attenuation_factor(thickness, cfg.attenuation_db_per_mm);
            for (const DefectRecord& d : cfg.defects)
                if (footprint_contains(d, f, b, cfg.calib)) back_amp *= 1.0 - d.shadowing;

            for (int t = 0; t < nt; ++t) {
                double s = cfg.front_wall_amplitude * burst.at(t - t_front);
                s += back_amp * burst.at(t - t_back);
                trace[static_cast<std::size_t>(t)] = s;
            }
            for (const DefectRecord& d : cfg.defects) {
                const double dist = footprint_distance_mm(d, f, b, cfg.calib);
                double w = 1.0;
                if (dist > 0.0) {
                    if (cfg.footprint_spread_mm <= 0.0) continue;
                    w = std::exp(-dist * dist /
                                 (2.0 * cfg.footprint_spread_mm * cfg.footprint_spread_mm));
                    if (w < 1e-4) continue;
                }
                const double t_d = cfg.calib.time_index(d.depth_mm);
                const double amp = d.reflectivity *
                                   attenuation_factor(d.depth_mm, cfg.attenuation_db_per_mm) * w;
                for (int t = 0; t < nt; ++t) trace[static_cast<std::size_t>(t)] += amp * burst.at(t - t_d);
                if (cfg.repeat_echo) {
                    const double t_rep = t_front + 2.0 * (t_d - t_front);
                    if (t_rep < nt + burst.half_support)
                        for (int t = 0; t < nt; ++t)
                            trace[static_cast<std::size_t>(t)] += 0.5 * amp * burst.at(t - t_rep);
                }
            }
            const double gain = beam_gain[static_cast<std::size_t>(b)];
            for (int t = 0; t < nt; ++t) {
                const std::size_t idx = vol.index(static_cast<uint32_t>(f), static_cast<uint32_t>(t),
                                                  static_cast<uint32_t>(b));
                vol.data()[idx] =
                    static_cast<float>(gain * (trace[static_cast<std::size_t>(t)] + speckle[idx]));
            }
        }
    });

    // Voxel truth: footprint pixels over the echo's half-amplitude span.
    const double half_span = burst.half_amplitude_halfwidth();
    for (const DefectRecord& d : cfg.defects) {
        const double t_d = cfg.calib.time_index(d.depth_mm);
        const int t_lo = std::max(0, static_cast<int>(std::ceil(t_d - half_span)));
        const int t_hi = std::min(nt - 1, static_cast<int>(std::floor(t_d + half_span)));
        for (int f = 0; f < nf; ++f)
            for (int b = 0; b < nb; ++b) {
                if (!footprint_contains(d, f, b, cfg.calib)) continue;
                for (int t = t_lo; t <= t_hi; ++t)
                    mask.at(static_cast<uint32_t>(f), static_cast<uint32_t>(t),
                            static_cast<uint32_t>(b)) = 1.0f;
            }
    }

    TruthSet truth{cfg.defects, std::move(mask)};
    return {std::move(vol), std::move(truth)};
}

Mask2D truth_cscan(const std::vector<DefectRecord>& records, int frames, int beams,
                   const AxisCalib& calib) {
    Mask2D field(frames, beams);
    for (const DefectRecord& d : records)
        for (int f = 0; f < frames; ++f)
            for (int b = 0; b < beams; ++b)
                if (footprint_contains(d, f, b, calib)) field.at(f, b) = 1;
    return field;
}

LabelField truth_label_field(const std::vector<DefectRecord>& records, int frames, int beams,
                             const AxisCalib& calib) {
    LabelField field;
    field.rows = frames;
    field.cols = beams;
    field.v.assign(static_cast<std::size_t>(frames) * beams, 0);
    int max_id = 0;
    for (const DefectRecord& d : records) {
        max_id = std::max(max_id, d.id);
        for (int f = 0; f < frames; ++f)
            for (int b = 0; b < beams; ++b)
                if (footprint_contains(d, f, b, calib)) field.at(f, b) = d.id;
    }
    field.n_labels = max_id;
    return field;
}

void write_truth_csv(const std::vector<DefectRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_truth_csv: cannot open " + path);
    out << "id,shape,width_mm,center_frame,center_beam,depth_mm,reflectivity,shadowing\n";
    char line[256];
    for (const DefectRecord& d : records) {
        std::snprintf(line, sizeof line, "%d,%s,%.6g,%d,%d,%.6g,%.6g,%.6g\n", d.id,
                      d.shape == DefectShape::circle ? "circle" : "square", d.width_mm,
                      d.center_frame, d.center_beam, d.depth_mm, d.reflectivity, d.shadowing);
        out << line;
    }
    if (!out) throw std::runtime_error("write_truth_csv: I/O failure writing " + path);
}

std::vector<DefectRecord> read_truth_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_truth_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line.rfind("id,shape,width_mm,center_frame,center_beam,depth_mm", 0) != 0)
        throw FormatError(path + ": missing truth CSV header");
    std::vector<DefectRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        DefectRecord d;
        auto next = [&](const char* field) {
            if (!std::getline(ss, tok, ','))
                throw FormatError(path + ": truncated row, missing " + std::string(field));
            return tok;
        };
        auto as_int = [&](const char* field) {
            try {
                return std::stoi(next(field));
            } catch (const std::logic_error&) {
                throw FormatError(path + ": bad integer in column " + std::string(field));
            }
        };
        auto as_double = [&](const char* field) {
            try {
                return std::stod(next(field));
            } catch (const std::logic_error&) {
                throw FormatError(path + ": bad number in column " + std::string(field));
            }
        };
        d.id = as_int("id");
        const std::string shape = next("shape");
        if (shape == "circle") d.shape = DefectShape::circle;
        else if (shape == "square") d.shape = DefectShape::square;
        else throw FormatError(path + ": unknown shape '" + shape + "'");
        d.width_mm = as_double("width_mm");
        d.center_frame = as_int("center_frame");
        d.center_beam = as_int("center_beam");
        d.depth_mm = as_double("depth_mm");
        d.reflectivity = as_double("reflectivity");
        d.shadowing = as_double("shadowing");
        records.push_back(d);
    }
    return records;
}

} // namespace usseg
