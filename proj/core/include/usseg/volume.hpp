#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace usseg {

// Axis calibration for a phased-array scan volume.
//   frame axis: mechanical scan direction, scan_step_mm per frame
//   time axis:  depth, sample_rate_hz samples per second
//   beam axis:  array elements / sub-apertures, beam_pitch_mm per beam
struct AxisCalib {
    double scan_step_mm = 0.8;
    double beam_pitch_mm = 0.8;
    double sample_rate_hz = 1e8;
    double velocity_mm_per_us = 3.0;
    uint32_t front_wall_index = 0;

    // Two-way depth below the inspection surface for a time sample.
    double depth_mm(double t) const {
        const double dt_us = (t - static_cast<double>(front_wall_index)) * 1e6 / sample_rate_hz;
        return dt_us * velocity_mm_per_us / 2.0;
    }
    // Time sample index for a two-way depth.
    double time_index(double depth_mm_value) const {
        return static_cast<double>(front_wall_index) +
               depth_mm_value * 2.0 / velocity_mm_per_us * sample_rate_hz * 1e-6;
    }
};

enum class VolumeKind : uint32_t { rf = 0, envelope = 1, mask = 2 };

// 3D amplitude block in frame-major, then time, then beam order.
class ScanVolume {
public:
    ScanVolume(uint32_t n_frames, uint32_t n_time, uint32_t n_beams, VolumeKind kind,
               AxisCalib calib);
    static ScanVolume from_data(uint32_t n_frames, uint32_t n_time, uint32_t n_beams,
                                VolumeKind kind, AxisCalib calib, std::vector<float> data);

    uint32_t n_frames() const { return n_frames_; }
    uint32_t n_time() const { return n_time_; }
    uint32_t n_beams() const { return n_beams_; }
    VolumeKind kind() const { return kind_; }
    const AxisCalib& calib() const { return calib_; }
    AxisCalib& calib() { return calib_; }
    void set_kind(VolumeKind k) { kind_ = k; }

    std::size_t size() const { return data_.size(); }
    std::size_t index(uint32_t f, uint32_t t, uint32_t b) const {
        return (static_cast<std::size_t>(f) * n_time_ + t) * n_beams_ + b;
    }
    float at(uint32_t f, uint32_t t, uint32_t b) const { return data_[index(f, t, b)]; }
    float& at(uint32_t f, uint32_t t, uint32_t b) { return data_[index(f, t, b)]; }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    // Enforces dimension and kind invariants; throws FormatError on violation.
    void validate() const;

private:
    uint32_t n_frames_, n_time_, n_beams_;
    VolumeKind kind_;
    AxisCalib calib_;
    std::vector<float> data_;
};

// Plan-view (frames x beams) or sectional (time x beams) scalar field.
struct Field2D {
    int rows = 0, cols = 0;
    std::vector<double> v;
    Field2D() = default;
    Field2D(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
};

struct Mask2D {
    int rows = 0, cols = 0;
    std::vector<uint8_t> v;
    Mask2D() = default;
    Mask2D(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0) {}
    uint8_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    uint8_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t count() const;
};

// --- USV container -------------------------------------------------------
// Bit-exact little-endian layout:
//   "USVF" | u32 version=1 | u32 kind | u32 n_frames | u32 n_time | u32 n_beams
//   | f32 scan_step_mm | f32 beam_pitch_mm | f32 sample_rate_hz
//   | f32 velocity_mm_per_us | u32 front_wall_index
//   | n_frames*n_time*n_beams f32 payload (frame-major, time, beam)
inline constexpr std::size_t kUsvHeaderBytes = 44;

ScanVolume read_volume(const std::string& path);
void write_volume(const ScanVolume& vol, const std::string& path);

// --- Signal ops ----------------------------------------------------------

// Analytic-signal envelope per (frame, beam) time-trace: |x + i H(x)| with
// the Hilbert transform realized through an FFT frequency mask.
ScanVolume envelope(const ScanVolume& vol);

// Keeps time samples 0, factor, 2*factor, ...; rescales sample_rate_hz and
// front_wall_index accordingly.
ScanVolume downsample_time(const ScanVolume& vol, uint32_t factor);

// Max (amplitude) / OR (mask) projection over the half-open time gate.
Field2D cscan_amplitude(const ScanVolume& vol, uint32_t t_lo, uint32_t t_hi);
Mask2D cscan_mask(const ScanVolume& vol, uint32_t t_lo, uint32_t t_hi);

enum class PadMode { edge, reflect, zero };

// Prepends `width` frames along the scan axis. reflect mirrors frames
// 1..width (frame 0 itself is not repeated).
ScanVolume pad_scan_axis(const ScanVolume& vol, uint32_t width, PadMode mode);

// Frame-axis reversal (used for backward sweeps).
ScanVolume reverse_frames(const ScanVolume& vol);

// One B-scan (time x beams) slice at a frame.
Field2D bscan(const ScanVolume& vol, uint32_t frame);

// Binary PGM (P5, maxval 255), value = round(255*clamp(v/vmax, 0, 1)) where
// vmax is the field maximum (all-zero image when the maximum is <= 0).
void write_pgm(const Field2D& field, const std::string& path);

} // namespace usseg
