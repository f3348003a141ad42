#pragma once

#include "usseg/morph.hpp"
#include "usseg/volume.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace usseg {

enum class DefectShape { circle, square };

// Ground-truth geometry for one artificial reflector. circle models a
// flat-bottom-hole response, square a film-insert response.
struct DefectRecord {
    int id = 0;
    DefectShape shape = DefectShape::circle;
    double width_mm = 6.0;  // diameter or side
    int center_frame = 0;
    int center_beam = 0;
    double depth_mm = 3.0;  // below the inspection surface
    double reflectivity = 0.8;  // echo amplitude as a fraction of full scale, in (0,1]
    double shadowing = 0.5;  // back-wall amplitude reduction beneath the defect, in [0,1]
};

// Frame range [from_frame, to_frame) of constant part thickness.
struct StepSpec {
    int from_frame = 0;
    int to_frame = 0;
    double thickness_mm = 6.0;
};

struct SynthConfig {
    int frames = 200;
    int time = 600;
    int beams = 32;
    AxisCalib calib{0.8, 0.8, 1e8, 3.0, 50};

    std::vector<StepSpec> steps;  // must cover [0, frames) contiguously

    double front_wall_amplitude = 1.0;
    double back_wall_amplitude = 0.9;
    double pulse_frequency_hz = 5e6;
    double pulse_cycles = 3.0;
    double attenuation_db_per_mm = 0.3;  // two-way

    double speckle_amplitude = 0.04;  // RF noise std after correlation shaping
    double speckle_corr_frames = 1.2;  // Gaussian correlation sigma, samples
    double speckle_corr_beams = 1.0;
    double speckle_corr_time = 2.0;
    double beam_gain_std = 0.05;  // lognormal sigma, fixed per beam

    // Echo amplitude decay just outside the true footprint; models the
    // imaging spread that makes thresholded indications cover at least the
    // real defect area.
    double footprint_spread_mm = 0.8;

    bool repeat_echo = true;
    std::vector<DefectRecord> defects;
    uint64_t seed = 0;
};

// Defect records plus the voxel-level truth mask (footprints over each
// defect's half-amplitude echo span, at the generator's time resolution).
struct TruthSet {
    std::vector<DefectRecord> records;
    ScanVolume mask;
};

// Deterministic function of cfg (including seed). Throws ConfigError with
// the offending key's name for invalid geometry.
std::pair<ScanVolume, TruthSet> generate(const SynthConfig& cfg);

// Rasterizes each record's true footprint into a frames x beams field
// (pixel-center-inside-shape convention).
Mask2D truth_cscan(const std::vector<DefectRecord>& records, int frames, int beams,
                   const AxisCalib& calib);

// Same rasterization with pixel value = defect id (0 background). Later
// records win where footprints overlap.
LabelField truth_label_field(const std::vector<DefectRecord>& records, int frames, int beams,
                             const AxisCalib& calib);

// True if the pixel center at (frame, beam) falls inside the record's shape.
bool footprint_contains(const DefectRecord& d, int frame, int beam, const AxisCalib& calib);

// CSV with header id,shape,width_mm,center_frame,center_beam,depth_mm,reflectivity,shadowing
void write_truth_csv(const std::vector<DefectRecord>& records, const std::string& path);
std::vector<DefectRecord> read_truth_csv(const std::string& path);

} // namespace usseg
