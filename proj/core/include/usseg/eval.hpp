#pragma once

#include "usseg/morph.hpp"
#include "usseg/synth.hpp"
#include "usseg/volume.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace usseg {

// Half-peak (-6 dB) indication mask: hill-climbs from the seed to the local
// peak P, thresholds the field at P/2 and returns the 8-connected component
// containing the peak.
Mask2D six_db_mask(const Field2D& cscan, int seed_row, int seed_col);

struct DetectionResult {
    int tp = 0;
    int fp = 0;
    double accuracy_pct = 0.0;     // 100*TP/(TP+FP), 0 when both are zero
    // truth defect id -> matched predicted component label (0 = undetected);
    // match is by maximal overlap, ties by centroid distance.
    std::map<int, int> match;
    LabelField pred_labels;
};

// A truth defect counts as detected when any predicted component overlaps
// its footprint; every predicted component overlapping no footprint is one
// false positive.
DetectionResult detection(const Mask2D& pred_cscan, const LabelField& truth_labels);

double detection_accuracy_pct(int tp, int fp);

struct WidthMeasure {
    double bbox_mean_mm = 0.0;   // mean of frame/beam bounding extents, count * pitch
    double equiv_diam_mm = 0.0;  // sqrt(4 A / pi) from the pixel area
    int pixel_count = 0;
};

WidthMeasure defect_width(const LabelField& labels, int label, const AxisCalib& calib);

// Centroid of a labeled component, in mm (frame axis, beam axis).
std::pair<double, double> component_centroid_mm(const LabelField& labels, int label,
                                                const AxisCalib& calib);

// Per-defect evaluation row.
struct DefectEval {
    int id = 0;
    bool detected = false;
    double true_width_mm = 0.0;
    double measured_width_mm = 0.0;  // bounding-extent convention
    double equiv_diam_mm = 0.0;
    double sizing_error_mm = 0.0;    // measured - true
    std::optional<double> in_plane_error_mm;  // vs the 6 dB reference centroid
    std::optional<double> depth_mm;
    std::optional<double> depth_error_mm;     // FBH-like (circle) defects only
};

struct StageDetection {
    std::string stage;
    int tp = 0;
    int fp = 0;
    double accuracy_pct = 0.0;
};

struct EvalReport {
    std::string sample;
    double confidence = 0.0;
    std::vector<StageDetection> stages;
    std::vector<DefectEval> defects;
    double mae_mm = 0.0;      // over detected defects
    double std_mm = 0.0;
    int n_detected = 0;
    std::map<double, std::pair<double, double>> by_width;  // width -> (mae, std)
};

struct EvalConfig {
    uint32_t gate_lo = 0;  // time gate on the (downsampled) mask volume
    uint32_t gate_hi = 0;  // 0 means n_time
    std::string sample_name = "sample";
    double confidence = 0.0;
};

// Full per-sample evaluation: detection per stage, sizing, and localization
// on the final-stage mask. env_vol must share the mask's time resolution.
EvalReport evaluate(const std::map<std::string, const ScanVolume*>& stage_masks,
                    const std::string& final_stage, const ScanVolume& env_vol,
                    const std::vector<DefectRecord>& truth, const EvalConfig& cfg);

// Mean signed oversize (measured - true) over detected defects.
double calibrate_offset(const EvalReport& calibration);
// MAE after subtracting the offset from every detected width.
double apply_offset_mae(const EvalReport& report, double offset_mm);

void write_report_json(const EvalReport& report, const std::string& path);
// Wide CSV mirroring the sizing table layout: one row per (sample, width
// group), one MAE column per confidence, plus mean/std footer rows.
void write_sizing_csv(const std::vector<EvalReport>& reports, const std::string& path);
// Long CSV of per-stage detection results across thresholds.
void write_detection_csv(const std::vector<EvalReport>& reports, const std::string& path);

} // namespace usseg
