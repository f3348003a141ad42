#include "usseg/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace usseg {

Mask2D six_db_mask(const Field2D& cscan, int seed_row, int seed_col) {
    if (seed_row < 0 || seed_row >= cscan.rows || seed_col < 0 || seed_col >= cscan.cols)
        throw std::invalid_argument("six_db_mask: seed out of range");
    if (!(cscan.at(seed_row, seed_col) > 0.0))
        throw std::invalid_argument("six_db_mask: seed lies on zero background");

    static constexpr int dr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static constexpr int dc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

    // Greedy hill climb to the local peak reachable from the seed.
    int pr = seed_row, pc = seed_col;
    for (;;) {
        int br = pr, bc = pc;
        double best = cscan.at(pr, pc);
        for (int d = 0; d < 8; ++d) {
            const int nr = pr + dr[d], nc = pc + dc[d];
            if (nr < 0 || nr >= cscan.rows || nc < 0 || nc >= cscan.cols) continue;
            if (cscan.at(nr, nc) > best) {
                best = cscan.at(nr, nc);
                br = nr;
                bc = nc;
            }
        }
        if (br == pr && bc == pc) break;
        pr = br;
        pc = bc;
    }

    const double threshold = cscan.at(pr, pc) / 2.0;
    Mask2D mask(cscan.rows, cscan.cols);
    std::vector<std::pair<int, int>> stack{{pr, pc}};
    mask.at(pr, pc) = 1;
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        for (int d = 0; d < 8; ++d) {
            const int nr = r + dr[d], nc = c + dc[d];
            if (nr < 0 || nr >= cscan.rows || nc < 0 || nc >= cscan.cols) continue;
            if (mask.at(nr, nc) || cscan.at(nr, nc) < threshold) continue;
            mask.at(nr, nc) = 1;
            stack.emplace_back(nr, nc);
        }
    }
    return mask;
}

double detection_accuracy_pct(int tp, int fp) {
    if (tp + fp == 0) return 0.0;
    return 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
}

DetectionResult detection(const Mask2D& pred_cscan, const LabelField& truth_labels) {
    if (pred_cscan.rows != truth_labels.rows || pred_cscan.cols != truth_labels.cols)
        throw std::invalid_argument("detection: field dimension mismatch");

    DetectionResult result;
    result.pred_labels = label_components(pred_cscan, Connectivity::eight);
    const LabelField& pred = result.pred_labels;

    // overlap[pred label][truth id] = pixel count
    std::map<int, std::map<int, int>> overlap;
    std::set<int> truth_ids;
    for (int r = 0; r < pred.rows; ++r)
        for (int c = 0; c < pred.cols; ++c) {
            const int t = truth_labels.at(r, c);
            if (t != 0) truth_ids.insert(t);
            const int p = pred.at(r, c);
            if (p != 0 && t != 0) ++overlap[p][t];
        }

    std::set<int> overlapping_pred;
    for (const auto& [p, per_truth] : overlap) overlapping_pred.insert(p);
    result.fp = pred.n_labels - static_cast<int>(overlapping_pred.size());

    // Centroids for tie-breaking.
    auto centroid = [](const LabelField& labels, int label) {
        double r_acc = 0.0, c_acc = 0.0;
        int n = 0;
        for (int r = 0; r < labels.rows; ++r)
            for (int c = 0; c < labels.cols; ++c)
                if (labels.at(r, c) == label) {
                    r_acc += r;
                    c_acc += c;
                    ++n;
                }
        return std::pair<double, double>{r_acc / n, c_acc / n};
    };

    for (int t : truth_ids) {
        int best_label = 0, best_overlap = 0;
        double best_dist = 0.0;
        for (const auto& [p, per_truth] : overlap) {
            auto it = per_truth.find(t);
            if (it == per_truth.end()) continue;
            const int ov = it->second;
            if (ov < best_overlap) continue;
            if (ov > best_overlap) {
                best_overlap = ov;
                best_label = p;
                best_dist = -1.0;
                continue;
            }
            // tie: prefer the component whose centroid is closer
            if (best_dist < 0.0) {
                auto [tr, tc] = centroid(truth_labels, t);
                auto [br, bc] = centroid(result.pred_labels, best_label);
                best_dist = std::hypot(tr - br, tc - bc);
            }
            auto [tr, tc] = centroid(truth_labels, t);
            auto [nr, nc] = centroid(result.pred_labels, p);
            const double dist = std::hypot(tr - nr, tc - nc);
            if (dist < best_dist) {
                best_dist = dist;
                best_label = p;
            }
        }
        result.match[t] = best_label;
        if (best_label != 0) ++result.tp;
    }
    result.accuracy_pct = detection_accuracy_pct(result.tp, result.fp);
    return result;
}

WidthMeasure defect_width(const LabelField& labels, int label, const AxisCalib& calib) {
    int r_lo = labels.rows, r_hi = -1, c_lo = labels.cols, c_hi = -1, count = 0;
    for (int r = 0; r < labels.rows; ++r)
        for (int c = 0; c < labels.cols; ++c)
            if (labels.at(r, c) == label) {
                r_lo = std::min(r_lo, r);
                r_hi = std::max(r_hi, r);
                c_lo = std::min(c_lo, c);
                c_hi = std::max(c_hi, c);
                ++count;
            }
    if (count == 0) throw std::invalid_argument("defect_width: empty component");
    WidthMeasure m;
    m.pixel_count = count;
    const double frame_extent = (r_hi - r_lo + 1) * calib.scan_step_mm;
    const double beam_extent = (c_hi - c_lo + 1) * calib.beam_pitch_mm;
    m.bbox_mean_mm = (frame_extent + beam_extent) / 2.0;
    const double area = count * calib.scan_step_mm * calib.beam_pitch_mm;
    m.equiv_diam_mm = std::sqrt(4.0 * area / 3.14159265358979323846);
    return m;
}

std::pair<double, double> component_centroid_mm(const LabelField& labels, int label,
                                                const AxisCalib& calib) {
    double r_acc = 0.0, c_acc = 0.0;
    int n = 0;
    for (int r = 0; r < labels.rows; ++r)
        for (int c = 0; c < labels.cols; ++c)
            if (labels.at(r, c) == label) {
                r_acc += r;
                c_acc += c;
                ++n;
            }
    if (n == 0) throw std::invalid_argument("component_centroid_mm: empty component");
    return {r_acc / n * calib.scan_step_mm, c_acc / n * calib.beam_pitch_mm};
}

namespace {

std::pair<double, double> mask_centroid_mm(const Mask2D& mask, const AxisCalib& calib) {
    double r_acc = 0.0, c_acc = 0.0;
    int n = 0;
    for (int r = 0; r < mask.rows; ++r)
        for (int c = 0; c < mask.cols; ++c)
            if (mask.at(r, c)) {
                r_acc += r;
                c_acc += c;
                ++n;
            }
    if (n == 0) throw std::invalid_argument("mask_centroid_mm: empty mask");
    return {r_acc / n * calib.scan_step_mm, c_acc / n * calib.beam_pitch_mm};
}

} // namespace

EvalReport evaluate(const std::map<std::string, const ScanVolume*>& stage_masks,
                    const std::string& final_stage, const ScanVolume& env_vol,
                    const std::vector<DefectRecord>& truth, const EvalConfig& cfg) {
    auto final_it = stage_masks.find(final_stage);
    if (final_it == stage_masks.end())
        throw std::invalid_argument("evaluate: final stage '" + final_stage + "' not provided");
    const ScanVolume& final_mask = *final_it->second;
    if (env_vol.n_frames() != final_mask.n_frames() || env_vol.n_time() != final_mask.n_time() ||
        env_vol.n_beams() != final_mask.n_beams())
        throw std::invalid_argument("evaluate: volume and mask dimensions differ");

    const uint32_t gate_lo = cfg.gate_lo;
    const uint32_t gate_hi = cfg.gate_hi == 0 ? final_mask.n_time() : cfg.gate_hi;

    const AxisCalib& calib = final_mask.calib();
    const LabelField truth_labels = truth_label_field(
        truth, static_cast<int>(final_mask.n_frames()), static_cast<int>(final_mask.n_beams()),
        calib);

    EvalReport report;
    report.sample = cfg.sample_name;
    report.confidence = cfg.confidence;

    // Per-stage detection. The canonical pipeline order is kept first.
    static const char* kOrder[] = {"forward", "backward", "combined", "final"};
    std::vector<std::string> ordered;
    for (const char* s : kOrder)
        if (stage_masks.count(s)) ordered.push_back(s);
    for (const auto& [name, vol] : stage_masks)
        if (std::find(ordered.begin(), ordered.end(), name) == ordered.end())
            ordered.push_back(name);

    DetectionResult final_det;
    for (const std::string& name : ordered) {
        const Mask2D cscan = cscan_mask(*stage_masks.at(name), gate_lo, gate_hi);
        DetectionResult det = detection(cscan, truth_labels);
        report.stages.push_back(StageDetection{name, det.tp, det.fp, det.accuracy_pct});
        if (name == final_stage) final_det = std::move(det);
    }

    const Field2D amp_cscan = cscan_amplitude(env_vol, gate_lo, gate_hi);

    double err_acc = 0.0, err_sq = 0.0;
    std::map<double, std::vector<double>> width_groups;
    for (const DefectRecord& d : truth) {
        DefectEval ev;
        ev.id = d.id;
        ev.true_width_mm = d.width_mm;
        const int label = final_det.match.count(d.id) ? final_det.match.at(d.id) : 0;
        ev.detected = label != 0;
        if (ev.detected) {
            const WidthMeasure wm = defect_width(final_det.pred_labels, label, calib);
            ev.measured_width_mm = wm.bbox_mean_mm;
            ev.equiv_diam_mm = wm.equiv_diam_mm;
            ev.sizing_error_mm = wm.bbox_mean_mm - d.width_mm;
            err_acc += std::abs(ev.sizing_error_mm);
            err_sq += ev.sizing_error_mm * ev.sizing_error_mm;
            width_groups[d.width_mm].push_back(std::abs(ev.sizing_error_mm));
            ++report.n_detected;

            // In-plane reference: 6 dB mask seeded at the true center.
            const bool center_in_field = d.center_frame >= 0 && d.center_frame < amp_cscan.rows &&
                                         d.center_beam >= 0 && d.center_beam < amp_cscan.cols;
            if (center_in_field && amp_cscan.at(d.center_frame, d.center_beam) > 0.0) {
                const Mask2D ref = six_db_mask(amp_cscan, d.center_frame, d.center_beam);
                auto [pr, pc] = component_centroid_mm(final_det.pred_labels, label, calib);
                auto [rr, rc] = mask_centroid_mm(ref, calib);
                ev.in_plane_error_mm = std::hypot(pr - rr, pc - rc);
            }

            // Depth through the component centroid column.
            auto [cr_mm, cc_mm] = component_centroid_mm(final_det.pred_labels, label, calib);
            const uint32_t cf = static_cast<uint32_t>(std::lround(cr_mm / calib.scan_step_mm));
            const uint32_t cb = static_cast<uint32_t>(std::lround(cc_mm / calib.beam_pitch_mm));
            double depth_acc = 0.0;
            int depth_n = 0;
            for (uint32_t t = gate_lo; t < gate_hi; ++t)
                if (final_mask.at(cf, t, cb) != 0.0f) {
                    depth_acc += calib.depth_mm(static_cast<double>(t));
                    ++depth_n;
                }
            if (depth_n > 0) {
                ev.depth_mm = depth_acc / depth_n;
                if (d.shape == DefectShape::circle)
                    ev.depth_error_mm = *ev.depth_mm - d.depth_mm;
            }
        }
        report.defects.push_back(std::move(ev));
    }

    if (report.n_detected > 0) {
        report.mae_mm = err_acc / report.n_detected;
        const double mean_sq = err_sq / report.n_detected;
        report.std_mm = std::sqrt(std::max(0.0, mean_sq - report.mae_mm * report.mae_mm));
        for (const auto& [w, errs] : width_groups) {
            double m = 0.0;
            for (double e : errs) m += e;
            m /= static_cast<double>(errs.size());
            double v = 0.0;
            for (double e : errs) v += (e - m) * (e - m);
            report.by_width[w] = {m, std::sqrt(v / static_cast<double>(errs.size()))};
        }
    }
    return report;
}

double calibrate_offset(const EvalReport& calibration) {
    double acc = 0.0;
    int n = 0;
    for (const DefectEval& d : calibration.defects)
        if (d.detected) {
            acc += d.sizing_error_mm;
            ++n;
        }
    if (n == 0) throw std::invalid_argument("calibrate_offset: no detected defects");
    return acc / n;
}

double apply_offset_mae(const EvalReport& report, double offset_mm) {
    double acc = 0.0;
    int n = 0;
    for (const DefectEval& d : report.defects)
        if (d.detected) {
            acc += std::abs(d.sizing_error_mm - offset_mm);
            ++n;
        }
    if (n == 0) throw std::invalid_argument("apply_offset_mae: no detected defects");
    return acc / n;
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["sample"] = report.sample;
    j["confidence"] = report.confidence;
    j["stages"] = nlohmann::json::array();
    for (const StageDetection& s : report.stages)
        j["stages"].push_back({{"stage", s.stage},
                               {"tp", s.tp},
                               {"fp", s.fp},
                               {"accuracy_pct", s.accuracy_pct}});
    j["defects"] = nlohmann::json::array();
    for (const DefectEval& d : report.defects) {
        nlohmann::json dj{{"id", d.id},
                          {"detected", d.detected},
                          {"true_width_mm", d.true_width_mm}};
        if (d.detected) {
            dj["measured_width_mm"] = d.measured_width_mm;
            dj["equivalent_diameter_mm"] = d.equiv_diam_mm;
            dj["sizing_error_mm"] = d.sizing_error_mm;
            if (d.in_plane_error_mm) dj["in_plane_error_mm"] = *d.in_plane_error_mm;
            if (d.depth_mm) dj["depth_mm"] = *d.depth_mm;
            if (d.depth_error_mm) dj["depth_error_mm"] = *d.depth_error_mm;
        }
        j["defects"].push_back(std::move(dj));
    }
    j["aggregates"] = {{"n_detected", report.n_detected},
                       {"mae_mm", report.mae_mm},
                       {"std_mm", report.std_mm}};
    j["aggregates"]["by_width"] = nlohmann::json::array();
    for (const auto& [w, ms] : report.by_width)
        j["aggregates"]["by_width"].push_back(
            {{"width_mm", w}, {"mae_mm", ms.first}, {"std_mm", ms.second}});

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_report_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

void write_sizing_csv(const std::vector<EvalReport>& reports, const std::string& path) {
    std::set<double> confidences;
    std::set<std::pair<std::string, double>> groups;
    for (const EvalReport& r : reports) {
        confidences.insert(r.confidence);
        for (const auto& [w, ms] : r.by_width) groups.insert({r.sample, w});
    }
    auto lookup = [&](const std::string& sample, double width,
                      double conf) -> std::optional<double> {
        for (const EvalReport& r : reports) {
            if (r.sample != sample || r.confidence != conf) continue;
            auto it = r.by_width.find(width);
            if (it != r.by_width.end()) return it->second.first;
        }
        return std::nullopt;
    };

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_sizing_csv: cannot open " + path);
    out.precision(9);
    out << "sample,width_mm";
    for (double c : confidences) out << ",mae_at_" << c;
    out << "\n";
    for (const auto& [sample, width] : groups) {
        out << sample << "," << width;
        for (double c : confidences) {
            out << ",";
            if (auto v = lookup(sample, width, c)) out << *v;
        }
        out << "\n";
    }
    // Mean and std across all detected defects per confidence.
    out << "mean,";
    for (double c : confidences) {
        double acc = 0.0;
        int n = 0;
        for (const EvalReport& r : reports)
            if (r.confidence == c)
                for (const DefectEval& d : r.defects)
                    if (d.detected) {
                        acc += std::abs(d.sizing_error_mm);
                        ++n;
                    }
        out << "," << (n > 0 ? acc / n : 0.0);
    }
    out << "\nstd,";
    for (double c : confidences) {
        std::vector<double> errs;
        for (const EvalReport& r : reports)
            if (r.confidence == c)
                for (const DefectEval& d : r.defects)
                    if (d.detected) errs.push_back(std::abs(d.sizing_error_mm));
        double m = 0.0;
        for (double e : errs) m += e;
        if (!errs.empty()) m /= static_cast<double>(errs.size());
        double v = 0.0;
        for (double e : errs) v += (e - m) * (e - m);
        out << "," << (errs.empty() ? 0.0 : std::sqrt(v / static_cast<double>(errs.size())));
    }
    out << "\n";
}

void write_detection_csv(const std::vector<EvalReport>& reports, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_detection_csv: cannot open " + path);
    out.precision(9);
    out << "confidence,sample,stage,accuracy_pct,false_positives\n";
    for (const EvalReport& r : reports)
        for (const StageDetection& s : r.stages)
            out << r.confidence << "," << r.sample << "," << s.stage << "," << s.accuracy_pct
                << "," << s.fp << "\n";
}

} // namespace usseg
