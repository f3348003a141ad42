#include "usseg/morph.hpp"

#include "usseg/parallel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace usseg {

LabelField label_components(const Mask2D& field, Connectivity conn) {
    LabelField labels;
    labels.rows = field.rows;
    labels.cols = field.cols;
    labels.v.assign(field.v.size(), 0);

    static constexpr int dr8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static constexpr int dc8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static constexpr int dr4[4] = {-1, 0, 0, 1};
    static constexpr int dc4[4] = {0, -1, 1, 0};
    const int n_dirs = conn == Connectivity::eight ? 8 : 4;
    const int* dr = conn == Connectivity::eight ? dr8 : dr4;
    const int* dc = conn == Connectivity::eight ? dc8 : dc4;

    std::vector<std::pair<int, int>> stack;
    int next = 0;
    for (int r = 0; r < field.rows; ++r) {
        for (int c = 0; c < field.cols; ++c) {
            if (!field.at(r, c) || labels.at(r, c) != 0) continue;
            ++next;
            labels.at(r, c) = next;
            stack.emplace_back(r, c);
            while (!stack.empty()) {
                auto [cr, cc] = stack.back();
                stack.pop_back();
                for (int d = 0; d < n_dirs; ++d) {
                    const int nr = cr + dr[d];
                    const int nc = cc + dc[d];
                    if (nr < 0 || nr >= field.rows || nc < 0 || nc >= field.cols) continue;
                    if (!field.at(nr, nc) || labels.at(nr, nc) != 0) continue;
                    labels.at(nr, nc) = next;
                    stack.emplace_back(nr, nc);
                }
            }
        }
    }
    labels.n_labels = next;
    return labels;
}

ScanVolume area_opening(const ScanVolume& vol, int filter, Connectivity conn) {
    if (vol.kind() != VolumeKind::mask)
        throw std::invalid_argument("area_opening: input must be a mask volume");
    if (filter < 1) throw std::invalid_argument("area_opening: filter must be >= 1");

    ScanVolume out = vol;
    parallel_for(vol.n_time(), [&](std::size_t t_lo, std::size_t t_hi) {
        for (std::size_t t = t_lo; t < t_hi; ++t) {
            Mask2D plane(static_cast<int>(vol.n_frames()), static_cast<int>(vol.n_beams()));
            for (uint32_t f = 0; f < vol.n_frames(); ++f)
                for (uint32_t b = 0; b < vol.n_beams(); ++b)
                    plane.at(static_cast<int>(f), static_cast<int>(b)) =
                        vol.at(f, static_cast<uint32_t>(t), b) != 0.0f;
            LabelField labels = label_components(plane, conn);
            std::vector<int> sizes(static_cast<std::size_t>(labels.n_labels) + 1, 0);
            for (int32_t l : labels.v) ++sizes[static_cast<std::size_t>(l)];
            for (uint32_t f = 0; f < vol.n_frames(); ++f)
                for (uint32_t b = 0; b < vol.n_beams(); ++b) {
                    const int32_t l = labels.at(static_cast<int>(f), static_cast<int>(b));
                    if (l != 0 && sizes[static_cast<std::size_t>(l)] < filter)
                        out.at(f, static_cast<uint32_t>(t), b) = 0.0f;
                }
        }
    });
    return out;
}

int filter_from_min_size(double min_defect_mm, const AxisCalib& calib) {
    if (!(min_defect_mm > 0.0))
        throw std::invalid_argument("filter_from_min_size: min_defect_mm must be > 0");
    if (!(calib.scan_step_mm > 0.0) || !(calib.beam_pitch_mm > 0.0))
        throw std::invalid_argument("filter_from_min_size: calibration pitches must be > 0");
    const double r = min_defect_mm / 2.0;
    const double area = std::numbers::pi * r * r;
    return static_cast<int>(std::floor(area / (calib.scan_step_mm * calib.beam_pitch_mm)));
}

} // namespace usseg
