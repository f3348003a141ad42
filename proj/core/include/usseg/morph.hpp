#pragma once

#include "usseg/volume.hpp"

#include <cstdint>
#include <vector>

namespace usseg {

enum class Connectivity { four = 4, eight = 8 };

// Connected-component labeling result. 0 = background, labels contiguous
// from 1 in first-encounter (row-major) order.
struct LabelField {
    int rows = 0, cols = 0;
    std::vector<int32_t> v;
    int n_labels = 0;
    int32_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    int32_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
};

LabelField label_components(const Mask2D& field, Connectivity conn);

// Removes, independently in every time plane, the connected components with
// strictly fewer than `filter` pixels (components of size >= filter survive).
ScanVolume area_opening(const ScanVolume& vol, int filter, Connectivity conn);

// Pixel-count filter excluding indications smaller than a disc of the given
// diameter: floor(pi (d/2)^2 / (scan_step * beam_pitch)).
int filter_from_min_size(double min_defect_mm, const AxisCalib& calib);

} // namespace usseg
