#pragma once

#include "histreg/image.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace histreg {

struct CamConfig {
    int control_grid_spacing = 16;
    int match_window = 21; ///< odd block edge
    int search_radius = 10;
    double tau = 0.0;

    void validate() const;
};

struct Correspondence {
    int dx = 0;
    int dy = 0;
    double confidence = -1.0;
};

/// Integer NCC block matching of the window centred at (px, py) in `img`
/// against `neighbor`. Degenerate windows give confidence -1.
Correspondence find_correspondence(const Image& img, const Image& neighbor, int px, int py, const CamConfig& cfg);

struct CamSliceValue {
    std::optional<double> cam; ///< empty when no control point contributed
    int count = 0;
};

CamSliceValue cam_slice(const Image& prev, const Image& cur, const Image& next, const CamConfig& cfg);

struct CamResult {
    std::vector<CamSliceValue> per_slice; ///< one entry per input slice; endpoints empty
    double mean = 0;
    double stddev = 0; ///< population
    int available = 0;
};

/// Throws for fewer than three slices.
CamResult cam_stack(const std::vector<Image>& slices, const CamConfig& cfg, unsigned threads = 1);

/// CSV header `slice,cam,count`; missing values are written as `nan`.
void write_cam_csv(std::ostream& os, const CamResult& result);

} // namespace histreg
