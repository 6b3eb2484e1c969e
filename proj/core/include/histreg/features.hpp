#pragma once

#include "histreg/image.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace histreg {

/// Dense real-valued map with the geometry of its source image.
struct FeatureMap {
    int width = 0;
    int height = 0;
    int radius = 0; ///< r_f used to build the map; 0 for plain real images
    std::vector<double> values;

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline constexpr int kDefaultEdgenessRadius = 3;

/// Offsets (dx, dy) with 0 < dx^2 + dy^2 < r_f^2, in row-major order.
std::vector<std::pair<int, int>> disk_offsets(int r_f);

/// Sum of |g(r_i) - g(r_0)| over the open disk of radius r_f around every pixel.
/// Border pixels only visit in-bounds neighbours.
FeatureMap edgeness_map(const Image& img, int r_f = kDefaultEdgenessRadius);

/// Shannon entropy of the intensity distribution, in bits.
double entropy(const Image& img);

/// Mean squared difference. With a mask, only flagged pixels count.
/// Throws on dimension/radius mismatch and "no overlap" for an empty mask.
double feature_mse(const FeatureMap& a, const FeatureMap& b,
                   std::optional<std::span<const std::uint8_t>> mask = std::nullopt);

/// Writes `map` as a 16-bit PGM after linear rescaling to [0, 65535], plus a
/// sidecar `<path>.scale` text file holding the scale factor.
void export_feature_map(const std::filesystem::path& path, const FeatureMap& map);

} // namespace histreg
