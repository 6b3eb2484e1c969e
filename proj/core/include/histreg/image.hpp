#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace histreg {

class Affine2D;
class LocalAffineField;

using Intensity = std::int32_t;

/// Grayscale section image. Pixels are row-major, non-negative and bounded by
/// max_gray. Standardized images keep values above the nominal standard-scale
/// maximum, so the storage type is wider than 16 bits.
class Image {
public:
    Image() = default;
    Image(int width, int height, Intensity max_gray, Intensity fill = 0);
    Image(int width, int height, Intensity max_gray, std::vector<Intensity> pixels);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    Intensity max_gray() const noexcept { return max_gray_; }
    std::size_t size() const noexcept { return pixels_.size(); }
    bool empty() const noexcept { return pixels_.empty(); }

    Intensity at(int x, int y) const { return pixels_[index(x, y)]; }
    /// Sets a pixel, raising max_gray if the value exceeds it.
    void set(int x, int y, Intensity v);

    std::span<const Intensity> pixels() const noexcept { return pixels_; }
    /// Raw write access. Callers must keep values inside [0, max_gray].
    std::span<Intensity> mutable_pixels() noexcept { return pixels_; }

    std::optional<double> pixel_size_um;

    void set_max_gray(Intensity max_gray);

    bool operator==(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_ && max_gray_ == other.max_gray_ &&
               pixels_ == other.pixels_;
    }

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    Intensity max_gray_ = 255;
    std::vector<Intensity> pixels_;
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;
};

/// Rec.601 luma, rounded. Output max_gray is 255.
Image to_grayscale(const RgbImage& color);

/// Bilinear sample. Coordinates outside [0,w-1]x[0,h-1] return `fill`.
double sample_bilinear(const Image& img, double x, double y, double fill = 0.0);

/// Per-pixel flag set when the output pixel was sampled inside the source domain.
using OverlapMask = std::vector<std::uint8_t>;

struct WarpResult {
    Image image;
    OverlapMask mask;
};

/// Resamples `img` so that content at source point p lands at t(p).
/// Every output pixel x pulls from t^-1(x). Throws "singular transform".
Image warp(const Image& img, const Affine2D& t);
WarpResult warp_with_mask(const Image& img, const Affine2D& t);

/// Resamples with a pull field: output(x) = img(field_x(x)). The field maps
/// output coordinates to source coordinates, so no inversion is required.
Image warp(const Image& img, const LocalAffineField& field);
WarpResult warp_with_mask(const Image& img, const LocalAffineField& field);

struct Pyramid {
    std::vector<Image> levels; ///< levels[0] is the finest
    int decimation_factor = 2;
};

/// Minimum edge length the coarsest pyramid level may have.
inline constexpr int kMinPyramidSize = 16;

/// 2x2 box filter then decimation. Odd edges replicate the last row/column.
Image downsample(const Image& img);

/// Throws "pyramid too deep" when the coarsest level would drop below 16x16.
Pyramid build_pyramid(const Image& img, int levels);

/// Largest level count build_pyramid accepts for the given dimensions.
int max_pyramid_levels(int width, int height);

} // namespace histreg
