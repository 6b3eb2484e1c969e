#include "histreg/image.hpp"

#include "histreg/error.hpp"
#include "histreg/transform.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace histreg {

Image::Image(int width, int height, Intensity max_gray, Intensity fill)
    : width_(width), height_(height), max_gray_(max_gray) {
    if (width < 0 || height < 0) throw Error("invalid image size");
    if (max_gray < 0 || fill < 0 || fill > max_gray) throw Error("invalid gray range");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Image::Image(int width, int height, Intensity max_gray, std::vector<Intensity> pixels)
    : width_(width), height_(height), max_gray_(max_gray), pixels_(std::move(pixels)) {
    if (width < 0 || height < 0) throw Error("invalid image size");
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw Error("pixel count does not match dimensions");
    for (Intensity v : pixels_)
        if (v < 0 || v > max_gray_) throw Error("pixel value outside [0, max_gray]");
}

void Image::set(int x, int y, Intensity v) {
    if (v < 0) throw Error("negative intensity");
    if (v > max_gray_) max_gray_ = v;
    pixels_[index(x, y)] = v;
}

void Image::set_max_gray(Intensity max_gray) {
    for (Intensity v : pixels_)
        if (v > max_gray) throw Error("max_gray below existing pixel value");
    max_gray_ = max_gray;
}

Image to_grayscale(const RgbImage& color) {
    if (color.width <= 0 || color.height <= 0 || color.pixels.empty()) throw Error("empty image");
    std::vector<Intensity> out(color.pixels.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Rgb& c = color.pixels[i];
        // Integer weights (x1000) keep the halfway cases exact.
        const int luma1000 = 299 * c.r + 587 * c.g + 114 * c.b;
        out[i] = (luma1000 + 500) / 1000;
    }
    return Image(color.width, color.height, 255, std::move(out));
}

namespace {

constexpr double kDomainEps = 1e-9;

// Returns false when (x, y) is outside the sampling domain.
bool bilinear(const Image& img, double x, double y, double& out) {
    const int w = img.width();
    const int h = img.height();
    if (w == 0 || h == 0) return false;
    if (!(x >= -kDomainEps && y >= -kDomainEps && x <= w - 1 + kDomainEps && y <= h - 1 + kDomainEps))
        return false;
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double top = img.at(x0, y0) + fx * (img.at(x1, y0) - img.at(x0, y0));
    const double bottom = img.at(x0, y1) + fx * (img.at(x1, y1) - img.at(x0, y1));
    out = top + fy * (bottom - top);
    return true;
}

Intensity to_gray(double v, Intensity max_gray) {
    const double r = std::floor(v + 0.5);
    return static_cast<Intensity>(std::clamp(r, 0.0, static_cast<double>(max_gray)));
}

template <class PullFn>
WarpResult warp_pull(const Image& img, PullFn&& pull) {
    WarpResult r{Image(img.width(), img.height(), img.max_gray()), OverlapMask(img.size(), 0)};
    auto px = r.image.mutable_pixels();
    std::size_t i = 0;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x, ++i) {
            const Vec2 p = pull(x, y);
            double v = 0.0;
            if (bilinear(img, p.x(), p.y(), v)) {
                px[i] = to_gray(v, img.max_gray());
                r.mask[i] = 1;
            }
        }
    }
    r.image.pixel_size_um = img.pixel_size_um;
    return r;
}

} // namespace

double sample_bilinear(const Image& img, double x, double y, double fill) {
    double v = 0.0;
    return bilinear(img, x, y, v) ? v : fill;
}

WarpResult warp_with_mask(const Image& img, const Affine2D& t) {
    const Affine2D inv = invert(t);
    return warp_pull(img, [&](int x, int y) { return inv(x, y); });
}

Image warp(const Image& img, const Affine2D& t) { return warp_with_mask(img, t).image; }

WarpResult warp_with_mask(const Image& img, const LocalAffineField& field) {
    if (field.width() != img.width() || field.height() != img.height())
        throw Error("field dimensions do not match image");
    return warp_pull(img, [&](int x, int y) { return field.pull(x, y); });
}

Image warp(const Image& img, const LocalAffineField& field) { return warp_with_mask(img, field).image; }

Image downsample(const Image& img) {
    const int w = img.width();
    const int h = img.height();
    const int w2 = (w + 1) / 2;
    const int h2 = (h + 1) / 2;
    Image out(w2, h2, img.max_gray());
    auto px = out.mutable_pixels();
    for (int y = 0; y < h2; ++y) {
        const int ya = 2 * y;
        const int yb = std::min(2 * y + 1, h - 1);
        for (int x = 0; x < w2; ++x) {
            const int xa = 2 * x;
            const int xb = std::min(2 * x + 1, w - 1);
            const long sum = static_cast<long>(img.at(xa, ya)) + img.at(xb, ya) + img.at(xa, yb) + img.at(xb, yb);
            px[static_cast<std::size_t>(y) * w2 + x] = static_cast<Intensity>((sum + 2) / 4);
        }
    }
    out.pixel_size_um = img.pixel_size_um ? std::optional<double>(*img.pixel_size_um * 2.0) : std::nullopt;
    return out;
}

int max_pyramid_levels(int width, int height) {
    int levels = 0;
    while (width >= kMinPyramidSize && height >= kMinPyramidSize) {
        ++levels;
        width = (width + 1) / 2;
        height = (height + 1) / 2;
    }
    return levels;
}

Pyramid build_pyramid(const Image& img, int levels) {
    if (levels < 1) throw Error("pyramid needs at least one level");
    if (img.empty()) throw Error("empty image");
    if (levels > max_pyramid_levels(img.width(), img.height()))
        throw Error("pyramid too deep: " + std::to_string(levels) + " levels for " + std::to_string(img.width()) +
                    "x" + std::to_string(img.height()));
    Pyramid p;
    p.levels.reserve(static_cast<std::size_t>(levels));
    p.levels.push_back(img);
    for (int l = 1; l < levels; ++l) p.levels.push_back(downsample(p.levels.back()));
    return p;
}

} // namespace histreg
