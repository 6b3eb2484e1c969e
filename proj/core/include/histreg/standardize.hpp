#pragma once

#include "histreg/image.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace histreg {

/// Histogram-specific landmarks of one image: m1 <= p1 < mu < p2 <= m2.
struct LandmarkSet {
    double p1 = 0;
    double p2 = 0;
    double mu = 0;
    double m1 = 0;
    double m2 = 0;
};

/// Target standard scale and the percentiles defining the intensity of interest.
struct StandardScale {
    double s1 = 1;
    double s2 = 4095;
    double mu_s = 2048;
    double pc1 = 0;
    double pc2 = 99.8;

    /// Throws Error if s1 < mu_s < s2 or 0 <= pc1 < pc2 <= 100 is violated.
    void validate() const;
    bool operator==(const StandardScale&) const = default;
};

struct Histogram {
    std::vector<std::uint64_t> counts; ///< indexed by intensity 0..max_gray
    std::uint64_t total = 0;

    static Histogram of(const Image& img);
    /// Only pixels with a nonzero mask entry are counted.
    static Histogram of(const Image& img, const std::vector<std::uint8_t>& mask);
    /// Nearest-rank percentile: smallest o with cumulative count >= ceil(pc/100 * total),
    /// rank clamped to [1, total].
    Intensity percentile(double pc) const;
};

/// Smoothing window (in occupied histogram bins) used for mode detection.
inline constexpr int kModeSmoothingWindow = 5;
/// Mode detection rebins wider histograms to about this many levels, so
/// interpolated images with every value occupied still show clean lobes.
inline constexpr int kModeBins = 256;
/// The foreground mode must lie this fraction of the dynamic range above p1.
inline constexpr double kModeOffsetFraction = 0.05;

/// Throws "degenerate histogram" for constant images and "not bimodal" when
/// no foreground peak exists between the background lobe and p2.
LandmarkSet extract_landmarks(const Image& img, const StandardScale& scale);
LandmarkSet extract_landmarks(const Histogram& hist, const StandardScale& scale);

/// Linear map from [p1, p2] onto [s1, s2].
double map_linear(double x, const LandmarkSet& lm, const StandardScale& scale);

/// Piecewise-linear mapping through (p1,s1), (mu,mu_s), (p2,s2), rounded to the
/// nearest integer (halves up). x outside [m1, m2] is clamped first.
double map_to_standard(double x, const LandmarkSet& lm, const StandardScale& scale);

/// Callback receiving non-fatal diagnostics (skipped training images, clamps).
using WarningSink = std::function<void(const std::string&)>;

/// Learns mu_s as the rounded mean of each image's mode mapped onto [s1, s2].
/// `config.mu_s` is ignored. Images failing landmark extraction are skipped.
StandardScale train_scale(const std::vector<Image>& training, const StandardScale& config,
                          const WarningSink& warn = {});

struct StandardizedImage {
    Image image;
    LandmarkSet landmarks;
    double s1_ext = 0; ///< image of m1 on the standard scale (before clipping at 0)
    double s2_ext = 0; ///< image of m2 on the standard scale
};

/// Maps each pixel through its own landmarks. Output max_gray is the extended
/// maximum s2' (at least s2); values are never clipped above.
StandardizedImage standardize_with_landmarks(const Image& img, const StandardScale& scale);
Image standardize_image(const Image& img, const StandardScale& scale);

/// Applies a fixed landmark mapping (used to re-standardize warped images
/// without re-detecting landmarks on partially filled borders).
Image apply_standard_mapping(const Image& img, const LandmarkSet& lm, const StandardScale& scale);

/// Key-value text file: a `format histreg-standard-scale/1` tag line followed by
/// `s1`, `s2`, `mu_s`, `pc1`, `pc2` entries. `#` starts a comment.
void save_scale(const std::filesystem::path& path, const StandardScale& scale);
StandardScale load_scale(const std::filesystem::path& path);

} // namespace histreg
