#pragma once

#include "histreg/image.hpp"
#include "histreg/transform.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace histreg {

enum class DistortionKind { tear, hole, noise };

struct Distortion {
    int slice = 1; ///< 1-based
    DistortionKind kind = DistortionKind::noise;
    double magnitude = 1.0; ///< tear: wedge half-angle (rad); hole: radius fraction; noise: sigma
};

/// Sinusoidal displacement u(p) = amplitude * sin(2 pi (p . k) / period + phase) * d,
/// with k = (cos angle, sin angle) and d the unit vector along `direction`.
struct ElasticWave {
    double amplitude = 0;
    double period = 128;
    double angle = 0;     ///< wave-vector angle, radians
    double direction = 0; ///< displacement direction angle, radians
    double phase = 0;
};

struct PhantomSpec {
    int width = 256;
    int height = 256;
    int slice_count = 1;
    std::uint64_t seed = 1;
    std::int32_t max_gray = 255;

    // anatomy
    int structure_count = 3;     ///< nested inner ellipses
    int blob_count = 24;
    double radius_drift = 0.15;  ///< pixels per slice, outer ellipse radii
    double center_drift = 0.10;  ///< pixels per slice
    double edge_width = 0.8;     ///< logistic edge scale, pixels
    double acquisition_noise = 0.0;

    // geometric schedule: explicit per-slice entries win over random ranges
    std::vector<Affine2D> affines;        ///< empty or slice_count entries, about image origin
    double random_rotation_deg = 0;       ///< |rotation| bound
    double random_translation = 0;        ///< |t| bound per axis
    double random_scale = 0;              ///< scale in [1-s, 1+s]
    double random_shear = 0;              ///< |shear| bound
    std::vector<ElasticWave> waves;       ///< empty or slice_count entries
    double random_elastic_amplitude = 0;  ///< per-slice random wave amplitude in [a/2, a]
    double random_elastic_period = 128;

    // intensity schedule
    std::vector<std::pair<double, double>> gain_bias; ///< empty or slice_count entries
    double random_gain_min = 1.0, random_gain_max = 1.0;
    double random_bias = 0.0; ///< bias in [-b, b]

    std::vector<Distortion> distortions;

    /// Throws Error for out-of-range schedule entries.
    void validate() const;
};

struct PhantomSlice {
    Image image;          ///< perturbed, distorted acquisition
    Image clean;          ///< anatomy only, before any perturbation
    Affine2D affine;      ///< maps elastic-frame points onto acquisition coordinates
    LocalAffineField displacement; ///< pull field: elastic(x) = clean(x + u(x))
    ElasticWave wave;
    double gain = 1.0;
    double bias = 0.0;
};

struct Phantom {
    std::vector<PhantomSlice> slices;
};

/// Renders the stack. Each acquisition pixel x samples the analytic anatomy at
/// q = p + u(p), p = affine^-1(x); then gain/bias, distortions and noise apply.
Phantom generate_phantom(const PhantomSpec& spec);

/// Analytic anatomy intensity of slice `slice` (0-based) at a continuous point.
double phantom_anatomy(const PhantomSpec& spec, int slice, double x, double y);

/// True where the clean anatomy of `slice` is tissue (inside the outer boundary).
std::vector<std::uint8_t> phantom_tissue_mask(const PhantomSpec& spec, int slice);

/// Writes `<dir>/slices/slice_NNNN.pgm`, `<dir>/manifest.txt`,
/// `<dir>/clean/slice_NNNN.pgm` and `<dir>/ground_truth/` (affines.txt with
/// `pair i 0` headers, elastic_NNNN.laf fields, intensity.txt).
void write_phantom(const std::filesystem::path& dir, const Phantom& phantom);

std::string to_string(DistortionKind k);
DistortionKind parse_distortion_kind(const std::string& s);

} // namespace histreg
