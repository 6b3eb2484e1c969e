#include "histreg/phantom.hpp"

#include "histreg/error.hpp"
#include "histreg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <tuple>

namespace histreg {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kBackground = 50.0;
constexpr double kTissueBase = 105.0;

// mt19937_64 output is fully specified; the conversions below avoid the
// implementation-defined standard distributions so streams match everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        double u1 = uniform();
        while (u1 <= 0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2 * kPi * u2);
        return r * std::cos(2 * kPi * u2);
    }

private:
    std::mt19937_64 gen_;
    std::optional<double> spare_;
};

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Ellipse {
    Vec2 center; // relative to the outer frame (units of outer radii) for inner shapes
    double ra = 1, rb = 1, angle = 0;
    double contrast = 0;
    Vec2 drift; // per slice, same units as center
};

struct Blob {
    Vec2 pos; // outer-frame units
    Vec2 drift;
    double sigma = 4;
    double amp = 0;
};

struct Anatomy {
    Vec2 center;
    double ra = 0, rb = 0, angle = 0;
    Vec2 center_dir;
    Vec2 ramp_dir;
    std::vector<Ellipse> structures;
    std::vector<Blob> blobs;
    Vec2 k1, k2;
    double ph1 = 0, ph2 = 0;
};

Anatomy make_anatomy(const PhantomSpec& spec) {
    Rng rng(mix(spec.seed ^ 0x5eedULL));
    Anatomy a;
    a.center = Vec2(0.5 * (spec.width - 1), 0.5 * (spec.height - 1)) +
               Vec2(rng.uniform(-0.02, 0.02) * spec.width, rng.uniform(-0.02, 0.02) * spec.height);
    a.ra = 0.40 * spec.width * rng.uniform(0.95, 1.0);
    a.rb = 0.34 * spec.height * rng.uniform(0.95, 1.0);
    a.angle = rng.uniform(-0.3, 0.3);
    const double cdir = rng.uniform(0, 2 * kPi);
    a.center_dir = Vec2(std::cos(cdir), std::sin(cdir));
    const double rdir = rng.uniform(0, 2 * kPi);
    a.ramp_dir = Vec2(std::cos(rdir), std::sin(rdir));

    static constexpr double kContrasts[] = {28, -22, 18, -16, 24, -20};
    for (int k = 0; k < spec.structure_count; ++k) {
        Ellipse e;
        const double r = rng.uniform(0.1, 0.45);
        const double th = rng.uniform(0, 2 * kPi);
        e.center = Vec2(r * std::cos(th), r * std::sin(th));
        e.ra = rng.uniform(0.15, 0.35);
        e.rb = rng.uniform(0.10, 0.25);
        e.angle = rng.uniform(0, kPi);
        e.contrast = kContrasts[k % 6];
        e.drift = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)) * 0.002;
        a.structures.push_back(e);
    }
    for (int k = 0; k < spec.blob_count; ++k) {
        Blob b;
        const double r = std::sqrt(rng.uniform()) * 0.8;
        const double th = rng.uniform(0, 2 * kPi);
        b.pos = Vec2(r * std::cos(th), r * std::sin(th));
        b.drift = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)) * 0.0015;
        b.sigma = rng.uniform(2.5, 6.0);
        b.amp = (k % 2 ? -1.0 : 1.0) * rng.uniform(12, 20);
        a.blobs.push_back(b);
    }
    const double w1 = rng.uniform(0, 2 * kPi), w2 = rng.uniform(0, 2 * kPi);
    a.k1 = Vec2(std::cos(w1), std::sin(w1)) * (2 * kPi / rng.uniform(24, 40));
    a.k2 = Vec2(std::cos(w2), std::sin(w2)) * (2 * kPi / rng.uniform(24, 40));
    a.ph1 = rng.uniform(0, 2 * kPi);
    a.ph2 = rng.uniform(0, 2 * kPi);
    return a;
}

// Approximate signed distance to an ellipse boundary, positive inside.
double ellipse_distance(const Vec2& p, const Vec2& c, double ra, double rb, double angle) {
    const double cs = std::cos(angle), sn = std::sin(angle);
    const Vec2 d = p - c;
    const double u = cs * d.x() + sn * d.y();
    const double v = -sn * d.x() + cs * d.y();
    const double rho = std::sqrt((u * u) / (ra * ra) + (v * v) / (rb * rb));
    if (rho < 1e-9) return std::min(ra, rb);
    const double grad = std::sqrt((u / (ra * ra)) * (u / (ra * ra)) + (v / (rb * rb)) * (v / (rb * rb))) / rho;
    return (1.0 - rho) / grad;
}

double logistic(double d, double width) { return 1.0 / (1.0 + std::exp(-d / width)); }

struct SliceFrame {
    Vec2 center;
    double ra, rb, angle;
    double edge;
};

SliceFrame frame_of(const PhantomSpec& spec, const Anatomy& a, int slice) {
    return {a.center + slice * spec.center_drift * a.center_dir, a.ra + slice * spec.radius_drift,
            a.rb + 0.5 * slice * spec.radius_drift, a.angle, spec.edge_width};
}

// Maps outer-frame units to pixels.
Vec2 to_pixels(const SliceFrame& f, const Vec2& rel) {
    const double cs = std::cos(f.angle), sn = std::sin(f.angle);
    const Vec2 scaled(rel.x() * f.ra, rel.y() * f.rb);
    return f.center + Vec2(cs * scaled.x() - sn * scaled.y(), sn * scaled.x() + cs * scaled.y());
}

double tissue_weight(const SliceFrame& f, const Vec2& q) {
    return logistic(ellipse_distance(q, f.center, f.ra, f.rb, f.angle), f.edge);
}

double anatomy_value(const Anatomy& a, const SliceFrame& f, int slice, const Vec2& q) {
    const double t = tissue_weight(f, q);
    if (t < 1e-6) return kBackground;
    const Vec2 rel = (q - f.center) / std::max(f.ra, f.rb);
    double v = kTissueBase + 10.0 * rel.dot(a.ramp_dir);
    for (const auto& e : a.structures) {
        const Vec2 c = to_pixels(f, e.center + slice * e.drift);
        v += e.contrast * logistic(ellipse_distance(q, c, e.ra * f.ra, e.rb * f.rb, f.angle + e.angle), f.edge);
    }
    for (const auto& b : a.blobs) {
        const Vec2 c = to_pixels(f, b.pos + slice * b.drift);
        v += b.amp * std::exp(-(q - c).squaredNorm() / (2 * b.sigma * b.sigma));
    }
    v += 6.0 * std::sin(a.k1.dot(q) + a.ph1) * std::cos(a.k2.dot(q) + a.ph2);
    return kBackground + t * (v - kBackground);
}

Vec2 wave_displacement(const ElasticWave& w, const Vec2& p) {
    if (w.amplitude == 0) return Vec2::Zero();
    const Vec2 k(std::cos(w.angle), std::sin(w.angle));
    const double s = w.amplitude * std::sin(2 * kPi * p.dot(k) / w.period + w.phase);
    return s * Vec2(std::cos(w.direction), std::sin(w.direction));
}

Intensity quantize(double v, Intensity max_gray) {
    return static_cast<Intensity>(std::clamp(std::floor(v + 0.5), 0.0, static_cast<double>(max_gray)));
}

} // namespace

void PhantomSpec::validate() const {
    if (width < 32 || height < 32) throw Error("phantom must be at least 32x32");
    if (slice_count < 1) throw Error("phantom needs at least one slice");
    if (max_gray < 1) throw Error("phantom max_gray must be >= 1");
    if (!(edge_width > 0)) throw Error("phantom edge_width must be > 0");
    auto check_size = [&](std::size_t n, const char* what) {
        if (n != 0 && n != static_cast<std::size_t>(slice_count))
            throw Error(std::string(what) + " schedule must be empty or have one entry per slice");
    };
    check_size(affines.size(), "affine");
    check_size(waves.size(), "elastic");
    check_size(gain_bias.size(), "intensity");
    for (const auto& d : distortions)
        if (d.slice < 1 || d.slice > slice_count)
            throw Error("distortion references out-of-range slice " + std::to_string(d.slice));
    for (const auto& w : waves)
        if (w.amplitude != 0 && !(w.period > 0)) throw Error("elastic period must be > 0");
    if (random_elastic_amplitude > 0 && !(random_elastic_period > 0)) throw Error("elastic period must be > 0");
}

double phantom_anatomy(const PhantomSpec& spec, int slice, double x, double y) {
    const Anatomy a = make_anatomy(spec);
    return anatomy_value(a, frame_of(spec, a, slice), slice, Vec2(x, y));
}

std::vector<std::uint8_t> phantom_tissue_mask(const PhantomSpec& spec, int slice) {
    const Anatomy a = make_anatomy(spec);
    const SliceFrame f = frame_of(spec, a, slice);
    std::vector<std::uint8_t> m(static_cast<std::size_t>(spec.width) * spec.height);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            m[static_cast<std::size_t>(y) * spec.width + x] = tissue_weight(f, Vec2(x, y)) > 0.5 ? 1 : 0;
    return m;
}

Phantom generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    const Anatomy anatomy = make_anatomy(spec);
    const Vec2 image_center(0.5 * (spec.width - 1), 0.5 * (spec.height - 1));

    Phantom out;
    out.slices.resize(static_cast<std::size_t>(spec.slice_count));
    for (int s = 0; s < spec.slice_count; ++s) {
        Rng rng(mix(spec.seed + 0x1000003ULL * static_cast<std::uint64_t>(s + 1)));
        PhantomSlice& ps = out.slices[static_cast<std::size_t>(s)];

        // Every random draw happens whether or not a schedule overrides it, so
        // an explicit schedule changes only the values it names.
        const double rot = rng.uniform(-1, 1) * spec.random_rotation_deg * kPi / 180.0;
        const double sx = 1 + rng.uniform(-1, 1) * spec.random_scale;
        const double sy = 1 + rng.uniform(-1, 1) * spec.random_scale;
        const double sh = rng.uniform(-1, 1) * spec.random_shear;
        const Vec2 t(rng.uniform(-1, 1) * spec.random_translation, rng.uniform(-1, 1) * spec.random_translation);
        ElasticWave wave;
        wave.amplitude = rng.uniform(0.5, 1.0) * spec.random_elastic_amplitude;
        wave.period = spec.random_elastic_period;
        wave.angle = rng.uniform(0, 2 * kPi);
        wave.direction = rng.uniform(0, 2 * kPi);
        wave.phase = rng.uniform(0, 2 * kPi);
        const double gain = rng.uniform(spec.random_gain_min, spec.random_gain_max);
        const double bias = rng.uniform(-1, 1) * spec.random_bias;

        if (!spec.affines.empty()) {
            ps.affine = spec.affines[static_cast<std::size_t>(s)];
        } else {
            Mat2 m;
            m << sx, sh * sy, 0, sy;
            m = Affine2D::rotation(rot).linear() * m;
            ps.affine = Affine2D(m, image_center + t - m * image_center);
        }
        if (!spec.waves.empty())
            ps.wave = spec.waves[static_cast<std::size_t>(s)];
        else if (spec.random_elastic_amplitude > 0)
            ps.wave = wave;
        if (!spec.gain_bias.empty())
            std::tie(ps.gain, ps.bias) = spec.gain_bias[static_cast<std::size_t>(s)];
        else {
            ps.gain = gain;
            ps.bias = bias;
        }

        const SliceFrame frame = frame_of(spec, anatomy, s);
        const Affine2D inv = invert(ps.affine);
        ps.displacement = LocalAffineField(spec.width, spec.height);
        ps.clean = Image(spec.width, spec.height, spec.max_gray);
        std::vector<double> acquired(static_cast<std::size_t>(spec.width) * spec.height);
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * spec.width + x;
                const Vec2 u = wave_displacement(ps.wave, Vec2(x, y));
                ps.displacement.set(x, y, Affine2D::translation(u.x(), u.y()));
                ps.clean.mutable_pixels()[i] = quantize(anatomy_value(anatomy, frame, s, Vec2(x, y)), spec.max_gray);
                const Vec2 p = inv(x, y);
                const Vec2 q = p + wave_displacement(ps.wave, p);
                acquired[i] = ps.gain * anatomy_value(anatomy, frame, s, q) + ps.bias;
            }
        }

        for (const auto& d : spec.distortions) {
            if (d.slice != s + 1) continue;
            switch (d.kind) {
            case DistortionKind::tear: {
                const double dir = rng.uniform(0, 2 * kPi);
                const double r_min = 0.25 * std::min(spec.width, spec.height);
                for (int y = 0; y < spec.height; ++y)
                    for (int x = 0; x < spec.width; ++x) {
                        const Vec2 v = Vec2(x, y) - image_center;
                        double da = std::atan2(v.y(), v.x()) - dir;
                        da = std::remainder(da, 2 * kPi);
                        if (v.norm() > r_min && std::abs(da) < d.magnitude)
                            acquired[static_cast<std::size_t>(y) * spec.width + x] = 0;
                    }
                break;
            }
            case DistortionKind::hole: {
                const double r = d.magnitude * std::min(spec.width, spec.height);
                const double th = rng.uniform(0, 2 * kPi);
                const double rr = rng.uniform(0, 0.5) * std::min(anatomy.ra, anatomy.rb);
                const Vec2 c = image_center + rr * Vec2(std::cos(th), std::sin(th));
                for (int y = 0; y < spec.height; ++y)
                    for (int x = 0; x < spec.width; ++x)
                        if ((Vec2(x, y) - c).norm() < r) acquired[static_cast<std::size_t>(y) * spec.width + x] = 0;
                break;
            }
            case DistortionKind::noise:
                for (double& v : acquired) v += d.magnitude * rng.normal();
                break;
            }
        }
        if (spec.acquisition_noise > 0)
            for (double& v : acquired) v += spec.acquisition_noise * rng.normal();

        ps.image = Image(spec.width, spec.height, spec.max_gray);
        for (std::size_t i = 0; i < acquired.size(); ++i)
            ps.image.mutable_pixels()[i] = quantize(acquired[i], spec.max_gray);
    }
    return out;
}

std::string to_string(DistortionKind k) {
    switch (k) {
    case DistortionKind::tear: return "tear";
    case DistortionKind::hole: return "hole";
    case DistortionKind::noise: return "noise";
    }
    return "noise";
}

DistortionKind parse_distortion_kind(const std::string& s) {
    if (s == "tear") return DistortionKind::tear;
    if (s == "hole") return DistortionKind::hole;
    if (s == "noise") return DistortionKind::noise;
    throw Error("unknown distortion kind '" + s + "'");
}

void write_phantom(const std::filesystem::path& dir, const Phantom& phantom) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "slices");
    fs::create_directories(dir / "clean");
    fs::create_directories(dir / "ground_truth");
    std::ofstream manifest(dir / "manifest.txt");
    std::vector<LabeledAffine> affines;
    std::ofstream intensity(dir / "ground_truth" / "intensity.txt");
    intensity << "# slice gain bias elastic_amplitude elastic_period elastic_angle elastic_direction elastic_phase\n"
              << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t k = 0; k < phantom.slices.size(); ++k) {
        const auto& s = phantom.slices[k];
        const int idx = static_cast<int>(k) + 1;
        char name[32];
        std::snprintf(name, sizeof name, "slice_%04d", idx);
        write_pgm(dir / "slices" / (std::string(name) + ".pgm"), s.image);
        write_pgm(dir / "clean" / (std::string(name) + ".pgm"), s.clean);
        save_field(dir / "ground_truth" / ("elastic_" + std::string(name + 6) + ".laf"), s.displacement);
        manifest << idx << '\t' << "slices/" << name << ".pgm\n";
        affines.push_back({idx, 0, s.affine});
        intensity << idx << ' ' << s.gain << ' ' << s.bias << ' ' << s.wave.amplitude << ' ' << s.wave.period << ' '
                  << s.wave.angle << ' ' << s.wave.direction << ' ' << s.wave.phase << '\n';
    }
    save_affines(dir / "ground_truth" / "affines.txt", affines);
}

} // namespace histreg
