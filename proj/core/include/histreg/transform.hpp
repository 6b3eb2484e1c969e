#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace histreg {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Planar affine map x' = m x + t. Parameter order follows the on-disk
/// layout: (m1 m2 m3 m4 m5 m6) = (m00 m01 m10 m11 tx ty).
class Affine2D {
public:
    Affine2D() : m_(Mat2::Identity()), t_(Vec2::Zero()) {}
    Affine2D(const Mat2& m, const Vec2& t) : m_(m), t_(t) {}

    static Affine2D identity() { return {}; }
    static Affine2D translation(double tx, double ty) { return {Mat2::Identity(), Vec2(tx, ty)}; }
    /// Counter-clockwise rotation (in image coordinates, y down) about `center`.
    static Affine2D rotation(double radians, const Vec2& center = Vec2::Zero());
    static Affine2D from_params(const std::array<double, 6>& p);

    std::array<double, 6> params() const;
    const Mat2& linear() const noexcept { return m_; }
    const Vec2& offset() const noexcept { return t_; }
    double det() const noexcept { return m_.determinant(); }

    Vec2 apply(const Vec2& p) const { return m_ * p + t_; }
    Vec2 operator()(double x, double y) const { return apply(Vec2(x, y)); }

    /// Largest absolute per-entry difference across the six parameters.
    double max_abs_diff(const Affine2D& other) const;

private:
    Mat2 m_;
    Vec2 t_;
};

/// outer(inner(x)).
Affine2D compose(const Affine2D& outer, const Affine2D& inner);

/// Throws "singular transform" when |det| < 1e-12.
Affine2D invert(const Affine2D& t);

/// Accepted registration outputs keep |det| inside this band.
inline constexpr double kMinAcceptedDet = 0.1;
inline constexpr double kMaxAcceptedDet = 10.0;
bool plausible(const Affine2D& t);

/// Consecutive-slice links A_{to<-from} with |to - from| == 1. Long-range
/// transforms are resolved on demand by serial composition.
class TransformChain {
public:
    void set_link(int to, int from, const Affine2D& t);
    bool has_link(int to, int from) const;
    const Affine2D& link(int to, int from) const;

    /// A_{j<-i}: the product of the links from i towards j, applied in order.
    /// Throws naming the first missing link.
    Affine2D resolve(int i, int j) const;

    const std::map<std::pair<int, int>, Affine2D>& links() const noexcept { return links_; }

private:
    std::map<std::pair<int, int>, Affine2D> links_; // key: (to, from)
};

Affine2D chain_resolve(const TransformChain& chain, int i, int j);

/// Per-pixel local affine pull map: output pixel x samples the source at
/// params(x)(x). Identity everywhere is (1 0 0 1 0 0).
class LocalAffineField {
public:
    LocalAffineField() = default;
    LocalAffineField(int width, int height, const Affine2D& uniform = Affine2D::identity());

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    Affine2D at(int x, int y) const;
    void set(int x, int y, const Affine2D& a);

    /// Source coordinate pulled by output pixel (x, y).
    Vec2 pull(int x, int y) const;
    /// pull(x, y) - (x, y).
    Vec2 displacement(int x, int y) const;

    /// Parameter k of pixel (x, y), k in [0, 6).
    double param(int k, int x, int y) const { return planes_[k][idx(x, y)]; }
    std::span<const double> plane(int k) const { return planes_[k]; }
    std::span<double> mutable_plane(int k) { return planes_[k]; }

    bool all_finite() const;
    /// Mean over interior pixels and planes of the squared 5-point Laplacian.
    double smoothness_residual() const;

    bool operator==(const LocalAffineField&) const = default;

private:
    std::size_t idx(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::array<std::vector<double>, 6> planes_;
};

// Serialization -------------------------------------------------------------

/// Affine text format: a `pair <to> <from>` header line followed by
/// `m1 m2 m3 m4 m5 m6`. Values are written with round-trip precision.
void write_affine(std::ostream& os, int to, int from, const Affine2D& t);
struct LabeledAffine {
    int to = 0;
    int from = 0;
    Affine2D transform;
};
std::vector<LabeledAffine> read_affines(std::istream& is);
void save_affines(const std::filesystem::path& path, const std::vector<LabeledAffine>& items);
std::vector<LabeledAffine> load_affines(const std::filesystem::path& path);

/// Binary field layout (little endian): 8-byte magic "HRLAF\0\0\1", uint32
/// width, uint32 height, uint32 plane count (6), then each plane as row-major
/// float64.
inline constexpr std::array<char, 8> kFieldMagic{'H', 'R', 'L', 'A', 'F', '\0', '\0', '\1'};
void save_field(const std::filesystem::path& path, const LocalAffineField& field);
LocalAffineField load_field(const std::filesystem::path& path);

} // namespace histreg
