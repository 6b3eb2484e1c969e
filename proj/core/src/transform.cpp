#include "histreg/transform.hpp"

#include "histreg/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

namespace histreg {

Affine2D Affine2D::rotation(double radians, const Vec2& center) {
    Mat2 r;
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    r << c, -s, s, c;
    return {r, center - r * center};
}

Affine2D Affine2D::from_params(const std::array<double, 6>& p) {
    Mat2 m;
    m << p[0], p[1], p[2], p[3];
    return {m, Vec2(p[4], p[5])};
}

std::array<double, 6> Affine2D::params() const {
    return {m_(0, 0), m_(0, 1), m_(1, 0), m_(1, 1), t_.x(), t_.y()};
}

double Affine2D::max_abs_diff(const Affine2D& other) const {
    const auto a = params();
    const auto b = other.params();
    double d = 0.0;
    for (std::size_t k = 0; k < 6; ++k) d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

Affine2D compose(const Affine2D& outer, const Affine2D& inner) {
    return {outer.linear() * inner.linear(), outer.linear() * inner.offset() + outer.offset()};
}

Affine2D invert(const Affine2D& t) {
    const double d = t.det();
    if (!(std::abs(d) >= 1e-12)) throw Error("singular transform");
    const Mat2& m = t.linear();
    Mat2 inv;
    inv << m(1, 1) / d, -m(0, 1) / d, -m(1, 0) / d, m(0, 0) / d;
    return {inv, -(inv * t.offset())};
}

bool plausible(const Affine2D& t) {
    const double d = std::abs(t.det());
    return std::isfinite(d) && d >= kMinAcceptedDet && d <= kMaxAcceptedDet;
}

// TransformChain ------------------------------------------------------------

void TransformChain::set_link(int to, int from, const Affine2D& t) {
    if (std::abs(to - from) != 1) throw Error("chain links must join consecutive slices");
    links_[{to, from}] = t;
}

bool TransformChain::has_link(int to, int from) const { return links_.count({to, from}) != 0; }

const Affine2D& TransformChain::link(int to, int from) const {
    auto it = links_.find({to, from});
    if (it == links_.end())
        throw Error("missing link " + std::to_string(to) + "<-" + std::to_string(from));
    return it->second;
}

Affine2D TransformChain::resolve(int i, int j) const {
    Affine2D acc;
    const int step = j > i ? 1 : -1;
    for (int k = i; k != j; k += step) acc = compose(link(k + step, k), acc);
    return acc;
}

Affine2D chain_resolve(const TransformChain& chain, int i, int j) { return chain.resolve(i, j); }

// LocalAffineField ----------------------------------------------------------

LocalAffineField::LocalAffineField(int width, int height, const Affine2D& uniform)
    : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error("invalid field size");
    const auto p = uniform.params();
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    for (std::size_t k = 0; k < 6; ++k) planes_[k].assign(n, p[k]);
}

Affine2D LocalAffineField::at(int x, int y) const {
    const auto i = idx(x, y);
    return Affine2D::from_params({planes_[0][i], planes_[1][i], planes_[2][i], planes_[3][i], planes_[4][i],
                                  planes_[5][i]});
}

void LocalAffineField::set(int x, int y, const Affine2D& a) {
    const auto i = idx(x, y);
    const auto p = a.params();
    for (std::size_t k = 0; k < 6; ++k) planes_[k][i] = p[k];
}

Vec2 LocalAffineField::pull(int x, int y) const {
    const auto i = idx(x, y);
    return {planes_[0][i] * x + planes_[1][i] * y + planes_[4][i], planes_[2][i] * x + planes_[3][i] * y + planes_[5][i]};
}

Vec2 LocalAffineField::displacement(int x, int y) const { return pull(x, y) - Vec2(x, y); }

bool LocalAffineField::all_finite() const {
    for (const auto& p : planes_)
        for (double v : p)
            if (!std::isfinite(v)) return false;
    return true;
}

double LocalAffineField::smoothness_residual() const {
    if (width_ < 3 || height_ < 3) return 0.0;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& p : planes_) {
        for (int y = 1; y + 1 < height_; ++y) {
            for (int x = 1; x + 1 < width_; ++x) {
                const double lap = p[idx(x - 1, y)] + p[idx(x + 1, y)] + p[idx(x, y - 1)] + p[idx(x, y + 1)] -
                                   4.0 * p[idx(x, y)];
                sum += lap * lap;
                ++n;
            }
        }
    }
    return sum / static_cast<double>(n);
}

// Serialization -------------------------------------------------------------

void write_affine(std::ostream& os, int to, int from, const Affine2D& t) {
    os << "pair " << to << ' ' << from << '\n';
    const auto p = t.params();
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t k = 0; k < 6; ++k) os << (k ? " " : "") << p[k];
    os << '\n';
}

std::vector<LabeledAffine> read_affines(std::istream& is) {
    std::vector<LabeledAffine> out;
    std::string line;
    bool have_header = false;
    int to = 0, from = 0;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first == "pair") {
            if (!(ls >> to >> from)) throw Error("malformed pair header at line " + std::to_string(lineno));
            have_header = true;
            continue;
        }
        if (!have_header) throw Error("affine values without pair header at line " + std::to_string(lineno));
        std::array<double, 6> p{};
        std::istringstream vs(line);
        for (auto& v : p)
            if (!(vs >> v)) throw Error("expected 6 affine parameters at line " + std::to_string(lineno));
        out.push_back({to, from, Affine2D::from_params(p)});
        have_header = false;
    }
    if (have_header) throw Error("dangling pair header");
    return out;
}

void save_affines(const std::filesystem::path& path, const std::vector<LabeledAffine>& items) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << "# histreg-affine/1: x' = m1 x + m2 y + m5, y' = m3 x + m4 y + m6\n";
    for (const auto& it : items) write_affine(os, it.to, it.from, it.transform);
}

std::vector<LabeledAffine> load_affines(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("missing file " + path.string());
    return read_affines(is);
}

namespace {

template <class T>
void put_le(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get_le(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("truncated field file");
    return v;
}

} // namespace

void save_field(const std::filesystem::path& path, const LocalAffineField& field) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os.write(kFieldMagic.data(), kFieldMagic.size());
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(field.width()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(field.height()));
    put_le<std::uint32_t>(os, 6);
    for (int k = 0; k < 6; ++k)
        for (double v : field.plane(k)) put_le<double>(os, v);
}

LocalAffineField load_field(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("missing file " + path.string());
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kFieldMagic) throw Error("bad field magic");
    const auto w = get_le<std::uint32_t>(is);
    const auto h = get_le<std::uint32_t>(is);
    const auto planes = get_le<std::uint32_t>(is);
    if (planes != 6) throw Error("field must have 6 planes");
    LocalAffineField f(static_cast<int>(w), static_cast<int>(h));
    for (int k = 0; k < 6; ++k)
        for (double& v : f.mutable_plane(k)) v = get_le<double>(is);
    return f;
}

} // namespace histreg
