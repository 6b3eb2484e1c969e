#pragma once

#include "histreg/image.hpp"
#include "histreg/phantom.hpp"
#include "histreg/transform.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace histreg::test {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("histreg_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

inline Image make_image(int w, int h, std::vector<Intensity> px, Intensity max_gray = 255) {
    return Image(w, h, max_gray, std::move(px));
}

inline Image random_image(std::mt19937_64& rng, int w, int h, Intensity max_gray) {
    std::uniform_int_distribution<Intensity> d(0, max_gray);
    std::vector<Intensity> px(static_cast<std::size_t>(w) * h);
    for (auto& v : px) v = d(rng);
    return Image(w, h, max_gray, std::move(px));
}

// Literal double loop over every pixel pair of the image.
inline std::vector<double> edgeness_oracle(const Image& img, int r_f) {
    const int w = img.width(), h = img.height();
    std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
    for (int y0 = 0; y0 < h; ++y0)
        for (int x0 = 0; x0 < w; ++x0) {
            double s = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    if (x == x0 && y == y0) continue;
                    const double d = std::hypot(x - x0, y - y0);
                    if (d < r_f) s += std::abs(static_cast<double>(img.at(x, y)) - img.at(x0, y0));
                }
            out[static_cast<std::size_t>(y0) * w + x0] = s;
        }
    return out;
}

inline double entropy_oracle(const Image& img) {
    std::map<Intensity, double> counts;
    for (Intensity v : img.pixels()) counts[v] += 1;
    double e = 0;
    for (const auto& [v, c] : counts) {
        const double p = c / static_cast<double>(img.size());
        e -= p * std::log2(p);
    }
    return e + 0.0;
}

// Mean distance between the images of the four image corners.
inline double corner_error(const Affine2D& a, const Affine2D& b, int w, int h) {
    double s = 0;
    for (const Vec2& c : {Vec2(0, 0), Vec2(w - 1, 0), Vec2(0, h - 1), Vec2(w - 1, h - 1)})
        s += (a.apply(c) - b.apply(c)).norm();
    return s / 4;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Affine with the given rotation (degrees), anisotropic scale and shear about
// the image centre, followed by a translation.
inline Affine2D about_center(int w, int h, double rot_deg, double sx, double sy, double shear, Vec2 t) {
    const Vec2 c(0.5 * (w - 1), 0.5 * (h - 1));
    Mat2 m;
    m << sx, shear * sy, 0, sy;
    m = Affine2D::rotation(rot_deg * 3.14159265358979323846 / 180.0).linear() * m;
    return Affine2D(m, c + t - m * c);
}

// Five mildly misaligned slices; slice 3 carries heavy noise and a tear.
inline PhantomSpec corrupted_subvolume(std::uint64_t seed, int size = 128) {
    PhantomSpec spec;
    spec.width = spec.height = size;
    spec.slice_count = 5;
    spec.seed = seed;
    spec.acquisition_noise = 1.0;
    spec.random_rotation_deg = 2;
    spec.random_translation = 2;
    spec.distortions = {{3, DistortionKind::noise, 40.0}, {3, DistortionKind::tear, 0.5}};
    return spec;
}

// Full pairwise table of registration MSEs, mse[i][j] = MSE(i -> j), computed
// independently of the brs module; the diagonal is zero.
template <class Fn>
std::vector<std::vector<double>> pairwise_mse(const std::vector<Image>& slices, Fn&& mse_of) {
    const std::size_t n = slices.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) m[i][j] = mse_of(slices[i], slices[j]);
    return m;
}

// Reference selection by hand: j = argmax entropy, BRS = argmax_i log(E_j / MSE_ij),
// ties towards the centre then the lower index. Indices are 0-based.
inline std::pair<std::size_t, std::size_t> brute_force_brs(const std::vector<double>& ent,
                                                           const std::vector<std::vector<double>>& mse) {
    const std::size_t n = ent.size();
    auto closer = [n](std::size_t a, std::size_t b) {
        const long ca = std::labs(2 * static_cast<long>(a) - static_cast<long>(n - 1));
        const long cb = std::labs(2 * static_cast<long>(b) - static_cast<long>(n - 1));
        return ca != cb ? ca < cb : a < b;
    };
    std::size_t j = 0;
    for (std::size_t s = 1; s < n; ++s)
        if (ent[s] > ent[j] || (ent[s] == ent[j] && closer(s, j))) j = s;
    std::size_t best = n;
    double best_score = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == j) continue;
        const double score = mse[i][j] > 0 ? std::log(ent[j] / mse[i][j]) : INFINITY;
        if (best == n || score > best_score || (score == best_score && closer(i, best))) {
            best = i;
            best_score = score;
        }
    }
    return {j, best};
}

} // namespace histreg::test
