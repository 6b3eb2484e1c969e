#include "histreg/features.hpp"

#include "histreg/error.hpp"
#include "histreg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <unordered_map>

namespace histreg {

std::vector<std::pair<int, int>> disk_offsets(int r_f) {
    std::vector<std::pair<int, int>> out;
    for (int dy = -r_f; dy <= r_f; ++dy)
        for (int dx = -r_f; dx <= r_f; ++dx) {
            const int d2 = dx * dx + dy * dy;
            if (d2 > 0 && d2 < r_f * r_f) out.emplace_back(dx, dy);
        }
    return out;
}

FeatureMap edgeness_map(const Image& img, int r_f) {
    if (r_f < 1) throw Error("edgeness radius must be >= 1");
    const int w = img.width();
    const int h = img.height();
    FeatureMap f{w, h, r_f, std::vector<double>(img.size(), 0.0)};
    const auto offsets = disk_offsets(r_f);
    const auto px = img.pixels();
    for (int y = 0; y < h; ++y) {
        const bool interior_y = y >= r_f && y + r_f < h;
        for (int x = 0; x < w; ++x) {
            const Intensity g0 = px[static_cast<std::size_t>(y) * w + x];
            std::int64_t sum = 0;
            if (interior_y && x >= r_f && x + r_f < w) {
                for (const auto& [dx, dy] : offsets)
                    sum += std::abs(px[static_cast<std::size_t>(y + dy) * w + (x + dx)] - g0);
            } else {
                for (const auto& [dx, dy] : offsets) {
                    const int xx = x + dx;
                    const int yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                    sum += std::abs(px[static_cast<std::size_t>(yy) * w + xx] - g0);
                }
            }
            f.values[static_cast<std::size_t>(y) * w + x] = static_cast<double>(sum);
        }
    }
    return f;
}

double entropy(const Image& img) {
    if (img.empty()) throw Error("empty image");
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(img.max_gray()) + 1, 0);
    for (Intensity v : img.pixels()) ++counts[static_cast<std::size_t>(v)];
    const double n = static_cast<double>(img.size());
    double e = 0.0;
    for (std::uint64_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        e -= p * std::log2(p);
    }
    return e == 0.0 ? 0.0 : e; // no negative zero
}

double feature_mse(const FeatureMap& a, const FeatureMap& b, std::optional<std::span<const std::uint8_t>> mask) {
    if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size())
        throw Error("feature map dimension mismatch");
    if (a.radius != b.radius) throw Error("feature map radius mismatch");
    if (mask && mask->size() != a.values.size()) throw Error("mask dimension mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        const double d = a.values[i] - b.values[i];
        sum += d * d;
        ++n;
    }
    if (n == 0) throw Error("no overlap");
    return sum / static_cast<double>(n);
}

void export_feature_map(const std::filesystem::path& path, const FeatureMap& map) {
    const double vmax = map.values.empty() ? 0.0 : *std::max_element(map.values.begin(), map.values.end());
    const double factor = vmax > 0 ? 65535.0 / vmax : 1.0;
    std::vector<Intensity> px(map.values.size());
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<Intensity>(std::clamp(std::floor(map.values[i] * factor + 0.5), 0.0, 65535.0));
    write_pgm(path, Image(map.width, map.height, 65535, std::move(px)));
    std::ofstream os(path.string() + ".scale");
    if (!os) throw Error("cannot write " + path.string() + ".scale");
    os << "# stored = round(edgeness * factor)\n"
       << std::setprecision(std::numeric_limits<double>::max_digits10) << "factor " << factor << '\n'
       << "radius " << map.radius << '\n'
       << "max_edgeness " << vmax << '\n';
}

} // namespace histreg
