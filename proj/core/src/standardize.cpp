#include "histreg/standardize.hpp"

#include "histreg/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace histreg {

void StandardScale::validate() const {
    if (!(s1 < mu_s && mu_s < s2)) throw Error("standard scale requires s1 < mu_s < s2");
    if (!(pc1 >= 0 && pc1 < pc2 && pc2 <= 100)) throw Error("standard scale requires 0 <= pc1 < pc2 <= 100");
}

Histogram Histogram::of(const Image& img) {
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(img.max_gray()) + 1, 0);
    for (Intensity v : img.pixels()) ++h.counts[static_cast<std::size_t>(v)];
    h.total = img.size();
    return h;
}

Histogram Histogram::of(const Image& img, const std::vector<std::uint8_t>& mask) {
    if (mask.size() != img.size()) throw Error("mask size mismatch");
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(img.max_gray()) + 1, 0);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
            ++h.counts[static_cast<std::size_t>(img.pixels()[i])];
            ++h.total;
        }
    return h;
}

Intensity Histogram::percentile(double pc) const {
    if (total == 0) throw Error("empty image");
    auto rank = static_cast<std::uint64_t>(std::ceil(pc / 100.0 * static_cast<double>(total)));
    rank = std::clamp<std::uint64_t>(rank, 1, total);
    std::uint64_t cum = 0;
    for (std::size_t o = 0; o < counts.size(); ++o) {
        cum += counts[o];
        if (cum >= rank) return static_cast<Intensity>(o);
    }
    return static_cast<Intensity>(counts.size() - 1);
}

LandmarkSet extract_landmarks(const Image& img, const StandardScale& scale) {
    if (img.empty()) throw Error("empty image");
    return extract_landmarks(Histogram::of(img), scale);
}

LandmarkSet extract_landmarks(const Histogram& hist, const StandardScale& scale) {
    if (hist.total == 0) throw Error("empty image");
    std::size_t lo_v = 0, hi_v = hist.counts.size() - 1;
    while (hist.counts[lo_v] == 0) ++lo_v;
    while (hist.counts[hi_v] == 0) --hi_v;
    if (lo_v == hi_v) throw Error("degenerate histogram");

    LandmarkSet lm;
    lm.m1 = static_cast<double>(lo_v);
    lm.m2 = static_cast<double>(hi_v);
    lm.p1 = hist.percentile(scale.pc1);
    lm.p2 = hist.percentile(scale.pc2);

    // Occupied bins only: smoothing over occupied values commutes with
    // strictly increasing intensity maps, so re-standardizing is stable.
    // Each bin is represented by its most frequent value.
    const std::size_t width = std::max<std::size_t>(1, (hi_v - lo_v + 1) / kModeBins);
    std::vector<Intensity> values;
    std::vector<double> counts;
    for (std::size_t b = lo_v; b <= hi_v; b += width) {
        std::uint64_t sum = 0, top = 0;
        std::size_t arg = b;
        for (std::size_t o = b; o < std::min(b + width, hi_v + 1); ++o) {
            sum += hist.counts[o];
            if (hist.counts[o] > top) {
                top = hist.counts[o];
                arg = o;
            }
        }
        if (sum == 0) continue;
        values.push_back(static_cast<Intensity>(arg));
        counts.push_back(static_cast<double>(sum));
    }
    if (values.size() < 2) throw Error("degenerate histogram");

    const int n = static_cast<int>(values.size());
    const int half = kModeSmoothingWindow / 2;
    std::vector<double> smooth(values.size());
    for (int k = 0; k < n; ++k) {
        const int lo = std::max(0, k - half);
        const int hi = std::min(n - 1, k + half);
        double s = 0;
        for (int q = lo; q <= hi; ++q) s += counts[q];
        smooth[k] = s / (hi - lo + 1);
    }

    const double threshold = lm.p1 + kModeOffsetFraction * (lm.m2 - lm.m1);
    // A plateau counts as a peak at its left edge.
    auto is_peak = [&](int k) {
        return (k == 0 || smooth[k] > smooth[k - 1]) && (k == n - 1 || smooth[k] >= smooth[k + 1]);
    };
    // The lobe holding the darkest values is background: skip up to the first
    // valley after its peak, since noise can widen it past the threshold.
    int first_peak = 0;
    while (first_peak < n && !is_peak(first_peak)) ++first_peak;
    int valley = first_peak + 1;
    while (valley < n - 1 && !(smooth[valley] <= smooth[valley - 1] && smooth[valley] < smooth[valley + 1])) ++valley;

    // Highest remaining peak; ties keep the lower intensity.
    int best = -1;
    for (int k = valley + 1; k < n; ++k) {
        if (values[k] <= threshold || values[k] >= lm.p2 || !is_peak(k)) continue;
        if (best < 0 || smooth[k] > smooth[best]) best = k;
    }
    if (best < 0) throw Error("not bimodal");
    lm.mu = values[best];

    if (lm.p1 >= lm.mu) lm.p1 = lm.mu - 1;
    if (lm.p2 <= lm.mu) lm.p2 = lm.mu + 1;
    if (lm.p1 < lm.m1 || lm.p2 > lm.m2) throw Error("not bimodal");
    return lm;
}

double map_linear(double x, const LandmarkSet& lm, const StandardScale& scale) {
    return scale.s1 + (x - lm.p1) / (lm.p2 - lm.p1) * (scale.s2 - scale.s1);
}

double map_to_standard(double x, const LandmarkSet& lm, const StandardScale& scale) {
    x = std::clamp(x, lm.m1, lm.m2);
    double y = 0;
    if (x <= lm.mu)
        y = scale.mu_s + (scale.s1 - scale.mu_s) * ((x - lm.mu) / (lm.p1 - lm.mu));
    else
        y = scale.mu_s + (scale.s2 - scale.mu_s) * ((x - lm.mu) / (lm.p2 - lm.mu));
    return std::floor(y + 0.5);
}

StandardScale train_scale(const std::vector<Image>& training, const StandardScale& config, const WarningSink& warn) {
    if (training.empty()) throw Error("empty training set");
    if (!(config.s1 < config.s2)) throw Error("standard scale requires s1 < s2");
    double sum = 0;
    int used = 0;
    for (std::size_t j = 0; j < training.size(); ++j) {
        try {
            const LandmarkSet lm = extract_landmarks(training[j], config);
            sum += map_linear(lm.mu, lm, config);
            ++used;
        } catch (const Error& e) {
            if (warn) warn("training image " + std::to_string(j) + " skipped: " + e.what());
        }
    }
    if (used == 0) throw Error("no usable training images");
    StandardScale out = config;
    out.mu_s = std::floor(sum / used + 0.5);
    out.validate();
    return out;
}

Image apply_standard_mapping(const Image& img, const LandmarkSet& lm, const StandardScale& scale) {
    std::vector<Intensity> lut(static_cast<std::size_t>(img.max_gray()) + 1);
    Intensity top = static_cast<Intensity>(std::floor(scale.s2 + 0.5));
    for (std::size_t o = 0; o < lut.size(); ++o) {
        const double y = map_to_standard(static_cast<double>(o), lm, scale);
        lut[o] = static_cast<Intensity>(std::max(0.0, y));
    }
    std::vector<Intensity> px(img.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = lut[static_cast<std::size_t>(img.pixels()[i])];
        top = std::max(top, px[i]);
    }
    Image out(img.width(), img.height(), top, std::move(px));
    out.pixel_size_um = img.pixel_size_um;
    return out;
}

StandardizedImage standardize_with_landmarks(const Image& img, const StandardScale& scale) {
    StandardizedImage r;
    r.landmarks = extract_landmarks(img, scale);
    r.image = apply_standard_mapping(img, r.landmarks, scale);
    r.s1_ext = map_to_standard(r.landmarks.m1, r.landmarks, scale);
    r.s2_ext = map_to_standard(r.landmarks.m2, r.landmarks, scale);
    return r;
}

Image standardize_image(const Image& img, const StandardScale& scale) {
    return standardize_with_landmarks(img, scale).image;
}

namespace {
constexpr const char* kScaleFormat = "histreg-standard-scale/1";
}

void save_scale(const std::filesystem::path& path, const StandardScale& scale) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << "format " << kScaleFormat << '\n'
       << std::setprecision(std::numeric_limits<double>::max_digits10) << "s1 " << scale.s1 << '\n'
       << "s2 " << scale.s2 << '\n'
       << "mu_s " << scale.mu_s << '\n'
       << "pc1 " << scale.pc1 << '\n'
       << "pc2 " << scale.pc2 << '\n';
}

StandardScale load_scale(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("missing file " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string key, value;
        if (!(ls >> key)) continue;
        if (!(ls >> value)) throw Error("missing value for key '" + key + "' in " + path.string());
        kv[key] = value;
    }
    if (kv["format"] != kScaleFormat) throw Error("unsupported standard-scale format in " + path.string());
    StandardScale s;
    auto num = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw Error(std::string("missing key '") + key + "' in " + path.string());
        try {
            return std::stod(it->second);
        } catch (...) {
            throw Error(std::string("bad number for '") + key + "' in " + path.string());
        }
    };
    s.s1 = num("s1");
    s.s2 = num("s2");
    s.mu_s = num("mu_s");
    s.pc1 = num("pc1");
    s.pc2 = num("pc2");
    s.validate();
    return s;
}

} // namespace histreg
