#include "histreg/cam.hpp"

#include "histreg/error.hpp"
#include "histreg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace histreg {

void CamConfig::validate() const {
    if (match_window < 3 || match_window % 2 == 0) throw Error("match_window must be odd and >= 3");
    if (search_radius < 0) throw Error("search_radius must be >= 0");
    if (control_grid_spacing < 1 || 2 * control_grid_spacing < match_window)
        throw Error("control_grid_spacing must be >= match_window / 2");
    if (!(tau >= -1 && tau <= 1)) throw Error("tau must lie in [-1, 1]");
}

namespace {

// Block matcher against one neighbour; integral images make the candidate
// window statistics O(1).
class Matcher {
public:
    Matcher(const Image& img, const Image& neighbor, const CamConfig& cfg)
        : img_(img), nb_(neighbor), half_(cfg.match_window / 2), radius_(cfg.search_radius) {
        const int w = nb_.width();
        const int h = nb_.height();
        sum_.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0);
        sq_.assign(sum_.size(), 0);
        for (int y = 0; y < h; ++y) {
            std::int64_t rs = 0, rq = 0;
            for (int x = 0; x < w; ++x) {
                const std::int64_t v = nb_.at(x, y);
                rs += v;
                rq += v * v;
                sum_[at(x + 1, y + 1)] = sum_[at(x + 1, y)] + rs;
                sq_[at(x + 1, y + 1)] = sq_[at(x + 1, y)] + rq;
            }
        }
    }

    Correspondence match(int px, int py) const {
        const int w = img_.width();
        const int h = img_.height();
        if (px - half_ < 0 || py - half_ < 0 || px + half_ >= w || py + half_ >= h)
            throw Error("match window leaves the image");
        const int side = 2 * half_ + 1;
        const auto n = static_cast<std::int64_t>(side) * side;

        std::vector<double> tpl(static_cast<std::size_t>(n));
        std::int64_t ts = 0, tq = 0;
        for (int dy = -half_; dy <= half_; ++dy)
            for (int dx = -half_; dx <= half_; ++dx) {
                const std::int64_t v = img_.at(px + dx, py + dy);
                ts += v;
                tq += v * v;
            }
        const std::int64_t tvar_n = n * tq - ts * ts; // n^2 * variance
        Correspondence best;
        if (tvar_n <= 0) return best;
        const double tmean = static_cast<double>(ts) / static_cast<double>(n);
        {
            std::size_t k = 0;
            for (int dy = -half_; dy <= half_; ++dy)
                for (int dx = -half_; dx <= half_; ++dx) tpl[k++] = img_.at(px + dx, py + dy) - tmean;
        }
        const double tnorm = std::sqrt(static_cast<double>(tvar_n) / static_cast<double>(n));

        const int nw = nb_.width();
        const int nh = nb_.height();
        int best_d2 = 0;
        bool found = false;
        for (int dy = -radius_; dy <= radius_; ++dy) {
            for (int dx = -radius_; dx <= radius_; ++dx) {
                const int cx = px + dx;
                const int cy = py + dy;
                if (cx - half_ < 0 || cy - half_ < 0 || cx + half_ >= nw || cy + half_ >= nh) continue;
                const std::int64_t s = box(sum_, cx, cy);
                const std::int64_t q = box(sq_, cx, cy);
                const std::int64_t nvar_n = n * q - s * s;
                if (nvar_n <= 0) continue;
                double cross = 0;
                std::size_t k = 0;
                for (int yy = cy - half_; yy <= cy + half_; ++yy)
                    for (int xx = cx - half_; xx <= cx + half_; ++xx) cross += tpl[k++] * nb_.at(xx, yy);
                const double ncc = cross / (tnorm * std::sqrt(static_cast<double>(nvar_n) / static_cast<double>(n)));
                const int d2 = dx * dx + dy * dy;
                if (!found || ncc > best.confidence || (ncc == best.confidence && d2 < best_d2)) {
                    best = {dx, dy, std::clamp(ncc, -1.0, 1.0)};
                    best_d2 = d2;
                    found = true;
                }
            }
        }
        return best;
    }

private:
    std::size_t at(int x, int y) const { return static_cast<std::size_t>(y) * (nb_.width() + 1) + x; }

    std::int64_t box(const std::vector<std::int64_t>& t, int cx, int cy) const {
        const int x0 = cx - half_, y0 = cy - half_, x1 = cx + half_ + 1, y1 = cy + half_ + 1;
        return t[at(x1, y1)] - t[at(x0, y1)] - t[at(x1, y0)] + t[at(x0, y0)];
    }

    const Image& img_;
    const Image& nb_;
    int half_;
    int radius_;
    std::vector<std::int64_t> sum_, sq_;
};

} // namespace

Correspondence find_correspondence(const Image& img, const Image& neighbor, int px, int py, const CamConfig& cfg) {
    cfg.validate();
    return Matcher(img, neighbor, cfg).match(px, py);
}

CamSliceValue cam_slice(const Image& prev, const Image& cur, const Image& next, const CamConfig& cfg) {
    cfg.validate();
    if (prev.width() != cur.width() || next.width() != cur.width() || prev.height() != cur.height() ||
        next.height() != cur.height())
        throw Error("CAM slices must share dimensions");
    const Matcher to_prev(cur, prev, cfg);
    const Matcher to_next(cur, next, cfg);
    // Inset so that every candidate window of every control point is in bounds.
    const int margin = cfg.match_window / 2 + cfg.search_radius;
    double sum = 0;
    CamSliceValue out;
    for (int y = margin; y + margin < cur.height(); y += cfg.control_grid_spacing) {
        for (int x = margin; x + margin < cur.width(); x += cfg.control_grid_spacing) {
            const Correspondence a = to_prev.match(x, y);
            if (!(a.confidence > cfg.tau)) continue;
            const Correspondence b = to_next.match(x, y);
            if (!(std::min(a.confidence, b.confidence) > cfg.tau)) continue;
            sum += std::hypot(a.dx + b.dx, a.dy + b.dy);
            ++out.count;
        }
    }
    if (out.count > 0) out.cam = sum / out.count;
    return out;
}

CamResult cam_stack(const std::vector<Image>& slices, const CamConfig& cfg, unsigned threads) {
    cfg.validate();
    if (slices.size() < 3) throw Error("CAM needs at least 3 slices");
    CamResult r;
    r.per_slice.resize(slices.size());
    parallel_for(slices.size() - 2, threads, [&](std::size_t k) {
        r.per_slice[k + 1] = cam_slice(slices[k], slices[k + 1], slices[k + 2], cfg);
    });
    double sum = 0;
    for (const auto& v : r.per_slice)
        if (v.cam) {
            sum += *v.cam;
            ++r.available;
        }
    if (r.available > 0) {
        r.mean = sum / r.available;
        double ss = 0;
        for (const auto& v : r.per_slice)
            if (v.cam) ss += (*v.cam - r.mean) * (*v.cam - r.mean);
        r.stddev = std::sqrt(ss / r.available);
    }
    return r;
}

void write_cam_csv(std::ostream& os, const CamResult& result) {
    os << "slice,cam,count\n" << std::setprecision(17);
    for (std::size_t k = 0; k < result.per_slice.size(); ++k) {
        const auto& v = result.per_slice[k];
        os << (k + 1) << ',';
        if (v.cam)
            os << *v.cam;
        else
            os << "nan";
        os << ',' << v.count << '\n';
    }
}

} // namespace histreg
