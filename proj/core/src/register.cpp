#include "histreg/register.hpp"

#include "histreg/error.hpp"
#include "histreg/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace histreg {

void RegistrationConfig::validate() const {
    if (pyramid_levels < 1) throw Error("pyramid_levels must be >= 1");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
    if (!(convergence_tol > 0)) throw Error("convergence_tol must be > 0");
    if (edgeness_radius < 1) throw Error("edgeness_radius must be >= 1");
    if (lags_block_size < 8) throw Error("lags_block_size must be >= 8");
    if (!(lags_smoothness >= 0)) throw Error("lags_smoothness must be >= 0");
    if (lags_outer_iterations < 1) throw Error("lags_outer_iterations must be >= 1");
    if (!(min_overlap > 0 && min_overlap <= 1)) throw Error("min_overlap must be in (0, 1]");
    if (restandardize) restandardize->validate();
}

namespace {

using Grid = std::vector<double>;

// Damping escalations tried within one iteration before the iterate is
// declared stationary.
constexpr int kMaxDampingTries = 6;

// Pads by replicating the last row and column, so the seam adds no edgeness.
Image pad_to(const Image& img, int w, int h) {
    if (img.width() == w && img.height() == h) return img;
    Image out(w, h, img.max_gray());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.set(x, y, img.at(std::min(x, img.width() - 1), std::min(y, img.height() - 1)));
    out.pixel_size_um = img.pixel_size_um;
    return out;
}

// Separable [1 2 1]/4 with replicated borders.
Grid smooth_binomial(const Grid& in, int w, int h) {
    Grid tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y) {
        const double* row = in.data() + static_cast<std::size_t>(y) * w;
        double* dst = tmp.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            const double l = row[std::max(0, x - 1)];
            const double r = row[std::min(w - 1, x + 1)];
            dst[x] = 0.25 * l + 0.5 * row[x] + 0.25 * r;
        }
    }
    for (int y = 0; y < h; ++y) {
        const double* up = tmp.data() + static_cast<std::size_t>(std::max(0, y - 1)) * w;
        const double* mid = tmp.data() + static_cast<std::size_t>(y) * w;
        const double* dn = tmp.data() + static_cast<std::size_t>(std::min(h - 1, y + 1)) * w;
        double* dst = out.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) dst[x] = 0.25 * up[x] + 0.5 * mid[x] + 0.25 * dn[x];
    }
    return out;
}

struct Gradient {
    Grid gx, gy;
};

// Central differences; border pixels get zero gradient.
Gradient central_gradient(const Grid& v, int w, int h) {
    Gradient g{Grid(v.size(), 0.0), Grid(v.size(), 0.0)};
    for (int y = 1; y + 1 < h; ++y) {
        for (int x = 1; x + 1 < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            g.gx[i] = 0.5 * (v[i + 1] - v[i - 1]);
            g.gy[i] = 0.5 * (v[i + w] - v[i - w]);
        }
    }
    return g;
}

Grid to_grid(const Image& img) { return Grid(img.pixels().begin(), img.pixels().end()); }

// Square erosion by `r`, also dropping the outermost image ring.
OverlapMask erode(const OverlapMask& m, int w, int h, int r) {
    OverlapMask tmp(m.size(), 0), out(m.size(), 0);
    for (int y = 0; y < h; ++y) {
        int run = 0; // length of the current run of set pixels ending at x
        std::vector<int> left(static_cast<std::size_t>(w));
        for (int x = 0; x < w; ++x) {
            run = m[static_cast<std::size_t>(y) * w + x] ? run + 1 : 0;
            left[x] = run;
        }
        for (int x = 0; x < w; ++x) {
            const int xe = std::min(w - 1, x + r);
            const bool inside = x - r >= 0 && x + r < w;
            tmp[static_cast<std::size_t>(y) * w + x] = inside && left[xe] >= 2 * r + 1 ? 1 : 0;
        }
    }
    for (int x = 0; x < w; ++x) {
        int run = 0;
        std::vector<int> up(static_cast<std::size_t>(h));
        for (int y = 0; y < h; ++y) {
            run = tmp[static_cast<std::size_t>(y) * w + x] ? run + 1 : 0;
            up[y] = run;
        }
        for (int y = 0; y < h; ++y) {
            const int ye = std::min(h - 1, y + r);
            const bool inside = y - r >= 0 && y + r < h;
            out[static_cast<std::size_t>(y) * w + x] = inside && up[ye] >= 2 * r + 1 ? 1 : 0;
        }
    }
    for (int x = 0; x < w; ++x) {
        out[x] = 0;
        out[static_cast<std::size_t>(h - 1) * w + x] = 0;
    }
    for (int y = 0; y < h; ++y) {
        out[static_cast<std::size_t>(y) * w] = 0;
        out[static_cast<std::size_t>(y) * w + w - 1] = 0;
    }
    return out;
}

double overlap_fraction(const OverlapMask& m) {
    std::size_t n = 0;
    for (auto v : m) n += v;
    return m.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(m.size());
}

// Pixel centres of a box-filtered level: x_fine = 2 x_coarse + 0.5.
const Vec2 kHalf(0.5, 0.5);

Affine2D to_finer(const Affine2D& coarse) {
    return {coarse.linear(), 2.0 * coarse.offset() + kHalf - coarse.linear() * kHalf};
}

Affine2D to_coarser(const Affine2D& fine) {
    return {fine.linear(), 0.5 * (fine.offset() - kHalf + fine.linear() * kHalf)};
}

Affine2D to_level(Affine2D t, int level) {
    for (int l = 0; l < level; ++l) t = to_coarser(t);
    return t;
}

int usable_levels(int requested, int w, int h) { return std::max(1, std::min(requested, max_pyramid_levels(w, h))); }

// Optional per-level re-standardization of warped sources.
struct Restandardizer {
    std::optional<StandardScale> scale;
    std::optional<LandmarkSet> landmarks;

    // Landmarks come from the overlap only; fill pixels are not image data.
    void refresh(const WarpResult& warped) {
        landmarks.reset();
        if (!scale) return;
        try {
            landmarks = extract_landmarks(Histogram::of(warped.image, warped.mask), *scale);
        } catch (const Error&) {
            // Leave the level unstandardized; coarse levels may be too small
            // to show a clean foreground peak.
        }
    }

    Image apply(Image warped) const {
        if (!landmarks) return warped;
        return apply_standard_mapping(warped, *landmarks, *scale);
    }
};

// ---------------------------------------------------------------------------
// Global models (affine, rigid) in edgeness space

enum class Model { affine, rigid };

int dof(Model m) { return m == Model::affine ? 6 : 3; }

struct GlobalFrame {
    Vec2 center;
    double scale; // coordinate normalisation
};

// Increment U (output-domain map) from the parameter vector.
Affine2D increment(Model model, const Eigen::VectorXd& p, const GlobalFrame& f) {
    if (model == Model::affine) {
        Mat2 d;
        d << p[0], p[1], p[2], p[3];
        const Mat2 m = Mat2::Identity() + d / f.scale;
        return {m, Vec2(p[4], p[5]) - d / f.scale * f.center};
    }
    const Affine2D rot = Affine2D::rotation(p[0] / f.scale, f.center);
    return {rot.linear(), rot.offset() + Vec2(p[1], p[2])};
}

struct GlobalState {
    Affine2D transform;
    Grid features;    // edgeness of the warped source
    OverlapMask mask; // eroded overlap
    double mse = 0;
    double overlap = 0;
};

class GlobalLevel {
public:
    GlobalLevel(const Image& source, const Image& target, const RegistrationConfig& cfg)
        : source_(source), w_(target.width()), h_(target.height()), r_f_(cfg.edgeness_radius),
          min_overlap_(cfg.min_overlap) {
        target_features_ = edgeness_map(target, r_f_).values;
        target_grad_ = central_gradient(smooth_binomial(target_features_, w_, h_), w_, h_);
        restd_.scale = cfg.restandardize;
    }

    void refresh_landmarks(const Affine2D& t) { restd_.refresh(warp_with_mask(source_, t)); }

    std::optional<GlobalState> evaluate(const Affine2D& t) const {
        if (!(std::abs(t.det()) >= 1e-12) || !t.linear().allFinite() || !t.offset().allFinite()) return std::nullopt;
        WarpResult wr = warp_with_mask(source_, t);
        GlobalState s;
        s.transform = t;
        s.overlap = overlap_fraction(wr.mask);
        if (s.overlap < min_overlap_) return std::nullopt;
        const Image warped = restd_.apply(std::move(wr.image));
        s.features = edgeness_map(warped, r_f_).values;
        s.mask = erode(wr.mask, w_, h_, r_f_ + 1);
        double sum = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < s.features.size(); ++i) {
            if (!s.mask[i]) continue;
            const double d = s.features[i] - target_features_[i];
            sum += d * d;
            ++n;
        }
        if (n == 0) return std::nullopt;
        s.mse = sum / static_cast<double>(n);
        return s;
    }

    struct Normal {
        Eigen::MatrixXd hess;
        Eigen::VectorXd rhs;
    };

    // Normal equations around `s`. Throws "degenerate texture" when singular.
    Normal normal_equations(Model model, const GlobalState& s, const GlobalFrame& f) const {
        const int n = dof(model);
        const Gradient g = central_gradient(smooth_binomial(s.features, w_, h_), w_, h_);
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd jac(n);
        for (int y = 0; y < h_; ++y) {
            const double yn = (y - f.center.y()) / f.scale;
            for (int x = 0; x < w_; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w_ + x;
                if (!s.mask[i]) continue;
                const double gx = 0.5 * (g.gx[i] + target_grad_.gx[i]);
                const double gy = 0.5 * (g.gy[i] + target_grad_.gy[i]);
                const double xn = (x - f.center.x()) / f.scale;
                if (model == Model::affine)
                    jac << gx * xn, gx * yn, gy * xn, gy * yn, gx, gy;
                else
                    jac << gy * xn - gx * yn, gx, gy;
                const double r = target_features_[i] - s.features[i];
                hess.selfadjointView<Eigen::Lower>().rankUpdate(jac);
                rhs += jac * r;
            }
        }
        hess = hess.selfadjointView<Eigen::Lower>();
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hess, Eigen::EigenvaluesOnly);
        const double lmax = eig.eigenvalues().maxCoeff();
        if (!(lmax > 0) || eig.eigenvalues().minCoeff() <= 1e-12 * lmax) throw Error("degenerate texture");
        return {hess, rhs};
    }

    static Eigen::VectorXd solve(const Normal& ne, double damping) {
        Eigen::MatrixXd damped = ne.hess;
        damped.diagonal() += damping * ne.hess.diagonal();
        return damped.ldlt().solve(ne.rhs);
    }

private:
    const Image& source_;
    int w_, h_, r_f_;
    double min_overlap_;
    Grid target_features_;
    Gradient target_grad_;
    Restandardizer restd_;
};

RegistrationResult register_global(Model model, const Image& source_in, const Image& target_in,
                                   const RegistrationConfig& cfg, const Affine2D& init) {
    cfg.validate();
    if (source_in.empty() || target_in.empty()) throw Error("empty image");
    const int w = std::max(source_in.width(), target_in.width());
    const int h = std::max(source_in.height(), target_in.height());
    const Image source = pad_to(source_in, w, h);
    const Image target = pad_to(target_in, w, h);

    const int levels = usable_levels(cfg.pyramid_levels, w, h);
    const Pyramid sp = build_pyramid(source, levels);
    const Pyramid tp = build_pyramid(target, levels);

    RegistrationResult result;
    Affine2D t = to_level(init, levels - 1);
    double final_mse = 0;
    bool converged = false;

    for (int l = levels - 1; l >= 0; --l) {
        const Image& src = sp.levels[static_cast<std::size_t>(l)];
        const Image& tgt = tp.levels[static_cast<std::size_t>(l)];
        GlobalLevel level(src, tgt, cfg);
        level.refresh_landmarks(t);
        const GlobalFrame frame{Vec2(0.5 * (tgt.width() - 1), 0.5 * (tgt.height() - 1)),
                                0.5 * std::max(tgt.width(), tgt.height())};

        auto state = level.evaluate(t);
        if (!state) throw Error("insufficient overlap");

        double damping = 1e-3;
        converged = false;
        for (int it = 0; it < cfg.max_iterations; ++it) {
            ++result.iterations_used;
            // Built first so a textureless pair is reported even at zero MSE.
            const auto ne = level.normal_equations(model, *state, frame);
            if (state->mse <= 0) {
                converged = true;
                break;
            }
            std::optional<GlobalState> accepted;
            for (int attempt = 0; attempt < kMaxDampingTries && !accepted; ++attempt) {
                const Eigen::VectorXd p = GlobalLevel::solve(ne, damping);
                std::optional<GlobalState> trial;
                try {
                    trial = level.evaluate(compose(invert(increment(model, p, frame)), state->transform));
                } catch (const Error&) {
                    trial.reset();
                }
                const bool ok = trial && trial->mse <= state->mse;
                result.log.push_back({l, it, trial ? trial->mse : std::numeric_limits<double>::infinity(), ok});
                if (ok) {
                    accepted = std::move(trial);
                    damping = std::max(damping * 0.1, 1e-7);
                } else {
                    damping *= 10.0;
                }
            }
            // No damped step improves: the iterate is a stationary point of the
            // sampled objective and the relative change is zero.
            if (!accepted) {
                converged = true;
                break;
            }
            const double rel = (state->mse - accepted->mse) / state->mse;
            state = std::move(accepted);
            if (rel < cfg.convergence_tol) {
                converged = true;
                break;
            }
        }
        t = state->transform;
        final_mse = state->mse;
        if (l > 0) t = to_finer(t);
    }

    result.transform = t;
    result.final_mse = final_mse;
    result.converged = converged;
    return result;
}

// ---------------------------------------------------------------------------
// LAGS

struct BlockGrid {
    int spacing = 16;
    int half = 16; // half window edge
    int nx = 0, ny = 0;

    BlockGrid(int w, int h, int block) : spacing(std::max(4, block / 2)), half(std::max(4, block / 2)) {
        nx = (w - 1 + spacing - 1) / spacing + 1;
        ny = (h - 1 + spacing - 1) / spacing + 1;
    }
    Vec2 center(int i, int j) const { return {static_cast<double>(i * spacing), static_cast<double>(j * spacing)}; }
    int id(int i, int j) const { return j * nx + i; }
    int count() const { return nx * ny; }
};

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Node parameters (D00 D01 D10 D11 dx dy): displacement D (x - c)/half + d.
Vec6 shift_to(const Vec6& p, const Vec2& from, const Vec2& to, double half) {
    Vec6 q = p;
    const Vec2 dc = (to - from) / half;
    q[4] += p[0] * dc.x() + p[1] * dc.y();
    q[5] += p[2] * dc.x() + p[3] * dc.y();
    return q;
}

// Absolute increment affine of a node: x -> x + D (x - c)/half + d.
Affine2D node_increment(const Vec6& p, const Vec2& c, double half, double step) {
    Mat2 d;
    d << p[0], p[1], p[2], p[3];
    d *= step / half;
    return {Mat2::Identity() + d, step * Vec2(p[4], p[5]) - d * c};
}

double masked_mse(const Image& a, const Image& b, const OverlapMask& mask) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!mask[i]) continue;
        const double d = static_cast<double>(a.pixels()[i]) - b.pixels()[i];
        sum += d * d;
        ++n;
    }
    if (n == 0) throw Error("no overlap");
    return sum / static_cast<double>(n);
}

struct FieldState {
    LocalAffineField field;
    Image warped;
    OverlapMask mask;
    double mse = 0;
};

class LagsLevel {
public:
    LagsLevel(const Image& source, const Image& target, const RegistrationConfig& cfg, int block)
        : source_(source), target_(target), w_(target.width()), h_(target.height()), cfg_(cfg),
          grid_(target.width(), target.height(), block) {
        target_grad_ = central_gradient(smooth_binomial(to_grid(target), w_, h_), w_, h_);
        restd_.scale = cfg.restandardize;
    }

    void refresh_landmarks(const LocalAffineField& f) { restd_.refresh(warp_with_mask(source_, f)); }

    std::optional<FieldState> evaluate(LocalAffineField f) const {
        if (!f.all_finite()) return std::nullopt;
        WarpResult wr = warp_with_mask(source_, f);
        if (overlap_fraction(wr.mask) < cfg_.min_overlap) return std::nullopt;
        FieldState s{std::move(f), restd_.apply(std::move(wr.image)), std::move(wr.mask), 0.0};
        s.mse = masked_mse(s.warped, target_, s.mask);
        return s;
    }

    // One linearised block solve; returns node parameters.
    std::vector<Vec6> solve(const FieldState& s) const {
        const Gradient g = central_gradient(smooth_binomial(to_grid(s.warped), w_, h_), w_, h_);
        const OverlapMask mask = erode(s.mask, w_, h_, 1);
        const std::size_t n = static_cast<std::size_t>(w_) * h_;
        Grid gx(n), gy(n);
        double energy = 0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < n; ++i) {
            gx[i] = 0.5 * (g.gx[i] + target_grad_.gx[i]);
            gy[i] = 0.5 * (g.gy[i] + target_grad_.gy[i]);
            if (mask[i]) {
                energy += gx[i] * gx[i] + gy[i] * gy[i];
                ++cnt;
            }
        }
        std::vector<Vec6> params(static_cast<std::size_t>(grid_.count()), Vec6::Zero());
        if (cnt == 0 || !(energy > 0)) return params;
        const double norm = static_cast<double>(cnt) / energy; // 1 / mean squared gradient

        std::vector<Mat6> a(params.size(), Mat6::Zero());
        std::vector<Vec6> b(params.size(), Vec6::Zero());
        const double half = grid_.half;
        for (int j = 0; j < grid_.ny; ++j) {
            for (int i = 0; i < grid_.nx; ++i) {
                const Vec2 c = grid_.center(i, j);
                const int x0 = std::max(0, static_cast<int>(c.x() - half));
                const int x1 = std::min(w_ - 1, static_cast<int>(c.x() + half) - 1);
                const int y0 = std::max(0, static_cast<int>(c.y() - half));
                const int y1 = std::min(h_ - 1, static_cast<int>(c.y() + half) - 1);
                Mat6 acc = Mat6::Zero();
                Vec6 rhs = Vec6::Zero();
                Vec6 jac;
                for (int y = y0; y <= y1; ++y) {
                    const double yl = (y - c.y()) / half;
                    for (int x = x0; x <= x1; ++x) {
                        const std::size_t k = static_cast<std::size_t>(y) * w_ + x;
                        if (!mask[k]) continue;
                        const double xl = (x - c.x()) / half;
                        jac << gx[k] * xl, gx[k] * yl, gy[k] * xl, gy[k] * yl, gx[k], gy[k];
                        acc.selfadjointView<Eigen::Lower>().rankUpdate(jac);
                        rhs += jac * (static_cast<double>(target_.pixels()[k]) - s.warped.pixels()[k]);
                    }
                }
                const auto id = static_cast<std::size_t>(grid_.id(i, j));
                a[id] = Mat6(acc.selfadjointView<Eigen::Lower>()) * norm;
                b[id] = rhs * norm;
            }
        }

        // Gauss-Seidel on the coupled system with neighbour-consistent smoothness.
        const double lambda = cfg_.lags_smoothness;
        std::vector<Eigen::LDLT<Mat6>> solvers;
        solvers.reserve(params.size());
        const double ridge = 1e-9;
        for (int j = 0; j < grid_.ny; ++j)
            for (int i = 0; i < grid_.nx; ++i) {
                const int neighbours = (i > 0) + (i + 1 < grid_.nx) + (j > 0) + (j + 1 < grid_.ny);
                Mat6 m = a[static_cast<std::size_t>(grid_.id(i, j))];
                m.diagonal().array() += lambda * neighbours + ridge;
                solvers.emplace_back(m);
            }
        constexpr int kSweeps = 200;
        for (int sweep = 0; sweep < kSweeps; ++sweep) {
            double change = 0;
            for (int j = 0; j < grid_.ny; ++j) {
                for (int i = 0; i < grid_.nx; ++i) {
                    const auto id = static_cast<std::size_t>(grid_.id(i, j));
                    const Vec2 c = grid_.center(i, j);
                    Vec6 rhs = b[id];
                    auto add = [&](int ni, int nj) {
                        rhs += lambda * shift_to(params[static_cast<std::size_t>(grid_.id(ni, nj))],
                                                 grid_.center(ni, nj), c, half);
                    };
                    if (i > 0) add(i - 1, j);
                    if (i + 1 < grid_.nx) add(i + 1, j);
                    if (j > 0) add(i, j - 1);
                    if (j + 1 < grid_.ny) add(i, j + 1);
                    const Vec6 next = solvers[id].solve(rhs);
                    change = std::max(change, (next - params[id]).cwiseAbs().maxCoeff());
                    params[id] = next;
                }
            }
            if (change < 1e-7) break;
        }
        return params;
    }

    // Composes the bilinearly blended node increments (scaled by `step`) into f.
    LocalAffineField apply(const LocalAffineField& f, const std::vector<Vec6>& params, double step) const {
        LocalAffineField out = f;
        const double half = grid_.half;
        for (int y = 0; y < h_; ++y) {
            const double ky = static_cast<double>(y) / grid_.spacing;
            const int j0 = std::min(static_cast<int>(ky), grid_.ny - 1);
            const int j1 = std::min(j0 + 1, grid_.ny - 1);
            const double fy = ky - j0;
            for (int x = 0; x < w_; ++x) {
                const double kx = static_cast<double>(x) / grid_.spacing;
                const int i0 = std::min(static_cast<int>(kx), grid_.nx - 1);
                const int i1 = std::min(i0 + 1, grid_.nx - 1);
                const double fx = kx - i0;
                Mat2 m = Mat2::Zero();
                Vec2 t = Vec2::Zero();
                auto blend = [&](int i, int j, double wgt) {
                    if (wgt == 0) return;
                    const Affine2D inc = node_increment(params[static_cast<std::size_t>(grid_.id(i, j))],
                                                        grid_.center(i, j), half, step);
                    m += wgt * inc.linear();
                    t += wgt * inc.offset();
                };
                blend(i0, j0, (1 - fx) * (1 - fy));
                blend(i1, j0, fx * (1 - fy));
                blend(i0, j1, (1 - fx) * fy);
                blend(i1, j1, fx * fy);
                out.set(x, y, compose(f.at(x, y), Affine2D(m, t)));
            }
        }
        return out;
    }

private:
    const Image& source_;
    const Image& target_;
    int w_, h_;
    const RegistrationConfig& cfg_;
    BlockGrid grid_;
    Gradient target_grad_;
    Restandardizer restd_;
};

LocalAffineField upsample_field(const LocalAffineField& coarse, int w, int h) {
    LocalAffineField fine(w, h);
    const int wc = coarse.width();
    const int hc = coarse.height();
    for (int y = 0; y < h; ++y) {
        const double yc = std::clamp((y - 0.5) / 2.0, 0.0, static_cast<double>(hc - 1));
        const int y0 = std::min(static_cast<int>(yc), hc - 1);
        const int y1 = std::min(y0 + 1, hc - 1);
        const double fy = yc - y0;
        for (int x = 0; x < w; ++x) {
            const double xc = std::clamp((x - 0.5) / 2.0, 0.0, static_cast<double>(wc - 1));
            const int x0 = std::min(static_cast<int>(xc), wc - 1);
            const int x1 = std::min(x0 + 1, wc - 1);
            const double fx = xc - x0;
            std::array<double, 6> p{};
            for (int k = 0; k < 6; ++k) {
                const double top = coarse.param(k, x0, y0) + fx * (coarse.param(k, x1, y0) - coarse.param(k, x0, y0));
                const double bot = coarse.param(k, x0, y1) + fx * (coarse.param(k, x1, y1) - coarse.param(k, x0, y1));
                p[static_cast<std::size_t>(k)] = top + fy * (bot - top);
            }
            fine.set(x, y, to_finer(Affine2D::from_params(p)));
        }
    }
    return fine;
}

} // namespace

RegistrationResult register_affine(const Image& source, const Image& target, const RegistrationConfig& cfg) {
    return register_global(Model::affine, source, target, cfg, Affine2D::identity());
}

RegistrationResult register_affine(const Image& source, const Image& target, const RegistrationConfig& cfg,
                                   const Affine2D& init) {
    return register_global(Model::affine, source, target, cfg, init);
}

RegistrationResult register_rigid(const Image& source, const Image& target, const RegistrationConfig& cfg) {
    return register_global(Model::rigid, source, target, cfg, Affine2D::identity());
}

RegistrationResult register_rigid(const Image& source, const Image& target, const RegistrationConfig& cfg,
                                  const Affine2D& init) {
    return register_global(Model::rigid, source, target, cfg, init);
}

RegistrationResult register_lags(const Image& source_in, const Image& target_in, const Affine2D& init,
                                 const RegistrationConfig& cfg) {
    cfg.validate();
    if (source_in.empty() || target_in.empty()) throw Error("empty image");
    const int w = std::max(source_in.width(), target_in.width());
    const int h = std::max(source_in.height(), target_in.height());
    const Image source = pad_to(source_in, w, h);
    const Image target = pad_to(target_in, w, h);
    const Affine2D init_pull = invert(init);

    const int levels = usable_levels(cfg.pyramid_levels, w, h);
    const Pyramid sp = build_pyramid(source, levels);
    const Pyramid tp = build_pyramid(target, levels);

    RegistrationResult result;
    std::optional<LocalAffineField> field;
    double final_mse = 0;
    bool converged = false;

    for (int l = levels - 1; l >= 0; --l) {
        const Image& src = sp.levels[static_cast<std::size_t>(l)];
        const Image& tgt = tp.levels[static_cast<std::size_t>(l)];
        const int block = std::max(8, cfg.lags_block_size >> l);
        LagsLevel level(src, tgt, cfg, block);

        const LocalAffineField uniform(tgt.width(), tgt.height(), to_level(init_pull, l));
        level.refresh_landmarks(uniform);
        auto state = level.evaluate(uniform);
        if (!state) throw Error("insufficient overlap");
        if (field) {
            auto up = level.evaluate(upsample_field(*field, tgt.width(), tgt.height()));
            if (up && up->mse <= state->mse) state = std::move(up);
        }

        converged = false;
        for (int it = 0; it < cfg.lags_outer_iterations; ++it) {
            ++result.iterations_used;
            if (state->mse <= 0) {
                converged = true;
                break;
            }
            const std::vector<Vec6> params = level.solve(*state);
            bool accepted = false;
            double rel = 0;
            for (double step = 1.0; step >= 0.25 && !accepted; step *= 0.5) {
                auto trial = level.evaluate(level.apply(state->field, params, step));
                const double mse = trial ? trial->mse : std::numeric_limits<double>::infinity();
                accepted = trial && trial->mse <= state->mse;
                result.log.push_back({l, it, mse, accepted});
                if (accepted) {
                    rel = (state->mse - trial->mse) / state->mse;
                    state = std::move(trial);
                }
            }
            if (!accepted || rel < cfg.convergence_tol) {
                converged = true;
                break;
            }
        }
        field = std::move(state->field);
        final_mse = state->mse;
    }

    // Never return something worse than the affine starting point.
    const LocalAffineField uniform(w, h, init_pull);
    final_mse = image_space_mse(source, target, *field);
    if (const double affine_mse = image_space_mse(source, target, uniform); final_mse > affine_mse) {
        field = uniform;
        final_mse = affine_mse;
    }

    result.transform = std::move(*field);
    result.final_mse = final_mse;
    result.converged = converged;
    return result;
}

double image_space_mse(const Image& source, const Image& target, const Affine2D& t) {
    const WarpResult wr = warp_with_mask(source, t);
    return masked_mse(wr.image, target, wr.mask);
}

double image_space_mse(const Image& source, const Image& target, const LocalAffineField& field) {
    const WarpResult wr = warp_with_mask(source, field);
    return masked_mse(wr.image, target, wr.mask);
}

void write_registration_log(std::ostream& os, const RegistrationResult& result) {
    os << "level,iteration,mse,accepted\n";
    os.precision(17);
    for (const auto& r : result.log) os << r.level << ',' << r.iteration << ',' << r.mse << ',' << (r.accepted ? 1 : 0) << '\n';
}

} // namespace histreg
