#include "histreg/error.hpp"
#include "histreg/phantom.hpp"
#include "histreg/standardize.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace histreg;

namespace {

// Contiguous histogram: a background lobe at `bg`, a triangular foreground
// lobe peaking at `mode` and one pixel of every value up to `top`.
Image two_lobe(int bg, int mode, int top, int width = 64) {
    std::vector<Intensity> px;
    for (int v = 0; v <= top; ++v) {
        int n = 1;
        if (std::abs(v - bg) <= 3) n += 100 - 25 * std::abs(v - bg);
        if (std::abs(v - mode) <= 6) n += 60 - 8 * std::abs(v - mode);
        for (int k = 0; k < n; ++k) px.push_back(v);
    }
    while (px.size() % width) px.push_back(bg);
    const int height = static_cast<int>(px.size()) / width;
    return Image(width, height, std::max(top, 255), std::move(px));
}

Image gaussian_mixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> bg(30, 5), fg(150, 10);
    std::bernoulli_distribution is_fg(0.7);
    std::vector<Intensity> px(128 * 128);
    for (auto& v : px) v = static_cast<Intensity>(std::clamp(std::round(is_fg(rng) ? fg(rng) : bg(rng)), 0.0, 255.0));
    return Image(128, 128, 255, std::move(px));
}

double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.pixels()[i] - b.pixels()[i]);
    return s / static_cast<double>(a.size());
}

} // namespace

TEST(Histogram, CountsAndNearestRankPercentiles) {
    const Image img(5, 2, 9, std::vector<Intensity>{1, 2, 2, 3, 3, 3, 4, 4, 4, 9});
    const Histogram h = Histogram::of(img);
    EXPECT_EQ(h.total, 10u);
    EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}), h.total);
    EXPECT_EQ(h.percentile(0), 1);
    EXPECT_EQ(h.percentile(10), 1);
    EXPECT_EQ(h.percentile(11), 2);
    EXPECT_EQ(h.percentile(50), 3);
    EXPECT_EQ(h.percentile(90), 4);
    EXPECT_EQ(h.percentile(100), 9);
}

TEST(Landmarks, ExtremePercentilesHitMinAndMax) {
    const Image img = gaussian_mixture(1);
    StandardScale s;
    s.pc1 = 0;
    s.pc2 = 100;
    const LandmarkSet lm = extract_landmarks(img, s);
    EXPECT_EQ(lm.p1, lm.m1);
    EXPECT_EQ(lm.p2, lm.m2);
}

TEST(Landmarks, MixtureModeNearForegroundMean) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const LandmarkSet lm = extract_landmarks(gaussian_mixture(seed), StandardScale{});
        EXPECT_GE(lm.mu, 140);
        EXPECT_LE(lm.mu, 160);
        EXPECT_LE(lm.m1, lm.p1);
        EXPECT_LT(lm.p1, lm.mu);
        EXPECT_LT(lm.mu, lm.p2);
        EXPECT_LE(lm.p2, lm.m2);
    }
}

TEST(Landmarks, Errors) {
    try {
        (void)extract_landmarks(Image(8, 8, 255, 12), StandardScale{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "degenerate histogram");
    }
    // Monotonically decaying histogram: no foreground peak.
    std::vector<Intensity> px;
    for (int v = 0; v < 40; ++v)
        for (int k = 0; k < 80 - 2 * v; ++k) px.push_back(v);
    while (px.size() % 10) px.push_back(0);
    const Image decay(10, static_cast<int>(px.size()) / 10, 255, px);
    try {
        (void)extract_landmarks(decay, StandardScale{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "not bimodal");
    }
}

TEST(MapToStandard, FixedPointsAndHandExample) {
    const LandmarkSet lm{10, 200, 100, 0, 255};
    const StandardScale s{1, 4095, 2048, 0, 99.8};
    EXPECT_EQ(map_to_standard(100, lm, s), 2048);
    EXPECT_EQ(map_to_standard(10, lm, s), 1);
    EXPECT_EQ(map_to_standard(200, lm, s), 4095);
    // 2048 + (-45)(1 - 2048)/(10 - 100) = 1024.5, rounded half up
    EXPECT_EQ(map_to_standard(55, lm, s), 1025);
}

TEST(MapToStandard, ClampsOutsideRange) {
    const LandmarkSet lm{10, 200, 100, 5, 220};
    const StandardScale s{1, 4095, 2048, 0, 99.8};
    EXPECT_EQ(map_to_standard(-50, lm, s), map_to_standard(5, lm, s));
    EXPECT_EQ(map_to_standard(999, lm, s), map_to_standard(220, lm, s));
}

TEST(MapToStandard, MonotoneOverRandomLandmarks) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        LandmarkSet lm;
        lm.m1 = std::floor(u(rng) * 50);
        lm.p1 = lm.m1 + std::floor(u(rng) * 20);
        lm.mu = lm.p1 + 1 + std::floor(u(rng) * 100);
        lm.p2 = lm.mu + 1 + std::floor(u(rng) * 100);
        lm.m2 = lm.p2 + std::floor(u(rng) * 30);
        StandardScale s;
        s.mu_s = 2 + std::floor(u(rng) * 4092);
        double prev = -1e300;
        for (double x = lm.m1; x <= lm.m2; x += 0.25) {
            const double y = map_to_standard(x, lm, s);
            EXPECT_GE(y, prev);
            prev = y;
        }
    }
}

TEST(MapLinear, EndpointsOnScale) {
    const LandmarkSet lm{10, 200, 100, 0, 255};
    const StandardScale s;
    EXPECT_DOUBLE_EQ(map_linear(10, lm, s), 1);
    EXPECT_DOUBLE_EQ(map_linear(200, lm, s), 4095);
}

TEST(TrainScale, SingleImageGivesItsMappedMode) {
    const Image img = gaussian_mixture(7);
    const StandardScale cfg;
    const LandmarkSet lm = extract_landmarks(img, cfg);
    const StandardScale s = train_scale({img}, cfg);
    EXPECT_EQ(s.mu_s, std::floor(map_linear(lm.mu, lm, cfg) + 0.5));
}

TEST(TrainScale, MeanOfMappedModes) {
    StandardScale cfg;
    cfg.s1 = 0;
    cfg.s2 = 4000;
    cfg.pc1 = 0;
    cfg.pc2 = 100;
    const Image a = two_lobe(0, 50, 100);  // mode maps to 50/100 * 4000 = 2000
    const Image b = two_lobe(0, 105, 200); // 105/200 * 4000 = 2100
    EXPECT_EQ(extract_landmarks(a, cfg).mu, 50);
    EXPECT_EQ(extract_landmarks(b, cfg).mu, 105);
    EXPECT_EQ(train_scale({a, b}, cfg).mu_s, 2050);
}

TEST(TrainScale, InvariantToAddingGainBiasCopy) {
    const Image img = two_lobe(20, 80, 160);
    std::vector<Intensity> px(img.pixels().begin(), img.pixels().end());
    for (auto& v : px) v = 2 * v + 10;
    const Image copy(img.width(), img.height(), 400, px);
    const StandardScale cfg;
    EXPECT_EQ(train_scale({img}, cfg).mu_s, train_scale({img, copy}, cfg).mu_s);
}

TEST(TrainScale, SkipsFailuresWithWarning) {
    std::vector<std::string> warnings;
    const StandardScale s = train_scale({Image(8, 8, 255, 3), gaussian_mixture(2)}, StandardScale{},
                                        [&](const std::string& w) { warnings.push_back(w); });
    EXPECT_EQ(warnings.size(), 1u);
    EXPECT_GT(s.mu_s, s.s1);
    EXPECT_THROW(train_scale({}, StandardScale{}), Error);
    EXPECT_THROW(train_scale({Image(8, 8, 255, 3)}, StandardScale{}), Error);
}

TEST(Standardize, ExtendedRangeIsKept) {
    const Image img = gaussian_mixture(3);
    StandardScale s;
    s.mu_s = 2048;
    const StandardizedImage r = standardize_with_landmarks(img, s);
    EXPECT_GE(r.image.max_gray(), 4095);
    EXPECT_EQ(r.s2_ext, map_to_standard(r.landmarks.m2, r.landmarks, s));
    Intensity mx = 0;
    for (Intensity v : r.image.pixels()) mx = std::max(mx, v);
    EXPECT_EQ(mx, static_cast<Intensity>(r.s2_ext));
}

TEST(Standardize, MinimalTwoValueImageWithForcedLandmarks) {
    const Image img(2, 1, 255, std::vector<Intensity>{10, 200});
    const LandmarkSet lm{10, 200, 100, 10, 200};
    const StandardScale s;
    const Image out = apply_standard_mapping(img, lm, s);
    EXPECT_EQ(out.at(0, 0), 1);
    EXPECT_EQ(out.at(1, 0), 4095);
}

TEST(Standardize, ReStandardizingIsStable) {
    PhantomSpec spec;
    spec.acquisition_noise = 2;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        spec.seed = seed;
        const Image img = generate_phantom(spec).slices[0].image;
        StandardScale s;
        s = train_scale({img}, s);
        const Image once = standardize_image(img, s);
        const Image twice = standardize_image(once, s);
        for (std::size_t i = 0; i < once.size(); ++i) EXPECT_LE(std::abs(once.pixels()[i] - twice.pixels()[i]), 1);
    }
}

TEST(Standardize, ModeOfStandardizedImageIsMuS) {
    PhantomSpec spec;
    spec.acquisition_noise = 2;
    const Image img = generate_phantom(spec).slices[0].image;
    const StandardScale s = train_scale({img}, StandardScale{});
    const LandmarkSet lm = extract_landmarks(standardize_image(img, s), s);
    EXPECT_LE(std::abs(lm.mu - s.mu_s), 1.0);
}

TEST(Standardize, ExactGainBiasPairBecomesIdentical) {
    // b = 1.3 a + 10 holds exactly when a is a multiple of 10.
    PhantomSpec spec;
    const Image base = generate_phantom(spec).slices[0].clean;
    std::vector<Intensity> pa, pb;
    for (Intensity v : base.pixels()) {
        pa.push_back(10 * v);
        pb.push_back(13 * v + 10);
    }
    const Image a(base.width(), base.height(), 2550, pa);
    const Image b(base.width(), base.height(), 3325, pb);
    const StandardScale s;
    const Image sa = standardize_image(a, s);
    const Image sb = standardize_image(b, s);
    int worst = 0;
    for (std::size_t i = 0; i < sa.size(); ++i) worst = std::max(worst, std::abs(sa.pixels()[i] - sb.pixels()[i]));
    EXPECT_LE(worst, 2);
}

TEST(Standardize, ReducesDifferenceUnderGainBias) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        PhantomSpec spec;
        spec.seed = seed;
        spec.acquisition_noise = 1;
        const Image a = generate_phantom(spec).slices[0].image;
        spec.gain_bias = {{1.25, -15.0}};
        const Image b = generate_phantom(spec).slices[0].image;
        const LandmarkSet la = extract_landmarks(a, StandardScale{});
        const StandardScale s = train_scale({a, b}, StandardScale{});
        const double before = mean_abs_diff(a, b) / (la.p2 - la.p1);
        const double after = mean_abs_diff(standardize_image(a, s), standardize_image(b, s)) / (s.s2 - s.s1);
        EXPECT_LT(after, before);
    }
}

TEST(Scale, SaveLoadRoundTrip) {
    histreg::test::TempDir dir("scale");
    StandardScale s{1, 4095, 1876.5, 0.5, 99.8};
    save_scale(dir / "s.txt", s);
    EXPECT_EQ(load_scale(dir / "s.txt"), s);
    EXPECT_NE(histreg::test::read_file(dir / "s.txt").find("format histreg-standard-scale/1"), std::string::npos);
}

TEST(Scale, LoadErrors) {
    histreg::test::TempDir dir("scale_err");
    EXPECT_THROW(load_scale(dir / "missing.txt"), Error);
    {
        std::ofstream out(dir / "bad.txt");
        out << "format other/2\ns1 1\n";
    }
    EXPECT_THROW(load_scale(dir / "bad.txt"), Error);
    {
        std::ofstream out(dir / "inv.txt");
        out << "format histreg-standard-scale/1\ns1 10\ns2 5\nmu_s 7\npc1 0\npc2 99\n";
    }
    EXPECT_THROW(load_scale(dir / "inv.txt"), Error);
}

TEST(Scale, Validation) {
    EXPECT_NO_THROW((StandardScale{}.validate()));
    EXPECT_THROW((StandardScale{1, 4095, 5000, 0, 99.8}.validate()), Error);
    EXPECT_THROW((StandardScale{1, 4095, 2048, 50, 40}.validate()), Error);
    EXPECT_THROW((StandardScale{1, 4095, 2048, 0, 101}.validate()), Error);
}
