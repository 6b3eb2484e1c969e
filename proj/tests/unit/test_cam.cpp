#include "histreg/cam.hpp"
#include "histreg/error.hpp"
#include "histreg/phantom.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace histreg;

namespace {

Image textured(int size = 128, std::uint64_t seed = 1) {
    PhantomSpec spec;
    spec.width = spec.height = size;
    spec.seed = seed;
    spec.acquisition_noise = 3;
    return generate_phantom(spec).slices[0].image;
}

// content(x) = img(x - (dx, dy)); exposed pixels replicate the edge.
Image shifted(const Image& img, int dx, int dy) {
    Image out(img.width(), img.height(), img.max_gray());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const int sx = std::clamp(x - dx, 0, img.width() - 1);
            const int sy = std::clamp(y - dy, 0, img.height() - 1);
            out.mutable_pixels()[static_cast<std::size_t>(y) * img.width() + x] = img.at(sx, sy);
        }
    return out;
}

} // namespace

TEST(CamConfig, Validation) {
    EXPECT_NO_THROW(CamConfig{}.validate());
    CamConfig even;
    even.match_window = 20;
    EXPECT_THROW(even.validate(), Error);
    CamConfig sparse;
    sparse.control_grid_spacing = 5;
    EXPECT_THROW(sparse.validate(), Error);
    CamConfig tau;
    tau.tau = 1.5;
    EXPECT_THROW(tau.validate(), Error);
}

TEST(Correspondence, SelfMatch) {
    const Image img = textured();
    const Correspondence c = find_correspondence(img, img, 64, 64, CamConfig{});
    EXPECT_EQ(c.dx, 0);
    EXPECT_EQ(c.dy, 0);
    EXPECT_NEAR(c.confidence, 1.0, 1e-12);
}

TEST(Correspondence, IntegerShift) {
    const Image img = textured();
    const Image moved = shifted(img, 2, 0);
    const Correspondence c = find_correspondence(img, moved, 64, 64, CamConfig{});
    EXPECT_EQ(c.dx, 2);
    EXPECT_EQ(c.dy, 0);
    EXPECT_NEAR(c.confidence, 1.0, 1e-9);
    const Correspondence d = find_correspondence(img, shifted(img, -3, 5), 60, 70, CamConfig{});
    EXPECT_EQ(d.dx, -3);
    EXPECT_EQ(d.dy, 5);
}

TEST(Correspondence, TexturelessWindow) {
    const Image flat(64, 64, 255, 100);
    EXPECT_EQ(find_correspondence(flat, flat, 32, 32, CamConfig{}).confidence, -1.0);
}

TEST(Correspondence, WindowMustBeInside) {
    const Image img = textured(64);
    EXPECT_THROW(find_correspondence(img, img, 3, 30, CamConfig{}), Error);
}

TEST(CamSlice, IdenticalIsZero) {
    const Image img = textured();
    const CamSliceValue v = cam_slice(img, img, img, CamConfig{});
    ASSERT_TRUE(v.cam.has_value());
    EXPECT_EQ(*v.cam, 0.0);
    EXPECT_GT(v.count, 0);
}

TEST(CamSlice, OppositeShiftsCancel) {
    const Image cur = textured();
    const CamSliceValue v = cam_slice(shifted(cur, 2, 0), cur, shifted(cur, -2, 0), CamConfig{});
    ASSERT_TRUE(v.cam);
    EXPECT_NEAR(*v.cam, 0.0, 0.2);
}

TEST(CamSlice, ConsistentShiftsAdd) {
    const Image cur = textured();
    const CamSliceValue v = cam_slice(shifted(cur, 2, 0), cur, shifted(cur, 2, 0), CamConfig{});
    ASSERT_TRUE(v.cam);
    EXPECT_NEAR(*v.cam, 4.0, 0.2);
}

TEST(CamSlice, RaisingTauNeverAddsPoints) {
    const Image a = textured(128, 1), b = textured(128, 2), c = textured(128, 3);
    int prev = std::numeric_limits<int>::max();
    for (double tau : {-1.0, -0.5, 0.0, 0.3, 0.6, 0.9, 0.99}) {
        CamConfig cfg;
        cfg.tau = tau;
        const int n = cam_slice(a, b, c, cfg).count;
        EXPECT_LE(n, prev);
        prev = n;
    }
}

TEST(CamSlice, NoPointsGivesMissing) {
    const Image flat(64, 64, 255, 9);
    const CamSliceValue v = cam_slice(flat, flat, flat, CamConfig{});
    EXPECT_FALSE(v.cam.has_value());
    EXPECT_EQ(v.count, 0);
}

TEST(CamStack, IdenticalSlicesAndErrors) {
    const Image img = textured();
    const CamResult r = cam_stack({img, img, img, img}, CamConfig{});
    EXPECT_EQ(r.mean, 0.0);
    EXPECT_EQ(r.stddev, 0.0);
    EXPECT_EQ(r.available, 2);
    ASSERT_EQ(r.per_slice.size(), 4u);
    EXPECT_FALSE(r.per_slice.front().cam);
    EXPECT_FALSE(r.per_slice.back().cam);
    EXPECT_THROW(cam_stack({img, img}, CamConfig{}), Error);
    EXPECT_THROW(cam_stack({img, img, textured(64)}, CamConfig{}), Error);
}

TEST(CamStack, ReversalSymmetryBiasInvarianceAndThreads) {
    std::vector<Image> stack;
    const Image base = textured();
    const int shifts[] = {0, 2, -1, 3, 0, -2, 1};
    for (int s : shifts) stack.push_back(shifted(base, s, s / 2));
    const CamResult fwd = cam_stack(stack, CamConfig{});
    std::vector<Image> rev(stack.rbegin(), stack.rend());
    const CamResult bwd = cam_stack(rev, CamConfig{}, 3);
    for (std::size_t k = 0; k < stack.size(); ++k) {
        const auto& a = fwd.per_slice[k];
        const auto& b = bwd.per_slice[stack.size() - 1 - k];
        EXPECT_EQ(a.cam.has_value(), b.cam.has_value());
        if (a.cam) EXPECT_EQ(*a.cam, *b.cam);
    }
    std::vector<Image> biased;
    for (const auto& img : stack) {
        std::vector<Intensity> px(img.pixels().begin(), img.pixels().end());
        for (auto& v : px) v += 40;
        biased.emplace_back(img.width(), img.height(), img.max_gray() + 40, px);
    }
    const CamResult b = cam_stack(biased, CamConfig{});
    EXPECT_EQ(b.mean, fwd.mean);
    const CamResult threaded = cam_stack(stack, CamConfig{}, 4);
    EXPECT_EQ(threaded.mean, fwd.mean);
    EXPECT_EQ(threaded.stddev, fwd.stddev);
}

TEST(CamStack, CsvFormat) {
    const Image img = textured(64);
    const CamResult r = cam_stack({img, img, img}, CamConfig{});
    std::ostringstream os;
    write_cam_csv(os, r);
    EXPECT_EQ(os.str().substr(0, 15), "slice,cam,count");
    EXPECT_NE(os.str().find("1,nan,0"), std::string::npos);
}
