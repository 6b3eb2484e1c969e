#include "histreg/error.hpp"
#include "histreg/image.hpp"
#include "histreg/phantom.hpp"
#include "histreg/transform.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace histreg;
using histreg::test::make_image;

TEST(Image, ConstructionChecksRange) {
    EXPECT_THROW(make_image(2, 1, {0, 300}), Error);
    EXPECT_THROW(make_image(2, 2, {0, 1, 2}), Error);
    Image img(3, 2, 100, 7);
    EXPECT_EQ(img.size(), 6u);
    EXPECT_EQ(img.at(2, 1), 7);
    img.set(0, 0, 150);
    EXPECT_EQ(img.max_gray(), 150);
    EXPECT_THROW(img.set(1, 0, -1), Error);
    EXPECT_THROW(img.set_max_gray(10), Error);
}

TEST(Grayscale, Extremes) {
    RgbImage c{2, 1, {{255, 255, 255}, {0, 0, 0}}};
    const Image g = to_grayscale(c);
    EXPECT_EQ(g.at(0, 0), 255);
    EXPECT_EQ(g.at(1, 0), 0);
    EXPECT_EQ(g.max_gray(), 255);
}

TEST(Grayscale, WeightedSum) {
    // 0.299*100 + 0.587*150 + 0.114*200 = 29.9 + 88.05 + 22.8 = 140.75
    RgbImage c{1, 1, {{100, 150, 200}}};
    EXPECT_EQ(to_grayscale(c).at(0, 0), 141);
}

TEST(Grayscale, MatchesRoundedLumaEverywhere) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> d(0, 255);
    RgbImage c{64, 64, {}};
    for (int i = 0; i < 64 * 64; ++i)
        c.pixels.push_back({static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)),
                            static_cast<std::uint8_t>(d(rng))});
    const Image g = to_grayscale(c);
    for (int i = 0; i < 64 * 64; ++i) {
        const auto& p = c.pixels[static_cast<std::size_t>(i)];
        const double luma = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
        EXPECT_LE(std::abs(g.pixels()[static_cast<std::size_t>(i)] - luma), 0.5 + 1e-9);
    }
}

TEST(Grayscale, EmptyThrows) {
    RgbImage c;
    EXPECT_THROW(to_grayscale(c), Error);
}

TEST(Bilinear, GridPointsMidpointAndFill) {
    const Image img = make_image(2, 1, {10, 20});
    EXPECT_DOUBLE_EQ(sample_bilinear(img, 0, 0), 10.0);
    EXPECT_DOUBLE_EQ(sample_bilinear(img, 1, 0), 20.0);
    EXPECT_DOUBLE_EQ(sample_bilinear(img, 0.5, 0), 15.0);
    EXPECT_DOUBLE_EQ(sample_bilinear(img, -5, 0), 0.0);
    EXPECT_DOUBLE_EQ(sample_bilinear(img, -5, 0, 42.0), 42.0);
    EXPECT_DOUBLE_EQ(sample_bilinear(img, 1.5, 0), 0.0);
}

TEST(Bilinear, MonotoneBetweenNeighbours) {
    const Image img = make_image(2, 2, {0, 100, 50, 200});
    double prev = -1;
    for (int k = 0; k <= 20; ++k) {
        const double v = sample_bilinear(img, k / 20.0, 0.3);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(Warp, IdentityIsExact) {
    histreg::PhantomSpec spec;
    spec.width = spec.height = 64;
    const Image img = generate_phantom(spec).slices[0].image;
    EXPECT_EQ(warp(img, Affine2D::identity()), img);
    EXPECT_EQ(warp(img, LocalAffineField(64, 64)), img);
}

TEST(Warp, IntegerTranslationShiftsColumns) {
    std::mt19937_64 rng(5);
    const Image img = histreg::test::random_image(rng, 16, 8, 255);
    const WarpResult r = warp_with_mask(img, Affine2D::translation(3, 0));
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) {
            if (x < 3) {
                EXPECT_EQ(r.image.at(x, y), 0);
                EXPECT_EQ(r.mask[static_cast<std::size_t>(y) * 16 + x], 0);
            } else {
                EXPECT_EQ(r.image.at(x, y), img.at(x - 3, y));
            }
        }
}

TEST(Warp, RoundTripOnSmoothPhantom) {
    histreg::PhantomSpec spec;
    spec.width = spec.height = 128;
    spec.edge_width = 3.0;
    const Image img = generate_phantom(spec).slices[0].clean;
    const Affine2D t = histreg::test::about_center(128, 128, 4.0, 1.02, 0.99, 0.01, Vec2(1.3, -0.7));
    const Image back = warp(warp(img, t), invert(t));
    int worst = 0;
    for (int y = 16; y < 112; ++y)
        for (int x = 16; x < 112; ++x) worst = std::max(worst, std::abs(back.at(x, y) - img.at(x, y)));
    EXPECT_LE(worst, 2);
}

TEST(Warp, FieldWithUniformAffineMatchesAffineWarp) {
    std::mt19937_64 rng(9);
    const Image img = histreg::test::random_image(rng, 32, 32, 255);
    const Affine2D t = histreg::test::about_center(32, 32, 3.0, 1.0, 1.0, 0.0, Vec2(0.5, 0.25));
    EXPECT_EQ(warp(img, t), warp(img, LocalAffineField(32, 32, invert(t))));
}

TEST(Warp, SingularThrows) {
    const Image img(8, 8, 255);
    const Affine2D flat(Mat2::Zero(), Vec2::Zero());
    try {
        (void)warp(img, flat);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "singular transform");
    }
}

TEST(Pyramid, SingleLevelIsOriginal) {
    std::mt19937_64 rng(1);
    const Image img = histreg::test::random_image(rng, 20, 20, 255);
    const Pyramid p = build_pyramid(img, 1);
    ASSERT_EQ(p.levels.size(), 1u);
    EXPECT_EQ(p.levels[0], img);
    EXPECT_EQ(p.decimation_factor, 2);
}

TEST(Pyramid, ConstantStaysConstant) {
    const Image img(64, 64, 255, 77);
    const Pyramid p = build_pyramid(img, 3);
    for (const auto& l : p.levels)
        for (Intensity v : l.pixels()) EXPECT_EQ(v, 77);
}

TEST(Pyramid, BlockMeans) {
    const Image img = make_image(4, 4, {0, 0, 100, 100, 0, 0, 100, 100, 20, 40, 7, 9, 60, 80, 11, 13});
    const Image c = downsample(img);
    EXPECT_EQ(c.width(), 2);
    EXPECT_EQ(c.height(), 2);
    EXPECT_EQ(c.at(0, 0), 0);
    EXPECT_EQ(c.at(1, 0), 100);
    EXPECT_EQ(c.at(0, 1), 50);
    EXPECT_EQ(c.at(1, 1), 10);
}

TEST(Pyramid, OddDimensionsUseCeilAndReplicate) {
    const Image img = make_image(3, 1, {10, 20, 30});
    const Image c = downsample(img);
    EXPECT_EQ(c.width(), 2);
    EXPECT_EQ(c.height(), 1);
    EXPECT_EQ(c.at(0, 0), 15);
    EXPECT_EQ(c.at(1, 0), 30);
    const Pyramid p = build_pyramid(Image(33, 70, 255), 2);
    EXPECT_EQ(p.levels[1].width(), 17);
    EXPECT_EQ(p.levels[1].height(), 35);
}

TEST(Pyramid, TooDeepThrows) {
    EXPECT_EQ(max_pyramid_levels(64, 64), 3);
    EXPECT_NO_THROW(build_pyramid(Image(64, 64, 255), 3));
    try {
        (void)build_pyramid(Image(64, 64, 255), 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(std::string(e.what()).rfind("pyramid too deep", 0), 0u) << e.what();
    }
    EXPECT_THROW(build_pyramid(Image(64, 64, 255), 0), Error);
}

TEST(Pyramid, PreservesMeanOnEvenImages) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const Image img = histreg::test::random_image(rng, 64, 64, 255);
        const Pyramid p = build_pyramid(img, 3);
        auto mean = [](const Image& i) {
            double s = 0;
            for (Intensity v : i.pixels()) s += v;
            return s / static_cast<double>(i.size());
        };
        for (std::size_t l = 1; l < p.levels.size(); ++l)
            EXPECT_LE(std::abs(mean(p.levels[l]) - mean(p.levels[l - 1])), 1.0);
    }
}
