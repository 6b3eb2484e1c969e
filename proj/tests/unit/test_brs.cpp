#include "histreg/brs.hpp"
#include "histreg/error.hpp"
#include "histreg/features.hpp"
#include "histreg/phantom.hpp"
#include "histreg/standardize.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace histreg;

namespace {

std::vector<std::pair<int, int>> ranges(const SubvolumePartition& p) {
    std::vector<std::pair<int, int>> out;
    for (const auto& r : p.ranges) out.emplace_back(r.first, r.last);
    return out;
}

std::vector<Image> standardized(const Phantom& ph) {
    std::vector<Image> raw;
    for (const auto& s : ph.slices) raw.push_back(s.image);
    const StandardScale scale = train_scale(raw, StandardScale{});
    std::vector<Image> out;
    for (const auto& img : raw) out.push_back(standardize_image(img, scale));
    return out;
}

} // namespace

TEST(Partition, Examples) {
    using V = std::vector<std::pair<int, int>>;
    EXPECT_EQ(ranges(partition_stack(10, 5)), (V{{1, 5}, {6, 10}}));
    EXPECT_EQ(ranges(partition_stack(11, 5)), (V{{1, 5}, {6, 11}}));
    EXPECT_EQ(ranges(partition_stack(13, 5)), (V{{1, 5}, {6, 10}, {11, 13}}));
    EXPECT_EQ(ranges(partition_stack(60, 25)), (V{{1, 25}, {26, 60}}));
    EXPECT_EQ(ranges(partition_stack(3, 25)), (V{{1, 3}}));
    const SubvolumePartition big = partition_stack(350, 25);
    ASSERT_EQ(big.ranges.size(), 14u);
    for (const auto& r : big.ranges) EXPECT_EQ(r.count(), 25);
    EXPECT_THROW(partition_stack(0, 5), Error);
    EXPECT_THROW(partition_stack(10, 1), Error);
}

TEST(Partition, ContiguousCover) {
    for (int m = 1; m <= 120; ++m)
        for (int t : {2, 3, 7, 25}) {
            const SubvolumePartition p = partition_stack(m, t);
            EXPECT_EQ(p.total(), m);
            int next = 1;
            for (const auto& r : p.ranges) {
                EXPECT_EQ(r.first, next);
                next = r.last + 1;
            }
        }
}

TEST(SelectFromScores, ThreeSliceExample) {
    const BrsReport r = select_from_scores({4.1, 5.0, 4.3}, {100.0, std::nullopt, 25.0}, 1, 2, BrsMode::eq7);
    EXPECT_EQ(r.max_entropy_slice, 2);
    EXPECT_EQ(r.chosen, 3);
    ASSERT_EQ(r.entries.size(), 3u);
    EXPECT_NEAR(*r.entries[0].score, std::log(5.0 / 100), 1e-15);
    EXPECT_FALSE(r.entries[1].score);
    EXPECT_NEAR(*r.entries[2].score, std::log(5.0 / 25), 1e-15);
    EXPECT_TRUE(r.entries[2].chosen);
    EXPECT_EQ(select_from_scores({4.1, 5.0, 4.3}, {100.0, std::nullopt, 25.0}, 1, 2, BrsMode::max_entropy).chosen, 2);
}

TEST(SelectFromScores, TiesGoToCentreThenLowerIndex) {
    const std::vector<double> e(5, 3.0);
    const std::vector<std::optional<double>> m{7.0, 7.0, std::nullopt, 7.0, 7.0};
    EXPECT_EQ(select_from_scores(e, m, 11, 13, BrsMode::eq7).chosen, 12);
    EXPECT_TRUE(prefer_index(2, 3, 1, 4));
    EXPECT_TRUE(prefer_index(3, 1, 1, 4));
    EXPECT_FALSE(prefer_index(4, 2, 1, 5));
}

TEST(SelectFromScores, ExclusionAndAllExcluded) {
    const BrsReport r = select_from_scores({1, 2, 3}, {std::nullopt, 5.0, std::nullopt}, 1, 3, BrsMode::eq7);
    EXPECT_EQ(r.chosen, 2);
    try {
        (void)select_from_scores({1, 2}, {std::nullopt, std::nullopt}, 1, 2, BrsMode::eq7);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "no viable reference");
    }
}

TEST(SelectFromScores, ScoreOrderMatchesMseOrder) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 500);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> e(7);
        std::vector<std::optional<double>> m(7);
        for (auto& v : e) v = u(rng) / 50;
        for (auto& v : m) v = u(rng);
        m[4].reset();
        const BrsReport r = select_from_scores(e, m, 1, 5, BrsMode::eq7);
        double best = -INFINITY;
        int arg = 0;
        for (const auto& entry : r.entries)
            if (entry.score && *entry.score > best) {
                best = *entry.score;
                arg = entry.slice;
            }
        EXPECT_EQ(r.chosen, arg);
    }
}

TEST(SelectBrs, IdenticalSlicesPickCentre) {
    PhantomSpec spec;
    spec.width = spec.height = 96;
    const Image img = generate_phantom(spec).slices[0].clean;
    const BrsReport r = select_brs({img, img, img, img, img}, 1, RegistrationConfig{});
    EXPECT_EQ(r.max_entropy_slice, 3);
    EXPECT_EQ(r.chosen, 2);
    for (const auto& e : r.entries)
        if (e.slice != 3) EXPECT_EQ(*e.mse, r.entries[0].mse.value());
    // With the max-entropy slice removed, 2 and 4 tie on distance and 2 is lower.
}

TEST(SelectBrs, CorruptedSliceIsNeverChosen) {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const std::vector<Image> slices = standardized(generate_phantom(histreg::test::corrupted_subvolume(seed)));
        const RegistrationConfig cfg;
        const BrsReport r = select_brs(slices, 1, cfg);
        EXPECT_NE(r.chosen, 3) << "seed " << seed;

        std::vector<double> ent;
        for (const auto& s : slices) ent.push_back(histreg::test::entropy_oracle(s));
        const auto mse = histreg::test::pairwise_mse(
            slices, [&](const Image& a, const Image& b) { return register_affine(a, b, cfg).final_mse; });
        const auto [j, brs] = histreg::test::brute_force_brs(ent, mse);
        EXPECT_EQ(r.max_entropy_slice, static_cast<int>(j) + 1);
        EXPECT_EQ(r.chosen, static_cast<int>(brs) + 1);

        // The corrupted slice is the worst match on average across all pairs.
        std::vector<double> mean(5, 0.0);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t k = 0; k < 5; ++k)
                if (i != k) mean[i] += (mse[i][k] + mse[k][i]) / 8.0;
        EXPECT_EQ(std::max_element(mean.begin(), mean.end()) - mean.begin(), 2) << "seed " << seed;
    }
}

TEST(SelectBrs, ThreadsGiveIdenticalReport) {
    const std::vector<Image> slices = standardized(generate_phantom(histreg::test::corrupted_subvolume(21)));
    std::ostringstream a, b;
    write_brs_csv(a, {select_brs(slices, 1, RegistrationConfig{}, BrsMode::eq7, 1, 1)});
    write_brs_csv(b, {select_brs(slices, 1, RegistrationConfig{}, BrsMode::eq7, 1, 4)});
    EXPECT_EQ(a.str(), b.str());
}

TEST(SelectBrs, ErrorsAndFailedRegistrationsAreExcluded) {
    EXPECT_THROW(select_brs({Image(32, 32, 255)}, 1, RegistrationConfig{}), Error);
    PhantomSpec spec;
    spec.width = spec.height = 96;
    const Image img = generate_phantom(spec).slices[0].clean;
    const Image flat(96, 96, 255, 0);
    const BrsReport r = select_brs({img, flat, img}, 1, RegistrationConfig{});
    EXPECT_NE(r.chosen, 2);
    EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(BrsCsv, FormatAndModeNames) {
    BrsReport r = select_from_scores({4.1, 5.0, 4.3}, {100.0, std::nullopt, 25.0}, 1, 2, BrsMode::eq7);
    r.subvolume = 1;
    std::ostringstream os;
    write_brs_csv(os, {r});
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "subvolume,slice,entropy,mse,score,chosen");
    EXPECT_NE(s.find("\n1,2,5,,,0\n"), std::string::npos);
    EXPECT_NE(s.find(",1\n"), std::string::npos);
    EXPECT_EQ(parse_brs_mode("eq7"), BrsMode::eq7);
    EXPECT_EQ(parse_brs_mode(to_string(BrsMode::max_entropy)), BrsMode::max_entropy);
    EXPECT_THROW(parse_brs_mode("best"), Error);
}
