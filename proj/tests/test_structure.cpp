#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <qnmsaw/structure.hpp>

using namespace qnmsaw;

namespace {

CrystalRecipe uniform(std::size_t n, double pitch, double ratio = 0.5) {
    CrystalRecipe r;
    r.n_total = n;
    r.center_strip_period = pitch;
    r.metallization_ratio = ratio;
    return r;
}

void expect_alternating(const StructureSpec& s) {
    ASSERT_FALSE(s.segments.empty());
    EXPECT_EQ(s.segments.front().kind, SegmentKind::gap);
    EXPECT_EQ(s.segments.back().kind, SegmentKind::gap);
    for (std::size_t i = 1; i < s.segments.size(); ++i) EXPECT_NE(s.segments[i].kind, s.segments[i - 1].kind);
}

} // namespace

TEST(BuildUniformCrystal, SingleCellUsesHalfGaps) {
    const StructureSpec s = build_uniform_crystal(uniform(1, 1e-6));
    ASSERT_EQ(s.segments.size(), 3u);
    EXPECT_DOUBLE_EQ(s.segments[0].length, 0.25e-6);
    EXPECT_DOUBLE_EQ(s.segments[1].length, 0.5e-6);
    EXPECT_DOUBLE_EQ(s.segments[2].length, 0.25e-6);
    EXPECT_EQ(s.segments[1].kind, SegmentKind::strip);
    EXPECT_DOUBLE_EQ(s.total_length(), 1e-6);
}

TEST(BuildUniformCrystal, SixHundredStrips) {
    const StructureSpec s = build_uniform_crystal(uniform(600, 0.475e-6));
    EXPECT_EQ(s.segments.size(), 1201u);
    EXPECT_EQ(s.strip_count(), 600u);
    EXPECT_NEAR(s.total_length(), 285e-6, 285e-6 * 1e-12);
    expect_alternating(s);
    EXPECT_NO_THROW(s.validate());
}

TEST(BuildUniformCrystal, RejectsDegenerateStrip) {
    try {
        build_uniform_crystal(uniform(10, 1e-6, 0.0));
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("metallization_ratio"), std::string::npos);
    }
    EXPECT_THROW(build_uniform_crystal(uniform(0, 1e-6)), ValidationError);
    EXPECT_THROW(build_uniform_crystal(uniform(10, -1e-6)), ValidationError);
}

TEST(BuildMirroredCrystal, R9Layout) {
    CrystalRecipe r = uniform(600, 0.475e-6);
    r.n_mirror = 250;
    r.mirror_strip_period = 0.48e-6;
    const StructureSpec s = build_mirrored_crystal(r, kDefaultV0, "R9");
    EXPECT_EQ(s.strip_count(), 600u);
    EXPECT_EQ(s.segments.size(), 1201u);
    expect_alternating(s);
    // strips 0..249 and 350..599 are mirror strips, 250..349 the centre
    std::size_t strip = 0, center = 0, mirror = 0;
    for (const auto& seg : s.segments) {
        if (seg.kind != SegmentKind::strip) continue;
        if (std::abs(seg.length - 0.24e-6) < 1e-15) ++mirror;
        if (std::abs(seg.length - 0.2375e-6) < 1e-15) {
            ++center;
            EXPECT_GE(strip, 250u);
            EXPECT_LT(strip, 350u);
        }
        ++strip;
    }
    EXPECT_EQ(center, 100u);
    EXPECT_EQ(mirror, 500u);
    EXPECT_NEAR(s.total_length(), 100 * 0.475e-6 + 500 * 0.48e-6, 1e-18);
    // the transition gap is half of each neighbouring gap
    EXPECT_DOUBLE_EQ(s.segments[500].length, 0.5 * 0.24e-6 + 0.5 * 0.2375e-6);
}

TEST(BuildMirroredCrystal, ZeroMirrorsMatchesUniform) {
    const CrystalRecipe r = uniform(37, 0.5e-6, 0.4);
    EXPECT_EQ(build_mirrored_crystal(r), build_uniform_crystal(r));
}

TEST(BuildMirroredCrystal, RejectsMissingCenter) {
    CrystalRecipe r = uniform(300, 0.475e-6);
    r.n_mirror = 150;
    EXPECT_THROW(build_mirrored_crystal(r), ValidationError);
    r.n_mirror = 149;
    EXPECT_NO_THROW(build_mirrored_crystal(r));
}

TEST(BuildEmptyCavity, MatchesR9Footprint) {
    CavityRecipe c;
    c.gap_length = 47.5e-6;
    c.n_mirror = 250;
    const StructureSpec s = build_empty_cavity(c);
    EXPECT_EQ(s.strip_count(), 500u);
    expect_alternating(s);
    EXPECT_NEAR(s.total_length(), build_catalog_structure("R9").total_length(), 1e-15);
    // the cavity is one long gap in the middle
    const Segment& mid = s.segments[s.segments.size() / 2];
    EXPECT_EQ(mid.kind, SegmentKind::gap);
    EXPECT_DOUBLE_EQ(mid.length, 47.5e-6 + 0.24e-6);
    EXPECT_EQ(s, s.reversed());
}

TEST(BuildEmptyCavity, DegenerateInputs) {
    CavityRecipe c;
    c.gap_length = 10e-6;
    c.n_mirror = 0;
    const StructureSpec bare = build_empty_cavity(c);
    ASSERT_EQ(bare.segments.size(), 1u);
    EXPECT_DOUBLE_EQ(bare.total_length(), 10e-6);
    c.gap_length = 0.0;
    EXPECT_THROW(build_empty_cavity(c), ValidationError);
}

TEST(RecipeCatalog, NineEntriesInSurveyOrder) {
    const auto cat = recipe_catalog();
    ASSERT_EQ(cat.size(), 9u);
    EXPECT_EQ(cat.front().first, "R1");
    EXPECT_EQ(cat.front().second.n_mirror, 0u);
    EXPECT_EQ(cat.back().first, "R9");
    EXPECT_EQ(cat.back().second.n_total, 600u);
    EXPECT_EQ(cat.back().second.n_mirror, 250u);
    for (const auto& [label, r] : cat) {
        EXPECT_DOUBLE_EQ(r.center_strip_period, 0.475e-6) << label;
        EXPECT_DOUBLE_EQ(r.mirror_strip_period, 0.48e-6) << label;
        EXPECT_DOUBLE_EQ(r.single_strip_reflectance, 0.015) << label;
    }
    EXPECT_THROW(catalog_recipe("R10"), ValidationError);
}

TEST(StripIndex, FromReflectance) {
    EXPECT_NEAR(strip_index(0.015), 1.0075 / 0.9925, 1e-15);
    EXPECT_NEAR(strip_index(0.015), 1.015113, 1e-6);
    EXPECT_DOUBLE_EQ(strip_index(0.0), 1.0);
    EXPECT_THROW(strip_index(-0.1), ValidationError);
    EXPECT_THROW(strip_index(2.0), ValidationError);
}

TEST(StructureSpec, ValidateCatchesBadLayouts) {
    StructureSpec s{{{1e-6, 1.0, SegmentKind::gap}, {1e-6, 1.1, SegmentKind::strip}}, kDefaultV0, ""};
    EXPECT_THROW(s.validate(), ValidationError);  // ends in a strip
    s.segments.push_back({1e-6, 1.0, SegmentKind::gap});
    EXPECT_NO_THROW(s.validate());
    s.segments[0].index = 1.2;
    EXPECT_THROW(s.validate(), ValidationError);  // gap index must be 1
    s.segments[0].index = 1.0;
    s.segments[1].index = 0.9;
    EXPECT_THROW(s.validate(), ValidationError);
    s.segments[1].index = 1.1;
    s.segments[2].length = 0.0;
    EXPECT_THROW(s.validate(), ValidationError);
}

TEST(StructureSpec, NodePositions) {
    const StructureSpec s = build_uniform_crystal(uniform(2, 1e-6));
    const auto x = s.node_positions();
    ASSERT_EQ(x.size(), 5u);
    EXPECT_DOUBLE_EQ(x[0], 0.0);
    EXPECT_DOUBLE_EQ(x[1], 0.5e-6);
    EXPECT_DOUBLE_EQ(x[2], 1.0e-6);
    EXPECT_DOUBLE_EQ(x[3], 1.5e-6);
    EXPECT_DOUBLE_EQ(x[4], 2.0e-6);
}

// Property: random recipes give alternating, palindromic, length-closed
// structures.
TEST(StructureProperties, RandomRecipes) {
    std::mt19937 rng(12345);
    std::uniform_int_distribution<int> n_dist(1, 400);
    std::uniform_real_distribution<double> pitch(0.2e-6, 2e-6), ratio(0.05, 0.95), rs(0.0, 0.1);
    for (int trial = 0; trial < 200; ++trial) {
        CrystalRecipe r;
        r.n_total = static_cast<std::size_t>(n_dist(rng));
        r.n_mirror = std::uniform_int_distribution<std::size_t>(0, (r.n_total - 1) / 2)(rng);
        r.center_strip_period = pitch(rng);
        r.mirror_strip_period = pitch(rng);
        r.metallization_ratio = ratio(rng);
        r.single_strip_reflectance = rs(rng);
        const StructureSpec s = build_mirrored_crystal(r);
        ASSERT_NO_THROW(s.validate());
        expect_alternating(s);
        EXPECT_EQ(s.segments.size(), 2 * r.n_total + 1);
        EXPECT_EQ(s, s.reversed());
        const double expected = static_cast<double>(r.n_total - 2 * r.n_mirror) * r.center_strip_period +
                                static_cast<double>(2 * r.n_mirror) * r.mirror_strip_period;
        EXPECT_NEAR(s.total_length(), expected, expected * 1e-12);
    }
}
