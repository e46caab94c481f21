#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "diffuseraw/isp/pipeline.hpp"
#include "diffuseraw/random.hpp"

using namespace diffuseraw;
using namespace diffuseraw::isp;

namespace {

// 4x4 RGGB mosaic with value 10*y + x at (y, x).
Mosaic ramp_mosaic() {
    Mosaic m(4, 4, cfa_pattern::rggb);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) m.at(y, x) = static_cast<float>(10 * y + x);
    }
    return m;
}

Mosaic per_color(cfa_pattern p, int w, int h, float r, float g, float b) {
    Mosaic m(w, h, p);
    const float v[3] = {r, g, b};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) m.at(y, x) = v[cfa_color_at(p, y, x)];
    }
    return m;
}

} // namespace

TEST(Demosaic, HandComputedInteriorAndBorder) {
    auto rgb = demosaic_bilinear(ramp_mosaic());
    // (1,1) is a blue site: R from the four diagonals, G from the four edges.
    EXPECT_FLOAT_EQ(rgb.at(1, 1, 0), (0 + 2 + 20 + 22) / 4.0f);
    EXPECT_FLOAT_EQ(rgb.at(1, 1, 1), (1 + 10 + 12 + 21) / 4.0f);
    EXPECT_FLOAT_EQ(rgb.at(1, 1, 2), 11.0f);
    // (1,2) is a Gb site: R above/below, B left/right.
    EXPECT_FLOAT_EQ(rgb.at(1, 2, 0), (2 + 22) / 2.0f);
    EXPECT_FLOAT_EQ(rgb.at(1, 2, 1), 12.0f);
    EXPECT_FLOAT_EQ(rgb.at(1, 2, 2), (11 + 13) / 2.0f);
    // (2,1) is a Gr site: R left/right, B above/below.
    EXPECT_FLOAT_EQ(rgb.at(2, 1, 0), (20 + 22) / 2.0f);
    EXPECT_FLOAT_EQ(rgb.at(2, 1, 2), (11 + 31) / 2.0f);
    // Corner (0,0): neighbourhood clamps to rows/cols {0,1}.
    EXPECT_FLOAT_EQ(rgb.at(0, 0, 0), 0.0f);
    EXPECT_FLOAT_EQ(rgb.at(0, 0, 1), (1 + 10) / 2.0f);
    EXPECT_FLOAT_EQ(rgb.at(0, 0, 2), 11.0f);
    // Corner (3,3) is blue: R at (2,2), G at (2,3) and (3,2).
    EXPECT_FLOAT_EQ(rgb.at(3, 3, 0), 22.0f);
    EXPECT_FLOAT_EQ(rgb.at(3, 3, 1), (23 + 32) / 2.0f);
    EXPECT_FLOAT_EQ(rgb.at(3, 3, 2), 33.0f);
}

TEST(Demosaic, PerColorConstantIsExactForEveryPattern) {
    for (auto p : all_cfa_patterns) {
        auto rgb = demosaic_bilinear(per_color(p, 6, 8, 0.2f, 0.5f, 0.7f));
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 6; ++x) {
                ASSERT_FLOAT_EQ(rgb.at(y, x, 0), 0.2f);
                ASSERT_FLOAT_EQ(rgb.at(y, x, 1), 0.5f);
                ASSERT_FLOAT_EQ(rgb.at(y, x, 2), 0.7f);
            }
        }
    }
}

TEST(Demosaic, RejectsOddDimensions) {
    EXPECT_THROW(demosaic_bilinear(Mosaic(3, 4, cfa_pattern::rggb)), dimension_error);
}

TEST(WhiteBalance, ScalesSitesByColor) {
    auto m = white_balance(per_color(cfa_pattern::gbrg, 2, 2, 0.1f, 0.2f, 0.3f), {2.0, 1.0, 1.5});
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            const int c = cfa_color_at(cfa_pattern::gbrg, y, x);
            const float expect[3] = {0.2f, 0.2f, 0.45f};
            EXPECT_FLOAT_EQ(m.at(y, x), expect[c]);
        }
    }
    EXPECT_THROW(white_balance(m, {0.0, 1.0, 1.0}), parameter_error);
}

TEST(Ccm, IdentityAndRowSumValidation) {
    LinearImage img(2, 1, 3);
    img.data = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
    EXPECT_EQ(apply_ccm(img, identity_ccm).data, img.data);
    Matrix3 bad = identity_ccm;
    bad[1][1] = 0.9;
    EXPECT_THROW(apply_ccm(img, bad), parameter_error);
    // Row sums of 1 preserve gray.
    LinearImage gray(1, 1, 3);
    gray.data = {0.25f, 0.25f, 0.25f};
    auto out = apply_ccm(gray, IspConfig{}.ccm);
    for (float v : out.data) EXPECT_NEAR(v, 0.25f, 1e-7);
}

TEST(Srgb, CurveValuesAndRoundtrip) {
    EXPECT_DOUBLE_EQ(srgb_encode(0.0), 0.0);
    EXPECT_DOUBLE_EQ(srgb_encode(1.0), 1.0);
    EXPECT_NEAR(srgb_encode(0.0031308), 12.92 * 0.0031308, 1e-12);
    EXPECT_NEAR(srgb_encode(0.18), 1.055 * std::pow(0.18, 1 / 2.4) - 0.055, 1e-12);
    // The two branches meet at the threshold.
    EXPECT_NEAR(srgb_encode(0.0031308), 1.055 * std::pow(0.0031308, 1 / 2.4) - 0.055, 1e-6);
    for (int i = 0; i <= 1000; ++i) {
        const double x = i / 1000.0;
        ASSERT_NEAR(srgb_decode(srgb_encode(x)), x, 1e-12);
        if (i > 0) ASSERT_GT(srgb_encode(x), srgb_encode((i - 1) / 1000.0));
    }
}

TEST(Pipeline, GrayPreservedWithNeutralSettings) {
    IspConfig cfg;
    cfg.wb_gains = {1.0, 1.0, 1.0};
    cfg.ccm = identity_ccm;
    auto out = run_pipeline(per_color(cfa_pattern::rggb, 4, 4, 0.3f, 0.3f, 0.3f), cfg, 1.0);
    EXPECT_EQ(out.space, colorspace::srgb);
    for (float v : out.data) EXPECT_NEAR(v, srgb_encode(0.3), 1e-6);
}

TEST(Pipeline, GoldenValuesForUniformScene) {
    // R=0.2, G=0.3, B=0.1 -> WB (2, 1, 1.6) -> (0.4, 0.3, 0.16) -> CCM -> clip -> sRGB.
    IspConfig cfg;
    auto out = run_pipeline(per_color(cfa_pattern::bggr, 4, 4, 0.1f, 0.15f, 0.05f), cfg, 2.0);
    const double wb[3] = {0.4, 0.3, 0.16};
    double expect[3];
    for (int r = 0; r < 3; ++r) {
        double v = cfg.ccm[r][0] * wb[0] + cfg.ccm[r][1] * wb[1] + cfg.ccm[r][2] * wb[2];
        expect[r] = srgb_encode(std::clamp(v, 0.0, 1.0));
    }
    EXPECT_NEAR(expect[0], srgb_encode(0.488), 1e-12);
    EXPECT_NEAR(expect[1], srgb_encode(0.298), 1e-12);
    EXPECT_NEAR(expect[2], srgb_encode(0.09), 1e-12);
    for (int p = 0; p < 16; ++p) {
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.data[p * 3 + c], expect[c], 2e-6);
    }
}

TEST(Pipeline, PowerGammaOption) {
    IspConfig cfg;
    cfg.wb_gains = {1.0, 1.0, 1.0};
    cfg.ccm = identity_ccm;
    cfg.srgb_gamma = false;
    cfg.gamma = 2.0;
    auto out = run_pipeline(per_color(cfa_pattern::rggb, 2, 2, 0.25f, 0.25f, 0.25f), cfg, 1.0);
    for (float v : out.data) EXPECT_NEAR(v, 0.5f, 1e-6);
}

TEST(Pipeline, OutputInUnitRangeAndDeterministic) {
    BayerImage img(16, 16, cfa_pattern::grbg, 512, 16383);
    rng_t rng(8);
    std::uniform_int_distribution<int> d(0, 16383);
    for (auto& v : img.data) v = static_cast<std::uint16_t>(d(rng));
    auto a = run_pipeline(img, IspConfig{}, 50.0);
    auto b = run_pipeline(img, IspConfig{}, 50.0);
    EXPECT_EQ(a.data, b.data);
    for (float v : a.data) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
    }
}

TEST(Pipeline, RejectsInvalidSettings) {
    auto m = per_color(cfa_pattern::rggb, 2, 2, 0.1f, 0.1f, 0.1f);
    EXPECT_THROW(run_pipeline(m, IspConfig{}, 0.0), parameter_error);
    IspConfig cfg;
    cfg.ccm[0][0] = 2.0;
    EXPECT_THROW(run_pipeline(m, cfg, 1.0), parameter_error);
    cfg = IspConfig{};
    cfg.srgb_gamma = false;
    cfg.gamma = -1;
    EXPECT_THROW(run_pipeline(m, cfg, 1.0), parameter_error);
}

TEST(NormalizeBayer, SubtractsBlackAndClamps) {
    BayerImage img(2, 2, cfa_pattern::rggb, 100, 1100);
    img.data = {50, 100, 600, 1100};
    auto m = normalize_bayer(img);
    EXPECT_EQ(m.data, (std::vector<float>{0.0f, 0.0f, 0.5f, 1.0f}));
}
