#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "diffuseraw/io/ppm.hpp"
#include "diffuseraw/metrics/evaluate.hpp"
#include "diffuseraw/metrics/quality.hpp"
#include "diffuseraw/random.hpp"

namespace fs = std::filesystem;
using namespace diffuseraw;
using namespace diffuseraw::metrics;

namespace {

LinearImage filled(int w, int h, float v) {
    LinearImage img(w, h, 3);
    for (auto& x : img.data) x = v;
    return img;
}

LinearImage random_image(int w, int h, std::uint64_t seed) {
    LinearImage img(w, h, 3);
    rng_t rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : img.data) v = u(rng);
    return img;
}

LinearImage add_noise(const LinearImage& img, double sigma, std::uint64_t seed) {
    LinearImage out = img;
    rng_t rng(seed);
    std::normal_distribution<double> nd(0.0, sigma);
    for (auto& v : out.data) v = static_cast<float>(v + nd(rng));
    return out;
}

double naive_psnr(const LinearImage& a, const LinearImage& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return 10.0 * std::log10(1.0 / (s / a.data.size()));
}

// Direct 2D evaluation of Gaussian-window SSIM on one plane.
double naive_ssim(const std::vector<double>& a, const std::vector<double>& b, int w, int h) {
    const int win = 11;
    const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    std::vector<double> g(win * win);
    double gs = 0;
    for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
            const double di = i - 5, dj = j - 5;
            g[i * win + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            gs += g[i * win + j];
        }
    }
    for (auto& v : g) v /= gs;
    double acc = 0;
    int count = 0;
    for (int y = 0; y + win <= h; ++y) {
        for (int x = 0; x + win <= w; ++x) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j) {
                    const double wt = g[i * win + j];
                    const double va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
                    mx += wt * va;
                    my += wt * vb;
                    sxx += wt * va * va;
                    syy += wt * vb * vb;
                    sxy += wt * va * vb;
                }
            }
            const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
            acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return acc / count;
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("diffuseraw_test_metrics_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST(Psnr, ConstantOffsetGivesTwentyDb) {
    EXPECT_NEAR(psnr(filled(16, 16, 0.5f), filled(16, 16, 0.4f)), 20.0, 1e-6);
    std::vector<double> a(100, 0.3), b(100, 0.4);
    EXPECT_NEAR(psnr(std::span<const double>(a), std::span<const double>(b)), 20.0, 1e-9);
    EXPECT_NEAR(psnr(std::span<const double>(a), std::span<const double>(b), 2.0), 20.0 + 20 * std::log10(2.0), 1e-9);
}

TEST(Psnr, IdenticalInputsHitTheCap) {
    auto x = random_image(8, 8, 1);
    EXPECT_EQ(psnr(x, x), psnr_cap_db);
    EXPECT_TRUE(std::isinf(psnr_raw(std::span<const float>(x.data), std::span<const float>(x.data))));
    EXPECT_EQ(mse(std::span<const float>(x.data), std::span<const float>(x.data)), 0.0);
}

TEST(Psnr, MatchesNaiveOracleAndIsSymmetric) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto a = random_image(12, 10, 2 * s + 1), b = random_image(12, 10, 2 * s + 2);
        EXPECT_NEAR(psnr(a, b), naive_psnr(a, b), 1e-9);
        EXPECT_EQ(psnr(a, b), psnr(b, a));
    }
}

TEST(Psnr, DecreasesWithNoise) {
    auto ref = filled(64, 64, 0.5f);
    double prev = psnr_cap_db;
    for (double sigma : {0.01, 0.05, 0.1}) {
        const double v = psnr(add_noise(ref, sigma, 3), ref);
        EXPECT_LT(v, prev) << "sigma " << sigma;
        prev = v;
    }
}

TEST(Psnr, ShapeMismatchThrows) {
    EXPECT_THROW(psnr(filled(4, 4, 0.0f), filled(4, 5, 0.0f)), dimension_error);
}

TEST(Ssim, IdentityIsExactlyOne) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto x = random_image(24, 20, s);
        EXPECT_EQ(ssim(x, x), 1.0);
    }
    auto c = filled(16, 16, 0.7f);
    EXPECT_EQ(ssim(c, c), 1.0);
}

TEST(Ssim, MatchesNaiveWindowedOracle) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto a = random_image(20, 17, 10 + s);
        auto b = add_noise(a, 0.1, 20 + s);
        const auto la = channel_mean(a), lb = channel_mean(b);
        EXPECT_NEAR(ssim(a, b), naive_ssim(la, lb, 20, 17), 1e-9);
    }
}

TEST(Ssim, SymmetricAndBounded) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto a = random_image(16, 16, 30 + s), b = random_image(16, 16, 40 + s);
        const double v = ssim(a, b);
        EXPECT_DOUBLE_EQ(v, ssim(b, a));
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
    LinearImage a(16, 16, 3), b(16, 16, 3);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            const float v = (x + y) % 2 ? 1.0f : 0.0f;
            for (int c = 0; c < 3; ++c) {
                a.at(y, x, c) = v;
                b.at(y, x, c) = 1.0f - v;
            }
        }
    }
    EXPECT_LT(ssim(a, b), 0.0);
}

TEST(Ssim, SmallPerturbationStaysHigh) {
    auto a = random_image(32, 32, 50);
    const double v = ssim(add_noise(a, 0.01, 51), a);
    EXPECT_GT(v, 0.9);
    EXPECT_LT(v, 1.0);
}

TEST(Ssim, DecreasesWithNoise) {
    auto ref = random_image(32, 32, 52);
    double prev = 1.0;
    for (double sigma : {0.01, 0.05, 0.1}) {
        const double v = ssim(add_noise(ref, sigma, 53), ref);
        EXPECT_LT(v, prev) << "sigma " << sigma;
        prev = v;
    }
}

TEST(Ssim, RejectsImagesSmallerThanWindow) {
    EXPECT_THROW(ssim(filled(10, 16, 0.5f), filled(10, 16, 0.5f)), dimension_error);
    EXPECT_THROW(ssim(filled(16, 16, 0.5f), filled(16, 12, 0.5f)), dimension_error);
}

TEST(Evaluate, GroupsByRatioAndWritesReport) {
    const auto dir = temp_dir("eval");
    const auto out_dir = dir / "out";
    fs::create_directories(out_dir);
    sim::Manifest m;
    m.base_dir = dir;
    for (int s = 0; s < 2; ++s) {
        const std::string ref = "s" + std::to_string(s) + "_ref.ppm";
        save_ppm(dir / ref, random_image(16, 16, 60 + s));
        for (double ratio : {100.0, 300.0}) {
            sim::ManifestRecord r{"s" + std::to_string(s) + "_x" + std::to_string(int(ratio)) + ".braw", ref, ratio, 0};
            m.records.push_back(r);
            auto out = load_ppm(dir / ref);
            if (ratio == 300.0) {
                for (auto& v : out.data) v = std::clamp(v + 0.1f, 0.0f, 1.0f);
            }
            save_ppm(output_path(out_dir, r), out);
        }
    }
    auto report = evaluate(m, out_dir);
    ASSERT_EQ(report.records.size(), 4u);
    ASSERT_EQ(report.by_ratio.size(), 2u);
    EXPECT_EQ(report.at_ratio(100).count, 2);
    EXPECT_EQ(report.at_ratio(300).count, 2);
    EXPECT_EQ(report.at_ratio(100).mean_psnr, psnr_cap_db);
    EXPECT_EQ(report.at_ratio(100).mean_ssim, 1.0);
    EXPECT_LT(report.at_ratio(300).mean_psnr, 25.0);
    EXPECT_NEAR(report.at_ratio(300).mean_psnr, (report.records[1].psnr_db + report.records[3].psnr_db) / 2, 1e-12);
    EXPECT_THROW(report.at_ratio(42), validation_error);

    write_report(dir / "report.tsv", report);
    std::ifstream is(dir / "report.tsv");
    std::string line;
    int rows = 0, means = 0;
    while (std::getline(is, line)) {
        if (line.rfind("# mean", 0) == 0) ++means;
        else if (line[0] != '#') ++rows;
    }
    EXPECT_EQ(rows, 4);
    EXPECT_EQ(means, 2);
    EXPECT_NE(format_summary(report).find("x300"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Evaluate, MissingOutputNamesPair) {
    const auto dir = temp_dir("missing");
    sim::Manifest m;
    m.base_dir = dir;
    save_ppm(dir / "ref.ppm", random_image(16, 16, 70));
    m.records.push_back({"scene_0007_x300.braw", "ref.ppm", 300.0, 0});
    try {
        evaluate(m, dir);
        FAIL() << "expected io_error";
    } catch (const io_error& e) {
        EXPECT_NE(std::string(e.what()).find("scene_0007_x300"), std::string::npos);
    }
    save_ppm(dir / "scene_0007_x300.ppm", random_image(32, 16, 71));
    EXPECT_THROW(evaluate(m, dir), dimension_error);
    EXPECT_THROW(evaluate(sim::Manifest{}, dir), validation_error);
    fs::remove_all(dir);
}
