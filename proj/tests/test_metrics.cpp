#include "ifes/error.hpp"
#include "ifes/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace ifes::metrics {
namespace {

GrayImage image(std::size_t w, std::size_t h, std::vector<double> px) {
    return GrayImage(w, h, PixelRange::Byte, std::move(px));
}

GrayImage random_integer_image(std::mt19937_64& rng, std::size_t w = 16, std::size_t h = 16) {
    std::uniform_int_distribution<int> d(0, 255);
    GrayImage img(w, h, PixelRange::Byte);
    for (double& p : img.pixels) p = d(rng);
    return img;
}

// Oracles written independently from the definitions, using maps for the
// histograms instead of fixed bins.
double oracle_ag(const GrayImage& g) {
    double s = 0.0;
    for (std::size_t y = 0; y < g.height - 1; ++y)
        for (std::size_t x = 0; x < g.width - 1; ++x) {
            const double a = g.pixels[(y + 1) * g.width + x] - g.pixels[y * g.width + x];
            const double b = g.pixels[y * g.width + x + 1] - g.pixels[y * g.width + x];
            s += std::sqrt((a * a + b * b) / 2.0);
        }
    return s / static_cast<double>((g.width - 1) * (g.height - 1));
}

double oracle_gld(const GrayImage& g) {
    double s = 0.0;
    for (std::size_t y = 0; y < g.height - 1; ++y)
        for (std::size_t x = 0; x < g.width - 1; ++x) {
            s += std::fabs(g.pixels[y * g.width + x] - g.pixels[(y + 1) * g.width + x]);
            s += std::fabs(g.pixels[y * g.width + x] - g.pixels[y * g.width + x + 1]);
        }
    return s / static_cast<double>((g.width - 1) * (g.height - 1));
}

template <typename Key>
double oracle_entropy_of(const std::map<Key, int>& counts, double n) {
    double h = 0.0;
    for (const auto& [k, c] : counts) h += -(c / n) * std::log(c / n) / std::log(2.0);
    return h;
}

double oracle_en(const GrayImage& g) {
    std::map<int, int> c;
    for (double p : g.pixels) ++c[static_cast<int>(p)];
    return oracle_entropy_of(c, static_cast<double>(g.pixels.size()));
}

double oracle_joint(const GrayImage& a, const GrayImage& b) {
    std::map<std::pair<int, int>, int> c;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) ++c[{static_cast<int>(a.pixels[i]), static_cast<int>(b.pixels[i])}];
    return oracle_entropy_of(c, static_cast<double>(a.pixels.size()));
}

double oracle_mi(const GrayImage& a, const GrayImage& b, const GrayImage& f) {
    return oracle_en(a) + oracle_en(f) - oracle_joint(a, f) + oracle_en(b) + oracle_en(f) - oracle_joint(b, f);
}

double oracle_sf(const GrayImage& byte_img) {
    const double mn = static_cast<double>(byte_img.width * byte_img.height);
    double rf = 0.0;
    double cf = 0.0;
    for (std::size_t y = 0; y < byte_img.height; ++y)
        for (std::size_t x = 0; x < byte_img.width; ++x) {
            const double v = byte_img.pixels[y * byte_img.width + x] / 255.0;
            if (x > 0) rf += std::pow(v - byte_img.pixels[y * byte_img.width + x - 1] / 255.0, 2);
            if (y > 0) cf += std::pow(v - byte_img.pixels[(y - 1) * byte_img.width + x] / 255.0, 2);
        }
    return std::sqrt(rf / mn + cf / mn);
}

GrayImage transpose(const GrayImage& g) {
    GrayImage t(g.height, g.width, g.range);
    for (std::size_t y = 0; y < g.height; ++y)
        for (std::size_t x = 0; x < g.width; ++x) t.at(y, x) = g.at(x, y);
    return t;
}

TEST(MetricOracleTest, RandomImagesMatchLoopReferences) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const GrayImage a = random_integer_image(rng);
        const GrayImage b = random_integer_image(rng);
        const GrayImage f = random_integer_image(rng);
        EXPECT_NEAR(average_gradient(f), oracle_ag(f), 1e-12);
        EXPECT_NEAR(gray_level_difference(f), oracle_gld(f), 1e-12);
        EXPECT_NEAR(entropy(f), oracle_en(f), 1e-12);
        EXPECT_NEAR(mutual_information(a, b, f), oracle_mi(a, b, f), 1e-12);
        EXPECT_NEAR(spatial_frequency(f), oracle_sf(f), 1e-12);
    }
}

TEST(MetricAnchorTest, TwoByTwoGradient) {
    const GrayImage g = image(2, 2, {0, 1, 0, 1});
    EXPECT_NEAR(average_gradient(g), std::sqrt(0.5), 1e-15);
    EXPECT_EQ(gray_level_difference(g), 1.0);
}

TEST(MetricAnchorTest, EntropyOfBalancedImages) {
    EXPECT_EQ(entropy(image(2, 2, {0, 0, 255, 255})), 1.0);
    EXPECT_EQ(entropy(image(2, 2, {0, 85, 170, 255})), 2.0);
    EXPECT_EQ(entropy(image(3, 3, std::vector<double>(9, 17.0))), 0.0);
}

TEST(MetricAnchorTest, SpatialFrequencyOfColumnStripes) {
    // Unit-range columns 0,1: H = sqrt(2/4), V = 0.
    EXPECT_NEAR(spatial_frequency(image(2, 2, {0, 255, 0, 255})), std::sqrt(0.5), 1e-15);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.5f", spatial_frequency(image(2, 2, {0, 255, 0, 255})));
    EXPECT_STREQ(buf, "0.70711");
}

TEST(MetricAnchorTest, SelfInformationIsTwiceEntropy) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const GrayImage i = random_integer_image(rng);
        EXPECT_EQ(mutual_information(i, i, i), 2.0 * entropy(i));
    }
}

TEST(MetricPropertyTest, IndependentImagesShareLittleInformation) {
    std::mt19937_64 rng(3);
    const GrayImage a = random_integer_image(rng, 512, 512);
    const GrayImage b = random_integer_image(rng, 512, 512);
    const GrayImage f = random_integer_image(rng, 512, 512);
    // Plug-in bias with 256^2 joint bins over 2^18 samples is about
    // 2 * 65025 / (2 * 2^18 * ln 2) ~ 0.36 bits for the two terms together.
    EXPECT_LT(mutual_information(a, b, f), 0.5);
    EXPECT_GT(mutual_information(a, b, f), 0.0);
}

TEST(MetricPropertyTest, TransposeInvariance) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const GrayImage g = random_integer_image(rng, 9, 13);
        const GrayImage t = transpose(g);
        EXPECT_NEAR(average_gradient(g), average_gradient(t), 1e-12);
        EXPECT_NEAR(gray_level_difference(g), gray_level_difference(t), 1e-12);
        EXPECT_NEAR(spatial_frequency(g), spatial_frequency(t), 1e-12);
        EXPECT_EQ(entropy(g), entropy(t));
    }
}

TEST(MetricPropertyTest, EntropyAndInformationIgnoreLabels) {
    std::mt19937_64 rng(5);
    std::vector<int> perm(256);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const GrayImage a = random_integer_image(rng);
    const GrayImage b = random_integer_image(rng);
    const GrayImage f = random_integer_image(rng);
    GrayImage relabeled = f;
    for (double& p : relabeled.pixels) p = perm[static_cast<std::size_t>(p)];
    EXPECT_NEAR(entropy(relabeled), entropy(f), 1e-12);
    EXPECT_NEAR(mutual_information(a, b, relabeled), mutual_information(a, b, f), 1e-12);
}

TEST(MetricPropertyTest, AverageGradientNeverExceedsGrayLevelDifference) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const GrayImage g = random_integer_image(rng, 2 + trial % 7, 2 + trial % 5);
        EXPECT_LE(average_gradient(g), gray_level_difference(g) + 1e-12);
    }
}

TEST(MetricPropertyTest, UnitRangeInputIsConverted) {
    std::mt19937_64 rng(7);
    const GrayImage byte_img = random_integer_image(rng);
    const GrayImage unit = byte_img.to_range(PixelRange::Unit);
    EXPECT_NEAR(average_gradient(unit), average_gradient(byte_img), 1e-10);
    EXPECT_EQ(entropy(unit), entropy(byte_img));
    EXPECT_NEAR(spatial_frequency(unit), spatial_frequency(byte_img), 1e-15);
}

TEST(MetricErrorTest, DegenerateAndMismatchedImages) {
    EXPECT_THROW(average_gradient(image(1, 4, {0, 1, 2, 3})), MetricError);
    EXPECT_THROW(gray_level_difference(image(4, 1, {0, 1, 2, 3})), MetricError);
    EXPECT_THROW(spatial_frequency(image(1, 1, {0})), MetricError);
    const GrayImage a = image(2, 2, {0, 1, 2, 3});
    const GrayImage b = image(2, 3, {0, 1, 2, 3, 4, 5});
    EXPECT_THROW(mutual_information(a, a, b), MetricError);
    EXPECT_THROW(evaluate_pair(a, b, a), MetricError);
}

TEST(MetricReportTest, EvaluatePairIdenticalTriple) {
    std::mt19937_64 rng(8);
    const GrayImage i = random_integer_image(rng);
    const MetricRow r = evaluate_pair(i, i, i, "x");
    EXPECT_EQ(r.image, "x");
    EXPECT_EQ(r.mi, 2.0 * r.en);
    EXPECT_NEAR(r.ssim, 1.0, 1e-12);
}

TEST(MetricReportTest, GoldenCsv) {
    MetricReport report;
    report.rows.push_back({"a", 1.0, 2.0, 3.0, 4.0, 0.5, 0.25});
    report.rows.push_back({"b", 3.0, 4.0, 5.0, 6.0, 0.25, 0.75});
    std::ostringstream os;
    write_csv(os, report);
    EXPECT_EQ(os.str(),
              "image,AG,EN,MI,GLD,SF,SSIM\n"
              "a,1.0000,2.0000,3.0000,4.0000,0.5000,0.2500\n"
              "b,3.0000,4.0000,5.0000,6.0000,0.2500,0.7500\n"
              "mean,2.0000,3.0000,4.0000,5.0000,0.3750,0.5000\n");
}

TEST(MetricReportTest, EmptyReportWritesHeaderOnly) {
    std::ostringstream os;
    write_csv(os, MetricReport{});
    EXPECT_EQ(os.str(), "image,AG,EN,MI,GLD,SF,SSIM\n");
}

TEST(MetricReportTest, GrayBinRoundsHalfUpAndClamps) {
    EXPECT_EQ(gray_bin(127.5), 128u);
    EXPECT_EQ(gray_bin(127.49), 127u);
    EXPECT_EQ(gray_bin(-3.0), 0u);
    EXPECT_EQ(gray_bin(300.0), 255u);
}

}  // namespace
}  // namespace ifes::metrics
