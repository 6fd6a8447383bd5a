#include <gtest/gtest.h>

#include "drgrade/preprocess.hpp"
#include "drgrade/rng.hpp"
#include "oracles.hpp"

using namespace drgrade;

namespace {

Image random_image(std::size_t h, std::size_t w, Rng& rng, bool integer = false)
{
    Image img({3, h, w});
    for (double& v : img.data()) v = integer ? static_cast<double>(rng.below(256)) : 255.0 * rng.uniform01();
    return img;
}

} // namespace

TEST(Graham, ConstantImageMapsTo128AwayFromBorder)
{
    const double theta = 2.0;
    const Image img({3, 40, 40}, 173.0);
    const Image out = graham(img, GrahamParams{theta});
    const std::size_t margin = static_cast<std::size_t>(3 * theta) + 1;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = margin; y < 40 - margin; ++y)
            for (std::size_t x = margin; x < 40 - margin; ++x) ASSERT_NEAR(out.at(c, y, x), 128.0, 1e-6);
}

TEST(Graham, MatchesDirectTwoDimensionalConvolution)
{
    Rng rng(3);
    for (int t = 0; t < 4; ++t) {
        const double theta = 1.0 + rng.uniform01() * 2.0;
        const Image img = random_image(20 + rng.below(10), 20 + rng.below(10), rng);
        EXPECT_LT(max_abs_diff(graham(img, GrahamParams{theta}), oracle::graham(img, theta)), 1e-6) << "theta " << theta;
    }
    EXPECT_THROW(graham(Image({3, 8, 8}), GrahamParams{0.0}), Error);
}

TEST(Graham, ReflectIndexSkipsTheEdgeSample)
{
    EXPECT_EQ(reflect_index(-1, 5), 1u);
    EXPECT_EQ(reflect_index(-4, 5), 4u);
    EXPECT_EQ(reflect_index(5, 5), 3u);
    EXPECT_EQ(reflect_index(9, 5), 1u);
    EXPECT_EQ(reflect_index(3, 1), 0u);
}

TEST(Clahe, ConstantImageIsUnchanged)
{
    for (double v : {0.0, 17.0, 200.0, 255.0}) {
        const Image img({3, 33, 29}, v);
        EXPECT_EQ(clahe(img, ClaheParams{3.0, 8}), img) << v;
    }
}

TEST(Clahe, UnclippedSingleTileIsHistogramEqualization)
{
    Rng rng(4);
    for (int t = 0; t < 5; ++t) {
        Image img = random_image(24, 31, rng, true);
        // skew the distribution so equalization is not near-identity
        for (double& v : img.data()) v = std::floor(v * v / 255.0);
        const Image out = clahe(img, ClaheParams{std::numeric_limits<double>::infinity(), 1});
        EXPECT_LE(max_abs_diff(out, oracle::histogram_equalize(img)), 1.0);
    }
}

TEST(Clahe, ClippingLimitsContrastGain)
{
    std::array<double, 256> hist{};
    hist[10] = 90;
    hist[200] = 10;
    const auto loose = clahe_tile_mapping(hist, std::numeric_limits<double>::infinity());
    const auto tight = clahe_tile_mapping(hist, 1.0);
    EXPECT_NEAR(loose[10], 255.0 * 0.9, 1e-12);
    EXPECT_NEAR(loose[255], 255.0, 1e-9);
    EXPECT_NEAR(tight[255], 255.0, 1e-9);
    // a ceiling of one average bin caps every step at two average bins
    EXPECT_LT(tight[10], 0.1 * loose[10]);
    for (std::size_t b = 1; b < 256; ++b) {
        EXPECT_GE(tight[b], tight[b - 1]);
        EXPECT_LE(tight[b] - tight[b - 1], 2.0);
    }
    EXPECT_THROW(clahe(Image({3, 8, 8}), ClaheParams{0.5, 8}), Error);
}

TEST(Crop, TightBoxAroundFieldOfView)
{
    Image img({3, 10, 12}, 0.0);
    img.at(1, 2, 3) = 0.5;
    img.at(0, 7, 9) = 0.05;
    img.at(2, 8, 1) = 0.03; // below 10/255
    const Image c = crop_fov(img);
    EXPECT_EQ(c.shape(), (Shape{3, 6, 7}));
    EXPECT_EQ(c.at(1, 0, 0), 0.5);
    EXPECT_THROW(crop_fov(Image({3, 4, 4}, 0.0)), Error);
    EXPECT_EQ(crop_fov(rescale(img, 255.0), 255.0).shape(), (Shape{3, 6, 7}));
}

TEST(Resize, CornersAreExactAndLinearRampsSurvive)
{
    Image ramp({3, 9, 17});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 9; ++y)
            for (std::size_t x = 0; x < 17; ++x) ramp.at(c, y, x) = 2.0 * y + 0.5 * x + c;
    const Image r = resize(ramp, 33, 12);
    EXPECT_EQ(r.at(0, 0, 0), ramp.at(0, 0, 0));
    EXPECT_EQ(r.at(2, 32, 11), ramp.at(2, 8, 16));
    for (std::size_t y = 0; y < 33; ++y)
        for (std::size_t x = 0; x < 12; ++x)
            EXPECT_NEAR(r.at(1, y, x), 2.0 * y * 8.0 / 32.0 + 0.5 * x * 16.0 / 11.0 + 1.0, 1e-12);
    EXPECT_THROW(resize(ramp, 4), Error);
}

TEST(ZScore, ZeroMeanUnitVariance)
{
    Rng rng(9);
    std::vector<Image> imgs{random_image(6, 7, rng), random_image(5, 5, rng)};
    const NormStats st = compute_norm_stats(imgs);
    std::array<double, 3> s{}, s2{};
    double n = 0;
    for (const auto& img : imgs) {
        const Image z = zscore(img, st);
        const std::size_t plane = z.dim(1) * z.dim(2);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                s[c] += z[c * plane + i];
                s2[c] += z[c * plane + i] * z[c * plane + i];
            }
        n += static_cast<double>(plane);
    }
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(s[c] / n, 0.0, 1e-12);
        EXPECT_NEAR(s2[c] / n, 1.0, 1e-12);
    }
    NormStats bad;
    bad.std[1] = 0.0;
    EXPECT_THROW(zscore(imgs[0], bad), Error);
}
