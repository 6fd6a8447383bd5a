#include <gtest/gtest.h>

#include <set>

#include "drgrade/augment.hpp"

using namespace drgrade;

namespace {

Image random_unit_image(std::size_t h, std::size_t w, Rng& rng)
{
    Image img({3, h, w});
    for (double& v : img.data()) v = rng.uniform01();
    return img;
}

} // namespace

TEST(Augment, FlipsAreInvolutions)
{
    Rng rng(1);
    const Image img = random_unit_image(5, 7, rng);
    EXPECT_EQ(hflip(hflip(img)), img);
    EXPECT_EQ(vflip(vflip(img)), img);
    EXPECT_EQ(hflip(img).at(2, 1, 0), img.at(2, 1, 6));
    EXPECT_EQ(vflip(img).at(0, 0, 3), img.at(0, 4, 3));
}

TEST(Augment, RightAngleRotationsPermutePixels)
{
    Rng rng(2);
    const Image img = random_unit_image(6, 6, rng);
    EXPECT_LT(max_abs_diff(rotate(img, 0.0), img), 1e-15);
    EXPECT_LT(max_abs_diff(rotate(img, 360.0), img), 1e-12);
    EXPECT_LT(max_abs_diff(rotate(img, 180.0), hflip(vflip(img))), 1e-12);
    const Image r90 = rotate(img, 90.0);
    EXPECT_LT(max_abs_diff(rotate(r90, 270.0), img), 1e-12);
}

TEST(Augment, RotationFillsCornersWithBlack)
{
    const Image white({3, 9, 9}, 1.0);
    const Image r = rotate(white, 45.0);
    EXPECT_EQ(r.at(0, 0, 0), 0.0);
    EXPECT_NEAR(r.at(0, 4, 4), 1.0, 1e-12);
}

TEST(Augment, FullFrameCropIsIdentityAndZoomIsCentred)
{
    Rng rng(3);
    const Image img = random_unit_image(8, 10, rng);
    EXPECT_LT(max_abs_diff(crop_resize(img, 0, 0, 8, 10), img), 1e-15);
    EXPECT_LT(max_abs_diff(random_crop(img, 1.0, 1.0, 0.3, 0.9), img), 1e-15);
    // zooming out past the frame pads with black
    const Image out = random_crop(Image({3, 8, 8}, 1.0), 1.15, 1.0, 0.5, 0.5);
    EXPECT_LT(out.at(1, 0, 0), 0.5);
    EXPECT_EQ(out.at(1, 4, 4), 1.0);
    EXPECT_THROW(crop_resize(img, 0, 0, 0, 5), Error);
}

TEST(Augment, HsvRoundTrip)
{
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const double r = rng.uniform01(), g = rng.uniform01(), b = rng.uniform01();
        const auto hsv = rgb_to_hsv(r, g, b);
        const auto rgb = hsv_to_rgb(hsv[0], hsv[1], hsv[2]);
        ASSERT_NEAR(rgb[0], r, 1e-12);
        ASSERT_NEAR(rgb[1], g, 1e-12);
        ASSERT_NEAR(rgb[2], b, 1e-12);
    }
}

TEST(Augment, ColorJitterZeroIsIdentityAndStaysInRange)
{
    Rng rng(5);
    const Image img = random_unit_image(6, 6, rng);
    EXPECT_LT(max_abs_diff(color_jitter(img, {}), img), 1e-15);
    const Image j = color_jitter(img, {0.2, -0.2, 0.2, 0.1});
    for (double v : j.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    const Image gray_img({3, 2, 2}, 0.4);
    EXPECT_LT(max_abs_diff(color_jitter(gray_img, {0.0, 0.0, 0.5, 0.3}), gray_img), 1e-15);
    EXPECT_NEAR(color_jitter(gray_img, {0.25, 0, 0, 0})[0], 0.5, 1e-15);
}

TEST(Augment, PcaBasisRecoversDominantAxis)
{
    // colors spread along (1, 1, 0) / sqrt(2) plus small noise on blue
    Rng rng(6);
    std::vector<Image> imgs;
    for (int n = 0; n < 2; ++n) {
        Image img({3, 16, 16});
        const std::size_t plane = 256;
        for (std::size_t i = 0; i < plane; ++i) {
            const double t = rng.uniform01();
            img[i] = 0.2 + 0.5 * t;
            img[plane + i] = 0.2 + 0.5 * t;
            img[2 * plane + i] = 0.5 + 0.01 * rng.uniform01();
        }
        imgs.push_back(img);
    }
    const PcaColorBasis basis = fit_pca_basis(imgs);
    EXPECT_GT(basis.eigenvalues[0], 10 * basis.eigenvalues[1]);
    EXPECT_GE(basis.eigenvalues[1], basis.eigenvalues[2]);
    const auto& v = basis.eigenvectors[0];
    EXPECT_NEAR(std::abs(v[0]), std::sqrt(0.5), 1e-3);
    EXPECT_NEAR(std::abs(v[1]), std::sqrt(0.5), 1e-3);
    // a shift along the first axis moves every pixel by alpha * lambda * p
    const Image shifted = pca_shift(imgs[0], basis, {0.1, 0.0, 0.0});
    EXPECT_NEAR(shifted[0] - imgs[0][0], 0.1 * basis.eigenvalues[0] * v[0], 1e-15);
    const std::vector<Image> flat{Image({3, 2, 2}, 0.3), Image({3, 2, 2}, 0.3)};
    EXPECT_THROW(fit_pca_basis(flat), Error);
}

TEST(Augment, PresetsAreDistinctAndNamed)
{
    std::set<std::string> names;
    for (const auto& p : augmentation_presets()) names.insert(p.name);
    EXPECT_EQ(names.size(), 10u);
    EXPECT_FALSE(find_augmentation_preset("none")->any());
    EXPECT_TRUE(find_augmentation_preset("all")->conflicting_color());
    EXPECT_FALSE(find_augmentation_preset("sideways"));
}

TEST(Augment, ApplyIsDeterministicAndDrawOrderIsFixed)
{
    Rng img_rng(7);
    const Image img = random_unit_image(12, 12, img_rng);
    AugmentationSpec flips{true, true};
    AugmentationSpec none{};
    Rng a(11), b(11);
    apply(flips, img, a);
    apply(none, img, b);
    EXPECT_EQ(a.next_u64(), b.next_u64()); // same number of draws either way

    Rng c(12), d(12);
    EXPECT_EQ(apply(*find_augmentation_preset("flip_rotate_crop_jitter"), img, c),
              apply(*find_augmentation_preset("flip_rotate_crop_jitter"), img, d));
    Rng e(13);
    EXPECT_EQ(apply(none, img, e), img);
    EXPECT_THROW(apply(*find_augmentation_preset("flip_krizhevsky"), img, e), Error);
}
