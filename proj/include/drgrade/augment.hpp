#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drgrade/preprocess.hpp"
#include "drgrade/rng.hpp"

namespace drgrade {

/// Geometric transforms run first (flip, rotation, crop), then color (jitter, PCA shift).
struct AugmentationSpec {
    bool hflip = false;
    bool vflip = false;
    bool rotation = false;
    bool cropping = false;
    bool color_jitter = false;
    bool krizhevsky = false;
    std::uint64_t stream = 0;

    bool any() const { return hflip || vflip || rotation || cropping || color_jitter || krizhevsky; }
    bool conflicting_color() const { return color_jitter && krizhevsky; }

    friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

struct AugmentationPreset {
    const char* name;
    AugmentationSpec spec;
};

/// The ten flip/rotation/crop/jitter/PCA compositions of the augmentation ablation.
inline const std::array<AugmentationPreset, 10>& augmentation_presets()
{
    static const std::array<AugmentationPreset, 10> presets{{
        {"none", {}},
        {"flip", {true, true, false, false, false, false, 0}},
        {"flip_rotate", {true, true, true, false, false, false, 0}},
        {"flip_crop", {true, true, false, true, false, false, 0}},
        {"flip_jitter", {true, true, false, false, true, false, 0}},
        {"flip_krizhevsky", {true, true, false, false, false, true, 0}},
        {"flip_rotate_crop", {true, true, true, true, false, false, 0}},
        {"flip_rotate_crop_jitter", {true, true, true, true, true, false, 0}},
        {"flip_rotate_crop_krizhevsky", {true, true, true, true, false, true, 0}},
        {"all", {true, true, true, true, true, true, 0}},
    }};
    return presets;
}

inline std::optional<AugmentationSpec> find_augmentation_preset(const std::string& name)
{
    for (const auto& p : augmentation_presets())
        if (name == p.name) return p.spec;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Deterministic transforms

inline Image hflip(const Image& img)
{
    check_image(img, "hflip");
    const std::size_t h = image_height(img), w = image_width(img);
    Image out(img.shape());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, w - 1 - x);
    return out;
}

inline Image vflip(const Image& img)
{
    check_image(img, "vflip");
    const std::size_t h = image_height(img), w = image_width(img);
    Image out(img.shape());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, h - 1 - y, x);
    return out;
}

namespace detail {

// Bilinear sample; neighbours outside the image read as `fill`.
inline double sample_fill(const Image& img, std::size_t c, double y, double x, double fill)
{
    const double h = static_cast<double>(image_height(img)), w = static_cast<double>(image_width(img));
    if (y <= -1.0 || x <= -1.0 || y >= h || x >= w) return fill;
    const double y0 = std::floor(y), x0 = std::floor(x);
    const double fy = y - y0, fx = x - x0;
    auto px = [&](double yy, double xx) {
        if (yy < 0.0 || xx < 0.0 || yy > h - 1.0 || xx > w - 1.0) return fill;
        return img.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    };
    const double top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1.0) * fx;
    const double bot = px(y0 + 1.0, x0) * (1.0 - fx) + px(y0 + 1.0, x0 + 1.0) * fx;
    return top * (1.0 - fy) + bot * fy;
}

} // namespace detail

/// Rotation about the image centre by `degrees` (counter-clockwise), bilinear,
/// pixels mapped from outside the frame are `fill` (black by default).
inline Image rotate(const Image& img, double degrees, double fill = 0.0)
{
    check_image(img, "rotate");
    const std::size_t h = image_height(img), w = image_width(img);
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
    Image out(img.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            // inverse mapping: rotate the output coordinate by -angle
            const double sx = cs * dx - sn * dy + cx;
            const double sy = sn * dx + cs * dy + cy;
            for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = detail::sample_fill(img, c, sy, sx, fill);
        }
    return out;
}

/// Crop region [top, top + crop_h) x [left, left + crop_w) (may extend past the
/// frame; outside is `fill`) resampled back to the input size with pixel-centre
/// alignment. A full-frame region reproduces the input exactly.
inline Image crop_resize(const Image& img, double top, double left, double crop_h, double crop_w, double fill = 0.0)
{
    check_image(img, "crop_resize");
    require(crop_h > 0.0 && crop_w > 0.0, "crop_resize: region must be non-empty");
    const std::size_t h = image_height(img), w = image_width(img);
    const double sy = crop_h / static_cast<double>(h), sx = crop_w / static_cast<double>(w);
    Image out(img.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double src_y = top + (static_cast<double>(y) + 0.5) * sy - 0.5;
            const double src_x = left + (static_cast<double>(x) + 0.5) * sx - 0.5;
            for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = detail::sample_fill(img, c, src_y, src_x, fill);
        }
    return out;
}

/// Side-length scale s and aspect ratio a give a crop of (H s / sqrt(a)) x (W s sqrt(a)).
inline Image random_crop(const Image& img, double scale, double aspect, double u_top, double u_left)
{
    const double h = static_cast<double>(image_height(img)), w = static_cast<double>(image_width(img));
    const double ch = h * scale / std::sqrt(aspect), cw = w * scale * std::sqrt(aspect);
    const double top = std::min(0.0, h - ch) + u_top * std::abs(h - ch);
    const double left = std::min(0.0, w - cw) + u_left * std::abs(w - cw);
    return crop_resize(img, top, left, ch, cw);
}

// Color helpers on [0, 1] RGB.

inline std::array<double, 3> rgb_to_hsv(double r, double g, double b)
{
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
    double hue = 0.0;
    if (d > 0.0) {
        if (mx == r) hue = std::fmod((g - b) / d, 6.0);
        else if (mx == g) hue = (b - r) / d + 2.0;
        else hue = (r - g) / d + 4.0;
        hue /= 6.0;
        if (hue < 0.0) hue += 1.0;
    }
    return {hue, mx > 0.0 ? d / mx : 0.0, mx};
}

inline std::array<double, 3> hsv_to_rgb(double hue, double sat, double val)
{
    const double hh = hue * 6.0;
    const int sector = static_cast<int>(std::floor(hh)) % 6;
    const double f = hh - std::floor(hh);
    const double p = val * (1.0 - sat), q = val * (1.0 - sat * f), t = val * (1.0 - sat * (1.0 - f));
    switch (sector) {
    case 0: return {val, t, p};
    case 1: return {q, val, p};
    case 2: return {p, val, t};
    case 3: return {p, q, val};
    case 4: return {t, p, val};
    default: return {val, p, q};
    }
}

struct JitterFactors {
    double brightness = 0.0; ///< multiply by (1 + f)
    double contrast = 0.0;   ///< scale deviation from the mean gray level by (1 + f)
    double saturation = 0.0; ///< scale deviation from the per-pixel gray by (1 + f)
    double hue = 0.0;        ///< shift the hue angle by f * 180 degrees
};

inline double gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

/// Brightness, contrast, saturation, hue in that order; values clamped to [0, 1].
inline Image color_jitter(const Image& img, const JitterFactors& f)
{
    check_image(img, "color_jitter");
    const std::size_t plane = image_height(img) * image_width(img);
    Image out = img;
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    for (double& v : out.data()) v = clamp01(v * (1.0 + f.brightness));
    if (f.contrast != 0.0) {
        double m = 0.0;
        for (std::size_t i = 0; i < plane; ++i) m += gray(out[i], out[plane + i], out[2 * plane + i]);
        m /= static_cast<double>(plane);
        for (double& v : out.data()) v = clamp01((v - m) * (1.0 + f.contrast) + m);
    }
    for (std::size_t i = 0; i < plane; ++i) {
        double r = out[i], g = out[plane + i], b = out[2 * plane + i];
        if (f.saturation != 0.0) {
            const double gr = gray(r, g, b);
            r = clamp01((r - gr) * (1.0 + f.saturation) + gr);
            g = clamp01((g - gr) * (1.0 + f.saturation) + gr);
            b = clamp01((b - gr) * (1.0 + f.saturation) + gr);
        }
        if (f.hue != 0.0) {
            auto hsv = rgb_to_hsv(r, g, b);
            double hue = hsv[0] + f.hue * 0.5; // f * 180 degrees = f / 2 turns
            hue -= std::floor(hue);
            auto rgb = hsv_to_rgb(hue, hsv[1], hsv[2]);
            r = rgb[0], g = rgb[1], b = rgb[2];
        }
        out[i] = r, out[plane + i] = g, out[2 * plane + i] = b;
    }
    return out;
}

// ---------------------------------------------------------------------------
// PCA color augmentation

struct PcaColorBasis {
    std::array<double, 3> eigenvalues{};               ///< descending
    std::array<std::array<double, 3>, 3> eigenvectors{}; ///< eigenvectors[i] is the i-th unit vector
};

constexpr double kKrizhevskySigma = 0.1;

/// Eigendecomposition of the 3 x 3 RGB covariance pooled over all pixels.
inline PcaColorBasis fit_pca_basis(std::span<const Image> images)
{
    require(images.size() >= 2, "fit_pca_basis: at least two images are required");
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    double count = 0.0;
    for (const auto& img : images) {
        check_image(img, "fit_pca_basis");
        const std::size_t plane = image_height(img) * image_width(img);
        for (std::size_t i = 0; i < plane; ++i) sum += Eigen::Vector3d(img[i], img[plane + i], img[2 * plane + i]);
        count += static_cast<double>(plane);
    }
    const Eigen::Vector3d mu = sum / count;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& img : images) {
        const std::size_t plane = image_height(img) * image_width(img);
        for (std::size_t i = 0; i < plane; ++i) {
            const Eigen::Vector3d d = Eigen::Vector3d(img[i], img[plane + i], img[2 * plane + i]) - mu;
            cov += d * d.transpose();
        }
    }
    cov /= count;
    if (!(cov.trace() > 1e-12)) fail(ErrorKind::numeric, "fit_pca_basis: degenerate (zero) color covariance");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    if (solver.info() != Eigen::Success) fail(ErrorKind::numeric, "fit_pca_basis: eigendecomposition failed");
    PcaColorBasis basis;
    for (int i = 0; i < 3; ++i) {
        const int src = 2 - i; // Eigen sorts ascending
        basis.eigenvalues[static_cast<std::size_t>(i)] = std::max(0.0, solver.eigenvalues()(src));
        for (int k = 0; k < 3; ++k)
            basis.eigenvectors[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = solver.eigenvectors()(k, src);
    }
    return basis;
}

/// Adds sum_i alpha_i lambda_i p_i to every pixel and clamps to [0, 1].
inline Image pca_shift(const Image& img, const PcaColorBasis& basis, const std::array<double, 3>& alpha)
{
    check_image(img, "krizhevsky_shift");
    std::array<double, 3> delta{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 3; ++k) delta[k] += alpha[i] * basis.eigenvalues[i] * basis.eigenvectors[i][k];
    Image out = img;
    const std::size_t plane = image_height(img) * image_width(img);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = std::clamp(img[c * plane + i] + delta[c], 0.0, 1.0);
    return out;
}

inline Image krizhevsky_shift(const Image& img, const PcaColorBasis& basis, Rng& rng)
{
    std::array<double, 3> alpha{};
    for (double& a : alpha) a = rng_normal(rng, 0.0, kKrizhevskySigma);
    return pca_shift(img, basis, alpha);
}

// ---------------------------------------------------------------------------
// Random composition

constexpr double kCropScaleMax = 1.15;
constexpr double kAspectMin = 0.7, kAspectMax = 1.3;
constexpr double kJitterRange = 0.2, kHueRange = 0.1;

/// Draws every random parameter in a fixed order (flips, angle, crop, jitter,
/// PCA) regardless of which flags are set, so enabling one transform never
/// shifts the draws of another.
inline Image apply(const AugmentationSpec& spec, const Image& img, Rng& rng, const PcaColorBasis* basis = nullptr)
{
    check_image(img, "augment");
    const bool do_h = rng.uniform01() < 0.5;
    const bool do_v = rng.uniform01() < 0.5;
    const double angle = rng_uniform(rng, 0.0, 360.0);
    const double scale = rng_uniform(rng, 1.0 / kCropScaleMax, kCropScaleMax);
    const double aspect = rng_uniform(rng, kAspectMin, kAspectMax);
    const double u_top = rng.uniform01(), u_left = rng.uniform01();
    JitterFactors jf{rng_uniform(rng, -kJitterRange, kJitterRange), rng_uniform(rng, -kJitterRange, kJitterRange),
                     rng_uniform(rng, -kJitterRange, kJitterRange), rng_uniform(rng, -kHueRange, kHueRange)};
    std::array<double, 3> alpha{};
    for (double& a : alpha) a = rng_normal(rng, 0.0, kKrizhevskySigma);

    Image out = img;
    if (spec.hflip && do_h) out = hflip(out);
    if (spec.vflip && do_v) out = vflip(out);
    if (spec.rotation) out = rotate(out, angle);
    if (spec.cropping) out = random_crop(out, scale, aspect, u_top, u_left);
    if (spec.color_jitter) out = color_jitter(out, jf);
    if (spec.krizhevsky) {
        if (!basis) fail(ErrorKind::invalid_argument, "augment: Krizhevsky shift requires a fitted PCA basis");
        out = pca_shift(out, *basis, alpha);
    }
    return out;
}

} // namespace drgrade
