#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "drgrade/tensor.hpp"

namespace drgrade {

/// RGB image stored as Tensor [3 x H x W]. Raw ingest is in [0, 255]; after
/// rescale the values lie in [0, 1].
using Image = Tensor;

inline void check_image(const Image& img, const char* where)
{
    if (img.rank() != 3 || img.dim(0) != 3)
        fail(ErrorKind::shape_mismatch, std::string(where) + ": expected a 3 x H x W image, got " + shape_string(img.shape()));
}

inline std::size_t image_height(const Image& img) { return img.dim(1); }
inline std::size_t image_width(const Image& img) { return img.dim(2); }

// ---------------------------------------------------------------------------
// Field-of-view crop

/// Foreground threshold on the max channel, as a fraction of full scale.
constexpr double kFovThreshold = 10.0 / 255.0;

struct CropBox {
    std::size_t top, left, height, width;
};

inline CropBox fov_box(const Image& img, double full_scale = 1.0)
{
    check_image(img, "crop_fov");
    const std::size_t h = image_height(img), w = image_width(img);
    const double tau = kFovThreshold * full_scale;
    std::size_t top = h, bottom = 0, left = w, right = 0;
    bool any = false;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double m = std::max({img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)});
            if (m > tau) {
                any = true;
                top = std::min(top, y);
                bottom = std::max(bottom, y);
                left = std::min(left, x);
                right = std::max(right, x);
            }
        }
    if (!any) fail(ErrorKind::invalid_argument, "crop_fov: no field of view (image is entirely dark)");
    return {top, left, bottom - top + 1, right - left + 1};
}

inline Image crop(const Image& img, const CropBox& box)
{
    Image out({3, box.height, box.width});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < box.height; ++y)
            for (std::size_t x = 0; x < box.width; ++x) out.at(c, y, x) = img.at(c, box.top + y, box.left + x);
    return out;
}

/// Tight bounding box of pixels whose max channel exceeds 10/255 of full scale.
/// `full_scale` is 255 for raw 8-bit data and 1 for rescaled data.
inline Image crop_fov(const Image& img, double full_scale = 1.0) { return crop(img, fov_box(img, full_scale)); }

// ---------------------------------------------------------------------------
// Bilinear resize, edge-aligned: output corners sample input corners exactly,
// src = dst * (in - 1) / (out - 1).

inline double bilinear_sample(const Image& img, std::size_t c, double y, double x)
{
    const std::size_t h = image_height(img), w = image_width(img);
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const std::size_t y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    const double top = img.at(c, y0, x0) * (1.0 - fx) + img.at(c, y0, x1) * fx;
    const double bot = img.at(c, y1, x0) * (1.0 - fx) + img.at(c, y1, x1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

inline Image resize(const Image& img, std::size_t out_h, std::size_t out_w)
{
    check_image(img, "resize");
    require(out_h >= 1 && out_w >= 1, "resize: output size must be positive");
    const std::size_t h = image_height(img), w = image_width(img);
    if (h == out_h && w == out_w) return img;
    const double sy = out_h > 1 ? static_cast<double>(h - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(w - 1) / static_cast<double>(out_w - 1) : 0.0;
    Image out({3, out_h, out_w});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t x = 0; x < out_w; ++x)
                out.at(c, y, x) = bilinear_sample(img, c, static_cast<double>(y) * sy, static_cast<double>(x) * sx);
    return out;
}

inline Image resize(const Image& img, std::size_t side)
{
    require(side >= 8, "resize: side must be >= 8");
    return resize(img, side, side);
}

inline Image rescale(const Image& img, double factor)
{
    Image out = img;
    for (double& v : out.data()) v *= factor;
    return out;
}

// ---------------------------------------------------------------------------
// z-score normalization

struct NormStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> std{1.0, 1.0, 1.0};

    void validate() const
    {
        for (double s : std)
            if (!(s > 0.0)) fail(ErrorKind::invalid_argument, "zscore: channel std must be > 0");
    }
};

/// Per-channel mean and (population) standard deviation pooled over all pixels.
inline NormStats compute_norm_stats(std::span<const Image> images)
{
    require(!images.empty(), "compute_norm_stats: no images");
    std::array<double, 3> s{}, s2{};
    double count = 0.0;
    for (const auto& img : images) {
        check_image(img, "compute_norm_stats");
        const std::size_t plane = image_height(img) * image_width(img);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i) s[c] += img[c * plane + i];
        count += static_cast<double>(plane);
    }
    NormStats st;
    for (std::size_t c = 0; c < 3; ++c) st.mean[c] = s[c] / count;
    for (const auto& img : images) {
        const std::size_t plane = image_height(img) * image_width(img);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = img[c * plane + i] - st.mean[c];
                s2[c] += d * d;
            }
    }
    for (std::size_t c = 0; c < 3; ++c) st.std[c] = std::sqrt(s2[c] / count);
    return st;
}

inline Image zscore(const Image& img, const NormStats& stats)
{
    check_image(img, "zscore");
    stats.validate();
    Image out = img;
    const std::size_t plane = image_height(img) * image_width(img);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = (img[c * plane + i] - stats.mean[c]) / stats.std[c];
    return out;
}

// ---------------------------------------------------------------------------
// Graham contrast normalization: alpha * I + beta * (G(theta) * I) + gamma,
// per channel, in the 8-bit domain, clamped to [0, 255].

struct GrahamParams {
    double theta = 10.0;
    double alpha = 4.0;
    double beta = -4.0;
    double gamma_offset = 128.0;
};

/// Mirror index without repeating the edge sample (d c b | a b c d | c b a).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n)
{
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * static_cast<std::ptrdiff_t>(n - 1);
    i %= period;
    if (i < 0) i += period;
    if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
    return static_cast<std::size_t>(i);
}

/// Separable Gaussian blur with reflect padding; radius ceil(3 theta).
inline Image gaussian_blur(const Image& img, double theta)
{
    check_image(img, "gaussian_blur");
    const int radius = std::max(1, gaussian_radius(theta));
    const Tensor k = gaussian_kernel1d(theta, radius);
    const std::size_t h = image_height(img), w = image_width(img);
    Image tmp({3, h, w}), out({3, h, w});
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0.0;
                for (int d = -radius; d <= radius; ++d)
                    s += k[static_cast<std::size_t>(d + radius)] *
                         img.at(c, y, reflect_index(static_cast<std::ptrdiff_t>(x) + d, w));
                tmp.at(c, y, x) = s;
            }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0.0;
                for (int d = -radius; d <= radius; ++d)
                    s += k[static_cast<std::size_t>(d + radius)] *
                         tmp.at(c, reflect_index(static_cast<std::ptrdiff_t>(y) + d, h), x);
                out.at(c, y, x) = s;
            }
    }
    return out;
}

inline Image graham(const Image& img, const GrahamParams& p = {})
{
    if (!(p.theta > 0.0)) fail(ErrorKind::invalid_argument, "graham: theta must be > 0");
    const Image blurred = gaussian_blur(img, p.theta);
    Image out = img;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(p.alpha * img[i] + p.beta * blurred[i] + p.gamma_offset, 0.0, 255.0);
    return out;
}

// ---------------------------------------------------------------------------
// CLAHE, per RGB channel, 8-bit domain.
//
// Tiles partition the image into tile_grid x tile_grid blocks (block edges at
// floor(i * size / grid)). Each tile's 256-bin histogram is clipped at
// clip_limit * (tile pixels / 256); the clipped excess is spread evenly over
// all bins. The tile mapping is v -> 255 * cdf(v) / tile pixels, except that a
// tile holding a single intensity maps it to itself. Pixel outputs bilinearly
// interpolate the mappings of the four nearest tile centres (clamped at the
// borders) and are rounded to the nearest integer.

struct ClaheParams {
    double clip_limit = 3.0;
    std::size_t tile_grid = 8;
};

struct ClippedHistogram {
    std::array<double, 256> bins{};
    double excess = 0.0;
};

inline ClippedHistogram clip_histogram(const std::array<double, 256>& hist, double ceiling)
{
    ClippedHistogram out;
    for (std::size_t b = 0; b < 256; ++b) {
        out.bins[b] = std::min(hist[b], ceiling);
        out.excess += hist[b] - out.bins[b];
    }
    return out;
}

inline std::array<double, 256> clahe_tile_mapping(const std::array<double, 256>& hist, double clip_limit)
{
    double total = 0.0;
    std::size_t occupied = 0;
    for (double v : hist) {
        total += v;
        if (v > 0.0) ++occupied;
    }
    std::array<double, 256> map{};
    if (occupied <= 1) {
        for (std::size_t b = 0; b < 256; ++b) map[b] = static_cast<double>(b);
        return map;
    }
    ClippedHistogram clipped{hist, 0.0};
    if (std::isfinite(clip_limit)) clipped = clip_histogram(hist, clip_limit * total / 256.0);
    const double spread = clipped.excess / 256.0;
    double cdf = 0.0;
    for (std::size_t b = 0; b < 256; ++b) {
        cdf += clipped.bins[b] + spread;
        map[b] = 255.0 * cdf / total;
    }
    return map;
}

namespace detail {

inline std::vector<std::size_t> tile_edges(std::size_t size, std::size_t grid)
{
    std::vector<std::size_t> edges(grid + 1);
    for (std::size_t i = 0; i <= grid; ++i) edges[i] = i * size / grid;
    return edges;
}

// Neighbouring tile indices and weight of the second one for a coordinate.
inline void tile_neighbours(const std::vector<double>& centres, double pos, std::size_t& t0, std::size_t& t1, double& f)
{
    const std::size_t n = centres.size();
    if (pos <= centres.front()) {
        t0 = t1 = 0;
        f = 0.0;
        return;
    }
    if (pos >= centres.back()) {
        t0 = t1 = n - 1;
        f = 0.0;
        return;
    }
    t0 = 0;
    while (t0 + 1 < n && centres[t0 + 1] <= pos) ++t0;
    t1 = std::min(t0 + 1, n - 1);
    f = t1 == t0 ? 0.0 : (pos - centres[t0]) / (centres[t1] - centres[t0]);
}

} // namespace detail

inline Image clahe(const Image& img, const ClaheParams& p = {})
{
    check_image(img, "clahe");
    require(p.clip_limit >= 1.0, "clahe: clip_limit must be >= 1");
    require(p.tile_grid >= 1, "clahe: tile_grid must be >= 1");
    const std::size_t h = image_height(img), w = image_width(img);
    const std::size_t gy = std::min(p.tile_grid, h), gx = std::min(p.tile_grid, w);
    const auto ey = detail::tile_edges(h, gy), ex = detail::tile_edges(w, gx);
    std::vector<double> cy(gy), cx(gx);
    for (std::size_t i = 0; i < gy; ++i) cy[i] = 0.5 * static_cast<double>(ey[i] + ey[i + 1] - 1);
    for (std::size_t i = 0; i < gx; ++i) cx[i] = 0.5 * static_cast<double>(ex[i] + ex[i + 1] - 1);

    auto level = [](double v) { return static_cast<std::size_t>(std::clamp(std::round(v), 0.0, 255.0)); };

    Image out({3, h, w});
    std::vector<std::array<double, 256>> maps(gy * gx);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t ty = 0; ty < gy; ++ty)
            for (std::size_t tx = 0; tx < gx; ++tx) {
                std::array<double, 256> hist{};
                for (std::size_t y = ey[ty]; y < ey[ty + 1]; ++y)
                    for (std::size_t x = ex[tx]; x < ex[tx + 1]; ++x) hist[level(img.at(c, y, x))] += 1.0;
                maps[ty * gx + tx] = clahe_tile_mapping(hist, p.clip_limit);
            }
        for (std::size_t y = 0; y < h; ++y) {
            std::size_t y0, y1;
            double fy;
            detail::tile_neighbours(cy, static_cast<double>(y), y0, y1, fy);
            for (std::size_t x = 0; x < w; ++x) {
                std::size_t x0, x1;
                double fx;
                detail::tile_neighbours(cx, static_cast<double>(x), x0, x1, fx);
                const std::size_t v = level(img.at(c, y, x));
                const double top = maps[y0 * gx + x0][v] * (1.0 - fx) + maps[y0 * gx + x1][v] * fx;
                const double bot = maps[y1 * gx + x0][v] * (1.0 - fx) + maps[y1 * gx + x1][v] * fx;
                out.at(c, y, x) = std::clamp(std::round(top * (1.0 - fy) + bot * fy), 0.0, 255.0);
            }
        }
    }
    return out;
}

} // namespace drgrade
