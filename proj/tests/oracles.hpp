#pragma once

// Independent reference implementations used by both the unit tests and the
// acceptance binary. They are written for clarity, not speed, and share no
// code with the library beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <vector>

#include "drgrade/tensor.hpp"

namespace oracle {

using drgrade::Tensor;

/// Quadratic weighted Kappa from a dense count matrix, textbook form:
/// O and E normalized to unit mass, E the outer product of the marginal histograms.
inline double qwk(const std::vector<std::vector<long long>>& counts)
{
    const std::size_t n = counts.size();
    std::vector<std::vector<double>> O(n, std::vector<double>(n)), E(n, std::vector<double>(n));
    std::vector<double> hist_true(n, 0.0), hist_pred(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            total += static_cast<double>(counts[i][j]);
            hist_true[i] += static_cast<double>(counts[i][j]);
            hist_pred[j] += static_cast<double>(counts[i][j]);
        }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            O[i][j] = static_cast<double>(counts[i][j]) / total;
            E[i][j] = hist_true[i] * hist_pred[j] / (total * total);
            const double d = static_cast<double>(i) - static_cast<double>(j);
            const double w = d * d / static_cast<double>((n - 1) * (n - 1));
            num += w * O[i][j];
            den += w * E[i][j];
        }
    return 1.0 - num / den;
}

inline std::size_t mirror(long i, std::size_t n)
{
    const long m = static_cast<long>(n);
    while (i < 0 || i >= m) i = i < 0 ? -i : 2 * (m - 1) - i;
    return static_cast<std::size_t>(i);
}

/// 4I - 4 G*I + 128 with a full 2-D Gaussian window (no separability) and
/// mirrored borders, clamped to the 8-bit range.
inline Tensor graham(const Tensor& img, double theta)
{
    const int r = static_cast<int>(std::ceil(3.0 * theta));
    std::vector<double> win((2 * r + 1) * (2 * r + 1));
    double mass = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            mass += win[(dy + r) * (2 * r + 1) + (dx + r)] = std::exp(-(dx * dx + dy * dy) / (2.0 * theta * theta));
    const std::size_t h = img.dim(1), w = img.dim(2);
    Tensor out(img.shape());
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double blur = 0.0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        blur += win[(dy + r) * (2 * r + 1) + (dx + r)] / mass *
                                img.at(c, mirror(static_cast<long>(y) + dy, h), mirror(static_cast<long>(x) + dx, w));
                out.at(c, y, x) = std::clamp(4.0 * img.at(c, y, x) - 4.0 * blur + 128.0, 0.0, 255.0);
            }
    return out;
}

/// Global histogram equalization per channel: v -> round(255 * cdf(v) / N).
inline Tensor histogram_equalize(const Tensor& img)
{
    const std::size_t plane = img.dim(1) * img.dim(2);
    Tensor out(img.shape());
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> cdf(256, 0.0);
        for (std::size_t i = 0; i < plane; ++i) cdf[static_cast<std::size_t>(img[c * plane + i])] += 1.0;
        for (std::size_t b = 1; b < 256; ++b) cdf[b] += cdf[b - 1];
        for (std::size_t i = 0; i < plane; ++i)
            out[c * plane + i] = std::round(255.0 * cdf[static_cast<std::size_t>(img[c * plane + i])] / plane);
    }
    return out;
}

} // namespace oracle
