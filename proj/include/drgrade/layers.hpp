#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "drgrade/rng.hpp"
#include "drgrade/tensor.hpp"

namespace drgrade {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Named parameters in registration order, each with a gradient buffer of the same shape.
class ModelParams {
public:
    Parameter& add(const std::string& name, Tensor value)
    {
        if (index_.count(name)) fail(ErrorKind::invalid_argument, "ModelParams: duplicate entry '" + name + "'");
        index_[name] = entries_.size();
        Tensor grad = Tensor::zeros_like(value);
        entries_.push_back({name, std::move(value), std::move(grad)});
        ++version_;
        return entries_.back();
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Parameter& at(const std::string& name)
    {
        auto it = index_.find(name);
        if (it == index_.end()) fail(ErrorKind::invalid_argument, "ModelParams: no entry '" + name + "'");
        return entries_[it->second];
    }
    const Parameter& at(const std::string& name) const { return const_cast<ModelParams*>(this)->at(name); }

    std::vector<Parameter>& entries() noexcept { return entries_; }
    const std::vector<Parameter>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    void zero_grad()
    {
        for (auto& p : entries_) p.grad.fill(0.0);
    }

    /// Bumped whenever values change; forward caches record it to detect staleness.
    std::uint64_t version() const noexcept { return version_; }
    void touch() noexcept { ++version_; }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& p : entries_) n += p.value.size();
        return n;
    }

    friend bool operator==(const ModelParams& a, const ModelParams& b)
    {
        if (a.entries_.size() != b.entries_.size()) return false;
        for (std::size_t i = 0; i < a.entries_.size(); ++i) {
            if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value))
                return false;
        }
        return true;
    }

private:
    std::vector<Parameter> entries_;
    std::map<std::string, std::size_t> index_;
    std::uint64_t version_ = 0;
};

/// He (Kaiming normal) initialization: rank >= 2 entries are weights drawn from
/// N(0, sqrt(2 / fan_in)) with fan_in = product of all but the leading dimension;
/// rank-1 entries are biases and set to zero.
inline void he_init(ModelParams& params, Rng& rng)
{
    for (auto& p : params.entries()) {
        if (p.value.rank() >= 2) {
            const double fan_in = static_cast<double>(p.value.size() / p.value.dim(0));
            const double std = std::sqrt(2.0 / fan_in);
            for (double& v : p.value.data()) v = rng_normal(rng, 0.0, std);
        } else {
            p.value.fill(0.0);
        }
        p.grad.fill(0.0);
    }
    params.touch();
}

// ---------------------------------------------------------------------------
// Linear: x [N x in], weight [out x in], bias [out] -> [N x out]

inline Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
    if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1) || bias.size() != weight.dim(0))
        fail(ErrorKind::shape_mismatch, "linear: input " + shape_string(x.shape()) + " vs weight " +
                                            shape_string(weight.shape()));
    const std::size_t n = x.dim(0), out_dim = weight.dim(0), in_dim = weight.dim(1);
    Tensor y({n, out_dim});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out_dim; ++o) y.at(i, o) = bias[o];
    detail::gemm_nt(n, out_dim, in_dim, x.raw(), weight.raw(), y.raw());
    return y;
}

/// Accumulates into dweight/dbias and returns dx.
inline Tensor linear_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor& dweight, Tensor& dbias)
{
    const std::size_t n = x.dim(0), out_dim = weight.dim(0), in_dim = weight.dim(1);
    if (dy.rank() != 2 || dy.dim(0) != n || dy.dim(1) != out_dim)
        fail(ErrorKind::shape_mismatch, "linear backward: grad shape " + shape_string(dy.shape()));
    detail::gemm_tn(out_dim, in_dim, n, dy.raw(), x.raw(), dweight.raw());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out_dim; ++o) dbias[o] += dy.at(i, o);
    Tensor dx({n, in_dim});
    detail::gemm_nn(n, in_dim, out_dim, dy.raw(), weight.raw(), dx.raw());
    return dx;
}

// ---------------------------------------------------------------------------
// ReLU

inline Tensor relu_forward(const Tensor& x)
{
    Tensor y = x;
    for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
    return y;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& dy)
{
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(x[i] > 0.0)) dx[i] = 0.0;
    return dx;
}

// ---------------------------------------------------------------------------
// Conv2d with bias: x [N x C x H x W], weight [F x C x k x k], bias [F]

inline Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
                             std::size_t padding)
{
    Tensor y = conv2d(x, weight, stride, padding);
    const std::size_t n = y.dim(0), f = y.dim(1), plane = y.dim(2) * y.dim(3);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < f; ++c) {
            double* p = y.raw() + (i * f + c) * plane;
            for (std::size_t j = 0; j < plane; ++j) p[j] += bias[c];
        }
    return y;
}

inline Tensor conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, std::size_t stride,
                              std::size_t padding, Tensor& dweight, Tensor& dbias)
{
    const ConvGeometry g = conv_geometry(x, weight, stride, padding);
    const std::size_t n = x.dim(0), f = weight.dim(0), plane = g.out_h() * g.out_w();
    if (dy.rank() != 4 || dy.dim(0) != n || dy.dim(1) != f || dy.dim(2) * dy.dim(3) != plane)
        fail(ErrorKind::shape_mismatch, "conv2d backward: grad shape " + shape_string(dy.shape()));
    Tensor dx = Tensor::zeros_like(x);
    std::vector<double> cols(g.patch() * plane);
    std::vector<double> dcols(g.patch() * plane);
    const std::size_t image = g.channels * g.height * g.width;
    for (std::size_t i = 0; i < n; ++i) {
        const double* dyi = dy.raw() + i * f * plane;
        detail::im2col(g, x.raw() + i * image, cols.data());
        detail::gemm_nt(f, g.patch(), plane, dyi, cols.data(), dweight.raw());
        for (std::size_t c = 0; c < f; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < plane; ++j) s += dyi[c * plane + j];
            dbias[c] += s;
        }
        std::fill(dcols.begin(), dcols.end(), 0.0);
        detail::gemm_tn(g.patch(), plane, f, weight.raw(), dyi, dcols.data());
        detail::col2im(g, dcols.data(), dx.raw() + i * image);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Max pooling. Window equals stride (non-overlapping); partial windows at the
// far edge are kept, so the output size is ceil(size / stride). Ties go to the
// first (lowest) index.

struct PoolResult {
    Tensor output;
    std::vector<std::size_t> argmax; ///< flat input index per output element
};

inline PoolResult maxpool2d_forward(const Tensor& x, std::size_t stride)
{
    require(stride >= 1, "maxpool2d: stride must be >= 1");
    if (x.rank() != 4) fail(ErrorKind::shape_mismatch, "maxpool2d: expected rank-4 input");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    PoolResult r{Tensor({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t y = oy * stride; y < std::min(h, (oy + 1) * stride); ++y) {
                    for (std::size_t xx = ox * stride; xx < std::min(w, (ox + 1) * stride); ++xx) {
                        const std::size_t idx = base + y * w + xx;
                        if (x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                r.output[o] = best;
                r.argmax[o] = best_idx;
            }
        }
    }
    return r;
}

/// maxpool1d over the feature axis of [N x D] -> [N x ceil(D / stride)].
inline PoolResult maxpool1d_forward(const Tensor& x, std::size_t stride)
{
    require(stride >= 1, "maxpool1d: stride must be >= 1");
    if (x.rank() != 2) fail(ErrorKind::shape_mismatch, "maxpool1d: expected rank-2 input");
    const std::size_t n = x.dim(0), d = x.dim(1), od = (d + stride - 1) / stride;
    PoolResult r{Tensor({n, od}), std::vector<std::size_t>(n * od)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < od; ++j) {
            std::size_t best_idx = i * d + j * stride;
            for (std::size_t k = j * stride + 1; k < std::min(d, (j + 1) * stride); ++k)
                if (x[i * d + k] > x[best_idx]) best_idx = i * d + k;
            r.output.at(i, j) = x[best_idx];
            r.argmax[i * od + j] = best_idx;
        }
    }
    return r;
}

inline Tensor maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax, const Tensor& dy)
{
    if (dy.size() != argmax.size()) fail(ErrorKind::shape_mismatch, "maxpool backward: grad size mismatch");
    Tensor dx(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
    return dx;
}

inline Tensor maxpool1d(const Tensor& x, std::size_t stride) { return maxpool1d_forward(x, stride).output; }

// ---------------------------------------------------------------------------
// Global average pooling: [N x C x H x W] -> [N x C]

inline Tensor gap_forward(const Tensor& x)
{
    if (x.rank() != 4) fail(ErrorKind::shape_mismatch, "global average pool: expected rank-4 input");
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor y({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < plane; ++j) s += x[i * plane + j];
        y[i] = s / static_cast<double>(plane);
    }
    return y;
}

inline Tensor gap_backward(const Shape& input_shape, const Tensor& dy)
{
    Tensor dx(input_shape);
    const std::size_t plane = input_shape[2] * input_shape[3];
    for (std::size_t i = 0; i < dy.size(); ++i) {
        const double g = dy[i] / static_cast<double>(plane);
        for (std::size_t j = 0; j < plane; ++j) dx[i * plane + j] = g;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Softmax over rows of [N x C]

inline Tensor softmax_rows(const Tensor& logits)
{
    if (logits.rank() != 2) fail(ErrorKind::shape_mismatch, "softmax: expected rank-2 input");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    Tensor p(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (p.at(i, j) = std::exp(logits.at(i, j) - mx));
        for (std::size_t j = 0; j < c; ++j) p.at(i, j) /= z;
    }
    ensure_finite(p, "softmax");
    return p;
}

/// Given softmax output p and dL/dp, returns dL/dlogits.
inline Tensor softmax_backward(const Tensor& probs, const Tensor& dprobs)
{
    const std::size_t n = probs.dim(0), c = probs.dim(1);
    Tensor dz(probs.shape());
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += probs.at(i, j) * dprobs.at(i, j);
        for (std::size_t j = 0; j < c; ++j) dz.at(i, j) = probs.at(i, j) * (dprobs.at(i, j) - dot);
    }
    return dz;
}

} // namespace drgrade
