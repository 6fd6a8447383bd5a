#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drgrade/error.hpp"

namespace drgrade {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
        check_dims();
    }

    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data))
    {
        check_dims();
        if (data_.size() != shape_size(shape_))
            fail(ErrorKind::shape_mismatch,
                 "Tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
    static Tensor ones_like(const Tensor& t) { return Tensor(t.shape_, 1.0); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* raw() noexcept { return data_.data(); }
    const double* raw() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at(std::size_t c, std::size_t y, std::size_t x)
    {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const
    {
        return data_[(c * shape_[1] + y) * shape_[2] + x];
    }

    double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x)
    {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const
    {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const
    {
        if (shape_size(shape) != data_.size())
            fail(ErrorKind::shape_mismatch,
                 "reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_dims() const
    {
        for (std::size_t d : shape_)
            if (d == 0) fail(ErrorKind::shape_mismatch, "Tensor: zero-sized dimension in " + shape_string(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

inline void ensure_finite(const Tensor& t, const char* where)
{
    if (!t.all_finite()) fail(ErrorKind::numeric, std::string(where) + ": non-finite value produced");
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic with right-aligned broadcasting

enum class BinaryOp { add, sub, mul, div, max };

inline Shape broadcast_shape(const Shape& a, const Shape& b)
{
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            fail(ErrorKind::shape_mismatch,
                 "broadcast: incompatible shapes " + shape_string(a) + " and " + shape_string(b));
        out[i] = std::max(da, db);
    }
    return out;
}

namespace detail {

// Maps a flat index of the broadcast result to a flat index of `operand`.
inline std::size_t broadcast_index(std::size_t flat, const Shape& out, const Shape& operand)
{
    std::size_t idx = 0;
    std::size_t stride = 1;
    const std::size_t offset = out.size() - operand.size();
    for (std::size_t i = out.size(); i-- > 0;) {
        const std::size_t coord = flat % out[i];
        flat /= out[i];
        if (i >= offset) {
            const std::size_t d = operand[i - offset];
            if (d != 1) idx += coord * stride;
            stride *= d;
        }
    }
    return idx;
}

inline double apply_op(BinaryOp op, double x, double y)
{
    switch (op) {
    case BinaryOp::add: return x + y;
    case BinaryOp::sub: return x - y;
    case BinaryOp::mul: return x * y;
    case BinaryOp::div:
        if (y == 0.0) fail(ErrorKind::numeric, "elementwise div: division by zero");
        return x / y;
    case BinaryOp::max: return std::max(x, y);
    }
    return 0.0;
}

} // namespace detail

inline Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b)
{
    Tensor out(broadcast_shape(a.shape(), b.shape()));
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::apply_op(op, a[i], b[i]);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = detail::apply_op(op, a[detail::broadcast_index(i, out.shape(), a.shape())],
                                      b[detail::broadcast_index(i, out.shape(), b.shape())]);
        }
    }
    ensure_finite(out, "elementwise");
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
inline Tensor maximum(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::max, a, b); }

inline Tensor scale(const Tensor& a, double s)
{
    Tensor out = a;
    for (double& v : out.data()) v *= s;
    ensure_finite(out, "scale");
    return out;
}

inline double sum(const Tensor& a)
{
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

inline double mean(const Tensor& a) { return sum(a) / static_cast<double>(a.size()); }

inline double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
        fail(ErrorKind::shape_mismatch, "max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// ---------------------------------------------------------------------------
// Row-major GEMM kernels (Eigen). All accumulate into C.

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

/// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    Map(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, K, N);
}

/// C[m x n] += A[m x k] * B[n x k]^T
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    Map(c, M, N).noalias() += ConstMap(a, M, K) * ConstMap(b, N, K).transpose();
}

/// C[m x n] += A[k x m]^T * B[k x n]
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
    Map(c, M, N).noalias() += ConstMap(a, K, M).transpose() * ConstMap(b, K, N);
}

} // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        fail(ErrorKind::shape_mismatch, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    Tensor out({a.dim(0), b.dim(1)});
    detail::gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.raw(), b.raw(), out.raw());
    ensure_finite(out, "matmul");
    return out;
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, zero padding)

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t kernel_h, kernel_w;
    std::size_t stride, padding;

    std::size_t out_h() const { return (height + 2 * padding - kernel_h) / stride + 1; }
    std::size_t out_w() const { return (width + 2 * padding - kernel_w) / stride + 1; }
    std::size_t patch() const { return channels * kernel_h * kernel_w; }

    void validate() const
    {
        if (stride == 0) fail(ErrorKind::invalid_argument, "conv2d: stride must be >= 1");
        if (kernel_h == 0 || kernel_w == 0 || kernel_h > height + 2 * padding || kernel_w > width + 2 * padding)
            fail(ErrorKind::invalid_argument, "conv2d: kernel does not fit the padded input");
    }
};

namespace detail {

/// cols[patch x out_h*out_w] from one image [C x H x W].
inline void im2col(const ConvGeometry& g, const double* img, double* cols)
{
    const std::size_t oh = g.out_h(), ow = g.out_w();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
                double* dst = cols + row * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                              static_cast<std::ptrdiff_t>(g.padding);
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                                  static_cast<std::ptrdiff_t>(g.padding);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                            ix < static_cast<std::ptrdiff_t>(g.width);
                        dst[oy * ow + ox] = inside ? img[(c * g.height + iy) * g.width + ix] : 0.0;
                    }
                }
            }
        }
    }
}

/// Scatter-add of cols back into an image gradient.
inline void col2im(const ConvGeometry& g, const double* cols, double* img)
{
    const std::size_t oh = g.out_h(), ow = g.out_w();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row) {
                const double* src = cols + row * oh * ow;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                              static_cast<std::ptrdiff_t>(g.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                                  static_cast<std::ptrdiff_t>(g.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        img[(c * g.height + iy) * g.width + ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

} // namespace detail

inline ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding)
{
    if (input.rank() != 4 || kernel.rank() != 4 || input.dim(1) != kernel.dim(1))
        fail(ErrorKind::shape_mismatch,
             "conv2d: input " + shape_string(input.shape()) + " incompatible with kernel " + shape_string(kernel.shape()));
    ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), kernel.dim(2), kernel.dim(3), stride, padding};
    g.validate();
    return g;
}

/// input [N x C x H x W], kernel [F x C x kh x kw] -> [N x F x oh x ow]
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding)
{
    const ConvGeometry g = conv_geometry(input, kernel, stride, padding);
    const std::size_t n = input.dim(0), filters = kernel.dim(0);
    const std::size_t oh = g.out_h(), ow = g.out_w();
    Tensor out({n, filters, oh, ow});
    std::vector<double> cols(g.patch() * oh * ow);
    for (std::size_t i = 0; i < n; ++i) {
        detail::im2col(g, input.raw() + i * g.channels * g.height * g.width, cols.data());
        detail::gemm_nn(filters, oh * ow, g.patch(), kernel.raw(), cols.data(), out.raw() + i * filters * oh * ow);
    }
    ensure_finite(out, "conv2d");
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian kernels

/// Truncation radius used wherever only the standard deviation is given.
inline int gaussian_radius(double theta) { return static_cast<int>(std::ceil(3.0 * theta)); }

inline Tensor gaussian_kernel1d(double theta, int radius)
{
    if (!(theta > 0.0)) fail(ErrorKind::invalid_argument, "gaussian kernel: theta must be > 0");
    require(radius >= 1, "gaussian kernel: radius must be >= 1");
    Tensor k({static_cast<std::size_t>(2 * radius + 1)});
    double total = 0.0;
    for (int d = -radius; d <= radius; ++d) {
        const double v = std::exp(-(d * d) / (2.0 * theta * theta));
        k[static_cast<std::size_t>(d + radius)] = v;
        total += v;
    }
    for (double& v : k.data()) v /= total;
    return k;
}

/// (2r+1) x (2r+1) kernel proportional to exp(-(dx^2+dy^2)/(2 theta^2)), summing to 1.
inline Tensor gaussian_kernel2d(double theta, int radius)
{
    if (!(theta > 0.0)) fail(ErrorKind::invalid_argument, "gaussian kernel: theta must be > 0");
    require(radius >= 1, "gaussian kernel: radius must be >= 1");
    const std::size_t side = static_cast<std::size_t>(2 * radius + 1);
    Tensor k({side, side});
    double total = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * theta * theta));
            k.at(static_cast<std::size_t>(dy + radius), static_cast<std::size_t>(dx + radius)) = v;
            total += v;
        }
    }
    for (double& v : k.data()) v /= total;
    return k;
}

// ---------------------------------------------------------------------------
// Binary serialization: u32 rank, u64 dims[rank], f64 payload; little-endian.

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& is)
{
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) fail(ErrorKind::io, "tensor blob truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

} // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t)
{
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::write_le<std::uint64_t>(os, d);
    for (double v : t.data()) detail::write_le<double>(os, v);
}

inline Tensor read_tensor(std::istream& is)
{
    const auto rank = detail::read_le<std::uint32_t>(is);
    if (rank > 8) fail(ErrorKind::io, "tensor blob: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(detail::read_le<std::uint64_t>(is));
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = detail::read_le<double>(is);
    return Tensor(std::move(shape), std::move(data));
}

} // namespace drgrade
