#include <gtest/gtest.h>

#include <sstream>

#include "drgrade/tensor.hpp"
#include "gradcheck.hpp"

using namespace drgrade;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b)
{
    Tensor out({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

// Straight seven-loop cross-correlation with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad)
{
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), k = w.dim(2);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    Tensor y({n, f, oh, ow});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < f; ++o)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double s = 0.0;
                    for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                                s += x.at(i, ch, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                                     w.at(o, ch, ky, kx);
                            }
                    y.at(i, o, oy, ox) = s;
                }
    return y;
}

} // namespace

TEST(Tensor, ZeroSizedDimensionIsRejected)
{
    EXPECT_THROW(Tensor({3, 0}), Error);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), Error);
}

TEST(Tensor, ReshapeKeepsDataAndChecksSize)
{
    Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    const Tensor r = t.reshaped({3, 2});
    EXPECT_EQ(r.at(2, 1), 6.0);
    EXPECT_THROW(t.reshaped({4, 2}), Error);
}

TEST(Tensor, BroadcastAddsRowVector)
{
    const Tensor m({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    const Tensor row({3}, std::vector<double>{10, 20, 30});
    const Tensor s = add(m, row);
    EXPECT_EQ(s.shape(), (Shape{2, 3}));
    EXPECT_EQ(s.at(1, 2), 36.0);
    EXPECT_EQ(s.at(0, 0), 11.0);
    EXPECT_THROW(add(m, Tensor({2})), Error);
}

TEST(Tensor, DivisionByZeroIsNumericError)
{
    try {
        div(Tensor({2}, 1.0), Tensor({2}, 0.0));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
    }
}

TEST(Tensor, MatmulMatchesTripleLoop)
{
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(9), n = 1 + rng.below(9);
        const Tensor a = gradcheck::random_tensor({m, k}, rng), b = gradcheck::random_tensor({k, n}, rng);
        EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
    }
    EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), Error);
}

TEST(Tensor, ConvMatchesDirectLoops)
{
    Rng rng(12);
    for (std::size_t stride : {1u, 2u})
        for (std::size_t pad : {0u, 1u, 2u}) {
            const Tensor x = gradcheck::random_tensor({2, 3, 7, 6}, rng);
            const Tensor w = gradcheck::random_tensor({4, 3, 3, 3}, rng);
            EXPECT_LT(max_abs_diff(conv2d(x, w, stride, pad), naive_conv(x, w, stride, pad)), 1e-12)
                << "stride " << stride << " pad " << pad;
        }
}

TEST(Tensor, ConvRejectsOversizedKernel)
{
    EXPECT_THROW(conv2d(Tensor({1, 1, 2, 2}), Tensor({1, 1, 5, 5}), 1, 0), Error);
    EXPECT_THROW(conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 1, 3, 3}), 1, 1), Error);
}

TEST(Tensor, GaussianKernelsAreNormalizedAndSeparable)
{
    const Tensor k1 = gaussian_kernel1d(1.7, 6);
    const Tensor k2 = gaussian_kernel2d(1.7, 6);
    EXPECT_NEAR(sum(k1), 1.0, 1e-14);
    EXPECT_NEAR(sum(k2), 1.0, 1e-14);
    for (std::size_t y = 0; y < 13; ++y)
        for (std::size_t x = 0; x < 13; ++x) EXPECT_NEAR(k2.at(y, x), k1[y] * k1[x], 1e-15);
}

TEST(Tensor, SerializationRoundTripsBitExactly)
{
    Rng rng(3);
    const Tensor t = gradcheck::random_tensor({2, 3, 4}, rng, -1e6, 1e6);
    std::stringstream ss;
    write_tensor(ss, t);
    EXPECT_EQ(read_tensor(ss), t);
    std::stringstream truncated(ss.str().substr(0, 20));
    EXPECT_THROW(read_tensor(truncated), Error);
}

TEST(Rng, FirstOutputIsSplitMix64)
{
    // Reference value of the SplitMix64 sequence for seed 0.
    Rng rng(0);
    EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, DerivedStreamsAreStableAndDistinct)
{
    Rng a = Rng::derive(42, {1, 2});
    Rng b = Rng::derive(42, {1, 2});
    Rng c = Rng::derive(42, {2, 1});
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
}

TEST(Rng, UniformAndNormalMoments)
{
    Rng rng(99);
    double s = 0.0, s2 = 0.0, n1 = 0.0, n2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
        s2 += u * u;
        const double z = rng.standard_normal();
        n1 += z;
        n2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.5, 0.005);
    EXPECT_NEAR(s2 / n - 0.25, 1.0 / 12.0, 0.002);
    EXPECT_NEAR(n1 / n, 0.0, 0.01);
    EXPECT_NEAR(n2 / n, 1.0, 0.02);
}

TEST(Rng, BelowCoversRangeUniformly)
{
    Rng rng(5);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 70000; ++i) ++hits[rng.below(7)];
    for (int h : hits) EXPECT_NEAR(h, 10000, 400);
    EXPECT_THROW(rng.below(0), Error);
}
