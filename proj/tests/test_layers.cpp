#include <gtest/gtest.h>

#include "drgrade/backbone.hpp"
#include "gradcheck.hpp"

using namespace drgrade;
using gradcheck::dot;
using gradcheck::random_tensor;

namespace {

void expect_ok(const gradcheck::Report& r)
{
    EXPECT_TRUE(r.ok()) << r.first_failure << " (checked " << r.checked << ", skipped " << r.skipped << ")";
}

std::vector<long long> relu_signs(const Tensor& pre)
{
    std::vector<long long> p(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) p[i] = pre[i] > 0.0;
    return p;
}

} // namespace

TEST(Layers, LinearGradients)
{
    Rng rng(1);
    Tensor x = random_tensor({4, 5}, rng), w = random_tensor({3, 5}, rng), b = random_tensor({3}, rng);
    const Tensor probe = random_tensor({4, 3}, rng);
    Tensor dw = Tensor::zeros_like(w), db = Tensor::zeros_like(b);
    const Tensor dx = linear_backward(x, w, probe, dw, db);
    auto loss = [&] { return dot(probe, linear_forward(x, w, b)); };
    expect_ok(gradcheck::check(x, dx, loss, "x", rng));
    expect_ok(gradcheck::check(w, dw, loss, "w", rng));
    expect_ok(gradcheck::check(b, db, loss, "b", rng));
}

TEST(Layers, LinearBackwardAccumulates)
{
    Rng rng(2);
    const Tensor x = random_tensor({2, 3}, rng), w = random_tensor({2, 3}, rng), dy = random_tensor({2, 2}, rng);
    Tensor dw = Tensor::zeros_like(w), db({2});
    linear_backward(x, w, dy, dw, db);
    const Tensor once = dw;
    linear_backward(x, w, dy, dw, db);
    EXPECT_LT(max_abs_diff(dw, scale(once, 2.0)), 1e-15);
}

TEST(Layers, ReluGradientAwayFromKink)
{
    Rng rng(3);
    Tensor x = gradcheck::random_tensor_away_from_zero({3, 7}, rng);
    const Tensor probe = random_tensor({3, 7}, rng);
    expect_ok(gradcheck::check(x, relu_backward(x, probe), [&] { return dot(probe, relu_forward(x)); }, "relu", rng));
}

TEST(Layers, ConvGradients)
{
    Rng rng(4);
    for (std::size_t stride : {1u, 2u})
        for (std::size_t pad : {0u, 1u}) {
            Tensor x = random_tensor({2, 2, 6, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
            const Tensor y = conv2d_forward(x, w, b, stride, pad);
            const Tensor probe = random_tensor(y.shape(), rng);
            Tensor dw = Tensor::zeros_like(w), db = Tensor::zeros_like(b);
            const Tensor dx = conv2d_backward(x, w, probe, stride, pad, dw, db);
            auto loss = [&] { return dot(probe, conv2d_forward(x, w, b, stride, pad)); };
            expect_ok(gradcheck::check(x, dx, loss, "conv x", rng));
            expect_ok(gradcheck::check(w, dw, loss, "conv w", rng));
            expect_ok(gradcheck::check(b, db, loss, "conv b", rng));
        }
}

TEST(Layers, MaxPoolKeepsPartialWindowsAndFirstTie)
{
    Tensor x({1, 1, 3, 3}, std::vector<double>{1, 1, 0, 1, 1, 5, 2, 0, 3});
    const PoolResult r = maxpool2d_forward(x, 2);
    EXPECT_EQ(r.output.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_EQ(r.output[0], 1.0);
    EXPECT_EQ(r.argmax[0], 0u); // four-way tie goes to the first index
    EXPECT_EQ(r.output[1], 5.0);
    EXPECT_EQ(r.output[2], 2.0);
    EXPECT_EQ(r.output[3], 3.0);
}

TEST(Layers, PoolingGradients)
{
    Rng rng(5);
    Tensor x = random_tensor({2, 3, 5, 4}, rng);
    const PoolResult p2 = maxpool2d_forward(x, 2);
    const Tensor probe2 = random_tensor(p2.output.shape(), rng);
    expect_ok(gradcheck::check(
        x, maxpool_backward(x.shape(), p2.argmax, probe2), [&] { return dot(probe2, maxpool2d_forward(x, 2).output); },
        "maxpool2d", rng, {}, [&] {
            auto a = maxpool2d_forward(x, 2).argmax;
            return std::vector<long long>(a.begin(), a.end());
        }));

    Tensor v = random_tensor({3, 9}, rng);
    const PoolResult p1 = maxpool1d_forward(v, 2);
    EXPECT_EQ(p1.output.dim(1), 5u);
    const Tensor probe1 = random_tensor(p1.output.shape(), rng);
    expect_ok(gradcheck::check(v, maxpool_backward(v.shape(), p1.argmax, probe1),
                               [&] { return dot(probe1, maxpool1d(v, 2)); }, "maxpool1d", rng));

    const Tensor g = gap_forward(x);
    const Tensor probe_g = random_tensor(g.shape(), rng);
    expect_ok(gradcheck::check(x, gap_backward(x.shape(), probe_g), [&] { return dot(probe_g, gap_forward(x)); }, "gap", rng));
}

TEST(Layers, SoftmaxRowsSumToOneAndGradient)
{
    Rng rng(6);
    Tensor z = random_tensor({4, 5}, rng, -3.0, 3.0);
    const Tensor p = softmax_rows(z);
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) s += p.at(i, j);
        EXPECT_NEAR(s, 1.0, 1e-14);
    }
    const Tensor probe = random_tensor(p.shape(), rng);
    expect_ok(gradcheck::check(z, softmax_backward(p, probe), [&] { return dot(probe, softmax_rows(z)); }, "softmax", rng));

    // large logits stay finite
    const Tensor big({1, 3}, std::vector<double>{1000.0, 999.0, -1000.0});
    EXPECT_TRUE(softmax_rows(big).all_finite());
}

TEST(Layers, HeInitStatistics)
{
    ModelParams params;
    params.add("w", Tensor({64, 32, 3, 3}));
    params.add("b", Tensor({64}, 7.0));
    Rng rng(8);
    he_init(params, rng);
    const Tensor& w = params.at("w").value;
    double s2 = 0.0;
    for (double v : w.data()) s2 += v * v;
    const double expected = 2.0 / (32 * 9);
    EXPECT_NEAR(s2 / w.size() / expected, 1.0, 0.05);
    EXPECT_EQ(sum(params.at("b").value), 0.0);
}

TEST(Layers, ModelParamsRejectDuplicates)
{
    ModelParams p;
    p.add("a", Tensor({1}));
    EXPECT_THROW(p.add("a", Tensor({1})), Error);
    EXPECT_THROW(p.at("missing"), Error);
}

class BackboneGradient : public ::testing::TestWithParam<std::tuple<HeadKind, bool>> {};

TEST_P(BackboneGradient, MatchesFiniteDifferences)
{
    const auto [head, residual] = GetParam();
    BackboneConfig cfg;
    cfg.conv_channels = {4, 4, 6};
    cfg.feature_dim = 6;
    cfg.input_side = 8;
    cfg.head = head;
    cfg.residual = residual;
    ModelParams params = make_backbone_params(cfg);
    Rng rng(21);
    he_init(params, rng);
    for (auto& p : params.entries())
        if (p.value.rank() == 1)
            for (double& v : p.value.data()) v = 0.1 * (rng.uniform01() - 0.5);
    Tensor batch = random_tensor({2, 3, 8, 8}, rng);
    const ForwardResult fr = forward(cfg, params, batch);
    const Tensor probe = random_tensor(fr.output.shape(), rng);
    const Tensor feat_probe = random_tensor(fr.features.shape(), rng);
    backward(cfg, params, fr.cache, probe, &feat_probe);

    auto loss = [&] {
        const ForwardResult r = forward(cfg, params, batch);
        return dot(probe, r.output) + dot(feat_probe, r.features);
    };
    auto pattern = [&] {
        const ForwardResult r = forward(cfg, params, batch);
        std::vector<long long> pat;
        for (const auto& s : r.cache.stages) {
            const auto signs = relu_signs(s.pre_activation);
            pat.insert(pat.end(), signs.begin(), signs.end());
            pat.insert(pat.end(), s.pool_argmax.begin(), s.pool_argmax.end());
        }
        return pat;
    };
    gradcheck::Options opt;
    opt.max_coords = 40;
    for (auto& p : params.entries()) {
        const Tensor analytic = p.grad;
        const auto r = gradcheck::check(p.value, analytic, loss, p.name, rng, opt, pattern);
        expect_ok(r);
    }
}

INSTANTIATE_TEST_SUITE_P(Heads, BackboneGradient,
                         ::testing::Combine(::testing::Values(HeadKind::regression, HeadKind::classification),
                                            ::testing::Bool()));

TEST(Backbone, StaleCacheIsRejected)
{
    BackboneConfig cfg;
    cfg.conv_channels = {2};
    cfg.feature_dim = 2;
    cfg.input_side = 4;
    ModelParams params = make_backbone_params(cfg);
    Rng rng(1);
    he_init(params, rng);
    const ForwardResult fr = forward(cfg, params, Tensor({1, 3, 4, 4}, 0.5));
    params.touch();
    try {
        backward(cfg, params, fr.cache, Tensor({1, 1}, 1.0));
        FAIL() << "expected a stale-cache error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::state);
    }
}

TEST(Backbone, ShapeErrorsNameTheExpectedInput)
{
    BackboneConfig cfg;
    ModelParams params = make_backbone_params(cfg);
    try {
        forward(cfg, params, Tensor({1, 3, 32, 32}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::shape_mismatch);
        EXPECT_NE(std::string(e.what()).find("3x64x64"), std::string::npos);
    }
    cfg.feature_dim = 10;
    EXPECT_THROW(make_backbone_params(cfg), Error);
}

TEST(Backbone, FeatureWidthAndOutputDim)
{
    BackboneConfig cfg;
    cfg.input_side = 16;
    cfg.head = HeadKind::classification;
    ModelParams params = make_backbone_params(cfg);
    Rng rng(2);
    he_init(params, rng);
    const ForwardResult fr = forward(cfg, params, Tensor({3, 3, 16, 16}, 0.2));
    EXPECT_EQ(fr.output.shape(), (Shape{3, 5}));
    EXPECT_EQ(fr.features.shape(), (Shape{3, 64}));
}
