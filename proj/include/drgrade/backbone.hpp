#pragma once

#include <string>
#include <vector>

#include "drgrade/layers.hpp"

namespace drgrade {

enum class HeadKind { classification, regression };

inline const char* to_string(HeadKind h) { return h == HeadKind::classification ? "classification" : "regression"; }

/// Plain CNN: per stage conv(k x k, same padding) -> relu -> maxpool(pool_stride);
/// then global average pooling (the feature vector) and a linear head.
struct BackboneConfig {
    std::vector<std::size_t> conv_channels{8, 16, 32, 64};
    std::size_t kernel_size = 3;
    std::size_t pool_stride = 2;
    std::size_t feature_dim = 64;
    HeadKind head = HeadKind::regression;
    std::size_t class_count = 5;
    std::size_t input_channels = 3;
    std::size_t input_side = 64;
    /// Identity skip (added before the ReLU) on stages whose in/out channels match.
    bool residual = false;

    std::size_t output_dim() const { return head == HeadKind::classification ? class_count : 1; }

    void validate() const
    {
        require(!conv_channels.empty(), "backbone: at least one conv stage is required");
        require(feature_dim > 0, "backbone: feature_dim must be > 0");
        require(conv_channels.back() == feature_dim, "backbone: last conv stage width must equal feature_dim");
        require(kernel_size % 2 == 1, "backbone: kernel_size must be odd");
        require(pool_stride >= 1, "backbone: pool_stride must be >= 1");
        require(class_count >= 2, "backbone: class_count must be >= 2");
        require(input_side >= 1, "backbone: input_side must be >= 1");
        for (auto c : conv_channels) require(c > 0, "backbone: conv widths must be > 0");
    }

    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

inline std::string stage_weight(std::size_t i) { return "stage" + std::to_string(i) + ".conv.weight"; }
inline std::string stage_bias(std::size_t i) { return "stage" + std::to_string(i) + ".conv.bias"; }

/// Registers all backbone entries with zero values.
inline ModelParams make_backbone_params(const BackboneConfig& cfg)
{
    cfg.validate();
    ModelParams params;
    std::size_t in = cfg.input_channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        const std::size_t out = cfg.conv_channels[i];
        params.add(stage_weight(i), Tensor({out, in, cfg.kernel_size, cfg.kernel_size}));
        params.add(stage_bias(i), Tensor({out}));
        in = out;
    }
    params.add("head.weight", Tensor({cfg.output_dim(), cfg.feature_dim}));
    params.add("head.bias", Tensor({cfg.output_dim()}));
    return params;
}

struct StageCache {
    Tensor input;
    Tensor pre_activation; ///< conv output (+ skip), before ReLU
    Tensor activation;     ///< after ReLU, input to pooling
    std::vector<std::size_t> pool_argmax;
    bool skip = false;
};

struct LayerCache {
    std::vector<StageCache> stages;
    Shape gap_input_shape;
    Tensor features;
    std::size_t batch = 0;
    std::uint64_t params_version = 0;
};

struct ForwardResult {
    Tensor output;   ///< logits [N x C] or scores [N x 1]
    Tensor features; ///< global-average-pooled features [N x feature_dim]
    LayerCache cache;
};

inline ForwardResult forward(const BackboneConfig& cfg, const ModelParams& params, const Tensor& batch)
{
    if (batch.rank() != 4 || batch.dim(1) != cfg.input_channels || batch.dim(2) != cfg.input_side ||
        batch.dim(3) != cfg.input_side)
        fail(ErrorKind::shape_mismatch, "backbone forward: batch " + shape_string(batch.shape()) +
                                            " does not match input " + std::to_string(cfg.input_channels) + "x" +
                                            std::to_string(cfg.input_side) + "x" + std::to_string(cfg.input_side));
    ForwardResult r;
    r.cache.batch = batch.dim(0);
    r.cache.params_version = params.version();
    const std::size_t pad = cfg.kernel_size / 2;
    Tensor x = batch;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        StageCache sc;
        sc.input = x;
        sc.pre_activation = conv2d_forward(x, params.at(stage_weight(i)).value, params.at(stage_bias(i)).value, 1, pad);
        sc.skip = cfg.residual && x.dim(1) == sc.pre_activation.dim(1);
        if (sc.skip)
            for (std::size_t j = 0; j < x.size(); ++j) sc.pre_activation[j] += x[j];
        sc.activation = relu_forward(sc.pre_activation);
        PoolResult pooled = maxpool2d_forward(sc.activation, cfg.pool_stride);
        sc.pool_argmax = std::move(pooled.argmax);
        x = std::move(pooled.output);
        r.cache.stages.push_back(std::move(sc));
    }
    r.cache.gap_input_shape = x.shape();
    r.features = gap_forward(x);
    r.cache.features = r.features;
    r.output = linear_forward(r.features, params.at("head.weight").value, params.at("head.bias").value);
    ensure_finite(r.output, "backbone forward");
    return r;
}

/// Accumulates d(loss)/d(param) into every grad buffer. `grad_features`, when
/// given, is added to the gradient arriving at the pooled features.
inline void backward(const BackboneConfig& cfg, ModelParams& params, const LayerCache& cache,
                     const Tensor& grad_output, const Tensor* grad_features = nullptr)
{
    if (cache.params_version != params.version())
        fail(ErrorKind::state, "backbone backward: cache is stale (parameters changed since forward)");
    if (cache.stages.size() != cfg.conv_channels.size())
        fail(ErrorKind::state, "backbone backward: cache does not match config");
    if (grad_output.rank() != 2 || grad_output.dim(0) != cache.batch || grad_output.dim(1) != cfg.output_dim())
        fail(ErrorKind::shape_mismatch, "backbone backward: grad_output shape " + shape_string(grad_output.shape()));

    auto& hw = params.at("head.weight");
    auto& hb = params.at("head.bias");
    Tensor g = linear_backward(cache.features, hw.value, grad_output, hw.grad, hb.grad);
    if (grad_features) g = add(g, *grad_features);
    g = gap_backward(cache.gap_input_shape, g);
    const std::size_t pad = cfg.kernel_size / 2;
    for (std::size_t i = cfg.conv_channels.size(); i-- > 0;) {
        const StageCache& sc = cache.stages[i];
        g = maxpool_backward(sc.activation.shape(), sc.pool_argmax, g);
        g = relu_backward(sc.pre_activation, g);
        auto& w = params.at(stage_weight(i));
        auto& b = params.at(stage_bias(i));
        Tensor gx = conv2d_backward(sc.input, w.value, g, 1, pad, w.grad, b.grad);
        if (sc.skip)
            for (std::size_t j = 0; j < gx.size(); ++j) gx[j] += g[j];
        g = std::move(gx);
    }
}

} // namespace drgrade
