#pragma once

#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drgrade/backbone.hpp"
#include "drgrade/objectives.hpp"
#include "drgrade/optim.hpp"

namespace drgrade {

/// Three linear layers, each followed by a stride-2 max-pool over features and a
/// ReLU. Input is [self || other] (2 * feature_dim); pooled widths are
/// widths[0], widths[1] and 1 (the score). The ReLU after the last layer is
/// optional: with grade targets piled up at 0 a rectified score stops
/// receiving gradient once it crosses zero for every sample.
struct FusionConfig {
    std::size_t feature_dim = 64;
    std::vector<std::size_t> widths; ///< pooled widths of the first two layers; empty -> {D, D/2}
    std::size_t pool_stride = 2;
    bool final_relu = false;

    std::vector<std::size_t> pooled_widths() const
    {
        std::vector<std::size_t> w = widths;
        if (w.empty()) w = {feature_dim, std::max<std::size_t>(1, feature_dim / 2)};
        w.push_back(1);
        return w;
    }

    void validate() const
    {
        require(feature_dim > 0, "fusion: feature_dim must be > 0");
        require(pool_stride == 2, "fusion: pool stride is fixed at 2");
        require(widths.empty() || widths.size() == 2, "fusion: exactly two hidden widths");
        for (auto w : widths) require(w > 0, "fusion: widths must be > 0");
    }
};

inline std::string fusion_weight(std::size_t i) { return "fusion.fc" + std::to_string(i) + ".weight"; }
inline std::string fusion_bias(std::size_t i) { return "fusion.fc" + std::to_string(i) + ".bias"; }

inline ModelParams make_fusion_params(const FusionConfig& cfg)
{
    cfg.validate();
    ModelParams params;
    std::size_t in = 2 * cfg.feature_dim;
    const auto pooled = cfg.pooled_widths();
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        const std::size_t out = pooled[i] * cfg.pool_stride;
        params.add(fusion_weight(i), Tensor({out, in}));
        params.add(fusion_bias(i), Tensor({out}));
        in = pooled[i];
    }
    return params;
}

struct FusionCache {
    struct Layer {
        Tensor input, linear_out, pooled;
        std::vector<std::size_t> argmax;
    };
    std::vector<Layer> layers;
    std::uint64_t params_version = 0;
};

/// Concatenates rows: [self_i || other_i].
inline Tensor concat_pair(const Tensor& self_feats, const Tensor& other_feats)
{
    if (self_feats.shape() != other_feats.shape() || self_feats.rank() != 2)
        fail(ErrorKind::shape_mismatch, "fusion: feature shapes " + shape_string(self_feats.shape()) + " and " +
                                            shape_string(other_feats.shape()) + " differ");
    const std::size_t n = self_feats.dim(0), d = self_feats.dim(1);
    Tensor x({n, 2 * d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            x.at(i, j) = self_feats.at(i, j);
            x.at(i, d + j) = other_feats.at(i, j);
        }
    return x;
}

/// Scores [N x 1] for input [N x 2D].
inline Tensor fusion_forward(const FusionConfig& cfg, const ModelParams& params, const Tensor& input,
                             FusionCache* cache = nullptr)
{
    cfg.validate();
    if (input.rank() != 2 || input.dim(1) != 2 * cfg.feature_dim)
        fail(ErrorKind::shape_mismatch, "fusion forward: input " + shape_string(input.shape()) + " expects width " +
                                            std::to_string(2 * cfg.feature_dim));
    if (cache) {
        cache->layers.clear();
        cache->params_version = params.version();
    }
    Tensor x = input;
    const std::size_t layers = cfg.pooled_widths().size();
    for (std::size_t i = 0; i < layers; ++i) {
        Tensor z = linear_forward(x, params.at(fusion_weight(i)).value, params.at(fusion_bias(i)).value);
        PoolResult pooled = maxpool1d_forward(z, cfg.pool_stride);
        Tensor a = i + 1 < layers || cfg.final_relu ? relu_forward(pooled.output) : pooled.output;
        if (cache) cache->layers.push_back({std::move(x), std::move(z), std::move(pooled.output), std::move(pooled.argmax)});
        x = std::move(a);
    }
    ensure_finite(x, "fusion forward");
    return x;
}

/// Accumulates parameter gradients; returns d loss / d input.
inline Tensor fusion_backward(const FusionConfig& cfg, ModelParams& params, const FusionCache& cache, const Tensor& grad_scores)
{
    if (cache.params_version != params.version())
        fail(ErrorKind::state, "fusion backward: cache is stale (parameters changed since forward)");
    Tensor g = grad_scores;
    for (std::size_t i = cache.layers.size(); i-- > 0;) {
        const auto& l = cache.layers[i];
        if (i + 1 < cache.layers.size() || cfg.final_relu) g = relu_backward(l.pooled, g);
        g = maxpool_backward(l.linear_out.shape(), l.argmax, g);
        auto& w = params.at(fusion_weight(i));
        auto& b = params.at(fusion_bias(i));
        g = linear_backward(l.input, w.value, g, w.grad, b.grad);
    }
    return g;
}

/// Score for one eye from its own features and its partner's. The partner's
/// prediction uses the same parameters with the arguments swapped.
inline double fuse_predict(const FusionConfig& cfg, const ModelParams& params, std::span<const double> feat_self,
                           std::span<const double> feat_other)
{
    if (feat_self.size() != cfg.feature_dim || feat_other.size() != cfg.feature_dim)
        fail(ErrorKind::shape_mismatch, "fuse_predict: feature length mismatch");
    const Tensor a({1, cfg.feature_dim}, std::vector<double>(feat_self.begin(), feat_self.end()));
    const Tensor b({1, cfg.feature_dim}, std::vector<double>(feat_other.begin(), feat_other.end()));
    return fusion_forward(cfg, params, concat_pair(a, b))[0];
}

// ---------------------------------------------------------------------------
// Training on frozen backbone features

struct FusionTrainOptions {
    int epochs = 20;
    std::size_t batch_size = 64;
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    bool standardize = true; ///< z-score each feature dimension with training statistics
    std::uint64_t seed = 0;
};

/// Features of every image plus the index of its partner eye (itself when the
/// partner is missing).
struct PairedFeatures {
    Tensor features; ///< [M x D]
    std::vector<std::size_t> partner;
    std::vector<Grade> labels;
    std::vector<bool> self_paired;

    std::size_t size() const { return partner.size(); }
};

/// Per-dimension affine map (x - mean) / std. Empty means identity.
struct FeatureScaler {
    Tensor mean, std; ///< [D] each

    bool empty() const { return mean.size() == 0; }

    Tensor apply(const Tensor& x) const
    {
        if (empty()) return x;
        if (x.rank() != 2 || x.dim(1) != mean.size())
            fail(ErrorKind::shape_mismatch, "feature scaler: width " + shape_string(x.shape()) + " vs " +
                                                std::to_string(mean.size()));
        Tensor out = x;
        for (std::size_t i = 0; i < x.dim(0); ++i)
            for (std::size_t j = 0; j < x.dim(1); ++j) out.at(i, j) = (x.at(i, j) - mean[j]) / std[j];
        return out;
    }
};

/// Population statistics; dimensions with (near) zero spread get std 1.
inline FeatureScaler fit_feature_scaler(const Tensor& features)
{
    require(features.rank() == 2 && features.dim(0) > 0, "fit_feature_scaler: need a non-empty [M x D] matrix");
    const std::size_t m = features.dim(0), d = features.dim(1);
    FeatureScaler sc{Tensor({d}), Tensor({d})};
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) sc.mean[j] += features.at(i, j);
    for (std::size_t j = 0; j < d; ++j) sc.mean[j] /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dev = features.at(i, j) - sc.mean[j];
            sc.std[j] += dev * dev;
        }
    for (std::size_t j = 0; j < d; ++j) {
        sc.std[j] = std::sqrt(sc.std[j] / static_cast<double>(m));
        if (sc.std[j] < 1e-12) sc.std[j] = 1.0;
    }
    return sc;
}

struct FusionHead {
    FusionConfig config;
    ModelParams params;
    FeatureScaler scaler;
};

inline Tensor gather_rows(const Tensor& m, std::span<const std::size_t> rows)
{
    const std::size_t d = m.dim(1);
    Tensor out({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = m.at(rows[i], j);
    return out;
}

/// Fused inputs [self || partner] for the given image indices.
inline Tensor fused_inputs(const PairedFeatures& data, std::span<const std::size_t> idx)
{
    std::vector<std::size_t> partners(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) partners[i] = data.partner.at(idx[i]);
    return concat_pair(gather_rows(data.features, idx), gather_rows(data.features, partners));
}

/// Continuous fused scores for every image.
inline std::vector<double> fusion_scores(const FusionHead& head, const PairedFeatures& data)
{
    PairedFeatures scaled = data;
    scaled.features = head.scaler.apply(data.features);
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Tensor s = fusion_forward(head.config, head.params, fused_inputs(scaled, all));
    return {s.data().begin(), s.data().end()};
}

/// MSE training of a freshly He-initialized head on fixed features.
inline FusionHead train_fusion_head(const FusionConfig& cfg, const PairedFeatures& raw, const FusionTrainOptions& opt)
{
    require(raw.size() > 0, "train_fusion: no samples");
    require(raw.features.rank() == 2 && raw.features.dim(1) == cfg.feature_dim,
            "train_fusion: feature width does not match the fusion config");
    require(raw.labels.size() == raw.size(), "train_fusion: one label per sample");
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (raw.partner[i] >= raw.size()) fail(ErrorKind::invalid_argument, "train_fusion: missing pair partner");
    FusionHead head{cfg, make_fusion_params(cfg), {}};
    if (opt.standardize) head.scaler = fit_feature_scaler(raw.features);
    PairedFeatures data = raw;
    data.features = head.scaler.apply(raw.features);

    Rng init = Rng::derive(opt.seed, {0xF051});
    he_init(head.params, init);
    OptimizerState state{opt.momentum, opt.weight_decay, {}};
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        Rng order_rng = Rng::derive(opt.seed, {0xF052, static_cast<std::uint64_t>(epoch)});
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t end = std::min(order.size(), start + opt.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            FusionCache cache;
            const Tensor scores = fusion_forward(cfg, head.params, fused_inputs(data, idx), &cache);
            std::vector<Grade> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = data.labels[idx[i]];
            const LossOutput loss = regression_loss(scores, labels, LossKind::mse);
            fusion_backward(cfg, head.params, cache, loss.grad);
            sgd_step(head.params, state, opt.lr);
        }
    }
    return head;
}

} // namespace drgrade
