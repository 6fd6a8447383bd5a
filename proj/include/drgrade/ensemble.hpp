#pragma once

#include <span>
#include <string>
#include <vector>

#include "drgrade/augment.hpp"
#include "drgrade/backbone.hpp"
#include "drgrade/objectives.hpp"
#include "drgrade/pipeline.hpp"

namespace drgrade {

enum class EnsembleKind { none, multi_model, multi_view };

inline const char* to_string(EnsembleKind k)
{
    switch (k) {
    case EnsembleKind::none: return "none";
    case EnsembleKind::multi_model: return "multi_model";
    case EnsembleKind::multi_view: return "multi_view";
    }
    return "?";
}

struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::none;
    std::vector<std::uint64_t> seeds; ///< multi_model members
    int view_count = 1;               ///< multi_view, original view included

    void validate() const
    {
        if (kind == EnsembleKind::multi_model) require(!seeds.empty(), "ensemble: multi_model needs at least one seed");
        if (kind == EnsembleKind::multi_view) require(view_count >= 1, "ensemble: view_count must be >= 1");
    }

    friend bool operator==(const EnsembleSpec&, const EnsembleSpec&) = default;
};

/// Backbone plus the input normalization it was trained with.
struct Model {
    BackboneConfig config;
    ModelParams params;
    NormStats norm{};
};

/// Continuous model output in the averaging space: scores [N x 1] for a
/// regression head, softmax probabilities [N x C] for a classification head.
struct Prediction {
    HeadKind head = HeadKind::regression;
    Tensor values;

    std::size_t size() const { return values.rank() == 2 ? values.dim(0) : 0; }

    /// Expected grade under the probabilities, or the raw score.
    std::vector<double> scores() const
    {
        std::vector<double> out(size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (head == HeadKind::regression) {
                out[i] = values.at(i, 0);
            } else {
                for (std::size_t c = 0; c < values.dim(1); ++c) out[i] += static_cast<double>(c) * values.at(i, c);
            }
        }
        return out;
    }

    std::vector<Grade> grades() const
    {
        std::vector<Grade> out(size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (head == HeadKind::regression) {
                out[i] = score_to_grade(values.at(i, 0), 4);
            } else {
                std::size_t best = 0;
                for (std::size_t c = 1; c < values.dim(1); ++c)
                    if (values.at(i, c) > values.at(i, best)) best = c;
                out[i] = static_cast<Grade>(best);
            }
        }
        return out;
    }
};

/// `batch` holds images in [0, 1]; normalization happens here.
inline Prediction predict(const Model& model, Tensor batch)
{
    zscore_batch(batch, model.norm);
    const ForwardResult r = forward(model.config, model.params, batch);
    if (model.config.head == HeadKind::classification) return {HeadKind::classification, softmax_rows(r.output)};
    return {HeadKind::regression, r.output};
}

/// Runs inference in chunks to bound the im2col buffers.
inline Prediction predict_images(const Model& model, std::span<const Image> images, std::size_t chunk = 64)
{
    require(!images.empty(), "predict_images: no images");
    Prediction out{model.config.head, Tensor({images.size(), model.config.output_dim()})};
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const std::size_t end = std::min(images.size(), start + chunk);
        const Prediction p = predict(model, stack_images(images.subspan(start, end - start)));
        const std::size_t width = p.values.dim(1);
        std::copy(p.values.raw(), p.values.raw() + (end - start) * width, out.values.raw() + start * width);
    }
    return out;
}

inline Prediction average_predictions(std::span<const Prediction> preds)
{
    require(!preds.empty(), "ensemble: no member predictions");
    Prediction out = preds[0];
    for (std::size_t m = 1; m < preds.size(); ++m) {
        if (preds[m].head != out.head || preds[m].values.shape() != out.values.shape())
            fail(ErrorKind::shape_mismatch, "ensemble: member predictions differ in shape");
        out.values = add(out.values, preds[m].values);
    }
    out.values = scale(out.values, 1.0 / static_cast<double>(preds.size()));
    return out;
}

/// Mean of member outputs in fixed member order; grades are taken once from the mean.
inline Prediction predict_multi_model(std::span<const Model> models, std::span<const Image> images)
{
    require(!models.empty(), "ensemble: no models");
    for (const auto& m : models)
        if (!(m.config == models[0].config))
            fail(ErrorKind::invalid_argument, "ensemble: member backbone configs differ");
    std::vector<Prediction> preds;
    preds.reserve(models.size());
    for (const auto& m : models) preds.push_back(predict_images(m, images));
    return average_predictions(preds);
}

/// A random view: independent horizontal and vertical flips, then a rotation.
inline Image random_view(const Image& img, Rng& rng)
{
    const bool h = rng.uniform01() < 0.5;
    const bool v = rng.uniform01() < 0.5;
    const double angle = rng_uniform(rng, 0.0, 360.0);
    Image out = img;
    if (h) out = hflip(out);
    if (v) out = vflip(out);
    return rotate(out, angle);
}

inline Prediction predict_multi_view(const Model& model, std::span<const Image> images, int view_count,
                                     std::uint64_t seed)
{
    require(view_count >= 1, "ensemble: view_count must be >= 1");
    std::vector<Prediction> preds;
    preds.push_back(predict_images(model, images));
    for (int v = 1; v < view_count; ++v) {
        std::vector<Image> views;
        views.reserve(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) {
            Rng rng = Rng::derive(seed, {0x7E57, static_cast<std::uint64_t>(v), i});
            views.push_back(random_view(images[i], rng));
        }
        preds.push_back(predict_images(model, views));
    }
    return average_predictions(preds);
}

} // namespace drgrade
