#pragma once

#include <span>
#include <string>
#include <vector>

#include "drgrade/augment.hpp"
#include "drgrade/dataset.hpp"
#include "drgrade/sampling.hpp"

namespace drgrade {

/// Preprocessing chain applied to every raw 8-bit image:
/// FOV crop -> optional Graham -> optional CLAHE -> resize to side x side -> scale to [0, 1].
struct PreprocessOptions {
    std::size_t side = 64;
    bool graham = false;
    bool clahe = false;
    GrahamParams graham_params{};
    ClaheParams clahe_params{};

    friend bool operator==(const PreprocessOptions& a, const PreprocessOptions& b)
    {
        return a.side == b.side && a.graham == b.graham && a.clahe == b.clahe;
    }
};

inline Image preprocess_image(const Image& raw, const PreprocessOptions& opt)
{
    check_image(raw, "preprocess");
    Image img = crop_fov(raw, 255.0);
    if (opt.graham) {
        // scale the blur with the crop so the filter sees the same anatomy at any input size
        GrahamParams p = opt.graham_params;
        p.theta = std::max(1.0, p.theta * static_cast<double>(image_width(img)) / 512.0);
        img = graham(img, p);
    }
    if (opt.clahe) img = clahe(img, opt.clahe_params);
    return rescale(resize(img, opt.side), 1.0 / 255.0);
}

inline std::vector<Image> load_split_images(const Manifest& m, const PreprocessOptions& opt)
{
    std::vector<Image> out;
    out.reserve(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) out.push_back(preprocess_image(read_image(m.image_path(i)), opt));
    return out;
}

/// Stacks same-sized images into [N x 3 x H x W].
inline Tensor stack_images(std::span<const Image> imgs)
{
    require(!imgs.empty(), "stack_images: no images");
    const Shape s = imgs[0].shape();
    Tensor out({imgs.size(), s[0], s[1], s[2]});
    const std::size_t per = imgs[0].size();
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        if (imgs[i].shape() != s) fail(ErrorKind::shape_mismatch, "stack_images: image sizes differ");
        std::copy(imgs[i].raw(), imgs[i].raw() + per, out.raw() + i * per);
    }
    return out;
}

inline Image batch_image(const Tensor& batch, std::size_t i)
{
    const std::size_t per = batch.dim(1) * batch.dim(2) * batch.dim(3);
    Image img({batch.dim(1), batch.dim(2), batch.dim(3)});
    std::copy(batch.raw() + i * per, batch.raw() + (i + 1) * per, img.raw());
    return img;
}

/// In-place per-channel z-score of a [N x 3 x H x W] batch.
inline void zscore_batch(Tensor& batch, const NormStats& stats)
{
    stats.validate();
    require(batch.rank() == 4 && batch.dim(1) == 3, "zscore_batch: expected [N x 3 x H x W]");
    const std::size_t plane = batch.dim(2) * batch.dim(3);
    for (std::size_t i = 0; i < batch.dim(0); ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            double* p = batch.raw() + (i * 3 + c) * plane;
            for (std::size_t j = 0; j < plane; ++j) p[j] = (p[j] - stats.mean[c]) / stats.std[c];
        }
}

struct Batch {
    Tensor images;              ///< [B x 3 x S x S]
    std::vector<Grade> labels;
    std::vector<std::size_t> indices; ///< dataset rows, in plan order
};

/// Walks an epoch plan in order, `batch_size` samples at a time (the last batch
/// may be short). Sample k of epoch e is augmented with the stream
/// derive(seed, {e, k}), so the stream does not depend on batch size.
class BatchStream {
public:
    BatchStream(std::span<const Image> images, std::span<const Grade> labels, EpochPlan plan, std::size_t batch_size,
                AugmentationSpec augment, std::uint64_t seed, std::uint64_t epoch,
                const PcaColorBasis* basis = nullptr)
        : images_(images), labels_(labels), plan_(std::move(plan)), batch_size_(batch_size),
          augment_(augment), seed_(seed), epoch_(epoch), basis_(basis)
    {
        require(batch_size_ > 0, "batch stream: batch_size must be > 0");
        require(images_.size() == labels_.size(), "batch stream: images and labels differ in length");
        for (auto i : plan_)
            if (i >= images_.size()) fail(ErrorKind::invalid_argument, "batch stream: plan index out of range");
    }

    bool next(Batch& out)
    {
        if (pos_ >= plan_.size()) return false;
        const std::size_t end = std::min(plan_.size(), pos_ + batch_size_);
        std::vector<Image> imgs;
        imgs.reserve(end - pos_);
        out.labels.clear();
        out.indices.clear();
        for (std::size_t k = pos_; k < end; ++k) {
            const std::size_t idx = plan_[k];
            if (augment_.any()) {
                Rng rng = Rng::derive(seed_, {0xA06, epoch_, k});
                imgs.push_back(apply(augment_, images_[idx], rng, basis_));
            } else {
                imgs.push_back(images_[idx]);
            }
            out.labels.push_back(labels_[idx]);
            out.indices.push_back(idx);
        }
        out.images = stack_images(imgs);
        pos_ = end;
        return true;
    }

    std::size_t batch_count() const { return (plan_.size() + batch_size_ - 1) / batch_size_; }

private:
    std::span<const Image> images_;
    std::span<const Grade> labels_;
    EpochPlan plan_;
    std::size_t batch_size_;
    AugmentationSpec augment_;
    std::uint64_t seed_, epoch_;
    const PcaColorBasis* basis_;
    std::size_t pos_ = 0;
};

} // namespace drgrade
