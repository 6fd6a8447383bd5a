#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "drgrade/objectives.hpp"
#include "drgrade/rng.hpp"

namespace drgrade {

enum class SamplerKind { instance, class_balanced, progressive };

inline const char* to_string(SamplerKind k)
{
    switch (k) {
    case SamplerKind::instance: return "instance";
    case SamplerKind::class_balanced: return "class_balanced";
    case SamplerKind::progressive: return "progressive";
    }
    return "?";
}

struct SamplerSpec {
    SamplerKind kind = SamplerKind::instance;
    double alpha = 0.98; ///< progressive decay rate

    friend bool operator==(const SamplerSpec&, const SamplerSpec&) = default;
};

struct SamplerState {
    SamplerSpec spec;
    std::vector<Grade> labels; ///< grade of every sample in the dataset
    int epoch = 0;

    std::vector<std::size_t> class_counts(std::size_t classes = 5) const
    {
        std::vector<std::size_t> counts(classes, 0);
        for (Grade g : labels) {
            if (g < 0 || static_cast<std::size_t>(g) >= classes)
                fail(ErrorKind::invalid_argument, "sampler: grade out of range");
            ++counts[static_cast<std::size_t>(g)];
        }
        return counts;
    }
};

using EpochPlan = std::vector<std::size_t>;

/// Per-sample probabilities:
///   instance:        1 / N
///   class_balanced:  1 / (K * n_c), K = number of non-empty classes
///   progressive:     alpha^t * class_balanced + (1 - alpha^t) * instance
inline std::vector<double> sample_weights(const SamplerState& state)
{
    if (state.labels.empty()) fail(ErrorKind::invalid_argument, "sample_weights: empty dataset");
    require(state.spec.alpha >= 0.0 && state.spec.alpha <= 1.0, "sample_weights: alpha must lie in [0, 1]");
    require(state.epoch >= 0, "sample_weights: epoch must be >= 0");
    const std::size_t n = state.labels.size();
    const auto counts = state.class_counts();
    const double nonempty =
        static_cast<double>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));

    std::vector<double> instance(n, 1.0 / static_cast<double>(n));
    if (state.spec.kind == SamplerKind::instance) return instance;

    std::vector<double> balanced(n);
    for (std::size_t i = 0; i < n; ++i)
        balanced[i] = 1.0 / (nonempty * static_cast<double>(counts[static_cast<std::size_t>(state.labels[i])]));
    if (state.spec.kind == SamplerKind::class_balanced) return balanced;

    const double a = std::pow(state.spec.alpha, state.epoch);
    std::vector<double> blended(n);
    for (std::size_t i = 0; i < n; ++i) blended[i] = a * balanced[i] + (1.0 - a) * instance[i];
    return blended;
}

/// `epoch_size` independent draws with replacement (inverse CDF on uniform draws).
inline EpochPlan draw_epoch(std::span<const double> weights, Rng& rng, std::size_t epoch_size)
{
    require(!weights.empty(), "draw_epoch: empty weight vector");
    std::vector<double> cdf(weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        require(weights[i] >= 0.0, "draw_epoch: negative weight");
        acc += weights[i];
        cdf[i] = acc;
    }
    require(acc > 0.0, "draw_epoch: weights sum to zero");
    EpochPlan plan(epoch_size);
    for (auto& idx : plan) {
        const double u = rng.uniform01() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        idx = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    }
    return plan;
}

inline EpochPlan draw_epoch(const SamplerState& state, Rng& rng, std::size_t epoch_size)
{
    const auto w = sample_weights(state);
    return draw_epoch(w, rng, epoch_size);
}

/// Realized per-grade counts of a plan.
inline std::vector<std::size_t> plan_histogram(const EpochPlan& plan, std::span<const Grade> labels, std::size_t classes = 5)
{
    std::vector<std::size_t> h(classes, 0);
    for (std::size_t idx : plan) ++h.at(static_cast<std::size_t>(labels[idx]));
    return h;
}

} // namespace drgrade
