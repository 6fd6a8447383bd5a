#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "drgrade/backbone.hpp"
#include "drgrade/layers.hpp"

namespace drgrade {

using Grade = int;

enum class LossKind { ce, focal, kappa, kappa_plus_ce, mae, mse, smooth_l1 };

inline const char* to_string(LossKind k)
{
    switch (k) {
    case LossKind::ce: return "ce";
    case LossKind::focal: return "focal";
    case LossKind::kappa: return "kappa";
    case LossKind::kappa_plus_ce: return "kappa_plus_ce";
    case LossKind::mae: return "mae";
    case LossKind::mse: return "mse";
    case LossKind::smooth_l1: return "smooth_l1";
    }
    return "?";
}

struct LossSpec {
    LossKind kind = LossKind::ce;
    double gamma = 2.0; ///< focal
    double mix = 0.5;   ///< kappa_plus_ce: weight of the Kappa term
    int class_count = 5;

    bool regression() const
    {
        return kind == LossKind::mae || kind == LossKind::mse || kind == LossKind::smooth_l1;
    }
    HeadKind head() const { return regression() ? HeadKind::regression : HeadKind::classification; }

    void validate() const
    {
        require(gamma >= 0.0, "loss: focal gamma must be >= 0");
        require(mix >= 0.0 && mix <= 1.0, "loss: mix must lie in [0, 1]");
        require(class_count >= 2, "loss: class_count must be >= 2");
    }

    friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

struct LossOutput {
    double value = 0.0;
    Tensor grad; ///< d value / d (loss input), same shape as the input
};

constexpr double kProbFloor = 1e-12;
constexpr double kKappaDenominatorEps = 1e-8;

namespace detail {

inline void check_prob_batch(const Tensor& probs, std::span<const Grade> labels)
{
    if (probs.rank() != 2 || probs.dim(0) != labels.size())
        fail(ErrorKind::shape_mismatch, "loss: probs " + shape_string(probs.shape()) + " vs " +
                                            std::to_string(labels.size()) + " labels");
    const int c = static_cast<int>(probs.dim(1));
    for (Grade y : labels)
        if (y < 0 || y >= c) fail(ErrorKind::invalid_argument, "loss: label " + std::to_string(y) + " outside [0, C-1]");
}

} // namespace detail

/// -(1/N) sum_i (1 - p_i)^gamma log p_i with p_i the probability of the true
/// class; gamma = 0 is plain cross-entropy. Gradient is w.r.t. the probabilities.
inline LossOutput focal(const Tensor& probs, std::span<const Grade> labels, double gamma)
{
    detail::check_prob_batch(probs, labels);
    require(gamma >= 0.0, "focal: gamma must be >= 0");
    const std::size_t n = labels.size();
    LossOutput out{0.0, Tensor::zeros_like(probs)};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        const double p_raw = probs.at(i, y);
        const double p = std::clamp(p_raw, kProbFloor, 1.0);
        const double log_p = std::log(p);
        const double q = 1.0 - p;
        const double modulating = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
        out.value -= modulating * log_p * inv_n;
        // d/dp [-(1-p)^g log p] = g (1-p)^(g-1) log p - (1-p)^g / p
        double d_mod = 0.0;
        if (gamma != 0.0 && q > 0.0) d_mod = gamma * std::pow(q, gamma - 1.0) * log_p;
        const double d_log = (p_raw >= kProbFloor && p_raw <= 1.0) ? modulating / p : 0.0;
        out.grad.at(i, y) = (d_mod - d_log) * inv_n;
    }
    return out;
}

inline LossOutput cross_entropy(const Tensor& probs, std::span<const Grade> labels) { return focal(probs, labels, 0.0); }

/// Soft Kappa loss o / e over a batch of probability rows.
///   o = sum_{i,n} w(y_i, n) p_{i,n}
///   e = (1/N) sum_{m,n} w(m, n) hist_n P_m,  hist_n = #{i : y_i = n},  P_m = sum_j p_{j,m}
/// with w(a, b) = (a - b)^2 / (C - 1)^2. The value equals one minus the soft
/// Kappa agreement, so perfect one-hot predictions give 0.
inline LossOutput kappa_loss(const Tensor& probs, std::span<const Grade> labels)
{
    if (labels.empty()) fail(ErrorKind::invalid_argument, "kappa_loss: empty batch");
    detail::check_prob_batch(probs, labels);
    const std::size_t n = labels.size(), c = probs.dim(1);
    const double norm = static_cast<double>((c - 1) * (c - 1));
    auto w = [&](std::size_t a, std::size_t b) {
        const double d = static_cast<double>(a) - static_cast<double>(b);
        return d * d / norm;
    };
    std::vector<double> hist(c, 0.0), pred_mass(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        hist[static_cast<std::size_t>(labels[i])] += 1.0;
        for (std::size_t k = 0; k < c; ++k) pred_mass[k] += probs.at(i, k);
    }
    double o = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) o += w(static_cast<std::size_t>(labels[i]), k) * probs.at(i, k);
    // de/dp_{i,k} = (1/N) sum_n w(k, n) hist_n, identical for every row.
    std::vector<double> de(c, 0.0);
    double e = 0.0;
    for (std::size_t m = 0; m < c; ++m) {
        for (std::size_t k = 0; k < c; ++k) de[m] += w(m, k) * hist[k];
        de[m] /= static_cast<double>(n);
        e += de[m] * pred_mass[m];
    }
    const double denom = e + kKappaDenominatorEps;
    LossOutput out{o / denom, Tensor::zeros_like(probs)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k)
            out.grad.at(i, k) = (w(static_cast<std::size_t>(labels[i]), k) * denom - o * de[k]) / (denom * denom);
    return out;
}

inline LossOutput kappa_plus_ce(const Tensor& probs, std::span<const Grade> labels, double mix)
{
    require(mix >= 0.0 && mix <= 1.0, "kappa_plus_ce: mix must lie in [0, 1]");
    LossOutput k = kappa_loss(probs, labels);
    LossOutput ce = cross_entropy(probs, labels);
    LossOutput out{mix * k.value + (1.0 - mix) * ce.value, Tensor::zeros_like(probs)};
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] = mix * k.grad[i] + (1.0 - mix) * ce.grad[i];
    return out;
}

/// MAE, MSE or SmoothL1 on scores [N x 1]; gradient w.r.t. the scores.
/// The MAE subgradient at zero residual is 0.
inline LossOutput regression_loss(const Tensor& scores, std::span<const Grade> labels, LossKind kind)
{
    if (scores.size() != labels.size() || (scores.rank() == 2 && scores.dim(1) != 1))
        fail(ErrorKind::shape_mismatch, "regression_loss: scores " + shape_string(scores.shape()) + " vs " +
                                            std::to_string(labels.size()) + " labels");
    require(!labels.empty(), "regression_loss: empty batch");
    const double inv_n = 1.0 / static_cast<double>(labels.size());
    LossOutput out{0.0, Tensor::zeros_like(scores)};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double d = scores[i] - static_cast<double>(labels[i]);
        const double ad = std::abs(d);
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        switch (kind) {
        case LossKind::mae:
            out.value += ad * inv_n;
            out.grad[i] = sign * inv_n;
            break;
        case LossKind::mse:
            out.value += d * d * inv_n;
            out.grad[i] = 2.0 * d * inv_n;
            break;
        case LossKind::smooth_l1:
            if (ad < 1.0) {
                out.value += 0.5 * d * d * inv_n;
                out.grad[i] = d * inv_n;
            } else {
                out.value += (ad - 0.5) * inv_n;
                out.grad[i] = sign * inv_n;
            }
            break;
        default: fail(ErrorKind::invalid_argument, "regression_loss: not a regression loss kind");
        }
    }
    return out;
}

/// Loss on raw model output (logits or scores). For probability losses the
/// softmax is applied here and the returned gradient is w.r.t. the logits.
inline LossOutput evaluate_loss(const LossSpec& spec, const Tensor& model_output, std::span<const Grade> labels)
{
    spec.validate();
    if (spec.regression()) return regression_loss(model_output, labels, spec.kind);
    const Tensor probs = softmax_rows(model_output);
    LossOutput lp;
    switch (spec.kind) {
    case LossKind::ce: lp = cross_entropy(probs, labels); break;
    case LossKind::focal: lp = focal(probs, labels, spec.gamma); break;
    case LossKind::kappa: lp = kappa_loss(probs, labels); break;
    case LossKind::kappa_plus_ce: lp = kappa_plus_ce(probs, labels, spec.mix); break;
    default: break;
    }
    return {lp.value, softmax_backward(probs, lp.grad)};
}

/// Regression score to grade: clamp to [0, max_grade], round half away from zero.
inline Grade score_to_grade(double score, int max_grade = 4)
{
    if (std::isnan(score)) fail(ErrorKind::numeric, "score_to_grade: NaN score");
    return static_cast<Grade>(std::round(std::clamp(score, 0.0, static_cast<double>(max_grade))));
}

} // namespace drgrade
