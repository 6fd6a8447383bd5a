#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "drgrade/layers.hpp"

namespace drgrade {

enum class ScheduleKind { constant, multistep, exponential, cosine };

inline const char* to_string(ScheduleKind k)
{
    switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::multistep: return "multistep";
    case ScheduleKind::exponential: return "exponential";
    case ScheduleKind::cosine: return "cosine";
    }
    return "?";
}

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::constant;
    double base_lr = 0.001;
    std::vector<int> milestones{15, 20}; ///< multistep
    double factor = 0.1;                 ///< multistep
    double gamma = 0.9;                  ///< exponential
    int total_epochs = 25;               ///< cosine T

    void validate() const
    {
        require(base_lr > 0.0, "schedule: base_lr must be > 0");
        switch (kind) {
        case ScheduleKind::multistep:
            for (std::size_t i = 1; i < milestones.size(); ++i)
                require(milestones[i] > milestones[i - 1], "schedule: milestones must be strictly increasing");
            require(factor > 0.0, "schedule: factor must be > 0");
            break;
        case ScheduleKind::exponential:
            require(gamma > 0.0 && gamma <= 1.0, "schedule: gamma must lie in (0, 1]");
            break;
        case ScheduleKind::cosine: require(total_epochs >= 1, "schedule: cosine T must be >= 1"); break;
        case ScheduleKind::constant: break;
        }
    }

    friend bool operator==(const ScheduleSpec&, const ScheduleSpec&) = default;
};

/// Learning rate for epoch index t (0-based).
inline double lr_at(const ScheduleSpec& spec, int t)
{
    spec.validate();
    require(t >= 0, "lr_at: epoch index must be >= 0");
    switch (spec.kind) {
    case ScheduleKind::constant: return spec.base_lr;
    case ScheduleKind::multistep: {
        int passed = 0;
        for (int m : spec.milestones)
            if (m <= t) ++passed;
        return spec.base_lr * std::pow(spec.factor, passed);
    }
    case ScheduleKind::exponential: return std::pow(spec.gamma, t) * spec.base_lr;
    case ScheduleKind::cosine:
        if (t > spec.total_epochs)
            fail(ErrorKind::invalid_argument, "lr_at: cosine epoch " + std::to_string(t) + " exceeds T=" +
                                                  std::to_string(spec.total_epochs));
        return 0.5 * (1.0 + std::cos(t * std::numbers::pi / spec.total_epochs)) * spec.base_lr;
    }
    return spec.base_lr;
}

struct OptimizerState {
    double momentum = 0.9;
    double weight_decay = 0.0005;
    std::map<std::string, Tensor> velocity;

    void validate() const
    {
        require(momentum >= 0.0 && momentum < 1.0, "optimizer: momentum must lie in [0, 1)");
        require(weight_decay >= 0.0, "optimizer: weight_decay must be >= 0");
    }
};

/// SGD with Nesterov momentum and L2 weight decay folded into the gradient:
///   g <- g + wd * theta;  v <- mu * v + g;  theta <- theta - lr * (g + mu * v)
/// Gradients are zeroed afterwards.
inline void sgd_step(ModelParams& params, OptimizerState& state, double lr)
{
    state.validate();
    for (const auto& p : params.entries())
        if (!p.grad.all_finite()) fail(ErrorKind::numeric, "sgd_step: non-finite gradient in '" + p.name + "'");

    for (auto& p : params.entries()) {
        auto [it, inserted] = state.velocity.try_emplace(p.name, Tensor::zeros_like(p.value));
        Tensor& v = it->second;
        if (v.shape() != p.value.shape())
            fail(ErrorKind::shape_mismatch, "sgd_step: velocity shape mismatch for '" + p.name + "'");
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i] + state.weight_decay * p.value[i];
            v[i] = state.momentum * v[i] + g;
            p.value[i] -= lr * (g + state.momentum * v[i]);
        }
        p.grad.fill(0.0);
    }
    params.touch();
}

} // namespace drgrade
