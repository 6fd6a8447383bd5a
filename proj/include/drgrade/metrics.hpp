#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drgrade/objectives.hpp"
#include "drgrade/tensor.hpp"

namespace drgrade {

/// Counts indexed [truth][prediction].
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 5) : classes_(classes), counts_(classes * classes, 0)
    {
        require(classes >= 2, "ConfusionMatrix: at least two classes");
    }

    std::size_t classes() const noexcept { return classes_; }

    std::int64_t& at(std::size_t truth, std::size_t pred) { return counts_.at(truth * classes_ + pred); }
    std::int64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * classes_ + pred); }

    void add(Grade truth, Grade pred, std::int64_t count = 1)
    {
        check_grade(truth);
        check_grade(pred);
        require(count >= 0, "ConfusionMatrix: negative count");
        counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(pred)] += count;
    }

    std::int64_t total() const
    {
        std::int64_t t = 0;
        for (auto v : counts_) t += v;
        return t;
    }

    std::span<const std::int64_t> counts() const noexcept { return counts_; }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    void check_grade(Grade g) const
    {
        if (g < 0 || static_cast<std::size_t>(g) >= classes_)
            fail(ErrorKind::invalid_argument, "confusion: grade " + std::to_string(g) + " out of range");
    }

    std::size_t classes_;
    std::vector<std::int64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const Grade> labels, std::span<const Grade> preds, std::size_t classes = 5)
{
    if (labels.size() != preds.size())
        fail(ErrorKind::shape_mismatch, "confusion: labels and predictions differ in length");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], preds[i]);
    return cm;
}

inline double kappa_weight(std::size_t i, std::size_t j, std::size_t classes)
{
    const double d = static_cast<double>(i) - static_cast<double>(j);
    const double c1 = static_cast<double>(classes - 1);
    return d * d / (c1 * c1);
}

/// Quadratically weighted Kappa with the expected matrix taken as the outer
/// product of the row and column marginals divided by the total. A matrix
/// whose expected weighted disagreement is zero (every count in one cell)
/// scores 1.
inline double quadratic_weighted_kappa(const ConfusionMatrix& cm)
{
    const std::size_t c = cm.classes();
    const double total = static_cast<double>(cm.total());
    if (total <= 0.0) fail(ErrorKind::invalid_argument, "quadratic_weighted_kappa: empty confusion matrix");
    std::vector<double> rows(c, 0.0), cols(c, 0.0);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            rows[i] += static_cast<double>(cm.at(i, j));
            cols[j] += static_cast<double>(cm.at(i, j));
        }
    double observed = 0.0, expected = 0.0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double w = kappa_weight(i, j, c);
            observed += w * static_cast<double>(cm.at(i, j));
            expected += w * rows[i] * cols[j] / total;
        }
    if (expected == 0.0) return observed == 0.0 ? 1.0 : -1.0;
    return 1.0 - observed / expected;
}

inline double quadratic_weighted_kappa(std::span<const Grade> labels, std::span<const Grade> preds,
                                       std::size_t classes = 5)
{
    return quadratic_weighted_kappa(confusion(labels, preds, classes));
}

/// Each nonzero row divided by its sum; zero rows stay zero.
inline Tensor normalize_rows(const ConfusionMatrix& cm)
{
    const std::size_t c = cm.classes();
    Tensor out({c, c});
    for (std::size_t i = 0; i < c; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < c; ++j) row += static_cast<double>(cm.at(i, j));
        if (row == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = static_cast<double>(cm.at(i, j)) / row;
    }
    return out;
}

/// Mean squared grade distance between truth and prediction.
inline double mean_quadratic_distance(const ConfusionMatrix& cm)
{
    const double total = static_cast<double>(cm.total());
    if (total == 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < cm.classes(); ++i)
        for (std::size_t j = 0; j < cm.classes(); ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            s += d * d * static_cast<double>(cm.at(i, j));
        }
    return s / total;
}

} // namespace drgrade
