#include <gtest/gtest.h>

#include "drgrade/metrics.hpp"
#include "oracles.hpp"

using namespace drgrade;

namespace {

std::vector<std::vector<long long>> dense(const ConfusionMatrix& cm)
{
    std::vector<std::vector<long long>> d(cm.classes(), std::vector<long long>(cm.classes()));
    for (std::size_t i = 0; i < cm.classes(); ++i)
        for (std::size_t j = 0; j < cm.classes(); ++j) d[i][j] = cm.at(i, j);
    return d;
}

} // namespace

TEST(Kappa, MatchesTextbookFormOnRandomMatrices)
{
    Rng rng(17);
    for (int t = 0; t < 1000; ++t) {
        ConfusionMatrix cm(5);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) cm.at(i, j) = static_cast<std::int64_t>(rng.below(101));
        if (cm.total() == 0) continue;
        ASSERT_NEAR(quadratic_weighted_kappa(cm), oracle::qwk(dense(cm)), 1e-12) << "matrix " << t;
    }
}

TEST(Kappa, PerfectAndReversedAgreement)
{
    ConfusionMatrix diag(5);
    for (std::size_t i = 0; i < 5; ++i) diag.at(i, i) = 7 + static_cast<std::int64_t>(i);
    EXPECT_EQ(quadratic_weighted_kappa(diag), 1.0);

    ConfusionMatrix anti(2);
    anti.at(0, 1) = 4;
    anti.at(1, 0) = 4;
    EXPECT_DOUBLE_EQ(quadratic_weighted_kappa(anti), -1.0);
}

TEST(Kappa, DegenerateSingleCell)
{
    ConfusionMatrix one(5);
    one.at(2, 2) = 9;
    EXPECT_EQ(quadratic_weighted_kappa(one), 1.0);
    EXPECT_THROW(quadratic_weighted_kappa(ConfusionMatrix(5)), Error);
}

TEST(Kappa, FromLabelVectors)
{
    const std::vector<Grade> y{0, 1, 2, 3, 4, 4}, p{0, 1, 2, 3, 4, 3};
    const ConfusionMatrix cm = confusion(y, p);
    EXPECT_EQ(cm.at(4, 3), 1);
    EXPECT_EQ(cm.total(), 6);
    EXPECT_NEAR(quadratic_weighted_kappa(y, p), oracle::qwk(dense(cm)), 1e-14);
    EXPECT_THROW(confusion(y, std::vector<Grade>{0}), Error);
    EXPECT_THROW(confusion(std::vector<Grade>{5}, std::vector<Grade>{0}), Error);
}

TEST(Confusion, NormalizedRowsAndDistance)
{
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 3;
    cm.at(0, 2) = 1;
    cm.at(2, 1) = 2;
    const Tensor n = normalize_rows(cm);
    EXPECT_DOUBLE_EQ(n.at(0, 0), 0.75);
    EXPECT_DOUBLE_EQ(n.at(0, 2), 0.25);
    EXPECT_EQ(n.at(1, 1), 0.0); // empty row stays empty
    EXPECT_DOUBLE_EQ(n.at(2, 1), 1.0);
    // (1 * 4 + 2 * 1) / 6
    EXPECT_DOUBLE_EQ(mean_quadratic_distance(cm), 1.0);
    EXPECT_THROW(ConfusionMatrix(1), Error);
}
