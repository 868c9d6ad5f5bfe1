#include <gtest/gtest.h>

#include <vector>

#include "epiwarn/metrics.hpp"
#include "epiwarn/prng.hpp"

using namespace epiwarn;

namespace {

// Independent oracle: all (positive, negative) pairs, ties worth 0.5.
double auc_by_pair_counting(const std::vector<int>& labels, const std::vector<double>& scores) {
    double wins = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

} // namespace

TEST(Metrics, WorkedAucExample) {
    const std::vector<int> labels = {0, 0, 1, 1};
    const std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
    const BinaryMetrics m = compute_metrics(labels, scores);
    ASSERT_TRUE(m.roc_auc.has_value());
    EXPECT_DOUBLE_EQ(*m.roc_auc, 0.75);
    EXPECT_DOUBLE_EQ(auc_by_pair_counting(labels, scores), 0.75);
}

TEST(Metrics, WorkedAveragePrecisionExample) {
    const std::vector<int> labels = {1, 0, 1};
    const std::vector<double> scores = {0.9, 0.8, 0.7};
    const BinaryMetrics m = compute_metrics(labels, scores);
    ASSERT_TRUE(m.avg_precision.has_value());
    // 0.5 * 1 + 0.5 * (2/3)
    EXPECT_DOUBLE_EQ(*m.avg_precision, 0.5 + 0.5 * (2.0 / 3.0));
}

TEST(Metrics, PerfectSeparation) {
    const std::vector<int> labels = {0, 0, 0, 1, 1};
    const std::vector<double> scores = {0.1, 0.2, 0.3, 0.8, 0.9};
    const BinaryMetrics m = compute_metrics(labels, scores);
    EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(*m.roc_auc, 1.0);
    EXPECT_DOUBLE_EQ(*m.avg_precision, 1.0);
}

TEST(Metrics, AccuracyMatchesConfusionCounts) {
    const std::vector<int> labels = {1, 0, 1, 0, 1, 1};
    const std::vector<double> scores = {0.9, 0.6, 0.4, 0.2, 0.5, 0.1};
    const BinaryMetrics m = compute_metrics(labels, scores, 0.5);
    EXPECT_EQ(m.confusion.tp, 2); // 0.9, 0.5 (>= threshold)
    EXPECT_EQ(m.confusion.fn, 2); // 0.4, 0.1
    EXPECT_EQ(m.confusion.fp, 1); // 0.6
    EXPECT_EQ(m.confusion.tn, 1); // 0.2
    EXPECT_DOUBLE_EQ(m.accuracy, 3.0 / 6.0);
    EXPECT_EQ(m.confusion.total(), 6);
}

TEST(Metrics, RankAucEqualsPairCountingOnRandomSets) {
    Pcg32 rng(4242);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + static_cast<int>(rng.bounded(199));
        std::vector<int> labels(static_cast<std::size_t>(n));
        std::vector<double> scores(static_cast<std::size_t>(n));
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.bounded(2));
            pos += labels[static_cast<std::size_t>(i)];
            // coarse grid scores force ties
            scores[static_cast<std::size_t>(i)] = static_cast<double>(rng.bounded(10)) / 10.0;
        }
        if (pos == 0 || pos == n) {
            const BinaryMetrics m = compute_metrics(labels, scores);
            EXPECT_FALSE(m.roc_auc.has_value());
            EXPECT_FALSE(m.avg_precision.has_value());
            continue;
        }
        const BinaryMetrics m = compute_metrics(labels, scores);
        ASSERT_TRUE(m.roc_auc.has_value());
        EXPECT_NEAR(*m.roc_auc, auc_by_pair_counting(labels, scores), 1e-12) << "trial " << trial;
    }
}

TEST(Metrics, SingleClassHasUndefinedRankMetrics) {
    const std::vector<int> labels = {1, 1, 1};
    const std::vector<double> scores = {0.2, 0.8, 0.5};
    const BinaryMetrics m = compute_metrics(labels, scores);
    EXPECT_FALSE(m.roc_auc.has_value());
    EXPECT_FALSE(m.avg_precision.has_value());
    EXPECT_DOUBLE_EQ(m.accuracy, 2.0 / 3.0);
}

TEST(Metrics, InvalidInputsThrow) {
    const std::vector<int> labels = {0, 2};
    const std::vector<double> scores = {0.1, 0.2};
    EXPECT_THROW(compute_metrics(labels, scores), DataError);
    const std::vector<int> empty_labels;
    const std::vector<double> empty_scores;
    EXPECT_THROW(compute_metrics(empty_labels, empty_scores), DataError);
    const std::vector<int> one = {1};
    EXPECT_THROW(compute_metrics(one, empty_scores), DataError);
}
