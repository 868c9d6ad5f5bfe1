#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "epiwarn/errors.hpp"

namespace epiwarn {

struct ConfusionCounts {
    std::int64_t tn = 0, fp = 0, fn = 0, tp = 0;
    std::int64_t total() const { return tn + fp + fn + tp; }
};

// AUC and AP are unset when only one class is present.
struct BinaryMetrics {
    double accuracy = 0.0;
    std::optional<double> roc_auc;
    std::optional<double> avg_precision;
    ConfusionCounts confusion;
};

// Accuracy at the threshold (score >= threshold predicts positive), ROC-AUC
// via the rank statistic with ties counted 0.5, and non-interpolated average
// precision over the descending-score sweep with tie groups handled jointly.
inline BinaryMetrics compute_metrics(std::span<const int> labels, std::span<const double> scores,
                                     double threshold = 0.5) {
    if (labels.size() != scores.size()) throw DataError("compute_metrics: size mismatch");
    if (labels.empty()) throw DataError("compute_metrics: empty input");

    BinaryMetrics m;
    std::int64_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw DataError("compute_metrics: labels must be 0/1");
        const bool predicted = scores[i] >= threshold;
        if (labels[i] == 1) {
            ++pos;
            predicted ? ++m.confusion.tp : ++m.confusion.fn;
        } else {
            ++neg;
            predicted ? ++m.confusion.fp : ++m.confusion.tn;
        }
    }
    m.accuracy = static_cast<double>(m.confusion.tp + m.confusion.tn) /
                 static_cast<double>(labels.size());
    if (pos == 0 || neg == 0) return m;

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // rank sum of positives with average ranks over score ties
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    m.roc_auc = (rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1)) /
                (static_cast<double>(pos) * static_cast<double>(neg));

    // descending sweep for average precision
    std::reverse(order.begin(), order.end());
    double ap = 0.0;
    double prev_recall = 0.0;
    std::int64_t tp = 0, fp = 0;
    i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t t = i; t < j; ++t) labels[order[t]] == 1 ? ++tp : ++fp;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    m.avg_precision = ap;
    return m;
}

} // namespace epiwarn
