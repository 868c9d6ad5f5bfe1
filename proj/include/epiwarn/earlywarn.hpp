#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epiwarn/features.hpp"
#include "epiwarn/forest.hpp"
#include "epiwarn/metrics.hpp"

namespace epiwarn {

struct EarlyWarnHyper {
    ForestHyper forest;
    std::uint64_t seed = 1;
    FeatureOptions features;
    double threshold = 0.5;
};

inline std::vector<std::vector<double>> build_feature_matrix(const std::vector<Window>& windows,
                                                             const KoopmanModel* model,
                                                             const FeatureOptions& options) {
    std::vector<std::vector<double>> x;
    x.reserve(windows.size());
    for (const Window& w : windows) x.push_back(build_features(w, model, options));
    return x;
}

inline ForestModel train_early_warning(const std::vector<Window>& windows,
                                       const KoopmanModel* model, const EarlyWarnHyper& hyper) {
    const FeatureLayout layout = feature_layout(model != nullptr, hyper.features);
    const auto x = build_feature_matrix(windows, model, hyper.features);
    std::vector<int> y;
    y.reserve(windows.size());
    for (const Window& w : windows) y.push_back(w.label);
    return train_forest(x, y, hyper.forest, hyper.seed, layout.names);
}

struct ClassStats {
    double precision = 0.0;
    double recall = 0.0;
};

struct EndDayRow {
    int end_day = 0;
    int windows = 0;
    double accuracy = 0.0;
    std::optional<double> auc;
};

struct EvalReport {
    BinaryMetrics overall;
    ClassStats contained; // class 0
    ClassStats outbreak;  // class 1
    std::vector<EndDayRow> per_end_day;
    std::vector<std::pair<std::string, double>> family_importance;
};

// Overall metrics, per-end-day breakdown, and per-family importance sums
// (all-feature importances are normalized to 1, so the family sums are too).
inline EvalReport evaluate_ew(const ForestModel& forest, const KoopmanModel* model,
                              const std::vector<Window>& windows, const FeatureOptions& options,
                              double threshold = 0.5) {
    if (windows.empty()) throw DataError("evaluate_ew: no windows");
    const auto x = build_feature_matrix(windows, model, options);
    std::vector<int> labels;
    std::vector<double> scores;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        labels.push_back(windows[i].label);
        scores.push_back(predict_proba(forest, x[i]));
    }

    EvalReport report;
    report.overall = compute_metrics(labels, scores, threshold);
    const auto& c = report.overall.confusion;
    report.outbreak.precision =
        c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    report.outbreak.recall =
        c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    report.contained.precision =
        c.tn + c.fn > 0 ? static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fn) : 0.0;
    report.contained.recall =
        c.tn + c.fp > 0 ? static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp) : 0.0;

    std::map<int, std::vector<std::size_t>> by_end_day;
    for (std::size_t i = 0; i < windows.size(); ++i)
        by_end_day[windows[i].end_day].push_back(i);
    for (const auto& [end_day, idx] : by_end_day) {
        std::vector<int> day_labels;
        std::vector<double> day_scores;
        for (std::size_t i : idx) {
            day_labels.push_back(labels[i]);
            day_scores.push_back(scores[i]);
        }
        const BinaryMetrics m = compute_metrics(day_labels, day_scores, threshold);
        report.per_end_day.push_back({end_day, static_cast<int>(idx.size()), m.accuracy, m.roc_auc});
    }

    const FeatureLayout layout = feature_layout(model != nullptr, options);
    if (static_cast<int>(layout.size()) != forest.n_features)
        throw DataError("evaluate_ew: feature layout does not match the forest");
    const std::vector<double> importances = feature_importances(forest);
    std::map<std::string, double> families;
    for (std::size_t i = 0; i < layout.size(); ++i) families[layout.families[i]] += importances[i];
    report.family_importance.assign(families.begin(), families.end());
    return report;
}

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.overall.accuracy;
    if (r.overall.roc_auc)
        j["roc_auc"] = *r.overall.roc_auc;
    else
        j["roc_auc"] = nullptr;
    if (r.overall.avg_precision)
        j["average_precision"] = *r.overall.avg_precision;
    else
        j["average_precision"] = nullptr;
    j["confusion"] = {{"tn", r.overall.confusion.tn},
                      {"fp", r.overall.confusion.fp},
                      {"fn", r.overall.confusion.fn},
                      {"tp", r.overall.confusion.tp}};
    j["contained"] = {{"precision", r.contained.precision}, {"recall", r.contained.recall}};
    j["outbreak"] = {{"precision", r.outbreak.precision}, {"recall", r.outbreak.recall}};
    nlohmann::ordered_json days = nlohmann::ordered_json::array();
    for (const EndDayRow& row : r.per_end_day) {
        nlohmann::ordered_json d;
        d["end_day"] = row.end_day;
        d["windows"] = row.windows;
        d["accuracy"] = row.accuracy;
        if (row.auc)
            d["auc"] = *row.auc;
        else
            d["auc"] = nullptr;
        days.push_back(std::move(d));
    }
    j["per_end_day"] = std::move(days);
    nlohmann::ordered_json fam;
    for (const auto& [name, value] : r.family_importance) fam[name] = value;
    j["family_importance"] = std::move(fam);
    return j;
}

inline std::string per_end_day_csv(const EvalReport& r) {
    std::string out = "end_day,windows,accuracy,auc\n";
    for (const EndDayRow& row : r.per_end_day) {
        out += std::to_string(row.end_day) + "," + std::to_string(row.windows) + "," +
               fmt_g17(row.accuracy) + ",";
        if (row.auc) out += fmt_g17(*row.auc);
        out += "\n";
    }
    return out;
}

inline std::string family_importance_csv(const EvalReport& r) {
    std::string out = "family,importance\n";
    for (const auto& [name, value] : r.family_importance) out += name + "," + fmt_g17(value) + "\n";
    return out;
}

} // namespace epiwarn
