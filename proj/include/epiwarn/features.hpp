#pragma once

#include <string>
#include <vector>

#include "epiwarn/dataset.hpp"
#include "epiwarn/koopman.hpp"

namespace epiwarn {

struct FeatureOptions {
    bool include_end_day = true;
    int forecast_horizon = 5; // koopman forecast days used as features
};

// Versioned flat feature layout; family tags make the per-family importance
// report mechanical.
struct FeatureLayout {
    std::string version = "epiwarn-features-1";
    std::vector<std::string> names;
    std::vector<std::string> families;

    std::size_t size() const { return names.size(); }
};

namespace detail {

struct SeriesSpec {
    const char* name;
    int column;
    const char* family;
};

// Order is frozen: susceptible, infected, incidence, then the other series.
inline const std::vector<SeriesSpec>& feature_series() {
    static const std::vector<SeriesSpec> series = {
        {"S", 0, "susceptible"}, {"I", 1, "infected"},   {"dI", 4, "incidence"},
        {"R", 2, "other"},       {"D", 3, "other"},      {"I_mob", 7, "other"},
        {"I_home", 8, "other"},
    };
    return series;
}

} // namespace detail

inline FeatureLayout feature_layout(bool with_koopman, const FeatureOptions& options) {
    FeatureLayout layout;
    const auto add = [&](const std::string& name, const char* family) {
        layout.names.push_back(name);
        layout.families.push_back(family);
    };
    for (const auto& s : detail::feature_series()) {
        const std::string base = s.name;
        add(base + "_last", s.family);
        add(base + "_mean", s.family);
        add(base + "_max", s.family);
        add(base + "_change", s.family);
        add(base + "_slope", s.family);
    }
    if (with_koopman) {
        for (int i = 1; i <= 6; ++i) add("koop_z" + std::to_string(i), "koopman");
        for (int step = 1; step <= options.forecast_horizon; ++step)
            add("koop_forecast_I_" + std::to_string(step), "koopman");
        add("koop_forecast_dI_sum", "koopman");
        add("koop_outbreak_prob", "koopman");
    }
    add("s_lo", "susceptibility");
    add("s_hi", "susceptibility");
    if (options.include_end_day) add("end_day", "end_day");
    return layout;
}

// Per series: last value, mean, max, total change (last - first), mean daily
// change; then the Koopman-derived block when a model is supplied, the
// susceptibility bounds, and the window end day.
inline std::vector<double> build_features(const Window& w, const KoopmanModel* model,
                                          const FeatureOptions& options) {
    const int m = kObservableCount;
    if (w.values.empty() || w.values.size() % static_cast<std::size_t>(m) != 0)
        throw DataError("build_features: malformed window values");
    const int k = static_cast<int>(w.values.size()) / m;

    std::vector<double> out;
    for (const auto& s : detail::feature_series()) {
        double first = w.values[static_cast<std::size_t>(s.column)];
        double last = first, sum = 0.0, maxv = first;
        for (int d = 0; d < k; ++d) {
            const double v = w.values[static_cast<std::size_t>(d * m + s.column)];
            sum += v;
            maxv = std::max(maxv, v);
            last = v;
        }
        out.push_back(last);
        out.push_back(sum / k);
        out.push_back(maxv);
        out.push_back(last - first);
        out.push_back(k > 1 ? (last - first) / (k - 1) : 0.0);
    }
    if (model) {
        if (model->latent_dim != 6)
            throw DataError("build_features: layout expects a 6-dimensional latent");
        const std::vector<double> normalized = model->normalize(w.values);
        const std::vector<double> z = encode(*model, normalized);
        for (double v : z) out.push_back(v);
        const auto horizon_forecast = forecast(*model, w.values, options.forecast_horizon);
        double incidence_sum = 0.0;
        for (const auto& day : horizon_forecast) {
            out.push_back(day[1]); // forecast infected count
            incidence_sum += day[4];
        }
        out.push_back(incidence_sum);
        out.push_back(predict_heads(*model, z).second);
    }
    out.push_back(w.s_lo);
    out.push_back(w.s_hi);
    if (options.include_end_day) out.push_back(w.end_day);
    return out;
}

} // namespace epiwarn
