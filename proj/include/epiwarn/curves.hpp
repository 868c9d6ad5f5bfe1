#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "epiwarn/errors.hpp"

namespace epiwarn {

enum class Immunity : int { Strong = 0, Medium = 1, Low = 2, Compromised = 3 };

inline constexpr int kImmunityCount = 4;

inline const char* immunity_name(Immunity m) {
    switch (m) {
        case Immunity::Strong: return "strong";
        case Immunity::Medium: return "medium";
        case Immunity::Low: return "low";
        case Immunity::Compromised: return "compromised";
    }
    return "?";
}

// One per-category viral-load curve: infection age in steps -> load.
// Either the parametric pulse V*(a/A)^2*exp(2*(1-a/A)) (peak V at age A)
// or a tabulated curve with linear interpolation and 0 beyond the table end.
class ViralLoadCurve {
public:
    static ViralLoadCurve pulse(double peak_load, double peak_age) {
        ViralLoadCurve c;
        c.tabulated_ = false;
        c.peak_load_ = peak_load;
        c.peak_age_ = peak_age;
        return c;
    }

    // points must be (age_step, load) pairs with strictly increasing ages.
    static ViralLoadCurve table(std::vector<std::pair<double, double>> points) {
        if (points.empty()) throw DataError("viral-load table: no points");
        ViralLoadCurve c;
        c.tabulated_ = true;
        c.points_ = std::move(points);
        c.validate_table();
        return c;
    }

    // CSV with header-optional rows "age_step,load".
    static ViralLoadCurve from_csv(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw MissingArtifactError("viral-load curve file not found: " + path.string());
        std::vector<std::pair<double, double>> pts;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (!line.empty() && (std::isalpha(static_cast<unsigned char>(line[0])))) continue; // header
            std::istringstream ss(line);
            std::string a, b;
            if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
                throw DataError("viral-load curve " + path.string() + ": malformed row '" + line + "'");
            pts.emplace_back(std::stod(a), std::stod(b));
        }
        return table(std::move(pts));
    }

    bool tabulated() const { return tabulated_; }

    double at(double age_steps) const {
        if (age_steps < 0.0) return 0.0;
        if (!tabulated_) {
            const double x = age_steps / peak_age_;
            return peak_load_ * x * x * std::exp(2.0 * (1.0 - x));
        }
        if (age_steps > points_.back().first) return 0.0;
        if (age_steps <= points_.front().first) {
            // before the first tabulated age: interpolate up from (0, 0)
            const auto& [a0, v0] = points_.front();
            if (a0 <= 0.0) return v0;
            return v0 * (age_steps / a0);
        }
        const auto it = std::lower_bound(points_.begin(), points_.end(), age_steps,
                                         [](const auto& p, double a) { return p.first < a; });
        const auto& [a1, v1] = *it;
        const auto& [a0, v0] = *(it - 1);
        const double w = (age_steps - a0) / (a1 - a0);
        return v0 + w * (v1 - v0);
    }

    // Age after which the curve is considered past its peak for the day-end
    // recovery rule. Parametric: the analytic peak age. Tabulated: the last
    // age at which the curve is still >= recovery_thr (0 beyond table end).
    double recovery_guard_age(double recovery_thr) const {
        if (!tabulated_) return peak_age_;
        double last = 0.0;
        for (const auto& [a, v] : points_)
            if (v >= recovery_thr) last = a;
        return last;
    }

private:
    void validate_table() const {
        double prev_age = -1.0;
        double peak = 0.0;
        bool descending = false;
        for (const auto& [a, v] : points_) {
            if (!(a > prev_age)) throw DataError("viral-load table: ages must be strictly increasing");
            if (!std::isfinite(v) || v < 0.0) throw DataError("viral-load table: loads must be finite and non-negative");
            if (v > peak) {
                if (descending) throw DataError("viral-load table: curve must be unimodal");
                peak = v;
            } else if (v < peak) {
                descending = true;
            }
            prev_age = a;
        }
    }

    bool tabulated_ = false;
    double peak_load_ = 0.0;
    double peak_age_ = 1.0;
    std::vector<std::pair<double, double>> points_;
};

// The four per-immunity-category curves.
struct CurveSet {
    std::array<ViralLoadCurve, kImmunityCount> curves = {
        ViralLoadCurve::pulse(45.0, 80.0),   // strong: stays below the homebound threshold
        ViralLoadCurve::pulse(70.0, 120.0),  // medium
        ViralLoadCurve::pulse(95.0, 160.0),  // low
        ViralLoadCurve::pulse(115.0, 200.0), // compromised: crosses the death threshold
    };

    static CurveSet default_parametric() { return CurveSet{}; }

    const ViralLoadCurve& curve(Immunity m) const {
        const int i = static_cast<int>(m);
        if (i < 0 || i >= kImmunityCount) throw DataError("unknown immunity category");
        return curves[static_cast<std::size_t>(i)];
    }

    double load(Immunity m, double age_steps) const { return curve(m).at(age_steps); }
};

// Integer-age lookup tables used by the simulation hot loop, plus the
// per-category recovery guard ages. max_age is inclusive.
struct SampledCurves {
    std::array<std::vector<double>, kImmunityCount> load;
    std::array<double, kImmunityCount> guard_age{};

    static SampledCurves sample(const CurveSet& set, std::int64_t max_age, double recovery_thr) {
        SampledCurves s;
        for (int m = 0; m < kImmunityCount; ++m) {
            const auto& c = set.curves[static_cast<std::size_t>(m)];
            auto& tab = s.load[static_cast<std::size_t>(m)];
            tab.resize(static_cast<std::size_t>(max_age) + 1);
            for (std::int64_t a = 0; a <= max_age; ++a)
                tab[static_cast<std::size_t>(a)] = c.at(static_cast<double>(a));
            s.guard_age[static_cast<std::size_t>(m)] = c.recovery_guard_age(recovery_thr);
        }
        return s;
    }

    double at(Immunity m, std::int64_t age) const {
        if (age < 0) return 0.0;
        const auto& tab = load[static_cast<std::size_t>(static_cast<int>(m))];
        if (age >= static_cast<std::int64_t>(tab.size())) return 0.0;
        return tab[static_cast<std::size_t>(age)];
    }
};

} // namespace epiwarn
