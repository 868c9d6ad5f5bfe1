#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include <json.hpp>

#include "epiwarn/curves.hpp"
#include "epiwarn/errors.hpp"

namespace epiwarn {

// All simulator parameters plus the run seed. Defaults follow the reference
// configuration (500 agents on a 50x50 grid, 200 homes, K = L_D = L_N = 10).
struct SimConfig {
    int n_agents = 500;      // N
    int grid_side = 50;      // G
    int home_count = 200;    // H
    int routine_length = 10; // K, distinct grid cells per routine
    int day_steps = 10;      // L_D
    int night_steps = 10;    // L_N
    int horizon_days = 60;   // T_max

    double transmission_threshold = 50.0; // theta_tr, exposure units
    double outbreak_threshold = 0.3;      // rho_c

    double susceptibility_lo = 0.5;
    double susceptibility_hi = 1.5;

    // strong, medium, low, compromised
    std::array<double, kImmunityCount> immunity_probs = {0.35, 0.45, 0.15, 0.05};

    double symptom_threshold = 10.0;
    double homebound_threshold = 50.0;
    double death_threshold = 100.0;
    double recovery_threshold = 1.0;

    bool home_transmission = false;
    bool early_stop = true;

    std::uint64_t seed = 1;

    // Optional per-category tabulated curve CSVs; empty entries fall back to
    // the parametric pulse.
    std::array<std::string, kImmunityCount> curve_files = {};

    int steps_per_day() const { return day_steps + night_steps; }
    std::int64_t total_steps() const {
        return static_cast<std::int64_t>(horizon_days) * steps_per_day();
    }

    CurveSet make_curves() const {
        CurveSet set = CurveSet::default_parametric();
        for (int m = 0; m < kImmunityCount; ++m) {
            const auto& file = curve_files[static_cast<std::size_t>(m)];
            if (!file.empty()) set.curves[static_cast<std::size_t>(m)] = ViralLoadCurve::from_csv(file);
        }
        return set;
    }

    void validate() const {
        if (n_agents < 1) throw ConfigError("sim.n_agents: must be >= 1");
        if (grid_side < 1) throw ConfigError("sim.grid_side: must be >= 1");
        if (home_count < 1) throw ConfigError("sim.home_count: must be >= 1");
        if (routine_length < 1) throw ConfigError("sim.routine_length: must be >= 1");
        const std::int64_t cells = static_cast<std::int64_t>(grid_side) * grid_side;
        if (routine_length > cells)
            throw ConfigError("sim.routine_length: exceeds grid cell count, cannot draw distinct cells");
        if (day_steps < 1) throw ConfigError("sim.day_steps: must be >= 1");
        if (night_steps < 1) throw ConfigError("sim.night_steps: must be >= 1");
        if (horizon_days < 1) throw ConfigError("sim.horizon_days: must be >= 1");
        if (!(susceptibility_lo > 0.0)) throw ConfigError("sim.susceptibility_lo: must be > 0");
        if (!(susceptibility_lo <= susceptibility_hi))
            throw ConfigError("sim.susceptibility_hi: must be >= susceptibility_lo");
        double sum = 0.0;
        for (double p : immunity_probs) {
            if (p < 0.0) throw ConfigError("sim.immunity_probs: entries must be >= 0");
            sum += p;
        }
        if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("sim.immunity_probs: must sum to 1");
        if (!(outbreak_threshold > 0.0 && outbreak_threshold < 1.0))
            throw ConfigError("sim.outbreak_threshold: must be in (0,1)");
        if (!(recovery_threshold < symptom_threshold && symptom_threshold < homebound_threshold &&
              homebound_threshold < death_threshold))
            throw ConfigError("sim.thresholds: require recovery < symptom < homebound < death");
        if (std::isnan(transmission_threshold))
            throw ConfigError("sim.transmission_threshold: must not be NaN");
    }
};

// theta_tr serializes as a string when infinite so the config stays valid JSON.
inline nlohmann::ordered_json to_json(const SimConfig& c) {
    nlohmann::ordered_json j;
    j["n_agents"] = c.n_agents;
    j["grid_side"] = c.grid_side;
    j["home_count"] = c.home_count;
    j["routine_length"] = c.routine_length;
    j["day_steps"] = c.day_steps;
    j["night_steps"] = c.night_steps;
    j["horizon_days"] = c.horizon_days;
    if (std::isinf(c.transmission_threshold))
        j["transmission_threshold"] = "inf";
    else
        j["transmission_threshold"] = c.transmission_threshold;
    j["outbreak_threshold"] = c.outbreak_threshold;
    j["susceptibility_lo"] = c.susceptibility_lo;
    j["susceptibility_hi"] = c.susceptibility_hi;
    j["immunity_probs"] = c.immunity_probs;
    j["symptom_threshold"] = c.symptom_threshold;
    j["homebound_threshold"] = c.homebound_threshold;
    j["death_threshold"] = c.death_threshold;
    j["recovery_threshold"] = c.recovery_threshold;
    j["home_transmission"] = c.home_transmission;
    j["early_stop"] = c.early_stop;
    j["seed"] = c.seed;
    j["curve_files"] = c.curve_files;
    return j;
}

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
    SimConfig c;
    try {
        if (j.contains("n_agents")) c.n_agents = j.at("n_agents").get<int>();
        if (j.contains("grid_side")) c.grid_side = j.at("grid_side").get<int>();
        if (j.contains("home_count")) c.home_count = j.at("home_count").get<int>();
        if (j.contains("routine_length")) c.routine_length = j.at("routine_length").get<int>();
        if (j.contains("day_steps")) c.day_steps = j.at("day_steps").get<int>();
        if (j.contains("night_steps")) c.night_steps = j.at("night_steps").get<int>();
        if (j.contains("horizon_days")) c.horizon_days = j.at("horizon_days").get<int>();
        if (j.contains("transmission_threshold")) {
            const auto& v = j.at("transmission_threshold");
            if (v.is_string())
                c.transmission_threshold = std::stod(v.get<std::string>());
            else
                c.transmission_threshold = v.get<double>();
        }
        if (j.contains("outbreak_threshold")) c.outbreak_threshold = j.at("outbreak_threshold").get<double>();
        if (j.contains("susceptibility_lo")) c.susceptibility_lo = j.at("susceptibility_lo").get<double>();
        if (j.contains("susceptibility_hi")) c.susceptibility_hi = j.at("susceptibility_hi").get<double>();
        if (j.contains("immunity_probs")) c.immunity_probs = j.at("immunity_probs").get<std::array<double, 4>>();
        if (j.contains("symptom_threshold")) c.symptom_threshold = j.at("symptom_threshold").get<double>();
        if (j.contains("homebound_threshold")) c.homebound_threshold = j.at("homebound_threshold").get<double>();
        if (j.contains("death_threshold")) c.death_threshold = j.at("death_threshold").get<double>();
        if (j.contains("recovery_threshold")) c.recovery_threshold = j.at("recovery_threshold").get<double>();
        if (j.contains("home_transmission")) c.home_transmission = j.at("home_transmission").get<bool>();
        if (j.contains("early_stop")) c.early_stop = j.at("early_stop").get<bool>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("curve_files")) c.curve_files = j.at("curve_files").get<std::array<std::string, 4>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sim config: ") + e.what());
    }
    return c;
}

} // namespace epiwarn
