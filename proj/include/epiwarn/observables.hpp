#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "epiwarn/errors.hpp"

namespace epiwarn {

// End-of-day observable vector Y_d plus the viral-load summaries.
struct DailyRecord {
    int day = 0;
    int S = 0, I = 0, R = 0, D = 0;
    int new_inf = 0, new_rec = 0, new_dead = 0;
    int I_mob = 0;  // infected with load <= homebound threshold at day end
    int I_home = 0; // infected with load > homebound threshold at day end
    double vl_mean = 0.0;
    double vl_max = 0.0;
};

inline constexpr int kObservableCount = 9; // count columns fed to the models

// The 9 count observables in stored order.
inline double observable_value(const DailyRecord& r, int idx) {
    switch (idx) {
        case 0: return r.S;
        case 1: return r.I;
        case 2: return r.R;
        case 3: return r.D;
        case 4: return r.new_inf;
        case 5: return r.new_rec;
        case 6: return r.new_dead;
        case 7: return r.I_mob;
        case 8: return r.I_home;
    }
    throw DataError("observable index out of range");
}

inline const char* observable_name(int idx) {
    static constexpr const char* names[kObservableCount] = {
        "S", "I", "R", "D", "new_inf", "new_rec", "new_dead", "I_mob", "I_home"};
    if (idx < 0 || idx >= kObservableCount) throw DataError("observable index out of range");
    return names[idx];
}

enum class HealthState : unsigned char { Susceptible, Infected, Recovered, Dead };

// Event tallies accumulated while stepping one day.
struct DayEvents {
    int new_infections = 0;
    int new_recoveries = 0;
    int new_deaths = 0;
};

// State and current viral load of one agent at the end of a day.
struct AgentDayState {
    HealthState state = HealthState::Susceptible;
    double load = 0.0;
};

// Builds the daily record from the day's event tallies and the end-of-day
// agent states. I_mob/I_home partition the infected by the homebound
// threshold; viral-load summaries are 0 when no agent is infected.
inline DailyRecord aggregate_day(int day, const DayEvents& events,
                                 const std::vector<AgentDayState>& agents,
                                 double homebound_threshold) {
    DailyRecord r;
    r.day = day;
    r.new_inf = events.new_infections;
    r.new_rec = events.new_recoveries;
    r.new_dead = events.new_deaths;
    double sum = 0.0;
    for (const AgentDayState& a : agents) {
        switch (a.state) {
            case HealthState::Susceptible: ++r.S; break;
            case HealthState::Recovered: ++r.R; break;
            case HealthState::Dead: ++r.D; break;
            case HealthState::Infected:
                ++r.I;
                if (a.load > homebound_threshold)
                    ++r.I_home;
                else
                    ++r.I_mob;
                sum += a.load;
                r.vl_max = std::max(r.vl_max, a.load);
                break;
        }
    }
    if (r.I > 0) r.vl_mean = sum / r.I;
    return r;
}

struct Outcome {
    double attack_rate = 0.0; // (N - S_T) / N
    int label = 0;            // 1 iff attack_rate >= rho_c
    int peak_infected = 0;    // max_d I_d
    int peak_day = 0;         // argmax, earliest on ties
    int final_S = 0, final_I = 0, final_R = 0, final_D = 0;
    int incidence_peak = 0;         // max_d new_inf
    int cumulative_infections = 0;  // sum_d new_inf (seed not counted)
};

inline Outcome compute_outcome(const std::vector<DailyRecord>& days, int n_agents, double rho_c) {
    if (days.empty()) throw DataError("compute_outcome: empty trajectory");
    Outcome o;
    const DailyRecord& last = days.back();
    o.final_S = last.S;
    o.final_I = last.I;
    o.final_R = last.R;
    o.final_D = last.D;
    o.attack_rate = static_cast<double>(n_agents - last.S) / static_cast<double>(n_agents);
    o.label = o.attack_rate >= rho_c ? 1 : 0;
    for (const DailyRecord& r : days) {
        if (r.I > o.peak_infected) {
            o.peak_infected = r.I;
            o.peak_day = r.day;
        }
        o.incidence_peak = std::max(o.incidence_peak, r.new_inf);
        o.cumulative_infections += r.new_inf;
    }
    return o;
}

struct Trajectory {
    int n_agents = 0;
    std::vector<DailyRecord> days;
    Outcome outcome;
};

// CSV layout: one row per recorded day, counts as integers, viral-load
// summaries with 6 decimal places.
inline constexpr const char* kTrajectoryHeader =
    "day,S,I,R,D,new_inf,new_rec,new_dead,I_mob,I_home,vl_mean,vl_max";

inline std::string trajectory_to_csv(const Trajectory& t) {
    std::string out(kTrajectoryHeader);
    out += '\n';
    char buf[256];
    for (const DailyRecord& r : t.days) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d,%d,%d,%d,%d,%d,%.6f,%.6f\n", r.day, r.S,
                      r.I, r.R, r.D, r.new_inf, r.new_rec, r.new_dead, r.I_mob, r.I_home, r.vl_mean,
                      r.vl_max);
        out += buf;
    }
    return out;
}

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write trajectory file: " + path.string());
    out << trajectory_to_csv(t);
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path, double rho_c) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("trajectory file not found: " + path.string());
    Trajectory t;
    std::string line;
    if (!std::getline(in, line) || line != kTrajectoryHeader)
        throw DataError("trajectory file " + path.string() + ": bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        DailyRecord r;
        if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%d,%d,%d,%d,%d,%d,%lf,%lf", &r.day, &r.S, &r.I,
                        &r.R, &r.D, &r.new_inf, &r.new_rec, &r.new_dead, &r.I_mob, &r.I_home,
                        &r.vl_mean, &r.vl_max) != 12)
            throw DataError("trajectory file " + path.string() + ": malformed row '" + line + "'");
        t.days.push_back(r);
    }
    if (t.days.empty()) throw DataError("trajectory file " + path.string() + ": no rows");
    t.n_agents = t.days.front().S + t.days.front().I + t.days.front().R + t.days.front().D;
    t.outcome = compute_outcome(t.days, t.n_agents, rho_c);
    return t;
}

} // namespace epiwarn
