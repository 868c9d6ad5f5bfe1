#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "epiwarn/io_util.hpp"
#include "epiwarn/simulation.hpp"

namespace epiwarn {

enum class CandidateStrategy { ContactRanked, Exhaustive };

inline CandidateStrategy candidate_strategy_from_string(const std::string& s) {
    if (s == "contact-ranked") return CandidateStrategy::ContactRanked;
    if (s == "exhaustive") return CandidateStrategy::Exhaustive;
    throw ConfigError("intervention.strategy: unknown value '" + s + "'");
}

enum class InterventionCriterion { AttackRate, Peak };

inline InterventionCriterion criterion_from_string(const std::string& s) {
    if (s == "attack_rate") return InterventionCriterion::AttackRate;
    if (s == "peak") return InterventionCriterion::Peak;
    throw ConfigError("intervention.criterion: unknown value '" + s + "'");
}

struct CandidateParams {
    CandidateStrategy strategy = CandidateStrategy::ContactRanked;
    int k_agents = 50;
    int day_min = 0;
    int day_max = 9;
};

// Candidate agent-day pairs. The contact-ranked strategy replays the baseline
// to count each agent's co-locations with infected agents in transmission-
// eligible groups over days [0, day_max], then crosses the top-k agents with
// the day range. Ordering is deterministic: rank (ties by agent id), then day.
inline std::vector<InterventionSpec> enumerate_candidates(const SimConfig& config,
                                                          const PopulationState& init,
                                                          const CandidateParams& params) {
    const int day_max = std::min(params.day_max, config.horizon_days - 1);
    if (params.day_min < 0 || params.day_min > day_max)
        throw DataError("enumerate_candidates: empty day range");
    std::vector<InterventionSpec> out;
    if (params.strategy == CandidateStrategy::Exhaustive) {
        for (int a = 0; a < config.n_agents; ++a)
            for (int d = params.day_min; d <= day_max; ++d) out.push_back({a, d});
        return out;
    }
    if (params.k_agents < 1) throw ConfigError("intervention.k_agents: must be >= 1");
    ContactTally tally;
    tally.max_day = day_max;
    run_simulation(config, init, std::nullopt, &tally);
    std::vector<int> agents(static_cast<std::size_t>(config.n_agents));
    std::iota(agents.begin(), agents.end(), 0);
    std::stable_sort(agents.begin(), agents.end(), [&](int a, int b) {
        const auto ca = tally.infected_contacts[static_cast<std::size_t>(a)];
        const auto cb = tally.infected_contacts[static_cast<std::size_t>(b)];
        return ca != cb ? ca > cb : a < b;
    });
    const int k = std::min(params.k_agents, config.n_agents);
    for (int i = 0; i < k; ++i)
        for (int d = params.day_min; d <= day_max; ++d) out.push_back({agents[static_cast<std::size_t>(i)], d});
    if (out.empty()) throw DataError("enumerate_candidates: empty candidate set");
    return out;
}

// Counterfactual replay: identical initialized population and rules; only the
// one-agent one-day quarantine differs.
inline Trajectory run_counterfactual(const SimConfig& config, const PopulationState& init,
                                     InterventionSpec spec) {
    return run_simulation(config, init, spec);
}

struct InterventionReport {
    InterventionSpec spec;
    double rho0 = 0.0, rho_u = 0.0, delta_rho = 0.0;
    int peak0 = 0, peak_u = 0, delta_peak = 0;
    int peak_day0 = 0, peak_day_u = 0;
    bool prevented = false;
};

inline InterventionReport evaluate_intervention(const Outcome& baseline,
                                                const Outcome& counterfactual, double rho_c,
                                                InterventionSpec spec) {
    InterventionReport r;
    r.spec = spec;
    r.rho0 = baseline.attack_rate;
    r.rho_u = counterfactual.attack_rate;
    r.delta_rho = r.rho0 - r.rho_u;
    r.peak0 = baseline.peak_infected;
    r.peak_u = counterfactual.peak_infected;
    r.delta_peak = r.peak0 - r.peak_u;
    r.peak_day0 = baseline.peak_day;
    r.peak_day_u = counterfactual.peak_day;
    r.prevented = baseline.attack_rate >= rho_c && counterfactual.attack_rate < rho_c;
    return r;
}

inline double criterion_value(const InterventionReport& r, InterventionCriterion criterion) {
    return criterion == InterventionCriterion::AttackRate ? r.delta_rho
                                                          : static_cast<double>(r.delta_peak);
}

// Primary criterion descending; ties by smaller intervention day, then
// smaller agent id.
inline void rank_reports(std::vector<InterventionReport>& reports,
                         InterventionCriterion criterion) {
    std::stable_sort(reports.begin(), reports.end(),
                     [&](const InterventionReport& a, const InterventionReport& b) {
                         const double va = criterion_value(a, criterion);
                         const double vb = criterion_value(b, criterion);
                         if (va != vb) return va > vb;
                         if (a.spec.day != b.spec.day) return a.spec.day < b.spec.day;
                         return a.spec.agent < b.spec.agent;
                     });
}

struct SearchResult {
    Outcome baseline;
    std::vector<InterventionReport> ranked;
    InterventionSpec best;
};

// Evaluates every candidate against the baseline outcome and returns the full
// ranked table. Candidate evaluations are independent; the table order does
// not depend on evaluation order.
inline SearchResult search_best(const SimConfig& config, const PopulationState& init,
                                const Outcome& baseline,
                                std::span<const InterventionSpec> candidates,
                                InterventionCriterion criterion) {
    if (candidates.empty()) throw DataError("search_best: empty candidate set");
    SearchResult result;
    result.baseline = baseline;
    result.ranked.reserve(candidates.size());
    for (const InterventionSpec& spec : candidates) {
        const Trajectory cf = run_counterfactual(config, init, spec);
        result.ranked.push_back(
            evaluate_intervention(baseline, cf.outcome, config.outbreak_threshold, spec));
    }
    rank_reports(result.ranked, criterion);
    result.best = result.ranked.front().spec;
    return result;
}

inline nlohmann::ordered_json intervention_report_to_json(const InterventionReport& r) {
    nlohmann::ordered_json j;
    j["agent"] = r.spec.agent;
    j["day"] = r.spec.day;
    j["rho0"] = r.rho0;
    j["rho_u"] = r.rho_u;
    j["delta_rho"] = r.delta_rho;
    j["peak0"] = r.peak0;
    j["peak_u"] = r.peak_u;
    j["delta_peak"] = r.delta_peak;
    j["peak_day0"] = r.peak_day0;
    j["peak_day_u"] = r.peak_day_u;
    j["prevented"] = r.prevented;
    return j;
}

inline InterventionReport intervention_report_from_json(const nlohmann::json& j) {
    InterventionReport r;
    r.spec.agent = j.at("agent").get<int>();
    r.spec.day = j.at("day").get<int>();
    r.rho0 = j.at("rho0").get<double>();
    r.rho_u = j.at("rho_u").get<double>();
    r.delta_rho = j.at("delta_rho").get<double>();
    r.peak0 = j.at("peak0").get<int>();
    r.peak_u = j.at("peak_u").get<int>();
    r.delta_peak = j.at("delta_peak").get<int>();
    r.peak_day0 = j.at("peak_day0").get<int>();
    r.peak_day_u = j.at("peak_day_u").get<int>();
    r.prevented = j.at("prevented").get<bool>();
    return r;
}

} // namespace epiwarn
