#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "epiwarn/curves.hpp"
#include "epiwarn/observables.hpp"
#include "epiwarn/prng.hpp"
#include "epiwarn/sim_config.hpp"

namespace epiwarn {

// Locations are packed into one index space: grid cells [0, G*G), homes
// [G*G, G*G + H). Dead agents have no location.
inline constexpr int kNoLocation = -1;

struct Agent {
    int id = 0;
    int home = 0;              // home location index (already offset by G*G)
    std::vector<int> routine;  // K pairwise-distinct grid cell indices
    int phase = 0;             // p_i in {1..K-1} (0 when K == 1)
    double susceptibility = 1.0;
    Immunity immunity = Immunity::Strong;

    HealthState state = HealthState::Susceptible;
    std::int64_t infected_at = -1; // step of infection, -1 if never infected
    int quarantined_day = -1;      // intervention day, -1 if none

    bool alive() const { return state != HealthState::Dead; }
};

struct PopulationState {
    std::vector<Agent> agents;
    int seed_agent = 0; // i0
};

// Draws the population from a PCG32 stream seeded by config.seed. The draw
// order is fixed and field-major: all homes, all routines, all
// susceptibilities, all immunity categories, all phases, then the initially
// infected agent. Serialized sweeps depend on this order.
inline PopulationState init_population(const SimConfig& config) {
    config.validate();
    const int n = config.n_agents;
    const int cells = config.grid_side * config.grid_side;
    const int k = config.routine_length;

    Pcg32 rng(config.seed);
    PopulationState pop;
    pop.agents.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pop.agents[static_cast<std::size_t>(i)].id = i;

    for (auto& a : pop.agents)
        a.home = cells + static_cast<int>(rng.bounded(static_cast<std::uint32_t>(config.home_count)));

    // Distinct cells are drawn by rejection; the routine keeps draw order.
    std::vector<char> taken(static_cast<std::size_t>(cells), 0);
    for (auto& a : pop.agents) {
        a.routine.reserve(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) {
            int cell;
            do {
                cell = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(cells)));
            } while (taken[static_cast<std::size_t>(cell)]);
            taken[static_cast<std::size_t>(cell)] = 1;
            a.routine.push_back(cell);
        }
        for (int cell : a.routine) taken[static_cast<std::size_t>(cell)] = 0;
    }

    for (auto& a : pop.agents)
        a.susceptibility = rng.uniform(config.susceptibility_lo, config.susceptibility_hi);

    for (auto& a : pop.agents)
        a.immunity = static_cast<Immunity>(rng.categorical(config.immunity_probs));

    for (auto& a : pop.agents)
        a.phase = k > 1 ? 1 + static_cast<int>(rng.bounded(static_cast<std::uint32_t>(k - 1))) : 0;

    pop.seed_agent = static_cast<int>(rng.bounded(static_cast<std::uint32_t>(n)));
    auto& seed = pop.agents[static_cast<std::size_t>(pop.seed_agent)];
    seed.state = HealthState::Infected;
    seed.infected_at = 0;
    return pop;
}

// Nominal location before disease/intervention restrictions: routine cell
// r_{(o+tau) mod K} with daily offset o = (d * p) mod K during daytime, home
// at night.
inline int nominal_location(const Agent& agent, int day, int step_in_day, const SimConfig& config) {
    if (step_in_day >= config.day_steps) return agent.home;
    const int k = static_cast<int>(agent.routine.size());
    const int offset = static_cast<int>((static_cast<std::int64_t>(day) * agent.phase) % k);
    return agent.routine[static_cast<std::size_t>((offset + step_in_day) % k)];
}

// Full location rule: home when homebound by viral load (strictly above the
// threshold while infected) or quarantined for this day, nominal otherwise.
inline int effective_location(const Agent& agent, int day, int step_in_day, double viral_load,
                              const SimConfig& config) {
    if (agent.quarantined_day == day) return agent.home;
    if (agent.state == HealthState::Infected && viral_load > config.homebound_threshold)
        return agent.home;
    return nominal_location(agent, day, step_in_day, config);
}

struct InterventionSpec {
    int agent = 0;
    int day = 0;
};

// Per-agent count of co-locations with infected agents in transmission-
// eligible groups over days [0, max_day]; used to rank intervention
// candidates.
struct ContactTally {
    int max_day = 0;
    std::vector<std::int64_t> infected_contacts;
};

namespace detail {

// One simulation run. Strictly sequential; all state is local so distinct
// runs are independent.
class SimulationRun {
public:
    SimulationRun(const SimConfig& config, const PopulationState& init)
        : config_(config),
          curves_(SampledCurves::sample(config.make_curves(), config.total_steps(),
                                        config.recovery_threshold)),
          agents_(init.agents) {}

    Trajectory run(std::optional<InterventionSpec> intervention, ContactTally* tally) {
        config_.validate();
        if (intervention) {
            if (intervention->agent < 0 || intervention->agent >= config_.n_agents)
                throw ConfigError("intervention.agent: out of range");
            if (intervention->day < 0 || intervention->day >= config_.horizon_days)
                throw ConfigError("intervention.day: out of range");
            agents_[static_cast<std::size_t>(intervention->agent)].quarantined_day =
                intervention->day;
        }
        if (tally) {
            tally->infected_contacts.assign(agents_.size(), 0);
        }

        const int steps = config_.steps_per_day();
        Trajectory traj;
        traj.n_agents = config_.n_agents;

        for (int day = 0; day < config_.horizon_days; ++day) {
            DayEvents events;
            for (int tau = 0; tau < steps; ++tau) {
                const std::int64_t t = static_cast<std::int64_t>(day) * steps + tau;
                place_agents(day, tau, t);
                const bool transmit_here = tau < config_.day_steps || config_.home_transmission;
                if (transmit_here) transmission_step(t, day, events, tally);
                death_check(t, events);
            }
            end_of_day(day, events);
            traj.days.push_back(make_record(day, events));
            if (config_.early_stop && traj.days.back().I == 0) break;
        }
        traj.outcome = compute_outcome(traj.days, config_.n_agents, config_.outbreak_threshold);
        return traj;
    }

private:
    double load_at(const Agent& a, std::int64_t t) const {
        if (a.state != HealthState::Infected) return 0.0;
        return curves_.at(a.immunity, t - a.infected_at);
    }

    void place_agents(int day, int tau, std::int64_t t) {
        locations_.assign(agents_.size(), kNoLocation);
        loads_.assign(agents_.size(), 0.0);
        for (const Agent& a : agents_) {
            if (!a.alive()) continue;
            const double v = load_at(a, t);
            loads_[static_cast<std::size_t>(a.id)] = v;
            locations_[static_cast<std::size_t>(a.id)] = effective_location(a, day, tau, v, config_);
        }
    }

    // Evaluates the threshold rule within each co-location group, from a
    // snapshot of states at step start: agents infected during this step do
    // not transmit until the next one.
    void transmission_step(std::int64_t t, int day, DayEvents& events, ContactTally* tally) {
        const int cells = config_.grid_side * config_.grid_side;
        order_.clear();
        for (const Agent& a : agents_) {
            const int loc = locations_[static_cast<std::size_t>(a.id)];
            if (loc == kNoLocation) continue;
            if (loc >= cells && !config_.home_transmission) continue;
            order_.push_back(a.id);
        }
        std::sort(order_.begin(), order_.end(), [&](int x, int y) {
            const int lx = locations_[static_cast<std::size_t>(x)];
            const int ly = locations_[static_cast<std::size_t>(y)];
            return lx != ly ? lx < ly : x < y;
        });

        const bool count_contacts = tally && day <= tally->max_day;
        std::size_t begin = 0;
        while (begin < order_.size()) {
            std::size_t end = begin + 1;
            const int loc = locations_[static_cast<std::size_t>(order_[begin])];
            while (end < order_.size() &&
                   locations_[static_cast<std::size_t>(order_[end])] == loc)
                ++end;
            if (end - begin >= 2) process_group(begin, end, t, events, count_contacts, tally);
            begin = end;
        }
    }

    void process_group(std::size_t begin, std::size_t end, std::int64_t t, DayEvents& events,
                       bool count_contacts, ContactTally* tally) {
        sources_.clear();
        int infected_in_group = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const Agent& a = agents_[static_cast<std::size_t>(order_[i])];
            if (a.state == HealthState::Infected) {
                ++infected_in_group;
                sources_.push_back(loads_[static_cast<std::size_t>(a.id)]);
            }
        }
        if (count_contacts && infected_in_group > 0) {
            for (std::size_t i = begin; i < end; ++i) {
                const Agent& a = agents_[static_cast<std::size_t>(order_[i])];
                tally->infected_contacts[static_cast<std::size_t>(a.id)] +=
                    infected_in_group - (a.state == HealthState::Infected ? 1 : 0);
            }
        }
        if (sources_.empty()) return;
        const double theta = config_.transmission_threshold;
        for (std::size_t i = begin; i < end; ++i) {
            Agent& a = agents_[static_cast<std::size_t>(order_[i])];
            if (a.state != HealthState::Susceptible) continue;
            for (double v : sources_) {
                if (v * a.susceptibility > theta) {
                    a.state = HealthState::Infected;
                    a.infected_at = t;
                    ++events.new_infections;
                    break;
                }
            }
        }
    }

    // Applied at the end of every step: infected agents strictly above the
    // death threshold die immediately and leave all future dynamics.
    void death_check(std::int64_t t, DayEvents& events) {
        for (Agent& a : agents_) {
            if (a.state != HealthState::Infected) continue;
            if (load_at(a, t) > config_.death_threshold) {
                a.state = HealthState::Dead;
                ++events.new_deaths;
            }
        }
    }

    // Day-end recovery: load below the recovery threshold at the final step
    // and past the curve peak (guards against same-day infections whose load
    // has not risen yet).
    void end_of_day(int day, DayEvents& events) {
        const std::int64_t t_end =
            static_cast<std::int64_t>(day + 1) * config_.steps_per_day() - 1;
        for (Agent& a : agents_) {
            if (a.state != HealthState::Infected) continue;
            const std::int64_t age = t_end - a.infected_at;
            const double v = curves_.at(a.immunity, age);
            const double guard = curves_.guard_age[static_cast<std::size_t>(static_cast<int>(a.immunity))];
            if (v < config_.recovery_threshold && static_cast<double>(age) > guard) {
                a.state = HealthState::Recovered;
                ++events.new_recoveries;
            }
        }
    }

    DailyRecord make_record(int day, const DayEvents& events) const {
        const std::int64_t t_end =
            static_cast<std::int64_t>(day + 1) * config_.steps_per_day() - 1;
        day_states_.assign(agents_.size(), AgentDayState{});
        for (const Agent& a : agents_) {
            auto& s = day_states_[static_cast<std::size_t>(a.id)];
            s.state = a.state;
            s.load = load_at(a, t_end);
        }
        return aggregate_day(day, events, day_states_, config_.homebound_threshold);
    }

    SimConfig config_;
    SampledCurves curves_;
    std::vector<Agent> agents_;
    std::vector<int> locations_;
    std::vector<double> loads_;
    std::vector<int> order_;
    std::vector<double> sources_;
    mutable std::vector<AgentDayState> day_states_;
};

} // namespace detail

// Runs one simulation from an already-initialized population (the population
// is copied; counterfactual runs share the same initialization by reusing the
// same PopulationState). Fully deterministic given (config, init,
// intervention).
inline Trajectory run_simulation(const SimConfig& config, const PopulationState& init,
                                 std::optional<InterventionSpec> intervention = std::nullopt,
                                 ContactTally* tally = nullptr) {
    detail::SimulationRun run(config, init);
    return run.run(intervention, tally);
}

inline Trajectory run_simulation(const SimConfig& config,
                                 std::optional<InterventionSpec> intervention = std::nullopt,
                                 ContactTally* tally = nullptr) {
    return run_simulation(config, init_population(config), intervention, tally);
}

} // namespace epiwarn
