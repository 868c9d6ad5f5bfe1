#pragma once

#include <cstdint>

#include "epiwarn/dataset.hpp"

namespace epiwarn::testutil {

// A small dense world whose outbreak fraction actually responds to the
// transmission threshold; shared by dataset / pipeline tests.
inline SimConfig desk_world() {
    SimConfig c;
    c.n_agents = 150;
    c.grid_side = 16;
    c.home_count = 50;
    c.routine_length = 5;
    c.day_steps = 5;
    c.night_steps = 5;
    c.horizon_days = 80;
    c.susceptibility_lo = 1.3;
    c.susceptibility_hi = 1.3005;
    c.transmission_threshold = 45.0;
    c.early_stop = true;
    return c;
}

inline SweepSpec desk_sweep(int values, int seeds_per_value, std::uint64_t master_seed,
                            double theta) {
    SweepSpec spec;
    spec.base_config = desk_world();
    spec.base_config.transmission_threshold = theta;
    spec.s_lo = 1.3;
    spec.s_hi_values.clear();
    for (int i = 0; i < values; ++i)
        spec.s_hi_values.push_back(1.3001 + 0.0001 * i);
    spec.seeds_per_value = seeds_per_value;
    spec.master_seed = master_seed;
    return spec;
}

} // namespace epiwarn::testutil
