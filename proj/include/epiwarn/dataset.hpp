#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "epiwarn/io_util.hpp"
#include "epiwarn/observables.hpp"
#include "epiwarn/prng.hpp"
#include "epiwarn/simulation.hpp"

namespace epiwarn {

// Boundary-focused sweep: s_lo fixed, s_hi swept, seeds_per_value fresh
// derived seeds per upper-bound value.
struct SweepSpec {
    double s_lo = 1.3;
    std::vector<double> s_hi_values;
    int seeds_per_value = 1;
    SimConfig base_config;
    std::uint64_t master_seed = 1;

    void validate() const {
        if (s_hi_values.empty()) throw ConfigError("sweep.s_hi_values: must be nonempty");
        double prev = -std::numeric_limits<double>::infinity();
        for (double v : s_hi_values) {
            if (!(v >= s_lo)) throw ConfigError("sweep.s_hi_values: all values must be >= s_lo");
            if (!(v > prev)) throw ConfigError("sweep.s_hi_values: must be strictly increasing");
            prev = v;
        }
        if (seeds_per_value < 1) throw ConfigError("sweep.seeds_per_value: must be >= 1");
    }
};

struct RunRecord {
    std::string run_id;
    double s_hi = 0.0;
    std::uint64_t seed = 0;
    std::string trajectory_path; // relative to the manifest directory
    Outcome outcome;
    int recorded_days = 0;
};

struct Dataset {
    SweepSpec spec;
    std::vector<RunRecord> runs;
    std::filesystem::path root; // directory holding manifest + trajectories
};

inline std::string make_run_id(int value_index, int seed_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "v%02d_s%04d", value_index, seed_index);
    return buf;
}

inline SimConfig sweep_run_config(const SweepSpec& spec, int value_index, int seed_index) {
    SimConfig c = spec.base_config;
    c.susceptibility_lo = spec.s_lo;
    c.susceptibility_hi = spec.s_hi_values[static_cast<std::size_t>(value_index)];
    c.seed = derive_seed(spec.master_seed, static_cast<std::uint64_t>(value_index),
                         static_cast<std::uint64_t>(seed_index));
    return c;
}

inline nlohmann::ordered_json outcome_to_json(const Outcome& o) {
    nlohmann::ordered_json j;
    j["attack_rate"] = o.attack_rate;
    j["label"] = o.label;
    j["peak_infected"] = o.peak_infected;
    j["peak_day"] = o.peak_day;
    j["final_S"] = o.final_S;
    j["final_I"] = o.final_I;
    j["final_R"] = o.final_R;
    j["final_D"] = o.final_D;
    j["incidence_peak"] = o.incidence_peak;
    j["cumulative_infections"] = o.cumulative_infections;
    return j;
}

inline Outcome outcome_from_json(const nlohmann::json& j) {
    Outcome o;
    o.attack_rate = j.at("attack_rate").get<double>();
    o.label = j.at("label").get<int>();
    o.peak_infected = j.at("peak_infected").get<int>();
    o.peak_day = j.at("peak_day").get<int>();
    o.final_S = j.at("final_S").get<int>();
    o.final_I = j.at("final_I").get<int>();
    o.final_R = j.at("final_R").get<int>();
    o.final_D = j.at("final_D").get<int>();
    o.incidence_peak = j.at("incidence_peak").get<int>();
    o.cumulative_infections = j.at("cumulative_infections").get<int>();
    return o;
}

inline nlohmann::ordered_json sweep_spec_to_json(const SweepSpec& spec) {
    nlohmann::ordered_json j;
    j["s_lo"] = spec.s_lo;
    j["s_hi_values"] = spec.s_hi_values;
    j["seeds_per_value"] = spec.seeds_per_value;
    j["master_seed"] = spec.master_seed;
    j["base_config"] = to_json(spec.base_config);
    return j;
}

inline SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
    SweepSpec spec;
    try {
        spec.s_lo = j.at("s_lo").get<double>();
        spec.s_hi_values = j.at("s_hi_values").get<std::vector<double>>();
        spec.seeds_per_value = j.at("seeds_per_value").get<int>();
        spec.master_seed = j.at("master_seed").get<std::uint64_t>();
        spec.base_config = sim_config_from_json(j.at("base_config"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sweep spec: ") + e.what());
    }
    return spec;
}

// The manifest fraction of runs with attack rate in (0.1, 0.3): a large value
// signals a mis-calibrated regime without the contained/outbreak gap.
inline double midband_fraction(const std::vector<RunRecord>& runs) {
    if (runs.empty()) return 0.0;
    int mid = 0;
    for (const RunRecord& r : runs)
        if (r.outcome.attack_rate > 0.1 && r.outcome.attack_rate < 0.3) ++mid;
    return static_cast<double>(mid) / static_cast<double>(runs.size());
}

inline void write_manifest(const std::filesystem::path& path, const Dataset& ds) {
    nlohmann::ordered_json j;
    j["spec"] = sweep_spec_to_json(ds.spec);
    j["run_count"] = ds.runs.size();
    int outbreaks = 0;
    for (const RunRecord& r : ds.runs) outbreaks += r.outcome.label;
    j["outbreak_runs"] = outbreaks;
    j["contained_runs"] = ds.runs.size() - static_cast<std::size_t>(outbreaks);
    j["midband_fraction"] = midband_fraction(ds.runs);
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const RunRecord& r : ds.runs) {
        nlohmann::ordered_json e;
        e["run_id"] = r.run_id;
        e["s_hi"] = r.s_hi;
        e["seed"] = r.seed;
        e["rho"] = r.outcome.attack_rate;
        e["label"] = r.outcome.label;
        e["peak"] = r.outcome.peak_infected;
        e["peak_day"] = r.outcome.peak_day;
        e["recorded_days"] = r.recorded_days;
        e["trajectory_path"] = r.trajectory_path;
        e["outcome"] = outcome_to_json(r.outcome);
        runs.push_back(std::move(e));
    }
    j["runs"] = std::move(runs);
    write_json_file(path, j);
}

inline Dataset read_manifest(const std::filesystem::path& path) {
    const nlohmann::json j = load_json_file(path);
    Dataset ds;
    ds.root = path.parent_path();
    try {
        ds.spec = sweep_spec_from_json(j.at("spec"));
        for (const auto& e : j.at("runs")) {
            RunRecord r;
            r.run_id = e.at("run_id").get<std::string>();
            r.s_hi = e.at("s_hi").get<double>();
            r.seed = e.at("seed").get<std::uint64_t>();
            r.trajectory_path = e.at("trajectory_path").get<std::string>();
            r.recorded_days = e.at("recorded_days").get<int>();
            r.outcome = outcome_from_json(e.at("outcome"));
            ds.runs.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
    return ds;
}

// Runs the full sweep, writing one trajectory CSV per run under
// out_dir/runs/ plus out_dir/manifest.json. Deterministic given the spec.
inline Dataset generate_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    spec.base_config.validate();
    Dataset ds;
    ds.spec = spec;
    ds.root = out_dir;
    std::filesystem::create_directories(out_dir / "runs");
    for (int vi = 0; vi < static_cast<int>(spec.s_hi_values.size()); ++vi) {
        for (int si = 0; si < spec.seeds_per_value; ++si) {
            const SimConfig config = sweep_run_config(spec, vi, si);
            const Trajectory traj = run_simulation(config);
            RunRecord r;
            r.run_id = make_run_id(vi, si);
            r.s_hi = config.susceptibility_hi;
            r.seed = config.seed;
            r.trajectory_path = "runs/" + r.run_id + ".csv";
            r.outcome = traj.outcome;
            r.recorded_days = static_cast<int>(traj.days.size());
            write_trajectory_csv(out_dir / r.trajectory_path, traj);
            ds.runs.push_back(std::move(r));
        }
    }
    std::sort(ds.runs.begin(), ds.runs.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.run_id < b.run_id; });
    write_manifest(out_dir / "manifest.json", ds);
    return ds;
}

inline std::vector<DailyRecord> load_run_days(const Dataset& ds, const RunRecord& run) {
    const Trajectory t =
        read_trajectory_csv(ds.root / run.trajectory_path, ds.spec.base_config.outbreak_threshold);
    return t.days;
}

// Disjoint, exhaustive partition by run id. Cut points are
// floor(r_train * n) and floor(r_val * n); the remainder goes to test
// (10 runs at 0.7/0.15/0.15 -> 7/1/2).
struct SplitIds {
    std::vector<std::string> train, val, test;
};

inline SplitIds split_runs(const std::vector<RunRecord>& runs, std::array<double, 3> ratios,
                           std::uint64_t split_seed) {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw ConfigError("split.ratios: must be positive");
        sum += r;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("split.ratios: must sum to 1");
    if (runs.size() < 3) throw DataError("split_runs: fewer runs than partitions");

    std::vector<std::string> ids;
    ids.reserve(runs.size());
    for (const RunRecord& r : runs) ids.push_back(r.run_id);
    std::sort(ids.begin(), ids.end());
    Pcg32 rng(split_seed);
    rng.shuffle(ids);

    const auto n = ids.size();
    const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n)));
    SplitIds out;
    out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                   ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
    return out;
}

// One k-day slice of the 9 count observables ending at end_day, day-major.
struct Window {
    std::string run_id;
    int end_day = 0;
    std::vector<double> values; // k * 9
    int label = 0;
    double rho = 0.0;
    double s_lo = 0.0, s_hi = 0.0;
};

inline std::vector<Window> extract_windows(const RunRecord& run,
                                           const std::vector<DailyRecord>& days, int k,
                                           int end_day_min, int end_day_max, double s_lo) {
    if (k < 1) throw ConfigError("windows.k: must be >= 1");
    if (end_day_min < k - 1) throw ConfigError("windows.end_day_min: must be >= k-1");
    std::vector<Window> out;
    const int last = static_cast<int>(days.size()) - 1;
    for (int e = end_day_min; e <= end_day_max && e <= last; ++e) {
        Window w;
        w.run_id = run.run_id;
        w.end_day = e;
        w.label = run.outcome.label;
        w.rho = run.outcome.attack_rate;
        w.s_lo = s_lo;
        w.s_hi = run.s_hi;
        w.values.reserve(static_cast<std::size_t>(k) * kObservableCount);
        for (int d = e - k + 1; d <= e; ++d)
            for (int j = 0; j < kObservableCount; ++j)
                w.values.push_back(observable_value(days[static_cast<std::size_t>(d)], j));
        out.push_back(std::move(w));
    }
    return out;
}

inline std::string windows_csv_header(int k) {
    std::string h = "run_id,end_day,label,rho,s_lo,s_hi";
    for (int d = 0; d < k; ++d)
        for (int j = 0; j < kObservableCount; ++j)
            h += ",d" + std::to_string(d) + "_" + observable_name(j);
    return h;
}

inline void write_windows_csv(const std::filesystem::path& path, const std::vector<Window>& windows,
                              int k) {
    std::string out = windows_csv_header(k) + "\n";
    for (const Window& w : windows) {
        if (w.values.size() != static_cast<std::size_t>(k) * kObservableCount)
            throw DataError("window has wrong value count for k");
        out += w.run_id + "," + std::to_string(w.end_day) + "," + std::to_string(w.label) + "," +
               fmt_g17(w.rho) + "," + fmt_g17(w.s_lo) + "," + fmt_g17(w.s_hi);
        for (double v : w.values) out += "," + fmt_g17(v);
        out += "\n";
    }
    write_text_file(path, out);
}

inline std::vector<Window> read_windows_csv(const std::filesystem::path& path, int k) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != windows_csv_header(k))
        throw DataError("windows file " + path.string() + ": bad header for k=" + std::to_string(k));
    std::vector<Window> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string tok;
        Window w;
        std::getline(row, tok, ',');
        w.run_id = tok;
        std::getline(row, tok, ',');
        w.end_day = std::stoi(tok);
        std::getline(row, tok, ',');
        w.label = std::stoi(tok);
        std::getline(row, tok, ',');
        w.rho = std::stod(tok);
        std::getline(row, tok, ',');
        w.s_lo = std::stod(tok);
        std::getline(row, tok, ',');
        w.s_hi = std::stod(tok);
        while (std::getline(row, tok, ',')) w.values.push_back(std::stod(tok));
        if (w.values.size() != static_cast<std::size_t>(k) * kObservableCount)
            throw DataError("windows file " + path.string() + ": wrong column count");
        out.push_back(std::move(w));
    }
    return out;
}

// Transmission-threshold calibration: bisection on theta_tr against the
// empirical outbreak fraction over probe seeds (non-increasing in theta_tr).
struct CalibrationProbe {
    double theta = 0.0;
    double outbreak_fraction = 0.0;
};

struct CalibrationResult {
    double theta = 0.0;
    double outbreak_fraction = 0.0;
    std::vector<CalibrationProbe> probes;
};

inline CalibrationResult calibrate_threshold(const SimConfig& base, int probe_seeds,
                                             std::pair<double, double> band,
                                             std::uint64_t probe_master_seed, int max_iters = 48) {
    if (probe_seeds < 20) throw ConfigError("calibrate.probe_seeds: must be >= 20");
    if (!(band.first > 0.0 && band.second < 1.0 && band.first < band.second))
        throw ConfigError("calibrate.band: must satisfy 0 < lo < hi < 1");
    base.validate();

    CalibrationResult result;
    const auto fraction_at = [&](double theta) {
        int outbreaks = 0;
        for (int i = 0; i < probe_seeds; ++i) {
            SimConfig c = base;
            c.transmission_threshold = theta;
            c.seed = derive_seed(probe_master_seed, 0, static_cast<std::uint64_t>(i));
            const Trajectory t = run_simulation(c);
            outbreaks += t.outcome.label;
        }
        const double f = static_cast<double>(outbreaks) / probe_seeds;
        result.probes.push_back({theta, f});
        return f;
    };

    // Upper bracket: beyond max load * s_hi no exposure can exceed theta.
    const CurveSet curves = base.make_curves();
    double max_load = 0.0;
    for (int m = 0; m < kImmunityCount; ++m)
        for (int a = 0; a <= base.total_steps(); ++a)
            max_load = std::max(max_load, curves.load(static_cast<Immunity>(m), a));
    double lo = 0.0;
    double hi = max_load * base.susceptibility_hi + 1.0;

    double f_lo = fraction_at(lo);
    if (f_lo >= band.first && f_lo <= band.second) {
        result.theta = lo;
        result.outbreak_fraction = f_lo;
        return result;
    }
    double f_hi = fraction_at(hi);
    if (f_hi >= band.first && f_hi <= band.second) {
        result.theta = hi;
        result.outbreak_fraction = f_hi;
        return result;
    }
    if (f_lo < band.first || f_hi > band.second)
        throw DataError("calibrate_threshold: no crossing in bracket (fraction " +
                        std::to_string(f_lo) + " at " + std::to_string(lo) + ", " +
                        std::to_string(f_hi) + " at " + std::to_string(hi) + ")");

    for (int it = 0; it < max_iters; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f = fraction_at(mid);
        if (f >= band.first && f <= band.second) {
            result.theta = mid;
            result.outbreak_fraction = f;
            return result;
        }
        if (f > band.second)
            lo = mid; // too much spread: raise the threshold
        else
            hi = mid;
    }
    throw DataError("calibrate_threshold: no threshold with fraction in band after bisection "
                    "(endpoints " +
                    std::to_string(lo) + ", " + std::to_string(hi) + ")");
}

} // namespace epiwarn
