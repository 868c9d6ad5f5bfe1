#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "epiwarn/dataset.hpp"
#include "epiwarn/earlywarn.hpp"
#include "epiwarn/intervention.hpp"
#include "epiwarn/koopman.hpp"
#include "epiwarn/sim_config.hpp"

namespace epiwarn {

// One JSON document with the per-stage blocks; command-line flags override
// fields by dotted path.
struct PipelineConfig {
    SimConfig sim;

    struct SweepBlock {
        double s_lo = 1.3;
        std::vector<double> s_hi_values = {1.3015, 1.3017, 1.3019, 1.3021, 1.3023, 1.3025};
        int seeds_per_value = 20;
        std::uint64_t master_seed = 20260101;
        std::array<double, 3> split_ratios = {0.70, 0.15, 0.15};
        std::uint64_t split_seed = 71;
    } sweep;

    struct KoopmanBlock {
        KoopmanHyper hyper;
    } koopman;

    struct EarlyWarnBlock {
        EarlyWarnHyper hyper;
        int end_day_min = 4;
        int end_day_max = 12;
    } earlywarn;

    struct InterventionBlock {
        CandidateParams candidates;
        InterventionCriterion criterion = InterventionCriterion::AttackRate;
        int cases = 10;       // baseline-outbreak runs to search
        double min_score = 0.5; // early-warning probability gate
    } intervention;

    struct PathsBlock {
        std::string out_dir = "out";
    } paths;

    SweepSpec make_sweep_spec() const {
        SweepSpec spec;
        spec.s_lo = sweep.s_lo;
        spec.s_hi_values = sweep.s_hi_values;
        spec.seeds_per_value = sweep.seeds_per_value;
        spec.master_seed = sweep.master_seed;
        spec.base_config = sim;
        return spec;
    }

    void validate() const {
        sim.validate();
        make_sweep_spec().validate();
        koopman.hyper.validate();
        earlywarn.hyper.forest.validate();
        if (earlywarn.end_day_min < koopman.hyper.window_days - 1)
            throw ConfigError("earlywarn.end_day_min: must be >= koopman.k - 1");
        if (earlywarn.end_day_max < earlywarn.end_day_min)
            throw ConfigError("earlywarn.end_day_max: must be >= end_day_min");
        if (earlywarn.hyper.features.forecast_horizon != koopman.hyper.horizon)
            throw ConfigError("earlywarn.features.forecast_horizon: must equal koopman.h");
        if (intervention.cases < 1) throw ConfigError("intervention.cases: must be >= 1");
    }
};

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    j["sim"] = to_json(c.sim);
    nlohmann::ordered_json sweep;
    sweep["s_lo"] = c.sweep.s_lo;
    sweep["s_hi_values"] = c.sweep.s_hi_values;
    sweep["seeds_per_value"] = c.sweep.seeds_per_value;
    sweep["master_seed"] = c.sweep.master_seed;
    sweep["split_ratios"] = c.sweep.split_ratios;
    sweep["split_seed"] = c.sweep.split_seed;
    j["sweep"] = std::move(sweep);
    nlohmann::ordered_json koop;
    koop["k"] = c.koopman.hyper.window_days;
    koop["h"] = c.koopman.hyper.horizon;
    koop["latent_dim"] = c.koopman.hyper.latent_dim;
    koop["hidden_width"] = c.koopman.hyper.hidden_width;
    koop["weights"] = {{"rec", c.koopman.hyper.w_rec},
                       {"lin", c.koopman.hyper.w_lin},
                       {"pred", c.koopman.hyper.w_pred},
                       {"ar", c.koopman.hyper.w_ar},
                       {"cls", c.koopman.hyper.w_cls}};
    koop["learning_rate"] = c.koopman.hyper.learning_rate;
    koop["batch_size"] = c.koopman.hyper.batch_size;
    koop["epochs"] = c.koopman.hyper.epochs;
    koop["mask_padded"] = c.koopman.hyper.mask_padded;
    koop["seed"] = c.koopman.hyper.seed;
    j["koopman"] = std::move(koop);
    nlohmann::ordered_json ew;
    ew["n_trees"] = c.earlywarn.hyper.forest.n_trees;
    ew["min_leaf"] = c.earlywarn.hyper.forest.min_leaf;
    ew["seed"] = c.earlywarn.hyper.seed;
    ew["threshold"] = c.earlywarn.hyper.threshold;
    ew["include_end_day"] = c.earlywarn.hyper.features.include_end_day;
    ew["end_day_min"] = c.earlywarn.end_day_min;
    ew["end_day_max"] = c.earlywarn.end_day_max;
    j["earlywarn"] = std::move(ew);
    nlohmann::ordered_json iv;
    iv["strategy"] = c.intervention.candidates.strategy == CandidateStrategy::ContactRanked
                         ? "contact-ranked"
                         : "exhaustive";
    iv["k_agents"] = c.intervention.candidates.k_agents;
    iv["day_min"] = c.intervention.candidates.day_min;
    iv["day_max"] = c.intervention.candidates.day_max;
    iv["criterion"] =
        c.intervention.criterion == InterventionCriterion::AttackRate ? "attack_rate" : "peak";
    iv["cases"] = c.intervention.cases;
    iv["min_score"] = c.intervention.min_score;
    j["intervention"] = std::move(iv);
    j["paths"] = {{"out_dir", c.paths.out_dir}};
    return j;
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        if (j.contains("sim")) c.sim = sim_config_from_json(j.at("sim"));
        if (j.contains("sweep")) {
            const auto& s = j.at("sweep");
            if (s.contains("s_lo")) c.sweep.s_lo = s.at("s_lo").get<double>();
            if (s.contains("s_hi_values"))
                c.sweep.s_hi_values = s.at("s_hi_values").get<std::vector<double>>();
            if (s.contains("seeds_per_value"))
                c.sweep.seeds_per_value = s.at("seeds_per_value").get<int>();
            if (s.contains("master_seed"))
                c.sweep.master_seed = s.at("master_seed").get<std::uint64_t>();
            if (s.contains("split_ratios"))
                c.sweep.split_ratios = s.at("split_ratios").get<std::array<double, 3>>();
            if (s.contains("split_seed")) c.sweep.split_seed = s.at("split_seed").get<std::uint64_t>();
        }
        if (j.contains("koopman")) {
            const auto& k = j.at("koopman");
            auto& h = c.koopman.hyper;
            if (k.contains("k")) h.window_days = k.at("k").get<int>();
            if (k.contains("h")) h.horizon = k.at("h").get<int>();
            if (k.contains("latent_dim")) h.latent_dim = k.at("latent_dim").get<int>();
            if (k.contains("hidden_width")) h.hidden_width = k.at("hidden_width").get<int>();
            if (k.contains("weights")) {
                const auto& w = k.at("weights");
                if (w.contains("rec")) h.w_rec = w.at("rec").get<double>();
                if (w.contains("lin")) h.w_lin = w.at("lin").get<double>();
                if (w.contains("pred")) h.w_pred = w.at("pred").get<double>();
                if (w.contains("ar")) h.w_ar = w.at("ar").get<double>();
                if (w.contains("cls")) h.w_cls = w.at("cls").get<double>();
            }
            if (k.contains("learning_rate")) h.learning_rate = k.at("learning_rate").get<double>();
            if (k.contains("batch_size")) h.batch_size = k.at("batch_size").get<int>();
            if (k.contains("epochs")) h.epochs = k.at("epochs").get<int>();
            if (k.contains("mask_padded")) h.mask_padded = k.at("mask_padded").get<bool>();
            if (k.contains("seed")) h.seed = k.at("seed").get<std::uint64_t>();
        }
        if (j.contains("earlywarn")) {
            const auto& e = j.at("earlywarn");
            if (e.contains("n_trees")) c.earlywarn.hyper.forest.n_trees = e.at("n_trees").get<int>();
            if (e.contains("min_leaf")) c.earlywarn.hyper.forest.min_leaf = e.at("min_leaf").get<int>();
            if (e.contains("seed")) c.earlywarn.hyper.seed = e.at("seed").get<std::uint64_t>();
            if (e.contains("threshold")) c.earlywarn.hyper.threshold = e.at("threshold").get<double>();
            if (e.contains("include_end_day"))
                c.earlywarn.hyper.features.include_end_day = e.at("include_end_day").get<bool>();
            if (e.contains("end_day_min")) c.earlywarn.end_day_min = e.at("end_day_min").get<int>();
            if (e.contains("end_day_max")) c.earlywarn.end_day_max = e.at("end_day_max").get<int>();
        }
        if (j.contains("intervention")) {
            const auto& i = j.at("intervention");
            if (i.contains("strategy"))
                c.intervention.candidates.strategy =
                    candidate_strategy_from_string(i.at("strategy").get<std::string>());
            if (i.contains("k_agents")) c.intervention.candidates.k_agents = i.at("k_agents").get<int>();
            if (i.contains("day_min")) c.intervention.candidates.day_min = i.at("day_min").get<int>();
            if (i.contains("day_max")) c.intervention.candidates.day_max = i.at("day_max").get<int>();
            if (i.contains("criterion"))
                c.intervention.criterion = criterion_from_string(i.at("criterion").get<std::string>());
            if (i.contains("cases")) c.intervention.cases = i.at("cases").get<int>();
            if (i.contains("min_score")) c.intervention.min_score = i.at("min_score").get<double>();
        }
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            if (p.contains("out_dir")) c.paths.out_dir = p.at("out_dir").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    // keep the feature horizon tied to the koopman horizon unless overridden
    c.earlywarn.hyper.features.forecast_horizon = c.koopman.hyper.horizon;
    return c;
}

// "block.field=value" (nested via dots); the value is parsed as JSON when
// possible and as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "': expected key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(value_text, nullptr, false);
    if (value.is_discarded()) value = value_text;

    nlohmann::json* cursor = &doc;
    std::size_t begin = 0;
    while (true) {
        const auto dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
        if (key.empty()) throw ConfigError("override '" + assignment + "': empty path segment");
        if (dot == std::string::npos) {
            (*cursor)[key] = value;
            break;
        }
        cursor = &(*cursor)[key];
        begin = dot + 1;
    }
}

} // namespace epiwarn
