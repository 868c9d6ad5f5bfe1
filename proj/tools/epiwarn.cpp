// epiwarn: deterministic epidemic simulation with a Koopman + random-forest
// early-warning pipeline and counterfactual quarantine search.
//
// Subcommands: simulate, sweep, calibrate, train-koopman, train-ew, eval,
// intervene, report. See README.md for the pipeline walkthrough.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epiwarn/dataset.hpp"
#include "epiwarn/earlywarn.hpp"
#include "epiwarn/intervention.hpp"
#include "epiwarn/koopman.hpp"
#include "epiwarn/pipeline.hpp"
#include "epiwarn/svg.hpp"
#include "epiwarn/version.hpp"

namespace fs = std::filesystem;
using namespace epiwarn;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

PipelineConfig load_pipeline_config(const CommonArgs& args) {
    nlohmann::json doc = nlohmann::json::object();
    if (!args.config_path.empty()) doc = load_json_file(args.config_path);
    for (const std::string& ov : args.overrides) apply_override(doc, ov);
    PipelineConfig cfg = pipeline_config_from_json(doc);
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    const char* env_config = std::getenv("EPIWARN_CONFIG");
    if (env_config) args.config_path = env_config;
    cmd->add_option("--config", args.config_path, "pipeline config JSON (default: $EPIWARN_CONFIG)");
    cmd->add_option("--set", args.overrides, "override config fields, e.g. --set sim.seed=9")
        ->take_all();
}

// Every command drops a provenance file: config echo, overrides, inputs.
// Deterministic contents only.
void write_provenance(const fs::path& out_dir, const std::string& command,
                      const PipelineConfig& cfg, const CommonArgs& args,
                      const nlohmann::ordered_json& inputs) {
    nlohmann::ordered_json j;
    j["tool"] = "epiwarn";
    j["version"] = kVersion;
    j["command"] = command;
    j["inputs"] = inputs;
    j["overrides"] = args.overrides;
    j["config"] = to_json(cfg);
    write_json_file(out_dir / "provenance.json", j);
}

Dataset open_dataset(const std::string& data_dir) {
    const fs::path manifest = fs::path(data_dir) / "manifest.json";
    if (!fs::exists(manifest))
        throw MissingArtifactError("missing sweep manifest: " + manifest.string());
    return read_manifest(manifest);
}

std::vector<Window> collect_windows(const Dataset& ds, const std::vector<std::string>& run_ids,
                                    int k, int end_day_min, int end_day_max) {
    std::vector<Window> out;
    for (const std::string& id : run_ids) {
        const auto it = std::find_if(ds.runs.begin(), ds.runs.end(),
                                     [&](const RunRecord& r) { return r.run_id == id; });
        if (it == ds.runs.end()) throw DataError("unknown run id in split: " + id);
        const auto days = load_run_days(ds, *it);
        auto windows = extract_windows(*it, days, k, end_day_min, end_day_max, ds.spec.s_lo);
        out.insert(out.end(), windows.begin(), windows.end());
    }
    return out;
}

SimConfig run_config_from_record(const Dataset& ds, const RunRecord& run) {
    SimConfig c = ds.spec.base_config;
    c.susceptibility_lo = ds.spec.s_lo;
    c.susceptibility_hi = run.s_hi;
    c.seed = run.seed;
    return c;
}

nlohmann::ordered_json metrics_to_json(const BinaryMetrics& m, std::int64_t count) {
    nlohmann::ordered_json j;
    j["count"] = count;
    j["accuracy"] = m.accuracy;
    if (m.roc_auc)
        j["roc_auc"] = *m.roc_auc;
    else
        j["roc_auc"] = nullptr;
    if (m.avg_precision)
        j["average_precision"] = *m.avg_precision;
    else
        j["average_precision"] = nullptr;
    j["confusion"] = {{"tn", m.confusion.tn},
                      {"fp", m.confusion.fp},
                      {"fn", m.confusion.fn},
                      {"tp", m.confusion.tp}};
    return j;
}

int cmd_simulate(const CommonArgs& args, std::optional<std::uint64_t> seed,
                 const std::string& out_dir) {
    PipelineConfig cfg = load_pipeline_config(args);
    if (seed) cfg.sim.seed = *seed;
    const fs::path out = out_dir.empty() ? fs::path(cfg.paths.out_dir) / "simulate" : fs::path(out_dir);
    fs::create_directories(out);
    const Trajectory traj = run_simulation(cfg.sim);
    write_trajectory_csv(out / "trajectory.csv", traj);
    nlohmann::ordered_json oj = outcome_to_json(traj.outcome);
    oj["recorded_days"] = traj.days.size();
    write_json_file(out / "outcome.json", oj);
    write_provenance(out, "simulate", cfg, args, {{"seed", cfg.sim.seed}});
    std::cout << "simulate: " << traj.days.size() << " days, attack_rate "
              << traj.outcome.attack_rate << ", label " << traj.outcome.label << "\n";
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& out_dir) {
    const PipelineConfig cfg = load_pipeline_config(args);
    const fs::path out = out_dir.empty() ? fs::path(cfg.paths.out_dir) / "sweep" : fs::path(out_dir);
    const Dataset ds = generate_sweep(cfg.make_sweep_spec(), out);
    write_provenance(out, "sweep", cfg, args, {{"master_seed", cfg.sweep.master_seed}});
    int outbreaks = 0;
    for (const RunRecord& r : ds.runs) outbreaks += r.outcome.label;
    std::cout << "sweep: " << ds.runs.size() << " runs (" << outbreaks << " outbreaks, midband "
              << midband_fraction(ds.runs) << ") -> " << out.string() << "\n";
    return 0;
}

int cmd_calibrate(const CommonArgs& args, int probe_seeds, double band_lo, double band_hi,
                  std::uint64_t probe_master, const std::string& out_dir) {
    const PipelineConfig cfg = load_pipeline_config(args);
    const fs::path out =
        out_dir.empty() ? fs::path(cfg.paths.out_dir) / "calibrate" : fs::path(out_dir);
    fs::create_directories(out);
    const CalibrationResult result =
        calibrate_threshold(cfg.sim, probe_seeds, {band_lo, band_hi}, probe_master);
    nlohmann::ordered_json j;
    j["theta_tr"] = result.theta;
    j["outbreak_fraction"] = result.outbreak_fraction;
    j["probe_seeds"] = probe_seeds;
    j["band"] = {band_lo, band_hi};
    nlohmann::ordered_json probes = nlohmann::ordered_json::array();
    for (const CalibrationProbe& p : result.probes)
        probes.push_back({{"theta", p.theta}, {"fraction", p.outbreak_fraction}});
    j["probes"] = std::move(probes);
    write_json_file(out / "calibration.json", j);
    write_provenance(out, "calibrate", cfg, args, {{"probe_master_seed", probe_master}});
    std::cout << "calibrate: theta_tr " << result.theta << " (outbreak fraction "
              << result.outbreak_fraction << ")\n";
    return 0;
}

int cmd_train_koopman(const CommonArgs& args, const std::string& data_dir,
                      const std::string& out_dir) {
    const PipelineConfig cfg = load_pipeline_config(args);
    const Dataset ds = open_dataset(data_dir);
    const fs::path out =
        out_dir.empty() ? fs::path(cfg.paths.out_dir) / "koopman" : fs::path(out_dir);
    fs::create_directories(out);
    const SplitIds split = split_runs(ds.runs, cfg.sweep.split_ratios, cfg.sweep.split_seed);
    const auto& h = cfg.koopman.hyper;
    const auto train_set = build_koopman_samples(ds, split.train, h.window_days, h.horizon,
                                                 cfg.earlywarn.end_day_min, cfg.earlywarn.end_day_max);
    const auto val_set = build_koopman_samples(ds, split.val, h.window_days, h.horizon,
                                               cfg.earlywarn.end_day_min, cfg.earlywarn.end_day_max);
    const KoopmanTrainResult result =
        train_koopman(train_set, val_set, h, ds.spec.base_config.n_agents);
    save_koopman_model(out / "koopman.json", result.model);
    write_json_file(out / "train_report.json", train_report_to_json(result.report));
    write_provenance(out, "train-koopman", cfg, args,
                     {{"data", data_dir},
                      {"train_windows", train_set.size()},
                      {"val_windows", val_set.size()}});
    const EpochStats& sel =
        result.report.val_epochs[static_cast<std::size_t>(result.report.selected_epoch)];
    std::cout << "train-koopman: " << train_set.size() << " train windows, selected epoch "
              << result.report.selected_epoch << ", val total " << sel.total << " (initial "
              << result.report.val_epochs[0].total << ")\n";
    return 0;
}

int cmd_train_ew(const CommonArgs& args, const std::string& data_dir,
                 const std::string& koopman_path, const std::string& out_dir) {
    const PipelineConfig cfg = load_pipeline_config(args);
    const Dataset ds = open_dataset(data_dir);
    const fs::path out = out_dir.empty() ? fs::path(cfg.paths.out_dir) / "earlywarn" : fs::path(out_dir);
    fs::create_directories(out);
    std::optional<KoopmanModel> model;
    if (!koopman_path.empty()) model = load_koopman_model(koopman_path);
    const SplitIds split = split_runs(ds.runs, cfg.sweep.split_ratios, cfg.sweep.split_seed);
    const auto windows = collect_windows(ds, split.train, cfg.koopman.hyper.window_days,
                                         cfg.earlywarn.end_day_min, cfg.earlywarn.end_day_max);
    const ForestModel forest =
        train_early_warning(windows, model ? &*model : nullptr, cfg.earlywarn.hyper);
    save_forest(out / "forest.json", forest);
    write_provenance(out, "train-ew", cfg, args,
                     {{"data", data_dir},
                      {"koopman", koopman_path},
                      {"train_windows", windows.size()}});
    std::cout << "train-ew: " << windows.size() << " windows, " << forest.hyper.n_trees
              << " trees, " << forest.n_features << " features\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& data_dir, const std::string& koopman_path,
             const std::string& forest_path, const std::string& out_dir) {
    const PipelineConfig cfg = load_pipeline_config(args);
    const Dataset ds = open_dataset(data_dir);
    const fs::path out = out_dir.empty() ? fs::path(cfg.paths.out_dir) / "eval" : fs::path(out_dir);
    fs::create_directories(out);
    const KoopmanModel model = load_koopman_model(koopman_path);
    const SplitIds split = split_runs(ds.runs, cfg.sweep.split_ratios, cfg.sweep.split_seed);
    const auto windows = collect_windows(ds, split.test, cfg.koopman.hyper.window_days,
                                         cfg.earlywarn.end_day_min, cfg.earlywarn.end_day_max);
    const KoopmanEval kev = evaluate_koopman(model, windows, cfg.earlywarn.hyper.threshold);
    nlohmann::ordered_json kj;
    kj["window_level"] = metrics_to_json(kev.window_metrics, kev.window_count);
    kj["run_level"] = metrics_to_json(kev.run_metrics, kev.run_count);
    write_json_file(out / "koopman_eval.json", kj);
    std::cout << "eval: koopman window auc "
              << (kev.window_metrics.roc_auc ? std::to_string(*kev.window_metrics.roc_auc) : "n/a")
              << ", run auc "
              << (kev.run_metrics.roc_auc ? std::to_string(*kev.run_metrics.roc_auc) : "n/a")
              << " over " << kev.window_count << " windows / " << kev.run_count << " runs\n";

    if (!forest_path.empty()) {
        const ForestModel forest = load_forest(forest_path);
        const EvalReport report = evaluate_ew(forest, &model, windows,
                                              cfg.earlywarn.hyper.features,
                                              cfg.earlywarn.hyper.threshold);
        write_json_file(out / "ew_metrics.json", eval_report_to_json(report));
        write_text_file(out / "ew_per_end_day.csv", per_end_day_csv(report));
        write_text_file(out / "ew_family_importance.csv", family_importance_csv(report));
        std::cout << "eval: forest accuracy " << report.overall.accuracy << ", auc "
                  << (report.overall.roc_auc ? std::to_string(*report.overall.roc_auc) : "n/a")
                  << "\n";
    }
    write_provenance(out, "eval", cfg, args,
                     {{"data", data_dir}, {"koopman", koopman_path}, {"forest", forest_path}});
    return 0;
}

std::string classify_case(const InterventionReport& r) {
    if (r.prevented) return "prevented";
    if (r.delta_rho > 0.0 || r.delta_peak > 0) return "reduced";
    return "null";
}

int cmd_intervene(const CommonArgs& args, const std::string& data_dir,
                  const std::string& koopman_path, const std::string& forest_path, int cases_override,
                  const std::string& out_dir) {
    const PipelineConfig cfg = load_pipeline_config(args);
    const Dataset ds = open_dataset(data_dir);
    const fs::path out =
        out_dir.empty() ? fs::path(cfg.paths.out_dir) / "intervene" : fs::path(out_dir);
    fs::create_directories(out);
    if (koopman_path.empty() && forest_path.empty())
        throw ConfigError("intervene: need --koopman and/or --forest for run selection");
    std::optional<KoopmanModel> model;
    if (!koopman_path.empty()) model = load_koopman_model(koopman_path);
    std::optional<ForestModel> forest;
    if (!forest_path.empty()) forest = load_forest(forest_path);
    const int wanted = cases_override > 0 ? cases_override : cfg.intervention.cases;

    // last-early-window outbreak score per run
    struct ScoredRun {
        const RunRecord* run;
        double score;
    };
    std::vector<ScoredRun> scored;
    for (const RunRecord& run : ds.runs) {
        const auto days = load_run_days(ds, run);
        const auto windows = extract_windows(run, days, cfg.koopman.hyper.window_days,
                                             cfg.earlywarn.end_day_min, cfg.earlywarn.end_day_max,
                                             ds.spec.s_lo);
        if (windows.empty()) continue;
        const Window& last = windows.back();
        double score = 0.0;
        if (forest) {
            const auto x = build_features(last, model ? &*model : nullptr,
                                          cfg.earlywarn.hyper.features);
            score = predict_proba(*forest, x);
        } else {
            score = window_outbreak_probability(*model, last);
        }
        scored.push_back({&run, score});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const ScoredRun& a, const ScoredRun& b) {
        return a.score != b.score ? a.score > b.score : a.run->run_id < b.run->run_id;
    });

    nlohmann::ordered_json case_list = nlohmann::ordered_json::array();
    int prevented = 0, reduced = 0, nulls = 0, searched = 0;
    for (const ScoredRun& sr : scored) {
        if (searched >= wanted) break;
        if (sr.score < cfg.intervention.min_score) break; // scores only fall from here
        if (sr.run->outcome.label != 1) continue; // verified against the true baseline outcome
        const SimConfig run_cfg = run_config_from_record(ds, *sr.run);
        const PopulationState init = init_population(run_cfg);
        const Trajectory baseline = run_simulation(run_cfg, init);
        if (baseline.outcome.label != sr.run->outcome.label)
            throw DataError("intervene: stored outcome does not match replay for " + sr.run->run_id);
        const auto candidates = enumerate_candidates(run_cfg, init, cfg.intervention.candidates);
        const SearchResult result = search_best(run_cfg, init, baseline.outcome, candidates,
                                                cfg.intervention.criterion);
        const Trajectory best_cf = run_counterfactual(run_cfg, init, result.best);

        const fs::path case_dir = out / ("case_" + sr.run->run_id);
        fs::create_directories(case_dir);
        write_trajectory_csv(case_dir / "baseline.csv", baseline);
        write_trajectory_csv(case_dir / "counterfactual.csv", best_cf);
        nlohmann::ordered_json cj;
        cj["run_id"] = sr.run->run_id;
        cj["score"] = sr.score;
        cj["candidates"] = candidates.size();
        cj["baseline"] = outcome_to_json(baseline.outcome);
        cj["best"] = intervention_report_to_json(result.ranked.front());
        cj["outcome_type"] = classify_case(result.ranked.front());
        nlohmann::ordered_json table = nlohmann::ordered_json::array();
        for (const InterventionReport& r : result.ranked)
            table.push_back(intervention_report_to_json(r));
        cj["ranked"] = std::move(table);
        write_json_file(case_dir / "report.json", cj);

        const std::string kind = classify_case(result.ranked.front());
        prevented += kind == "prevented";
        reduced += kind == "reduced";
        nulls += kind == "null";
        ++searched;
        nlohmann::ordered_json summary;
        summary["run_id"] = sr.run->run_id;
        summary["case_dir"] = case_dir.filename().string();
        summary["score"] = sr.score;
        summary["best"] = intervention_report_to_json(result.ranked.front());
        summary["outcome_type"] = kind;
        case_list.push_back(std::move(summary));
        std::cout << "intervene: " << sr.run->run_id << " best (agent " << result.best.agent
                  << ", day " << result.best.day << ") delta_rho "
                  << result.ranked.front().delta_rho << " -> " << kind << "\n";
    }
    if (searched == 0)
        throw DataError("intervene: no baseline-outbreak runs above the score gate");
    nlohmann::ordered_json j;
    j["cases"] = std::move(case_list);
    j["searched"] = searched;
    j["prevented"] = prevented;
    j["reduced"] = reduced;
    j["null"] = nulls;
    write_json_file(out / "intervene_report.json", j);
    write_provenance(out, "intervene", cfg, args,
                     {{"data", data_dir}, {"koopman", koopman_path}, {"forest", forest_path}});
    std::cout << "intervene: " << searched << " cases (" << prevented << " prevented, " << reduced
              << " reduced, " << nulls << " null) -> " << out.string() << "\n";
    return 0;
}

int cmd_report(const std::string& case_dir, const std::string& out_file) {
    const fs::path dir(case_dir);
    const fs::path report_path = dir / "report.json";
    if (!fs::exists(report_path))
        throw MissingArtifactError("missing case report: " + report_path.string());
    const nlohmann::json rj = load_json_file(report_path);
    const int day = rj.at("best").at("day").get<int>();
    const Trajectory baseline = read_trajectory_csv(dir / "baseline.csv", 0.3);
    const Trajectory cf = read_trajectory_csv(dir / "counterfactual.csv", 0.3);
    ChartSeries base_series{"baseline", "#1f77b4", {}};
    for (const DailyRecord& r : baseline.days) base_series.points.emplace_back(r.day, r.I);
    ChartSeries cf_series{"intervention", "#ff7f0e", {}};
    for (const DailyRecord& r : cf.days) cf_series.points.emplace_back(r.day, r.I);
    const std::string svg =
        line_chart_svg({base_series, cf_series}, static_cast<double>(day), "day",
                       "active infected", "Baseline vs counterfactual");
    const fs::path out = out_file.empty() ? dir / "chart.svg" : fs::path(out_file);
    write_text_file(out, svg);
    std::cout << "report: wrote " << out.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic epidemic simulation, early warning, and counterfactual "
                 "intervention pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("epiwarn ") + kVersion);

    CommonArgs sim_args;
    std::optional<std::uint64_t> sim_seed;
    std::string sim_out;
    auto* simulate = app.add_subcommand("simulate", "run one simulation");
    add_common(simulate, sim_args);
    simulate->add_option("--seed", sim_seed, "override sim.seed");
    simulate->add_option("--out", sim_out, "output directory");

    CommonArgs sweep_args;
    std::string sweep_out;
    auto* sweep = app.add_subcommand("sweep", "generate a boundary-focused sweep dataset");
    add_common(sweep, sweep_args);
    sweep->add_option("--out", sweep_out, "output directory");

    CommonArgs cal_args;
    int probe_seeds = 24;
    double band_lo = 0.3, band_hi = 0.7;
    std::uint64_t probe_master = 4242;
    std::string cal_out;
    auto* calibrate = app.add_subcommand("calibrate", "bisect theta_tr to the near-critical band");
    add_common(calibrate, cal_args);
    calibrate->add_option("--probe-seeds", probe_seeds, "probe seeds per theta (>= 20)");
    calibrate->add_option("--band-lo", band_lo, "target outbreak-fraction band lower edge");
    calibrate->add_option("--band-hi", band_hi, "target outbreak-fraction band upper edge");
    calibrate->add_option("--probe-seed", probe_master, "master seed for probe runs");
    calibrate->add_option("--out", cal_out, "output directory");

    CommonArgs tk_args;
    std::string tk_data, tk_out;
    auto* train_k = app.add_subcommand("train-koopman", "train the Koopman latent model");
    add_common(train_k, tk_args);
    train_k->add_option("--data", tk_data, "sweep output directory")->required();
    train_k->add_option("--out", tk_out, "output directory");

    CommonArgs te_args;
    std::string te_data, te_koopman, te_out;
    auto* train_e = app.add_subcommand("train-ew", "train the early-warning random forest");
    add_common(train_e, te_args);
    train_e->add_option("--data", te_data, "sweep output directory")->required();
    train_e->add_option("--koopman", te_koopman, "koopman model file (optional)");
    train_e->add_option("--out", te_out, "output directory");

    CommonArgs ev_args;
    std::string ev_data, ev_koopman, ev_forest, ev_out;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate models on the held-out test split");
    add_common(eval_cmd, ev_args);
    eval_cmd->add_option("--data", ev_data, "sweep output directory")->required();
    eval_cmd->add_option("--koopman", ev_koopman, "koopman model file")->required();
    eval_cmd->add_option("--forest", ev_forest, "forest model file (optional)");
    eval_cmd->add_option("--out", ev_out, "output directory");

    CommonArgs iv_args;
    std::string iv_data, iv_koopman, iv_forest, iv_out;
    int iv_cases = 0;
    auto* intervene = app.add_subcommand("intervene", "counterfactual quarantine search");
    add_common(intervene, iv_args);
    intervene->add_option("--data", iv_data, "sweep output directory")->required();
    intervene->add_option("--koopman", iv_koopman, "koopman model file");
    intervene->add_option("--forest", iv_forest, "forest model file");
    intervene->add_option("--cases", iv_cases, "baseline-outbreak runs to search");
    intervene->add_option("--out", iv_out, "output directory");

    std::string rp_case, rp_out;
    auto* report = app.add_subcommand("report", "emit an SVG chart for an intervention case");
    report->add_option("--case", rp_case, "case directory from intervene")->required();
    report->add_option("--out", rp_out, "output SVG path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_args, sim_seed, sim_out);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_out);
        if (calibrate->parsed())
            return cmd_calibrate(cal_args, probe_seeds, band_lo, band_hi, probe_master, cal_out);
        if (train_k->parsed()) return cmd_train_koopman(tk_args, tk_data, tk_out);
        if (train_e->parsed()) return cmd_train_ew(te_args, te_data, te_koopman, te_out);
        if (eval_cmd->parsed()) return cmd_eval(ev_args, ev_data, ev_koopman, ev_forest, ev_out);
        if (intervene->parsed())
            return cmd_intervene(iv_args, iv_data, iv_koopman, iv_forest, iv_cases, iv_out);
        if (report->parsed()) return cmd_report(rp_case, rp_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    }
    return 1;
}
