#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pdupower/experiments.hpp"
#include "pdupower/io.hpp"

namespace pdupower {

// Full pipeline configuration. A run is reproducible from this snapshot:
// (config, seed) determines every artifact byte.
struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 1;  // 0 = hardware concurrency
    FleetConfig fleet;
    LoadScenario scenario;
    SimOptions simulation;
    AnomalyConfig anomalies;
    CleaningConfig cleaning;
    ForestParams forest;
    MachineSamplingConfig machine_sampling;
    PduSamplingConfig pdu_sampling;
    int perpdu_window_days = kTrainingWindowDays;
    int perpdu_min_regime_samples = kMinRegimeSamples;
    int train_week_start = 15;  // Unified models' training week
    int eval_week_start = 22;   // evaluation week, disjoint from training
    int eval_week_days = 7;
    int wupe_lookback_days = 90;
    int holdout_n = 3;
    int power_drop_day = 29;
    int power_drop_start_period = 190;
    int power_drop_end_period = 209;
    std::vector<double> power_drop_tier_fractions = {0.2, 0.7, 0.95};

    [[nodiscard]] int resolved_threads() const {
        return threads == 0 ? default_thread_count() : threads;
    }
};

inline RunConfig default_run_config() {
    RunConfig cfg;
    cfg.simulation.n_days = 30;
    cfg.simulation.meter_noise_sigma = 0.02;
    return cfg;
}

// Folds the run seed and the shared training week into the per-module
// configs, so a RunConfig behaves the same whether it was loaded from JSON
// or built in code.
inline RunConfig normalized(RunConfig cfg) {
    cfg.fleet.seed = cfg.seed;
    cfg.simulation.seed = cfg.seed;
    cfg.forest.seed = cfg.seed;
    cfg.machine_sampling.seed = cfg.seed;
    cfg.pdu_sampling.seed = cfg.seed;
    cfg.machine_sampling.week_start_day = cfg.train_week_start;
    cfg.pdu_sampling.week_start_day = cfg.train_week_start;
    return cfg;
}

// ---------------------------------------------------------------------------
// Config JSON

// `threads` is a runtime resource knob, deliberately left out of the
// serialized form: artifacts and run-directory hashes must not depend on it.
inline json run_config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["fleet"] = {{"n_clusters", c.fleet.n_clusters},
                  {"pdus_per_cluster", c.fleet.pdus_per_cluster},
                  {"machines_per_pdu", c.fleet.machines_per_pdu},
                  {"compute_fraction", c.fleet.compute_fraction},
                  {"storage_fraction", c.fleet.storage_fraction},
                  {"accelerator_fraction", c.fleet.accelerator_fraction}};
    json scenario = {{"mean_low", c.scenario.mean_low},
                     {"mean_high", c.scenario.mean_high},
                     {"amplitude_low", c.scenario.amplitude_low},
                     {"amplitude_high", c.scenario.amplitude_high},
                     {"dedicated_amplitude_factor", c.scenario.dedicated_amplitude_factor},
                     {"utilization_noise_sigma", c.scenario.utilization_noise_sigma},
                     {"common_sigma", c.scenario.common_sigma},
                     {"common_phi", c.scenario.common_phi}};
    if (c.scenario.drop_window) {
        const auto& d = *c.scenario.drop_window;
        scenario["drop_window"] = {{"day", d.day},
                                   {"start_period", d.start_period},
                                   {"end_period", d.end_period},
                                   {"tier_fractions", d.tier_fractions},
                                   {"stagger_periods", d.stagger_periods}};
    }
    j["scenario"] = std::move(scenario);
    j["simulation"] = {{"n_days", c.simulation.n_days},
                       {"day_start", c.simulation.day_start},
                       {"meter_noise_sigma", c.simulation.meter_noise_sigma},
                       {"meter_noise_phi", c.simulation.meter_noise_phi},
                       {"overhead_setpoint_fraction", c.simulation.overhead_setpoint_fraction},
                       {"overhead_floor_fraction", c.simulation.overhead_floor_fraction},
                       {"overhead_ceil_fraction", c.simulation.overhead_ceil_fraction},
                       {"overhead_reversion", c.simulation.overhead_reversion},
                       {"overhead_step_fraction", c.simulation.overhead_step_fraction}};
    j["anomalies"] = {{"n_gaps", c.anomalies.n_gaps},
                      {"gap_len", c.anomalies.gap_len},
                      {"n_spikes", c.anomalies.n_spikes},
                      {"spike_magnitude", c.anomalies.spike_magnitude},
                      {"n_maintenance", c.anomalies.n_maintenance},
                      {"maintenance_len", c.anomalies.maintenance_len},
                      {"maintenance_factor", c.anomalies.maintenance_factor}};
    j["cleaning"] = {{"jump_threshold", c.cleaning.jump_threshold},
                     {"rate_ratio", c.cleaning.rate_ratio},
                     {"median_fraction", c.cleaning.median_fraction},
                     {"max_gap", c.cleaning.max_gap},
                     {"ewma_alpha", c.cleaning.ewma_alpha}};
    j["forest"] = {{"n_trees", c.forest.n_trees},
                   {"max_depth", c.forest.max_depth},
                   {"min_samples_leaf", c.forest.min_samples_leaf},
                   {"features_per_split", c.forest.features_per_split},
                   {"bootstrap", c.forest.bootstrap}};
    j["machine_sampling"] = {{"per_group_target", c.machine_sampling.per_group_target}};
    j["pdu_sampling"] = {{"max_rows", c.pdu_sampling.max_rows}};
    j["per_pdu"] = {{"window_days", c.perpdu_window_days},
                    {"min_regime_samples", c.perpdu_min_regime_samples}};
    j["evaluation"] = {{"train_week_start", c.train_week_start},
                       {"eval_week_start", c.eval_week_start},
                       {"eval_week_days", c.eval_week_days},
                       {"wupe_lookback_days", c.wupe_lookback_days}};
    j["holdout"] = {{"n_holdout", c.holdout_n}};
    j["power_drop"] = {{"day", c.power_drop_day},
                       {"start_period", c.power_drop_start_period},
                       {"end_period", c.power_drop_end_period},
                       {"tier_fractions", c.power_drop_tier_fractions}};
    return j;
}

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c = default_run_config();
    try {
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        if (j.contains("fleet")) {
            const auto& f = j.at("fleet");
            c.fleet.n_clusters = f.value("n_clusters", c.fleet.n_clusters);
            c.fleet.pdus_per_cluster = f.value("pdus_per_cluster", c.fleet.pdus_per_cluster);
            c.fleet.machines_per_pdu = f.value("machines_per_pdu", c.fleet.machines_per_pdu);
            c.fleet.compute_fraction = f.value("compute_fraction", c.fleet.compute_fraction);
            c.fleet.storage_fraction = f.value("storage_fraction", c.fleet.storage_fraction);
            c.fleet.accelerator_fraction =
                f.value("accelerator_fraction", c.fleet.accelerator_fraction);
        }
        if (j.contains("scenario")) {
            const auto& s = j.at("scenario");
            c.scenario.mean_low = s.value("mean_low", c.scenario.mean_low);
            c.scenario.mean_high = s.value("mean_high", c.scenario.mean_high);
            c.scenario.amplitude_low = s.value("amplitude_low", c.scenario.amplitude_low);
            c.scenario.amplitude_high = s.value("amplitude_high", c.scenario.amplitude_high);
            c.scenario.dedicated_amplitude_factor =
                s.value("dedicated_amplitude_factor", c.scenario.dedicated_amplitude_factor);
            c.scenario.utilization_noise_sigma =
                s.value("utilization_noise_sigma", c.scenario.utilization_noise_sigma);
            c.scenario.common_sigma = s.value("common_sigma", c.scenario.common_sigma);
            c.scenario.common_phi = s.value("common_phi", c.scenario.common_phi);
            if (s.contains("drop_window")) {
                const auto& d = s.at("drop_window");
                DropWindow w;
                w.day = d.value("day", w.day);
                w.start_period = d.value("start_period", w.start_period);
                w.end_period = d.value("end_period", w.end_period);
                w.tier_fractions = d.value("tier_fractions", w.tier_fractions);
                w.stagger_periods = d.value("stagger_periods", w.stagger_periods);
                c.scenario.drop_window = w;
            }
        }
        if (j.contains("simulation")) {
            const auto& s = j.at("simulation");
            c.simulation.n_days = s.value("n_days", c.simulation.n_days);
            c.simulation.day_start = s.value("day_start", c.simulation.day_start);
            c.simulation.meter_noise_sigma =
                s.value("meter_noise_sigma", c.simulation.meter_noise_sigma);
            c.simulation.meter_noise_phi = s.value("meter_noise_phi", c.simulation.meter_noise_phi);
            c.simulation.overhead_setpoint_fraction =
                s.value("overhead_setpoint_fraction", c.simulation.overhead_setpoint_fraction);
            c.simulation.overhead_floor_fraction =
                s.value("overhead_floor_fraction", c.simulation.overhead_floor_fraction);
            c.simulation.overhead_ceil_fraction =
                s.value("overhead_ceil_fraction", c.simulation.overhead_ceil_fraction);
            c.simulation.overhead_reversion =
                s.value("overhead_reversion", c.simulation.overhead_reversion);
            c.simulation.overhead_step_fraction =
                s.value("overhead_step_fraction", c.simulation.overhead_step_fraction);
        }
        if (j.contains("anomalies")) {
            const auto& a = j.at("anomalies");
            c.anomalies.n_gaps = a.value("n_gaps", c.anomalies.n_gaps);
            c.anomalies.gap_len = a.value("gap_len", c.anomalies.gap_len);
            c.anomalies.n_spikes = a.value("n_spikes", c.anomalies.n_spikes);
            c.anomalies.spike_magnitude = a.value("spike_magnitude", c.anomalies.spike_magnitude);
            c.anomalies.n_maintenance = a.value("n_maintenance", c.anomalies.n_maintenance);
            c.anomalies.maintenance_len = a.value("maintenance_len", c.anomalies.maintenance_len);
            c.anomalies.maintenance_factor =
                a.value("maintenance_factor", c.anomalies.maintenance_factor);
        }
        if (j.contains("cleaning")) {
            const auto& cl = j.at("cleaning");
            c.cleaning.jump_threshold = cl.value("jump_threshold", c.cleaning.jump_threshold);
            c.cleaning.rate_ratio = cl.value("rate_ratio", c.cleaning.rate_ratio);
            c.cleaning.median_fraction = cl.value("median_fraction", c.cleaning.median_fraction);
            c.cleaning.max_gap = cl.value("max_gap", c.cleaning.max_gap);
            c.cleaning.ewma_alpha = cl.value("ewma_alpha", c.cleaning.ewma_alpha);
        }
        if (j.contains("forest")) {
            const auto& f = j.at("forest");
            c.forest.n_trees = f.value("n_trees", c.forest.n_trees);
            c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
            c.forest.min_samples_leaf = f.value("min_samples_leaf", c.forest.min_samples_leaf);
            c.forest.features_per_split =
                f.value("features_per_split", c.forest.features_per_split);
            c.forest.bootstrap = f.value("bootstrap", c.forest.bootstrap);
        }
        if (j.contains("machine_sampling"))
            c.machine_sampling.per_group_target = j.at("machine_sampling")
                                                      .value("per_group_target",
                                                             c.machine_sampling.per_group_target);
        if (j.contains("pdu_sampling"))
            c.pdu_sampling.max_rows = j.at("pdu_sampling").value("max_rows", c.pdu_sampling.max_rows);
        if (j.contains("per_pdu")) {
            c.perpdu_window_days = j.at("per_pdu").value("window_days", c.perpdu_window_days);
            c.perpdu_min_regime_samples =
                j.at("per_pdu").value("min_regime_samples", c.perpdu_min_regime_samples);
        }
        if (j.contains("evaluation")) {
            const auto& e = j.at("evaluation");
            c.train_week_start = e.value("train_week_start", c.train_week_start);
            c.eval_week_start = e.value("eval_week_start", c.eval_week_start);
            c.eval_week_days = e.value("eval_week_days", c.eval_week_days);
            c.wupe_lookback_days = e.value("wupe_lookback_days", c.wupe_lookback_days);
        }
        if (j.contains("holdout")) c.holdout_n = j.at("holdout").value("n_holdout", c.holdout_n);
        if (j.contains("power_drop")) {
            const auto& p = j.at("power_drop");
            c.power_drop_day = p.value("day", c.power_drop_day);
            c.power_drop_start_period = p.value("start_period", c.power_drop_start_period);
            c.power_drop_end_period = p.value("end_period", c.power_drop_end_period);
            c.power_drop_tier_fractions = p.value("tier_fractions", c.power_drop_tier_fractions);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed run config: ") + e.what());
    }
    return normalized(c);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json(parse_json_file(path));
}

inline std::string config_hash(const RunConfig& c) {
    return to_hex(fnv1a(run_config_to_json(normalized(c)).dump()));
}

// ---------------------------------------------------------------------------
// Run directory layout

struct RunPaths {
    std::filesystem::path root;

    [[nodiscard]] std::filesystem::path config_snapshot() const { return root / "config_snapshot.json"; }
    [[nodiscard]] std::filesystem::path fleet() const { return root / "fleet.json"; }
    [[nodiscard]] std::filesystem::path raw_machine() const { return root / "telemetry_machine.tsv"; }
    [[nodiscard]] std::filesystem::path raw_pdu() const { return root / "telemetry_pdu.tsv"; }
    [[nodiscard]] std::filesystem::path anomalies() const { return root / "anomalies.json"; }
    [[nodiscard]] std::filesystem::path clean_machine() const { return root / "cleaned_machine.tsv"; }
    [[nodiscard]] std::filesystem::path clean_pdu() const { return root / "cleaned_pdu.tsv"; }
    [[nodiscard]] std::filesystem::path cleaning_report() const { return root / "cleaning_report.json"; }
    [[nodiscard]] std::filesystem::path per_pdu_model(int day) const {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "per_pdu_d%04d.json", day);
        return root / "models" / buf;
    }
    [[nodiscard]] std::filesystem::path unified_machine_model(int week_start) const {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "unified_machine_d%04d.json", week_start);
        return root / "models" / buf;
    }
    [[nodiscard]] std::filesystem::path unified_pdu_model(int week_start) const {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "unified_pdu_d%04d.json", week_start);
        return root / "models" / buf;
    }
    [[nodiscard]] std::filesystem::path predictions(const std::string& kind, int day) const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "predictions_%s_d%04d.tsv", kind.c_str(), day);
        return root / "reports" / buf;
    }
    [[nodiscard]] std::filesystem::path evaluation() const { return root / "reports" / "evaluation.json"; }
    [[nodiscard]] std::filesystem::path cdf_table(const std::string& name) const {
        return root / "reports" / (name + "_cdf.tsv");
    }
    [[nodiscard]] std::filesystem::path power_drop() const { return root / "reports" / "power_drop.json"; }
    [[nodiscard]] std::filesystem::path holdout() const { return root / "reports" / "holdout.json"; }
    [[nodiscard]] std::filesystem::path summary(const std::string& stage) const {
        return root / ("summary_" + stage + ".json");
    }
    [[nodiscard]] std::filesystem::path report_text() const { return root / "reports" / "summary.txt"; }
};

inline std::filesystem::path default_data_dir() {
    const char* env = std::getenv("PDUPOWER_DATA_DIR");
    return env != nullptr && *env != '\0' ? std::filesystem::path(env)
                                          : std::filesystem::path(".");
}

// Runs live under <data_dir>/runs/<config-hash> unless an explicit output
// directory is given.
inline RunPaths resolve_run_dir(const RunConfig& cfg, const std::string& explicit_out = "") {
    if (!explicit_out.empty()) return RunPaths{std::filesystem::path(explicit_out)};
    return RunPaths{default_data_dir() / "runs" / config_hash(cfg)};
}

namespace detail {

inline void write_summary(const RunPaths& paths, const std::string& stage, json body) {
    body["stage"] = stage;
    write_file_atomic(paths.summary(stage), body.dump(1, '\t') + "\n");
}

inline TelemetryDataset load_clean(const RunPaths& paths) {
    if (!std::filesystem::exists(paths.clean_machine()) ||
        !std::filesystem::exists(paths.clean_pdu()))
        throw DataError("missing cleaned telemetry; run the preprocess stage first");
    return load_telemetry(paths.clean_machine(), paths.clean_pdu());
}

inline Fleet load_fleet_artifact(const RunPaths& paths) {
    if (!std::filesystem::exists(paths.fleet()))
        throw DataError("missing fleet.json; run the simulate stage first");
    return fleet_from_json(parse_json_file(paths.fleet()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline void run_simulate(const RunConfig& raw_cfg, const RunPaths& paths) {
    const RunConfig cfg = normalized(raw_cfg);
    const int threads = cfg.resolved_threads();
    Fleet fleet = generate_fleet(cfg.fleet);
    SimOptions sim = cfg.simulation;
    sim.threads = threads;
    TelemetryDataset ds = simulate_telemetry(fleet, cfg.scenario, sim);
    AnomalyLedger ledger;
    if (cfg.anomalies.n_gaps > 0 || cfg.anomalies.n_spikes > 0 || cfg.anomalies.n_maintenance > 0)
        ledger = inject_anomalies(ds, cfg.anomalies, cfg.seed);

    write_file_atomic(paths.config_snapshot(), run_config_to_json(cfg).dump(1, '\t') + "\n");
    write_file_atomic(paths.fleet(), fleet_to_json(fleet).dump(1, '\t') + "\n");
    save_telemetry(ds, paths.raw_machine(), paths.raw_pdu());
    write_file_atomic(paths.anomalies(), anomaly_ledger_to_json(ledger).dump(1, '\t') + "\n");
    detail::write_summary(paths, "simulate",
                          {{"machines", ds.machines.size()},
                           {"pdus", ds.pdus.size()},
                           {"days", ds.n_days},
                           {"machine_samples", ds.machines.size() * ds.samples_per_series()},
                           {"pdu_samples", ds.pdus.size() * ds.samples_per_series()},
                           {"anomaly_points", ledger.total_points()},
                           {"data_fingerprint", to_hex(dataset_fingerprint(ds))}});
}

inline void run_preprocess(const RunConfig& raw_cfg, const RunPaths& paths) {
    const RunConfig cfg = normalized(raw_cfg);
    if (!std::filesystem::exists(paths.raw_machine()) ||
        !std::filesystem::exists(paths.raw_pdu()))
        throw DataError("missing raw telemetry; run the simulate stage first");
    const Fleet fleet = detail::load_fleet_artifact(paths);
    TelemetryDataset ds = load_telemetry(paths.raw_machine(), paths.raw_pdu());
    const CleaningReport report = preprocess_dataset(ds, fleet, cfg.cleaning, cfg.resolved_threads());
    save_telemetry(ds, paths.clean_machine(), paths.clean_pdu());
    write_file_atomic(paths.cleaning_report(), cleaning_report_to_json(report).dump(1, '\t') + "\n");
    detail::write_summary(paths, "preprocess", cleaning_report_to_json(report));
}

inline void run_train_perpdu(const RunConfig& raw_cfg, const RunPaths& paths, int day_from = -1,
                             int day_to = -1) {
    const RunConfig cfg = normalized(raw_cfg);
    const Fleet fleet = detail::load_fleet_artifact(paths);
    const TelemetryDataset ds = detail::load_clean(paths);
    if (day_from < 0) day_from = cfg.eval_week_start - 1;
    if (day_to < 0) day_to = cfg.eval_week_start + cfg.eval_week_days - 2;
    const std::string fingerprint = to_hex(dataset_fingerprint(ds));
    json summary = json::object();
    for (int day = day_from; day <= day_to; ++day) {
        const DailyRetrainResult result = daily_retrain(ds, day, cfg.perpdu_window_days,
                                                        cfg.perpdu_min_regime_samples,
                                                        cfg.resolved_threads());
        if (result.models.empty())
            throw TrainingError("no PDU had usable data for training day " + std::to_string(day));
        std::vector<std::string> warnings;
        for (const auto& [id, model] : result.models) {
            const PduSpec* spec = fleet.find_pdu(id);
            if (spec == nullptr) continue;
            for (auto& w : validate_model_sanity(model, *spec)) warnings.push_back(std::move(w));
        }
        ModelArtifact artifact;
        artifact.kind = "per_pdu";
        artifact.payload = per_pdu_models_to_json(result.models);
        artifact.training_config = run_config_to_json(cfg);
        artifact.data_fingerprint = fingerprint;
        save_model_artifact(artifact, paths.per_pdu_model(day));
        summary[std::to_string(day)] = {{"models", result.models.size()},
                                        {"skipped", result.skipped_pdus},
                                        {"warnings", warnings}};
    }
    detail::write_summary(paths, "train-perpdu", {{"days", summary}});
}

inline void run_train_um(const RunConfig& raw_cfg, const RunPaths& paths) {
    const RunConfig cfg = normalized(raw_cfg);
    const Fleet fleet = detail::load_fleet_artifact(paths);
    const TelemetryDataset ds = detail::load_clean(paths);
    MachineSamplingConfig sampling = cfg.machine_sampling;
    const MachineTrainingSet set = build_machine_training_set(ds, fleet, sampling);
    const RandomForest model = train_unified_machine(set, cfg.forest, cfg.resolved_threads());
    ModelArtifact artifact;
    artifact.kind = "unified_machine";
    artifact.payload = forest_to_json(model);
    artifact.training_config = run_config_to_json(cfg);
    artifact.data_fingerprint = to_hex(dataset_fingerprint(ds));
    save_model_artifact(artifact, paths.unified_machine_model(sampling.week_start_day));
    detail::write_summary(paths, "train-um",
                          {{"rows", set.X.n_rows()},
                           {"groups", set.n_groups},
                           {"skipped_groups", set.skipped_groups},
                           {"features", set.X.n_cols()}});
}

inline void run_train_updu(const RunConfig& raw_cfg, const RunPaths& paths) {
    const RunConfig cfg = normalized(raw_cfg);
    const Fleet fleet = detail::load_fleet_artifact(paths);
    const TelemetryDataset ds = detail::load_clean(paths);
    const FeatureMatrix X = build_pdu_training_set(ds, fleet, cfg.pdu_sampling);
    const RandomForest model = train_unified_pdu(X, cfg.forest, cfg.resolved_threads());
    ModelArtifact artifact;
    artifact.kind = "unified_pdu";
    artifact.payload = forest_to_json(model);
    artifact.training_config = run_config_to_json(cfg);
    artifact.data_fingerprint = to_hex(dataset_fingerprint(ds));
    save_model_artifact(artifact, paths.unified_pdu_model(cfg.pdu_sampling.week_start_day));
    detail::write_summary(paths, "train-updu", {{"rows", X.n_rows()}, {"features", X.n_cols()}});
}

inline void run_predict(const RunConfig& raw_cfg, const RunPaths& paths, const std::string& kind,
                        int day) {
    const RunConfig cfg = normalized(raw_cfg);
    const Fleet fleet = detail::load_fleet_artifact(paths);
    const TelemetryDataset ds = detail::load_clean(paths);
    if (day < ds.day_start || day >= ds.day_start + ds.n_days)
        throw ConfigError("prediction day " + std::to_string(day) + " outside the dataset");
    const auto views = make_pdu_views(ds, fleet);

    std::string out = "pdu_id\tday\tperiod\tactual\tpredicted\n";
    const auto emit = [&](const PduView& v, const std::vector<double>& pred) {
        const std::size_t off = ds.index_of({day, 0});
        for (int p = 0; p < kPeriodsPerDay; ++p) {
            out += v.spec->pdu_id;
            out += '\t';
            out += std::to_string(day);
            out += '\t';
            out += std::to_string(p);
            out += '\t';
            out += format_double(v.series->power[off + p]);
            out += '\t';
            out += format_double(pred[static_cast<std::size_t>(p)]);
            out += '\n';
        }
    };

    if (kind == "per_pdu") {
        const auto artifact = load_model_artifact(paths.per_pdu_model(day - 1), "per_pdu");
        const auto models = per_pdu_models_from_json(artifact.payload);
        for (const auto& v : views) {
            auto it = models.find(v.spec->pdu_id);
            if (it == models.end() || v.series == nullptr) continue;
            std::vector<double> pred(kPeriodsPerDay);
            const std::size_t off = ds.index_of({day, 0});
            for (int p = 0; p < kPeriodsPerDay; ++p)
                pred[static_cast<std::size_t>(p)] = predict_per_pdu(it->second, v.series->cpu[off + p]);
            emit(v, pred);
        }
    } else if (kind == "unified_machine") {
        const auto artifact = load_model_artifact(
            paths.unified_machine_model(cfg.train_week_start), "unified_machine");
        const RandomForest model = forest_from_json(artifact.payload);
        for (const auto& v : views)
            if (v.series != nullptr) emit(v, predict_um_day(model, ds, v, day));
    } else if (kind == "unified_pdu") {
        const auto artifact =
            load_model_artifact(paths.unified_pdu_model(cfg.train_week_start), "unified_pdu");
        const RandomForest model = forest_from_json(artifact.payload);
        for (const auto& v : views)
            if (v.series != nullptr) emit(v, predict_updu_day(model, ds, v, day));
    } else {
        throw ConfigError("unknown model kind '" + kind + "'");
    }
    write_file_atomic(paths.predictions(kind, day), out);
    detail::write_summary(paths, "predict", {{"kind", kind}, {"day", day}});
}

inline void run_evaluate(const RunConfig& raw_cfg, const RunPaths& paths) {
    const RunConfig cfg = normalized(raw_cfg);
    const Fleet fleet = detail::load_fleet_artifact(paths);
    const TelemetryDataset ds = detail::load_clean(paths);
    const auto views = make_pdu_views(ds, fleet);

    const int eval_first = cfg.eval_week_start;
    const int eval_last = cfg.eval_week_start + cfg.eval_week_days - 1;
    check_disjoint_windows(cfg.train_week_start, cfg.train_week_start + 6, eval_first, eval_last);

    // Per-PDU daily model files for every evaluation day.
    std::map<int, std::map<std::string, PerPduModel>> per_pdu_by_day;
    for (int day = eval_first; day <= eval_last; ++day) {
        const auto artifact = load_model_artifact(paths.per_pdu_model(day - 1), "per_pdu");
        per_pdu_by_day[day] = per_pdu_models_from_json(artifact.payload);
    }
    const RandomForest um = forest_from_json(
        load_model_artifact(paths.unified_machine_model(cfg.train_week_start), "unified_machine")
            .payload);
    const RandomForest updu = forest_from_json(
        load_model_artifact(paths.unified_pdu_model(cfg.train_week_start), "unified_pdu").payload);

    json models_json = json::object();
    std::map<std::string, std::vector<double>> avg_by_model;

    struct SeriesBuf {
        std::vector<double> pred;
        std::vector<double> actual;
    };

    for (const std::string kind : {"per_pdu", "unified_machine", "unified_pdu"}) {
        json per_pdu_daily = json::object();
        json per_pdu_avg = json::object();
        json wupe_json = json::object();
        std::vector<double> avg_values;
        for (const auto& v : views) {
            if (v.series == nullptr) continue;
            std::vector<double> daily;
            std::vector<double> wupe_pred;
            std::vector<double> wupe_actual;
            std::vector<std::uint8_t> wupe_mask;
            for (int day = eval_first; day <= eval_last; ++day) {
                SeriesBuf buf;
                std::vector<double> day_pred;
                if (kind == "per_pdu") {
                    const auto& models = per_pdu_by_day[day];
                    auto it = models.find(v.spec->pdu_id);
                    if (it == models.end()) {
                        daily.push_back(missing_value());
                        continue;
                    }
                    day_pred.resize(kPeriodsPerDay);
                    const std::size_t off = ds.index_of({day, 0});
                    for (int p = 0; p < kPeriodsPerDay; ++p)
                        day_pred[static_cast<std::size_t>(p)] =
                            predict_per_pdu(it->second, v.series->cpu[off + p]);
                    for (int p = 0; p < kPeriodsPerDay; ++p) {
                        const std::size_t i = off + p;
                        if (!sample_usable(v.series->power[i], v.series->flags[i])) continue;
                        wupe_pred.push_back(day_pred[static_cast<std::size_t>(p)]);
                        wupe_actual.push_back(v.series->power[i]);
                        wupe_mask.push_back(
                            segment_regime(v.series->cpu[i], it->second) == Regime::kHigh ? 1 : 0);
                    }
                } else if (kind == "unified_machine") {
                    day_pred = predict_um_day(um, ds, v, day);
                } else {
                    day_pred = predict_updu_day(updu, ds, v, day);
                }
                const std::size_t off = ds.index_of({day, 0});
                for (int p = 0; p < kPeriodsPerDay; ++p) {
                    const std::size_t i = off + p;
                    if (!sample_usable(v.series->power[i], v.series->flags[i])) continue;
                    buf.pred.push_back(day_pred[static_cast<std::size_t>(p)]);
                    buf.actual.push_back(v.series->power[i]);
                }
                const MapeResult r = mape(buf.pred, buf.actual);
                daily.push_back(r.defined() ? r.percent : missing_value());
            }
            const AvgDailyMape avg = avg_daily_mape(daily);
            json daily_json = json::array();
            for (double d : daily) daily_json.push_back(is_missing(d) ? json() : json(d));
            per_pdu_daily[v.spec->pdu_id] = daily_json;
            per_pdu_avg[v.spec->pdu_id] = avg.percent;
            avg_values.push_back(avg.percent);
            if (kind == "per_pdu") {
                const WupeResult wr = worst_underprediction(wupe_pred, wupe_actual, wupe_mask);
                wupe_json[v.spec->pdu_id] = wr.defined ? json(wr.percent) : json();
            }
        }
        const CdfTable cdf = make_cdf(avg_values, {1, 2, 3, 4, 5, 7.5, 10, 15, 20});
        json kind_json = {{"daily_mape", per_pdu_daily},
                          {"avg_daily_mape", per_pdu_avg},
                          {"cdf_thresholds", cdf.thresholds},
                          {"cdf_fraction", cdf.fraction}};
        if (kind == "per_pdu") {
            kind_json["wupe"] = wupe_json;
            std::vector<double> wupe_values;
            for (const auto& [id, v] : wupe_json.items())
                if (!v.is_null()) wupe_values.push_back(v.get<double>());
            if (!wupe_values.empty())
                write_file_atomic(paths.cdf_table("wupe"),
                                  cdf_to_tsv(make_cdf(wupe_values, {0, 1, 2, 3, 5, 7.5, 10})));
        }
        models_json[kind] = std::move(kind_json);
        write_file_atomic(paths.cdf_table(std::string("mape_") + kind), cdf_to_tsv(cdf));
        avg_by_model[kind] = avg_values;
    }

    json out = {{"eval_week_start", eval_first},
                {"eval_week_days", cfg.eval_week_days},
                {"models", models_json}};
    write_file_atomic(paths.evaluation(), out.dump(1, '\t') + "\n");
    json summary = json::object();
    for (const auto& [kind, values] : avg_by_model) {
        double mean = 0.0;
        for (double v : values) mean += v;
        if (!values.empty()) mean /= static_cast<double>(values.size());
        summary[kind] = {{"mean_avg_daily_mape", mean}, {"pdus", values.size()}};
    }
    detail::write_summary(paths, "evaluate", summary);
}

// Self-contained load-drop protocol: train all three models on pre-drop
// days, replay the drop day, and score per cluster over the drop window.
inline void run_powerdrop(const RunConfig& raw_cfg, const RunPaths& paths) {
    const RunConfig cfg = normalized(raw_cfg);
    const int threads = cfg.resolved_threads();
    const Fleet fleet = generate_fleet(cfg.fleet);
    const int drop_day = cfg.power_drop_day;
    if (drop_day < 8)
        throw ConfigError("power drop day must leave at least 8 leading days for training");

    LoadScenario scenario = cfg.scenario;
    scenario.drop_window = DropWindow{drop_day, cfg.power_drop_start_period,
                                      cfg.power_drop_end_period, cfg.power_drop_tier_fractions, 2};
    SimOptions sim = cfg.simulation;
    sim.threads = threads;
    sim.n_days = std::max(cfg.simulation.n_days, drop_day + 1);
    TelemetryDataset ds = simulate_telemetry(fleet, scenario, sim);
    preprocess_dataset(ds, fleet, cfg.cleaning, threads);

    PowerDropModels models;
    models.train_first_day = drop_day - 7;
    models.train_last_day = drop_day - 1;
    const DailyRetrainResult daily = daily_retrain(ds, drop_day - 1, cfg.perpdu_window_days,
                                                   cfg.perpdu_min_regime_samples, threads);
    models.per_pdu = daily.models;
    MachineSamplingConfig ms = cfg.machine_sampling;
    ms.week_start_day = models.train_first_day;
    models.unified_machine =
        train_unified_machine(build_machine_training_set(ds, fleet, ms), cfg.forest, threads);
    PduSamplingConfig psc = cfg.pdu_sampling;
    psc.week_start_day = models.train_first_day;
    models.unified_pdu =
        train_unified_pdu(build_pdu_training_set(ds, fleet, psc), cfg.forest, threads);

    const PowerDropReport report =
        run_power_drop_experiment(fleet, ds, models, drop_day, cfg.power_drop_start_period,
                                  cfg.power_drop_end_period, threads);

    json clusters = json::array();
    for (const auto& c : report.clusters)
        clusters.push_back({{"cluster_id", c.cluster_id},
                            {"per_pdu_mape", c.per_pdu_mape},
                            {"unified_machine_mape", c.unified_machine_mape},
                            {"unified_pdu_mape", c.unified_pdu_mape},
                            {"pdus", c.n_pdus}});
    json pdus = json::array();
    for (const auto& p : report.pdus)
        pdus.push_back({{"pdu_id", p.pdu_id},
                        {"cluster_id", p.cluster_id},
                        {"per_pdu_mape", p.per_pdu.percent},
                        {"unified_machine_mape", p.unified_machine.percent},
                        {"unified_pdu_mape", p.unified_pdu.percent}});
    json out = {{"drop_day", report.drop_day},
                {"start_period", report.start_period},
                {"end_period", report.end_period},
                {"clusters", clusters},
                {"pdus", pdus},
                {"excluded_pdus", report.excluded_pdus}};
    write_file_atomic(paths.power_drop(), out.dump(1, '\t') + "\n");
    detail::write_summary(paths, "powerdrop", out);
}

inline void run_holdout(const RunConfig& raw_cfg, const RunPaths& paths, int n_override = -1) {
    const RunConfig cfg = normalized(raw_cfg);
    const Fleet fleet = detail::load_fleet_artifact(paths);
    const TelemetryDataset ds = detail::load_clean(paths);
    HoldoutConfig hc;
    hc.n_holdout = n_override >= 0 ? n_override : cfg.holdout_n;
    hc.seed = cfg.seed;
    hc.sampling = cfg.machine_sampling;
    hc.forest = cfg.forest;
    hc.test_week_start = cfg.eval_week_start;
    hc.test_days = cfg.eval_week_days;
    const HoldoutReport report = run_holdout_experiment(fleet, ds, hc, cfg.resolved_threads());

    json results = json::array();
    for (const auto& r : report.results)
        results.push_back({{"pdu_id", r.pdu_id},
                           {"mape", r.mape.percent},
                           {"instances", r.mape.used}});
    json out = {{"held_out", report.held_out},
                {"mean_mape", report.mean_mape},
                {"results", results},
                {"cdf_thresholds", report.cdf.thresholds},
                {"cdf_fraction", report.cdf.fraction}};
    write_file_atomic(paths.holdout(), out.dump(1, '\t') + "\n");
    if (!report.results.empty())
        write_file_atomic(paths.cdf_table("holdout"), cdf_to_tsv(report.cdf));
    detail::write_summary(paths, "holdout",
                          {{"held_out", report.held_out}, {"mean_mape", report.mean_mape}});
}

inline void run_report(const RunPaths& paths) {
    std::string out = "pdupower run report\n===================\n\n";
    const auto add_json = [&out](const std::filesystem::path& p, const std::string& title) {
        if (!std::filesystem::exists(p)) return;
        out += title + "\n" + std::string(title.size(), '-') + "\n";
        out += parse_json_file(p).dump(1, '\t');
        out += "\n\n";
    };
    bool any = false;
    for (const auto& [path, title] :
         std::vector<std::pair<std::filesystem::path, std::string>>{
             {paths.cleaning_report(), "Cleaning"},
             {paths.evaluation(), "Evaluation"},
             {paths.power_drop(), "Power drop experiment"},
             {paths.holdout(), "Hold-out experiment"}}) {
        if (std::filesystem::exists(path)) any = true;
        add_json(path, title);
    }
    if (!any) throw DataError("no reports found in " + paths.root.string());
    write_file_atomic(paths.report_text(), out);
}

}  // namespace pdupower
