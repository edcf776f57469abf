#pragma once

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "pdupower/pipeline.hpp"

namespace pdupower {

struct CliError {
    int code;
    std::string category;
};

inline CliError classify_error(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return {2, "config"};
    if (dynamic_cast<const DomainError*>(&e)) return {3, "domain"};
    if (dynamic_cast<const ContractError*>(&e)) return {3, "contract"};
    if (dynamic_cast<const TrainingError*>(&e)) return {4, "training"};
    if (dynamic_cast<const PlacementError*>(&e)) return {4, "placement"};
    if (dynamic_cast<const DataError*>(&e)) return {4, "data"};
    if (dynamic_cast<const ModelMissingError*>(&e)) return {5, "missing-model"};
    if (dynamic_cast<const VersionError*>(&e)) return {6, "version"};
    if (dynamic_cast<const IntegrityError*>(&e)) return {7, "integrity"};
    return {1, "internal"};
}

// The whole CLI behind a callable so tests can drive it in-process. Args are
// everything after the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Datacenter PDU power modeling pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string data_dir;
    int threads_override = -1;
    app.add_option("--config,-c", config_path, "Run configuration JSON")->envname("PDUPOWER_CONFIG");
    app.add_option("--out,-o", out_dir, "Run directory (defaults to <data-dir>/runs/<config-hash>)");
    app.add_option("--data-dir", data_dir, "Base data directory (default $PDUPOWER_DATA_DIR or .)");
    app.add_option("--threads,-j", threads_override, "Worker threads (0 = hardware)");

    auto* sim = app.add_subcommand("simulate", "Generate the fleet and its telemetry");
    auto* prep = app.add_subcommand("preprocess", "Clean raw telemetry");
    auto* tpp = app.add_subcommand("train-perpdu", "Train daily per-PDU models");
    int tpp_day = -1;
    tpp->add_option("--day", tpp_day, "Train a single day instead of the evaluation range");
    auto* tum = app.add_subcommand("train-um", "Train the unified machine model");
    auto* tup = app.add_subcommand("train-updu", "Train the unified PDU model");
    auto* pred = app.add_subcommand("predict", "Write per-period predictions for one day");
    std::string pred_kind = "per_pdu";
    int pred_day = -1;
    pred->add_option("--kind", pred_kind, "per_pdu | unified_machine | unified_pdu");
    pred->add_option("--day", pred_day, "Day to predict")->required();
    auto* eval = app.add_subcommand("evaluate", "Score all models over the evaluation week");
    auto* pdrop = app.add_subcommand("powerdrop", "Run the planned load-drop experiment");
    auto* hold = app.add_subcommand("holdout", "Hold out PDUs and score generalization");
    int hold_n = -1;
    hold->add_option("--n", hold_n, "Number of PDUs to hold out (overrides config)");
    auto* rep = app.add_subcommand("report", "Assemble a plain-text summary of existing reports");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error[usage]: " << e.what() << "\n";
        return 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty())
            cfg = load_run_config(config_path);
        else if (!rep->parsed() || out_dir.empty())
            throw ConfigError("--config is required");
        if (threads_override >= 0) cfg.threads = threads_override;

        RunPaths paths;
        if (!out_dir.empty()) {
            paths.root = out_dir;
        } else {
            const std::filesystem::path base =
                data_dir.empty() ? default_data_dir() : std::filesystem::path(data_dir);
            paths.root = base / "runs" / config_hash(cfg);
        }

        if (sim->parsed()) {
            run_simulate(cfg, paths);
        } else if (prep->parsed()) {
            run_preprocess(cfg, paths);
        } else if (tpp->parsed()) {
            if (tpp_day >= 0)
                run_train_perpdu(cfg, paths, tpp_day, tpp_day);
            else
                run_train_perpdu(cfg, paths);
        } else if (tum->parsed()) {
            run_train_um(cfg, paths);
        } else if (tup->parsed()) {
            run_train_updu(cfg, paths);
        } else if (pred->parsed()) {
            run_predict(cfg, paths, pred_kind, pred_day);
        } else if (eval->parsed()) {
            run_evaluate(cfg, paths);
        } else if (pdrop->parsed()) {
            run_powerdrop(cfg, paths);
        } else if (hold->parsed()) {
            run_holdout(cfg, paths, hold_n);
        } else if (rep->parsed()) {
            run_report(paths);
        }
        out << "ok: artifacts under " << paths.root.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        const CliError ce = classify_error(e);
        err << "error[" << ce.category << "]: " << e.what() << "\n";
        return ce.code;
    }
}

}  // namespace pdupower
