#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/fleet.hpp"
#include "pdupower/forest.hpp"
#include "pdupower/telemetry.hpp"

namespace pdupower {

// Feature schema of the machine-level model: hardware identity one-hot
// blocks, the nameplate power bounds, and the usage pair. Usage and
// utilization are both offered; the trees choose whichever carries signal.
inline std::vector<std::string> machine_feature_columns(const EncodingMap& enc) {
    std::vector<std::string> cols;
    for (const auto& cat : enc.categories.at("config_code"))
        cols.push_back(EncodingMap::binary_column_name("config_code", cat));
    cols.emplace_back("idle_power");
    cols.emplace_back("max_power");
    for (const auto& cat : enc.categories.at("dedicated_label"))
        cols.push_back(EncodingMap::binary_column_name("dedicated_label", cat));
    cols.emplace_back("cpu_usage");
    cols.emplace_back("cpu_utilization");
    return cols;
}

inline std::vector<double> machine_feature_row(const EncodingMap& enc, const MachineSpec& spec,
                                               double cpu_usage,
                                               std::size_t* unseen_count = nullptr) {
    const auto& config_cats = enc.categories.at("config_code");
    const auto& label_cats = enc.categories.at("dedicated_label");
    std::vector<double> row(config_cats.size() + label_cats.size() + 4, 0.0);
    std::size_t at = 0;
    const std::size_t ci = enc.index_of("config_code", spec.config_code);
    if (ci != EncodingMap::npos)
        row[at + ci] = 1.0;
    else if (unseen_count != nullptr)
        (*unseen_count)++;
    at += config_cats.size();
    row[at++] = spec.idle_power;
    row[at++] = spec.max_power;
    const std::size_t li = enc.index_of("dedicated_label", spec.dedicated_label);
    if (li != EncodingMap::npos)
        row[at + li] = 1.0;
    else if (unseen_count != nullptr)
        (*unseen_count)++;
    at += label_cats.size();
    row[at++] = cpu_usage;
    row[at++] = spec.cpu_capacity > 0.0 ? cpu_usage / spec.cpu_capacity : 0.0;
    return row;
}

struct MachineSamplingConfig {
    int week_start_day = 0;
    int n_days = 7;
    std::size_t per_group_target = 3000;  // rows per (config, label) group
    std::uint64_t seed = 1;
};

struct MachineTrainingSet {
    FeatureMatrix X;
    EncodingMap encoding;
    std::size_t n_groups = 0;
    std::vector<std::string> skipped_groups;  // groups with no usable samples
};

// Assembles the machine-level training matrix for one week: rows are
// stratified-sampled per (config_code, dedicated_label) group over ten
// utilization buckets, so every operating regime with data stays
// represented. Excluded PDUs (hold-out protocol) contribute nothing.
inline MachineTrainingSet build_machine_training_set(
    const TelemetryDataset& ds, const Fleet& fleet, const MachineSamplingConfig& cfg,
    const std::set<std::string>* exclude_pdus = nullptr) {
    struct Candidate {
        const MachineSpec* spec;
        double cpu;
        double power;
    };
    std::map<std::string, std::vector<Candidate>> groups;

    std::map<std::string, const MachineSeries*> series_by_id;
    for (const auto& m : ds.machines) series_by_id[m.machine_id] = &m;

    std::set<std::string> group_keys_seen;
    for (const auto& pdu : fleet.pdus) {
        if (exclude_pdus != nullptr && exclude_pdus->count(pdu.pdu_id) > 0) continue;
        for (const auto& spec : pdu.machines) {
            const std::string key = spec.config_code + "|" + spec.dedicated_label;
            group_keys_seen.insert(key);
            auto it = series_by_id.find(spec.machine_id);
            if (it == series_by_id.end()) continue;
            const MachineSeries& s = *it->second;
            for (int day = cfg.week_start_day; day < cfg.week_start_day + cfg.n_days; ++day) {
                if (day < ds.day_start || day >= ds.day_start + ds.n_days) continue;
                const std::size_t off = ds.index_of({day, 0});
                for (int p = 0; p < kPeriodsPerDay; ++p) {
                    const std::size_t i = off + p;
                    if (sample_usable(s.power[i], s.flags[i]))
                        groups[key].push_back({&spec, s.cpu[i], s.power[i]});
                }
            }
        }
    }

    MachineTrainingSet out;
    for (const auto& key : group_keys_seen)
        if (groups.find(key) == groups.end()) out.skipped_groups.push_back(key);

    std::vector<std::string> config_codes;
    std::vector<std::string> labels;
    std::vector<const Candidate*> selected;
    for (const auto& [key, members] : groups) {
        std::vector<double> utilization(members.size());
        for (std::size_t i = 0; i < members.size(); ++i)
            utilization[i] =
                std::clamp(members[i].cpu / members[i].spec->cpu_capacity, 0.0, 1.0);
        const auto picks = stratified_sample(utilization, cfg.per_group_target,
                                             cfg.seed ^ fnv1a(key));
        for (std::size_t i : picks) selected.push_back(&members[i]);
        out.n_groups++;
    }
    for (const Candidate* c : selected) {
        config_codes.push_back(c->spec->config_code);
        labels.push_back(c->spec->dedicated_label);
    }

    out.encoding.fit("config_code", config_codes);
    out.encoding.fit("dedicated_label", labels);
    const auto cols = machine_feature_columns(out.encoding);
    std::vector<std::vector<double>> data(cols.size(), std::vector<double>(selected.size()));
    out.X.target.resize(selected.size());
    for (std::size_t r = 0; r < selected.size(); ++r) {
        const auto row = machine_feature_row(out.encoding, *selected[r]->spec, selected[r]->cpu);
        for (std::size_t c = 0; c < cols.size(); ++c) data[c][r] = row[c];
        out.X.target[r] = selected[r]->power;
    }
    for (std::size_t c = 0; c < cols.size(); ++c) out.X.add_column(cols[c], std::move(data[c]));
    return out;
}

inline RandomForest train_unified_machine(const MachineTrainingSet& set, ForestParams params,
                                          int threads = 1) {
    if (set.X.n_rows() == 0)
        throw TrainingError("unified machine model: empty training set");
    RandomForest model = fit_forest(set.X, params, threads);
    model.encoding = set.encoding;
    return model;
}

// The industry straight-line reference: idle-to-max interpolation.
inline double baseline_linear_machine(const MachineSpec& spec, double utilization) {
    if (!(utilization >= 0.0 && utilization <= 1.0))
        throw DomainError("utilization " + format_double(utilization) + " outside [0, 1]");
    return spec.idle_power + (spec.max_power - spec.idle_power) * utilization;
}

struct OverheadEstimate {
    double watts = 0.0;
    bool fallback = false;  // no previous-day data; sized from nameplate
};

// Previous-day mean of (PDU meter reading - sum of machine readings),
// floored at zero. Falls back to a nameplate-derived constant when the
// previous day has no usable joint sample.
inline OverheadEstimate estimate_overhead(const TelemetryDataset& ds, const PduSpec& pdu,
                                          int previous_day) {
    const PduSeries* ps = ds.find_pdu(pdu.pdu_id);
    std::vector<const MachineSeries*> members;
    for (const auto& m : pdu.machines) {
        const MachineSeries* s = ds.find_machine(m.machine_id);
        if (s != nullptr) members.push_back(s);
    }
    OverheadEstimate est;
    double sum = 0.0;
    std::size_t count = 0;
    if (ps != nullptr && previous_day >= ds.day_start &&
        previous_day < ds.day_start + ds.n_days && members.size() == pdu.machines.size()) {
        const std::size_t off = ds.index_of({previous_day, 0});
        for (int p = 0; p < kPeriodsPerDay; ++p) {
            const std::size_t i = off + p;
            if (!sample_usable(ps->power[i], ps->flags[i])) continue;
            double machine_sum = 0.0;
            bool complete = true;
            for (const MachineSeries* s : members) {
                if (!sample_usable(s->power[i], s->flags[i])) {
                    complete = false;
                    break;
                }
                machine_sum += s->power[i];
            }
            if (!complete) continue;
            sum += ps->power[i] - machine_sum;
            count++;
        }
    }
    if (count == 0) {
        est.watts = 0.6 * (pdu.network_max_power + pdu.cooling_max_power);
        est.fallback = true;
        return est;
    }
    est.watts = std::max(0.0, sum / static_cast<double>(count));
    return est;
}

struct PduPowerPrediction {
    double it_power = 0.0;
    double overhead = 0.0;
    double total = 0.0;
    std::vector<std::pair<std::string, double>> per_machine;  // in machine-id order
};

// Sums per-machine forest predictions in machine order and adds the
// overhead estimate. Every machine in the PDU must have a usage value.
inline PduPowerPrediction predict_pdu_power_um(
    const RandomForest& model, const PduSpec& pdu,
    const std::map<std::string, double>& cpu_usage_by_machine, double overhead_watts,
    std::size_t* unseen_count = nullptr) {
    std::vector<std::string> missing;
    for (const auto& m : pdu.machines)
        if (cpu_usage_by_machine.find(m.machine_id) == cpu_usage_by_machine.end())
            missing.push_back(m.machine_id);
    if (!missing.empty()) {
        std::string msg = "missing CPU usage for machines:";
        for (const auto& id : missing) msg += " " + id;
        throw ContractError(msg);
    }

    PduPowerPrediction out;
    out.overhead = overhead_watts;
    for (const auto& m : pdu.machines) {
        const double usage = cpu_usage_by_machine.at(m.machine_id);
        const auto row = machine_feature_row(model.encoding, m, usage, unseen_count);
        const double watts = model.predict(row);
        out.per_machine.emplace_back(m.machine_id, watts);
        out.it_power += watts;
    }
    out.total = out.it_power + out.overhead;
    return out;
}

}  // namespace pdupower
