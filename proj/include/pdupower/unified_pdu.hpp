#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/fleet.hpp"
#include "pdupower/forest.hpp"
#include "pdupower/rng.hpp"
#include "pdupower/telemetry.hpp"

namespace pdupower {

// Fixed-width PDU feature schema: nameplate totals, per-family machine
// counts and CPU usage (zero when a family is absent), the network/cooling
// proxies, and the power-architecture one-hot block. One schema serves every
// PDU so a single model covers the fleet.
inline std::vector<std::string> pdu_feature_columns() {
    std::vector<std::string> cols;
    cols.emplace_back("total_idle_power");
    cols.emplace_back("total_max_power");
    for (const auto& fam : platform_families()) cols.push_back("family_count=" + fam);
    for (const auto& fam : platform_families()) cols.push_back("family_cpu=" + fam);
    cols.emplace_back("network_max_power");
    cols.emplace_back("cooling_max_power");
    for (const auto& arch : architecture_types())
        cols.push_back(EncodingMap::binary_column_name("architecture", arch));
    return cols;
}

inline std::vector<double> pdu_feature_row(const PduSpec& pdu,
                                           const std::map<std::string, double>& family_cpu) {
    const auto& families = platform_families();
    const auto& archs = architecture_types();
    std::vector<double> row(2 + 2 * families.size() + 2 + archs.size(), 0.0);
    std::size_t at = 0;
    row[at++] = pdu.idle_power();
    row[at++] = pdu.max_power();
    for (const auto& fam : families) {
        auto it = pdu.family_counts.find(fam);
        row[at++] = it == pdu.family_counts.end() ? 0.0 : static_cast<double>(it->second);
    }
    for (const auto& fam : families) {
        auto it = family_cpu.find(fam);
        row[at++] = it == family_cpu.end() ? 0.0 : it->second;
    }
    row[at++] = pdu.network_max_power;
    row[at++] = pdu.cooling_max_power;
    for (std::size_t a = 0; a < archs.size(); ++a)
        row[at + a] = pdu.architecture_type == archs[a] ? 1.0 : 0.0;
    return row;
}

struct PduSamplingConfig {
    int week_start_day = 0;
    int n_days = 7;
    std::size_t max_rows = 50000;
    std::uint64_t seed = 1;
};

// One row per (PDU, timestamp) with a usable meter reading; uniformly
// subsampled down to max_rows.
inline FeatureMatrix build_pdu_training_set(const TelemetryDataset& ds, const Fleet& fleet,
                                            const PduSamplingConfig& cfg) {
    struct Row {
        std::vector<double> features;
        double target;
    };
    std::vector<Row> rows;

    std::map<std::string, const MachineSeries*> series_by_id;
    for (const auto& m : ds.machines) series_by_id[m.machine_id] = &m;

    for (const auto& pdu : fleet.pdus) {
        const PduSeries* ps = ds.find_pdu(pdu.pdu_id);
        if (ps == nullptr) continue;
        std::vector<std::pair<const MachineSeries*, const MachineSpec*>> members;
        for (const auto& m : pdu.machines) {
            auto it = series_by_id.find(m.machine_id);
            if (it != series_by_id.end()) members.emplace_back(it->second, &m);
        }
        for (int day = cfg.week_start_day; day < cfg.week_start_day + cfg.n_days; ++day) {
            if (day < ds.day_start || day >= ds.day_start + ds.n_days) continue;
            const std::size_t off = ds.index_of({day, 0});
            for (int p = 0; p < kPeriodsPerDay; ++p) {
                const std::size_t i = off + p;
                if (!sample_usable(ps->power[i], ps->flags[i])) continue;
                std::map<std::string, double> family_cpu;
                for (const auto& [series, spec] : members)
                    family_cpu[spec->platform_family] += series->cpu[i];
                rows.push_back({pdu_feature_row(pdu, family_cpu), ps->power[i]});
            }
        }
    }

    if (rows.size() > cfg.max_rows) {
        std::vector<std::size_t> idx(rows.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        RandomStream rng(cfg.seed, "pdu-training", "subsample");
        rng.shuffle(idx);
        idx.resize(cfg.max_rows);
        std::sort(idx.begin(), idx.end());
        std::vector<Row> kept;
        kept.reserve(idx.size());
        for (std::size_t i : idx) kept.push_back(std::move(rows[i]));
        rows = std::move(kept);
    }

    FeatureMatrix X;
    const auto cols = pdu_feature_columns();
    std::vector<std::vector<double>> data(cols.size(), std::vector<double>(rows.size()));
    X.target.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) data[c][r] = rows[r].features[c];
        X.target[r] = rows[r].target;
    }
    for (std::size_t c = 0; c < cols.size(); ++c) X.add_column(cols[c], std::move(data[c]));
    return X;
}

inline RandomForest train_unified_pdu(const FeatureMatrix& X, ForestParams params,
                                      int threads = 1) {
    if (X.n_rows() == 0) throw TrainingError("unified PDU model: empty training set");
    return fit_forest(X, params, threads);
}

inline double predict_pdu_power_up(const RandomForest& model, const PduSpec& pdu,
                                   const std::map<std::string, double>& family_cpu) {
    const auto row = pdu_feature_row(pdu, family_cpu);
    if (row.size() != model.column_names.size())
        throw ContractError("unified PDU prediction: schema width mismatch");
    return model.predict(row);
}

}  // namespace pdupower
