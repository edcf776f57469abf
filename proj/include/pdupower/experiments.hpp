#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/eval.hpp"
#include "pdupower/fleet.hpp"
#include "pdupower/forest.hpp"
#include "pdupower/parallel.hpp"
#include "pdupower/perpdu.hpp"
#include "pdupower/rng.hpp"
#include "pdupower/telemetry.hpp"
#include "pdupower/unified_machine.hpp"
#include "pdupower/unified_pdu.hpp"

namespace pdupower {

// Every evaluation below predicts strictly outside the data its model was
// fit on; the helpers enforce that by construction or by this check.
inline void check_disjoint_windows(int train_first, int train_last, int test_first,
                                   int test_last) {
    if (train_first <= test_last && test_first <= train_last)
        throw ContractError("evaluation window [" + std::to_string(test_first) + ", " +
                            std::to_string(test_last) + "] overlaps training window [" +
                            std::to_string(train_first) + ", " + std::to_string(train_last) + "]");
}

// Joined view of one PDU's spec and series.
struct PduView {
    const PduSpec* spec = nullptr;
    const PduSeries* series = nullptr;
    std::vector<const MachineSeries*> machines;  // aligned with spec->machines
};

inline std::vector<PduView> make_pdu_views(const TelemetryDataset& ds, const Fleet& fleet) {
    std::map<std::string, const MachineSeries*> by_id;
    for (const auto& m : ds.machines) by_id[m.machine_id] = &m;
    std::vector<PduView> views;
    for (const auto& pdu : fleet.pdus) {
        PduView v;
        v.spec = &pdu;
        v.series = ds.find_pdu(pdu.pdu_id);
        for (const auto& m : pdu.machines) {
            auto it = by_id.find(m.machine_id);
            v.machines.push_back(it == by_id.end() ? nullptr : it->second);
        }
        views.push_back(std::move(v));
    }
    return views;
}

// Walk-forward backtest of the daily Per-PDU pipeline: for each evaluation
// day d, the model trained on the window ending at d-1 predicts all of
// day d. Predictions stay aligned with the dataset's sample indices (NaN
// where no model was available), and the high-regime mask records how the
// predicting model segmented each instant, which is what the underprediction
// metric conditions on.
struct PerPduBacktest {
    int first_eval_day = 0;
    int last_eval_day = -1;
    PerPduModelStore store;
    std::map<std::string, std::vector<double>> predictions;
    std::map<std::string, std::vector<std::uint8_t>> high_regime;
    std::vector<std::string> skipped;  // "pdu@day" entries without a model
};

inline PerPduBacktest backtest_per_pdu(const TelemetryDataset& ds, int first_eval_day,
                                       int last_eval_day, int window_days = kTrainingWindowDays,
                                       int min_regime_samples = kMinRegimeSamples,
                                       int threads = 1) {
    PerPduBacktest bt;
    bt.first_eval_day = first_eval_day;
    bt.last_eval_day = last_eval_day;
    const std::size_t n = ds.samples_per_series();

    std::vector<std::map<int, PerPduModel>> models_per_pdu(ds.pdus.size());
    std::vector<std::vector<double>> preds(ds.pdus.size());
    std::vector<std::vector<std::uint8_t>> high(ds.pdus.size());
    std::vector<std::vector<std::string>> skipped(ds.pdus.size());

    parallel_for(ds.pdus.size(), threads, [&](std::size_t pi) {
        const PduSeries& series = ds.pdus[pi];
        preds[pi].assign(n, missing_value());
        high[pi].assign(n, 0);
        for (int day = first_eval_day; day <= last_eval_day; ++day) {
            if (day < ds.day_start || day >= ds.day_start + ds.n_days) continue;
            const int training_day = day - 1;
            const TrainingWindow w = make_training_window(ds, series, training_day, window_days);
            if (w.samples.empty()) {
                skipped[pi].push_back(series.pdu_id + "@" + std::to_string(day));
                continue;
            }
            const PerPduModel model = fit_per_pdu(w, min_regime_samples);
            models_per_pdu[pi].emplace(training_day, model);
            const std::size_t off = ds.index_of({day, 0});
            for (int p = 0; p < kPeriodsPerDay; ++p) {
                const std::size_t i = off + p;
                preds[pi][i] = predict_per_pdu(model, series.cpu[i]);
                high[pi][i] = segment_regime(series.cpu[i], model) == Regime::kHigh ? 1 : 0;
            }
        }
    });

    for (std::size_t pi = 0; pi < ds.pdus.size(); ++pi) {
        const std::string& id = ds.pdus[pi].pdu_id;
        bt.predictions.emplace(id, std::move(preds[pi]));
        bt.high_regime.emplace(id, std::move(high[pi]));
        for (auto& [day, model] : models_per_pdu[pi]) bt.store.put(model);
        for (auto& s : skipped[pi]) bt.skipped.push_back(std::move(s));
    }
    return bt;
}

// Daily MAPE of backtest predictions against usable recorded power, one
// value per day in [day_from, day_to]; NaN where undefined.
inline std::vector<double> daily_mape_series(const TelemetryDataset& ds, const PduSeries& series,
                                             const std::vector<double>& predictions, int day_from,
                                             int day_to) {
    std::vector<double> out;
    for (int day = day_from; day <= day_to; ++day) {
        if (day < ds.day_start || day >= ds.day_start + ds.n_days) {
            out.push_back(missing_value());
            continue;
        }
        const std::size_t off = ds.index_of({day, 0});
        std::vector<double> pred;
        std::vector<double> actual;
        for (int p = 0; p < kPeriodsPerDay; ++p) {
            const std::size_t i = off + p;
            if (!sample_usable(series.power[i], series.flags[i])) continue;
            pred.push_back(predictions[i]);
            actual.push_back(series.power[i]);
        }
        const MapeResult r = mape(pred, actual);
        out.push_back(r.defined() ? r.percent : missing_value());
    }
    return out;
}

// Worst 90-day underprediction for one PDU as of day d: the lookback covers
// days [d - lookback, d - 1] (day d itself excluded) restricted to instants
// the predicting model placed in the high regime.
inline WupeResult wupe_for_day(const TelemetryDataset& ds, const PduSeries& series,
                               const PerPduBacktest& bt, int day, int lookback_days = 90) {
    const auto& pred = bt.predictions.at(series.pdu_id);
    const auto& high = bt.high_regime.at(series.pdu_id);
    std::vector<double> p;
    std::vector<double> a;
    std::vector<std::uint8_t> q;
    for (int d = day - lookback_days; d <= day - 1; ++d) {
        if (d < ds.day_start || d >= ds.day_start + ds.n_days) continue;
        const std::size_t off = ds.index_of({d, 0});
        for (int t = 0; t < kPeriodsPerDay; ++t) {
            const std::size_t i = off + t;
            if (!sample_usable(series.power[i], series.flags[i])) continue;
            p.push_back(pred[i]);
            a.push_back(series.power[i]);
            q.push_back(high[i]);
        }
    }
    return worst_underprediction(p, a, q);
}

// Unified Machine prediction for every period of one day; the overhead term
// is the previous day's mean residual, re-estimated per day.
inline std::vector<double> predict_um_day(const RandomForest& model, const TelemetryDataset& ds,
                                          const PduView& view, int day,
                                          OverheadEstimate* overhead_out = nullptr) {
    std::vector<double> out(kPeriodsPerDay, missing_value());
    if (view.series == nullptr) return out;
    const OverheadEstimate overhead = estimate_overhead(ds, *view.spec, day - 1);
    if (overhead_out != nullptr) *overhead_out = overhead;
    const std::size_t off = ds.index_of({day, 0});
    for (int p = 0; p < kPeriodsPerDay; ++p) {
        const std::size_t i = off + p;
        double it_sum = 0.0;
        bool complete = true;
        for (std::size_t mi = 0; mi < view.spec->machines.size(); ++mi) {
            const MachineSeries* ms = view.machines[mi];
            if (ms == nullptr || is_missing(ms->cpu[i])) {
                complete = false;
                break;
            }
            const auto row = machine_feature_row(model.encoding, view.spec->machines[mi], ms->cpu[i]);
            it_sum += model.predict(row);
        }
        if (complete) out[static_cast<std::size_t>(p)] = it_sum + overhead.watts;
    }
    return out;
}

inline std::vector<double> predict_updu_day(const RandomForest& model, const TelemetryDataset& ds,
                                            const PduView& view, int day) {
    std::vector<double> out(kPeriodsPerDay, missing_value());
    if (view.series == nullptr) return out;
    const std::size_t off = ds.index_of({day, 0});
    for (int p = 0; p < kPeriodsPerDay; ++p) {
        const std::size_t i = off + p;
        std::map<std::string, double> family_cpu;
        bool complete = true;
        for (std::size_t mi = 0; mi < view.spec->machines.size(); ++mi) {
            const MachineSeries* ms = view.machines[mi];
            if (ms == nullptr || is_missing(ms->cpu[i])) {
                complete = false;
                break;
            }
            family_cpu[view.spec->machines[mi].platform_family] += ms->cpu[i];
        }
        if (complete) out[static_cast<std::size_t>(p)] = predict_pdu_power_up(model, *view.spec, family_cpu);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Power-drop experiment: a planned tiered load drop on one afternoon, scored
// per cluster for all three models over the drop window only.

struct PowerDropModels {
    std::map<std::string, PerPduModel> per_pdu;
    RandomForest unified_machine;
    RandomForest unified_pdu;
    int train_first_day = 0;  // provenance, used for the disjointness check
    int train_last_day = 0;
};

struct PduDropResult {
    std::string pdu_id;
    std::string cluster_id;
    MapeResult per_pdu;
    MapeResult unified_machine;
    MapeResult unified_pdu;
};

struct ClusterDropSummary {
    std::string cluster_id;
    double per_pdu_mape = 0.0;
    double unified_machine_mape = 0.0;
    double unified_pdu_mape = 0.0;
    std::size_t n_pdus = 0;
};

struct PowerDropReport {
    int drop_day = 0;
    int start_period = 0;
    int end_period = 0;
    std::vector<PduDropResult> pdus;
    std::vector<ClusterDropSummary> clusters;
    std::vector<std::string> excluded_pdus;  // no trained Per-PDU model
};

inline PowerDropReport run_power_drop_experiment(const Fleet& fleet, const TelemetryDataset& ds,
                                                 const PowerDropModels& models, int drop_day,
                                                 int start_period, int end_period,
                                                 int threads = 1) {
    check_disjoint_windows(models.train_first_day, models.train_last_day, drop_day, drop_day);
    if (start_period < 0 || end_period >= kPeriodsPerDay || start_period > end_period)
        throw ConfigError("power drop window periods out of range");

    PowerDropReport report;
    report.drop_day = drop_day;
    report.start_period = start_period;
    report.end_period = end_period;

    const auto views = make_pdu_views(ds, fleet);
    std::vector<PduDropResult> results(views.size());
    std::vector<char> has_model(views.size(), 0);

    parallel_for(views.size(), threads, [&](std::size_t vi) {
        const PduView& v = views[vi];
        PduDropResult& r = results[vi];
        r.pdu_id = v.spec->pdu_id;
        r.cluster_id = v.spec->cluster_id;
        auto it = models.per_pdu.find(v.spec->pdu_id);
        if (it == models.per_pdu.end() || v.series == nullptr) return;
        has_model[vi] = 1;

        const auto um_day = predict_um_day(models.unified_machine, ds, v, drop_day);
        const auto updu_day = predict_updu_day(models.unified_pdu, ds, v, drop_day);
        const std::size_t off = ds.index_of({drop_day, 0});
        std::vector<double> actual;
        std::vector<double> pp;
        std::vector<double> um;
        std::vector<double> up;
        for (int p = start_period; p <= end_period; ++p) {
            const std::size_t i = off + p;
            if (!sample_usable(v.series->power[i], v.series->flags[i])) continue;
            actual.push_back(v.series->power[i]);
            pp.push_back(predict_per_pdu(it->second, v.series->cpu[i]));
            um.push_back(um_day[static_cast<std::size_t>(p)]);
            up.push_back(updu_day[static_cast<std::size_t>(p)]);
        }
        r.per_pdu = mape(pp, actual);
        r.unified_machine = mape(um, actual);
        r.unified_pdu = mape(up, actual);
    });

    std::map<std::string, ClusterDropSummary> clusters;
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
        if (!has_model[vi]) {
            report.excluded_pdus.push_back(views[vi].spec->pdu_id);
            continue;
        }
        report.pdus.push_back(results[vi]);
        auto& c = clusters[results[vi].cluster_id];
        c.cluster_id = results[vi].cluster_id;
        c.per_pdu_mape += results[vi].per_pdu.percent;
        c.unified_machine_mape += results[vi].unified_machine.percent;
        c.unified_pdu_mape += results[vi].unified_pdu.percent;
        c.n_pdus++;
    }
    for (auto& [id, c] : clusters) {
        if (c.n_pdus > 0) {
            c.per_pdu_mape /= static_cast<double>(c.n_pdus);
            c.unified_machine_mape /= static_cast<double>(c.n_pdus);
            c.unified_pdu_mape /= static_cast<double>(c.n_pdus);
        }
        report.clusters.push_back(c);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Hold-out protocol: remove randomly chosen PDUs, retrain the Unified
// Machine model on the remainder, and score each hold-out over a test week
// disjoint from training.

struct HoldoutConfig {
    int n_holdout = 3;
    std::uint64_t seed = 1;
    MachineSamplingConfig sampling;  // training week + sampling parameters
    ForestParams forest;
    int test_week_start = 0;
    int test_days = 7;
};

struct HoldoutPduResult {
    std::string pdu_id;
    MapeResult mape;
};

struct HoldoutReport {
    std::vector<std::string> held_out;
    std::vector<HoldoutPduResult> results;
    double mean_mape = 0.0;
    CdfTable cdf;
};

inline HoldoutReport run_holdout_experiment(const Fleet& fleet, const TelemetryDataset& ds,
                                            const HoldoutConfig& cfg, int threads = 1) {
    HoldoutReport report;
    if (cfg.n_holdout == 0) return report;
    if (cfg.n_holdout < 0 || static_cast<std::size_t>(cfg.n_holdout) >= fleet.pdus.size())
        throw ConfigError("n_holdout must be smaller than the PDU count");
    check_disjoint_windows(cfg.sampling.week_start_day,
                           cfg.sampling.week_start_day + cfg.sampling.n_days - 1,
                           cfg.test_week_start, cfg.test_week_start + cfg.test_days - 1);

    std::vector<std::string> ids;
    for (const auto& p : fleet.pdus) ids.push_back(p.pdu_id);
    RandomStream rng(cfg.seed, "holdout", "selection");
    rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(cfg.n_holdout));
    std::sort(ids.begin(), ids.end());
    std::set<std::string> held(ids.begin(), ids.end());

    std::set<std::string> fleet_archs;
    std::set<std::string> remaining_archs;
    for (const auto& p : fleet.pdus) {
        fleet_archs.insert(p.architecture_type);
        if (held.count(p.pdu_id) == 0) remaining_archs.insert(p.architecture_type);
    }
    if (remaining_archs != fleet_archs)
        throw DataError("hold-out selection removed an entire power architecture");

    const MachineTrainingSet training =
        build_machine_training_set(ds, fleet, cfg.sampling, &held);
    const RandomForest model = train_unified_machine(training, cfg.forest, threads);

    const auto views = make_pdu_views(ds, fleet);
    report.held_out = ids;
    double mape_sum = 0.0;
    std::size_t mape_count = 0;
    for (const auto& v : views) {
        if (held.count(v.spec->pdu_id) == 0 || v.series == nullptr) continue;
        std::vector<double> pred;
        std::vector<double> actual;
        for (int day = cfg.test_week_start; day < cfg.test_week_start + cfg.test_days; ++day) {
            if (day < ds.day_start || day >= ds.day_start + ds.n_days) continue;
            const auto day_pred = predict_um_day(model, ds, v, day);
            const std::size_t off = ds.index_of({day, 0});
            for (int p = 0; p < kPeriodsPerDay; ++p) {
                const std::size_t i = off + p;
                if (!sample_usable(v.series->power[i], v.series->flags[i])) continue;
                pred.push_back(day_pred[static_cast<std::size_t>(p)]);
                actual.push_back(v.series->power[i]);
            }
        }
        HoldoutPduResult r;
        r.pdu_id = v.spec->pdu_id;
        r.mape = mape(pred, actual);
        if (r.mape.defined()) {
            mape_sum += r.mape.percent;
            mape_count++;
        }
        report.results.push_back(std::move(r));
    }
    if (mape_count > 0) {
        report.mean_mape = mape_sum / static_cast<double>(mape_count);
        std::vector<double> values;
        for (const auto& r : report.results)
            if (r.mape.defined()) values.push_back(r.mape.percent);
        report.cdf = make_cdf(values, {1, 2, 3, 4, 5, 7.5, 10, 15, 20});
    }
    return report;
}

}  // namespace pdupower
