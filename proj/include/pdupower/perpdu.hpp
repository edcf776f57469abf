#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/fleet.hpp"
#include "pdupower/parallel.hpp"
#include "pdupower/telemetry.hpp"

namespace pdupower {

enum class Regime { kLow = 0, kMedium = 1, kHigh = 2 };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::kLow: return "low";
        case Regime::kMedium: return "medium";
        case Regime::kHigh: return "high";
    }
    return "?";
}

struct RegimeLine {
    double alpha = 0.0;  // watts
    double beta = 0.0;   // watts per core, >= 0
    bool fallback = false;  // fit from the global line for lack of samples
};

// Piecewise-linear PDU power model over three equal-width CPU-usage regimes.
struct PerPduModel {
    std::string pdu_id;
    double cpu_min = 0.0;  // cores, min usage over the training window
    double cpu_max = 0.0;  // cores, max usage over the training window
    double lambda = 0.0;   // (cpu_max - cpu_min) / 3
    std::array<RegimeLine, 3> lines;
    int trained_day = -1;

    [[nodiscard]] const RegimeLine& line(Regime r) const {
        return lines[static_cast<std::size_t>(r)];
    }
};

// Regime boundaries close the low side: u == cpu_min + lambda is low. Usage
// outside [cpu_min, cpu_max] extrapolates with the nearest regime, so the
// three regimes partition [0, inf).
inline Regime segment_regime(double u_cpu, const PerPduModel& m) {
    if (u_cpu <= m.cpu_min + m.lambda) return Regime::kLow;
    if (u_cpu >= m.cpu_min + 2.0 * m.lambda) return Regime::kHigh;
    return Regime::kMedium;
}

struct WeightedSample {
    double cpu = 0.0;
    double power = 0.0;
    double weight = 1.0;
};

struct TrainingWindow {
    std::string pdu_id;
    int training_day = 0;
    std::vector<WeightedSample> samples;
};

inline constexpr int kTrainingWindowDays = 7;
inline constexpr int kMinRegimeSamples = 30;

// Collects the most recent `window_days` days of usable (cpu, power) pairs
// ending at `training_day`, weighted 1/(1+d) by age in days.
inline TrainingWindow make_training_window(const TelemetryDataset& ds, const PduSeries& series,
                                           int training_day, int window_days = kTrainingWindowDays) {
    TrainingWindow w;
    w.pdu_id = series.pdu_id;
    w.training_day = training_day;
    for (int age = 0; age < window_days; ++age) {
        const int day = training_day - age;
        if (day < ds.day_start || day >= ds.day_start + ds.n_days) continue;
        const double weight = 1.0 / (1.0 + age);
        const std::size_t off = ds.index_of({day, 0});
        for (int p = 0; p < kPeriodsPerDay; ++p) {
            const std::size_t i = off + p;
            if (sample_usable(series.power[i], series.flags[i]))
                w.samples.push_back({series.cpu[i], series.power[i], weight});
        }
    }
    return w;
}

namespace detail {

// Weighted least squares, two-pass centered form: means first, then moments
// about them. A negative slope is clamped to zero and the intercept refit as
// the weighted mean, keeping predictions monotone in CPU usage; the same
// degenerate form covers zero CPU variance.
template <typename Iter>
RegimeLine solve_wls(Iter begin, Iter end) {
    double sum_w = 0.0;
    double sum_wx = 0.0;
    double sum_wy = 0.0;
    for (Iter it = begin; it != end; ++it) {
        sum_w += it->weight;
        sum_wx += it->weight * it->cpu;
        sum_wy += it->weight * it->power;
    }
    const double mean_x = sum_wx / sum_w;
    const double mean_y = sum_wy / sum_w;
    double sxx = 0.0;
    double sxy = 0.0;
    for (Iter it = begin; it != end; ++it) {
        const double dx = it->cpu - mean_x;
        sxx += it->weight * dx * dx;
        sxy += it->weight * dx * (it->power - mean_y);
    }
    RegimeLine line;
    if (!(sxx > 0.0)) {
        line.alpha = mean_y;
        return line;
    }
    const double beta = sxy / sxx;
    if (beta < 0.0) {
        line.alpha = mean_y;
        return line;
    }
    line.beta = beta;
    line.alpha = mean_y - beta * mean_x;
    return line;
}

}  // namespace detail

inline PerPduModel fit_per_pdu(const TrainingWindow& window,
                               int min_regime_samples = kMinRegimeSamples) {
    if (window.samples.empty())
        throw TrainingError("per-PDU fit: empty training window for " + window.pdu_id);

    PerPduModel model;
    model.pdu_id = window.pdu_id;
    model.trained_day = window.training_day;
    model.cpu_min = window.samples.front().cpu;
    model.cpu_max = window.samples.front().cpu;
    for (const auto& s : window.samples) {
        model.cpu_min = std::min(model.cpu_min, s.cpu);
        model.cpu_max = std::max(model.cpu_max, s.cpu);
    }
    model.lambda = (model.cpu_max - model.cpu_min) / 3.0;

    std::array<std::vector<WeightedSample>, 3> per_regime;
    for (const auto& s : window.samples)
        per_regime[static_cast<std::size_t>(segment_regime(s.cpu, model))].push_back(s);
    const RegimeLine global_line =
        detail::solve_wls(window.samples.begin(), window.samples.end());
    for (std::size_t r = 0; r < 3; ++r) {
        if (per_regime[r].size() < static_cast<std::size_t>(min_regime_samples)) {
            model.lines[r] = global_line;
            model.lines[r].fallback = true;
        } else {
            model.lines[r] = detail::solve_wls(per_regime[r].begin(), per_regime[r].end());
        }
    }
    return model;
}

inline double predict_per_pdu(const PerPduModel& model, double u_cpu) {
    if (u_cpu < 0.0)
        throw DomainError("per-PDU prediction: negative CPU usage " + format_double(u_cpu));
    const RegimeLine& line = model.line(segment_regime(u_cpu, model));
    return line.alpha + line.beta * u_cpu;
}

// Soft sanity checks used after retraining: predictions at the observed CPU
// bounds should stay inside a generous power envelope, and regime-boundary
// discontinuities should be small on healthy fits.
inline std::vector<std::string> validate_model_sanity(const PerPduModel& m, const PduSpec& spec) {
    std::vector<std::string> warnings;
    const double lo = 0.5 * spec.idle_power();
    const double hi = 1.5 * spec.max_power();
    for (double u : {m.cpu_min, m.cpu_max}) {
        const double p = predict_per_pdu(m, u);
        if (p < lo || p > hi)
            warnings.push_back(m.pdu_id + ": prediction " + format_double(p) + " at cpu " +
                               format_double(u) + " outside [" + format_double(lo) + ", " +
                               format_double(hi) + "]");
    }
    const double jump_budget = 0.10 * spec.max_power();
    const double b1 = m.cpu_min + m.lambda;
    const double b2 = m.cpu_min + 2.0 * m.lambda;
    const auto eval = [&](Regime r, double u) {
        return m.line(r).alpha + m.line(r).beta * u;
    };
    if (std::abs(eval(Regime::kLow, b1) - eval(Regime::kMedium, b1)) > jump_budget)
        warnings.push_back(m.pdu_id + ": low/medium boundary discontinuity exceeds 10% of max power");
    if (std::abs(eval(Regime::kMedium, b2) - eval(Regime::kHigh, b2)) > jump_budget)
        warnings.push_back(m.pdu_id + ": medium/high boundary discontinuity exceeds 10% of max power");
    return warnings;
}

// Daily models keyed by (day, pdu). Prior days are kept for drift analysis.
struct PerPduModelStore {
    std::map<int, std::map<std::string, PerPduModel>> by_day;

    void put(const PerPduModel& m) { by_day[m.trained_day][m.pdu_id] = m; }
    [[nodiscard]] const PerPduModel* find(int day, const std::string& pdu_id) const {
        auto d = by_day.find(day);
        if (d == by_day.end()) return nullptr;
        auto p = d->second.find(pdu_id);
        return p == d->second.end() ? nullptr : &p->second;
    }
};

struct DailyRetrainResult {
    std::map<std::string, PerPduModel> models;
    std::vector<std::string> skipped_pdus;  // no usable data in the window
};

inline DailyRetrainResult daily_retrain(const TelemetryDataset& ds, int training_day,
                                        int window_days = kTrainingWindowDays,
                                        int min_regime_samples = kMinRegimeSamples,
                                        int threads = 1) {
    DailyRetrainResult result;
    std::vector<PerPduModel> models(ds.pdus.size());
    std::vector<char> trained(ds.pdus.size(), 0);
    parallel_for(ds.pdus.size(), threads, [&](std::size_t i) {
        const TrainingWindow w = make_training_window(ds, ds.pdus[i], training_day, window_days);
        if (w.samples.empty()) return;
        models[i] = fit_per_pdu(w, min_regime_samples);
        trained[i] = 1;
    });
    for (std::size_t i = 0; i < ds.pdus.size(); ++i) {
        if (trained[i])
            result.models.emplace(ds.pdus[i].pdu_id, std::move(models[i]));
        else
            result.skipped_pdus.push_back(ds.pdus[i].pdu_id);
    }
    return result;
}

}  // namespace pdupower
