#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pdupower/core.hpp"

namespace pdupower {

struct MapeResult {
    double percent = 0.0;
    std::size_t used = 0;
    std::size_t excluded = 0;  // missing or non-positive actuals

    [[nodiscard]] bool defined() const { return used > 0; }
};

// Mean absolute percent error over aligned series. Timestamps with missing
// or non-positive actuals are excluded and counted rather than erroring;
// maintenance-adjacent samples can legitimately be zero.
inline MapeResult mape(std::span<const double> predictions, std::span<const double> actuals) {
    if (predictions.size() != actuals.size())
        throw ContractError("mape: prediction/actual length mismatch");
    MapeResult r;
    double sum = 0.0;
    for (std::size_t t = 0; t < actuals.size(); ++t) {
        const double u = actuals[t];
        const double p = predictions[t];
        if (is_missing(u) || is_missing(p) || u <= 0.0) {
            r.excluded++;
            continue;
        }
        sum += std::abs(p - u) / u;
        r.used++;
    }
    if (r.used > 0) r.percent = 100.0 * sum / static_cast<double>(r.used);
    return r;
}

struct AvgDailyMape {
    double percent = 0.0;
    std::size_t days_used = 0;
    bool incomplete = false;  // fewer days than requested were available
};

// Arithmetic mean of the available daily MAPEs; missing days (NaN) are
// skipped and flagged.
inline AvgDailyMape avg_daily_mape(std::span<const double> daily_mapes) {
    AvgDailyMape out;
    double sum = 0.0;
    for (double v : daily_mapes) {
        if (is_missing(v)) {
            out.incomplete = true;
            continue;
        }
        sum += v;
        out.days_used++;
    }
    if (out.days_used > 0) out.percent = sum / static_cast<double>(out.days_used);
    return out;
}

// Nearest-rank percentile; p in (0, 100].
inline double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ContractError("percentile of empty set");
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

struct CdfTable {
    std::vector<double> thresholds;
    std::vector<double> fraction;  // of values <= threshold

    [[nodiscard]] double at(double threshold) const {
        double f = 0.0;
        for (std::size_t i = 0; i < thresholds.size(); ++i)
            if (thresholds[i] <= threshold) f = fraction[i];
        return f;
    }
};

// Empirical CDF over the given thresholds. The largest observed value is
// appended as a final threshold when needed so the table always ends at 1.
inline CdfTable make_cdf(std::span<const double> values, std::vector<double> thresholds) {
    if (values.empty()) throw ContractError("cdf of empty value set");
    std::sort(thresholds.begin(), thresholds.end());
    const double vmax = *std::max_element(values.begin(), values.end());
    if (thresholds.empty() || thresholds.back() < vmax) thresholds.push_back(vmax);
    CdfTable table;
    for (double thr : thresholds) {
        std::size_t count = 0;
        for (double v : values) count += v <= thr;
        table.thresholds.push_back(thr);
        table.fraction.push_back(static_cast<double>(count) / static_cast<double>(values.size()));
    }
    return table;
}

struct WupeResult {
    double percent = 0.0;
    std::size_t instances = 0;  // qualifying high-regime instants examined
    bool defined = false;
};

// Worst underprediction percent error over qualifying instants. Negative
// when the model never underpredicted in the window.
inline WupeResult worst_underprediction(std::span<const double> predictions,
                                        std::span<const double> actuals,
                                        std::span<const std::uint8_t> qualifying) {
    if (predictions.size() != actuals.size() || predictions.size() != qualifying.size())
        throw ContractError("wupe: series length mismatch");
    WupeResult r;
    for (std::size_t t = 0; t < actuals.size(); ++t) {
        if (!qualifying[t]) continue;
        const double u = actuals[t];
        const double p = predictions[t];
        if (is_missing(u) || is_missing(p) || u <= 0.0) continue;
        const double err = 100.0 * (u - p) / u;
        if (!r.defined || err > r.percent) r.percent = err;
        r.defined = true;
        r.instances++;
    }
    return r;
}

}  // namespace pdupower
