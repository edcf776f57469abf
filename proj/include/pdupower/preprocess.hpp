#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/fleet.hpp"
#include "pdupower/parallel.hpp"
#include "pdupower/telemetry.hpp"

namespace pdupower {

struct CleaningConfig {
    double jump_threshold = 0.30;  // relative resource change that triggers smoothing
    double rate_ratio = 20.0;      // power/resource rate bound
    double median_fraction = 0.80; // low-power cutoff vs the daily median
    int max_gap = 3;               // longest gap filled by interpolation, periods
    double ewma_alpha = 0.3;
};

inline void validate_cleaning_config(const CleaningConfig& c) {
    if (c.jump_threshold <= 0 || c.rate_ratio <= 0 || c.median_fraction <= 0 || c.max_gap <= 0)
        throw ConfigError("cleaning config values must be strictly positive");
    if (c.median_fraction >= 1.0) throw ConfigError("median_fraction must be < 1");
    if (c.ewma_alpha <= 0.0 || c.ewma_alpha > 1.0) throw ConfigError("ewma_alpha must be in (0, 1]");
}

struct CleaningReport {
    std::size_t input_points = 0;
    std::size_t retained_points = 0;
    std::size_t removed_points = 0;  // any exclusion bit set
    std::size_t gaps_filled = 0;
    std::size_t gaps_unfilled = 0;
    std::size_t smoothed_points = 0;
    std::size_t rate_excluded = 0;
    std::size_t median_excluded = 0;
    std::size_t dead_day_points = 0;

    [[nodiscard]] double retained_fraction() const {
        return input_points == 0 ? 1.0
                                 : static_cast<double>(retained_points) / input_points;
    }
};

struct InterpolationCounts {
    std::size_t filled = 0;
    std::size_t unfilled = 0;
};

// Fills missing runs of length <= max_gap linearly between the bounding
// present samples. Runs that are longer, or touch a series end, stay missing
// and are flagged. Already-flagged points are left alone so a second pass is
// a no-op.
inline InterpolationCounts interpolate_gaps(std::span<double> power,
                                            std::span<std::uint8_t> flags, int max_gap) {
    if (power.size() != flags.size())
        throw ContractError("interpolate_gaps: power/flags length mismatch");
    InterpolationCounts counts;
    const std::size_t n = power.size();
    std::size_t i = 0;
    while (i < n) {
        if (!is_missing(power[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && is_missing(power[j])) ++j;
        const std::size_t run = j - i;
        const bool fillable = i > 0 && j < n && run <= static_cast<std::size_t>(max_gap);
        if (fillable) {
            const double left = power[i - 1];
            const double right = power[j];
            for (std::size_t k = i; k < j; ++k) {
                const double frac = static_cast<double>(k - i + 1) / (run + 1);
                power[k] = left + (right - left) * frac;
                flags[k] |= kFlagInterpolated;
                counts.filled++;
            }
        } else {
            for (std::size_t k = i; k < j; ++k) {
                if ((flags[k] & kFlagLongGap) == 0) counts.unfilled++;
                flags[k] |= kFlagLongGap;
            }
        }
        i = j;
    }
    return counts;
}

// Replaces implausible resource jumps with an EWMA of the running series.
// The comparison is against the previous retained (possibly smoothed) value;
// points already carrying the smoothed bit pass through untouched.
inline std::size_t ewma_smooth_jumps(std::span<double> series, std::span<std::uint8_t> flags,
                                     double jump_threshold, double ewma_alpha) {
    if (series.size() != flags.size())
        throw ContractError("ewma_smooth_jumps: series/flags length mismatch");
    std::size_t smoothed = 0;
    bool have_prev = false;
    double prev = 0.0;
    for (std::size_t t = 0; t < series.size(); ++t) {
        double v = series[t];
        if (is_missing(v)) continue;
        if (have_prev && prev > 0.0 && (flags[t] & kFlagSmoothed) == 0) {
            const double rel = std::abs(v - prev) / prev;
            if (rel > jump_threshold) {
                v = ewma_alpha * v + (1.0 - ewma_alpha) * prev;
                series[t] = v;
                flags[t] |= kFlagSmoothed;
                smoothed++;
            }
        }
        prev = v;
        have_prev = true;
    }
    return smoothed;
}

// Excludes samples whose power step cannot physically match the resource
// step: |dP|/power_scale > ratio * |dCPU|/cpu_scale between consecutive
// present samples. Comparisons restart after a hole.
inline std::size_t filter_rate_anomalies(std::span<const double> power,
                                         std::span<const double> cpu,
                                         std::span<std::uint8_t> flags, double rate_ratio,
                                         double power_scale, double cpu_scale) {
    if (power.size() != cpu.size() || power.size() != flags.size())
        throw ContractError("filter_rate_anomalies: series length mismatch");
    if (power_scale <= 0.0 || cpu_scale <= 0.0)
        throw ContractError("filter_rate_anomalies: scales must be positive");
    std::size_t excluded = 0;
    bool have_prev = false;
    double prev_power = 0.0;
    double prev_cpu = 0.0;
    for (std::size_t t = 0; t < power.size(); ++t) {
        if (is_missing(power[t])) {
            have_prev = false;
            continue;
        }
        if (have_prev) {
            const double dp = std::abs(power[t] - prev_power) / power_scale;
            const double dc = std::abs(cpu[t] - prev_cpu) / cpu_scale;
            if (dp > rate_ratio * dc) {
                if ((flags[t] & kFlagRateExcluded) == 0) excluded++;
                flags[t] |= kFlagRateExcluded;
            }
        }
        prev_power = power[t];
        prev_cpu = cpu[t];
        have_prev = true;
    }
    return excluded;
}

namespace detail {

// Nearest-rank median (lower middle for even counts).
inline double nearest_rank_median(std::vector<double>& v) {
    const std::size_t k = (v.size() + 1) / 2;  // 1-based rank ceil(n/2)
    std::nth_element(v.begin(), v.begin() + (k - 1), v.end());
    return v[k - 1];
}

}  // namespace detail

// Drops samples below median_fraction of the day's median power. The median
// is taken over the day's retained samples and the rule is iterated to a
// fixed point, which is what makes the whole cleaning pass idempotent.
// Returns the number of newly excluded points; a day with no usable samples
// is flagged dead.
inline std::size_t filter_low_power_day(std::span<const double> power,
                                        std::span<std::uint8_t> flags, double median_fraction,
                                        std::size_t* dead_day_points = nullptr) {
    if (power.size() != flags.size())
        throw ContractError("filter_low_power_day: power/flags length mismatch");
    std::size_t excluded = 0;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<double> retained;
        retained.reserve(power.size());
        for (std::size_t i = 0; i < power.size(); ++i)
            if (!is_missing(power[i]) && (flags[i] & kExclusionMask) == 0)
                retained.push_back(power[i]);
        if (retained.empty()) {
            for (std::size_t i = 0; i < power.size(); ++i) {
                if ((flags[i] & kFlagDeadDay) == 0 && dead_day_points != nullptr)
                    (*dead_day_points)++;
                flags[i] |= kFlagDeadDay;
            }
            return excluded;
        }
        const double cutoff = median_fraction * detail::nearest_rank_median(retained);
        for (std::size_t i = 0; i < power.size(); ++i) {
            if (is_missing(power[i]) || (flags[i] & kExclusionMask) != 0) continue;
            if (power[i] < cutoff) {
                flags[i] |= kFlagMedianExcluded;
                excluded++;
                changed = true;
            }
        }
    }
    return excluded;
}

// Full cleaning pass over a dataset, in filter order: fill gaps, smooth
// resource jumps, drop rate anomalies, then drop low-power PDU samples
// against the daily median. Machine series are normalized by their own
// nameplate scales, PDU series by the PDU totals. Exclusions are recorded as
// flags; no rows are deleted, so the pass is idempotent and timestamps are
// preserved.
inline CleaningReport preprocess_dataset(TelemetryDataset& ds, const Fleet& fleet,
                                         const CleaningConfig& cfg, int threads = 1) {
    validate_cleaning_config(cfg);

    struct SeriesCounts {
        InterpolationCounts interp;
        std::size_t smoothed = 0;
        std::size_t rate = 0;
        std::size_t median = 0;
        std::size_t dead = 0;
    };
    std::vector<SeriesCounts> machine_counts(ds.machines.size());
    std::vector<SeriesCounts> pdu_counts(ds.pdus.size());

    std::map<std::string, const MachineSpec*> machine_specs;
    for (const auto& p : fleet.pdus)
        for (const auto& m : p.machines) machine_specs[m.machine_id] = &m;

    parallel_for(ds.machines.size(), threads, [&](std::size_t i) {
        auto& s = ds.machines[i];
        auto it = machine_specs.find(s.machine_id);
        if (it == machine_specs.end())
            throw ContractError("telemetry names unknown machine " + s.machine_id);
        const MachineSpec& spec = *it->second;
        auto& c = machine_counts[i];
        c.interp = interpolate_gaps(s.power, s.flags, cfg.max_gap);
        c.smoothed = ewma_smooth_jumps(s.cpu, s.flags, cfg.jump_threshold, cfg.ewma_alpha);
        c.rate = filter_rate_anomalies(s.power, s.cpu, s.flags, cfg.rate_ratio, spec.max_power,
                                       spec.cpu_capacity);
    });

    parallel_for(ds.pdus.size(), threads, [&](std::size_t i) {
        auto& s = ds.pdus[i];
        const PduSpec* spec = fleet.find_pdu(s.pdu_id);
        if (spec == nullptr) throw ContractError("telemetry names unknown PDU " + s.pdu_id);
        auto& c = pdu_counts[i];
        c.interp = interpolate_gaps(s.power, s.flags, cfg.max_gap);
        c.smoothed = ewma_smooth_jumps(s.cpu, s.flags, cfg.jump_threshold, cfg.ewma_alpha);
        c.rate = filter_rate_anomalies(s.power, s.cpu, s.flags, cfg.rate_ratio, spec->max_power(),
                                       spec->cpu_capacity());
        // The daily-median rule is a PDU-meter heuristic; machine series skip it.
        for (int d = 0; d < ds.n_days; ++d) {
            const std::size_t off = static_cast<std::size_t>(d) * kPeriodsPerDay;
            c.median += filter_low_power_day(
                std::span<const double>(s.power).subspan(off, kPeriodsPerDay),
                std::span<std::uint8_t>(s.flags).subspan(off, kPeriodsPerDay),
                cfg.median_fraction, &c.dead);
        }
    });

    CleaningReport report;
    auto tally = [&report](const std::vector<std::uint8_t>& flags) {
        for (std::uint8_t f : flags) {
            report.input_points++;
            if ((f & kExclusionMask) != 0)
                report.removed_points++;
            else
                report.retained_points++;
        }
    };
    for (const auto& s : ds.machines) tally(s.flags);
    for (const auto& s : ds.pdus) tally(s.flags);
    for (const auto& c : machine_counts) {
        report.gaps_filled += c.interp.filled;
        report.gaps_unfilled += c.interp.unfilled;
        report.smoothed_points += c.smoothed;
        report.rate_excluded += c.rate;
    }
    for (const auto& c : pdu_counts) {
        report.gaps_filled += c.interp.filled;
        report.gaps_unfilled += c.interp.unfilled;
        report.smoothed_points += c.smoothed;
        report.rate_excluded += c.rate;
        report.median_excluded += c.median;
        report.dead_day_points += c.dead;
    }
    return report;
}

}  // namespace pdupower
