#pragma once

#include <map>
#include <string>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/rng.hpp"
#include "pdupower/telemetry.hpp"

namespace pdupower {

enum class AnomalyKind { kGap, kSpike, kMaintenance };

inline const char* to_string(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::kGap: return "gap";
        case AnomalyKind::kSpike: return "spike";
        case AnomalyKind::kMaintenance: return "maintenance";
    }
    return "?";
}

struct AnomalyRecord {
    AnomalyKind kind;
    bool pdu_entity;         // true if entity_id names a PDU series
    std::string entity_id;
    std::size_t start;       // sample index within the series
    std::size_t length;
};

struct AnomalyLedger {
    std::vector<AnomalyRecord> records;

    [[nodiscard]] std::size_t total_points() const {
        std::size_t n = 0;
        for (const auto& r : records) n += r.length;
        return n;
    }
};

struct AnomalyConfig {
    int n_gaps = 0;
    int gap_len = 3;
    int n_spikes = 0;
    double spike_magnitude = 0.8;   // relative jump of the recorded reading
    int n_maintenance = 0;
    int maintenance_len = 18;       // periods; 18 = 90 minutes
    double maintenance_factor = 0.5;
    int max_placement_retries = 1000;
};

namespace detail {

class PlacementTracker {
public:
    bool try_claim(const std::string& entity, std::size_t start, std::size_t len) {
        auto& intervals = claimed_[entity];
        for (const auto& [s, l] : intervals)
            if (start < s + l && s < start + len) return false;
        intervals.emplace_back(start, len);
        return true;
    }

private:
    std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> claimed_;
};

}  // namespace detail

// Corrupts a simulated dataset with the three outlier classes the cleaning
// stage targets, and returns a ledger of every injected location so recall
// can be scored. Gaps hit machine or PDU power; spikes and maintenance dips
// hit the PDU meter (spikes sized to break the 20x power/resource bound,
// maintenance scaled below the daily-median threshold).
inline AnomalyLedger inject_anomalies(TelemetryDataset& ds, const AnomalyConfig& cfg,
                                      std::uint64_t seed) {
    if (cfg.gap_len < 1 || cfg.maintenance_len < 1)
        throw ConfigError("anomaly window lengths must be >= 1");
    if (cfg.maintenance_len > kPeriodsPerDay)
        throw ConfigError("maintenance windows must fit within one day");
    const std::size_t n = ds.samples_per_series();
    auto check_fits = [&](std::size_t len, const char* what) {
        if (len + 2 > n)
            throw ConfigError(std::string(what) + " window does not fit within the horizon");
    };

    AnomalyLedger ledger;
    detail::PlacementTracker tracker;
    RandomStream rng(seed, "anomalies", "placement");

    auto place = [&](const std::string& entity, std::size_t len) -> std::size_t {
        for (int attempt = 0; attempt < cfg.max_placement_retries; ++attempt) {
            // Keep one sample of margin at both series ends.
            const std::size_t start = 1 + rng.uniform_index(n - len - 1);
            if (tracker.try_claim(entity, start, len)) return start;
        }
        throw PlacementError("could not place a non-overlapping anomaly window on " + entity);
    };

    if (cfg.n_gaps > 0) check_fits(cfg.gap_len, "gap");
    for (int k = 0; k < cfg.n_gaps; ++k) {
        // Gaps model losses in stored data; any series can lose samples.
        const std::size_t total = ds.machines.size() + ds.pdus.size();
        if (total == 0) throw ConfigError("cannot inject gaps into an empty dataset");
        const std::size_t pick = rng.uniform_index(total);
        const bool on_pdu = pick >= ds.machines.size();
        auto& power = on_pdu ? ds.pdus[pick - ds.machines.size()].power : ds.machines[pick].power;
        auto& flags = on_pdu ? ds.pdus[pick - ds.machines.size()].flags : ds.machines[pick].flags;
        const std::string& id = on_pdu ? ds.pdus[pick - ds.machines.size()].pdu_id
                                       : ds.machines[pick].machine_id;
        const std::size_t start = place(id, cfg.gap_len);
        for (std::size_t i = start; i < start + cfg.gap_len; ++i) {
            power[i] = missing_value();
            flags[i] |= kFlagGap;
        }
        ledger.records.push_back({AnomalyKind::kGap, on_pdu, id, start,
                                  static_cast<std::size_t>(cfg.gap_len)});
    }

    if (cfg.n_spikes > 0 && ds.pdus.empty())
        throw ConfigError("cannot inject spikes into a dataset without PDU series");
    for (int k = 0; k < cfg.n_spikes; ++k) {
        auto& pdu = ds.pdus[rng.uniform_index(ds.pdus.size())];
        const std::size_t start = place(pdu.pdu_id, 1);
        const double direction = rng.uniform() < 0.5 ? -1.0 : 1.0;
        pdu.power[start] *= 1.0 + direction * cfg.spike_magnitude;
        ledger.records.push_back({AnomalyKind::kSpike, true, pdu.pdu_id, start, 1});
    }

    if (cfg.n_maintenance > 0) {
        check_fits(cfg.maintenance_len, "maintenance");
        if (ds.pdus.empty())
            throw ConfigError("cannot inject maintenance events without PDU series");
    }
    for (int k = 0; k < cfg.n_maintenance; ++k) {
        auto& pdu = ds.pdus[rng.uniform_index(ds.pdus.size())];
        // Maintenance dips stay within a single day so they sit clearly below
        // that day's median.
        std::size_t start = 0;
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_placement_retries && !placed; ++attempt) {
            const std::size_t day = rng.uniform_index(static_cast<std::size_t>(ds.n_days));
            const std::size_t period =
                rng.uniform_index(static_cast<std::size_t>(kPeriodsPerDay - cfg.maintenance_len));
            start = day * kPeriodsPerDay + period;
            if (start == 0) continue;
            placed = tracker.try_claim(pdu.pdu_id, start, cfg.maintenance_len);
        }
        if (!placed)
            throw PlacementError("could not place a non-overlapping maintenance window on " +
                                 pdu.pdu_id);
        for (std::size_t i = start; i < start + cfg.maintenance_len; ++i)
            pdu.power[i] *= cfg.maintenance_factor;
        ledger.records.push_back({AnomalyKind::kMaintenance, true, pdu.pdu_id, start,
                                  static_cast<std::size_t>(cfg.maintenance_len)});
    }

    return ledger;
}

// Recall/precision of the cleaning stage against the injected ledger.
// A ledgered point counts as handled when the cleaned dataset no longer
// carries its corrupted value: gaps must be filled or excluded, spike and
// maintenance points must be excluded. A clean point counts as removed only
// when an exclusion bit is set (smoothing replaces values but retains them).
struct CleaningScore {
    std::size_t anomalous_points = 0;
    std::size_t anomalous_handled = 0;
    std::size_t clean_points = 0;
    std::size_t clean_removed = 0;

    [[nodiscard]] double recall() const {
        return anomalous_points == 0 ? 1.0
                                     : static_cast<double>(anomalous_handled) / anomalous_points;
    }
    [[nodiscard]] double clean_removal_rate() const {
        return clean_points == 0 ? 0.0 : static_cast<double>(clean_removed) / clean_points;
    }
};

inline CleaningScore score_cleaning(const TelemetryDataset& cleaned, const AnomalyLedger& ledger) {
    std::map<std::string, std::vector<bool>> marked;
    auto marks = [&](const std::string& id, std::size_t n) -> std::vector<bool>& {
        auto& v = marked[id];
        if (v.empty()) v.assign(n, false);
        return v;
    };
    const std::size_t n = cleaned.samples_per_series();
    for (const auto& r : ledger.records) {
        auto& v = marks(r.entity_id, n);
        for (std::size_t i = r.start; i < r.start + r.length; ++i) v[i] = true;
    }

    CleaningScore score;
    for (const auto& r : ledger.records) {
        const MachineSeries* ms = r.pdu_entity ? nullptr : cleaned.find_machine(r.entity_id);
        const PduSeries* ps = r.pdu_entity ? cleaned.find_pdu(r.entity_id) : nullptr;
        if (ms == nullptr && ps == nullptr)
            throw ContractError("ledger names unknown entity " + r.entity_id);
        const auto& power = r.pdu_entity ? ps->power : ms->power;
        const auto& flags = r.pdu_entity ? ps->flags : ms->flags;
        for (std::size_t i = r.start; i < r.start + r.length; ++i) {
            score.anomalous_points++;
            const bool excluded = (flags[i] & kExclusionMask) != 0;
            const bool handled = r.kind == AnomalyKind::kGap
                                     ? (!is_missing(power[i]) || excluded)
                                     : excluded;
            if (handled) score.anomalous_handled++;
        }
    }

    auto tally_clean = [&](const std::string& id, const std::vector<std::uint8_t>& flags) {
        auto it = marked.find(id);
        const std::vector<bool>* v = it == marked.end() ? nullptr : &it->second;
        for (std::size_t i = 0; i < flags.size(); ++i) {
            if (v != nullptr && (*v)[i]) continue;
            score.clean_points++;
            if ((flags[i] & kExclusionMask) != 0) score.clean_removed++;
        }
    };
    for (const auto& m : cleaned.machines) tally_clean(m.machine_id, m.flags);
    for (const auto& p : cleaned.pdus) tally_clean(p.pdu_id, p.flags);
    return score;
}

}  // namespace pdupower
