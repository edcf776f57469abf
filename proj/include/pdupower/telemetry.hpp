#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/fleet.hpp"
#include "pdupower/parallel.hpp"
#include "pdupower/rng.hpp"

namespace pdupower {

// Fixed-cadence series. Index i maps to timestamp
// (day_start + i / 288, i % 288); power may be NaN (gap).
struct MachineSeries {
    std::string machine_id;
    std::vector<double> cpu;    // cores
    std::vector<double> power;  // watts, recorded
    std::vector<std::uint8_t> flags;
};

struct PduSeries {
    std::string pdu_id;
    std::vector<double> cpu;             // cores, sum over machines
    std::vector<double> power;           // watts, recorded by the PDU meter
    std::vector<double> it_power;        // watts, ground truth (simulator only)
    std::vector<double> overhead_power;  // watts, ground truth (simulator only)
    std::vector<std::uint8_t> flags;
};

struct TelemetryDataset {
    int day_start = 0;
    int n_days = 0;
    std::vector<MachineSeries> machines;
    std::vector<PduSeries> pdus;

    [[nodiscard]] std::size_t samples_per_series() const {
        return static_cast<std::size_t>(n_days) * kPeriodsPerDay;
    }
    [[nodiscard]] std::size_t index_of(Timestamp ts) const {
        return static_cast<std::size_t>(ts.day - day_start) * kPeriodsPerDay + ts.period;
    }
    [[nodiscard]] Timestamp timestamp_at(std::size_t i) const {
        return {day_start + static_cast<std::int32_t>(i / kPeriodsPerDay),
                static_cast<std::int32_t>(i % kPeriodsPerDay)};
    }
    [[nodiscard]] const PduSeries* find_pdu(std::string_view id) const {
        for (const auto& p : pdus)
            if (p.pdu_id == id) return &p;
        return nullptr;
    }
    [[nodiscard]] const MachineSeries* find_machine(std::string_view id) const {
        for (const auto& m : machines)
            if (m.machine_id == id) return &m;
        return nullptr;
    }
};

// Usable for training/evaluation: value present and not excluded by cleaning.
inline bool sample_usable(double power, std::uint8_t flags) {
    return !is_missing(power) && (flags & kExclusionMask) == 0;
}

// Planned compute-load drop, applied tier by tier starting with the least
// critical machines. Tier t of machine m is m's index within its PDU modulo
// the number of tiers; tier_fractions[t] is the utilization cut for tier t.
struct DropWindow {
    int day = 0;
    int start_period = 190;  // 15:50
    int end_period = 209;    // 17:25, inclusive
    std::vector<double> tier_fractions = {0.2, 0.7, 0.95};
    int stagger_periods = 2;
};

struct LoadScenario {
    // Per-machine diurnal profile, drawn once per machine.
    double mean_low = 0.35;
    double mean_high = 0.65;
    double amplitude_low = 0.10;
    double amplitude_high = 0.20;
    // Machines dedicated to one application run flatter profiles.
    double dedicated_amplitude_factor = 0.3;
    // Per-sample utilization noise (white) and per-PDU shared load swing
    // (AR(1)), both in utilization units.
    double utilization_noise_sigma = 0.015;
    double common_sigma = 0.03;
    double common_phi = 0.95;
    std::optional<DropWindow> drop_window;
};

inline void validate_scenario(const LoadScenario& s) {
    if (s.mean_low > s.mean_high || s.amplitude_low > s.amplitude_high)
        throw ConfigError("scenario ranges must satisfy low <= high");
    if (s.utilization_noise_sigma < 0 || s.common_sigma < 0)
        throw ConfigError("scenario noise sigmas must be non-negative");
    if (s.common_phi < 0 || s.common_phi >= 1)
        throw ConfigError("common_phi must be in [0, 1)");
    if (s.drop_window) {
        const auto& d = *s.drop_window;
        if (d.start_period >= d.end_period)
            throw ConfigError("drop_window start must precede end");
        if (d.start_period < 0 || d.end_period >= kPeriodsPerDay)
            throw ConfigError("drop_window periods must lie within one day");
        if (d.tier_fractions.empty())
            throw ConfigError("drop_window needs at least one tier fraction");
        for (double f : d.tier_fractions)
            if (f < 0.0 || f > 1.0)
                throw ConfigError("drop fractions must be in [0, 1]");
    }
}

struct SimOptions {
    int n_days = 1;
    int day_start = 0;
    double meter_noise_sigma = 0.0;  // stationary sigma of the log-noise
    double meter_noise_phi = 0.97;   // persistence of the meter error
    std::uint64_t seed = 1;
    int threads = 1;
    bool keep_machine_samples = true;
    // Non-IT (network + cooling) power: mean-reverting walk inside a band,
    // relative to P^N + P^C.
    double overhead_setpoint_fraction = 0.6;
    double overhead_floor_fraction = 0.3;
    double overhead_ceil_fraction = 1.0;
    double overhead_reversion = 0.02;
    double overhead_step_fraction = 0.01;
};

namespace detail {

struct MachineProfile {
    double mean;
    double amplitude;
    double phase;
    int tier;
};

inline MachineProfile draw_profile(const MachineSpec& m, int index_in_pdu,
                                   const LoadScenario& sc, std::uint64_t seed) {
    RandomStream rng(seed, m.machine_id, "profile");
    MachineProfile p;
    p.mean = rng.uniform(sc.mean_low, sc.mean_high);
    p.amplitude = rng.uniform(sc.amplitude_low, sc.amplitude_high);
    if (m.dedicated_label == "dedicated") p.amplitude *= sc.dedicated_amplitude_factor;
    p.phase = rng.uniform(0.0, kPeriodsPerDay);
    const int n_tiers = sc.drop_window ? static_cast<int>(sc.drop_window->tier_fractions.size()) : 1;
    p.tier = index_in_pdu % n_tiers;
    return p;
}

// Lognormal AR(1) meter error; stationary sigma equals `sigma`. Persistence
// keeps consecutive readings correlated the way a drifting meter calibration
// does. One draw per step whether or not the step is recorded.
class MeterNoiseChain {
public:
    MeterNoiseChain(std::uint64_t seed, std::string_view entity, double sigma, double phi)
        : rng_(seed, entity, "meter"), sigma_(sigma), phi_(phi) {
        if (sigma_ > 0.0) state_ = rng_.gaussian() * sigma_;
    }
    double factor() const { return sigma_ > 0.0 ? std::exp(state_) : 1.0; }
    void step() {
        if (sigma_ <= 0.0) return;
        state_ = phi_ * state_ + sigma_ * std::sqrt(1.0 - phi_ * phi_) * rng_.gaussian();
    }

private:
    RandomStream rng_;
    double sigma_;
    double phi_;
    double state_ = 0.0;
};

inline double drop_factor(const DropWindow& d, int day, int period, int tier, int n_tiers) {
    if (day != d.day) return 1.0;
    // Least critical tier (highest index) terminates first.
    const int tier_start = d.start_period + (n_tiers - 1 - tier) * d.stagger_periods;
    if (period >= tier_start && period <= d.end_period)
        return 1.0 - d.tier_fractions[static_cast<std::size_t>(tier)];
    return 1.0;
}

}  // namespace detail

// Generates recorded machine and PDU telemetry over
// [day_start, day_start + n_days). Ground-truth IT and overhead power ride
// along in the PDU series so models can be scored against an oracle.
//
// All random streams are keyed by (seed, entity id) and always advance from
// absolute day 0, so a run over [k, n) equals the tail of a run over [0, n)
// and the output is independent of thread count.
inline TelemetryDataset simulate_telemetry(const Fleet& fleet, const LoadScenario& scenario,
                                           const SimOptions& opt) {
    if (opt.n_days < 1) throw ConfigError("n_days must be >= 1");
    if (opt.day_start < 0) throw ConfigError("day_start must be >= 0");
    if (opt.meter_noise_sigma < 0) throw ConfigError("meter_noise_sigma must be >= 0");
    validate_scenario(scenario);

    TelemetryDataset ds;
    ds.day_start = opt.day_start;
    ds.n_days = opt.n_days;
    const std::size_t n_samples = ds.samples_per_series();
    const std::int64_t t_begin = static_cast<std::int64_t>(opt.day_start) * kPeriodsPerDay;
    const std::int64_t t_end = t_begin + static_cast<std::int64_t>(n_samples);

    ds.pdus.resize(fleet.pdus.size());
    std::vector<std::vector<MachineSeries>> machine_blocks(fleet.pdus.size());

    parallel_for(fleet.pdus.size(), opt.threads, [&](std::size_t pi) {
        const PduSpec& pdu = fleet.pdus[pi];
        const int n_tiers =
            scenario.drop_window ? static_cast<int>(scenario.drop_window->tier_fractions.size()) : 1;

        std::vector<detail::MachineProfile> profiles;
        std::vector<RandomStream> util_noise;
        std::vector<detail::MeterNoiseChain> machine_meters;
        profiles.reserve(pdu.machines.size());
        for (std::size_t mi = 0; mi < pdu.machines.size(); ++mi) {
            const MachineSpec& m = pdu.machines[mi];
            profiles.push_back(detail::draw_profile(m, static_cast<int>(mi), scenario, opt.seed));
            util_noise.emplace_back(opt.seed, m.machine_id, "util");
            machine_meters.emplace_back(opt.seed, m.machine_id, opt.meter_noise_sigma,
                                        opt.meter_noise_phi);
        }
        RandomStream common_rng(opt.seed, pdu.pdu_id, "common");
        RandomStream overhead_rng(opt.seed, pdu.pdu_id, "overhead");
        detail::MeterNoiseChain pdu_meter(opt.seed, pdu.pdu_id, opt.meter_noise_sigma,
                                          opt.meter_noise_phi);

        const double overhead_cap = pdu.network_max_power + pdu.cooling_max_power;
        const double overhead_setpoint = opt.overhead_setpoint_fraction * overhead_cap;
        const double overhead_floor = opt.overhead_floor_fraction * overhead_cap;
        const double overhead_ceil = opt.overhead_ceil_fraction * overhead_cap;
        double overhead = overhead_setpoint;
        double common = scenario.common_sigma > 0 ? common_rng.gaussian() * scenario.common_sigma : 0.0;

        PduSeries& out = ds.pdus[pi];
        out.pdu_id = pdu.pdu_id;
        out.cpu.resize(n_samples);
        out.power.resize(n_samples);
        out.it_power.resize(n_samples);
        out.overhead_power.resize(n_samples);
        out.flags.assign(n_samples, 0);

        auto& mblock = machine_blocks[pi];
        if (opt.keep_machine_samples) {
            mblock.resize(pdu.machines.size());
            for (std::size_t mi = 0; mi < pdu.machines.size(); ++mi) {
                mblock[mi].machine_id = pdu.machines[mi].machine_id;
                mblock[mi].cpu.resize(n_samples);
                mblock[mi].power.resize(n_samples);
                mblock[mi].flags.assign(n_samples, 0);
            }
        }

        for (std::int64_t t = 0; t < t_end; ++t) {
            const int day = static_cast<int>(t / kPeriodsPerDay);
            const int period = static_cast<int>(t % kPeriodsPerDay);
            const bool record = t >= t_begin;
            const std::size_t i = record ? static_cast<std::size_t>(t - t_begin) : 0;

            double cpu_sum = 0.0;
            double it_true = 0.0;
            for (std::size_t mi = 0; mi < pdu.machines.size(); ++mi) {
                const MachineSpec& m = pdu.machines[mi];
                const detail::MachineProfile& pf = profiles[mi];
                double base = pf.mean + pf.amplitude * std::sin(2.0 * std::numbers::pi *
                                                                (period + pf.phase) / kPeriodsPerDay);
                if (scenario.drop_window)
                    base *= detail::drop_factor(*scenario.drop_window, day, period, pf.tier, n_tiers);
                double u = base + common;
                if (scenario.utilization_noise_sigma > 0)
                    u += util_noise[mi].gaussian() * scenario.utilization_noise_sigma;
                u = std::clamp(u, 0.0, 1.0);

                const double true_power = machine_power_curve(m, u);
                const double recorded_power = true_power * machine_meters[mi].factor();
                machine_meters[mi].step();

                cpu_sum += u * m.cpu_capacity;
                it_true += true_power;
                if (record && opt.keep_machine_samples) {
                    mblock[mi].cpu[i] = u * m.cpu_capacity;
                    mblock[mi].power[i] = recorded_power;
                }
            }

            if (record) {
                out.cpu[i] = cpu_sum;
                out.it_power[i] = it_true;
                out.overhead_power[i] = overhead;
                out.power[i] = (it_true + overhead) * pdu_meter.factor();
            }
            pdu_meter.step();

            if (scenario.common_phi > 0 && scenario.common_sigma > 0)
                common = scenario.common_phi * common +
                         scenario.common_sigma * std::sqrt(1.0 - scenario.common_phi * scenario.common_phi) *
                             common_rng.gaussian();
            overhead += opt.overhead_reversion * (overhead_setpoint - overhead) +
                        opt.overhead_step_fraction * overhead_cap * overhead_rng.gaussian();
            overhead = std::clamp(overhead, overhead_floor, overhead_ceil);
        }
    });

    for (auto& block : machine_blocks)
        for (auto& ms : block) ds.machines.push_back(std::move(ms));
    return ds;
}

// Concatenates a later simulation onto an earlier one. Entities must match
// and the day ranges must be contiguous; used for mid-horizon hardware-change
// experiments where the fleet differs between the two halves.
inline TelemetryDataset concat_days(const TelemetryDataset& a, const TelemetryDataset& b) {
    if (b.day_start != a.day_start + a.n_days)
        throw ContractError("concat_days: day ranges are not contiguous");
    if (a.machines.size() != b.machines.size() || a.pdus.size() != b.pdus.size())
        throw ContractError("concat_days: entity sets differ");
    TelemetryDataset out = a;
    out.n_days += b.n_days;
    for (std::size_t i = 0; i < out.machines.size(); ++i) {
        if (out.machines[i].machine_id != b.machines[i].machine_id)
            throw ContractError("concat_days: machine order differs");
        auto& dst = out.machines[i];
        const auto& src = b.machines[i];
        dst.cpu.insert(dst.cpu.end(), src.cpu.begin(), src.cpu.end());
        dst.power.insert(dst.power.end(), src.power.begin(), src.power.end());
        dst.flags.insert(dst.flags.end(), src.flags.begin(), src.flags.end());
    }
    for (std::size_t i = 0; i < out.pdus.size(); ++i) {
        if (out.pdus[i].pdu_id != b.pdus[i].pdu_id)
            throw ContractError("concat_days: PDU order differs");
        auto& dst = out.pdus[i];
        const auto& src = b.pdus[i];
        dst.cpu.insert(dst.cpu.end(), src.cpu.begin(), src.cpu.end());
        dst.power.insert(dst.power.end(), src.power.begin(), src.power.end());
        dst.it_power.insert(dst.it_power.end(), src.it_power.begin(), src.it_power.end());
        dst.overhead_power.insert(dst.overhead_power.end(), src.overhead_power.begin(),
                                  src.overhead_power.end());
        dst.flags.insert(dst.flags.end(), src.flags.begin(), src.flags.end());
    }
    return out;
}

}  // namespace pdupower
