#include <gtest/gtest.h>

#include <cmath>

#include "pdupower/anomalies.hpp"
#include "pdupower/preprocess.hpp"
#include "test_fixtures.hpp"

using namespace pdupower;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::uint8_t> zero_flags(std::size_t n) { return std::vector<std::uint8_t>(n, 0); }

}  // namespace

TEST(InterpolateGaps, LinearMidpoint) {
    std::vector<double> power = {100, kNaN, 120};
    auto flags = zero_flags(3);
    const auto counts = interpolate_gaps(power, flags, 3);
    EXPECT_EQ(counts.filled, 1u);
    EXPECT_DOUBLE_EQ(power[1], 110.0);
    EXPECT_TRUE(flags[1] & kFlagInterpolated);
}

TEST(InterpolateGaps, NoGapsIsIdentity) {
    std::vector<double> power = {100, 105, 110};
    const auto before = power;
    auto flags = zero_flags(3);
    const auto counts = interpolate_gaps(power, flags, 3);
    EXPECT_EQ(counts.filled, 0u);
    EXPECT_EQ(counts.unfilled, 0u);
    EXPECT_EQ(power, before);
}

TEST(InterpolateGaps, LongGapLeftMissingAndFlagged) {
    std::vector<double> power = {100, kNaN, kNaN, kNaN, kNaN, kNaN, 130};
    auto flags = zero_flags(7);
    const auto counts = interpolate_gaps(power, flags, 3);
    EXPECT_EQ(counts.filled, 0u);
    EXPECT_EQ(counts.unfilled, 5u);
    for (int i = 1; i <= 5; ++i) {
        EXPECT_TRUE(std::isnan(power[i]));
        EXPECT_TRUE(flags[i] & kFlagLongGap);
    }
}

TEST(InterpolateGaps, NoExtrapolationAtSeriesEnds) {
    std::vector<double> power = {kNaN, 100, 110, kNaN};
    auto flags = zero_flags(4);
    interpolate_gaps(power, flags, 3);
    EXPECT_TRUE(std::isnan(power[0]));
    EXPECT_TRUE(std::isnan(power[3]));
    EXPECT_TRUE(flags[0] & kFlagLongGap);
    EXPECT_TRUE(flags[3] & kFlagLongGap);
}

TEST(EwmaSmoothJumps, BelowThresholdUnchanged) {
    std::vector<double> cpu = {100, 105, 103};
    const auto before = cpu;
    auto flags = zero_flags(3);
    EXPECT_EQ(ewma_smooth_jumps(cpu, flags, 0.30, 0.3), 0u);
    EXPECT_EQ(cpu, before);
}

TEST(EwmaSmoothJumps, JumpReplacedByEwma) {
    std::vector<double> cpu = {100, 200, 200};
    auto flags = zero_flags(3);
    const std::size_t n = ewma_smooth_jumps(cpu, flags, 0.30, 0.3);
    EXPECT_GE(n, 1u);
    // 0.3*200 + 0.7*100
    EXPECT_DOUBLE_EQ(cpu[1], 130.0);
    EXPECT_TRUE(flags[1] & kFlagSmoothed);
}

TEST(EwmaSmoothJumps, ConstantSeriesUnchanged) {
    std::vector<double> cpu(50, 400.0);
    auto flags = zero_flags(50);
    EXPECT_EQ(ewma_smooth_jumps(cpu, flags, 0.30, 0.3), 0u);
    for (double v : cpu) EXPECT_DOUBLE_EQ(v, 400.0);
}

TEST(EwmaSmoothJumps, ComparesAgainstPreviousRetainedValue) {
    // After smoothing index 1 to 130, index 2 (=135) is within 30% of 130.
    std::vector<double> cpu = {100, 200, 135};
    auto flags = zero_flags(3);
    ewma_smooth_jumps(cpu, flags, 0.30, 0.3);
    EXPECT_DOUBLE_EQ(cpu[1], 130.0);
    EXPECT_DOUBLE_EQ(cpu[2], 135.0);
    EXPECT_FALSE(flags[2] & kFlagSmoothed);
}

TEST(FilterRateAnomalies, NoChangeRetained) {
    std::vector<double> power = {500, 500, 500};
    std::vector<double> cpu = {100, 100, 100};
    auto flags = zero_flags(3);
    EXPECT_EQ(filter_rate_anomalies(power, cpu, flags, 20.0, 1000.0, 200.0), 0u);
    for (auto f : flags) EXPECT_EQ(f, 0);
}

TEST(FilterRateAnomalies, HandEvaluatedDrop) {
    // Normalized dPower = 0.5, normalized dCpu = 0.01: 0.5 > 20 * 0.01.
    std::vector<double> power = {500, 1000};
    std::vector<double> cpu = {100, 102};
    auto flags = zero_flags(2);
    EXPECT_EQ(filter_rate_anomalies(power, cpu, flags, 20.0, 1000.0, 200.0), 1u);
    EXPECT_TRUE(flags[1] & kFlagRateExcluded);
    EXPECT_FALSE(flags[0] & kFlagRateExcluded);
}

TEST(FilterRateAnomalies, MisalignedSeriesIsContractError) {
    std::vector<double> power = {500, 1000};
    std::vector<double> cpu = {100};
    auto flags = zero_flags(2);
    EXPECT_THROW(filter_rate_anomalies(power, cpu, flags, 20.0, 1000.0, 200.0), ContractError);
}

TEST(FilterLowPower, FlatDayKeepsEverything) {
    std::vector<double> power(kPeriodsPerDay, 500000.0);
    auto flags = zero_flags(power.size());
    EXPECT_EQ(filter_low_power_day(power, flags, 0.8), 0u);
}

TEST(FilterLowPower, HandEvaluatedWindowDrop) {
    // A 90-minute window at 200 kW in a 400 kW day: 200 < 0.8 * 400.
    std::vector<double> power(kPeriodsPerDay, 400000.0);
    for (int i = 100; i < 118; ++i) power[i] = 200000.0;
    auto flags = zero_flags(power.size());
    EXPECT_EQ(filter_low_power_day(power, flags, 0.8), 18u);
    for (int i = 0; i < kPeriodsPerDay; ++i)
        EXPECT_EQ((flags[i] & kFlagMedianExcluded) != 0, i >= 100 && i < 118) << i;
}

TEST(FilterLowPower, AllMissingDayIsFlaggedDead) {
    std::vector<double> power(kPeriodsPerDay, kNaN);
    auto flags = zero_flags(power.size());
    std::size_t dead = 0;
    filter_low_power_day(power, flags, 0.8, &dead);
    EXPECT_EQ(dead, static_cast<std::size_t>(kPeriodsPerDay));
    for (auto f : flags) EXPECT_TRUE(f & kFlagDeadDay);
}

TEST(FilterLowPower, IteratesToAFixedPoint) {
    // Dropping the lowest value raises the median enough to expose the next
    // one; a single pass would leave 8.2 behind.
    std::vector<double> power = {7, 8.2, 10, 10.5, 11, 12};
    auto flags = zero_flags(power.size());
    filter_low_power_day(power, flags, 0.8);
    auto flags2 = flags;
    filter_low_power_day(power, flags2, 0.8);
    EXPECT_EQ(flags, flags2);
}

namespace {

struct CleanFixture {
    Fleet fleet;
    TelemetryDataset raw;
};

CleanFixture make_clean_fixture(int days, double noise, std::uint64_t seed) {
    CleanFixture f{fixtures::make_fleet(2, 2, 25, 11), {}};
    f.raw = simulate_telemetry(f.fleet, LoadScenario{}, fixtures::sim_options(days, noise, seed, 2));
    return f;
}

}  // namespace

TEST(PreprocessDataset, CleanNoiseFreeInputHasZeroRemovals) {
    Fleet fleet = fixtures::make_fleet(1, 2, 20, 5);
    SimOptions opt = fixtures::sim_options(3, 0.0, 5);
    opt.overhead_step_fraction = 0.0;  // noise-free means the meters AND the walk
    TelemetryDataset ds = simulate_telemetry(fleet, fixtures::flat_scenario(), opt);
    const CleaningReport report = preprocess_dataset(ds, fleet, CleaningConfig{});
    EXPECT_EQ(report.removed_points, 0u);
    EXPECT_EQ(report.smoothed_points, 0u);
    EXPECT_EQ(report.gaps_filled, 0u);
    EXPECT_EQ(report.retained_points, report.input_points);
}

TEST(PreprocessDataset, ReportCountsAreConsistent) {
    auto f = make_clean_fixture(6, 0.02, 21);
    AnomalyConfig ac;
    ac.n_gaps = 3;
    ac.n_spikes = 4;
    ac.n_maintenance = 2;
    inject_anomalies(f.raw, ac, 77);
    const CleaningReport report = preprocess_dataset(f.raw, f.fleet, CleaningConfig{}, 2);
    EXPECT_EQ(report.removed_points + report.retained_points, report.input_points);
    EXPECT_GT(report.rate_excluded, 0u);
    EXPECT_GT(report.median_excluded, 0u);
    EXPECT_GT(report.gaps_filled, 0u);
}

TEST(PreprocessDataset, LedgerRecallAndCleanPrecision) {
    auto f = make_clean_fixture(10, 0.02, 33);
    AnomalyConfig ac;
    ac.n_gaps = 6;
    ac.n_spikes = 8;
    ac.n_maintenance = 3;
    const AnomalyLedger ledger = inject_anomalies(f.raw, ac, 99);
    preprocess_dataset(f.raw, f.fleet, CleaningConfig{}, 2);
    const CleaningScore score = score_cleaning(f.raw, ledger);
    EXPECT_GE(score.recall(), 0.9);
    EXPECT_LE(score.clean_removal_rate(), 0.01);
}

TEST(PreprocessDataset, InjectedSpikeIsDroppedByRateFilter) {
    auto f = make_clean_fixture(4, 0.02, 55);
    AnomalyConfig ac;
    ac.n_spikes = 5;
    const AnomalyLedger ledger = inject_anomalies(f.raw, ac, 3);
    preprocess_dataset(f.raw, f.fleet, CleaningConfig{}, 2);
    std::size_t caught = 0;
    for (const auto& r : ledger.records) {
        const auto& flags = f.raw.find_pdu(r.entity_id)->flags;
        caught += (flags[r.start] & kExclusionMask) != 0;
    }
    EXPECT_GE(caught, 4u);  // >= 80% of 5 even on an unlucky draw
}

TEST(PreprocessDataset, InjectedMaintenanceMatchesLedger) {
    auto f = make_clean_fixture(6, 0.02, 66);
    AnomalyConfig ac;
    ac.n_maintenance = 2;
    const AnomalyLedger ledger = inject_anomalies(f.raw, ac, 5);
    preprocess_dataset(f.raw, f.fleet, CleaningConfig{}, 2);
    for (const auto& r : ledger.records) {
        const auto& flags = f.raw.find_pdu(r.entity_id)->flags;
        for (std::size_t i = r.start; i < r.start + r.length; ++i)
            EXPECT_TRUE(flags[i] & kExclusionMask) << r.entity_id << " @" << i;
    }
}

TEST(PreprocessDataset, IdempotentOnItsOwnOutput) {
    auto f = make_clean_fixture(6, 0.02, 44);
    AnomalyConfig ac;
    ac.n_gaps = 4;
    ac.n_spikes = 5;
    ac.n_maintenance = 2;
    inject_anomalies(f.raw, ac, 8);
    preprocess_dataset(f.raw, f.fleet, CleaningConfig{}, 2);
    TelemetryDataset second = f.raw;
    const CleaningReport again = preprocess_dataset(second, f.fleet, CleaningConfig{}, 2);
    EXPECT_EQ(again.smoothed_points, 0u);
    EXPECT_EQ(again.rate_excluded, 0u);
    EXPECT_EQ(again.median_excluded, 0u);
    EXPECT_EQ(again.gaps_filled, 0u);
    for (std::size_t i = 0; i < f.raw.machines.size(); ++i) {
        EXPECT_EQ(second.machines[i].cpu, f.raw.machines[i].cpu);
        EXPECT_EQ(second.machines[i].flags, f.raw.machines[i].flags);
    }
    for (std::size_t i = 0; i < f.raw.pdus.size(); ++i) {
        EXPECT_EQ(second.pdus[i].power, f.raw.pdus[i].power);
        EXPECT_EQ(second.pdus[i].flags, f.raw.pdus[i].flags);
    }
}

TEST(PreprocessDataset, NoFabricationOutsideInterpolationAndSmoothing) {
    auto f = make_clean_fixture(4, 0.02, 50);
    const TelemetryDataset before = f.raw;
    AnomalyConfig ac;
    ac.n_gaps = 2;
    inject_anomalies(f.raw, ac, 4);
    const TelemetryDataset raw_with_anomalies = f.raw;
    preprocess_dataset(f.raw, f.fleet, CleaningConfig{}, 2);
    for (std::size_t s = 0; s < f.raw.machines.size(); ++s) {
        const auto& out = f.raw.machines[s];
        const auto& in = raw_with_anomalies.machines[s];
        for (std::size_t i = 0; i < out.power.size(); ++i) {
            if (out.flags[i] & kFlagInterpolated) continue;
            if (std::isnan(out.power[i]))
                EXPECT_TRUE(std::isnan(in.power[i]));
            else
                EXPECT_EQ(out.power[i], in.power[i]);
            if (!(out.flags[i] & kFlagSmoothed)) EXPECT_EQ(out.cpu[i], in.cpu[i]);
        }
    }
    (void)before;
}

TEST(CleaningConfigValidation, RejectsOutOfRangeValues) {
    CleaningConfig bad;
    bad.median_fraction = 1.5;
    EXPECT_THROW(validate_cleaning_config(bad), ConfigError);
    bad = CleaningConfig{};
    bad.ewma_alpha = 0.0;
    EXPECT_THROW(validate_cleaning_config(bad), ConfigError);
    bad = CleaningConfig{};
    bad.max_gap = 0;
    EXPECT_THROW(validate_cleaning_config(bad), ConfigError);
}
