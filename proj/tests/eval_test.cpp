#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pdupower/eval.hpp"
#include "pdupower/rng.hpp"

using namespace pdupower;

TEST(Mape, PerfectPredictionIsZero) {
    const std::vector<double> v = {100, 200, 300};
    EXPECT_DOUBLE_EQ(mape(v, v).percent, 0.0);
}

TEST(Mape, HandArithmetic) {
    const std::vector<double> pred = {90, 110};
    const std::vector<double> actual = {100, 100};
    const MapeResult r = mape(pred, actual);
    EXPECT_DOUBLE_EQ(r.percent, 10.0);
    EXPECT_EQ(r.used, 2u);
}

TEST(Mape, NonPositiveActualsExcludedAndCounted) {
    const std::vector<double> pred = {90, 110, 50};
    const std::vector<double> actual = {100, 0.0, -5.0};
    const MapeResult r = mape(pred, actual);
    EXPECT_EQ(r.used, 1u);
    EXPECT_EQ(r.excluded, 2u);
    EXPECT_DOUBLE_EQ(r.percent, 10.0);
}

TEST(Mape, LengthMismatchIsContractError) {
    EXPECT_THROW(mape(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), ContractError);
}

TEST(Mape, MatchesNaiveRecomputation) {
    RandomStream rng(100);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> pred;
        std::vector<double> actual;
        for (int i = 0; i < kPeriodsPerDay; ++i) {
            actual.push_back(rng.uniform(1e5, 9e5));
            pred.push_back(actual.back() * rng.uniform(0.9, 1.1));
        }
        const double got = mape(pred, actual).percent;
        const double want = oracles::naive_mape_percent(pred, actual);
        EXPECT_NEAR(got, want, 1e-12 * want);
    }
}

TEST(AvgDailyMape, FlatWeek) {
    const std::vector<double> days(7, 4.0);
    EXPECT_DOUBLE_EQ(avg_daily_mape(days).percent, 4.0);
}

TEST(AvgDailyMape, HandMean) {
    const std::vector<double> days = {2, 4, 6, 2, 4, 6, 4};
    const AvgDailyMape r = avg_daily_mape(days);
    EXPECT_DOUBLE_EQ(r.percent, 4.0);
    EXPECT_EQ(r.days_used, 7u);
    EXPECT_FALSE(r.incomplete);
}

TEST(AvgDailyMape, MissingDaysFlaggedAndSkipped) {
    const std::vector<double> days = {2, missing_value(), 6};
    const AvgDailyMape r = avg_daily_mape(days);
    EXPECT_DOUBLE_EQ(r.percent, 4.0);
    EXPECT_TRUE(r.incomplete);
    EXPECT_EQ(r.days_used, 2u);
}

TEST(AvgDailyMape, MatchesNaiveMean) {
    RandomStream rng(7);
    std::vector<double> days;
    for (int i = 0; i < 7; ++i) days.push_back(rng.uniform(0, 10));
    double naive = 0.0;
    for (double d : days) naive += d;
    naive /= 7.0;
    EXPECT_NEAR(avg_daily_mape(days).percent, naive, 1e-12 * naive);
}

TEST(MakeCdf, SinglePduBelowThreshold) {
    const std::vector<double> values = {3.0};
    const CdfTable cdf = make_cdf(values, {5.0});
    EXPECT_DOUBLE_EQ(cdf.at(5.0), 1.0);
}

TEST(MakeCdf, HalfBelow) {
    const std::vector<double> values = {1.0, 9.0};
    const CdfTable cdf = make_cdf(values, {5.0});
    EXPECT_DOUBLE_EQ(cdf.at(5.0), 0.5);
}

TEST(MakeCdf, MonotoneAndEndsAtOne) {
    RandomStream rng(17);
    std::vector<double> values;
    for (int i = 0; i < 200; ++i) values.push_back(rng.uniform(0, 25));
    const CdfTable cdf = make_cdf(values, {1, 2, 5, 10});
    for (std::size_t i = 1; i < cdf.fraction.size(); ++i)
        EXPECT_GE(cdf.fraction[i], cdf.fraction[i - 1]);
    EXPECT_DOUBLE_EQ(cdf.fraction.back(), 1.0);
    for (std::size_t i = 0; i < cdf.thresholds.size(); ++i)
        EXPECT_DOUBLE_EQ(cdf.fraction[i],
                         oracles::naive_cdf_fraction(values, cdf.thresholds[i]));
}

TEST(Percentile, NearestRank) {
    // Nearest-rank on {1..10}: p50 -> 5th value, p99 -> 10th.
    std::vector<double> v;
    for (int i = 1; i <= 10; ++i) v.push_back(i);
    EXPECT_DOUBLE_EQ(nearest_rank_percentile(v, 50), 5.0);
    EXPECT_DOUBLE_EQ(nearest_rank_percentile(v, 99), 10.0);
    EXPECT_DOUBLE_EQ(nearest_rank_percentile(v, 100), 10.0);
    EXPECT_DOUBLE_EQ(nearest_rank_percentile({42.0}, 50), 42.0);
}

TEST(WorstUnderprediction, HandArithmetic) {
    // actual 110, predicted 100: 100*(110-100)/110 = 9.0909...
    const std::vector<double> pred = {100.0};
    const std::vector<double> actual = {110.0};
    const std::vector<std::uint8_t> mask = {1};
    const WupeResult r = worst_underprediction(pred, actual, mask);
    ASSERT_TRUE(r.defined);
    EXPECT_NEAR(r.percent, 100.0 * 10.0 / 110.0, 1e-12);
}

TEST(WorstUnderprediction, AllOverpredictionIsNegative) {
    const std::vector<double> pred = {120.0, 130.0};
    const std::vector<double> actual = {100.0, 110.0};
    const std::vector<std::uint8_t> mask = {1, 1};
    const WupeResult r = worst_underprediction(pred, actual, mask);
    ASSERT_TRUE(r.defined);
    EXPECT_LT(r.percent, 0.0);
}

TEST(WorstUnderprediction, UndefinedWithoutQualifyingInstants) {
    const std::vector<double> pred = {100.0};
    const std::vector<double> actual = {110.0};
    const std::vector<std::uint8_t> mask = {0};
    EXPECT_FALSE(worst_underprediction(pred, actual, mask).defined);
}

TEST(WorstUnderprediction, MatchesNaiveMaxOverWindow) {
    RandomStream rng(23);
    std::vector<double> pred;
    std::vector<double> actual;
    std::vector<std::uint8_t> mask;
    for (int i = 0; i < 90 * kPeriodsPerDay; ++i) {
        actual.push_back(rng.uniform(1e5, 9e5));
        pred.push_back(actual.back() * rng.uniform(0.93, 1.07));
        mask.push_back(rng.uniform() < 0.3 ? 1 : 0);
    }
    const WupeResult r = worst_underprediction(pred, actual, mask);
    bool defined = false;
    const double naive = oracles::naive_worst_underprediction(pred, actual, mask, &defined);
    ASSERT_TRUE(defined);
    ASSERT_TRUE(r.defined);
    EXPECT_NEAR(r.percent, naive, 1e-12 * std::abs(naive));
}
