#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "pdupower/forest.hpp"
#include "pdupower/rng.hpp"

using namespace pdupower;

namespace {

FeatureMatrix matrix_from_rows(const std::vector<std::vector<double>>& rows,
                               const std::vector<double>& y,
                               std::vector<std::string> names = {}) {
    FeatureMatrix X;
    const std::size_t k = rows.empty() ? 0 : rows[0].size();
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> col(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) col[r] = rows[r][c];
        X.add_column(names.empty() ? "f" + std::to_string(c) : names[c], std::move(col));
    }
    X.target = y;
    return X;
}

}  // namespace

TEST(OneHotEncode, EachRowSumsToOneInTheBlock) {
    EncodingMap enc;
    const std::vector<std::string> values = {"B", "A", "C", "A"};
    enc.fit("color", values);
    FeatureMatrix X;
    X.target = {1, 2, 3, 4};
    append_one_hot(X, enc, "color", values);
    ASSERT_EQ(X.n_cols(), 3u);
    EXPECT_EQ(X.column_names[0], "color=A");  // sorted categories
    for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) sum += X.columns[c][r];
        EXPECT_DOUBLE_EQ(sum, 1.0);
    }
    EXPECT_DOUBLE_EQ(X.columns[1][0], 1.0);  // row 0 is "B"
}

TEST(OneHotEncode, SingleCategoryIsColumnOfOnes) {
    EncodingMap enc;
    const std::vector<std::string> values = {"only", "only"};
    enc.fit("kind", values);
    FeatureMatrix X;
    X.target = {1, 2};
    append_one_hot(X, enc, "kind", values);
    ASSERT_EQ(X.n_cols(), 1u);
    EXPECT_DOUBLE_EQ(X.columns[0][0], 1.0);
    EXPECT_DOUBLE_EQ(X.columns[0][1], 1.0);
}

TEST(OneHotEncode, UnseenCategoryEncodesToZerosWithWarning) {
    EncodingMap enc;
    enc.fit("kind", std::vector<std::string>{"A", "B", "C"});
    FeatureMatrix X;
    X.target = {1};
    std::size_t unseen = 0;
    append_one_hot(X, enc, "kind", std::vector<std::string>{"D"}, &unseen);
    EXPECT_EQ(unseen, 1u);
    for (std::size_t c = 0; c < X.n_cols(); ++c) EXPECT_DOUBLE_EQ(X.columns[c][0], 0.0);
}

TEST(StratifiedSample, SmallInputReturnsEverything) {
    std::vector<double> key(100, 0.5);
    const auto picks = stratified_sample(key, 30000, 1);
    EXPECT_EQ(picks.size(), 100u);
}

TEST(StratifiedSample, UniformKeyGivesEqualBuckets) {
    RandomStream rng(8);
    std::vector<double> key(50000);
    for (auto& v : key) v = rng.uniform();
    const auto picks = stratified_sample(key, 30000, 5);
    EXPECT_EQ(picks.size(), 30000u);
    std::array<int, 10> per_bucket{};
    for (std::size_t i : picks) per_bucket[std::min<std::size_t>(9, key[i] * 10)]++;
    for (int count : per_bucket) EXPECT_EQ(count, 3000);
}

TEST(StratifiedSample, SingleBucketSuppliesEverything) {
    std::vector<double> key(40000, 0.05);  // all in bucket 0
    const auto picks = stratified_sample(key, 30000, 2);
    EXPECT_EQ(picks.size(), 30000u);
}

TEST(StratifiedSample, SparseBucketDeficitRedistributed) {
    // Bucket 0 has 10 rows, bucket 9 has 9990: both non-empty, equal targets
    // would starve the total.
    std::vector<double> key;
    for (int i = 0; i < 10; ++i) key.push_back(0.05);
    for (int i = 0; i < 9990; ++i) key.push_back(0.95);
    const auto picks = stratified_sample(key, 5000, 3);
    EXPECT_EQ(picks.size(), 5000u);
    std::size_t low = 0;
    for (std::size_t i : picks) low += key[i] < 0.5;
    EXPECT_EQ(low, 10u);  // the sparse bucket contributes everything it has
}

TEST(StratifiedSample, DeterministicPerSeed) {
    RandomStream rng(9);
    std::vector<double> key(5000);
    for (auto& v : key) v = rng.uniform();
    EXPECT_EQ(stratified_sample(key, 1000, 7), stratified_sample(key, 1000, 7));
    EXPECT_NE(stratified_sample(key, 1000, 7), stratified_sample(key, 1000, 8));
}

TEST(StratifiedSample, KeyOutsideUnitIntervalIsContractError) {
    std::vector<double> key = {0.5, 1.2};
    EXPECT_THROW(stratified_sample(key, 1, 1), ContractError);
}

TEST(FitForest, ConstantTargetPredictsConstant) {
    RandomStream rng(4);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 50; ++i) rows.push_back({rng.uniform(), rng.uniform()});
    const FeatureMatrix X = matrix_from_rows(rows, std::vector<double>(50, 777.0));
    ForestParams params;
    params.n_trees = 10;
    params.seed = 5;
    const RandomForest model = fit_forest(X, params);
    for (int i = 0; i < 10; ++i)
        EXPECT_DOUBLE_EQ(model.predict(std::vector<double>{rng.uniform(), rng.uniform()}), 777.0);
    for (const auto& t : model.trees) EXPECT_EQ(t.nodes.size(), 1u);
}

TEST(FitForest, CartInterpolatesDistinctRowsExactly) {
    RandomStream rng(6);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 64; ++i) {
        rows.push_back({static_cast<double>(i), rng.uniform()});
        y.push_back(rng.uniform(0, 1000));
    }
    const FeatureMatrix X = matrix_from_rows(rows, y);
    ForestParams params;
    params.n_trees = 1;
    params.bootstrap = false;
    params.min_samples_leaf = 1;
    params.max_depth = 64;
    const RandomForest model = fit_forest(X, params);
    for (std::size_t i = 0; i < rows.size(); ++i)
        EXPECT_DOUBLE_EQ(model.predict(rows[i]), y[i]);
}

TEST(FitForest, SmoothLineHeldOutRSquared) {
    // y = 3x sampled on a 1000-point grid; last 200 points interleaved out.
    std::vector<std::vector<double>> train_rows;
    std::vector<double> train_y;
    std::vector<std::vector<double>> test_rows;
    std::vector<double> test_y;
    for (int i = 0; i < 1000; ++i) {
        const double x = i / 999.0;
        if (i % 5 == 3) {
            test_rows.push_back({x});
            test_y.push_back(3.0 * x);
        } else {
            train_rows.push_back({x});
            train_y.push_back(3.0 * x);
        }
    }
    const FeatureMatrix X = matrix_from_rows(train_rows, train_y);
    ForestParams params;  // defaults: 100 trees, depth 16, leaf 5, bootstrap
    params.seed = 11;
    const RandomForest model = fit_forest(X, params, 2);
    std::vector<double> pred;
    for (const auto& row : test_rows) pred.push_back(model.predict(row));
    EXPECT_GE(oracles::r_squared(pred, test_y), 0.95);
}

TEST(PredictForest, SingleLeafTreePredictsItsMean) {
    FeatureMatrix X = matrix_from_rows({{0.0}, {1.0}}, {500.0, 500.0});
    ForestParams params;
    params.n_trees = 1;
    params.seed = 2;
    const RandomForest model = fit_forest(X, params);
    EXPECT_DOUBLE_EQ(model.predict(std::vector<double>{123.0}), 500.0);
}

TEST(PredictForest, BoundedByTrainingTargetRange) {
    RandomStream rng(12);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 400; ++i) {
        rows.push_back({rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform()});
        y.push_back(rng.uniform(100, 900));
    }
    const FeatureMatrix X = matrix_from_rows(rows, y);
    ForestParams params;
    params.n_trees = 20;
    params.seed = 3;
    const RandomForest model = fit_forest(X, params, 2);
    const double lo = *std::min_element(y.begin(), y.end());
    const double hi = *std::max_element(y.begin(), y.end());
    for (int k = 0; k < 500; ++k) {
        // Deliberately out-of-distribution inputs.
        const double p =
            model.predict(std::vector<double>{rng.uniform(-50, 50), rng.uniform(-50, 50), 5.0});
        EXPECT_GE(p, lo);
        EXPECT_LE(p, hi);
    }
    EXPECT_DOUBLE_EQ(model.target_min, lo);
    EXPECT_DOUBLE_EQ(model.target_max, hi);
}

TEST(PredictForest, SchemaMismatchIsContractError) {
    const FeatureMatrix X = matrix_from_rows({{0.0}, {1.0}}, {1.0, 2.0});
    ForestParams params;
    params.n_trees = 1;
    const RandomForest model = fit_forest(X, params);
    FeatureMatrix other = matrix_from_rows({{0.0}, {1.0}}, {1.0, 2.0}, {"different"});
    EXPECT_THROW(predict_forest(model, other), ContractError);
}

TEST(FitForest, IdenticalForAnyThreadCount) {
    RandomStream rng(14);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 600; ++i) {
        rows.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
        y.push_back(100 * rows.back()[0] + 50 * rows.back()[1] + rng.gaussian());
    }
    const FeatureMatrix X = matrix_from_rows(rows, y);
    ForestParams params;
    params.n_trees = 16;
    params.seed = 21;
    const RandomForest a = fit_forest(X, params, 1);
    const RandomForest b = fit_forest(X, params, 4);
    ASSERT_EQ(a.trees.size(), b.trees.size());
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        ASSERT_EQ(a.trees[t].nodes.size(), b.trees[t].nodes.size());
        for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
            EXPECT_EQ(a.trees[t].nodes[n].feature, b.trees[t].nodes[n].feature);
            EXPECT_EQ(a.trees[t].nodes[n].threshold, b.trees[t].nodes[n].threshold);
            EXPECT_EQ(a.trees[t].nodes[n].value, b.trees[t].nodes[n].value);
        }
    }
}

TEST(FitForest, RowPermutationInvariantWithoutBootstrap) {
    RandomStream rng(15);
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 300; ++i) {
        rows.push_back({rng.uniform(), rng.uniform()});
        y.push_back(rng.uniform(0, 100));
    }
    ForestParams params;
    params.n_trees = 4;
    params.bootstrap = false;
    params.seed = 9;
    const RandomForest a = fit_forest(matrix_from_rows(rows, y), params);

    std::vector<std::size_t> perm(rows.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<std::vector<double>> rows2;
    std::vector<double> y2;
    for (std::size_t i : perm) {
        rows2.push_back(rows[i]);
        y2.push_back(y[i]);
    }
    const RandomForest b = fit_forest(matrix_from_rows(rows2, y2), params);
    for (int k = 0; k < 200; ++k) {
        const std::vector<double> probe = {rng.uniform(), rng.uniform()};
        EXPECT_DOUBLE_EQ(a.predict(probe), b.predict(probe));
    }
}

namespace {

// Recursively checks every internal node of a tree against the exhaustive
// search, descending with the tree's own partition.
void check_tree_against_oracle(const RegressionTree& tree, std::int32_t node,
                               const std::vector<std::vector<double>>& columns,
                               const std::vector<double>& y, std::vector<std::size_t> rows,
                               int min_samples_leaf) {
    const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
    if (nd.feature < 0) {
        double mean = 0.0;
        for (std::size_t r : rows) mean += y[r];
        mean /= static_cast<double>(rows.size());
        EXPECT_NEAR(nd.value, mean, 1e-9 * std::max(1.0, std::abs(mean)));
        return;
    }
    const auto optimal = oracles::near_optimal_splits(columns, y, rows, min_samples_leaf);
    ASSERT_FALSE(optimal.empty());
    bool member = false;
    for (const auto& s : optimal)
        member |= s.feature == static_cast<std::size_t>(nd.feature) && s.threshold == nd.threshold;
    EXPECT_TRUE(member) << "chosen split (" << nd.feature << ", " << nd.threshold
                        << ") is not among the " << optimal.size() << " optimal candidates";
    if (optimal.size() == 1) {
        EXPECT_EQ(static_cast<std::size_t>(nd.feature), optimal[0].feature);
        EXPECT_DOUBLE_EQ(nd.threshold, optimal[0].threshold);
    }
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t r : rows)
        (columns[static_cast<std::size_t>(nd.feature)][r] <= nd.threshold ? left : right)
            .push_back(r);
    check_tree_against_oracle(tree, nd.left, columns, y, std::move(left), min_samples_leaf);
    check_tree_against_oracle(tree, nd.right, columns, y, std::move(right), min_samples_leaf);
}

}  // namespace

TEST(FitForest, SplitsMatchExhaustiveSearchOnSmallInstances) {
    RandomStream rng(2025);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 5 + rng.uniform_index(46);  // 5..50 rows
        std::vector<std::vector<double>> rows;
        std::vector<double> y;
        for (std::size_t i = 0; i < n; ++i) {
            // Continuous draws keep candidate gains distinct, so the argmax
            // is unambiguous and the two code paths must agree exactly.
            rows.push_back({rng.uniform(0, 20), rng.uniform(0, 20)});
            y.push_back(rng.uniform(0, 100));
        }
        ForestParams params;
        params.n_trees = 1;
        params.bootstrap = false;
        params.min_samples_leaf = 1 + static_cast<int>(rng.uniform_index(3));
        params.max_depth = 6;
        params.seed = trial;
        const RandomForest model = fit_forest(matrix_from_rows(rows, y), params);
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        std::vector<std::vector<double>> columns(2, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            columns[0][i] = rows[i][0];
            columns[1][i] = rows[i][1];
        }
        check_tree_against_oracle(model.trees[0], 0, columns, y, all, params.min_samples_leaf);
    }
}

TEST(FitForest, MonotoneFixturePredictionsNonDecreasing) {
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (int i = 0; i < 2000; ++i) {
        const double x = i / 1999.0;
        rows.push_back({x});
        y.push_back(200.0 + 600.0 * (0.5 * x + 0.5 * x * x));
    }
    ForestParams params;
    params.seed = 33;
    params.n_trees = 30;
    const RandomForest model = fit_forest(matrix_from_rows(rows, y), params, 2);
    double prev = model.predict(std::vector<double>{0.0});
    for (int k = 1; k <= 200; ++k) {
        const double cur = model.predict(std::vector<double>{k / 200.0});
        EXPECT_GE(cur, prev - 1e-9);
        prev = cur;
    }
}

TEST(FitForest, RejectsDegenerateInputs) {
    FeatureMatrix X = matrix_from_rows({{1.0}}, {2.0});
    EXPECT_THROW(fit_forest(X, ForestParams{}), TrainingError);
    ForestParams bad;
    bad.features_per_split = 0.0;
    EXPECT_THROW(fit_forest(matrix_from_rows({{1.0}, {2.0}}, {1.0, 2.0}), bad), ConfigError);
    FeatureMatrix nan_x = matrix_from_rows({{1.0}, {2.0}}, {1.0, std::nan("")});
    EXPECT_THROW(fit_forest(nan_x, ForestParams{}), ContractError);
}

TEST(FeatureMatrix, DuplicateColumnNameRejected) {
    FeatureMatrix X;
    X.target = {1.0};
    X.add_column("a", {1.0});
    EXPECT_THROW(X.add_column("a", {2.0}), ContractError);
}
