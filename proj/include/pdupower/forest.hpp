#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pdupower/core.hpp"
#include "pdupower/parallel.hpp"
#include "pdupower/rng.hpp"

namespace pdupower {

// Column-major design matrix. Continuous and 0/1-encoded columns only; no
// missing values.
struct FeatureMatrix {
    std::vector<std::string> column_names;
    std::vector<std::vector<double>> columns;
    std::vector<double> target;

    [[nodiscard]] std::size_t n_rows() const { return target.size(); }
    [[nodiscard]] std::size_t n_cols() const { return columns.size(); }

    std::size_t add_column(std::string name, std::vector<double> values) {
        for (const auto& existing : column_names)
            if (existing == name)
                throw ContractError("duplicate feature column '" + name + "'");
        column_names.push_back(std::move(name));
        columns.push_back(std::move(values));
        return columns.size() - 1;
    }

    void validate() const {
        if (column_names.size() != columns.size())
            throw ContractError("feature matrix: name/column count mismatch");
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (columns[c].size() != target.size())
                throw ContractError("feature matrix: column '" + column_names[c] +
                                    "' length differs from target");
            for (double v : columns[c])
                if (!std::isfinite(v))
                    throw ContractError("feature matrix: non-finite value in column '" +
                                        column_names[c] + "'");
        }
        for (double y : target)
            if (!std::isfinite(y)) throw ContractError("feature matrix: non-finite target");
    }

    [[nodiscard]] std::vector<double> row(std::size_t r) const {
        std::vector<double> out(columns.size());
        for (std::size_t c = 0; c < columns.size(); ++c) out[c] = columns[c][r];
        return out;
    }
};

// One-hot dictionary per categorical column. Categories are stored sorted so
// the encoding does not depend on row order.
struct EncodingMap {
    std::map<std::string, std::vector<std::string>> categories;

    static std::string binary_column_name(const std::string& column, const std::string& category) {
        return column + "=" + category;
    }

    void fit(const std::string& column, std::span<const std::string> values) {
        std::vector<std::string> cats(values.begin(), values.end());
        std::sort(cats.begin(), cats.end());
        cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
        categories[column] = std::move(cats);
    }

    // Index of `value` within the column's block, or npos when the category
    // was never seen at fit time (encodes to an all-zero block).
    [[nodiscard]] std::size_t index_of(const std::string& column, const std::string& value) const {
        auto it = categories.find(column);
        if (it == categories.end())
            throw ContractError("no encoding for categorical column '" + column + "'");
        const auto& cats = it->second;
        auto pos = std::lower_bound(cats.begin(), cats.end(), value);
        if (pos == cats.end() || *pos != value) return npos;
        return static_cast<std::size_t>(pos - cats.begin());
    }

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
};

// Appends the one-hot block for `column` to the matrix. Unseen categories
// produce all-zero rows and are tallied into `unseen_count` when provided.
inline void append_one_hot(FeatureMatrix& X, const EncodingMap& map, const std::string& column,
                           std::span<const std::string> values,
                           std::size_t* unseen_count = nullptr) {
    auto it = map.categories.find(column);
    if (it == map.categories.end())
        throw ContractError("no encoding for categorical column '" + column + "'");
    const auto& cats = it->second;
    std::vector<std::vector<double>> block(cats.size(), std::vector<double>(values.size(), 0.0));
    for (std::size_t r = 0; r < values.size(); ++r) {
        const std::size_t k = map.index_of(column, values[r]);
        if (k == EncodingMap::npos) {
            if (unseen_count != nullptr) (*unseen_count)++;
            continue;
        }
        block[k][r] = 1.0;
    }
    for (std::size_t k = 0; k < cats.size(); ++k)
        X.add_column(EncodingMap::binary_column_name(column, cats[k]), std::move(block[k]));
}

// Equal-allocation sampling over utilization buckets so sparse operating
// regimes keep representation. Deficits from underfull buckets are spread
// over the remaining buckets in proportion to their leftover size.
inline std::vector<std::size_t> stratified_sample(std::span<const double> strat_key,
                                                  std::size_t n_total, std::uint64_t seed,
                                                  int n_buckets = 10) {
    if (n_buckets < 1) throw ContractError("stratified_sample: n_buckets must be >= 1");
    const std::size_t n = strat_key.size();
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(strat_key[i] >= 0.0 && strat_key[i] <= 1.0))
            throw ContractError("stratified_sample: key outside [0, 1]");
        all[i] = i;
    }
    if (n <= n_total) return all;

    std::vector<std::vector<std::size_t>> buckets(n_buckets);
    for (std::size_t i = 0; i < n; ++i) {
        auto b = static_cast<std::size_t>(strat_key[i] * n_buckets);
        if (b >= static_cast<std::size_t>(n_buckets)) b = n_buckets - 1;
        buckets[b].push_back(i);
    }

    std::vector<std::size_t> nonempty;
    for (std::size_t b = 0; b < buckets.size(); ++b)
        if (!buckets[b].empty()) nonempty.push_back(b);

    // Equal targets over non-empty buckets, leftovers to the lowest indices.
    std::vector<std::size_t> take(buckets.size(), 0);
    const std::size_t base = n_total / nonempty.size();
    std::size_t extra = n_total % nonempty.size();
    for (std::size_t b : nonempty) {
        std::size_t t = base + (extra > 0 ? 1 : 0);
        if (extra > 0) --extra;
        take[b] = std::min(t, buckets[b].size());
    }
    std::size_t assigned = 0;
    for (std::size_t b : nonempty) assigned += take[b];
    while (assigned < n_total) {
        std::size_t remaining_total = 0;
        for (std::size_t b : nonempty) remaining_total += buckets[b].size() - take[b];
        if (remaining_total == 0) break;
        const std::size_t deficit = n_total - assigned;
        std::size_t round_assigned = 0;
        for (std::size_t b : nonempty) {
            const std::size_t cap = buckets[b].size() - take[b];
            std::size_t add = std::min(cap, deficit * cap / remaining_total);
            take[b] += add;
            round_assigned += add;
        }
        if (round_assigned == 0) {
            // Integer floors rounded everything to zero; hand out one by one.
            for (std::size_t b : nonempty) {
                if (assigned + round_assigned >= n_total) break;
                if (take[b] < buckets[b].size()) {
                    take[b]++;
                    round_assigned++;
                }
            }
        }
        assigned += round_assigned;
    }

    std::vector<std::size_t> out;
    out.reserve(n_total);
    for (std::size_t b : nonempty) {
        auto& members = buckets[b];
        RandomStream rng(seed, "stratified-bucket", std::to_string(b));
        rng.shuffle(members);
        members.resize(take[b]);
        out.insert(out.end(), members.begin(), members.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct ForestParams {
    int n_trees = 100;
    int max_depth = 16;
    int min_samples_leaf = 5;
    double features_per_split = 1.0;  // fraction of features evaluated per split
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

inline void validate_forest_params(const ForestParams& p) {
    if (p.n_trees < 1 || p.max_depth < 1 || p.min_samples_leaf < 1)
        throw ConfigError("forest params must be positive");
    if (p.features_per_split <= 0.0 || p.features_per_split > 1.0)
        throw ConfigError("features_per_split must be in (0, 1]");
}

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;  // leaf mean
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    [[nodiscard]] double predict(std::span<const double> row) const {
        std::int32_t i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const TreeNode& nd = nodes[static_cast<std::size_t>(i)];
            i = row[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    [[nodiscard]] std::size_t leaf_count() const {
        std::size_t n = 0;
        for (const auto& nd : nodes) n += nd.feature < 0;
        return n;
    }
};

struct RandomForest {
    ForestParams params;
    std::vector<std::string> column_names;
    EncodingMap encoding;
    std::vector<RegressionTree> trees;
    double target_min = 0.0;
    double target_max = 0.0;

    [[nodiscard]] double predict(std::span<const double> row) const {
        if (trees.empty()) throw ContractError("forest has no trees");
        if (row.size() != column_names.size())
            throw ContractError("forest prediction: row width " + std::to_string(row.size()) +
                                " does not match schema width " +
                                std::to_string(column_names.size()));
        double sum = 0.0;
        for (const auto& t : trees) sum += t.predict(row);
        return sum / static_cast<double>(trees.size());
    }
};

namespace detail {

// CART builder over presorted per-feature index lists. Each split does one
// linear scan per candidate feature and one stable partition pass, so a tree
// costs O(features x rows x depth) after the initial sort.
class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& X, const ForestParams& params, RandomStream& rng)
        : X_(X), params_(params), rng_(rng) {}

    RegressionTree build(const std::vector<std::size_t>& sample_rows) {
        const std::size_t n = sample_rows.size();
        const std::size_t k = X_.n_cols();
        y_.resize(n);
        for (std::size_t i = 0; i < n; ++i) y_[i] = X_.target[sample_rows[i]];

        order_.assign(k, std::vector<std::uint32_t>(n));
        value_.assign(k, std::vector<double>(n));
        for (std::size_t f = 0; f < k; ++f) {
            auto& ord = order_[f];
            for (std::uint32_t i = 0; i < n; ++i) ord[i] = i;
            const auto& col = X_.columns[f];
            std::stable_sort(ord.begin(), ord.end(), [&](std::uint32_t a, std::uint32_t b) {
                return col[sample_rows[a]] < col[sample_rows[b]];
            });
            auto& val = value_[f];
            for (std::size_t i = 0; i < n; ++i) val[i] = col[sample_rows[ord[i]]];
        }
        go_left_.assign(n, 0);
        scratch_idx_.resize(n);
        scratch_val_.resize(n);

        tree_.nodes.clear();
        build_node(0, n, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        double gain = -std::numeric_limits<double>::infinity();
        std::size_t feature = 0;
        double threshold = 0.0;
        bool found = false;
    };

    std::int32_t make_leaf(double mean) {
        tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, mean});
        return static_cast<std::int32_t>(tree_.nodes.size() - 1);
    }

    std::int32_t build_node(std::size_t begin, std::size_t end, int depth) {
        const std::size_t n = end - begin;
        double sum = 0.0;
        double sum_sq = 0.0;
        const auto& ord0 = order_[0];
        for (std::size_t i = begin; i < end; ++i) {
            const double y = y_[ord0[i]];
            sum += y;
            sum_sq += y * y;
        }
        const double mean = sum / static_cast<double>(n);
        const double sse = sum_sq - sum * mean;

        const auto msl = static_cast<std::size_t>(params_.min_samples_leaf);
        if (depth >= params_.max_depth || n < 2 * msl || sse <= 0.0) return make_leaf(mean);

        const Split split = best_split(begin, end, sum);
        if (!split.found) return make_leaf(mean);

        // Mark membership with the same predicate prediction uses.
        std::size_t n_left = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint32_t slot = order_[split.feature][i];
            const bool left = value_[split.feature][i] <= split.threshold;
            go_left_[slot] = left ? 1 : 0;
            n_left += left;
        }
        partition(begin, end, n_left);

        tree_.nodes.push_back(TreeNode{static_cast<std::int32_t>(split.feature), split.threshold,
                                       -1, -1, 0.0});
        const auto node_index = static_cast<std::int32_t>(tree_.nodes.size() - 1);
        const std::int32_t left = build_node(begin, begin + n_left, depth + 1);
        const std::int32_t right = build_node(begin + n_left, end, depth + 1);
        tree_.nodes[static_cast<std::size_t>(node_index)].left = left;
        tree_.nodes[static_cast<std::size_t>(node_index)].right = right;
        return node_index;
    }

    [[nodiscard]] std::vector<std::size_t> candidate_features() {
        const std::size_t k = X_.n_cols();
        auto m = static_cast<std::size_t>(std::lround(params_.features_per_split * k));
        m = std::clamp<std::size_t>(m, 1, k);
        std::vector<std::size_t> feats(k);
        for (std::size_t f = 0; f < k; ++f) feats[f] = f;
        if (m == k) return feats;
        // Partial Fisher-Yates, then sorted so the tie rule (lowest feature
        // index wins) is unaffected by draw order.
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j = i + rng_.uniform_index(k - i);
            std::swap(feats[i], feats[j]);
        }
        feats.resize(m);
        std::sort(feats.begin(), feats.end());
        return feats;
    }

    [[nodiscard]] Split best_split(std::size_t begin, std::size_t end, double total_sum) {
        const std::size_t n = end - begin;
        const auto msl = static_cast<std::size_t>(params_.min_samples_leaf);
        Split best;
        for (const std::size_t f : candidate_features()) {
            const auto& ord = order_[f];
            const auto& val = value_[f];
            double left_sum = 0.0;
            for (std::size_t i = begin; i + 1 < end; ++i) {
                left_sum += y_[ord[i]];
                const std::size_t n_left = i - begin + 1;
                if (n_left < msl) continue;
                if (n - n_left < msl) break;
                const double a = val[i];
                const double b = val[i + 1];
                if (!(a < b)) continue;  // only split between distinct values
                const double right_sum = total_sum - left_sum;
                const double gain =
                    left_sum * left_sum / static_cast<double>(n_left) +
                    right_sum * right_sum / static_cast<double>(n - n_left);
                if (gain > best.gain) {
                    double threshold = a + (b - a) / 2.0;
                    if (!(threshold < b)) threshold = a;  // rounding guard
                    best = Split{gain, f, threshold, true};
                }
            }
        }
        return best;
    }

    // Stable partition of every per-feature ordering by the go_left_ marks,
    // preserving sort order inside both children.
    void partition(std::size_t begin, std::size_t end, std::size_t n_left) {
        for (std::size_t f = 0; f < X_.n_cols(); ++f) {
            auto& ord = order_[f];
            auto& val = value_[f];
            std::size_t l = 0;
            std::size_t r = n_left;
            for (std::size_t i = begin; i < end; ++i) {
                if (go_left_[ord[i]]) {
                    scratch_idx_[l] = ord[i];
                    scratch_val_[l] = val[i];
                    ++l;
                } else {
                    scratch_idx_[r] = ord[i];
                    scratch_val_[r] = val[i];
                    ++r;
                }
            }
            std::copy(scratch_idx_.begin(), scratch_idx_.begin() + (end - begin),
                      ord.begin() + static_cast<std::ptrdiff_t>(begin));
            std::copy(scratch_val_.begin(), scratch_val_.begin() + (end - begin),
                      val.begin() + static_cast<std::ptrdiff_t>(begin));
        }
    }

    const FeatureMatrix& X_;
    const ForestParams& params_;
    RandomStream& rng_;
    RegressionTree tree_;
    std::vector<double> y_;                           // target per sample slot
    std::vector<std::vector<std::uint32_t>> order_;   // per feature, slots by value
    std::vector<std::vector<double>> value_;          // per feature, values aligned to order_
    std::vector<std::uint8_t> go_left_;
    std::vector<std::uint32_t> scratch_idx_;
    std::vector<double> scratch_val_;
};

}  // namespace detail

// Fits the ensemble. Per-tree random streams are derived from
// (seed, tree index), so results are identical for any thread count.
inline RandomForest fit_forest(const FeatureMatrix& X, const ForestParams& params,
                               int threads = 1) {
    validate_forest_params(params);
    X.validate();
    if (X.n_rows() < 2) throw TrainingError("forest fit requires at least 2 rows");
    if (X.n_cols() < 1) throw TrainingError("forest fit requires at least 1 feature");

    RandomForest model;
    model.params = params;
    model.column_names = X.column_names;
    model.target_min = *std::min_element(X.target.begin(), X.target.end());
    model.target_max = *std::max_element(X.target.begin(), X.target.end());
    model.trees.resize(static_cast<std::size_t>(params.n_trees));

    const std::size_t n = X.n_rows();
    parallel_for(static_cast<std::size_t>(params.n_trees), threads, [&](std::size_t ti) {
        RandomStream rng(params.seed, ti + 1);
        std::vector<std::size_t> rows(n);
        if (params.bootstrap) {
            for (std::size_t i = 0; i < n; ++i) rows[i] = rng.uniform_index(n);
            std::sort(rows.begin(), rows.end());
        } else {
            for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        }
        detail::TreeBuilder builder(X, params, rng);
        model.trees[ti] = builder.build(rows);
    });
    return model;
}

// Ensemble-mean predictions for every row; schema names must match the
// training schema exactly.
inline std::vector<double> predict_forest(const RandomForest& model, const FeatureMatrix& X,
                                          int threads = 1) {
    if (X.column_names != model.column_names)
        throw ContractError("forest prediction: feature schema does not match training schema");
    std::vector<double> out(X.n_rows());
    parallel_for(X.n_rows(), threads, [&](std::size_t r) {
        std::vector<double> row = X.row(r);
        out[r] = model.predict(row);
    });
    return out;
}

}  // namespace pdupower
