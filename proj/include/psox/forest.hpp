#ifndef PSOX_FOREST_HPP
#define PSOX_FOREST_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psox/io.hpp"
#include "psox/parallel.hpp"
#include "psox/rng.hpp"

namespace psox {

/// Rows of categorical codes with a real target. Feature f takes values in
/// [0, level_counts[f]).
class CategoricalTable {
public:
    static constexpr std::size_t max_levels = 32;

    CategoricalTable() = default;

    CategoricalTable(std::vector<std::string> feature_names, std::vector<std::size_t> level_counts)
        : names_(std::move(feature_names)), levels_(std::move(level_counts))
    {
        if (names_.size() != levels_.size())
            throw std::invalid_argument("feature names and level counts differ in length");
        if (names_.empty())
            throw std::invalid_argument("table needs at least one feature");
        for (auto l : levels_)
            if (l < 1 || l > max_levels)
                throw std::invalid_argument("level count must lie in [1, 32]");
    }

    void add_row(const std::vector<std::size_t>& codes, double target)
    {
        if (codes.size() != levels_.size())
            throw std::invalid_argument("row width does not match feature count");
        for (std::size_t f = 0; f < codes.size(); ++f)
            if (codes[f] >= levels_[f])
                throw std::invalid_argument("level code out of range for feature " + names_[f]);
        if (!std::isfinite(target))
            throw std::invalid_argument("non-finite target");
        codes_.insert(codes_.end(), codes.begin(), codes.end());
        targets_.push_back(target);
    }

    std::size_t features() const noexcept { return levels_.size(); }
    std::size_t rows() const noexcept { return targets_.size(); }
    std::size_t levels(std::size_t f) const { return levels_.at(f); }
    const std::vector<std::size_t>& level_counts() const noexcept { return levels_; }
    const std::vector<std::string>& feature_names() const noexcept { return names_; }
    std::size_t code(std::size_t row, std::size_t f) const { return codes_[row * levels_.size() + f]; }
    const std::size_t* row(std::size_t r) const { return codes_.data() + r * levels_.size(); }
    double target(std::size_t row) const { return targets_[row]; }
    const std::vector<double>& targets() const noexcept { return targets_; }

    /// Number of points in the full level grid.
    std::size_t grid_size() const
    {
        std::size_t n = 1;
        for (auto l : levels_) {
            if (n > std::numeric_limits<std::size_t>::max() / l)
                throw std::overflow_error("level grid too large");
            n *= l;
        }
        return n;
    }

    CategoricalTable with_targets(std::vector<double> targets) const
    {
        if (targets.size() != targets_.size())
            throw std::invalid_argument("target count mismatch");
        CategoricalTable t = *this;
        t.targets_ = std::move(targets);
        return t;
    }

private:
    std::vector<std::string> names_;
    std::vector<std::size_t> levels_;
    std::vector<std::size_t> codes_;
    std::vector<double> targets_;
};

/// Decodes grid index i into per-feature codes, last feature fastest.
inline void grid_point(std::size_t i, const std::vector<std::size_t>& levels, std::vector<std::size_t>& codes)
{
    codes.resize(levels.size());
    for (std::size_t f = levels.size(); f-- > 0;) {
        codes[f] = i % levels[f];
        i /= levels[f];
    }
}

struct ForestParams {
    std::size_t n_trees = 64;
    std::size_t max_depth = 0;         // 0: unlimited
    std::size_t min_leaf = 1;
    std::size_t feature_subsample = 5; // features tried per split; 0 or >= n: all
    bool bootstrap = true;
    std::uint64_t seed = 0;

    /// Settings under which a tree reproduces a complete factorial table.
    static ForestParams interpolating(std::uint64_t seed = 0)
    {
        return {1, 0, 1, 0, false, seed};
    }

    std::string describe() const
    {
        return "n_trees:" + std::to_string(n_trees) + ";max_depth:" + std::to_string(max_depth) +
               ";min_leaf:" + std::to_string(min_leaf) + ";feature_subsample:" + std::to_string(feature_subsample) +
               ";bootstrap:" + (bootstrap ? "1" : "0") + ";seed:" + std::to_string(seed);
    }
};

/// Axis-aligned categorical partition tree. Every split sends one level of
/// one feature left and the remaining levels right, so each leaf is a
/// product of per-feature level sets.
class PartitionTree {
public:
    struct Node {
        int feature = -1; // -1: leaf
        std::size_t level = 0;
        std::size_t left = 0, right = 0;
        std::size_t leaf = 0;
    };

    struct Leaf {
        double value = 0.0;
        std::size_t count = 0;
        std::vector<std::uint32_t> allowed; // bit l set: level l in region
    };

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<Leaf>& leaves() const noexcept { return leaves_; }

    double predict(const std::size_t* codes) const
    {
        std::size_t n = 0;
        while (nodes_[n].feature >= 0) {
            const auto& node = nodes_[n];
            n = codes[node.feature] == node.level ? node.left : node.right;
        }
        return leaves_[nodes_[n].leaf].value;
    }

    /// Grows a tree on `sample` (row indices into the table, repeats allowed).
    template <typename Rng>
    static PartitionTree grow(const CategoricalTable& table, std::vector<std::size_t> sample,
                              const ForestParams& params, Rng& rng)
    {
        PartitionTree tree;
        std::vector<std::uint32_t> allowed(table.features());
        for (std::size_t f = 0; f < table.features(); ++f)
            allowed[f] = table.levels(f) == 32 ? 0xffffffffu : ((1u << table.levels(f)) - 1u);
        tree.build(table, sample, 0, sample.size(), std::move(allowed), 0, params, rng);
        return tree;
    }

private:
    struct Split {
        int feature = -1;
        std::size_t level = 0;
        double gain = -std::numeric_limits<double>::infinity();
    };

    template <typename Rng>
    std::size_t build(const CategoricalTable& table, std::vector<std::size_t>& sample, std::size_t begin,
                      std::size_t end, std::vector<std::uint32_t> allowed, std::size_t depth,
                      const ForestParams& params, Rng& rng)
    {
        const std::size_t id = nodes_.size();
        nodes_.emplace_back();

        double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = begin; i < end; ++i) {
            const double y = table.target(sample[i]);
            sum += y;
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
        const std::size_t n = end - begin;
        const bool depth_left = params.max_depth == 0 || depth < params.max_depth;
        Split split;
        if (hi > lo && depth_left && n >= 2 * params.min_leaf)
            split = best_split(table, sample, begin, end, params, rng);

        if (split.feature < 0) {
            nodes_[id].leaf = leaves_.size();
            leaves_.push_back({sum / static_cast<double>(n), n, std::move(allowed)});
            return id;
        }

        const auto f = static_cast<std::size_t>(split.feature);
        const auto mid = static_cast<std::size_t>(
            std::stable_partition(sample.begin() + static_cast<std::ptrdiff_t>(begin),
                                  sample.begin() + static_cast<std::ptrdiff_t>(end),
                                  [&](std::size_t r) { return table.code(r, f) == split.level; }) -
            sample.begin());
        auto left_allowed = allowed;
        left_allowed[f] = 1u << split.level;
        allowed[f] &= ~(1u << split.level);
        nodes_[id].feature = split.feature;
        nodes_[id].level = split.level;
        const std::size_t l = build(table, sample, begin, mid, std::move(left_allowed), depth + 1, params, rng);
        const std::size_t r = build(table, sample, mid, end, std::move(allowed), depth + 1, params, rng);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    template <typename Rng>
    Split best_split(const CategoricalTable& table, const std::vector<std::size_t>& sample, std::size_t begin,
                     std::size_t end, const ForestParams& params, Rng& rng) const
    {
        const std::size_t nf = table.features();
        std::vector<std::size_t> order(nf);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::size_t tried = nf;
        if (params.feature_subsample > 0 && params.feature_subsample < nf) {
            // partial Fisher-Yates: the first k entries are a uniform subset
            for (std::size_t i = 0; i < params.feature_subsample; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng.below(nf - i));
                std::swap(order[i], order[j]);
            }
            tried = params.feature_subsample;
            std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(tried));
        }
        Split best = scan(table, sample, begin, end, order, 0, tried, params);
        if (best.feature < 0 && tried < nf) {
            std::sort(order.begin() + static_cast<std::ptrdiff_t>(tried), order.end());
            best = scan(table, sample, begin, end, order, tried, nf, params);
        }
        return best;
    }

    /// Variance-reduction scan over one-level-vs-rest splits. Ties keep the
    /// first candidate (feature order given, then level ascending).
    Split scan(const CategoricalTable& table, const std::vector<std::size_t>& sample, std::size_t begin,
               std::size_t end, const std::vector<std::size_t>& order, std::size_t from, std::size_t to,
               const ForestParams& params) const
    {
        const std::size_t n = end - begin;
        double sum = 0.0;
        for (std::size_t i = begin; i < end; ++i)
            sum += table.target(sample[i]);
        const double mean = sum / static_cast<double>(n);
        double sse = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const double d = table.target(sample[i]) - mean;
            sse += d * d;
        }
        // gains this close are ties; keeps the chosen split stable under
        // affine rescaling of the targets
        const double tie = 1e-10 * sse;
        Split best;
        std::vector<double> lsum;
        std::vector<std::size_t> lcount;
        for (std::size_t k = from; k < to; ++k) {
            const std::size_t f = order[k];
            const std::size_t levels = table.levels(f);
            lsum.assign(levels, 0.0);
            lcount.assign(levels, 0);
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t c = table.code(sample[i], f);
                lsum[c] += table.target(sample[i]) - mean;
                ++lcount[c];
            }
            for (std::size_t l = 0; l < levels; ++l) {
                const std::size_t nl = lcount[l], nr = n - nl;
                if (nl < params.min_leaf || nr < params.min_leaf || nl == 0 || nr == 0)
                    continue;
                // SSE reduction for centred sums: S_l^2/n_l + S_r^2/n_r with S_r = -S_l
                const double s = lsum[l];
                const double gain = s * s / static_cast<double>(nl) + s * s / static_cast<double>(nr);
                if (best.feature < 0 || gain > best.gain + tie)
                    best = {static_cast<int>(f), l, gain};
            }
        }
        return best;
    }

    std::vector<Node> nodes_;
    std::vector<Leaf> leaves_;
};

/// Random forest of partition trees. Prediction is the mean over trees.
class SurrogateForest {
public:
    SurrogateForest() = default;

    static SurrogateForest fit(const CategoricalTable& table, const ForestParams& params, std::size_t workers = 0)
    {
        if (table.rows() == 0)
            throw DataError("cannot fit a forest to an empty dataset");
        if (params.n_trees == 0)
            throw std::invalid_argument("forest needs at least one tree");
        if (params.min_leaf == 0)
            throw std::invalid_argument("min_leaf must be at least 1");
        SurrogateForest forest;
        forest.params_ = params;
        forest.levels_ = table.level_counts();
        forest.names_ = table.feature_names();
        forest.trees_.resize(params.n_trees);
        std::vector<std::vector<std::size_t>> in_bag(params.n_trees);
        parallel_for(params.n_trees, workers, [&](std::size_t t) {
            CounterRng rng(hash_values(params.seed, 0x666f72657374ULL, t));
            std::vector<std::size_t> sample(table.rows());
            if (params.bootstrap) {
                for (auto& s : sample)
                    s = static_cast<std::size_t>(rng.below(table.rows()));
            } else {
                std::iota(sample.begin(), sample.end(), std::size_t{0});
            }
            in_bag[t] = sample;
            forest.trees_[t] = PartitionTree::grow(table, std::move(sample), params, rng);
        });
        if (params.bootstrap)
            forest.oob_r2_ = out_of_bag_r2(table, forest.trees_, in_bag);
        return forest;
    }

    const ForestParams& params() const noexcept { return params_; }
    const std::vector<PartitionTree>& trees() const noexcept { return trees_; }
    const std::vector<std::size_t>& level_counts() const noexcept { return levels_; }
    const std::vector<std::string>& feature_names() const noexcept { return names_; }
    std::size_t features() const noexcept { return levels_.size(); }
    /// Out-of-bag R^2; empty without bootstrap or when undefined.
    std::optional<double> oob_r2() const noexcept { return oob_r2_; }

    double predict(const std::vector<std::size_t>& codes) const
    {
        check_codes(codes);
        double s = 0.0;
        for (const auto& t : trees_)
            s += t.predict(codes.data());
        return s / static_cast<double>(trees_.size());
    }

    /// Predictions on every point of the level grid (last feature fastest).
    std::vector<double> grid_predictions() const
    {
        std::size_t n = 1;
        for (auto l : levels_)
            n *= l;
        std::vector<double> out(n);
        std::vector<std::size_t> codes;
        for (std::size_t i = 0; i < n; ++i) {
            grid_point(i, levels_, codes);
            double s = 0.0;
            for (const auto& t : trees_)
                s += t.predict(codes.data());
            out[i] = s / static_cast<double>(trees_.size());
        }
        return out;
    }

    /// Expected prediction with the features in `subset` fixed to
    /// `assignment` and all others uniform over their levels. Exact: each
    /// compatible leaf contributes its value times the fraction of the free
    /// features' domain it covers.
    double marginal_prediction(const std::vector<std::size_t>& subset, const std::vector<std::size_t>& assignment) const
    {
        if (subset.size() != assignment.size())
            throw std::invalid_argument("assignment must cover exactly the subset");
        std::vector<bool> fixed(levels_.size(), false);
        for (std::size_t k = 0; k < subset.size(); ++k) {
            if (subset[k] >= levels_.size())
                throw std::invalid_argument("feature index out of range");
            if (fixed[subset[k]])
                throw std::invalid_argument("feature repeated in subset");
            if (assignment[k] >= levels_[subset[k]])
                throw std::invalid_argument("level not in training domain");
            fixed[subset[k]] = true;
        }
        double total = 0.0;
        for (const auto& tree : trees_) {
            double s = 0.0;
            for (const auto& leaf : tree.leaves()) {
                bool compatible = true;
                for (std::size_t k = 0; k < subset.size() && compatible; ++k)
                    compatible = (leaf.allowed[subset[k]] >> assignment[k]) & 1u;
                if (!compatible)
                    continue;
                double w = 1.0;
                for (std::size_t f = 0; f < levels_.size(); ++f)
                    if (!fixed[f])
                        w *= static_cast<double>(std::popcount(leaf.allowed[f])) / static_cast<double>(levels_[f]);
                s += w * leaf.value;
            }
            total += s;
        }
        return total / static_cast<double>(trees_.size());
    }

    /// marginal_prediction for every assignment of `subset` at once, indexed
    /// like grid_point over the subset's level counts.
    std::vector<double> marginal_table(const std::vector<std::size_t>& subset) const
    {
        std::vector<std::size_t> sub_levels;
        std::vector<bool> fixed(levels_.size(), false);
        for (auto f : subset) {
            if (f >= levels_.size() || fixed[f])
                throw std::invalid_argument("invalid feature subset");
            fixed[f] = true;
            sub_levels.push_back(levels_[f]);
        }
        std::size_t cells = 1;
        for (auto l : sub_levels)
            cells *= l;
        std::vector<double> out(cells, 0.0);
        std::vector<std::vector<std::size_t>> options(subset.size());
        std::vector<std::size_t> pos(subset.size());
        for (const auto& tree : trees_) {
            for (const auto& leaf : tree.leaves()) {
                double w = leaf.value;
                for (std::size_t f = 0; f < levels_.size(); ++f)
                    if (!fixed[f])
                        w *= static_cast<double>(std::popcount(leaf.allowed[f])) / static_cast<double>(levels_[f]);
                // visit only the subset assignments inside this leaf's region
                for (std::size_t k = 0; k < subset.size(); ++k) {
                    options[k].clear();
                    for (std::size_t l = 0; l < sub_levels[k]; ++l)
                        if ((leaf.allowed[subset[k]] >> l) & 1u)
                            options[k].push_back(l);
                }
                std::fill(pos.begin(), pos.end(), 0);
                for (;;) {
                    std::size_t cell = 0;
                    for (std::size_t k = 0; k < subset.size(); ++k)
                        cell = cell * sub_levels[k] + options[k][pos[k]];
                    out[cell] += w;
                    std::size_t k = subset.size();
                    while (k > 0 && ++pos[k - 1] == options[k - 1].size())
                        pos[--k] = 0;
                    if (k == 0)
                        break;
                }
            }
        }
        for (auto& v : out)
            v /= static_cast<double>(trees_.size());
        return out;
    }

private:
    void check_codes(const std::vector<std::size_t>& codes) const
    {
        if (codes.size() != levels_.size())
            throw std::invalid_argument("code vector has wrong width");
        for (std::size_t f = 0; f < codes.size(); ++f)
            if (codes[f] >= levels_[f])
                throw std::invalid_argument("level not in training domain");
    }

    static std::optional<double> out_of_bag_r2(const CategoricalTable& table, const std::vector<PartitionTree>& trees,
                                               const std::vector<std::vector<std::size_t>>& in_bag)
    {
        const std::size_t n = table.rows();
        std::vector<double> sum(n, 0.0);
        std::vector<std::size_t> count(n, 0);
        std::vector<char> used(n);
        for (std::size_t t = 0; t < trees.size(); ++t) {
            std::fill(used.begin(), used.end(), 0);
            for (auto r : in_bag[t])
                used[r] = 1;
            for (std::size_t r = 0; r < n; ++r)
                if (!used[r]) {
                    sum[r] += trees[t].predict(table.row(r));
                    ++count[r];
                }
        }
        double mean = 0.0;
        std::size_t m = 0;
        for (std::size_t r = 0; r < n; ++r)
            if (count[r]) {
                mean += table.target(r);
                ++m;
            }
        if (m < 2)
            return std::nullopt;
        mean /= static_cast<double>(m);
        double sse = 0.0, sst = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            if (count[r]) {
                const double e = table.target(r) - sum[r] / static_cast<double>(count[r]);
                const double d = table.target(r) - mean;
                sse += e * e;
                sst += d * d;
            }
        if (sst == 0.0)
            return std::nullopt;
        return 1.0 - sse / sst;
    }

    ForestParams params_;
    std::vector<std::size_t> levels_;
    std::vector<std::string> names_;
    std::vector<PartitionTree> trees_;
    std::optional<double> oob_r2_;
};

} // namespace psox

#endif // PSOX_FOREST_HPP
