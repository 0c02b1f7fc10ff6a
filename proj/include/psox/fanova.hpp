#ifndef PSOX_FANOVA_HPP
#define PSOX_FANOVA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "psox/config.hpp"
#include "psox/forest.hpp"
#include "psox/io.hpp"
#include "psox/parallel.hpp"
#include "psox/runner.hpp"

namespace psox {

/// Raised when the target has no variance to decompose.
class DegenerateDataset : public std::runtime_error {
public:
    DegenerateDataset() : std::runtime_error("degenerate dataset: total variance is zero") {}
};

using Subset = std::vector<std::size_t>;

/// All subsets of {0..n-1} with 1 <= |U| <= max_order: by size, then lexicographic.
inline std::vector<Subset> canonical_subsets(std::size_t n, std::size_t max_order)
{
    std::vector<Subset> out;
    for (std::size_t k = 1; k <= std::min(n, max_order); ++k) {
        Subset s(k);
        for (std::size_t i = 0; i < k; ++i)
            s[i] = i;
        for (;;) {
            out.push_back(s);
            std::size_t i = k;
            while (i > 0 && s[i - 1] == n - k + i - 1)
                --i;
            if (i == 0)
                break;
            ++s[i - 1];
            for (std::size_t j = i; j < k; ++j)
                s[j] = s[j - 1] + 1;
        }
    }
    return out;
}

inline std::uint32_t subset_mask(const Subset& s)
{
    std::uint32_t m = 0;
    for (auto f : s)
        m |= 1u << f;
    return m;
}

struct EffectTerm {
    Subset subset;
    double importance = 0.0;
    double variance = 0.0;
};

struct EffectVector {
    std::vector<std::string> feature_names;
    std::vector<EffectTerm> terms;
    double total_variance = 0.0;
    double residual = 0.0;
    std::string dataset_id;
    std::string forest; // forest parameters, empty for the exact route
    std::optional<double> oob_r2;

    std::string subset_name(const Subset& s) const
    {
        std::string out;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i)
                out += '+';
            out += feature_names.at(s[i]);
        }
        return out;
    }

    std::vector<double> importances() const
    {
        std::vector<double> v;
        v.reserve(terms.size());
        for (const auto& t : terms)
            v.push_back(t.importance);
        return v;
    }

    double importance_of(const Subset& s) const
    {
        for (const auto& t : terms)
            if (t.subset == s)
                return t.importance;
        throw std::out_of_range("subset not in effect vector");
    }
};

// ---------------------------------------------------------------------------
// Dataset adapter

inline CategoricalTable to_table(const PerformanceDataset& ds)
{
    std::vector<std::string> names;
    std::vector<std::size_t> levels;
    for (std::size_t m = 0; m < module_count; ++m) {
        names.emplace_back(module_table()[m].key);
        levels.push_back(level_count(m));
    }
    CategoricalTable t(std::move(names), std::move(levels));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto l = ds.configurations[i].levels();
        t.add_row({l.begin(), l.end()}, ds.targets[i]);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Forest route

/// Pure effect tables ĝ_U for every subset up to max_order, obtained by
/// subtracting all lower-order pure effects and the grand mean from the
/// forest's marginal tables.
class FunctionalAnova {
public:
    FunctionalAnova(const SurrogateForest& forest, std::size_t max_order, std::size_t workers = 0)
        : forest_(&forest), subsets_(canonical_subsets(forest.features(), max_order))
    {
        if (forest.features() > 32)
            throw std::invalid_argument("at most 32 features supported");
        mean_ = forest.marginal_prediction({}, {});
        std::vector<std::vector<double>> marginal(subsets_.size());
        parallel_for(subsets_.size(), workers,
                     [&](std::size_t i) { marginal[i] = forest.marginal_table(subsets_[i]); });
        // subsets_ is ordered by size, so every proper subset is finished first
        for (std::size_t i = 0; i < subsets_.size(); ++i) {
            const auto& u = subsets_[i];
            auto pure = std::move(marginal[i]);
            const auto dims = sub_levels(u);
            std::vector<std::size_t> codes;
            for (std::size_t cell = 0; cell < pure.size(); ++cell) {
                grid_point(cell, dims, codes);
                double lower = mean_;
                for_each_proper_subset(u, codes, [&](const Subset& w, const std::vector<std::size_t>& wc) {
                    lower += pure_[subset_mask(w)][index_of(w, wc)];
                });
                pure[cell] -= lower;
            }
            double v = 0.0;
            for (double g : pure)
                v += g * g;
            variance_[subset_mask(u)] = v / static_cast<double>(pure.size());
            pure_[subset_mask(u)] = std::move(pure);
        }
    }

    double mean() const noexcept { return mean_; }
    const std::vector<Subset>& subsets() const noexcept { return subsets_; }

    /// V_U; zero for the empty set.
    double subset_variance(const Subset& u) const
    {
        if (u.empty())
            return 0.0;
        const auto it = variance_.find(subset_mask(u));
        if (it == variance_.end())
            throw std::out_of_range("subset above the decomposition order");
        return it->second;
    }

    const std::vector<double>& pure_effect(const Subset& u) const { return pure_.at(subset_mask(u)); }

private:
    std::vector<std::size_t> sub_levels(const Subset& u) const
    {
        std::vector<std::size_t> d;
        for (auto f : u)
            d.push_back(forest_->level_counts()[f]);
        return d;
    }

    std::size_t index_of(const Subset& w, const std::vector<std::size_t>& codes) const
    {
        std::size_t cell = 0;
        for (std::size_t k = 0; k < w.size(); ++k)
            cell = cell * forest_->level_counts()[w[k]] + codes[k];
        return cell;
    }

    template <typename Fn>
    static void for_each_proper_subset(const Subset& u, const std::vector<std::size_t>& codes, Fn&& fn)
    {
        const std::size_t full = (std::size_t{1} << u.size()) - 1;
        Subset w;
        std::vector<std::size_t> wc;
        for (std::size_t bits = 1; bits < full; ++bits) {
            w.clear();
            wc.clear();
            for (std::size_t k = 0; k < u.size(); ++k)
                if ((bits >> k) & 1u) {
                    w.push_back(u[k]);
                    wc.push_back(codes[k]);
                }
            fn(w, wc);
        }
    }

    const SurrogateForest* forest_;
    std::vector<Subset> subsets_;
    double mean_ = 0.0;
    std::map<std::uint32_t, std::vector<double>> pure_;
    std::map<std::uint32_t, double> variance_;
};

/// Variance of `values` about their mean (population form).
inline double population_variance(const std::vector<double>& values)
{
    double mean = 0.0;
    for (double v : values)
        mean += v;
    mean /= static_cast<double>(values.size());
    double s = 0.0;
    for (double v : values)
        s += (v - mean) * (v - mean);
    return s / static_cast<double>(values.size());
}

/// Below this the target is treated as constant.
inline bool negligible_variance(double variance, double scale)
{
    return !(variance > 1e-24 * std::max(1.0, scale * scale));
}

inline EffectVector decompose(const SurrogateForest& forest, std::size_t max_order = 3, std::size_t workers = 0)
{
    const auto grid = forest.grid_predictions();
    const double total = population_variance(grid);
    double scale = 0.0;
    for (double g : grid)
        scale = std::max(scale, std::abs(g));
    if (negligible_variance(total, scale))
        throw DegenerateDataset();
    const FunctionalAnova anova(forest, max_order, workers);
    EffectVector ev;
    ev.feature_names = forest.feature_names();
    ev.total_variance = total;
    ev.forest = forest.params().describe();
    ev.oob_r2 = forest.oob_r2();
    double sum = 0.0;
    for (const auto& u : anova.subsets()) {
        const double v = anova.subset_variance(u);
        ev.terms.push_back({u, v / total, v});
        sum += v / total;
    }
    ev.residual = 1.0 - sum;
    return ev;
}

inline EffectVector decompose(const CategoricalTable& table, const ForestParams& params, std::size_t max_order = 3,
                              std::size_t workers = 0)
{
    if (table.rows() == 0)
        throw DataError("cannot decompose an empty dataset");
    return decompose(SurrogateForest::fit(table, params, workers), max_order, workers);
}

inline EffectVector decompose(const PerformanceDataset& ds, const ForestParams& params = {}, std::size_t max_order = 3,
                              std::size_t workers = 0)
{
    auto ev = decompose(to_table(ds), params, max_order, workers);
    ev.dataset_id = ds.id();
    return ev;
}

// ---------------------------------------------------------------------------
// Exact route on complete factorial tables

/// Same contract as decompose, computed directly from the table values: the
/// pure effect of U is the inclusion-exclusion sum over W ⊆ U of the
/// conditional means, ĝ_U = Σ_W (-1)^{|U|-|W|} E[y | x_W].
inline EffectVector exact_decompose(const CategoricalTable& table, std::size_t max_order)
{
    const std::size_t n = table.features();
    if (n > 20)
        throw std::invalid_argument("exact decomposition supports at most 20 features");
    const std::size_t cells = table.grid_size();
    if (table.rows() != cells)
        throw DataError("incomplete grid: expected " + std::to_string(cells) + " rows, got " +
                        std::to_string(table.rows()));
    const auto& levels = table.level_counts();
    std::vector<double> y(cells);
    std::vector<char> seen(cells, 0);
    for (std::size_t r = 0; r < table.rows(); ++r) {
        std::size_t idx = 0;
        for (std::size_t f = 0; f < n; ++f)
            idx = idx * levels[f] + table.code(r, f);
        if (seen[idx])
            throw DataError("incomplete grid: duplicated combination");
        seen[idx] = 1;
        y[idx] = table.target(r);
    }
    const double total = population_variance(y);
    double scale = 0.0;
    for (double v : y)
        scale = std::max(scale, std::abs(v));
    if (negligible_variance(total, scale))
        throw DegenerateDataset();

    // conditional mean tables E[y | x_W], keyed by feature bitmask
    std::map<std::uint32_t, std::vector<double>> cond;
    auto conditional = [&](std::uint32_t mask) -> const std::vector<double>& {
        auto it = cond.find(mask);
        if (it != cond.end())
            return it->second;
        std::size_t sub_cells = 1;
        for (std::size_t f = 0; f < n; ++f)
            if ((mask >> f) & 1u)
                sub_cells *= levels[f];
        std::vector<double> sums(sub_cells, 0.0);
        std::vector<std::size_t> codes;
        for (std::size_t i = 0; i < cells; ++i) {
            grid_point(i, levels, codes);
            std::size_t idx = 0;
            for (std::size_t f = 0; f < n; ++f)
                if ((mask >> f) & 1u)
                    idx = idx * levels[f] + codes[f];
            sums[idx] += y[i];
        }
        const double per = static_cast<double>(cells / sub_cells);
        for (auto& s : sums)
            s /= per;
        return cond.emplace(mask, std::move(sums)).first->second;
    };

    EffectVector ev;
    ev.feature_names = table.feature_names();
    ev.total_variance = total;
    double sum = 0.0;
    for (const auto& u : canonical_subsets(n, max_order)) {
        std::vector<std::size_t> dims;
        for (auto f : u)
            dims.push_back(levels[f]);
        std::size_t ucells = 1;
        for (auto d : dims)
            ucells *= d;
        double v = 0.0;
        std::vector<std::size_t> codes;
        for (std::size_t cell = 0; cell < ucells; ++cell) {
            grid_point(cell, dims, codes);
            double g = 0.0;
            for (std::size_t bits = 0; bits < (std::size_t{1} << u.size()); ++bits) {
                std::uint32_t mask = 0;
                std::size_t idx = 0;
                std::size_t size = 0;
                for (std::size_t k = 0; k < u.size(); ++k)
                    if ((bits >> k) & 1u) {
                        mask |= 1u << u[k];
                        idx = idx * levels[u[k]] + codes[k];
                        ++size;
                    }
                const double term = conditional(mask)[idx];
                g += ((u.size() - size) % 2 == 0) ? term : -term;
            }
            v += g * g;
        }
        v /= static_cast<double>(ucells);
        ev.terms.push_back({u, v / total, v});
        sum += v / total;
    }
    ev.residual = 1.0 - sum;
    return ev;
}

// ---------------------------------------------------------------------------
// Derived views

struct MarginalTable {
    Subset subset;
    std::vector<std::size_t> dims;
    std::vector<double> values; // grid_point order over dims
};

inline MarginalTable marginal_performance(const SurrogateForest& forest, const Subset& u)
{
    if (u.empty() || u.size() > 2)
        throw std::invalid_argument("marginal performance needs one or two features");
    MarginalTable t;
    t.subset = u;
    for (auto f : u)
        t.dims.push_back(forest.level_counts().at(f));
    t.values = forest.marginal_table(u);
    return t;
}

/// Running sum of importances ranked in descending order (stable for ties).
inline std::vector<double> cumulative_curve(const EffectVector& ev)
{
    auto v = ev.importances();
    std::stable_sort(v.begin(), v.end(), [](double a, double b) { return a > b; });
    std::vector<double> out;
    out.reserve(v.size());
    double s = 0.0;
    for (double x : v)
        out.push_back(s += x);
    return out;
}

/// Term indices ranked by importance, descending; ties keep canonical order.
inline std::vector<std::size_t> ranked_terms(const EffectVector& ev)
{
    std::vector<std::size_t> idx(ev.terms.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return ev.terms[a].importance > ev.terms[b].importance; });
    return idx;
}

// ---------------------------------------------------------------------------
// Effect-vector files

inline constexpr const char* measure_note =
    "uniform product over the level grid, including structurally constrained corners";

inline void write_effect_vector(std::ostream& out, const EffectVector& ev)
{
    out << "# dataset=" << ev.dataset_id << '\n'
        << "# total_variance=" << format_double(ev.total_variance) << '\n'
        << "# residual=" << format_double(ev.residual) << '\n'
        << "# forest=" << (ev.forest.empty() ? "exact" : ev.forest) << '\n';
    if (ev.oob_r2)
        out << "# oob_r2=" << format_double(*ev.oob_r2) << '\n';
    out << "# measure=" << measure_note << '\n' << "subset,order,importance\n";
    for (const auto& t : ev.terms)
        out << ev.subset_name(t.subset) << ',' << t.subset.size() << ',' << format_double(t.importance) << '\n';
}

/// Marker file content for a dataset without variance.
inline void write_degenerate(std::ostream& out, const std::string& dataset_id)
{
    out << "# dataset=" << dataset_id << '\n' << "# degenerate=1\n" << "subset,order,importance\n";
}

struct EffectFile {
    EffectVector vector;
    bool degenerate = false;
};

inline EffectFile read_effect_vector(std::istream& in)
{
    EffectFile file;
    auto& ev = file.vector;
    std::string line;
    bool header = false;
    std::vector<std::pair<std::string, double>> rows;
    std::vector<std::size_t> orders;
    while (std::getline(in, line)) {
        const std::string_view text = strip_cr(line);
        if (text.empty())
            continue;
        if (!header && text.front() == '#') {
            const auto eq = text.find('=');
            if (eq == std::string_view::npos)
                continue;
            std::string_view key = text.substr(1, eq - 1);
            while (!key.empty() && key.front() == ' ')
                key.remove_prefix(1);
            const auto value = text.substr(eq + 1);
            if (key == "dataset")
                ev.dataset_id = std::string(value);
            else if (key == "total_variance")
                ev.total_variance = parse_double(value);
            else if (key == "residual")
                ev.residual = parse_double(value);
            else if (key == "forest")
                ev.forest = value == "exact" ? std::string() : std::string(value);
            else if (key == "oob_r2")
                ev.oob_r2 = parse_double(value);
            else if (key == "degenerate")
                file.degenerate = value == "1";
            continue;
        }
        if (!header) {
            if (text != "subset,order,importance")
                throw DataError("malformed effect-vector header");
            header = true;
            continue;
        }
        const auto f = split(text, ',');
        if (f.size() != 3)
            throw DataError("malformed effect-vector row");
        rows.emplace_back(std::string(f[0]), parse_double(f[2]));
        orders.push_back(parse_u64(f[1]));
    }
    if (!header)
        throw DataError("missing effect-vector header");
    // feature names come from the order-1 rows, which lead the file
    for (std::size_t i = 0; i < rows.size() && orders[i] == 1; ++i)
        ev.feature_names.push_back(rows[i].first);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EffectTerm t;
        for (auto part : split(rows[i].first, '+')) {
            const auto it = std::find(ev.feature_names.begin(), ev.feature_names.end(), part);
            if (it == ev.feature_names.end())
                throw DataError("unknown feature '" + std::string(part) + "' in effect vector");
            t.subset.push_back(static_cast<std::size_t>(it - ev.feature_names.begin()));
        }
        if (t.subset.size() != orders[i])
            throw DataError("subset order mismatch in effect vector");
        if (!(rows[i].second >= 0.0))
            throw DataError("negative importance in effect vector");
        t.importance = rows[i].second;
        t.variance = t.importance * ev.total_variance;
        ev.terms.push_back(std::move(t));
    }
    return file;
}

inline EffectFile load_effect_vector(const std::string& path)
{
    std::istringstream ss(read_file(path));
    return read_effect_vector(ss);
}

} // namespace psox

#endif // PSOX_FANOVA_HPP
