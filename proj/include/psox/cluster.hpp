#ifndef PSOX_CLUSTER_HPP
#define PSOX_CLUSTER_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "psox/io.hpp"
#include "psox/linalg.hpp"
#include "psox/parallel.hpp"

namespace psox {

enum class Metric { euclidean, cosine };
enum class Linkage { single, complete, average, ward };

inline constexpr std::array<Metric, 2> all_metrics{Metric::euclidean, Metric::cosine};
inline constexpr std::array<Linkage, 4> all_linkages{Linkage::single, Linkage::complete, Linkage::average,
                                                     Linkage::ward};

inline std::string to_string(Metric m) { return m == Metric::euclidean ? "euclidean" : "cosine"; }

inline std::string to_string(Linkage l)
{
    switch (l) {
    case Linkage::single: return "single";
    case Linkage::complete: return "complete";
    case Linkage::average: return "average";
    case Linkage::ward: return "ward";
    }
    return "?";
}

inline Metric parse_metric(std::string_view s)
{
    for (auto m : all_metrics)
        if (to_string(m) == s)
            return m;
    throw std::invalid_argument("unknown metric '" + std::string(s) + "'");
}

inline Linkage parse_linkage(std::string_view s)
{
    for (auto l : all_linkages)
        if (to_string(l) == s)
            return l;
    throw std::invalid_argument("unknown linkage '" + std::string(s) + "'");
}

/// Pairwise distances; cosine distance is 1 - cos(u, v).
inline Matrix distance_matrix(const std::vector<Vector>& vectors, Metric metric)
{
    const std::size_t n = vectors.size();
    if (n < 2)
        throw std::invalid_argument("distance matrix needs at least two vectors");
    for (const auto& v : vectors)
        if (v.size() != vectors[0].size())
            throw std::invalid_argument("vectors differ in length");
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = norm(vectors[i]);
        if (metric == Metric::cosine && norms[i] == 0.0)
            throw std::invalid_argument("zero vector has no cosine distance");
    }
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = 0.0;
            if (metric == Metric::euclidean) {
                for (std::size_t k = 0; k < vectors[i].size(); ++k) {
                    const double diff = vectors[i][k] - vectors[j][k];
                    v += diff * diff;
                }
                v = std::sqrt(v);
            } else {
                v = 1.0 - dot(vectors[i], vectors[j]) / (norms[i] * norms[j]);
                v = std::max(0.0, v); // rounding on collinear vectors
            }
            d(i, j) = d(j, i) = v;
        }
    return d;
}

struct Merge {
    std::size_t a = 0, b = 0; // a < b
    double height = 0.0;
    std::size_t id = 0;
    std::size_t size = 0;
    bool operator==(const Merge&) const = default;
};

/// Leaves are ids 0..n-1; the merge at step s creates id n+s.
struct Dendrogram {
    std::vector<std::string> labels;
    std::vector<Merge> merges;
    Linkage linkage = Linkage::average;
    Metric metric = Metric::euclidean;

    std::size_t leaves() const noexcept { return merges.size() + 1; }

    /// Leaves left to right, lower child id first at every merge.
    std::vector<std::size_t> leaf_order() const
    {
        const std::size_t n = leaves();
        if (merges.empty())
            return {0};
        std::vector<std::size_t> order;
        std::vector<std::size_t> stack{merges.back().id};
        while (!stack.empty()) {
            const std::size_t id = stack.back();
            stack.pop_back();
            if (id < n) {
                order.push_back(id);
                continue;
            }
            const auto& m = merges[id - n];
            stack.push_back(m.b);
            stack.push_back(m.a);
        }
        return order;
    }
};

/// Agglomerative clustering with Lance-Williams updates. Ties go to the pair
/// with the smallest (min id, max id).
inline Dendrogram agglomerate(const Matrix& distances, Linkage linkage, Metric metric = Metric::euclidean)
{
    const std::size_t n = distances.rows();
    if (n < 2 || distances.cols() != n)
        throw std::invalid_argument("agglomerate needs a square matrix over at least two points");
    if (linkage == Linkage::ward && metric != Metric::euclidean)
        throw std::invalid_argument("ward linkage requires euclidean distances");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (!(distances(i, j) >= 0.0) || distances(i, j) != distances(j, i) || (i == j && distances(i, j) != 0.0))
                throw std::invalid_argument("invalid distance matrix");

    Dendrogram dg;
    dg.linkage = linkage;
    dg.metric = metric;
    // working matrix over cluster ids 0..2n-2
    const std::size_t total = 2 * n - 1;
    std::vector<double> d(total * total, 0.0);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return d[i * total + j]; };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            at(i, j) = distances(i, j);
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), std::size_t{0});
    std::vector<std::size_t> size(total, 1);

    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        // active stays sorted, so scanning i < j finds the smallest pair on ties
        for (std::size_t x = 0; x < active.size(); ++x)
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                const double v = at(active[x], active[y]);
                if (v < best) {
                    best = v;
                    bi = active[x];
                    bj = active[y];
                }
            }
        const std::size_t id = n + step;
        const double ni = static_cast<double>(size[bi]), nj = static_cast<double>(size[bj]);
        for (auto k : active) {
            if (k == bi || k == bj)
                continue;
            const double dik = at(bi, k), djk = at(bj, k), dij = best;
            double v = 0.0;
            switch (linkage) {
            case Linkage::single: v = std::min(dik, djk); break;
            case Linkage::complete: v = std::max(dik, djk); break;
            case Linkage::average: v = (ni * dik + nj * djk) / (ni + nj); break;
            case Linkage::ward: {
                const double nk = static_cast<double>(size[k]);
                const double s = ((ni + nk) * dik * dik + (nj + nk) * djk * djk - nk * dij * dij) / (ni + nj + nk);
                v = std::sqrt(std::max(0.0, s));
                break;
            }
            }
            at(id, k) = at(k, id) = v;
        }
        size[id] = size[bi] + size[bj];
        dg.merges.push_back({bi, bj, best, id, size[id]});
        active.erase(std::remove_if(active.begin(), active.end(), [&](std::size_t k) { return k == bi || k == bj; }),
                     active.end());
        active.push_back(id);
    }
    return dg;
}

/// Flat clustering with k clusters: applies the first n-k merges. Labels are
/// numbered 0, 1, ... in order of first appearance along the leaf order.
inline std::vector<std::size_t> cut_k(const Dendrogram& dg, std::size_t k)
{
    const std::size_t n = dg.leaves();
    if (k < 1 || k > n)
        throw std::invalid_argument("k out of range");
    std::vector<std::size_t> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    for (std::size_t s = 0; s < n - k; ++s) {
        parent[dg.merges[s].a] = dg.merges[s].id;
        parent[dg.merges[s].b] = dg.merges[s].id;
    }
    auto root = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x];
        return x;
    };
    std::vector<std::size_t> labels(n);
    std::map<std::size_t, std::size_t> numbering;
    for (auto leaf : dg.leaf_order()) {
        const auto r = root(leaf);
        const auto it = numbering.emplace(r, numbering.size()).first;
        labels[leaf] = it->second;
    }
    return labels;
}

/// Mean silhouette (b - a) / max(a, b); points in singleton clusters score 0.
inline double silhouette(const std::vector<std::size_t>& labels, const Matrix& distances)
{
    const std::size_t n = labels.size();
    if (distances.rows() != n || distances.cols() != n)
        throw std::invalid_argument("labels and distance matrix differ in size");
    std::size_t k = 0;
    for (auto l : labels)
        k = std::max(k, l + 1);
    std::vector<std::size_t> count(k, 0);
    for (auto l : labels)
        ++count[l];
    std::size_t nonempty = 0;
    for (auto c : count)
        nonempty += c > 0;
    if (nonempty < 2)
        throw std::invalid_argument("silhouette needs at least two clusters");
    double total = 0.0;
    std::vector<double> sum(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (count[labels[i]] == 1)
            continue;
        std::fill(sum.begin(), sum.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i)
                sum[labels[j]] += distances(i, j);
        const double a = sum[labels[i]] / static_cast<double>(count[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (c != labels[i] && count[c] > 0)
                b = std::min(b, sum[c] / static_cast<double>(count[c]));
        const double m = std::max(a, b);
        if (m > 0.0)
            total += (b - a) / m;
    }
    return std::clamp(total / static_cast<double>(n), -1.0, 1.0);
}

/// Adjusted Rand index between two labelings of the same points.
inline double adjusted_rand_index(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y)
{
    if (x.size() != y.size() || x.empty())
        throw std::invalid_argument("labelings must be nonempty and equal in length");
    std::map<std::pair<std::size_t, std::size_t>, double> joint;
    std::map<std::size_t, double> rx, ry;
    for (std::size_t i = 0; i < x.size(); ++i) {
        joint[{x[i], y[i]}] += 1.0;
        rx[x[i]] += 1.0;
        ry[y[i]] += 1.0;
    }
    auto c2 = [](double v) { return v * (v - 1.0) / 2.0; };
    double index = 0.0, a = 0.0, b = 0.0;
    for (const auto& [key, v] : joint)
        index += c2(v);
    for (const auto& [key, v] : rx)
        a += c2(v);
    for (const auto& [key, v] : ry)
        b += c2(v);
    const double expected = a * b / c2(static_cast<double>(x.size()));
    const double max_index = 0.5 * (a + b);
    if (max_index == expected)
        return 1.0; // both labelings trivial in the same way
    return (index - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Grid search

struct GridCell {
    std::size_t k = 0;
    Metric metric = Metric::euclidean;
    Linkage linkage = Linkage::single;
    bool valid = true;
    double score = 0.0;
};

struct ClusterReport {
    std::vector<std::string> names;
    std::size_t k = 0;
    Metric metric = Metric::euclidean;
    Linkage linkage = Linkage::single;
    double silhouette = 0.0;
    std::vector<std::size_t> labels;
    std::vector<GridCell> grid;
    Dendrogram dendrogram;
};

/// Evaluates every (k, metric, linkage) cell in canonical order (k, then
/// metric, then linkage); ward on cosine is recorded as invalid. The best
/// cell is the first with the maximal silhouette.
inline ClusterReport grid_search(const std::vector<Vector>& vectors, const std::vector<std::string>& names,
                                 std::size_t k_min, std::size_t k_max,
                                 const std::vector<Metric>& metrics = {all_metrics.begin(), all_metrics.end()},
                                 const std::vector<Linkage>& linkages = {all_linkages.begin(), all_linkages.end()},
                                 std::size_t workers = 0)
{
    const std::size_t n = vectors.size();
    if (names.size() != n)
        throw std::invalid_argument("one name per vector required");
    if (n < 3 || k_min < 2 || k_max > n - 1 || k_min > k_max)
        throw std::invalid_argument("k range must lie within [2, n-1]");
    std::vector<Metric> ms = metrics;
    std::vector<Linkage> ls = linkages;
    std::sort(ms.begin(), ms.end());
    ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
    std::sort(ls.begin(), ls.end());
    ls.erase(std::unique(ls.begin(), ls.end()), ls.end());

    std::vector<Matrix> dist;
    for (auto m : ms)
        dist.push_back(distance_matrix(vectors, m));
    // one dendrogram per (metric, linkage)
    const std::size_t pairs = ms.size() * ls.size();
    std::vector<std::optional<Dendrogram>> trees(pairs);
    parallel_for(pairs, workers, [&](std::size_t p) {
        const auto m = ms[p / ls.size()];
        const auto l = ls[p % ls.size()];
        if (l == Linkage::ward && m != Metric::euclidean)
            return;
        trees[p] = agglomerate(dist[p / ls.size()], l, m);
        trees[p]->labels = names;
    });

    ClusterReport report;
    report.names = names;
    for (std::size_t k = k_min; k <= k_max; ++k)
        for (std::size_t p = 0; p < pairs; ++p)
            report.grid.push_back({k, ms[p / ls.size()], ls[p % ls.size()], trees[p].has_value(), 0.0});
    parallel_for(report.grid.size(), workers, [&](std::size_t i) {
        auto& cell = report.grid[i];
        if (!cell.valid)
            return;
        const std::size_t p = static_cast<std::size_t>(
            std::find(ms.begin(), ms.end(), cell.metric) - ms.begin()) * ls.size() +
            static_cast<std::size_t>(std::find(ls.begin(), ls.end(), cell.linkage) - ls.begin());
        const std::size_t mi = p / ls.size();
        cell.score = silhouette(cut_k(*trees[p], cell.k), dist[mi]);
    });

    const GridCell* best = nullptr;
    for (const auto& cell : report.grid)
        if (cell.valid && (!best || cell.score > best->score))
            best = &cell;
    if (!best)
        throw std::invalid_argument("empty clustering grid");
    report.k = best->k;
    report.metric = best->metric;
    report.linkage = best->linkage;
    report.silhouette = best->score;
    const std::size_t mi = static_cast<std::size_t>(std::find(ms.begin(), ms.end(), best->metric) - ms.begin());
    const std::size_t li = static_cast<std::size_t>(std::find(ls.begin(), ls.end(), best->linkage) - ls.begin());
    report.dendrogram = *trees[mi * ls.size() + li];
    report.labels = cut_k(report.dendrogram, report.k);
    return report;
}

/// Single fixed cell, for explicit overrides and the two-vector case.
inline ClusterReport cluster_fixed(const std::vector<Vector>& vectors, const std::vector<std::string>& names,
                                   std::size_t k, Metric metric, Linkage linkage)
{
    const auto d = distance_matrix(vectors, metric);
    ClusterReport report;
    report.names = names;
    report.k = k;
    report.metric = metric;
    report.linkage = linkage;
    report.dendrogram = agglomerate(d, linkage, metric);
    report.dendrogram.labels = names;
    report.labels = cut_k(report.dendrogram, k);
    std::size_t distinct = 0;
    for (auto l : report.labels)
        distinct = std::max(distinct, l + 1);
    report.silhouette = distinct >= 2 ? silhouette(report.labels, d) : 0.0;
    report.grid.push_back({k, metric, linkage, true, report.silhouette});
    return report;
}

inline nlohmann::json to_json(const ClusterReport& r)
{
    nlohmann::json j;
    j["best"] = {{"k", r.k}, {"metric", to_string(r.metric)}, {"linkage", to_string(r.linkage)}};
    j["silhouette"] = r.silhouette;
    nlohmann::json labels = nlohmann::json::object();
    for (std::size_t i = 0; i < r.names.size(); ++i)
        labels[r.names[i]] = r.labels[i];
    j["labels"] = labels;
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& c : r.grid) {
        nlohmann::json cell{{"k", c.k}, {"metric", to_string(c.metric)}, {"linkage", to_string(c.linkage)},
                            {"valid", c.valid}};
        if (c.valid)
            cell["score"] = c.score;
        grid.push_back(cell);
    }
    j["grid"] = grid;
    return j;
}

// ---------------------------------------------------------------------------
// Dendrogram files

inline void write_dendrogram(std::ostream& out, const Dendrogram& dg)
{
    out << "# linkage=" << to_string(dg.linkage) << '\n' << "# metric=" << to_string(dg.metric) << '\n';
    out << "# leaves\nleaf,label\n";
    for (std::size_t i = 0; i < dg.labels.size(); ++i)
        out << i << ',' << dg.labels[i] << '\n';
    out << "# merges\nid_a,id_b,height,new_id\n";
    for (const auto& m : dg.merges)
        out << m.a << ',' << m.b << ',' << format_double(m.height) << ',' << m.id << '\n';
}

inline Dendrogram read_dendrogram(std::istream& in)
{
    Dendrogram dg;
    std::string line;
    enum { none, leaves, merges } section = none;
    while (std::getline(in, line)) {
        const std::string_view text = strip_cr(line);
        if (text.empty())
            continue;
        try {
            if (text.starts_with("# linkage=")) {
                dg.linkage = parse_linkage(text.substr(10));
            } else if (text.starts_with("# metric=")) {
                dg.metric = parse_metric(text.substr(9));
            } else if (text == "# leaves") {
                section = leaves;
            } else if (text == "# merges") {
                section = merges;
            } else if (text == "leaf,label" || text == "id_a,id_b,height,new_id" || text.front() == '#') {
                continue;
            } else if (section == leaves) {
                const auto comma = text.find(',');
                if (comma == std::string_view::npos || parse_u64(text.substr(0, comma)) != dg.labels.size())
                    throw DataError("malformed leaf row");
                dg.labels.emplace_back(text.substr(comma + 1));
            } else if (section == merges) {
                const auto f = split(text, ',');
                if (f.size() != 4)
                    throw DataError("malformed merge row");
                dg.merges.push_back({parse_u64(f[0]), parse_u64(f[1]), parse_double(f[2]), parse_u64(f[3]), 0});
            } else {
                throw DataError("dendrogram row outside a section");
            }
        } catch (const std::invalid_argument& e) {
            throw DataError(e.what());
        }
    }
    const std::size_t n = dg.labels.size();
    if (n < 2 || dg.merges.size() != n - 1)
        throw DataError("dendrogram needs n-1 merges for n leaves");
    std::vector<std::size_t> size(2 * n - 1, 1);
    for (std::size_t s = 0; s < dg.merges.size(); ++s) {
        auto& m = dg.merges[s];
        if (m.id != n + s || m.a >= m.id || m.b >= m.id)
            throw DataError("inconsistent merge ids");
        m.size = size[m.a] + size[m.b];
        size[m.id] = m.size;
    }
    return dg;
}

} // namespace psox

#endif // PSOX_CLUSTER_HPP
