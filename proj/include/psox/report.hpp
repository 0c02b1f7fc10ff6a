#ifndef PSOX_REPORT_HPP
#define PSOX_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "psox/cluster.hpp"
#include "psox/fanova.hpp"
#include "psox/io.hpp"
#include "psox/runner.hpp"

namespace psox {

// ---------------------------------------------------------------------------
// Performance summaries

struct Summary {
    std::string dataset;
    std::size_t n = 0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    std::size_t at_cap = 0;
    bool degenerate = false;
    std::optional<double> oob_r2;
};

/// Quantile with linear interpolation between order statistics
/// (position p * (n - 1) in the sorted sample).
inline double quantile(const std::vector<double>& sorted, double p)
{
    if (sorted.empty())
        throw std::invalid_argument("quantile of empty sample");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline Summary summarize(const PerformanceDataset& ds)
{
    if (ds.targets.empty())
        throw DataError("dataset " + ds.id() + " has no rows");
    Summary s;
    s.dataset = ds.id();
    auto v = ds.targets;
    std::sort(v.begin(), v.end());
    s.n = v.size();
    s.min = v.front();
    s.max = v.back();
    s.q1 = quantile(v, 0.25);
    s.median = quantile(v, 0.5);
    s.q3 = quantile(v, 0.75);
    const double cap = std::log10(error_cap);
    s.at_cap = static_cast<std::size_t>(std::count(v.begin(), v.end(), cap));
    return s;
}

inline constexpr const char* summary_header = "dataset,n,min,q1,median,q3,max,n_at_cap,degenerate,oob_r2";

inline void write_summaries(std::ostream& out, const std::vector<Summary>& rows)
{
    out << summary_header << '\n';
    for (const auto& s : rows)
        out << s.dataset << ',' << s.n << ',' << format_double(s.min) << ',' << format_double(s.q1) << ','
            << format_double(s.median) << ',' << format_double(s.q3) << ',' << format_double(s.max) << ','
            << s.at_cap << ',' << (s.degenerate ? 1 : 0) << ',' << (s.oob_r2 ? format_double(*s.oob_r2) : "")
            << '\n';
}

inline std::vector<Summary> read_summaries(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != summary_header)
        throw DataError("malformed summary header");
    std::vector<Summary> rows;
    while (std::getline(in, line)) {
        const auto text = strip_cr(line);
        if (text.empty())
            continue;
        const auto f = split(text, ',');
        if (f.size() != 10)
            throw DataError("malformed summary row");
        Summary s;
        s.dataset = std::string(f[0]);
        s.n = parse_u64(f[1]);
        s.min = parse_double(f[2]);
        s.q1 = parse_double(f[3]);
        s.median = parse_double(f[4]);
        s.q3 = parse_double(f[5]);
        s.max = parse_double(f[6]);
        s.at_cap = parse_u64(f[7]);
        s.degenerate = f[8] == "1";
        if (!f[9].empty())
            s.oob_r2 = parse_double(f[9]);
        rows.push_back(s);
    }
    return rows;
}

inline nlohmann::json to_json(const Summary& s)
{
    nlohmann::json j{{"dataset", s.dataset}, {"n", s.n},      {"min", s.min},       {"q1", s.q1},
                     {"median", s.median},   {"q3", s.q3},    {"max", s.max},       {"n_at_cap", s.at_cap},
                     {"degenerate", s.degenerate}};
    j["oob_r2"] = s.oob_r2 ? nlohmann::json(*s.oob_r2) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const EffectVector& ev)
{
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : ev.terms)
        terms.push_back({{"subset", ev.subset_name(t.subset)}, {"order", t.subset.size()}, {"importance", t.importance}});
    nlohmann::json j{{"dataset", ev.dataset_id},
                     {"total_variance", ev.total_variance},
                     {"residual", ev.residual},
                     {"forest", ev.forest},
                     {"terms", terms}};
    if (ev.oob_r2)
        j["oob_r2"] = *ev.oob_r2;
    return j;
}

// ---------------------------------------------------------------------------
// Cumulative curves and marginal tables

inline void write_cumulative(std::ostream& out, const EffectVector& ev)
{
    const auto rank = ranked_terms(ev);
    out << "# residual=" << format_double(ev.residual) << '\n' << "k,subset,importance,cumulative\n";
    double s = 0.0;
    for (std::size_t k = 0; k < rank.size(); ++k) {
        const auto& t = ev.terms[rank[k]];
        s += t.importance;
        out << k + 1 << ',' << ev.subset_name(t.subset) << ',' << format_double(t.importance) << ','
            << format_double(s) << '\n';
    }
}

struct CurvePoint {
    std::size_t k = 0;
    std::string subset;
    double importance = 0.0;
    double cumulative = 0.0;
};

inline std::vector<CurvePoint> read_cumulative(std::istream& in)
{
    std::vector<CurvePoint> out;
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        const auto text = strip_cr(line);
        if (text.empty() || (!header && text.front() == '#'))
            continue;
        if (!header) {
            if (text != "k,subset,importance,cumulative")
                throw DataError("malformed cumulative-curve header");
            header = true;
            continue;
        }
        const auto f = split(text, ',');
        if (f.size() != 4)
            throw DataError("malformed cumulative-curve row");
        out.push_back({parse_u64(f[0]), std::string(f[1]), parse_double(f[2]), parse_double(f[3])});
    }
    if (!header)
        throw DataError("missing cumulative-curve header");
    return out;
}

/// Main-effect marginals: one row per (module, level).
inline void write_marginal_mains(std::ostream& out, const SurrogateForest& forest)
{
    out << "module,level,value\n";
    for (std::size_t m = 0; m < module_count; ++m) {
        const auto t = marginal_performance(forest, {m});
        for (std::size_t l = 0; l < t.values.size(); ++l)
            out << module_table()[m].key << ',' << module_table()[m].levels[l] << ',' << format_double(t.values[l])
                << '\n';
    }
}

/// Pairwise marginals for every module pair, keyed by level tokens.
inline void write_marginal_pairs(std::ostream& out, const SurrogateForest& forest)
{
    out << "module_a,level_a,module_b,level_b,value\n";
    for (std::size_t a = 0; a < module_count; ++a)
        for (std::size_t b = a + 1; b < module_count; ++b) {
            const auto t = marginal_performance(forest, {a, b});
            for (std::size_t i = 0; i < t.dims[0]; ++i)
                for (std::size_t j = 0; j < t.dims[1]; ++j)
                    out << module_table()[a].key << ',' << module_table()[a].levels[i] << ','
                        << module_table()[b].key << ',' << module_table()[b].levels[j] << ','
                        << format_double(t.values[i * t.dims[1] + j]) << '\n';
        }
}

struct Heatmap {
    std::string title;
    std::vector<std::string> rows, cols;
    std::vector<double> values; // row-major
};

/// Extracts the (row module, column module) grid from a pairs file. Either
/// order of the two modules is accepted.
inline Heatmap read_marginal_pair(std::istream& in, const std::string& row_module, const std::string& col_module)
{
    const std::size_t rm = module_index(row_module), cm = module_index(col_module);
    if (rm == cm)
        throw std::invalid_argument("heatmap needs two different modules");
    Heatmap h;
    h.title = row_module + " x " + col_module;
    for (auto l : module_table()[rm].levels)
        h.rows.emplace_back(l);
    for (auto l : module_table()[cm].levels)
        h.cols.emplace_back(l);
    h.values.assign(h.rows.size() * h.cols.size(), std::nan(""));
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "module_a,level_a,module_b,level_b,value")
        throw DataError("malformed marginal-pairs header");
    std::size_t found = 0;
    while (std::getline(in, line)) {
        const auto text = strip_cr(line);
        if (text.empty())
            continue;
        const auto f = split(text, ',');
        if (f.size() != 5)
            throw DataError("malformed marginal-pairs row");
        std::size_t r, c;
        if (f[0] == row_module && f[2] == col_module) {
            r = level_index(rm, f[1]);
            c = level_index(cm, f[3]);
        } else if (f[0] == col_module && f[2] == row_module) {
            r = level_index(rm, f[3]);
            c = level_index(cm, f[1]);
        } else {
            continue;
        }
        h.values[r * h.cols.size() + c] = parse_double(f[4]);
        ++found;
    }
    if (found != h.values.size())
        throw DataError("marginal-pairs file lacks the " + h.title + " grid");
    return h;
}

// ---------------------------------------------------------------------------
// SVG rendering. Numbers are embedded as text so outputs can be diffed.

inline std::string svg_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string svg_coord(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string xml_escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

class Svg {
public:
    Svg(double w, double h) : w_(w), h_(h) {}

    void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#333", double width = 1.0)
    {
        body_ << "<line x1=\"" << svg_coord(x1) << "\" y1=\"" << svg_coord(y1) << "\" x2=\"" << svg_coord(x2)
              << "\" y2=\"" << svg_coord(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << svg_coord(width)
              << "\"/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke = "none")
    {
        body_ << "<rect x=\"" << svg_coord(x) << "\" y=\"" << svg_coord(y) << "\" width=\"" << svg_coord(w)
              << "\" height=\"" << svg_coord(h) << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
    }

    void text(double x, double y, std::string_view s, const std::string& cls = "", const std::string& anchor = "middle",
              double size = 11.0)
    {
        body_ << "<text x=\"" << svg_coord(x) << "\" y=\"" << svg_coord(y) << "\" font-size=\"" << svg_coord(size)
              << "\" text-anchor=\"" << anchor << "\"";
        if (!cls.empty())
            body_ << " class=\"" << cls << "\"";
        body_ << ">" << xml_escape(s) << "</text>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke = "#1f77b4")
    {
        body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i)
            body_ << (i ? " " : "") << svg_coord(pts[i].first) << ',' << svg_coord(pts[i].second);
        body_ << "\"/>\n";
    }

    std::string str() const
    {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg_coord(w_) << "\" height=\"" << svg_coord(h_)
            << "\" viewBox=\"0 0 " << svg_coord(w_) << ' ' << svg_coord(h_) << "\" font-family=\"sans-serif\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << body_.str() << "</svg>\n";
        return out.str();
    }

private:
    double w_, h_;
    std::ostringstream body_;
};

/// Blue (low) to red (high) ramp over [0, 1].
inline std::string ramp_color(double t)
{
    t = std::clamp(std::isfinite(t) ? t : 0.5, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(49 + t * (215 - 49)));
    const int g = static_cast<int>(std::lround(54 + (1.0 - std::abs(2.0 * t - 1.0)) * (220 - 54)));
    const int b = static_cast<int>(std::lround(149 + t * (39 - 149)));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

/// One box per dataset: whiskers at min/max, box at the quartiles.
inline std::string svg_boxplots(const std::vector<Summary>& rows)
{
    const double left = 60, top = 30, plot_h = 300, step = 36;
    const double width = left + step * static_cast<double>(std::max<std::size_t>(rows.size(), 1)) + 20;
    Svg svg(width, top + plot_h + 90);
    double lo = -9.0, hi = 0.0;
    for (const auto& s : rows) {
        lo = std::min(lo, s.min);
        hi = std::max(hi, s.max);
    }
    if (hi <= lo)
        hi = lo + 1.0;
    auto y = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
    svg.text(width / 2, 18, "performance distribution (log10 error)", "title");
    svg.line(left, top, left, top + plot_h);
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        svg.line(left - 4, y(v), left, y(v));
        svg.text(left - 6, y(v) + 4, svg_number(v), "tick", "end", 10);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& s = rows[i];
        const double cx = left + step * (static_cast<double>(i) + 0.5);
        svg.line(cx, y(s.max), cx, y(s.q3));
        svg.line(cx, y(s.q1), cx, y(s.min));
        svg.line(cx - 6, y(s.max), cx + 6, y(s.max));
        svg.line(cx - 6, y(s.min), cx + 6, y(s.min));
        svg.rect(cx - 10, y(s.q3), 20, std::max(0.5, y(s.q1) - y(s.q3)), s.degenerate ? "#cccccc" : "#9ecae1", "#333");
        svg.line(cx - 10, y(s.median), cx + 10, y(s.median), "#d62728", 2.0);
        svg.text(cx, y(s.median) - 3, svg_number(s.median), "median", "middle", 8);
        svg.text(cx, top + plot_h + 14, s.dataset, "label", "middle", 8);
        svg.text(cx, top + plot_h + 26, "cap " + std::to_string(s.at_cap), "cap", "middle", 8);
    }
    return svg.str();
}

/// Cumulative importance curve: one vertex per ranked term, y in [0, 1].
inline std::string svg_cumulative(const std::vector<CurvePoint>& curve, const std::string& title)
{
    const double left = 50, top = 30, w = 460, h = 260;
    Svg svg(left + w + 20, top + h + 50);
    auto x = [&](double k) { return left + w * (k - 1.0) / std::max(1.0, static_cast<double>(curve.size()) - 1.0); };
    auto y = [&](double v) { return top + h * (1.0 - std::clamp(v, 0.0, 1.0)); };
    svg.text(left + w / 2, 18, title, "title");
    svg.line(left, top, left, top + h);
    svg.line(left, top + h, left + w, top + h);
    for (int t = 0; t <= 4; ++t) {
        svg.line(left - 4, y(t / 4.0), left, y(t / 4.0));
        svg.text(left - 6, y(t / 4.0) + 4, svg_number(t / 4.0), "tick", "end", 10);
    }
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curve)
        pts.emplace_back(x(static_cast<double>(p.k)), y(p.cumulative));
    svg.polyline(pts);
    if (!curve.empty()) {
        svg.text(left + w, y(curve.back().cumulative) - 6, svg_number(curve.back().cumulative), "final", "end", 10);
        svg.text(left + w / 2, top + h + 30, "ranked effects (k = 1.." + std::to_string(curve.size()) + ")", "axis");
        for (std::size_t k : {std::size_t{5}, std::size_t{10}})
            if (k <= curve.size())
                svg.text(x(static_cast<double>(k)), y(curve[k - 1].cumulative) - 6,
                         "top" + std::to_string(k) + "=" + svg_number(curve[k - 1].cumulative), "topk", "middle", 9);
    }
    return svg.str();
}

/// Heatmap with each cell's value printed inside it.
inline std::string svg_heatmap(const Heatmap& h, double cell_w = 56, double cell_h = 26, double label_w = 70)
{
    const double top = 40;
    const double w = label_w + cell_w * static_cast<double>(h.cols.size()) + 20;
    const double ht = top + cell_h * static_cast<double>(h.rows.size()) + 30;
    Svg svg(w, ht);
    svg.text(w / 2, 18, h.title, "title");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : h.values)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (std::size_t c = 0; c < h.cols.size(); ++c)
        svg.text(label_w + cell_w * (static_cast<double>(c) + 0.5), top - 6, h.cols[c], "col", "middle", 9);
    for (std::size_t r = 0; r < h.rows.size(); ++r) {
        const double y0 = top + cell_h * static_cast<double>(r);
        svg.text(label_w - 6, y0 + cell_h / 2 + 4, h.rows[r], "row", "end", 9);
        for (std::size_t c = 0; c < h.cols.size(); ++c) {
            const double v = h.values[r * h.cols.size() + c];
            const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
            const double x0 = label_w + cell_w * static_cast<double>(c);
            svg.rect(x0, y0, cell_w, cell_h, ramp_color(t), "white");
            svg.text(x0 + cell_w / 2, y0 + cell_h / 2 + 4, svg_number(v), "cell", "middle", 9);
        }
    }
    return svg.str();
}

/// Dendrogram drawn top-down; the y axis spans [0, final merge height].
inline std::string svg_dendrogram(const Dendrogram& dg)
{
    const std::size_t n = dg.leaves();
    const double left = 60, top = 30, h = 260, step = 28;
    const double w = left + step * static_cast<double>(n) + 20;
    Svg svg(w, top + h + 90);
    const double max_h = dg.merges.empty() ? 1.0 : dg.merges.back().height;
    const double scale = max_h > 0 ? max_h : 1.0;
    auto y = [&](double v) { return top + h * (1.0 - v / scale); };
    svg.text(w / 2, 18, "dendrogram (" + to_string(dg.linkage) + ", " + to_string(dg.metric) + ")", "title");
    svg.line(left - 10, top, left - 10, top + h);
    svg.text(left - 14, y(max_h) + 4, svg_number(max_h), "max-height", "end", 10);
    svg.text(left - 14, y(0) + 4, "0", "tick", "end", 10);

    std::vector<double> xs(2 * n - 1), ys(2 * n - 1, 0.0);
    const auto order = dg.leaf_order();
    for (std::size_t i = 0; i < order.size(); ++i) {
        xs[order[i]] = left + step * (static_cast<double>(i) + 0.5);
        const std::string label = order[i] < dg.labels.size() ? dg.labels[order[i]] : std::to_string(order[i]);
        svg.text(xs[order[i]], top + h + 14, label, "leaf", "middle", 8);
    }
    for (const auto& m : dg.merges) {
        xs[m.id] = 0.5 * (xs[m.a] + xs[m.b]);
        ys[m.id] = m.height;
        svg.line(xs[m.a], y(ys[m.a]), xs[m.a], y(m.height));
        svg.line(xs[m.b], y(ys[m.b]), xs[m.b], y(m.height));
        svg.line(xs[m.a], y(m.height), xs[m.b], y(m.height));
        svg.text(xs[m.id], y(m.height) - 3, svg_number(m.height), "height", "middle", 7);
    }
    return svg.str();
}

} // namespace psox

#endif // PSOX_REPORT_HPP
