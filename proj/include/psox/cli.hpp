#ifndef PSOX_CLI_HPP
#define PSOX_CLI_HPP

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "psox/cluster.hpp"
#include "psox/fanova.hpp"
#include "psox/io.hpp"
#include "psox/report.hpp"
#include "psox/runner.hpp"

namespace psox::cli {

namespace fs = std::filesystem;

enum ExitCode { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_internal = 3 };

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void check_invariant(bool ok, const std::string& what)
{
    if (!ok)
        throw InvariantError("invariant violated: " + what);
}

struct Options {
    std::string plan;
    std::string out = "psox_out";
    std::optional<std::uint64_t> seed;
    std::vector<std::size_t> dims;
    std::vector<std::string> functions;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> budget_mult;
    std::size_t max_order = 3;
    std::optional<std::size_t> k;
    std::optional<std::string> metric;
    std::optional<std::string> linkage;
    std::string format = "csv";
    std::string pair = "mtx+iw";
    std::vector<std::string> inputs;
};

// ---------------------------------------------------------------------------
// Helpers

/// Sort key for ids such as "f9_D10": (function number, dimension), then text.
inline std::tuple<long, long, std::string> id_key(const std::string& id)
{
    static const std::regex re(R"(f(\d+)_D(\d+))");
    std::smatch m;
    if (std::regex_search(id, m, re))
        return {std::stol(m[1]), std::stol(m[2]), id};
    return {1L << 30, 0, id};
}

inline std::vector<fs::path> list_files(const fs::path& dir, const std::string& prefix, const std::string& suffix)
{
    std::vector<fs::path> out;
    if (!fs::is_directory(dir))
        return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.starts_with(prefix) && name.ends_with(suffix))
            out.push_back(e.path());
    }
    std::sort(out.begin(), out.end(), [&](const fs::path& a, const fs::path& b) {
        return id_key(a.filename().string()) < id_key(b.filename().string());
    });
    return out;
}

inline ExperimentPlan resolve_plan(const Options& o, bool required)
{
    ExperimentPlan plan;
    if (o.plan.empty()) {
        if (required)
            throw UsageError("--plan is required");
        plan = plan_from_json(nlohmann::json::object());
    } else {
        plan = load_plan(o.plan);
    }
    try {
        if (o.seed)
            plan.master_seed = *o.seed;
        if (!o.dims.empty())
            plan.dimensions = o.dims;
        if (!o.functions.empty()) {
            plan.functions.clear();
            for (const auto& f : o.functions)
                plan.functions.push_back(bench::parse_function_id(f));
        }
        if (o.runs)
            plan.runs_per_cell = *o.runs;
        if (o.budget_mult)
            plan.budget_multiplier = *o.budget_mult;
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    plan.validate();
    return plan;
}

inline std::string timestamp_utc()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Rewrites <out>/index.json listing every file under <out> with its size and
/// FNV-1a content hash. The timestamp lives only here.
inline void write_index(const Options& o, const std::vector<std::string>& stages)
{
    const fs::path root(o.out);
    nlohmann::json files = nlohmann::json::array();
    std::vector<fs::path> paths;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() != "index.json")
            paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        const auto content = read_file(p.string());
        files.push_back({{"path", fs::relative(p, root).generic_string()},
                         {"bytes", content.size()},
                         {"fnv1a64", hex64(fnv1a(content))}});
    }
    nlohmann::json j{{"generated", timestamp_utc()},
                     {"stages", stages},
                     {"plan", o.plan},
                     {"format", o.format},
                     {"files", files}};
    if (o.seed)
        j["seed"] = *o.seed;
    write_file((root / "index.json").string(), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_enumerate(const Options& o, std::ostream& out)
{
    const auto plan = resolve_plan(o, false);
    if (o.format == "json") {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& c : plan.configurations)
            list.push_back(c.token());
        out << nlohmann::json{{"count", plan.configurations.size()}, {"configurations", list}}.dump(2) << '\n';
        return;
    }
    out << "# count=" << plan.configurations.size() << '\n';
    for (const auto& c : plan.configurations)
        out << c.token() << '\n';
}

inline std::vector<std::string> cmd_run(const Options& o, std::ostream& log)
{
    const auto plan = resolve_plan(o, true);
    const fs::path dir = fs::path(o.out) / "datasets";
    fs::create_directories(dir);
    const auto journal_path = (fs::path(o.out) / "journal.tsv").string();
    std::vector<std::string> written;
    {
        Journal journal(journal_path);
        if (journal.size() > 0)
            log << "run: resuming with " << journal.size() << " journaled cells\n";
        int last_pct = -1;
        ExecuteOptions opts;
        opts.journal = &journal;
        opts.progress = [&](std::size_t done, std::size_t total) {
            const int pct = static_cast<int>(100 * done / total);
            if (pct != last_pct) {
                last_pct = pct;
                log << "run: " << pct << "% (" << done << "/" << total << " cells)\n";
            }
        };
        for (const auto& ds : execute(plan, opts)) {
            for (double t : ds.targets)
                check_invariant(t >= std::log10(error_cap), "target below the cap");
            const auto path = (dir / ds.file_name()).string();
            save_dataset(path, ds);
            written.push_back(path);
        }
    }
    // the journal is only needed to resume an interrupted run
    fs::remove(journal_path);
    return written;
}

inline std::vector<std::string> cmd_analyze(const Options& o, std::ostream& log)
{
    std::vector<fs::path> inputs(o.inputs.begin(), o.inputs.end());
    if (inputs.empty())
        inputs = list_files(fs::path(o.out) / "datasets", "dataset_", ".csv");
    if (inputs.empty())
        throw DataError("no dataset files to analyze");
    const fs::path dir = fs::path(o.out) / "analysis";
    fs::create_directories(dir);
    if (o.max_order < 1 || o.max_order > 3)
        throw UsageError("--max-order must be 1, 2 or 3");

    ForestParams params;
    params.seed = o.seed.value_or(0);
    std::vector<PerformanceDataset> datasets;
    for (const auto& p : inputs)
        datasets.push_back(load_dataset(p.string()));
    std::sort(datasets.begin(), datasets.end(),
              [](const auto& a, const auto& b) { return id_key(a.id()) < id_key(b.id()); });

    std::vector<Summary> summaries;
    std::vector<std::string> written;
    nlohmann::json json_effects = nlohmann::json::array();
    auto emit = [&](const std::string& name, const std::string& content) {
        const auto path = (dir / name).string();
        write_file(path, content);
        written.push_back(path);
    };
    for (const auto& ds : datasets) {
        if (ds.size() == 0)
            throw DataError("dataset " + ds.id() + " is empty");
        Summary s = summarize(ds);
        const auto table = to_table(ds);
        const auto forest = SurrogateForest::fit(table, params);
        s.oob_r2 = forest.oob_r2();
        std::ostringstream effects;
        try {
            auto ev = decompose(forest, o.max_order);
            ev.dataset_id = ds.id();
            double sum = 0.0;
            for (const auto& t : ev.terms) {
                check_invariant(t.importance >= 0.0, "negative importance");
                sum += t.importance;
            }
            check_invariant(sum <= 1.0 + 1e-9, "importances exceed total variance");
            write_effect_vector(effects, ev);
            std::ostringstream curve;
            write_cumulative(curve, ev);
            emit("cumulative_" + ds.id() + ".csv", curve.str());
            if (o.format == "json")
                emit("effects_" + ds.id() + ".json", to_json(ev).dump(2) + "\n");
        } catch (const DegenerateDataset&) {
            s.degenerate = true;
            write_degenerate(effects, ds.id());
            log << "analyze: " << ds.id() << " is degenerate (no target variance)\n";
        }
        emit("effects_" + ds.id() + ".csv", effects.str());
        std::ostringstream mains, pairs;
        write_marginal_mains(mains, forest);
        write_marginal_pairs(pairs, forest);
        emit("marginal_" + ds.id() + "_main.csv", mains.str());
        emit("marginal_" + ds.id() + "_pairs.csv", pairs.str());
        summaries.push_back(s);
        log << "analyze: " << ds.id() << " done\n";
    }
    std::ostringstream sum;
    write_summaries(sum, summaries);
    emit("summary.csv", sum.str());
    if (o.format == "json") {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& s : summaries)
            j.push_back(to_json(s));
        emit("summary.json", j.dump(2) + "\n");
    }
    return written;
}

inline std::vector<std::string> cmd_cluster(const Options& o, std::ostream& log)
{
    std::vector<fs::path> inputs(o.inputs.begin(), o.inputs.end());
    if (inputs.empty())
        inputs = list_files(fs::path(o.out) / "analysis", "effects_", ".csv");
    std::vector<std::string> names, skipped;
    std::vector<Vector> vectors;
    std::vector<std::string> term_names;
    for (const auto& p : inputs) {
        const auto file = load_effect_vector(p.string());
        const auto id = file.vector.dataset_id.empty() ? p.stem().string() : file.vector.dataset_id;
        if (file.degenerate) {
            skipped.push_back(id);
            log << "cluster: skipping degenerate " << id << '\n';
            continue;
        }
        std::vector<std::string> terms;
        for (const auto& t : file.vector.terms)
            terms.push_back(file.vector.subset_name(t.subset));
        if (term_names.empty())
            term_names = terms;
        else if (terms != term_names)
            throw DataError("effect vectors disagree on their terms: " + p.string());
        names.push_back(id);
        vectors.push_back(file.vector.importances());
    }
    if (vectors.size() < 2)
        throw DataError("clustering needs at least two effect vectors");

    const std::size_t n = vectors.size();
    std::optional<Metric> metric;
    std::optional<Linkage> linkage;
    try {
        if (o.metric)
            metric = parse_metric(*o.metric);
        if (o.linkage)
            linkage = parse_linkage(*o.linkage);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (o.k && (*o.k < 1 || *o.k > n))
        throw UsageError("--k must lie in [1, " + std::to_string(n) + "]");
    if (linkage == Linkage::ward && metric == Metric::cosine)
        throw UsageError("ward linkage requires the euclidean metric");

    ClusterReport report;
    if (n == 2) {
        report = cluster_fixed(vectors, names, 2, metric.value_or(Metric::cosine), linkage.value_or(Linkage::complete));
    } else {
        const auto full = grid_search(vectors, names, 2, n - 1);
        // best cell honouring the overrides
        const GridCell* chosen = nullptr;
        for (const auto& c : full.grid) {
            if (!c.valid || (o.k && c.k != *o.k) || (metric && c.metric != *metric) || (linkage && c.linkage != *linkage))
                continue;
            if (!chosen || c.score > chosen->score)
                chosen = &c;
        }
        if (chosen) {
            report = cluster_fixed(vectors, names, chosen->k, chosen->metric, chosen->linkage);
        } else {
            // k outside the searched range (1 or n)
            report = cluster_fixed(vectors, names, *o.k, metric.value_or(full.metric), linkage.value_or(full.linkage));
        }
        report.grid = full.grid;
    }
    for (double s : {report.silhouette})
        check_invariant(s >= -1.0 && s <= 1.0, "silhouette outside [-1, 1]");

    const fs::path dir = fs::path(o.out) / "cluster";
    fs::create_directories(dir);
    std::vector<std::string> written;
    std::ostringstream map;
    map << "problem,cluster";
    for (const auto& t : term_names)
        map << ',' << t;
    map << '\n';
    for (auto leaf : report.dendrogram.leaf_order()) {
        map << names[leaf] << ',' << report.labels[leaf];
        for (double v : vectors[leaf])
            map << ',' << format_double(v);
        map << '\n';
    }
    write_file((dir / "clustermap.csv").string(), map.str());
    written.push_back((dir / "clustermap.csv").string());
    std::ostringstream dg;
    write_dendrogram(dg, report.dendrogram);
    write_file((dir / "dendrogram.csv").string(), dg.str());
    written.push_back((dir / "dendrogram.csv").string());
    auto j = to_json(report);
    j["skipped_degenerate"] = skipped;
    j["n"] = n;
    write_file((dir / "cluster_report.json").string(), j.dump(2) + "\n");
    written.push_back((dir / "cluster_report.json").string());
    log << "cluster: k=" << report.k << " metric=" << to_string(report.metric)
        << " linkage=" << to_string(report.linkage) << " silhouette=" << svg_number(report.silhouette) << '\n';
    return written;
}

inline Heatmap read_clustermap(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw DataError("empty clustermap file");
    const auto header = split(strip_cr(line), ',');
    if (header.size() < 3 || header[0] != "problem" || header[1] != "cluster")
        throw DataError("malformed clustermap header");
    Heatmap h;
    h.title = "clustermap";
    for (std::size_t i = 2; i < header.size(); ++i)
        h.cols.emplace_back(header[i]);
    while (std::getline(in, line)) {
        const auto text = strip_cr(line);
        if (text.empty())
            continue;
        const auto f = split(text, ',');
        if (f.size() != header.size())
            throw DataError("malformed clustermap row");
        h.rows.push_back(std::string(f[0]) + " [" + std::string(f[1]) + "]");
        for (std::size_t i = 2; i < f.size(); ++i)
            h.values.push_back(parse_double(f[i]));
    }
    return h;
}

inline std::vector<std::string> cmd_plot(const Options& o, std::ostream& log)
{
    const fs::path root(o.out);
    std::vector<fs::path> inputs(o.inputs.begin(), o.inputs.end());
    if (inputs.empty()) {
        const auto a = root / "analysis";
        if (fs::exists(a / "summary.csv"))
            inputs.push_back(a / "summary.csv");
        for (const auto& p : list_files(a, "cumulative_", ".csv"))
            inputs.push_back(p);
        for (const auto& p : list_files(a, "marginal_", "_pairs.csv"))
            inputs.push_back(p);
        for (const auto* name : {"clustermap.csv", "dendrogram.csv"})
            if (fs::exists(root / "cluster" / name))
                inputs.push_back(root / "cluster" / name);
        if (inputs.empty())
            throw DataError("nothing to plot under " + root.string());
    }
    const auto plus = o.pair.find('+');
    if (plus == std::string::npos)
        throw UsageError("--pair must look like mtx+iw");
    const std::string row_module = o.pair.substr(0, plus), col_module = o.pair.substr(plus + 1);

    const fs::path dir = root / "plots";
    fs::create_directories(dir);
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& svg) {
        const auto path = (dir / name).string();
        write_file(path, svg);
        written.push_back(path);
    };
    for (const auto& p : inputs) {
        if (!fs::exists(p))
            throw DataError("missing input file " + p.string());
        const auto name = p.filename().string();
        const auto stem = p.stem().string();
        std::istringstream in(read_file(p.string()));
        if (name == "summary.csv") {
            emit("boxplots.svg", svg_boxplots(read_summaries(in)));
        } else if (name.starts_with("cumulative_")) {
            const auto id = stem.substr(std::string("cumulative_").size());
            emit("cumulative_" + id + ".svg", svg_cumulative(read_cumulative(in), "cumulative importance " + id));
        } else if (name.starts_with("marginal_") && name.ends_with("_pairs.csv")) {
            const auto id = stem.substr(std::string("marginal_").size(), stem.size() - 9 - 6);
            try {
                auto h = read_marginal_pair(in, row_module, col_module);
                h.title = id + ": " + h.title;
                emit("heatmap_" + id + "_" + row_module + "_" + col_module + ".svg", svg_heatmap(h));
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
        } else if (name == "clustermap.csv") {
            emit("clustermap.svg", svg_heatmap(read_clustermap(in), 40, 16, 110));
        } else if (name == "dendrogram.csv") {
            emit("dendrogram.svg", svg_dendrogram(read_dendrogram(in)));
        } else {
            throw DataError("do not know how to plot " + name);
        }
    }
    log << "plot: " << written.size() << " figures\n";
    return written;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"psox_lab: modular PSO experiments, variance decomposition and clustering"};
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;
    std::size_t runs = 0, budget = 0, k = 0;
    std::string metric, linkage;

    auto common = [&](CLI::App* c) {
        c->add_option("--plan", o.plan, "Experiment plan (JSON)");
        c->add_option("--out", o.out, "Output directory")->capture_default_str();
        c->add_option("--seed", seed, "Master seed for runs; forest seed for analysis");
        c->add_option("--dims", o.dims, "Dimensions, e.g. --dims 10 30")->delimiter(',');
        c->add_option("--functions", o.functions, "Benchmark rows, e.g. --functions f1,f9")->delimiter(',');
        c->add_option("--runs", runs, "Runs per cell");
        c->add_option("--budget-mult", budget, "Evaluation budget multiplier (budget = mult * D)");
        c->add_option("--max-order", o.max_order, "Highest interaction order")->capture_default_str();
        c->add_option("--k", k, "Number of clusters");
        c->add_option("--metric", metric, "Distance metric")->check(CLI::IsMember({"euclidean", "cosine"}));
        c->add_option("--linkage", linkage, "Linkage")->check(CLI::IsMember({"single", "complete", "average", "ward"}));
        c->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
        c->add_option("--pair", o.pair, "Module pair for heatmaps")->capture_default_str();
        c->add_option("inputs", o.inputs, "Input files (default: discovered under --out)");
    };
    auto* enumerate = app.add_subcommand("enumerate", "List the configurations of a plan");
    auto* run = app.add_subcommand("run", "Execute a plan and write one dataset per problem and dimension");
    auto* analyze = app.add_subcommand("analyze", "Fit surrogates and write effect vectors, curves, marginals");
    auto* cluster = app.add_subcommand("cluster", "Cluster effect vectors");
    auto* plot = app.add_subcommand("plot", "Render SVG figures from analysis files");
    auto* pipeline = app.add_subcommand("pipeline", "run, analyze, cluster and plot in sequence");
    for (auto* c : {enumerate, run, analyze, cluster, plot, pipeline})
        common(c);
    app.footer("Worker threads: PSOX_WORKERS (default: available hardware parallelism).\n"
               "Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal invariant violation.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }
    auto given = [](CLI::App* c, const char* name) { return c->count(name) > 0; };
    CLI::App* active = app.get_subcommands().front();
    if (given(active, "--seed"))
        o.seed = seed;
    if (given(active, "--runs"))
        o.runs = runs;
    if (given(active, "--budget-mult"))
        o.budget_mult = budget;
    if (given(active, "--k"))
        o.k = k;
    if (given(active, "--metric"))
        o.metric = metric;
    if (given(active, "--linkage"))
        o.linkage = linkage;

    try {
        std::vector<std::string> stages;
        if (active == enumerate) {
            if (!o.inputs.empty())
                throw UsageError("enumerate takes no input files");
            cmd_enumerate(o, out);
            return exit_ok;
        }
        fs::create_directories(o.out);
        if (active == run) {
            if (!o.inputs.empty())
                throw UsageError("run takes no input files");
            cmd_run(o, err);
            stages = {"run"};
        } else if (active == analyze) {
            cmd_analyze(o, err);
            stages = {"analyze"};
        } else if (active == cluster) {
            cmd_cluster(o, err);
            stages = {"cluster"};
        } else if (active == plot) {
            cmd_plot(o, err);
            stages = {"plot"};
        } else {
            if (!o.inputs.empty())
                throw UsageError("pipeline takes no input files");
            cmd_run(o, err);
            cmd_analyze(o, err);
            std::size_t usable = 0;
            for (const auto& p : list_files(fs::path(o.out) / "analysis", "effects_", ".csv"))
                usable += !load_effect_vector(p.string()).degenerate;
            stages = {"run", "analyze"};
            if (usable >= 2) {
                cmd_cluster(o, err);
                stages.push_back("cluster");
            } else {
                err << "pipeline: fewer than two usable effect vectors, skipping cluster\n";
            }
            cmd_plot(o, err);
            stages.push_back("plot");
        }
        write_index(o, stages);
        return exit_ok;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const InvariantError& e) {
        err << "internal error: " << e.what() << '\n';
        return exit_internal;
    } catch (const std::invalid_argument& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
}

} // namespace psox::cli

#endif // PSOX_CLI_HPP
