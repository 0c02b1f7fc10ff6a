#ifndef PSOX_RUNNER_HPP
#define PSOX_RUNNER_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "psox/benchmark.hpp"
#include "psox/config.hpp"
#include "psox/io.hpp"
#include "psox/parallel.hpp"
#include "psox/swarm.hpp"

namespace psox {

// ---------------------------------------------------------------------------
// Configuration space

/// Selected level indices per module, in module order.
using SpaceDescription = std::array<std::vector<std::size_t>, module_count>;

inline SpaceDescription full_space()
{
    SpaceDescription s;
    for (std::size_t m = 0; m < module_count; ++m)
        for (std::size_t l = 0; l < level_count(m); ++l)
            s[m].push_back(l);
    return s;
}

/// Cartesian product of the selected levels minus structurally invalid
/// combinations, in lexicographic order over (module, level index).
inline std::vector<ModuleConfiguration> enumerate_configs(const SpaceDescription& space)
{
    SpaceDescription sorted = space;
    for (std::size_t m = 0; m < module_count; ++m) {
        auto& v = sorted[m];
        if (v.empty())
            throw DataError("empty option subset for module " + std::string(module_table()[m].key));
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        if (v.back() >= level_count(m))
            throw DataError("level index out of range for module " + std::string(module_table()[m].key));
    }
    std::vector<ModuleConfiguration> out;
    std::array<std::size_t, module_count> pos{};
    for (;;) {
        std::array<std::size_t, module_count> levels{};
        for (std::size_t m = 0; m < module_count; ++m)
            levels[m] = sorted[m][pos[m]];
        const auto c = ModuleConfiguration::from_levels(levels);
        if (c.structurally_valid())
            out.push_back(c);
        std::size_t m = module_count;
        while (m > 0) {
            --m;
            if (++pos[m] < sorted[m].size())
                break;
            pos[m] = 0;
            if (m == 0)
                return out;
        }
    }
}

/// Seeded subsample of `configs` without replacement; canonical order kept.
inline std::vector<ModuleConfiguration> sample_configs(const std::vector<ModuleConfiguration>& configs,
                                                       std::size_t count, std::uint64_t seed)
{
    if (count >= configs.size())
        return configs;
    std::vector<std::size_t> idx(configs.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    CounterRng rng(hash_values(seed, 0x73616d706c65ULL));
    psox::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    std::vector<ModuleConfiguration> out;
    out.reserve(count);
    for (auto i : idx)
        out.push_back(configs[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Plan

struct ExperimentPlan {
    std::vector<ModuleConfiguration> configurations;
    std::vector<bench::FunctionId> functions;
    std::vector<std::size_t> dimensions{10, 30};
    std::size_t runs_per_cell = 10;
    std::size_t budget_multiplier = 5000;
    std::uint64_t master_seed = 0;
    std::uint64_t transform_seed = 1;

    void validate() const
    {
        if (configurations.empty())
            throw DataError("plan has no configurations");
        for (const auto& c : configurations)
            if (!c.structurally_valid())
                throw DataError("structurally invalid configuration in plan: " + c.token());
        if (functions.empty())
            throw DataError("plan has no functions");
        if (dimensions.empty())
            throw DataError("plan has no dimensions");
        for (auto d : dimensions)
            if (d < 2)
                throw DataError("dimension must be at least 2");
        if (runs_per_cell < 1)
            throw DataError("runs_per_cell must be at least 1");
        for (auto d : dimensions)
            if (budget_multiplier * d < swarm_size)
                throw DataError("budget_multiplier * D must cover one swarm initialization");
    }
};

inline std::vector<bench::FunctionId> all_functions()
{
    std::vector<bench::FunctionId> out;
    for (int f = 1; f <= 25; ++f)
        out.push_back(static_cast<bench::FunctionId>(f));
    return out;
}

/// Plan file layout:
///   space            {module key: [level tokens]}; missing modules take every level
///   configurations   explicit token list (alternative to space)
///   sample           {"size": n, "seed": s} seeded subsample of the space
///   functions        ["f1", ...] or "all"
///   dims, runs, budget_multiplier, master_seed, transform_seed
inline ExperimentPlan plan_from_json(const nlohmann::json& j)
{
    try {
        if (!j.is_object())
            throw DataError("plan must be a JSON object");
        ExperimentPlan plan;
        if (j.contains("configurations")) {
            if (j.contains("space"))
                throw DataError("plan gives both 'space' and 'configurations'");
            for (const auto& t : j.at("configurations"))
                plan.configurations.push_back(ModuleConfiguration::parse(t.get<std::string>()));
        } else {
            SpaceDescription space = full_space();
            if (j.contains("space")) {
                for (const auto& [key, tokens] : j.at("space").items()) {
                    const auto m = module_index(key);
                    space[m].clear();
                    for (const auto& t : tokens)
                        space[m].push_back(level_index(m, t.get<std::string>()));
                }
            }
            plan.configurations = enumerate_configs(space);
        }
        if (j.contains("sample")) {
            const auto& s = j.at("sample");
            plan.configurations = sample_configs(plan.configurations, s.at("size").get<std::size_t>(),
                                                 s.value("seed", std::uint64_t{0}));
        }
        if (!j.contains("functions") || (j.at("functions").is_string() && j.at("functions") == "all")) {
            plan.functions = all_functions();
        } else {
            for (const auto& f : j.at("functions"))
                plan.functions.push_back(bench::parse_function_id(f.get<std::string>()));
        }
        if (j.contains("dims"))
            plan.dimensions = j.at("dims").get<std::vector<std::size_t>>();
        plan.runs_per_cell = j.value("runs", plan.runs_per_cell);
        plan.budget_multiplier = j.value("budget_multiplier", plan.budget_multiplier);
        plan.master_seed = j.value("master_seed", plan.master_seed);
        plan.transform_seed = j.value("transform_seed", plan.transform_seed);
        plan.validate();
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("invalid plan: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("invalid plan: ") + e.what());
    }
}

inline ExperimentPlan load_plan(const std::string& path)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse plan '" + path + "': " + e.what());
    }
    return plan_from_json(j);
}

// ---------------------------------------------------------------------------
// Cell statistics

inline constexpr double error_cap = 1e-9;

/// Lower median: the order statistic ceil(n/2), so the value is always observed.
inline double lower_median(std::vector<double> values)
{
    if (values.empty())
        throw std::invalid_argument("median of empty sample");
    const std::size_t k = (values.size() + 1) / 2 - 1;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
    return values[k];
}

inline double capped_log_error(double median_error)
{
    if (!(median_error >= 0.0))
        throw std::logic_error("negative or NaN median error");
    return std::log10(std::max(median_error, error_cap));
}

inline double run_cell(const ModuleConfiguration& config, const bench::ProblemInstance& problem,
                       std::size_t runs, std::size_t budget_multiplier, std::uint64_t master_seed)
{
    std::vector<double> errors;
    errors.reserve(runs);
    const std::size_t budget = budget_multiplier * problem.dimension();
    for (std::size_t r = 0; r < runs; ++r)
        errors.push_back(run(config, problem, budget, run_seed(master_seed, config, problem.spec(), r)).final_error);
    return capped_log_error(lower_median(std::move(errors)));
}

// ---------------------------------------------------------------------------
// Dataset

struct PerformanceDataset {
    bench::FunctionId function = bench::FunctionId::f1;
    std::size_t dimension = 10;
    std::size_t runs_per_cell = 0;
    std::size_t budget_multiplier = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t transform_seed = 1;
    std::vector<ModuleConfiguration> configurations;
    std::vector<double> targets;

    bool operator==(const PerformanceDataset&) const = default;

    std::size_t size() const noexcept { return targets.size(); }
    std::string id() const { return bench::to_string(function) + "_D" + std::to_string(dimension); }
    std::string file_name() const { return "dataset_" + id() + ".csv"; }
};

inline std::string dataset_header()
{
    std::string h;
    for (const auto& m : module_table()) {
        h += m.key;
        h += ',';
    }
    return h + "target";
}

inline void write_dataset(std::ostream& out, const PerformanceDataset& ds)
{
    if (ds.configurations.size() != ds.targets.size())
        throw std::logic_error("dataset rows and targets differ in length");
    out << "# function=" << bench::to_string(ds.function) << '\n'
        << "# dimension=" << ds.dimension << '\n'
        << "# runs=" << ds.runs_per_cell << '\n'
        << "# budget_multiplier=" << ds.budget_multiplier << '\n'
        << "# master_seed=" << ds.master_seed << '\n'
        << "# transform_seed=" << ds.transform_seed << '\n'
        << dataset_header() << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& t = module_table();
        const auto l = ds.configurations[i].levels();
        for (std::size_t m = 0; m < module_count; ++m)
            out << t[m].levels[l[m]] << ',';
        out << format_double(ds.targets[i]) << '\n';
    }
}

inline std::string dataset_to_string(const PerformanceDataset& ds)
{
    std::ostringstream ss;
    write_dataset(ss, ds);
    return ss.str();
}

inline PerformanceDataset read_dataset(std::istream& in)
{
    PerformanceDataset ds;
    std::string line;
    bool header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = strip_cr(line);
        const auto where = " (line " + std::to_string(line_no) + ")";
        if (text.empty())
            continue;
        if (!header && text.front() == '#') {
            const auto body = text.substr(1);
            const auto eq = body.find('=');
            if (eq == std::string_view::npos)
                continue;
            auto key = body.substr(0, eq);
            while (!key.empty() && key.front() == ' ')
                key.remove_prefix(1);
            const auto value = body.substr(eq + 1);
            try {
                if (key == "function")
                    ds.function = bench::parse_function_id(value);
                else if (key == "dimension")
                    ds.dimension = parse_u64(value);
                else if (key == "runs")
                    ds.runs_per_cell = parse_u64(value);
                else if (key == "budget_multiplier")
                    ds.budget_multiplier = parse_u64(value);
                else if (key == "master_seed")
                    ds.master_seed = parse_u64(value);
                else if (key == "transform_seed")
                    ds.transform_seed = parse_u64(value);
            } catch (const std::invalid_argument& e) {
                throw DataError(std::string(e.what()) + where);
            }
            continue;
        }
        if (!header) {
            if (text != dataset_header())
                throw DataError("malformed dataset header" + where);
            header = true;
            continue;
        }
        const auto fields = split(text, ',');
        if (fields.size() != module_count + 1)
            throw DataError("wrong field count" + where);
        std::array<std::size_t, module_count> l{};
        try {
            for (std::size_t m = 0; m < module_count; ++m)
                l[m] = level_index(m, fields[m]);
        } catch (const std::invalid_argument& e) {
            throw DataError(std::string(e.what()) + where);
        }
        const auto c = ModuleConfiguration::from_levels(l);
        if (!c.structurally_valid())
            throw DataError("structurally invalid configuration" + where);
        double target = 0.0;
        try {
            target = parse_double(fields[module_count]);
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + where);
        }
        ds.configurations.push_back(c);
        ds.targets.push_back(target);
    }
    if (!header)
        throw DataError("missing dataset header");
    return ds;
}

inline PerformanceDataset dataset_from_string(const std::string& text)
{
    std::istringstream ss(text);
    return read_dataset(ss);
}

inline PerformanceDataset load_dataset(const std::string& path)
{
    return dataset_from_string(read_file(path));
}

inline void save_dataset(const std::string& path, const PerformanceDataset& ds)
{
    write_file(path, dataset_to_string(ds));
}

// ---------------------------------------------------------------------------
// Journal

/// Append-only record of completed cells. Each line is
/// `key<TAB>target`; a torn final line from an interrupted run is ignored.
class Journal {
public:
    explicit Journal(std::string path) : path_(std::move(path))
    {
        std::ifstream in(path_);
        std::string line;
        while (std::getline(in, line)) {
            const auto tab = line.rfind('\t');
            if (tab == std::string::npos)
                continue;
            try {
                done_[line.substr(0, tab)] = parse_double(std::string_view(line).substr(tab + 1));
            } catch (const DataError&) {
            }
        }
    }

    static std::string key(const ModuleConfiguration& c, const bench::ProblemSpec& spec, const ExperimentPlan& plan)
    {
        return bench::to_string(spec.function) + "|D" + std::to_string(spec.dimension) + "|" + c.token() + "|r" +
               std::to_string(plan.runs_per_cell) + "|b" + std::to_string(plan.budget_multiplier) + "|s" +
               std::to_string(plan.master_seed) + "|t" + std::to_string(spec.transform_seed);
    }

    std::optional<double> find(const std::string& k) const
    {
        std::lock_guard lock(mutex_);
        const auto it = done_.find(k);
        if (it == done_.end())
            return std::nullopt;
        return it->second;
    }

    void record(const std::string& k, double target)
    {
        std::lock_guard lock(mutex_);
        std::ofstream out(path_, std::ios::app);
        out << k << '\t' << format_double(target) << '\n';
        out.flush();
        if (!out)
            throw DataError("cannot append to journal '" + path_ + "'");
        done_[k] = target;
    }

    std::size_t size() const
    {
        std::lock_guard lock(mutex_);
        return done_.size();
    }

private:
    std::string path_;
    std::map<std::string, double> done_;
    mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Execution

struct ExecuteOptions {
    std::size_t workers = 0; // 0: default_workers()
    Journal* journal = nullptr;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Runs every (configuration, function, dimension) cell and returns one
/// dataset per (function, dimension), functions outer, dimensions inner.
inline std::vector<PerformanceDataset> execute(const ExperimentPlan& plan, const ExecuteOptions& options = {})
{
    plan.validate();
    std::vector<PerformanceDataset> datasets;
    std::vector<bench::ProblemInstance> problems;
    for (auto f : plan.functions)
        for (auto d : plan.dimensions) {
            bench::ProblemSpec spec{f, d, plan.transform_seed, std::nullopt};
            problems.push_back(bench::make_problem(spec));
            PerformanceDataset ds;
            ds.function = f;
            ds.dimension = d;
            ds.runs_per_cell = plan.runs_per_cell;
            ds.budget_multiplier = plan.budget_multiplier;
            ds.master_seed = plan.master_seed;
            ds.transform_seed = plan.transform_seed;
            ds.configurations = plan.configurations;
            ds.targets.assign(plan.configurations.size(), 0.0);
            datasets.push_back(std::move(ds));
        }

    const std::size_t per = plan.configurations.size();
    const std::size_t total = per * problems.size();
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    parallel_for(total, options.workers, [&](std::size_t item) {
        const std::size_t p = item / per, c = item % per;
        const auto& config = plan.configurations[c];
        std::optional<std::string> key;
        std::optional<double> target;
        if (options.journal) {
            key = Journal::key(config, problems[p].spec(), plan);
            target = options.journal->find(*key);
        }
        if (!target) {
            target = run_cell(config, problems[p], plan.runs_per_cell, plan.budget_multiplier, plan.master_seed);
            if (options.journal)
                options.journal->record(*key, *target);
        }
        datasets[p].targets[c] = *target;
        if (options.progress) {
            std::lock_guard lock(progress_mutex);
            options.progress(++done, total);
        }
    });
    return datasets;
}

} // namespace psox

#endif // PSOX_RUNNER_HPP
