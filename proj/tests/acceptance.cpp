// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "psox/cluster.hpp"
#include "psox/fanova.hpp"
#include "psox/report.hpp"
#include "psox/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

using namespace psox;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Outcome()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limit_s && o.pass) {
        o.pass = false;
        o.detail = "runtime limit exceeded";
    }
    failures += !o.pass;
    std::printf("%s  %-32s %6.1fs / %4.0fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, limit_s,
                o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

CategoricalTable grid_table(const std::vector<std::size_t>& levels,
                            const std::function<double(const std::vector<std::size_t>&)>& g)
{
    std::vector<std::string> names;
    for (std::size_t f = 0; f < levels.size(); ++f)
        names.push_back("x" + std::to_string(f));
    CategoricalTable t(names, levels);
    std::size_t cells = 1;
    for (auto l : levels)
        cells *= l;
    std::vector<std::size_t> codes;
    for (std::size_t i = 0; i < cells; ++i) {
        grid_point(i, levels, codes);
        t.add_row(codes, g(codes));
    }
    return t;
}

CategoricalTable random_grid(CounterRng& rng)
{
    std::vector<std::size_t> levels(1 + rng.below(4));
    for (auto& l : levels)
        l = 2 + rng.below(3);
    return grid_table(levels, [&](const std::vector<std::size_t>&) { return rng.normal(); });
}

Outcome check_curve(const EffectVector& ev)
{
    Outcome o;
    o.require(ev.terms.size() == 92, "expected 92 terms, got " + std::to_string(ev.terms.size()));
    const auto expected = canonical_subsets(8, 3);
    for (std::size_t i = 0; i < std::min(expected.size(), ev.terms.size()); ++i)
        o.require(ev.terms[i].subset == expected[i], "term " + std::to_string(i) + " out of canonical order");
    o.require(ev.residual >= -1e-12 && ev.residual <= 1.0 + 1e-12, "residual outside [0, 1]");
    const auto curve = cumulative_curve(ev);
    for (std::size_t k = 1; k < curve.size(); ++k)
        o.require(curve[k] >= curve[k - 1], "cumulative curve decreases");
    o.require(!curve.empty() && std::abs(curve.back() - (1.0 - ev.residual)) <= 1e-9,
              "curve does not end at 1 - residual");
    return o;
}

} // namespace

int main()
{
    std::printf("psox acceptance suite (%u hardware threads)\n", std::thread::hardware_concurrency());

    criterion("exact-decomposition completeness", 10, [] {
        Outcome o;
        CounterRng rng(101);
        double worst = 0.0;
        for (int k = 0; k < 50; ++k) {
            const auto t = random_grid(rng);
            const auto ev = exact_decompose(t, t.features());
            double s = 0.0;
            for (const auto& term : ev.terms) {
                o.require(term.importance >= 0.0, "negative term");
                s += term.importance;
            }
            worst = std::max(worst, std::abs(s - 1.0));
        }
        o.require(worst <= 1e-9, "sum deviates by " + fmt("%.3g", worst));
        if (o.pass)
            o.detail = "50 tables, max |sum - 1| = " + fmt("%.2g", worst);
        return o;
    });

    criterion("oracle equivalence", 30, [] {
        Outcome o;
        CounterRng rng(202);
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const auto t = random_grid(rng);
            const auto a = exact_decompose(t, t.features());
            const auto b = decompose(t, ForestParams::interpolating(static_cast<std::uint64_t>(k)), t.features());
            o.require(a.terms.size() == b.terms.size(), "term count differs");
            for (std::size_t i = 0; i < std::min(a.terms.size(), b.terms.size()); ++i) {
                o.require(a.terms[i].subset == b.terms[i].subset, "term order differs");
                worst = std::max(worst, std::abs(a.terms[i].importance - b.terms[i].importance));
            }
        }
        o.require(worst <= 1e-6, "max term difference " + fmt("%.3g", worst));
        if (o.pass)
            o.detail = "20 tables, max term difference " + fmt("%.2g", worst);
        return o;
    });

    criterion("pure-interaction correctness", 10, [] {
        Outcome o;
        const auto xor_t = grid_table({2, 2}, [](const auto& c) { return double(c[0] ^ c[1]); });
        const auto add_t = grid_table({2, 2}, [](const auto& c) { return double(c[0]) + double(c[1]); });
        for (int route = 0; route < 2; ++route) {
            const auto x = route ? decompose(xor_t, ForestParams::interpolating(), 2) : exact_decompose(xor_t, 2);
            const auto a = route ? decompose(add_t, ForestParams::interpolating(), 2) : exact_decompose(add_t, 2);
            const std::string tag = route ? "forest: " : "exact: ";
            o.require(std::abs(x.importance_of({0, 1}) - 1.0) <= 1e-9, tag + "XOR pair != 1");
            o.require(std::abs(x.importance_of({0})) <= 1e-9 && std::abs(x.importance_of({1})) <= 1e-9,
                      tag + "XOR mains != 0");
            o.require(std::abs(a.importance_of({0}) - 0.5) <= 1e-9 && std::abs(a.importance_of({1}) - 0.5) <= 1e-9,
                      tag + "additive mains != 0.5");
            o.require(std::abs(a.importance_of({0, 1})) <= 1e-9, tag + "additive pair != 0");
        }
        if (o.pass)
            o.detail = "XOR and additive tables, both routes";
        return o;
    });

    criterion("effect-vector shape", 60, [] {
        Outcome o;
        CounterRng rng(303);
        const auto all = enumerate_configs(full_space());
        for (int k = 0; k < 5 && o.pass; ++k) {
            PerformanceDataset ds;
            ds.function = static_cast<bench::FunctionId>(1 + k);
            ds.configurations = sample_configs(all, 100 + 150 * static_cast<std::size_t>(k), 17 + k);
            std::vector<double> w(8);
            for (auto& x : w)
                x = rng.normal();
            for (const auto& c : ds.configurations) {
                const auto l = c.levels();
                double y = 0.3 * rng.normal();
                for (std::size_t m = 0; m < 8; ++m)
                    y += w[m] * double(l[m]) + (m ? 0.2 * double(l[m] * l[m - 1]) : 0.0);
                ds.targets.push_back(y);
            }
            ForestParams params;
            params.seed = static_cast<std::uint64_t>(k);
            const auto ev = decompose(ds, params, 3);
            const auto r = check_curve(ev);
            o.require(r.pass, ds.id() + ": " + r.detail);
        }
        if (o.pass)
            o.detail = "5 random datasets: 92 canonical terms, monotone curves ending at 1 - residual";
        return o;
    });

    criterion("protocol fidelity", 60, [] {
        Outcome o;
        o.require(capped_log_error(0.0) == -9.0 && capped_log_error(1e-300) == -9.0 && capped_log_error(1e-9) == -9.0,
                  "errors below the cap are not floored at -9");
        o.require(capped_log_error(1e-8) == -8.0 && capped_log_error(1e3) == 3.0, "errors above the cap altered");
        // sorted: 0.5 1 1.5 2 3 | 4 6 7 8 9; the 5th order statistic is 3
        o.require(lower_median({3.0, 1.0, 9.0, 2.0, 0.5, 7.0, 1.5, 4.0, 8.0, 6.0}) == 3.0,
                  "lower median of the hand-listed cell is not 3");
        o.require(lower_median({-9, -9, -9, -9, -9, 1, 1, 1, 1, 1}) == -9.0, "lower median of a split cell");

        ExperimentPlan plan;
        plan.configurations = sample_configs(enumerate_configs(full_space()), 12, 5);
        plan.configurations.push_back(canonical_configuration());
        plan.functions = {bench::FunctionId::f1, bench::FunctionId::f9};
        plan.dimensions = {10};
        plan.runs_per_cell = 3;
        plan.budget_multiplier = 2000;
        plan.master_seed = 42;
        const auto a = execute(plan, {1, nullptr, {}});
        const auto b = execute(plan, {std::max(2u, std::thread::hardware_concurrency()), nullptr, {}});
        const auto c = execute(plan, {7, nullptr, {}});
        o.require(a.size() == 2 && b.size() == 2 && c.size() == 2, "wrong number of datasets");
        for (std::size_t i = 0; i < a.size(); ++i) {
            o.require(dataset_to_string(a[i]) == dataset_to_string(b[i]), "bytes differ between worker counts");
            o.require(dataset_to_string(a[i]) == dataset_to_string(c[i]), "bytes differ between worker counts");
            for (double t : a[i].targets)
                o.require(t >= -9.0, "target below -9");
        }
        // the canonical configuration solves the sphere analogue to the floor
        o.require(a[0].targets.back() == -9.0, "solved sphere cell is not exactly -9");
        if (o.pass)
            o.detail = "floor exact, lower median verified, identical bytes at 1/N/7 workers";
        return o;
    });

    criterion("swarm sanity", 120, [] {
        Outcome o;
        const auto p = bench::make_problem({bench::FunctionId::f1, 10, 1, std::nullopt});
        const auto canonical = canonical_configuration();
        std::vector<double> errors(10);
        parallel_for(10, 0, [&](std::size_t s) { errors[s] = run(canonical, p, 50000, 1000 + s).final_error; });
        const auto solved = std::count_if(errors.begin(), errors.end(), [](double e) { return e <= 1e-6; });
        o.require(solved >= 8, std::to_string(solved) + "/10 seeds reached 1e-6");

        ModuleConfiguration frozen = canonical;
        frozen.inertia = Inertia::constant_zero;
        frozen.pert_informed = InformedPerturbation::none;
        frozen.pert_random = RandomPerturbation::none;
        for (auto dnpp : {Dnpp::rectangular, Dnpp::spherical, Dnpp::additive_stochastic}) {
            frozen.dnpp = dnpp;
            frozen.matrix = dnpp == Dnpp::additive_stochastic ? MatrixKind::none : MatrixKind::euclidean_rotation;
            CounterRng rng(77);
            const std::size_t t_max = 500;
            auto s = initialize_swarm(p, t_max, rng);
            for (std::size_t i = 0; i < s.size(); ++i) {
                s.positions[i] = s.positions[0];
                s.personal_bests[i] = s.positions[0];
                s.personal_best_values[i] = s.personal_best_values[0];
            }
            s.refresh_global_best();
            const double start = s.global_best_value;
            for (std::size_t t = 0; t < t_max; ++t) {
                step(s, frozen, p, rng);
                o.require(s.global_best_value == start, "frozen swarm improved");
            }
        }
        if (o.pass)
            o.detail = std::to_string(solved) + "/10 seeds <= 1e-6; frozen swarm static for 500 iterations";
        return o;
    });

    criterion("scaled importance reproduction", 1800, [] {
        Outcome o;
        auto space = full_space();
        space[static_cast<std::size_t>(Module::dnpp)] = {0, 1}; // rectangular and spherical
        ExperimentPlan plan;
        plan.configurations = sample_configs(enumerate_configs(space), 160, 2024);
        std::set<MatrixKind> mtx;
        std::set<Inertia> iw;
        for (const auto& c : plan.configurations) {
            mtx.insert(c.matrix);
            iw.insert(c.inertia);
        }
        o.require(mtx.size() == 5 && iw.size() == 5, "design misses a matrix or omega1 level");
        plan.functions = {bench::FunctionId::f9, bench::FunctionId::f10};
        plan.dimensions = {10};
        plan.runs_per_cell = 5;
        plan.budget_multiplier = 1000;
        const auto datasets = execute(plan, {});
        const auto m = module_index("mtx"), w = module_index("iw");
        std::string detail;
        for (const auto& ds : datasets) {
            const auto ev = decompose(ds, ForestParams{}, 3);
            const auto shape = check_curve(ev);
            o.require(shape.pass, ds.id() + ": " + shape.detail);
            std::vector<std::pair<double, std::size_t>> mains;
            for (std::size_t f = 0; f < 8; ++f)
                mains.emplace_back(ev.importance_of({f}), f);
            std::sort(mains.begin(), mains.end(), std::greater<>());
            const double im = ev.importance_of({m});
            for (const char* other : {"top", "ac", "p1", "p2"})
                o.require(im > ev.importance_of({module_index(other)}),
                          ds.id() + ": mtx main does not exceed " + other);
            if (ds.function == bench::FunctionId::f10) {
                const std::set<std::size_t> top2{mains[0].second, mains[1].second};
                o.require(top2 == std::set<std::size_t>{m, w}, ds.id() + ": top-2 mains are " +
                                                                  ev.feature_names[mains[0].second] + ", " +
                                                                  ev.feature_names[mains[1].second]);
            }
            detail += ds.id() + " mtx=" + fmt("%.3f", im) + " iw=" + fmt("%.3f", ev.importance_of({w})) + " top2=" +
                      ev.feature_names[mains[0].second] + "," + ev.feature_names[mains[1].second] + "; ";
        }
        if (o.pass)
            o.detail = detail;
        else
            o.detail += " [" + detail + "]";
        return o;
    });

    criterion("clustering correctness", 10, [] {
        Outcome o;
        Matrix d(4, 4);
        const double rows[4][4] = {{0, 1, 4, 5}, {1, 0, 3, 4.5}, {4, 3, 0, 2}, {5, 4.5, 2, 0}};
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                d(i, j) = rows[i][j];
        // a(i), b(i) by hand for labels {0, 0, 1, 1}
        const double oracle = ((4.5 - 1.0) / 4.5 + (3.75 - 1.0) / 3.75 + (3.5 - 2.0) / 3.5 + (4.75 - 2.0) / 4.75) / 4.0;
        o.require(std::abs(silhouette({0, 0, 1, 1}, d) - oracle) <= 1e-12, "4-point silhouette oracle mismatch");

        CounterRng rng(404);
        std::vector<Vector> protos(3, Vector(92, 0.01));
        for (std::size_t i = 0; i < 8; ++i) {
            protos[0][i] = 1.0;
            protos[1][8 + i] = 1.0;
            protos[2][36 + i] = 1.0;
        }
        std::vector<Vector> v;
        std::vector<std::size_t> truth;
        std::vector<std::string> names;
        for (std::size_t c = 0; c < 3; ++c)
            for (int k = 0; k < 8; ++k) {
                Vector x = protos[c];
                for (auto& e : x)
                    e = std::max(0.0, e + 0.02 * rng.normal());
                v.push_back(x);
                truth.push_back(c);
                names.push_back("p" + std::to_string(names.size()));
            }
        const auto cd = distance_matrix(v, Metric::cosine);
        double within = 0.0, between = 1e300;
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j) {
                if (truth[i] == truth[j])
                    within = std::max(within, cd(i, j));
                else
                    between = std::min(between, cd(i, j));
            }
        o.require(between >= 10.0 * within, "planted clusters are not 10x separated");
        const auto report = grid_search(v, names, 2, v.size() - 1);
        o.require(report.k == 3, "grid search chose k = " + std::to_string(report.k));
        o.require(adjusted_rand_index(report.labels, truth) == 1.0, "ARI != 1");
        bool bounded = true;
        for (const auto& cell : report.grid)
            bounded = bounded && (!cell.valid || (cell.score >= -1.0 && cell.score <= 1.0));
        for (int trial = 0; trial < 300; ++trial) {
            const std::size_t n = 3 + rng.below(12);
            std::vector<Vector> pts(n, Vector(4));
            for (auto& x : pts)
                for (auto& e : x)
                    e = rng.normal();
            std::vector<std::size_t> labels(n);
            for (auto& l : labels)
                l = rng.below(4);
            labels[0] = 0;
            labels[1] = 1;
            for (auto metric : all_metrics) {
                const double s = silhouette(labels, distance_matrix(pts, metric));
                bounded = bounded && s >= -1.0 && s <= 1.0;
            }
        }
        o.require(bounded, "silhouette outside [-1, 1]");
        if (o.pass)
            o.detail = "oracle to 1e-12, planted k=3 with ARI 1 (separation " + fmt("%.0fx", between / within) +
                       "), bounds held";
        return o;
    });

    criterion("geometry invariants", 10, [] {
        Outcome o;
        CounterRng rng(505);
        double worst_norm = 0.0;
        for (int k = 0; k < 1000; ++k) {
            const std::size_t d = 2 + rng.below(49);
            const auto kind = k % 2 ? MatrixKind::increasing_group : MatrixKind::euclidean_rotation;
            const auto op = random_matrix(kind, rng, d, rng.below(100), 100);
            Vector x(d);
            for (auto& e : x)
                e = rng.normal();
            worst_norm = std::max(worst_norm, std::abs(norm(op.apply(x)) - norm(x)));
        }
        o.require(worst_norm <= 1e-9, "norm drift " + fmt("%.3g", worst_norm));
        double worst_gram = 0.0;
        const int rotated[] = {3, 7, 8, 10, 11, 14, 16, 21, 24, 25};
        for (int k = 0; k < 100; ++k) {
            const auto f = static_cast<bench::FunctionId>(rotated[k % 10]);
            const auto p = bench::make_problem({f, k % 3 == 0 ? 30u : 10u, static_cast<std::uint64_t>(k), std::nullopt});
            const auto& r = p.rotation();
            for (std::size_t i = 0; i < r.rows(); ++i)
                for (std::size_t j = 0; j < r.cols(); ++j) {
                    double s = 0.0;
                    for (std::size_t l = 0; l < r.rows(); ++l)
                        s += r(l, i) * r(l, j);
                    worst_gram = std::max(worst_gram, std::abs(s - (i == j ? 1.0 : 0.0)));
                }
        }
        o.require(worst_gram <= 1e-10, "max |R^T R - I| = " + fmt("%.3g", worst_gram));
        if (o.pass)
            o.detail = "norm drift " + fmt("%.2g", worst_norm) + ", max |R^T R - I| " + fmt("%.2g", worst_gram);
        return o;
    });

    std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
