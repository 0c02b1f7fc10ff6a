#include "psox/swarm.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <future>
#include <numeric>

using namespace psox;

namespace {

/// Deterministic sampler for hand-evaluated DNPP terms.
struct FixedSampler {
    double u = 0.5;
    double n = 0.0;
    double uniform() { return u; }
    double normal() { return n; }
    std::uint64_t below(std::uint64_t) { return 0; }
};

bench::ProblemInstance problem(int f, std::size_t d, std::uint64_t seed = 1)
{
    return bench::make_problem({static_cast<bench::FunctionId>(f), d, seed, std::nullopt});
}

ModuleConfiguration random_config(CounterRng& rng)
{
    for (;;) {
        std::array<std::size_t, module_count> l{};
        for (std::size_t m = 0; m < module_count; ++m)
            l[m] = rng.below(level_count(m));
        auto c = ModuleConfiguration::from_levels(l);
        if (c.structurally_valid())
            return c;
    }
}

} // namespace

// --- topology / influence ---------------------------------------------------

TEST(Neighborhood, RingWrapsAround)
{
    EXPECT_EQ(neighborhood(Topology::ring, 20, 0), (std::vector<std::size_t>{19, 0, 1}));
    EXPECT_EQ(neighborhood(Topology::ring, 20, 19), (std::vector<std::size_t>{18, 19, 0}));
    EXPECT_EQ(neighborhood(Topology::ring, 3, 1), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(neighborhood(Topology::ring, 2, 0), (std::vector<std::size_t>{1, 0}));
}

TEST(Neighborhood, FullyConnected)
{
    const auto n = neighborhood(Topology::fully_connected, 20, 5);
    ASSERT_EQ(n.size(), 20u);
    for (std::size_t k = 0; k < 20; ++k)
        EXPECT_EQ(n[k], k);
    EXPECT_THROW(neighborhood(Topology::ring, 20, 20), std::out_of_range);
}

TEST(Informants, BestOfNeighborhoodSelfIsBest)
{
    const std::vector<double> values{5.0, 1.0, 3.0};
    const auto hood = neighborhood(Topology::ring, 3, 1);
    const auto inf = informants(Influence::best_of_neighborhood, hood, values, 1);
    ASSERT_EQ(inf.size(), 2u);
    EXPECT_EQ(inf[0], (Informant{1, 1.0}));
    EXPECT_EQ(inf[1], (Informant{1, 1.0}));
}

TEST(Informants, FullyInformedEqualWeights)
{
    const std::vector<double> values{5.0, 1.0, 3.0};
    const auto hood = neighborhood(Topology::ring, 3, 0);
    const auto inf = informants(Influence::fully_informed, hood, values, 0);
    ASSERT_EQ(inf.size(), 3u);
    double sum = 0.0;
    for (const auto& k : inf) {
        EXPECT_DOUBLE_EQ(k.weight, 1.0 / 3.0);
        sum += k.weight;
    }
    EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(Informants, TiesGoToLowestIndex)
{
    std::vector<double> values(20, 7.0);
    values[0] = values[19] = values[1] = 2.0;
    const auto hood = neighborhood(Topology::ring, 20, 0); // {19, 0, 1}
    const auto inf = informants(Influence::best_of_neighborhood, hood, values, 0);
    EXPECT_EQ(inf[1].index, 0u);
    values[0] = 3.0;
    EXPECT_EQ(informants(Influence::best_of_neighborhood, hood, values, 0)[1].index, 1u);
}

// --- coefficients -----------------------------------------------------------

TEST(Accel, ConstantAndScheduled)
{
    auto c = accel_coefficients(Accel::constant, 17, 100);
    EXPECT_EQ(c.phi1, 1.4);
    EXPECT_EQ(c.phi2, 1.4);
    c = accel_coefficients(Accel::scheduled, 0, 100);
    EXPECT_EQ(c.phi1, 2.4);
    EXPECT_EQ(c.phi2, 0.5);
    c = accel_coefficients(Accel::scheduled, 100, 100);
    EXPECT_DOUBLE_EQ(c.phi1, 0.5);
    EXPECT_DOUBLE_EQ(c.phi2, 2.4);
    c = accel_coefficients(Accel::scheduled, 50, 100);
    EXPECT_DOUBLE_EQ(c.phi1, 1.45);
    EXPECT_DOUBLE_EQ(c.phi2, 1.45);
}

TEST(Inertia, FixedValuesAndEndpoints)
{
    SwarmState s;
    s.positions.resize(20);
    s.personal_best_values.resize(20);
    std::iota(s.personal_best_values.begin(), s.personal_best_values.end(), 0.0);
    s.improved.assign(20, true);
    const auto ranks = s.ranks();
    EXPECT_EQ(inertia_weight(Inertia::constant_075, s, ranks, 3), 0.75);
    EXPECT_EQ(inertia_weight(Inertia::constant_zero, s, ranks, 3), 0.0);
    EXPECT_DOUBLE_EQ(inertia_weight(Inertia::rank_based, s, ranks, 0), 0.15);
    EXPECT_DOUBLE_EQ(inertia_weight(Inertia::rank_based, s, ranks, 19), 0.95);
    EXPECT_DOUBLE_EQ(inertia_weight(Inertia::success_based, s, ranks, 4), 0.95);
    s.improved.assign(20, false);
    EXPECT_DOUBLE_EQ(inertia_weight(Inertia::success_based, s, ranks, 4), 0.15);
}

TEST(Inertia, AdaptiveClampsAndTracks)
{
    EXPECT_DOUBLE_EQ(adapt_inertia(0.95, 10.0, 1.0), 0.85);
    EXPECT_DOUBLE_EQ(adapt_inertia(0.15, 10.0, 1.0), 0.15);
    EXPECT_DOUBLE_EQ(adapt_inertia(0.95, 0.0, 1.0), 0.95);
    EXPECT_DOUBLE_EQ(ideal_speed(10.0, 0, 100), 5.0);
    EXPECT_NEAR(ideal_speed(10.0, 100, 100), 0.0, 1e-15);
}

TEST(Inertia, NonConstantRulesStayInBounds)
{
    const auto p = problem(10, 5);
    for (auto rule : {Inertia::adaptive_velocity, Inertia::rank_based, Inertia::success_based}) {
        ModuleConfiguration c;
        c.inertia = rule;
        CounterRng rng(static_cast<std::uint64_t>(rule));
        auto s = initialize_swarm(p, 60, rng);
        for (int it = 0; it < 60; ++it) {
            const auto ranks = s.ranks();
            for (std::size_t i = 0; i < s.size(); ++i) {
                const double w = inertia_weight(rule, s, ranks, i);
                ASSERT_GE(w, 0.15);
                ASSERT_LE(w, 0.95);
            }
            step(s, c, p, rng);
        }
    }
}

// --- perturbation magnitude -------------------------------------------------

TEST(Pm, DoublesAfterFortySuccesses)
{
    PmState s;
    for (int k = 0; k < 40; ++k)
        s = update_pm(s, true);
    EXPECT_EQ(s.magnitude, 1.0);
    EXPECT_EQ(s.successes, 0);
    for (int k = 0; k < 40; ++k)
        s = update_pm(s, true);
    EXPECT_EQ(s.magnitude, 1.0); // capped
}

TEST(Pm, HalvesAfterTwentyFailures)
{
    PmState s;
    for (int k = 0; k < 20; ++k)
        s = update_pm(s, false);
    EXPECT_EQ(s.magnitude, 0.25);
    EXPECT_EQ(s.failures, 0);
    for (int k = 0; k < 20 * 40; ++k)
        s = update_pm(s, false);
    EXPECT_EQ(s.magnitude, 1e-6); // floored
}

TEST(Pm, AlternatingLeavesMagnitude)
{
    PmState s;
    for (int k = 0; k < 10; ++k) {
        s = update_pm(s, true);
        s = update_pm(s, false);
    }
    EXPECT_EQ(s, (PmState{0.5, 10, 10}));
    EXPECT_THROW(update_pm(PmState{0.5, -1, 0}, true), std::invalid_argument);
}

// --- perturbations ----------------------------------------------------------

TEST(Perturbation, InformedDegeneratesAtZeroMagnitude)
{
    CounterRng rng(1);
    const Vector target{2.0, -3.0, 0.5};
    for (double v : informed_perturbation(target, 0.0, rng))
        EXPECT_LE(std::abs(v), 1e-10);
}

TEST(Perturbation, InformedStandardDeviation)
{
    CounterRng rng(2);
    const Vector target{2.0};
    double sum = 0.0, sq = 0.0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
        const double v = informed_perturbation(target, 0.5, rng)[0];
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    EXPECT_NEAR(sd, 1.0, 0.05);
}

TEST(Perturbation, RandomBoundsAndMean)
{
    CounterRng rng(3);
    const Vector width{200.0, 10.0};
    for (double v : random_perturbation(width, 0.0, rng))
        EXPECT_EQ(v, 0.0);
    const int n = 10000;
    const double pm = 0.3;
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
        const auto v = random_perturbation(width, pm, rng);
        ASSERT_LE(std::abs(v[0]), pm * width[0]);
        ASSERT_LE(std::abs(v[1]), pm * width[1]);
        sum += v[0];
    }
    // U(-a, a) has standard deviation a / sqrt(3)
    const double se = pm * width[0] / std::sqrt(3.0) / std::sqrt(static_cast<double>(n));
    EXPECT_LE(std::abs(sum / n), 3.0 * se);
}

// --- random matrices --------------------------------------------------------

TEST(RandomMatrix, IdentityAndNoneAreNoOps)
{
    CounterRng rng(4);
    const Vector v{1.0, -2.0, 3.5};
    EXPECT_EQ(random_matrix(MatrixKind::identity, rng, 3, 0, 10).apply(v), v);
    EXPECT_EQ(random_matrix(MatrixKind::none, rng, 3, 0, 10).apply(v), v);
}

TEST(RandomMatrix, DiagonalEntriesInUnitInterval)
{
    CounterRng rng(5);
    for (int k = 0; k < 100; ++k) {
        const auto op = random_matrix(MatrixKind::random_diagonal, rng, 10, 0, 10);
        for (double e : op.diagonal_entries()) {
            ASSERT_GE(e, 0.0);
            ASSERT_LE(e, 1.0);
        }
    }
}

TEST(RandomMatrix, RotationsPreserveNorm)
{
    CounterRng rng(6);
    for (std::size_t d : {2u, 3u, 10u, 31u})
        for (int k = 0; k < 50; ++k) {
            Vector v(d);
            for (auto& x : v)
                x = rng.normal();
            for (auto kind : {MatrixKind::euclidean_rotation, MatrixKind::increasing_group}) {
                const auto op = random_matrix(kind, rng, d, static_cast<std::size_t>(k), 50);
                EXPECT_NEAR(norm(op.apply(v)), norm(v), 1e-9);
            }
        }
}

TEST(RandomMatrix, RotationAngleShrinks)
{
    // sigma = 30 exp(-0.01 t) degrees; at t = 2000 the angles are ~6e-8 degrees
    CounterRng rng(7);
    const auto op = random_matrix(MatrixKind::euclidean_rotation, rng, 10, 2000, 3000);
    ASSERT_EQ(op.plane_rotations().size(), 5u);
    for (const auto& p : op.plane_rotations())
        EXPECT_LT(std::abs(p.sin), 1e-6);
}

TEST(RandomMatrix, GroupCountGrows)
{
    EXPECT_EQ(group_count(10, 0, 100), 1u);
    EXPECT_EQ(group_count(10, 100, 100), 5u);
    EXPECT_EQ(group_count(10, 50, 100), 3u);
    CounterRng rng(8);
    const auto first = random_matrix(MatrixKind::increasing_group, rng, 10, 0, 100);
    ASSERT_EQ(first.orthogonal_blocks().size(), 1u);
    EXPECT_LE(orthogonality_defect(first.dense()), 1e-12);
    const auto last = random_matrix(MatrixKind::increasing_group, rng, 10, 100, 100);
    ASSERT_EQ(last.orthogonal_blocks().size(), 5u);
    // block diagonal: no coupling between blocks
    const Matrix m = last.dense();
    EXPECT_EQ(m(0, 2), 0.0);
    EXPECT_EQ(m(9, 0), 0.0);
    EXPECT_THROW(random_matrix(MatrixKind::euclidean_rotation, rng, 1, 0, 1), std::invalid_argument);
}

// --- DNPP -------------------------------------------------------------------

TEST(Dnpp, CoincidentInformantsGiveZero)
{
    CounterRng rng(9);
    const Vector x{1.0, 2.0, 3.0};
    const std::vector<Vector> targets{x, x};
    const std::vector<double> coeff{1.4, 1.4};
    for (auto kind : {Dnpp::rectangular, Dnpp::spherical, Dnpp::additive_stochastic})
        for (auto m : {MatrixKind::identity, MatrixKind::random_diagonal, MatrixKind::euclidean_rotation}) {
            const DnppInput in{x, targets, coeff, m, 0, 10};
            for (double v : dnpp_term(kind, in, rng))
                EXPECT_EQ(v, 0.0);
        }
}

TEST(Dnpp, RectangularHandEvaluation)
{
    FixedSampler fixed;
    const Vector x{0.0};
    const std::vector<Vector> targets{{1.0}, {1.0}};
    const std::vector<double> coeff{1.4, 1.4};
    const DnppInput in{x, targets, coeff, MatrixKind::identity, 0, 10};
    const auto v = dnpp_term(Dnpp::rectangular, in, fixed);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_DOUBLE_EQ(v[0], 1.4);
}

TEST(Dnpp, SphericalStaysInBall)
{
    CounterRng rng(10);
    const Vector x{0.0, 0.0, 0.0};
    const std::vector<Vector> targets{{3.0, 0.0, 0.0}, {0.0, 3.0, 0.0}};
    const std::vector<double> coeff{1.0, 1.0};
    const Vector g{1.0, 1.0, 0.0};
    for (int k = 0; k < 500; ++k) {
        const DnppInput in{x, targets, coeff, MatrixKind::identity, 0, 10};
        const auto v = dnpp_term(Dnpp::spherical, in, rng);
        Vector off(3);
        for (int j = 0; j < 3; ++j)
            off[j] = v[j] - g[j];
        ASSERT_LE(norm(off), norm(g) + 1e-12);
    }
}

TEST(Dnpp, AdditiveStochasticMeanDisplacement)
{
    FixedSampler fixed; // xi = 0
    const Vector x{0.0, 0.0};
    const std::vector<Vector> targets{{2.0, 0.0}, {0.0, 4.0}};
    const std::vector<double> coeff{1.0, 1.0};
    const DnppInput in{x, targets, coeff, MatrixKind::none, 0, 10};
    const auto v = dnpp_term(Dnpp::additive_stochastic, in, fixed);
    // m = 0.5 * (2, 4) = (1, 2); term = 0.5 * m
    EXPECT_DOUBLE_EQ(v[0], 0.5);
    EXPECT_DOUBLE_EQ(v[1], 1.0);
}

// --- step / run -------------------------------------------------------------

TEST(Step, FrozenSwarmDoesNotMove)
{
    const auto p = problem(1, 5);
    CounterRng rng(11);
    auto s = initialize_swarm(p, 10, rng);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s.positions[i] = s.positions[0];
        s.personal_bests[i] = s.positions[0];
        s.personal_best_values[i] = s.personal_best_values[0];
    }
    s.refresh_global_best();
    ModuleConfiguration c;
    c.inertia = Inertia::constant_zero;
    const double before = s.global_best_value;
    for (int it = 0; it < 10; ++it) {
        step(s, c, p, rng);
        for (const auto& v : s.velocities)
            for (double x : v)
                ASSERT_EQ(x, 0.0);
    }
    EXPECT_EQ(s.global_best_value, before);
}

TEST(Step, GvurWithoutRandomPerturbationIsExact)
{
    // Replays one iteration through the public building blocks and compares bitwise.
    const auto p = problem(7, 4); // unbounded: no clamping
    ModuleConfiguration c;
    c.inertia = Inertia::rank_based;
    c.influence = Influence::fully_informed;
    c.matrix = MatrixKind::euclidean_rotation;
    CounterRng rng(12);
    auto s = initialize_swarm(p, 5, rng);
    step(s, c, p, rng);

    SwarmState before = s;
    CounterRng replay = rng;
    step(s, c, p, rng);

    const std::size_t t = before.t + 1;
    const auto phi = accel_coefficients(c.accel, t, before.t_max);
    const auto ranks = before.ranks();
    for (std::size_t i = 0; i < before.size(); ++i) {
        const auto hood = neighborhood(c.topology, before.size(), i);
        const auto inf = informants(c.influence, hood, before.personal_best_values, i);
        const auto coeff = informant_coefficients(c.influence, inf, phi);
        std::vector<Vector> targets;
        for (const auto& k : inf)
            targets.push_back(before.personal_bests[k.index]);
        const DnppInput in{before.positions[i], targets, coeff, c.matrix, t, before.t_max};
        const auto move = dnpp_term(c.dnpp, in, replay);
        const double w1 = inertia_weight(c.inertia, before, ranks, i);
        for (std::size_t j = 0; j < 4; ++j)
            ASSERT_EQ(s.velocities[i][j], w1 * before.velocities[i][j] + move[j]);
    }
}

TEST(Step, BestsAreMonotone)
{
    CounterRng pick(13);
    const auto p = problem(10, 5);
    for (int n = 0; n < 40; ++n) {
        const auto c = random_config(pick);
        CounterRng rng(static_cast<std::uint64_t>(n));
        auto s = initialize_swarm(p, 30, rng);
        double last = s.global_best_value;
        std::vector<double> pb = s.personal_best_values;
        for (int it = 0; it < 30; ++it) {
            step(s, c, p, rng);
            ASSERT_LE(s.global_best_value, last) << c.token();
            for (std::size_t i = 0; i < pb.size(); ++i)
                ASSERT_LE(s.personal_best_values[i], pb[i]);
            last = s.global_best_value;
            pb = s.personal_best_values;
        }
        ASSERT_EQ(s.global_best_value, *std::min_element(pb.begin(), pb.end()));
    }
}

TEST(Step, BoundedPositionsStayInDomain)
{
    const auto p = problem(9, 5);
    ModuleConfiguration c;
    c.pert_random = RandomPerturbation::rectangular;
    c.inertia = Inertia::adaptive_velocity;
    CounterRng rng(14);
    auto s = initialize_swarm(p, 50, rng);
    for (int it = 0; it < 50; ++it) {
        step(s, c, p, rng);
        for (const auto& x : s.positions)
            for (std::size_t j = 0; j < x.size(); ++j) {
                ASSERT_GE(x[j], p.domain_low()[j]);
                ASSERT_LE(x[j], p.domain_high()[j]);
            }
    }
}

TEST(Step, CanonicalBeatsInitialOnSphere)
{
    const auto p = problem(1, 2);
    CounterRng rng(15);
    auto s = initialize_swarm(p, 100, rng);
    const double initial = bench::error_of(p, s.global_best_value);
    for (int it = 0; it < 100; ++it)
        step(s, canonical_configuration(), p, rng);
    EXPECT_LT(bench::error_of(p, s.global_best_value), initial);
    EXPECT_LT(bench::error_of(p, s.global_best_value), 1e-6);
}

TEST(Step, RejectsInvalidStructure)
{
    const auto p = problem(1, 5);
    ModuleConfiguration c;
    c.dnpp = Dnpp::additive_stochastic;
    c.matrix = MatrixKind::identity;
    EXPECT_THROW(run(c, p, 100, 1), std::invalid_argument);
    CounterRng rng(1);
    auto s = initialize_swarm(p, 1, rng);
    EXPECT_THROW(step(s, c, p, rng), std::invalid_argument);
}

TEST(Run, BudgetOfOneSwarmIsInitializationOnly)
{
    const auto p = problem(1, 10);
    const auto r = run(canonical_configuration(), p, 20, 7);
    EXPECT_EQ(r.iterations, 0u);
    EXPECT_EQ(r.evaluations, 20u);
    CounterRng rng(7);
    const auto s = initialize_swarm(p, 0, rng);
    EXPECT_EQ(r.final_error, bench::error_of(p, s.global_best_value));
    EXPECT_THROW(run(canonical_configuration(), p, 19, 7), std::invalid_argument);
}

TEST(Run, IterationCountAndTrajectory)
{
    const auto p = problem(1, 10);
    const auto r = run(canonical_configuration(), p, 5000, 1);
    EXPECT_EQ(r.iterations, 249u);
    EXPECT_EQ(r.evaluations, 5000u);
    ASSERT_EQ(r.trajectory.size(), 5u);
    for (std::size_t k = 1; k < r.trajectory.size(); ++k)
        EXPECT_LE(r.trajectory[k], r.trajectory[k - 1]);
    EXPECT_EQ(r.trajectory.back(), r.final_error);
}

TEST(Run, DeterministicAcrossThreads)
{
    const auto p = problem(10, 5);
    CounterRng pick(16);
    for (int n = 0; n < 5; ++n) {
        const auto c = random_config(pick);
        const auto a = run(c, p, 2000, 99);
        auto fut = std::async(std::launch::async, [&] { return run(c, p, 2000, 99); });
        EXPECT_EQ(a, fut.get()) << c.token();
    }
}

TEST(Run, NoisyProblemRuns)
{
    const auto p = problem(17, 5);
    const auto r = run(canonical_configuration(), p, 1000, 3);
    EXPECT_GE(r.final_error, 0.0);
    EXPECT_EQ(r, run(canonical_configuration(), p, 1000, 3));
}

TEST(Config, TokenRoundTrip)
{
    EXPECT_EQ(canonical_configuration().token(), "dnpp=rect;ac=const;top=ring;moi=bon;mtx=id;iw=c0.75;p1=none;p2=none");
    CounterRng rng(17);
    for (int k = 0; k < 200; ++k) {
        const auto c = random_config(rng);
        EXPECT_EQ(ModuleConfiguration::parse(c.token()), c);
    }
    EXPECT_THROW(ModuleConfiguration::parse("dnpp=rect"), std::invalid_argument);
    EXPECT_THROW(ModuleConfiguration::parse("ac=const;dnpp=rect;top=ring;moi=bon;mtx=id;iw=c0.75;p1=none;p2=none"),
                 std::invalid_argument);
    EXPECT_THROW(ModuleConfiguration::parse("dnpp=hex;ac=const;top=ring;moi=bon;mtx=id;iw=c0.75;p1=none;p2=none"),
                 std::invalid_argument);
}
