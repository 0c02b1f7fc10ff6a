#ifndef PSOX_SWARM_HPP
#define PSOX_SWARM_HPP

// Generalized velocity update rule
//
//     v' = w1 * v + DNPP(i, t) + Pert_rand(i, t),    x' = x + v'
//
// with w2 = w3 = 1, a constant swarm of 20 particles, and every module
// option of the eight-module design space.

#include "psox/benchmark.hpp"
#include "psox/config.hpp"
#include "psox/linalg.hpp"
#include "psox/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace psox {

inline constexpr std::size_t swarm_size = 20;

// ---------------------------------------------------------------------------
// Topology and model of influence

/// Neighbourhood of particle i. Ring yields {i-1, i, i+1} (mod size, duplicates
/// removed); fully connected yields every index in order.
inline std::vector<std::size_t> neighborhood(Topology topology, std::size_t size, std::size_t i)
{
    if (i >= size)
        throw std::out_of_range("particle index out of range");
    std::vector<std::size_t> out;
    if (topology == Topology::fully_connected) {
        out.resize(size);
        std::iota(out.begin(), out.end(), std::size_t{0});
        return out;
    }
    for (std::size_t k : {(i + size - 1) % size, i, (i + 1) % size})
        if (std::find(out.begin(), out.end(), k) == out.end())
            out.push_back(k);
    return out;
}

struct Informant {
    std::size_t index;
    double weight;
    bool operator==(const Informant&) const = default;
};

/// Lowest personal-best value in the neighbourhood; ties go to the lowest index.
inline std::size_t best_in(std::span<const std::size_t> hood, std::span<const double> values)
{
    std::size_t best = hood.front();
    for (std::size_t k : hood)
        if (values[k] < values[best] || (values[k] == values[best] && k < best))
            best = k;
    return best;
}

/// best_of_neighborhood: {(i, 1), (best of N_i, 1)} (cognitive, social).
/// fully_informed: every member of N_i with weight 1/|N_i|.
inline std::vector<Informant> informants(Influence moi, std::span<const std::size_t> hood,
                                         std::span<const double> personal_best_values, std::size_t i)
{
    if (hood.empty())
        throw std::invalid_argument("empty neighbourhood");
    if (moi == Influence::best_of_neighborhood)
        return {{i, 1.0}, {best_in(hood, personal_best_values), 1.0}};
    std::vector<Informant> out;
    out.reserve(hood.size());
    const double w = 1.0 / static_cast<double>(hood.size());
    for (std::size_t k : hood)
        out.push_back({k, w});
    return out;
}

// ---------------------------------------------------------------------------
// Acceleration coefficients

struct AccelCoefficients {
    double phi1;
    double phi2;
};

inline AccelCoefficients accel_coefficients(Accel option, std::size_t t, std::size_t t_max)
{
    if (option == Accel::constant)
        return {1.4, 1.4};
    if (t > t_max)
        throw std::invalid_argument("iteration beyond horizon");
    const double frac = t_max == 0 ? 0.0 : static_cast<double>(t) / static_cast<double>(t_max);
    return {2.4 + (0.5 - 2.4) * frac, 0.5 + (2.4 - 0.5) * frac};
}

/// Per-informant coefficients: (phi1, phi2) for best-of-neighbourhood,
/// weight * (phi1 + phi2) for fully informed.
inline std::vector<double> informant_coefficients(Influence moi, std::span<const Informant> inf, AccelCoefficients phi)
{
    std::vector<double> c;
    c.reserve(inf.size());
    if (moi == Influence::best_of_neighborhood) {
        c = {phi.phi1, phi.phi2};
    } else {
        for (const auto& k : inf)
            c.push_back(k.weight * (phi.phi1 + phi.phi2));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Perturbation magnitude (success-rate rule)

inline constexpr double pm_initial = 0.5;
inline constexpr int pm_success_threshold = 40;
inline constexpr int pm_failure_threshold = 20;
inline constexpr double pm_max = 1.0;
inline constexpr double pm_min = 1e-6;

struct PmState {
    double magnitude = pm_initial;
    int successes = 0;
    int failures = 0;
    bool operator==(const PmState&) const = default;
};

inline PmState update_pm(PmState s, bool improved)
{
    if (s.successes < 0 || s.failures < 0)
        throw std::invalid_argument("negative PM counters");
    if (improved)
        ++s.successes;
    else
        ++s.failures;
    if (s.successes >= pm_success_threshold) {
        s.magnitude = std::min(pm_max, 2.0 * s.magnitude);
        s.successes = s.failures = 0;
    } else if (s.failures >= pm_failure_threshold) {
        s.magnitude = std::max(pm_min, 0.5 * s.magnitude);
        s.successes = s.failures = 0;
    }
    return s;
}

/// Additive offset around an informant: N(target_d, PM |target_d| + eps) - target_d.
template <typename Rng>
Vector informed_perturbation(std::span<const double> target, double pm, Rng& rng)
{
    constexpr double eps = 1e-12;
    Vector out(target.size());
    for (std::size_t d = 0; d < target.size(); ++d)
        out[d] = rng.normal() * (pm * std::abs(target[d]) + eps);
    return out;
}

/// Per-dimension U(-PM, PM) scaled by the domain width.
template <typename Rng>
Vector random_perturbation(std::span<const double> width, double pm, Rng& rng)
{
    Vector out(width.size());
    for (std::size_t d = 0; d < width.size(); ++d)
        out[d] = (2.0 * rng.uniform() - 1.0) * pm * width[d];
    return out;
}

// ---------------------------------------------------------------------------
// Random matrices

/// Linear operator produced by the random-matrix module. Stored in factored
/// form (diagonal, plane rotations or orthogonal blocks), never densified.
class LinearOperator
{
public:
    enum class Form { identity, diagonal, planes, blocks };

    struct Plane {
        std::size_t a, b;
        double cos, sin;
    };
    struct Block {
        std::size_t offset;
        Matrix q;
    };

    static LinearOperator identity(std::size_t d) { return LinearOperator(Form::identity, d); }

    static LinearOperator diagonal(Vector entries)
    {
        LinearOperator op(Form::diagonal, entries.size());
        op.diag_ = std::move(entries);
        return op;
    }

    static LinearOperator planes(std::size_t d, std::vector<Plane> planes)
    {
        LinearOperator op(Form::planes, d);
        op.planes_ = std::move(planes);
        return op;
    }

    static LinearOperator blocks(std::size_t d, std::vector<Block> blocks)
    {
        LinearOperator op(Form::blocks, d);
        op.blocks_ = std::move(blocks);
        return op;
    }

    Form form() const noexcept { return form_; }
    std::size_t dimension() const noexcept { return dim_; }
    const Vector& diagonal_entries() const noexcept { return diag_; }
    const std::vector<Plane>& plane_rotations() const noexcept { return planes_; }
    const std::vector<Block>& orthogonal_blocks() const noexcept { return blocks_; }

    void apply(std::span<const double> in, std::span<double> out) const
    {
        switch (form_) {
        case Form::identity:
            std::copy(in.begin(), in.end(), out.begin());
            break;
        case Form::diagonal:
            for (std::size_t d = 0; d < dim_; ++d)
                out[d] = diag_[d] * in[d];
            break;
        case Form::planes:
            std::copy(in.begin(), in.end(), out.begin());
            for (const auto& p : planes_) {
                const double u = out[p.a], w = out[p.b];
                out[p.a] = p.cos * u - p.sin * w;
                out[p.b] = p.sin * u + p.cos * w;
            }
            break;
        case Form::blocks:
            for (const auto& b : blocks_) {
                const std::size_t s = b.q.rows();
                multiply(b.q, in.subspan(b.offset, s), out.subspan(b.offset, s));
            }
            break;
        }
    }

    Vector apply(std::span<const double> in) const
    {
        Vector out(in.size());
        apply(in, out);
        return out;
    }

    /// Dense form, for tests and diagnostics.
    Matrix dense() const
    {
        Matrix m(dim_, dim_);
        Vector e(dim_, 0.0), col(dim_);
        for (std::size_t c = 0; c < dim_; ++c) {
            e[c] = 1.0;
            apply(e, col);
            for (std::size_t r = 0; r < dim_; ++r)
                m(r, c) = col[r];
            e[c] = 0.0;
        }
        return m;
    }

private:
    LinearOperator(Form f, std::size_t d) : form_(f), dim_(d) {}

    Form form_;
    std::size_t dim_;
    Vector diag_;
    std::vector<Plane> planes_;
    std::vector<Block> blocks_;
};

inline constexpr double rotation_par_alpha = 30.0; // degrees
inline constexpr double rotation_par_beta = 0.01;

/// Number of orthogonal blocks of the increasing group-based matrix at
/// iteration t: grows linearly from 1 to floor(D/2).
inline std::size_t group_count(std::size_t d, std::size_t t, std::size_t t_max)
{
    const std::size_t last = std::max<std::size_t>(1, d / 2);
    if (t_max == 0)
        return 1;
    const double frac = std::min(1.0, static_cast<double>(t) / static_cast<double>(t_max));
    const auto g = static_cast<std::size_t>(std::llround(1.0 + (static_cast<double>(last) - 1.0) * frac));
    return std::clamp<std::size_t>(g, 1, last);
}

template <typename Rng>
LinearOperator random_matrix(MatrixKind kind, Rng& rng, std::size_t d, std::size_t t, std::size_t t_max)
{
    const bool needs_planes = kind == MatrixKind::euclidean_rotation || kind == MatrixKind::increasing_group;
    if (d == 0 || (needs_planes && d < 2))
        throw std::invalid_argument("random_matrix: dimension too small for " +
                                    std::string(module_table()[4].levels[static_cast<std::size_t>(kind)]));
    switch (kind) {
    case MatrixKind::identity:
    case MatrixKind::none:
        return LinearOperator::identity(d);
    case MatrixKind::random_diagonal: {
        Vector diag(d);
        for (auto& v : diag)
            v = rng.uniform();
        return LinearOperator::diagonal(std::move(diag));
    }
    case MatrixKind::euclidean_rotation: {
        const double sigma = rotation_par_alpha * std::exp(-rotation_par_beta * static_cast<double>(t));
        std::vector<std::size_t> perm(d);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        psox::shuffle(perm.begin(), perm.end(), rng);
        std::vector<LinearOperator::Plane> planes;
        planes.reserve(d / 2);
        for (std::size_t k = 0; k + 1 < d; k += 2) {
            const double alpha = rng.normal() * sigma * std::numbers::pi / 180.0;
            planes.push_back({perm[k], perm[k + 1], std::cos(alpha), std::sin(alpha)});
        }
        return LinearOperator::planes(d, std::move(planes));
    }
    case MatrixKind::increasing_group: {
        const std::size_t g = group_count(d, t, t_max);
        std::vector<LinearOperator::Block> blocks;
        blocks.reserve(g);
        std::size_t offset = 0;
        for (std::size_t b = 0; b < g; ++b) {
            const std::size_t size = d / g + (b < d % g ? 1 : 0);
            blocks.push_back({offset, random_orthogonal(size, rng)});
            offset += size;
        }
        return LinearOperator::blocks(d, std::move(blocks));
    }
    }
    throw std::invalid_argument("unknown random matrix kind");
}

// ---------------------------------------------------------------------------
// DNPP

inline constexpr double additive_r = 0.5;

/// Inputs of one DNPP evaluation. `targets` are the (possibly perturbed)
/// informant positions, `coefficients` their acceleration factors.
struct DnppInput {
    std::span<const double> x;
    std::span<const Vector> targets;
    std::span<const double> coefficients;
    MatrixKind matrix = MatrixKind::identity;
    std::size_t t = 0;
    std::size_t t_max = 0;
};

/// Uniform sample inside the d-ball of the given radius centred at the origin.
template <typename Rng>
Vector sample_in_ball(std::size_t d, double radius, Rng& rng)
{
    Vector dir(d);
    double len = 0.0;
    while (len == 0.0) {
        for (auto& v : dir)
            v = rng.normal();
        len = norm(dir);
    }
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    for (auto& v : dir)
        v *= r / len;
    return dir;
}

template <typename Rng>
Vector dnpp_term(Dnpp kind, const DnppInput& in, Rng& rng)
{
    const std::size_t d = in.x.size();
    Vector out(d, 0.0);
    Vector tmp(d), rotated(d);
    switch (kind) {
    case Dnpp::rectangular:
        // sum_k phi_k * M_k (U_k o (p_k - x))
        for (std::size_t k = 0; k < in.targets.size(); ++k) {
            const auto& p = in.targets[k];
            for (std::size_t j = 0; j < d; ++j)
                tmp[j] = rng.uniform() * (p[j] - in.x[j]);
            const auto op = random_matrix(in.matrix, rng, d, in.t, in.t_max);
            op.apply(tmp, rotated);
            for (std::size_t j = 0; j < d; ++j)
                out[j] += in.coefficients[k] * rotated[j];
        }
        break;
    case Dnpp::spherical: {
        // G = x + (1/3) sum_k phi_k (p_k - x); sample in the ball B(G, |G - x|)
        Vector g(d, 0.0);
        for (std::size_t k = 0; k < in.targets.size(); ++k)
            for (std::size_t j = 0; j < d; ++j)
                g[j] += in.coefficients[k] * (in.targets[k][j] - in.x[j]);
        for (auto& v : g)
            v /= 3.0;
        const double radius = norm(g);
        if (radius == 0.0)
            return out;
        const Vector s = sample_in_ball(d, radius, rng);
        for (std::size_t j = 0; j < d; ++j)
            tmp[j] = g[j] + s[j];
        const auto op = random_matrix(in.matrix, rng, d, in.t, in.t_max);
        op.apply(tmp, out);
        break;
    }
    case Dnpp::additive_stochastic: {
        // r * m + (1 - r) * xi o m,  m = (1/2) sum_k phi_k (p_k - x)
        Vector m(d, 0.0);
        for (std::size_t k = 0; k < in.targets.size(); ++k)
            for (std::size_t j = 0; j < d; ++j)
                m[j] += 0.5 * in.coefficients[k] * (in.targets[k][j] - in.x[j]);
        for (std::size_t j = 0; j < d; ++j)
            out[j] = additive_r * m[j] + (1.0 - additive_r) * rng.normal() * m[j];
        break;
    }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inertia

inline constexpr double inertia_low = 0.15;
inline constexpr double inertia_high = 0.95;
inline constexpr double adaptive_lambda = 0.5;
inline constexpr double adaptive_step = 0.1;

inline double rank_inertia(std::size_t rank, std::size_t size)
{
    if (size < 2)
        return inertia_low;
    return inertia_low + (inertia_high - inertia_low) * static_cast<double>(rank) / static_cast<double>(size - 1);
}

inline double success_inertia(double success_fraction)
{
    return inertia_low + (inertia_high - inertia_low) * std::clamp(success_fraction, 0.0, 1.0);
}

/// Ideal mean speed at iteration t: lambda * |domain diagonal| decaying to 0
/// along a half cosine.
inline double ideal_speed(double diagonal, std::size_t t, std::size_t t_max)
{
    const double frac = t_max == 0 ? 1.0 : std::min(1.0, static_cast<double>(t) / static_cast<double>(t_max));
    return adaptive_lambda * diagonal * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

/// One adjustment of the velocity-tracking inertia.
inline double adapt_inertia(double omega, double mean_speed, double ideal)
{
    omega += mean_speed > ideal ? -adaptive_step : adaptive_step;
    return std::clamp(omega, inertia_low, inertia_high);
}

// ---------------------------------------------------------------------------
// Swarm state

struct SwarmState {
    std::vector<Vector> positions;
    std::vector<Vector> velocities;
    std::vector<Vector> personal_bests;
    std::vector<double> personal_best_values;
    std::size_t t = 0;
    std::size_t t_max = 0;
    double global_best_value = 0.0;
    std::size_t global_best_index = 0;
    std::vector<PmState> pm;
    std::vector<bool> improved;  // per particle, last iteration
    double adaptive_omega = inertia_high;
    std::size_t evaluations = 0;

    std::size_t size() const noexcept { return positions.size(); }

    double success_fraction() const noexcept
    {
        if (improved.empty())
            return 0.0;
        return static_cast<double>(std::count(improved.begin(), improved.end(), true)) /
               static_cast<double>(improved.size());
    }

    /// Rank of every particle by personal-best value; 0 is best, ties by index.
    std::vector<std::size_t> ranks() const
    {
        std::vector<std::size_t> order(size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return personal_best_values[a] < personal_best_values[b];
        });
        std::vector<std::size_t> rank(size());
        for (std::size_t r = 0; r < order.size(); ++r)
            rank[order[r]] = r;
        return rank;
    }

    void refresh_global_best()
    {
        global_best_index = 0;
        for (std::size_t i = 1; i < size(); ++i)
            if (personal_best_values[i] < personal_best_values[global_best_index])
                global_best_index = i;
        global_best_value = personal_best_values[global_best_index];
    }
};

/// w1 for particle i. `ranks` is only consulted by the rank-based rule.
inline double inertia_weight(Inertia option, const SwarmState& state, std::span<const std::size_t> ranks, std::size_t i)
{
    switch (option) {
    case Inertia::constant_zero: return 0.0;
    case Inertia::constant_075: return 0.75;
    case Inertia::adaptive_velocity: return state.adaptive_omega;
    case Inertia::rank_based: return rank_inertia(ranks[i], state.size());
    case Inertia::success_based: return success_inertia(state.success_fraction());
    }
    return 0.0;
}

/// Uniform initialization in the domain, zero velocities; one evaluation per particle.
inline SwarmState initialize_swarm(const bench::ProblemInstance& problem, std::size_t t_max, CounterRng& rng,
                                   std::size_t size = swarm_size)
{
    const std::size_t d = problem.dimension();
    SwarmState s;
    s.t_max = t_max;
    s.positions.resize(size, Vector(d));
    s.velocities.assign(size, Vector(d, 0.0));
    s.personal_best_values.resize(size);
    s.pm.assign(size, PmState{});
    s.improved.assign(size, false);
    for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            s.positions[i][j] = rng.uniform(problem.domain_low()[j], problem.domain_high()[j]);
        s.personal_best_values[i] = problem.evaluate(s.positions[i], rng);
        ++s.evaluations;
    }
    s.personal_bests = s.positions;
    s.refresh_global_best();
    return s;
}

/// One synchronous iteration: all particles move using the personal bests
/// at the start of the iteration, then all are evaluated.
inline void step(SwarmState& state, const ModuleConfiguration& config, const bench::ProblemInstance& problem,
                 CounterRng& rng)
{
    if (!config.structurally_valid())
        throw std::invalid_argument("additive stochastic DNPP requires matrix = none");
    const std::size_t n = state.size();
    const std::size_t d = problem.dimension();
    ++state.t;
    const std::size_t t = std::min(state.t, state.t_max);
    const auto phi = accel_coefficients(config.accel, t, state.t_max);
    const auto ranks = state.ranks();

    Vector width(d);
    for (std::size_t j = 0; j < d; ++j)
        width[j] = problem.domain_high()[j] - problem.domain_low()[j];

    std::vector<Vector> next_x(n), next_v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto hood = neighborhood(config.topology, n, i);
        const auto inf = informants(config.influence, hood, state.personal_best_values, i);
        const auto coeff = informant_coefficients(config.influence, inf, phi);

        std::vector<Vector> targets;
        targets.reserve(inf.size());
        for (const auto& k : inf) {
            targets.push_back(state.personal_bests[k.index]);
            if (config.pert_informed == InformedPerturbation::gaussian) {
                const Vector off = informed_perturbation(targets.back(), state.pm[i].magnitude, rng);
                for (std::size_t j = 0; j < d; ++j)
                    targets.back()[j] += off[j];
            }
        }

        const DnppInput in{state.positions[i], targets, coeff, config.matrix, t, state.t_max};
        const Vector move = dnpp_term(config.dnpp, in, rng);
        const double w1 = inertia_weight(config.inertia, state, ranks, i);

        Vector v(d);
        for (std::size_t j = 0; j < d; ++j)
            v[j] = w1 * state.velocities[i][j] + move[j];
        if (config.pert_random == RandomPerturbation::rectangular) {
            const Vector pert = random_perturbation(width, state.pm[i].magnitude, rng);
            for (std::size_t j = 0; j < d; ++j)
                v[j] += pert[j];
        }

        Vector x(d);
        for (std::size_t j = 0; j < d; ++j)
            x[j] = state.positions[i][j] + v[j];
        if (problem.bounded_search()) {
            for (std::size_t j = 0; j < d; ++j) {
                if (x[j] < problem.domain_low()[j]) {
                    x[j] = problem.domain_low()[j];
                    v[j] = 0.0;
                } else if (x[j] > problem.domain_high()[j]) {
                    x[j] = problem.domain_high()[j];
                    v[j] = 0.0;
                }
            }
        }
        next_x[i] = std::move(x);
        next_v[i] = std::move(v);
    }

    double speed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        state.positions[i] = std::move(next_x[i]);
        state.velocities[i] = std::move(next_v[i]);
        speed += norm(state.velocities[i]);
        const double value = problem.evaluate(state.positions[i], rng);
        ++state.evaluations;
        const bool better = value < state.personal_best_values[i];
        if (better) {
            state.personal_best_values[i] = value;
            state.personal_bests[i] = state.positions[i];
        }
        state.improved[i] = better;
        state.pm[i] = update_pm(state.pm[i], better);
    }
    state.refresh_global_best();

    if (config.inertia == Inertia::adaptive_velocity) {
        Vector diag(d);
        for (std::size_t j = 0; j < d; ++j)
            diag[j] = width[j];
        state.adaptive_omega =
            adapt_inertia(state.adaptive_omega, speed / static_cast<double>(n), ideal_speed(norm(diag), t, state.t_max));
    }
}

// ---------------------------------------------------------------------------
// Runs

struct RunResult {
    double final_error = 0.0;
    double best_value = 0.0;
    std::size_t evaluations = 0;
    std::size_t iterations = 0;
    std::vector<double> trajectory; // best error after every 1000 evaluations

    bool operator==(const RunResult&) const = default;
};

inline constexpr std::size_t trajectory_interval = 1000;

/// Number of velocity-update iterations a budget affords: initialization
/// consumes one swarm's worth of evaluations.
inline std::size_t iterations_for_budget(std::size_t budget, std::size_t size = swarm_size)
{
    if (budget < size)
        throw std::invalid_argument("budget smaller than swarm size");
    return budget / size - 1;
}

/// Seed for run `run_index` of a configuration on a problem.
inline std::uint64_t run_seed(std::uint64_t master_seed, const ModuleConfiguration& config, const bench::ProblemSpec& spec,
                              std::size_t run_index)
{
    return hash_values(master_seed, fnv1a(config.token()), static_cast<std::uint64_t>(spec.function), spec.dimension,
                       run_index);
}

inline RunResult run(const ModuleConfiguration& config, const bench::ProblemInstance& problem, std::size_t budget,
                     std::uint64_t seed)
{
    if (!config.structurally_valid())
        throw std::invalid_argument("additive stochastic DNPP requires matrix = none");
    const std::size_t iterations = iterations_for_budget(budget);
    CounterRng rng(seed);
    SwarmState state = initialize_swarm(problem, iterations, rng);

    RunResult r;
    std::size_t next_mark = trajectory_interval;
    auto record = [&] {
        while (state.evaluations >= next_mark) {
            r.trajectory.push_back(bench::error_of(problem, state.global_best_value));
            next_mark += trajectory_interval;
        }
    };
    record();
    for (std::size_t it = 0; it < iterations; ++it) {
        step(state, config, problem, rng);
        record();
    }
    r.best_value = state.global_best_value;
    r.final_error = bench::error_of(problem, state.global_best_value);
    r.evaluations = state.evaluations;
    r.iterations = iterations;
    return r;
}

} // namespace psox

#endif // PSOX_SWARM_HPP
