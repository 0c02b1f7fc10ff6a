#ifndef PSOX_BENCHMARK_HPP
#define PSOX_BENCHMARK_HPP

// Shifted / rotated / noisy / composed test functions modelled on the
// 25 rows of the CEC'05 single-objective suite. Transforms are synthesized
// from a seed; official data files can be supplied instead.

#include "psox/linalg.hpp"
#include "psox/rng.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace psox::bench {

enum class FunctionId : int {
    f1 = 1, f2, f3, f4, f5, f6, f7, f8, f9, f10, f11, f12, f13,
    f14, f15, f16, f17, f18, f19, f20, f21, f22, f23, f24, f25
};

inline constexpr int function_count = 25;

inline std::string to_string(FunctionId id) { return "f" + std::to_string(static_cast<int>(id)); }

inline FunctionId parse_function_id(std::string_view text)
{
    if (text.size() >= 2 && (text[0] == 'f' || text[0] == 'F')) {
        int n = 0;
        for (char c : text.substr(1)) {
            if (c < '0' || c > '9')
                throw std::invalid_argument("unknown function id: " + std::string(text));
            n = n * 10 + (c - '0');
            if (n > function_count)
                break;
        }
        if (n >= 1 && n <= function_count)
            return static_cast<FunctionId>(n);
    }
    throw std::invalid_argument("unknown function id: " + std::string(text));
}

enum class BaseKind {
    sphere,
    schwefel_1_2,
    elliptic,
    schwefel_2_6,
    rosenbrock,
    griewank,
    ackley,
    rastrigin,
    weierstrass,
    schwefel_2_13,
    griewank_rosenbrock,
    scaffer_expanded,
    composition,
};

/// Static row of the function table.
struct FunctionInfo {
    FunctionId id;
    const char* name;
    std::vector<std::string> types; // f13/f14 carry two labels
    const char* properties;
    double domain_low;
    double domain_high;
    double optimum;
    bool bounded;
    bool rotated;
    bool noisy;
    BaseKind base;
};

inline const FunctionInfo& function_info(FunctionId id)
{
    using B = BaseKind;
    static const std::array<FunctionInfo, function_count> table{{
        {FunctionId::f1, "Shifted Sphere", {"Unimodal"}, "Separable, shifted", -100, 100, 0, true, false, false, B::sphere},
        {FunctionId::f2, "Shifted Schwefel 1.2", {"Unimodal"}, "Non-separable, shifted", -100, 100, 0, true, false, false, B::schwefel_1_2},
        {FunctionId::f3, "Shifted Rotated High Conditioned Elliptic", {"Unimodal"}, "Non-separable, rotated, shifted", -100, 100, 0, true, true, false, B::elliptic},
        {FunctionId::f4, "Shifted Schwefel 1.2 with Noise", {"Unimodal"}, "Non-separable, noisy", -100, 100, 0, true, false, true, B::schwefel_1_2},
        {FunctionId::f5, "Schwefel 2.6 with Optimum on Bounds", {"Unimodal"}, "Non-separable, optimum on bounds", -100, 100, 0, true, false, false, B::schwefel_2_6},
        {FunctionId::f6, "Shifted Rosenbrock", {"Multimodal"}, "Non-separable, narrow valley", -100, 100, 0, true, false, false, B::rosenbrock},
        {FunctionId::f7, "Shifted Rotated Griewank without Bounds", {"Multimodal"}, "Non-separable, rotated", -600, 600, 0, false, true, false, B::griewank},
        {FunctionId::f8, "Shifted Rotated Ackley", {"Multimodal"}, "Non-separable, rotated, bounds", -32, 32, 0, true, true, false, B::ackley},
        {FunctionId::f9, "Shifted Rastrigin", {"Multimodal"}, "Separable, many local optima", -5, 5, 0, true, false, false, B::rastrigin},
        {FunctionId::f10, "Shifted Rotated Rastrigin", {"Multimodal"}, "Non-separable, rotated, many optima", -5, 5, 0, true, true, false, B::rastrigin},
        {FunctionId::f11, "Shifted Rotated Weierstrass", {"Multimodal"}, "Non-separable, fractal landscape", -0.5, 0.5, 0, true, true, false, B::weierstrass},
        {FunctionId::f12, "Schwefel 2.13", {"Multimodal"}, "Non-separable, shifted", -std::numbers::pi, std::numbers::pi, 0, true, false, false, B::schwefel_2_13},
        {FunctionId::f13, "Expanded Griewank plus Rosenbrock", {"Multimodal", "Expanded multimodal"}, "Non-separable, expanded hybrid", -3, 1, 0, true, false, false, B::griewank_rosenbrock},
        {FunctionId::f14, "Shifted Rotated Expanded Scaffer F6", {"Multimodal", "Expanded multimodal"}, "Non-separable, rotated", -100, 100, 0, true, true, false, B::scaffer_expanded},
        {FunctionId::f15, "Hybrid Composition 1", {"Hybrid"}, "Mixed, partly separable", -5, 5, 0, true, false, false, B::composition},
        {FunctionId::f16, "Rotated Hybrid Composition 1", {"Hybrid"}, "Non-separable, rotated", -5, 5, 0, true, true, false, B::composition},
        {FunctionId::f17, "Rotated Hybrid Composition 1 with Noise", {"Hybrid"}, "Non-separable, noisy", -5, 5, 0, true, true, true, B::composition},
        {FunctionId::f18, "Rotated Hybrid Composition 2", {"Hybrid"}, "Non-separable, traps, flat regions", -5, 5, 0, true, true, false, B::composition},
        {FunctionId::f19, "Rotated Hybrid Composition 2 with Narrow Basin", {"Hybrid"}, "Non-separable, narrow basin", -5, 5, 100, true, true, false, B::composition},
        {FunctionId::f20, "Rotated Hybrid Composition 2 with Optimum on Bounds", {"Hybrid"}, "Non-separable, optimum on bounds", -5, 5, 0, true, true, false, B::composition},
        {FunctionId::f21, "Rotated Hybrid Composition 3", {"Hybrid"}, "Non-separable, rotated", -5, 5, 200, true, true, false, B::composition},
        {FunctionId::f22, "Rotated Hybrid Composition 3 with Ill-conditioning", {"Hybrid"}, "Non-separable, ill-conditioned", -5, 5, 300, true, true, false, B::composition},
        {FunctionId::f23, "Non-continuous Rotated Hybrid Composition 3", {"Hybrid"}, "Non-separable, non-continuous", -5, 5, 300, true, true, false, B::composition},
        {FunctionId::f24, "Rotated Hybrid Composition 4", {"Hybrid"}, "Non-separable, rotated, complex", -5, 5, 200, true, true, false, B::composition},
        {FunctionId::f25, "Rotated Hybrid Composition 4 without Bounds", {"Hybrid"}, "Non-separable, optimum outside initialization range", -5, 5, 200, false, true, false, B::composition},
    }};
    const int index = static_cast<int>(id) - 1;
    if (index < 0 || index >= function_count)
        throw std::invalid_argument("unknown function id");
    return table[static_cast<std::size_t>(index)];
}

// ---------------------------------------------------------------------------
// Base functions. All have their minimum 0 at the origin except the two
// Rosenbrock-type functions, which use the canonical parameterization with
// the minimum at the all-ones vector.
namespace base {

inline double sphere(std::span<const double> z)
{
    double s = 0.0;
    for (double v : z)
        s += v * v;
    return s;
}

inline double schwefel_1_2(std::span<const double> z)
{
    double s = 0.0, partial = 0.0;
    for (double v : z) {
        partial += v;
        s += partial * partial;
    }
    return s;
}

inline double elliptic(std::span<const double> z)
{
    const std::size_t d = z.size();
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double e = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
        s += std::pow(1e6, e) * z[i] * z[i];
    }
    return s;
}

inline double rosenbrock(std::span<const double> z)
{
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < z.size(); ++i) {
        const double a = z[i] * z[i] - z[i + 1];
        const double b = z[i] - 1.0;
        s += 100.0 * a * a + b * b;
    }
    return s;
}

inline double griewank(std::span<const double> z)
{
    double s = 0.0, p = 1.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        s += z[i] * z[i] / 4000.0;
        p *= std::cos(z[i] / std::sqrt(static_cast<double>(i + 1)));
    }
    return s - p + 1.0;
}

inline double ackley(std::span<const double> z)
{
    const double d = static_cast<double>(z.size());
    double sq = 0.0, cs = 0.0;
    for (double v : z) {
        sq += v * v;
        cs += std::cos(2.0 * std::numbers::pi * v);
    }
    return -20.0 * std::exp(-0.2 * std::sqrt(sq / d)) - std::exp(cs / d) + 20.0 + std::numbers::e;
}

inline double rastrigin(std::span<const double> z)
{
    double s = 0.0;
    for (double v : z)
        s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v) + 10.0;
    return s;
}

inline double weierstrass(std::span<const double> z)
{
    constexpr double a = 0.5, b = 3.0;
    constexpr int k_max = 20;
    double s = 0.0;
    for (double v : z) {
        double term = 0.0, offset = 0.0;
        double ak = 1.0, bk = 1.0;
        for (int k = 0; k <= k_max; ++k) {
            term += ak * std::cos(2.0 * std::numbers::pi * bk * (v + 0.5));
            offset += ak * std::cos(2.0 * std::numbers::pi * bk * 0.5);
            ak *= a;
            bk *= b;
        }
        s += term - offset;
    }
    return s;
}

inline double scaffer_f6(double x, double y)
{
    const double r2 = x * x + y * y;
    const double s = std::sin(std::sqrt(r2));
    const double den = 1.0 + 0.001 * r2;
    return 0.5 + (s * s - 0.5) / (den * den);
}

inline double scaffer_expanded(std::span<const double> z)
{
    const std::size_t d = z.size();
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        s += scaffer_f6(z[i], z[(i + 1) % d]);
    // scaffer_f6(0,0) = 0.5 + (0 - 0.5)/1 = 0 exactly.
    return s;
}

inline double griewank_rosenbrock(std::span<const double> z)
{
    const std::size_t d = z.size();
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double x = z[i], y = z[(i + 1) % d];
        const double a = x * x - y;
        const double b = x - 1.0;
        const double f2 = 100.0 * a * a + b * b;
        s += f2 * f2 / 4000.0 - std::cos(f2) + 1.0;
    }
    return s;
}

/// True for bases whose minimizer is the all-ones vector.
constexpr bool optimum_at_ones(BaseKind kind)
{
    return kind == BaseKind::rosenbrock || kind == BaseKind::griewank_rosenbrock;
}

/// Dispatch for bases that take only the transformed argument.
inline double evaluate(BaseKind kind, std::span<const double> z)
{
    switch (kind) {
    case BaseKind::sphere: return sphere(z);
    case BaseKind::schwefel_1_2: return schwefel_1_2(z);
    case BaseKind::elliptic: return elliptic(z);
    case BaseKind::rosenbrock: return rosenbrock(z);
    case BaseKind::griewank: return griewank(z);
    case BaseKind::ackley: return ackley(z);
    case BaseKind::rastrigin: return rastrigin(z);
    case BaseKind::weierstrass: return weierstrass(z);
    case BaseKind::griewank_rosenbrock: return griewank_rosenbrock(z);
    case BaseKind::scaffer_expanded: return scaffer_expanded(z);
    default: break;
    }
    throw std::logic_error("base function needs instance data");
}

} // namespace base

// ---------------------------------------------------------------------------

/// Replacement transform data, read from whitespace-separated numeric files.
struct ExternalData {
    std::string shift_path;
    std::string rotation_path; // optional; empty means "synthesize"
    bool operator==(const ExternalData&) const = default;
};

struct ProblemSpec {
    FunctionId function = FunctionId::f1;
    std::size_t dimension = 10;
    std::uint64_t transform_seed = 1;
    std::optional<ExternalData> external;

    bool operator==(const ProblemSpec&) const = default;
};

/// One component of the simplified hybrid composition.
struct CompositionComponent {
    BaseKind base;
    Vector shift;
    Matrix transform; // applied to (x - shift); rotation, optionally scaled
    double scale;     // multiplies the transformed argument
    double sigma;     // proximity width
    double bias;
};

class ProblemInstance;
ProblemInstance make_problem(const ProblemSpec& spec);

class ProblemInstance
{
public:
    const ProblemSpec& spec() const noexcept { return spec_; }
    const FunctionInfo& info() const noexcept { return *info_; }
    std::size_t dimension() const noexcept { return spec_.dimension; }
    const Vector& shift() const noexcept { return shift_; }
    const Matrix& rotation() const noexcept { return rotation_; }
    const Vector& domain_low() const noexcept { return low_; }
    const Vector& domain_high() const noexcept { return high_; }
    double optimum_value() const noexcept { return info_->optimum; }
    bool bounded_search() const noexcept { return info_->bounded; }
    bool noisy() const noexcept { return info_->noisy; }
    const std::vector<CompositionComponent>& components() const noexcept { return components_; }

    /// Analytic global minimizer.
    Vector optimizer() const
    {
        if (info_->base == BaseKind::composition)
            return components_.front().shift;
        Vector x = shift_;
        if (base::optimum_at_ones(info_->base))
            for (double& v : x)
                v += 1.0;
        return x;
    }

    /// Noise-free evaluation. Throws for noisy rows, which need an RNG.
    double evaluate(std::span<const double> x) const
    {
        if (noisy())
            throw std::logic_error(to_string(spec_.function) + " is noisy; pass an RNG");
        return evaluate_impl(x, nullptr);
    }

    double evaluate(std::span<const double> x, CounterRng& rng) const { return evaluate_impl(x, &rng); }

private:
    friend ProblemInstance build_problem(const ProblemSpec&, std::optional<Vector>, std::optional<Matrix>);

    double evaluate_impl(std::span<const double> x, CounterRng* rng) const
    {
        const std::size_t d = dimension();
        if (x.size() != d)
            throw std::invalid_argument("evaluate: expected " + std::to_string(d) + " coordinates, got " +
                                        std::to_string(x.size()));
        double value = 0.0;
        switch (info_->base) {
        case BaseKind::schwefel_2_6: {
            double worst = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                worst = std::max(worst, std::abs(dot(aux_a_.row(i), x) - aux_b_[i]));
            value = worst;
            break;
        }
        case BaseKind::schwefel_2_13: {
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                double bi = 0.0;
                for (std::size_t j = 0; j < d; ++j)
                    bi += aux_a_(i, j) * std::sin(x[j]) + aux_b2_(i, j) * std::cos(x[j]);
                const double diff = aux_b_[i] - bi;
                s += diff * diff;
            }
            value = s;
            break;
        }
        case BaseKind::composition:
            value = evaluate_composition(x);
            break;
        default: {
            Vector diff(d), z(d);
            for (std::size_t i = 0; i < d; ++i)
                diff[i] = x[i] - shift_[i];
            if (info_->rotated)
                multiply(rotation_, diff, z);
            else
                z = diff;
            value = base::evaluate(info_->base, z);
            break;
        }
        }
        if (noisy()) {
            if (rng == nullptr)
                throw std::logic_error("noisy evaluation without RNG");
            value *= 1.0 + 0.1 * std::abs(rng->normal());
        }
        return value + info_->optimum;
    }

    double evaluate_composition(std::span<const double> x) const
    {
        const std::size_t d = dimension();
        const std::size_t n = components_.size();
        const bool discrete = spec_.function == FunctionId::f23;
        Vector xv(x.begin(), x.end());
        if (discrete) {
            const Vector& o = components_.front().shift;
            for (std::size_t j = 0; j < d; ++j)
                if (std::abs(xv[j] - o[j]) >= 0.5)
                    xv[j] = std::round(2.0 * xv[j]) / 2.0;
        }
        std::vector<double> weight(n), fvals(n);
        Vector diff(d), z(d);
        double max_w = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const auto& comp = components_[c];
            double dist2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                diff[j] = xv[j] - comp.shift[j];
                dist2 += diff[j] * diff[j];
            }
            weight[c] = std::exp(-dist2 / (2.0 * static_cast<double>(d) * comp.sigma * comp.sigma));
            max_w = std::max(max_w, weight[c]);
            multiply(comp.transform, diff, z);
            for (double& v : z) {
                v *= comp.scale;
                if (base::optimum_at_ones(comp.base))
                    v += 1.0;
            }
            fvals[c] = base::evaluate(comp.base, z);
        }
        double total_w = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            if (weight[c] != max_w)
                weight[c] *= 1.0 - std::pow(max_w, 10.0);
            total_w += weight[c];
        }
        double value = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double w = total_w > 0.0 ? weight[c] / total_w : 1.0 / static_cast<double>(n);
            value += w * (fvals[c] + components_[c].bias);
        }
        return value;
    }

    ProblemSpec spec_;
    const FunctionInfo* info_ = nullptr;
    Vector shift_;
    Matrix rotation_;
    Vector low_, high_;
    // schwefel_2_6: A (aux_a_), B = A o (aux_b_)
    // schwefel_2_13: a (aux_a_), b (aux_b2_), A_i (aux_b_)
    Matrix aux_a_, aux_b2_;
    Vector aux_b_;
    std::vector<CompositionComponent> components_;
};

namespace detail {

inline Vector read_numbers(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open transform file: " + path);
    Vector values;
    double v;
    while (in >> v)
        values.push_back(v);
    if (!in.eof())
        throw std::runtime_error("non-numeric content in transform file: " + path);
    return values;
}

inline Vector central_uniform(CounterRng& rng, std::size_t d, double lo, double hi)
{
    Vector v(d);
    const double w = hi - lo;
    for (auto& x : v)
        x = lo + 0.1 * w + 0.8 * w * rng.uniform();
    return v;
}

inline Matrix random_integer_matrix(CounterRng& rng, std::size_t d, int bound)
{
    Matrix m(d, d);
    for (auto& v : m.storage())
        v = static_cast<double>(static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * bound + 1))) - bound);
    return m;
}

struct CompositionRecipe {
    std::array<BaseKind, 3> bases;
    std::array<double, 3> scales;
    std::array<double, 3> sigmas;
};

inline CompositionRecipe composition_recipe(FunctionId id)
{
    using B = BaseKind;
    switch (id) {
    case FunctionId::f15:
    case FunctionId::f16:
    case FunctionId::f17:
        return {{B::rastrigin, B::weierstrass, B::griewank}, {1.0, 0.1, 60.0}, {1.0, 1.0, 1.0}};
    case FunctionId::f18:
    case FunctionId::f20:
        return {{B::ackley, B::rastrigin, B::sphere}, {6.4, 1.0, 1.0}, {1.0, 2.0, 2.0}};
    case FunctionId::f19:
        return {{B::ackley, B::rastrigin, B::sphere}, {6.4, 1.0, 1.0}, {0.1, 2.0, 2.0}};
    case FunctionId::f21:
    case FunctionId::f22:
    case FunctionId::f23:
        return {{B::scaffer_expanded, B::rastrigin, B::griewank_rosenbrock}, {4.0, 1.0, 0.4}, {1.0, 1.0, 1.0}};
    case FunctionId::f24:
    case FunctionId::f25:
        return {{B::weierstrass, B::scaffer_expanded, B::griewank_rosenbrock}, {0.1, 4.0, 0.4}, {2.0, 2.0, 2.0}};
    default:
        throw std::logic_error("not a composition row");
    }
}

} // namespace detail

/// Assemble an instance. Optional overrides replace the synthesized shift
/// and/or rotation (used by external files and JSON round trips).
inline ProblemInstance build_problem(const ProblemSpec& spec, std::optional<Vector> shift_override,
                                     std::optional<Matrix> rotation_override)
{
    const FunctionInfo& info = function_info(spec.function);
    const std::size_t d = spec.dimension;
    if (d < 2)
        throw std::invalid_argument("dimension must be at least 2");

    ProblemInstance p;
    p.spec_ = spec;
    p.info_ = &info;
    p.low_.assign(d, info.domain_low);
    p.high_.assign(d, info.domain_high);

    CounterRng rng(hash_values(spec.transform_seed, static_cast<std::uint64_t>(spec.function), d));

    // Shift. Rosenbrock-type rows draw so that shift + 1 stays in the domain.
    const double shift_high = base::optimum_at_ones(info.base) ? info.domain_high - 1.0 : info.domain_high;
    p.shift_ = detail::central_uniform(rng, d, info.domain_low, shift_high);
    if (info.base == BaseKind::schwefel_2_6) {
        // a quarter of the coordinates on each bound
        for (std::size_t i = 0; i < d; ++i) {
            if (i < d / 4)
                p.shift_[i] = info.domain_low;
            else if (i >= d - d / 4)
                p.shift_[i] = info.domain_high;
        }
    }
    if (info.rotated)
        p.rotation_ = random_orthogonal(d, rng);
    else
        p.rotation_ = Matrix::identity(d);

    if (shift_override) {
        if (shift_override->size() != d)
            throw std::invalid_argument("shift data has " + std::to_string(shift_override->size()) +
                                        " values, expected " + std::to_string(d));
        p.shift_ = std::move(*shift_override);
    }
    if (rotation_override) {
        if (rotation_override->rows() != d || rotation_override->cols() != d)
            throw std::invalid_argument("rotation data does not match dimension " + std::to_string(d));
        p.rotation_ = std::move(*rotation_override);
    }

    switch (info.base) {
    case BaseKind::schwefel_2_6:
        p.aux_a_ = detail::random_integer_matrix(rng, d, 500);
        p.aux_b_ = multiply(p.aux_a_, p.shift_);
        break;
    case BaseKind::schwefel_2_13: {
        p.aux_a_ = detail::random_integer_matrix(rng, d, 100);
        p.aux_b2_ = detail::random_integer_matrix(rng, d, 100);
        p.aux_b_.assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                p.aux_b_[i] += p.aux_a_(i, j) * std::sin(p.shift_[j]) + p.aux_b2_(i, j) * std::cos(p.shift_[j]);
        break;
    }
    case BaseKind::composition: {
        const auto recipe = detail::composition_recipe(spec.function);
        const std::array<double, 3> biases{0.0, 100.0, 200.0};
        for (std::size_t c = 0; c < 3; ++c) {
            CompositionComponent comp;
            comp.base = recipe.bases[c];
            comp.scale = recipe.scales[c];
            comp.sigma = recipe.sigmas[c];
            comp.bias = biases[c];
            if (c == 0) {
                comp.shift = p.shift_;
                comp.transform = info.rotated ? p.rotation_ : Matrix::identity(d);
            } else {
                comp.shift = detail::central_uniform(rng, d, info.domain_low, info.domain_high);
                comp.transform = info.rotated ? random_orthogonal(d, rng) : Matrix::identity(d);
            }
            if (spec.function == FunctionId::f22) {
                // condition number 100 via column scaling
                for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t k = 0; k < d; ++k)
                        comp.transform(r, k) *= std::pow(10.0, 2.0 * static_cast<double>(k) / static_cast<double>(d - 1));
            }
            p.components_.push_back(std::move(comp));
        }
        if (spec.function == FunctionId::f20 && !shift_override) {
            for (std::size_t j = 1; j < d; j += 2)
                p.components_[0].shift[j] = info.domain_high;
            p.shift_ = p.components_[0].shift;
        }
        break;
    }
    default:
        break;
    }
    return p;
}

/// Deterministic construction: the same spec always yields the same instance.
inline ProblemInstance make_problem(const ProblemSpec& spec)
{
    std::optional<Vector> shift;
    std::optional<Matrix> rotation;
    if (spec.external) {
        shift = detail::read_numbers(spec.external->shift_path);
        if (shift->size() != spec.dimension)
            throw std::invalid_argument("external shift file " + spec.external->shift_path + " has " +
                                        std::to_string(shift->size()) + " values, expected " +
                                        std::to_string(spec.dimension));
        if (!spec.external->rotation_path.empty()) {
            const Vector flat = detail::read_numbers(spec.external->rotation_path);
            const std::size_t d = spec.dimension;
            if (flat.size() != d * d)
                throw std::invalid_argument("external rotation file " + spec.external->rotation_path + " has " +
                                            std::to_string(flat.size()) + " values, expected " +
                                            std::to_string(d * d));
            Matrix m(d, d);
            m.storage() = flat;
            rotation = std::move(m);
        }
    }
    return build_problem(spec, std::move(shift), std::move(rotation));
}

/// Distance to the known optimum, floored at zero. A value below f* by more
/// than the guard means the evaluator is broken.
inline double error_of(const ProblemInstance& problem, double best_value, double guard = 1e-6)
{
    const double err = best_value - problem.optimum_value();
    if (err < -guard)
        throw std::logic_error("best value " + std::to_string(best_value) + " lies below the optimum of " +
                               to_string(problem.spec().function));
    return err > 0.0 ? err : 0.0;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ProblemSpec& spec)
{
    nlohmann::json j{{"function", to_string(spec.function)},
                     {"dimension", spec.dimension},
                     {"transform_seed", spec.transform_seed}};
    if (spec.external)
        j["external"] = {{"shift", spec.external->shift_path}, {"rotation", spec.external->rotation_path}};
    return j;
}

inline ProblemSpec spec_from_json(const nlohmann::json& j)
{
    ProblemSpec s;
    s.function = parse_function_id(j.at("function").get<std::string>());
    s.dimension = j.at("dimension").get<std::size_t>();
    s.transform_seed = j.value("transform_seed", std::uint64_t{1});
    if (j.contains("external"))
        s.external = ExternalData{j["external"].at("shift").get<std::string>(),
                                  j["external"].value("rotation", std::string{})};
    return s;
}

inline nlohmann::json to_json(const ProblemInstance& p)
{
    const auto& info = p.info();
    return nlohmann::json{
        {"spec", to_json(p.spec())},
        {"name", info.name},
        {"types", info.types},
        {"properties", info.properties},
        {"shift", p.shift()},
        {"rotation", std::vector<double>(p.rotation().data().begin(), p.rotation().data().end())},
        {"domain_low", p.domain_low()},
        {"domain_high", p.domain_high()},
        {"optimum_value", p.optimum_value()},
        {"bounded_search", p.bounded_search()},
        {"noisy", p.noisy()},
    };
}

inline ProblemInstance instance_from_json(const nlohmann::json& j)
{
    ProblemSpec spec = spec_from_json(j.at("spec"));
    spec.external.reset();
    const std::size_t d = spec.dimension;
    auto shift = j.at("shift").get<Vector>();
    auto flat = j.at("rotation").get<std::vector<double>>();
    if (flat.size() != d * d)
        throw std::invalid_argument("rotation in JSON does not match dimension");
    Matrix rot(d, d);
    rot.storage() = std::move(flat);
    return build_problem(spec, std::move(shift), std::move(rot));
}

} // namespace psox::bench

#endif // PSOX_BENCHMARK_HPP
