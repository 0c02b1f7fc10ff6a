#ifndef PSOX_CONFIG_HPP
#define PSOX_CONFIG_HPP

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace psox {

enum class Dnpp { rectangular, spherical, additive_stochastic };
enum class Accel { constant, scheduled };
enum class Topology { ring, fully_connected };
enum class Influence { best_of_neighborhood, fully_informed };
enum class MatrixKind { identity, random_diagonal, euclidean_rotation, increasing_group, none };
enum class Inertia { constant_zero, constant_075, adaptive_velocity, rank_based, success_based };
enum class InformedPerturbation { none, gaussian };
enum class RandomPerturbation { none, rectangular };

/// Module order used everywhere: feature columns, tokens, enumeration.
enum class Module : std::size_t { dnpp, accel, topology, influence, matrix, inertia, pert_informed, pert_random };

inline constexpr std::size_t module_count = 8;

struct ModuleInfo {
    std::string_view key;        // token key and dataset column name
    std::string_view long_name;
    std::vector<std::string_view> levels;
};

inline const std::array<ModuleInfo, module_count>& module_table()
{
    static const std::array<ModuleInfo, module_count> table{{
        {"dnpp", "DNPP", {"rect", "sph", "add"}},
        {"ac", "accelCoeffCS", {"const", "sched"}},
        {"top", "topology", {"ring", "fc"}},
        {"moi", "modelOfInfluence", {"bon", "fi"}},
        {"mtx", "randomMatrix", {"id", "diag", "rot", "grp", "none"}},
        {"iw", "omega1CS", {"c0.0", "c0.75", "av", "rank", "succ"}},
        {"p1", "perturbation1CS", {"none", "gauss"}},
        {"p2", "perturbation2CS", {"none", "rect"}},
    }};
    return table;
}

inline std::size_t level_count(std::size_t module) { return module_table().at(module).levels.size(); }

/// Index of a level token within a module, or throws.
inline std::size_t level_index(std::size_t module, std::string_view token)
{
    const auto& levels = module_table().at(module).levels;
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (levels[i] == token)
            return i;
    throw std::invalid_argument("unknown level '" + std::string(token) + "' for module " +
                                std::string(module_table()[module].key));
}

inline std::size_t module_index(std::string_view key)
{
    const auto& t = module_table();
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i].key == key)
            return i;
    throw std::invalid_argument("unknown module '" + std::string(key) + "'");
}

/// One point of the eight-module design space.
struct ModuleConfiguration {
    Dnpp dnpp = Dnpp::rectangular;
    Accel accel = Accel::constant;
    Topology topology = Topology::ring;
    Influence influence = Influence::best_of_neighborhood;
    MatrixKind matrix = MatrixKind::identity;
    Inertia inertia = Inertia::constant_075;
    InformedPerturbation pert_informed = InformedPerturbation::none;
    RandomPerturbation pert_random = RandomPerturbation::none;

    bool operator==(const ModuleConfiguration&) const = default;

    /// The random-matrix module only exists for rectangular and spherical DNPP.
    bool structurally_valid() const noexcept
    {
        return dnpp != Dnpp::additive_stochastic || matrix == MatrixKind::none;
    }

    std::array<std::size_t, module_count> levels() const noexcept
    {
        return {static_cast<std::size_t>(dnpp),     static_cast<std::size_t>(accel),
                static_cast<std::size_t>(topology), static_cast<std::size_t>(influence),
                static_cast<std::size_t>(matrix),   static_cast<std::size_t>(inertia),
                static_cast<std::size_t>(pert_informed), static_cast<std::size_t>(pert_random)};
    }

    static ModuleConfiguration from_levels(const std::array<std::size_t, module_count>& l)
    {
        for (std::size_t m = 0; m < module_count; ++m)
            if (l[m] >= level_count(m))
                throw std::invalid_argument("level index out of range");
        ModuleConfiguration c;
        c.dnpp = static_cast<Dnpp>(l[0]);
        c.accel = static_cast<Accel>(l[1]);
        c.topology = static_cast<Topology>(l[2]);
        c.influence = static_cast<Influence>(l[3]);
        c.matrix = static_cast<MatrixKind>(l[4]);
        c.inertia = static_cast<Inertia>(l[5]);
        c.pert_informed = static_cast<InformedPerturbation>(l[6]);
        c.pert_random = static_cast<RandomPerturbation>(l[7]);
        return c;
    }

    /// Canonical token string, e.g.
    /// dnpp=rect;ac=const;top=ring;moi=bon;mtx=id;iw=c0.75;p1=none;p2=none
    std::string token() const
    {
        const auto& t = module_table();
        const auto l = levels();
        std::string out;
        for (std::size_t m = 0; m < module_count; ++m) {
            if (m)
                out += ';';
            out += t[m].key;
            out += '=';
            out += t[m].levels[l[m]];
        }
        return out;
    }

    /// Inverse of token(). Keys must appear once each, in canonical order.
    static ModuleConfiguration parse(std::string_view text)
    {
        std::array<std::size_t, module_count> l{};
        std::size_t m = 0;
        while (!text.empty()) {
            const auto semi = text.find(';');
            const auto part = text.substr(0, semi);
            const auto eq = part.find('=');
            if (eq == std::string_view::npos || m >= module_count)
                throw std::invalid_argument("malformed configuration token");
            if (part.substr(0, eq) != module_table()[m].key)
                throw std::invalid_argument("expected key '" + std::string(module_table()[m].key) + "' in token");
            l[m] = level_index(m, part.substr(eq + 1));
            ++m;
            text = semi == std::string_view::npos ? std::string_view{} : text.substr(semi + 1);
        }
        if (m != module_count)
            throw std::invalid_argument("configuration token is missing modules");
        return from_levels(l);
    }
};

/// The canonical configuration used as a baseline throughout.
inline ModuleConfiguration canonical_configuration() { return ModuleConfiguration{}; }

} // namespace psox

#endif // PSOX_CONFIG_HPP
