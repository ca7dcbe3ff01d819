#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bcsimplex/expr.hpp"
#include "bcsimplex/interval.hpp"
#include "bcsimplex/polynomial.hpp"

namespace bcsimplex {

/// How one state's initial value is chosen.
struct InitSpec {
    bool is_box = true;
    Interval box;  ///< sampled uniformly when is_box
    ExprPtr value; ///< otherwise evaluated from the states initialised before it

    friend bool operator==(const InitSpec& a, const InitSpec& b)
    {
        return a.is_box == b.is_box && a.box == b.box && equal(a.value, b.value);
    }
};

/// Auxiliary trig states introduced by recasting.
struct TrigPair {
    std::size_t sin_index = 0;
    std::size_t cos_index = 0;
    Polynomial argument; ///< over the state list
};

/// Monitored output: a state and its reference value.
struct Reference {
    std::size_t state = 0;
    double value = 0.0;
    friend bool operator==(const Reference&, const Reference&) = default;
};

/// Polynomial ODE system dx/dt = f(x, u) with admissible box A, control box
/// Omega and unsafe set {x : some g_k(x) < 0}.
///
/// Derivatives are polynomials over `variables()` (states then inputs);
/// unsafe and baseline polynomials are over `states` only.
struct DynSystem {
    std::string name;
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    std::vector<Polynomial> rhs;
    IntervalBox admissible;
    IntervalBox controls;
    std::vector<Polynomial> unsafe;
    std::vector<Polynomial> baseline;
    std::vector<InitSpec> init;
    std::vector<Reference> reference;
    double eta = 0.0;
    std::map<std::string, double> params;
    std::vector<TrigPair> trig; ///< name, params and trig are not part of structural equality

    [[nodiscard]] std::vector<std::string> variables() const;
    [[nodiscard]] std::size_t state_index(std::string_view name) const;

    /// f(x, u) into `out`.
    void evaluate_rhs(std::span<const double> x, std::span<const double> u, std::span<double> out) const;
    /// min_k g_k(x); +inf when there are no unsafe constraints.
    [[nodiscard]] double safety_margin(std::span<const double> x) const;
    /// Unsafe iff some g_k(x) < 0; the boundary g_k = 0 is safe.
    [[nodiscard]] bool is_unsafe(std::span<const double> x) const { return safety_margin(x) < 0.0; }
    [[nodiscard]] std::vector<double> baseline_action(std::span<const double> x) const;

    /// Draw an initial state. `uniform01` must return values in [0, 1).
    [[nodiscard]] std::vector<double> sample_initial(const std::function<double()>& uniform01) const;
    /// Fill expression-initialised states (e.g. recast trig states) from the others.
    void complete_initial(std::vector<double>& x) const;

    /// Structural validation of all invariants; throws ValidationError.
    void validate() const;
};

bool operator==(const DynSystem& a, const DynSystem& b);

/// Model-file text for a recast system; loading it yields an equal system.
std::string print_system(const DynSystem& sys);

/// Stable 64-bit FNV-1a hash of the printed system, as 16 hex digits.
std::string model_hash(const DynSystem& sys);

std::uint64_t fnv1a64(std::string_view bytes);

} // namespace bcsimplex
