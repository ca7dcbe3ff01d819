#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "bcsimplex/dyn_system.hpp"
#include "bcsimplex/interval.hpp"
#include "bcsimplex/polynomial.hpp"

namespace bcsimplex {

/// Candidate barrier certificate h over the states, with sigma(s) = gamma*s.
struct BarrierCertificate {
    Polynomial h;
    double gamma = 1.0;
    std::string provenance;
};

/// BaC file: JSON object with `h` (expression text over the states), `gamma`
/// and optional `provenance`.
BarrierCertificate parse_bac(std::string_view json_text, const DynSystem& sys);
BarrierCertificate load_bac(const std::string& path, const DynSystem& sys);
std::string serialize_bac(const BarrierCertificate& bc);

/// Feedback law u = k(x), one polynomial over the states per input.
using FeedbackLaw = std::vector<Polynomial>;

enum class Verdict { CertifiedOnGrid, Falsified };

/// (i) h >= 0 on safe states, (ii) h < 0 on unsafe states,
/// (iii) dh/dt + gamma*h >= 0 under the closed loop.
enum class Clause { SafeNonNegative = 1, UnsafeNegative = 2, Derivative = 3 };

struct CertReport {
    Verdict verdict = Verdict::CertifiedOnGrid;
    std::optional<Clause> clause;      ///< violated clause when falsified
    std::vector<double> witness;       ///< counterexample state when falsified
    double witness_value = 0.0;        ///< value of the violated clause's expression
    std::size_t samples = 0;           ///< sample points evaluated
    double min_safe_h = 0.0;           ///< min h over safe samples (+inf if none)
    double max_unsafe_h = 0.0;         ///< max h over unsafe samples (-inf if none)
    double min_derivative_margin = 0.0; ///< min of dh/dt + gamma*h over samples
    /// Interval enclosure of dh/dt + gamma*h over A (certified verdicts only);
    /// clause (iii) holds on all of A when `margin.lo >= 0`.
    std::optional<Interval> margin;
    int margin_depth = 0;
};

struct CheckOptions {
    std::size_t budget = 10000; ///< number of low-discrepancy samples over A
    int depth = 6;              ///< bisection depth for the interval margin
};

/// dh/dt + gamma*h with u = k(x) substituted, as a polynomial over the states.
Polynomial closed_loop_margin(const DynSystem& sys, const BarrierCertificate& bc, const FeedbackLaw& law);

/// Sample-based check of the three clauses over A. "Certified on grid" is
/// weaker than a sum-of-squares proof: only the interval margin for clause
/// (iii) is a proof, and only when it is non-negative.
CertReport check_bac(const DynSystem& sys, const BarrierCertificate& bc, const FeedbackLaw& law, const CheckOptions& opts = {});

std::string describe(const CertReport& r, const std::vector<std::string>& states);

struct SublevelOptions {
    std::size_t boundary_samples = 2048;
    std::size_t max_boxes = 400000;
    double tolerance = 1e-9; ///< stop when the certified lower bound is this close to the sampled minimum
};

struct SublevelResult {
    BarrierCertificate bc;
    double level = 0.0;       ///< certified lower bound c on V over the unsafe boundary
    double level_upper = 0.0; ///< best sampled boundary value of V
};

/// h = c - V where c bounds V from below on the unsafe boundary {g_k = 0}
/// within A. Throws ValidationError when V < 0 on A, the boundary does not
/// meet A, or c <= 0.
SublevelResult lyap_sublevel_bac(const Polynomial& V, const DynSystem& sys, const SublevelOptions& opts = {});

/// Halton point `index` (1-based) in the unit cube of dimension `dims`.
std::vector<double> halton(std::size_t index, std::size_t dims);

} // namespace bcsimplex
