#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bcsimplex/polynomial.hpp"

namespace bcsimplex {

enum class ExprKind { Constant, Variable, Add, Mul, Pow, Neg, Sin, Cos };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable expression tree node. Subtraction is represented as
/// `Add(a, Neg(b))`; constants produced by the parser are never negative.
struct Expr {
    ExprKind kind = ExprKind::Constant;
    double value = 0.0;    // Constant
    std::string name;      // Variable
    unsigned exponent = 0; // Pow
    ExprPtr lhs;           // Add, Mul, Pow (base), Neg, Sin, Cos
    ExprPtr rhs;           // Add, Mul
};

namespace ast {
ExprPtr constant(double v); ///< negative values become Neg(Constant(-v))
ExprPtr variable(std::string name);
ExprPtr add(ExprPtr a, ExprPtr b);
ExprPtr sub(ExprPtr a, ExprPtr b);
ExprPtr mul(ExprPtr a, ExprPtr b);
ExprPtr pow(ExprPtr base, unsigned exponent);
ExprPtr neg(ExprPtr a);
ExprPtr sin(ExprPtr a);
ExprPtr cos(ExprPtr a);
} // namespace ast

/// Structural equality of expression trees.
bool equal(const Expr& a, const Expr& b);
inline bool equal(const ExprPtr& a, const ExprPtr& b)
{
    if (!a || !b) return a == b;
    return equal(*a, *b);
}

/// Text form that re-parses to a structurally identical tree.
std::string print(const Expr& e);

bool contains_trig(const Expr& e);
void collect_variables(const Expr& e, std::vector<std::string>& out);

/// Replace variables by constants (used to bake in parameter values).
ExprPtr bind_constants(const ExprPtr& e, const std::map<std::string, double>& values);

/// Numeric evaluation; `lookup` supplies variable values.
double evaluate(const Expr& e, const std::function<double(const std::string&)>& lookup);

/// Replacement polynomials for trig nodes, keyed by `sin:<arg>` / `cos:<arg>`
/// where <arg> is the canonical text of the argument polynomial.
using TrigSubstitution = std::map<std::string, Polynomial>;

/// Polynomial over `vars` for a trig-free (or fully substituted) expression.
/// Identifiers not in `vars` are looked up in `params`.
Polynomial to_polynomial(const Expr& e, const std::vector<std::string>& vars, const std::map<std::string, double>& params,
                         const TrigSubstitution* trig = nullptr);

std::string trig_key(ExprKind kind, const Polynomial& argument);

/// Parse a stand-alone expression. `is_known` validates identifiers (null:
/// accept all). Errors carry the given line and 1-based column offsets.
ExprPtr parse_expression(std::string_view text, const std::function<bool(const std::string&)>& is_known = {}, int line = 1,
                         int column_offset = 0);

/// Parse a polynomial written in the expression grammar over `vars`
/// (canonical polynomial text is a special case).
Polynomial parse_polynomial(std::string_view text, const std::vector<std::string>& vars,
                            const std::map<std::string, double>& params = {});

// ---------------------------------------------------------------------------
// Model files

struct ParamDecl {
    std::string name;
    ExprPtr value; ///< may reference earlier parameters
};

struct BoundDecl {
    std::string name;
    ExprPtr lo;
    ExprPtr hi;
};

struct InitDecl {
    std::string name;
    bool is_box = true;
    ExprPtr lo; ///< box form
    ExprPtr hi;
    ExprPtr value; ///< expression form; may use sin/cos and earlier states
};

struct AssignDecl {
    std::string name;
    ExprPtr value;
};

/// A parsed model file before trig recasting.
struct SystemDecl {
    std::string name;
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    std::vector<ParamDecl> params;
    std::vector<ExprPtr> derivatives; ///< aligned with `states`
    std::vector<BoundDecl> admissible; ///< one per state, plus optional auxiliary overrides
    std::vector<BoundDecl> controls;   ///< aligned with `inputs`
    std::vector<ExprPtr> unsafe;       ///< unsafe where any g_k < 0
    std::vector<InitDecl> init;
    std::vector<AssignDecl> baseline;  ///< baseline control law, one per input
    std::vector<AssignDecl> reference; ///< monitored outputs and their reference values

    /// Parameter values in declaration order (expressions folded).
    [[nodiscard]] std::map<std::string, double> param_values() const;
    /// Copy with parameter values replaced; unknown names throw ValidationError.
    [[nodiscard]] SystemDecl with_overrides(const std::map<std::string, double>& overrides) const;
};

bool operator==(const SystemDecl& a, const SystemDecl& b);

/// Parse model-file text. Throws ParseError with line/column on failure.
SystemDecl parse_system(std::string_view text);

/// Print a SystemDecl in model-file syntax; parse_system(print_system(d)) == d.
std::string print_system(const SystemDecl& decl);

struct DynSystem;

/// Replace every sin(a)/cos(a) by auxiliary states s_a, c_a with
/// ds_a/dt = c_a * da/dt and dc_a/dt = -s_a * da/dt, producing a purely
/// polynomial system. Arguments that are negations of each other share one
/// auxiliary pair.
DynSystem recast(const SystemDecl& decl);

} // namespace bcsimplex
