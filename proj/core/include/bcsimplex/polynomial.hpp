#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bcsimplex/interval.hpp"

namespace bcsimplex {

/// Sparse multivariate polynomial with real coefficients over an ordered list
/// of named variables.
///
/// Terms are kept in canonical form: no zero coefficients, unique exponent
/// vectors, sorted by graded lexicographic order (highest degree first). Two
/// polynomials over the same variable list are equal iff their term lists are
/// equal. Binary operations on polynomials over different variable lists
/// first align both operands to the union of the lists (left operand's order
/// first).
class Polynomial {
public:
    using Exponents = std::vector<unsigned>;

    struct Term {
        Exponents exps;
        double coef = 0.0;
        friend bool operator==(const Term&, const Term&) = default;
    };

    Polynomial() = default;
    explicit Polynomial(std::vector<std::string> vars);
    Polynomial(std::vector<std::string> vars, std::vector<Term> terms);

    static Polynomial constant(std::vector<std::string> vars, double c);
    static Polynomial variable(std::vector<std::string> vars, std::string_view name);

    [[nodiscard]] const std::vector<std::string>& variables() const { return vars_; }
    [[nodiscard]] std::span<const Term> terms() const { return terms_; }
    [[nodiscard]] bool is_zero() const { return terms_.empty(); }
    [[nodiscard]] bool is_constant() const;
    [[nodiscard]] unsigned degree() const;
    /// Slot of `name` in the variable list, or -1.
    [[nodiscard]] int index_of(std::string_view name) const;
    /// True if some term has a positive exponent on `name`.
    [[nodiscard]] bool depends_on(std::string_view name) const;

    /// Exact evaluation by repeated multiplication. Throws ValidationError on
    /// dimension mismatch.
    [[nodiscard]] double evaluate(std::span<const double> point) const;
    /// Natural interval extension (even powers use the even-power rule).
    [[nodiscard]] Interval evaluate(std::span<const Interval> box) const;

    /// Formal partial derivative; unknown variable gives the zero polynomial.
    [[nodiscard]] Polynomial partial(std::string_view var) const;
    /// Fix some variables to numbers; they are removed from the variable list.
    [[nodiscard]] Polynomial substitute(const std::map<std::string, double>& bindings) const;
    /// Replace variable `var` by polynomial `q` (variable lists are aligned).
    [[nodiscard]] Polynomial compose(std::string_view var, const Polynomial& q) const;
    /// Re-express over `vars`; every variable actually used must be present.
    [[nodiscard]] Polynomial with_variables(const std::vector<std::string>& vars) const;

    /// Canonical text: `coef*v1^e1*v2^e2` terms joined by ` + `, coefficients
    /// printed with 17 significant digits, `0` for the zero polynomial.
    [[nodiscard]] std::string to_string() const;

    Polynomial& operator+=(const Polynomial& rhs);
    Polynomial& operator-=(const Polynomial& rhs);
    Polynomial& operator*=(const Polynomial& rhs);
    Polynomial& operator*=(double s);

    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
    friend Polynomial operator*(Polynomial a, const Polynomial& b) { return a *= b; }
    friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
    friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
    friend Polynomial operator-(Polynomial a) { return a *= -1.0; }

    friend bool operator==(const Polynomial&, const Polynomial&) = default;

private:
    static Polynomial from_map(std::vector<std::string> vars, std::map<Exponents, double> acc);
    void canonicalize();

    std::vector<std::string> vars_;
    std::vector<Term> terms_;
};

Polynomial pow(const Polynomial& p, unsigned k);

/// Union of two variable lists preserving the order of `a`, then new names of `b`.
std::vector<std::string> merge_variables(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Sum over i of (d p / d x_i) * field[i], where x_i = states[i]. The result
/// lives over the union of p's and the field's variables. Inputs appearing in
/// `p` are treated as constants (zero-order hold).
Polynomial lie_derivative(const Polynomial& p, const std::vector<std::string>& states, std::span<const Polynomial> field);

/// Sound enclosure of p over `box` (aligned with p.variables()).
///
/// Combines the natural extension with a centered form whose shifted
/// coefficients are themselves computed in interval arithmetic. With
/// `depth > 0` the box is bisected along its widest side recursively; each
/// node's enclosure is intersected with the hull of its children, so deeper
/// refinement never widens the result.
Interval box_bound(const Polynomial& p, const IntervalBox& box, int depth = 0);

} // namespace bcsimplex
