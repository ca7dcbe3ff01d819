#include "bcsimplex/polynomial.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "bcsimplex/error.hpp"

namespace bcsimplex {

namespace {

unsigned total_degree(const Polynomial::Exponents& e)
{
    return std::accumulate(e.begin(), e.end(), 0U);
}

// Graded lexicographic, highest first.
struct GrlexGreater {
    bool operator()(const Polynomial::Exponents& a, const Polynomial::Exponents& b) const
    {
        const unsigned da = total_degree(a);
        const unsigned db = total_degree(b);
        if (da != db) return da > db;
        return a > b;
    }
};

using TermMap = std::map<Polynomial::Exponents, double, GrlexGreater>;

std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Index map from `from` variable slots into `to` slots.
std::vector<std::size_t> slot_map(const std::vector<std::string>& from, const std::vector<std::string>& to)
{
    std::vector<std::size_t> map(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) {
        auto it = std::find(to.begin(), to.end(), from[i]);
        map[i] = static_cast<std::size_t>(it - to.begin());
    }
    return map;
}

double binomial(unsigned n, unsigned k)
{
    double r = 1.0;
    for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

} // namespace

Polynomial::Polynomial(std::vector<std::string> vars) : vars_(std::move(vars)) {}

Polynomial::Polynomial(std::vector<std::string> vars, std::vector<Term> terms)
    : vars_(std::move(vars)), terms_(std::move(terms))
{
    for (const auto& t : terms_) {
        if (t.exps.size() != vars_.size()) throw ValidationError("polynomial term arity does not match variable list");
    }
    canonicalize();
}

Polynomial Polynomial::constant(std::vector<std::string> vars, double c)
{
    Polynomial p(std::move(vars));
    if (c != 0.0) p.terms_.push_back({Exponents(p.vars_.size(), 0U), c});
    return p;
}

Polynomial Polynomial::variable(std::vector<std::string> vars, std::string_view name)
{
    Polynomial p(std::move(vars));
    const int idx = p.index_of(name);
    if (idx < 0) throw ValidationError("unknown variable '" + std::string(name) + "'");
    Exponents e(p.vars_.size(), 0U);
    e[static_cast<std::size_t>(idx)] = 1;
    p.terms_.push_back({std::move(e), 1.0});
    return p;
}

Polynomial Polynomial::from_map(std::vector<std::string> vars, std::map<Exponents, double> acc)
{
    Polynomial p(std::move(vars));
    TermMap sorted;
    for (auto& [e, c] : acc) {
        if (c != 0.0) sorted.emplace(e, c);
    }
    p.terms_.reserve(sorted.size());
    for (auto& [e, c] : sorted) p.terms_.push_back({e, c});
    return p;
}

void Polynomial::canonicalize()
{
    TermMap acc;
    for (auto& t : terms_) acc[t.exps] += t.coef;
    terms_.clear();
    for (auto& [e, c] : acc) {
        if (c != 0.0) terms_.push_back({e, c});
    }
}

bool Polynomial::is_constant() const
{
    return terms_.empty() || (terms_.size() == 1 && total_degree(terms_[0].exps) == 0);
}

unsigned Polynomial::degree() const
{
    return terms_.empty() ? 0U : total_degree(terms_.front().exps);
}

int Polynomial::index_of(std::string_view name) const
{
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == name) return static_cast<int>(i);
    }
    return -1;
}

bool Polynomial::depends_on(std::string_view name) const
{
    const int idx = index_of(name);
    if (idx < 0) return false;
    return std::any_of(terms_.begin(), terms_.end(), [idx](const Term& t) { return t.exps[static_cast<std::size_t>(idx)] > 0; });
}

double Polynomial::evaluate(std::span<const double> point) const
{
    if (point.size() != vars_.size()) {
        throw ValidationError("polynomial evaluated at a point of dimension " + std::to_string(point.size()) + ", expected " +
                              std::to_string(vars_.size()));
    }
    double sum = 0.0;
    for (const auto& t : terms_) {
        double m = t.coef;
        for (std::size_t i = 0; i < t.exps.size(); ++i) {
            for (unsigned k = 0; k < t.exps[i]; ++k) m *= point[i];
        }
        sum += m;
    }
    return sum;
}

Interval Polynomial::evaluate(std::span<const Interval> box) const
{
    if (box.size() != vars_.size()) throw ValidationError("interval evaluation: box dimension mismatch");
    Interval sum{0.0};
    for (const auto& t : terms_) {
        Interval m{t.coef};
        for (std::size_t i = 0; i < t.exps.size(); ++i) {
            if (t.exps[i] > 0) m *= pow(box[i], t.exps[i]);
        }
        sum += m;
    }
    return sum;
}

Polynomial Polynomial::partial(std::string_view var) const
{
    const int idx = index_of(var);
    Polynomial out(vars_);
    if (idx < 0) return out;
    const auto slot = static_cast<std::size_t>(idx);
    for (const auto& t : terms_) {
        if (t.exps[slot] == 0) continue;
        Term d = t;
        d.coef *= static_cast<double>(t.exps[slot]);
        d.exps[slot] -= 1;
        out.terms_.push_back(std::move(d));
    }
    // Differentiation preserves distinctness; only the order can change.
    out.canonicalize();
    return out;
}

Polynomial Polynomial::substitute(const std::map<std::string, double>& bindings) const
{
    std::vector<std::string> kept;
    std::vector<std::size_t> kept_slots;
    std::vector<std::pair<std::size_t, double>> bound;
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        auto it = bindings.find(vars_[i]);
        if (it == bindings.end()) {
            kept.push_back(vars_[i]);
            kept_slots.push_back(i);
        } else {
            bound.emplace_back(i, it->second);
        }
    }
    std::map<Exponents, double> acc;
    for (const auto& t : terms_) {
        double c = t.coef;
        for (auto [slot, value] : bound) {
            for (unsigned k = 0; k < t.exps[slot]; ++k) c *= value;
        }
        Exponents e(kept.size());
        for (std::size_t j = 0; j < kept_slots.size(); ++j) e[j] = t.exps[kept_slots[j]];
        acc[e] += c;
    }
    return from_map(std::move(kept), std::move(acc));
}

Polynomial Polynomial::compose(std::string_view var, const Polynomial& q) const
{
    const int idx = index_of(var);
    if (idx < 0) return *this;
    const auto slot = static_cast<std::size_t>(idx);
    const auto vars = merge_variables(vars_, q.vars_);
    const Polynomial qa = q.with_variables(vars);
    const unsigned max_e = std::accumulate(terms_.begin(), terms_.end(), 0U,
                                           [slot](unsigned m, const Term& t) { return std::max(m, t.exps[slot]); });
    std::vector<Polynomial> powers{Polynomial::constant(vars, 1.0)};
    for (unsigned k = 1; k <= max_e; ++k) powers.push_back(powers.back() * qa);

    Polynomial out(vars);
    const auto map = slot_map(vars_, vars);
    for (const auto& t : terms_) {
        Exponents e(vars.size(), 0U);
        for (std::size_t i = 0; i < t.exps.size(); ++i) {
            if (i != slot) e[map[i]] = t.exps[i];
        }
        Polynomial mono(vars, {Term{std::move(e), t.coef}});
        out += mono * powers[t.exps[slot]];
    }
    return out;
}

Polynomial Polynomial::with_variables(const std::vector<std::string>& vars) const
{
    if (vars == vars_) return *this;
    std::vector<std::size_t> map(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        auto it = std::find(vars.begin(), vars.end(), vars_[i]);
        if (it == vars.end()) {
            if (depends_on(vars_[i])) {
                throw ValidationError("polynomial uses variable '" + vars_[i] + "' missing from target variable list");
            }
            map[i] = vars.size();
        } else {
            map[i] = static_cast<std::size_t>(it - vars.begin());
        }
    }
    Polynomial out(vars);
    for (const auto& t : terms_) {
        Exponents e(vars.size(), 0U);
        for (std::size_t i = 0; i < t.exps.size(); ++i) {
            if (map[i] < vars.size()) e[map[i]] = t.exps[i];
        }
        out.terms_.push_back({std::move(e), t.coef});
    }
    out.canonicalize();
    return out;
}

std::string Polynomial::to_string() const
{
    if (terms_.empty()) return "0";
    std::string out;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
        if (k > 0) out += " + ";
        const auto& t = terms_[k];
        out += format_double(t.coef);
        for (std::size_t i = 0; i < t.exps.size(); ++i) {
            if (t.exps[i] == 0) continue;
            out += '*';
            out += vars_[i];
            if (t.exps[i] > 1) {
                out += '^';
                out += std::to_string(t.exps[i]);
            }
        }
    }
    return out;
}

Polynomial& Polynomial::operator+=(const Polynomial& rhs)
{
    const auto vars = merge_variables(vars_, rhs.vars_);
    if (vars != vars_) *this = with_variables(vars);
    const Polynomial r = rhs.with_variables(vars);
    std::map<Exponents, double> acc;
    for (const auto& t : terms_) acc[t.exps] += t.coef;
    for (const auto& t : r.terms_) acc[t.exps] += t.coef;
    *this = from_map(vars, std::move(acc));
    return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& rhs)
{
    return *this += rhs * -1.0;
}

Polynomial& Polynomial::operator*=(const Polynomial& rhs)
{
    const auto vars = merge_variables(vars_, rhs.vars_);
    const Polynomial a = with_variables(vars);
    const Polynomial b = rhs.with_variables(vars);
    std::map<Exponents, double> acc;
    for (const auto& ta : a.terms_) {
        for (const auto& tb : b.terms_) {
            Exponents e(vars.size());
            for (std::size_t i = 0; i < e.size(); ++i) e[i] = ta.exps[i] + tb.exps[i];
            acc[e] += ta.coef * tb.coef;
        }
    }
    *this = from_map(vars, std::move(acc));
    return *this;
}

Polynomial& Polynomial::operator*=(double s)
{
    if (s == 0.0) {
        terms_.clear();
        return *this;
    }
    for (auto& t : terms_) t.coef *= s;
    std::erase_if(terms_, [](const Term& t) { return t.coef == 0.0; });
    return *this;
}

Polynomial pow(const Polynomial& p, unsigned k)
{
    Polynomial r = Polynomial::constant(p.variables(), 1.0);
    for (unsigned i = 0; i < k; ++i) r *= p;
    return r;
}

std::vector<std::string> merge_variables(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
    std::vector<std::string> out = a;
    for (const auto& name : b) {
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
    return out;
}

Polynomial lie_derivative(const Polynomial& p, const std::vector<std::string>& states, std::span<const Polynomial> field)
{
    if (states.size() != field.size()) throw ValidationError("lie_derivative: field arity does not match state list");
    Polynomial out(p.variables());
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (!p.depends_on(states[i])) continue;
        out += p.partial(states[i]) * field[i];
    }
    return out;
}

namespace {

// Shared state for one box_bound call: exponent vectors flattened to
// mixed-radix indices so the centered form can accumulate into a flat table.
class Bounder {
public:
    explicit Bounder(const Polynomial& p) : p_(p), n_(p.variables().size()), maxdeg_(n_, 0U), stride_(n_, 1U)
    {
        for (const auto& t : p.terms()) {
            for (std::size_t i = 0; i < n_; ++i) maxdeg_[i] = std::max(maxdeg_[i], t.exps[i]);
        }
        std::size_t size = 1;
        for (std::size_t i = 0; i < n_; ++i) {
            stride_[i] = size;
            size *= maxdeg_[i] + 1;
        }
        table_.assign(size, Interval{0.0});
        seen_.assign(size, false);
        for (std::size_t i = 0; i < n_; ++i) used_.push_back(maxdeg_[i] > 0);
        affine_ = p.degree() <= 1;
    }

    Interval node(const IntervalBox& box, int depth)
    {
        Interval own = p_.evaluate(box.dims());
        // the natural extension is already exact for affine polynomials
        if (affine_) return own;
        own = intersect(own, centered(box));
        if (depth <= 0) return own;
        std::size_t dim = n_;
        for (std::size_t i = 0; i < n_; ++i) {
            if (used_[i] && (dim == n_ || box[i].width() > box[dim].width())) dim = i;
        }
        if (dim == n_ || box[dim].width() <= 0.0) return own;
        auto [left, right] = box.bisect(dim);
        const Interval children = hull(node(left, depth - 1), node(right, depth - 1));
        return intersect(own, children);
    }

private:
    // p(c + y) over y in [lo - c, hi - c], with interval coefficients.
    Interval centered(const IntervalBox& box)
    {
        std::vector<std::vector<Interval>> cpow(n_), opow(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const double c = box[i].mid();
            const Interval off = hull(Interval{box[i].lo} - Interval{c}, Interval{box[i].hi} - Interval{c});
            cpow[i] = powers(Interval{c}, maxdeg_[i]);
            opow[i] = powers(off, maxdeg_[i]);
        }

        touched_.clear();
        std::vector<unsigned> k(n_);
        for (const auto& t : p_.terms()) {
            // enumerate 0 <= k_i <= e_i
            std::fill(k.begin(), k.end(), 0U);
            while (true) {
                Interval c{t.coef};
                std::size_t index = 0;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (t.exps[i] == 0) continue;
                    index += k[i] * stride_[i];
                    c *= Interval{binomial(t.exps[i], k[i])} * cpow[i][t.exps[i] - k[i]];
                }
                if (!seen_[index]) {
                    seen_[index] = true;
                    table_[index] = c;
                    touched_.push_back(index);
                } else {
                    table_[index] += c;
                }

                std::size_t i = 0;
                while (i < n_ && k[i] == t.exps[i]) {
                    k[i] = 0;
                    ++i;
                }
                if (i == n_) break;
                ++k[i];
            }
        }

        Interval sum{0.0};
        for (std::size_t index : touched_) {
            Interval m = table_[index];
            for (std::size_t i = 0; i < n_; ++i) {
                const std::size_t e = (index / stride_[i]) % (maxdeg_[i] + 1);
                if (e > 0) m *= opow[i][e];
            }
            sum += m;
            seen_[index] = false;
        }
        return sum;
    }

    const Polynomial& p_;
    std::size_t n_;
    std::vector<unsigned> maxdeg_;
    std::vector<std::size_t> stride_;
    std::vector<bool> used_;
    bool affine_ = false;
    std::vector<Interval> table_;
    std::vector<bool> seen_;
    std::vector<std::size_t> touched_;
};

} // namespace

Interval box_bound(const Polynomial& p, const IntervalBox& box, int depth)
{
    if (box.size() != p.variables().size()) {
        throw ValidationError("box_bound: box has " + std::to_string(box.size()) + " dimensions, polynomial has " +
                              std::to_string(p.variables().size()) + " variables");
    }
    if (p.is_constant()) return p.evaluate(box.dims());
    Bounder b(p);
    return b.node(box, depth);
}

} // namespace bcsimplex
