#include <algorithm>
#include <set>

#include "bcsimplex/dyn_system.hpp"
#include "bcsimplex/error.hpp"
#include "bcsimplex/expr.hpp"

namespace bcsimplex {

namespace {

struct TrigArg {
    ExprPtr source; // argument expression with parameters bound
    Polynomial poly;
    std::string sin_name;
    std::string cos_name;
};

void collect_trig(const ExprPtr& e, std::vector<ExprPtr>& out)
{
    if (e->kind == ExprKind::Sin || e->kind == ExprKind::Cos) {
        out.push_back(e->lhs);
        return;
    }
    if (e->lhs) collect_trig(e->lhs, out);
    if (e->rhs) collect_trig(e->rhs, out);
}

} // namespace

DynSystem recast(const SystemDecl& decl)
{
    const auto params = decl.param_values();

    // Distinct trig arguments in order of first appearance.
    std::vector<ExprPtr> raw_args;
    for (const auto& d : decl.derivatives) collect_trig(d, raw_args);
    for (const auto& b : decl.baseline) collect_trig(b.value, raw_args);
    for (const auto& g : decl.unsafe) collect_trig(g, raw_args);

    std::vector<TrigArg> args;
    for (const auto& raw : raw_args) {
        Polynomial p = to_polynomial(*raw, decl.states, params);
        const bool seen = std::any_of(args.begin(), args.end(), [&](const TrigArg& a) { return a.poly == p || a.poly == -p; });
        if (!seen) args.push_back({bind_constants(raw, params), std::move(p), {}, {}});
    }

    std::set<std::string> taken(decl.states.begin(), decl.states.end());
    taken.insert(decl.inputs.begin(), decl.inputs.end());
    for (const auto& p : decl.params) taken.insert(p.name);

    DynSystem sys;
    sys.name = decl.name;
    sys.states = decl.states;
    sys.inputs = decl.inputs;
    for (std::size_t k = 0; k < args.size(); ++k) {
        auto& a = args[k];
        std::string suffix = std::to_string(k);
        if (a.poly.terms().size() == 1 && a.poly.terms()[0].coef == 1.0 && a.poly.degree() == 1) {
            const auto& exps = a.poly.terms()[0].exps;
            suffix = decl.states[static_cast<std::size_t>(std::find(exps.begin(), exps.end(), 1U) - exps.begin())];
        }
        a.sin_name = "sin_" + suffix;
        a.cos_name = "cos_" + suffix;
        for (const auto* n : {&a.sin_name, &a.cos_name}) {
            if (!taken.insert(*n).second) throw ValidationError("auxiliary state name '" + *n + "' collides with an existing name");
        }
        sys.states.push_back(a.sin_name);
        sys.states.push_back(a.cos_name);
    }
    const auto vars = sys.variables();

    TrigSubstitution subst;
    for (const auto& a : args) {
        const Polynomial arg = a.poly.with_variables(vars);
        const Polynomial s = Polynomial::variable(vars, a.sin_name);
        const Polynomial c = Polynomial::variable(vars, a.cos_name);
        subst[trig_key(ExprKind::Sin, arg)] = s;
        subst[trig_key(ExprKind::Cos, arg)] = c;
        subst[trig_key(ExprKind::Sin, -arg)] = -s;
        subst[trig_key(ExprKind::Cos, -arg)] = c;
    }

    for (const auto& d : decl.derivatives) sys.rhs.push_back(to_polynomial(*d, vars, params, &subst));
    const std::vector<std::string> original(decl.states.begin(), decl.states.end());
    for (const auto& a : args) {
        const Polynomial arg = a.poly.with_variables(vars);
        const Polynomial adot = lie_derivative(arg, original, std::span<const Polynomial>(sys.rhs.data(), original.size())).with_variables(vars);
        sys.rhs.push_back(Polynomial::variable(vars, a.cos_name) * adot);
        sys.rhs.push_back(-(Polynomial::variable(vars, a.sin_name) * adot));
    }

    auto constant = [&params](const ExprPtr& e) {
        return evaluate(*e, [&params](const std::string& n) { return params.at(n); });
    };

    std::vector<Interval> adm(sys.states.size(), Interval{-1.0, 1.0});
    for (const auto& b : decl.admissible) {
        auto it = std::find(sys.states.begin(), sys.states.end(), b.name);
        if (it == sys.states.end()) throw ValidationError("admissible bound for unknown state '" + b.name + "'");
        adm[static_cast<std::size_t>(it - sys.states.begin())] = Interval{constant(b.lo), constant(b.hi)};
    }
    sys.admissible = IntervalBox(std::move(adm));

    std::vector<Interval> ctl;
    for (const auto& b : decl.controls) ctl.emplace_back(constant(b.lo), constant(b.hi));
    sys.controls = IntervalBox(std::move(ctl));

    const auto state_vars = sys.states;
    for (const auto& g : decl.unsafe) sys.unsafe.push_back(to_polynomial(*g, state_vars, params, &subst));
    for (const auto& u : decl.inputs) {
        auto it = std::find_if(decl.baseline.begin(), decl.baseline.end(), [&](const AssignDecl& a) { return a.name == u; });
        if (it == decl.baseline.end()) {
            if (!decl.baseline.empty()) throw ValidationError("baseline law missing for input '" + u + "'");
            break;
        }
        sys.baseline.push_back(to_polynomial(*it->value, state_vars, params, &subst));
    }

    sys.init.resize(sys.states.size());
    for (std::size_t i = 0; i < sys.states.size(); ++i) {
        auto it = std::find_if(decl.init.begin(), decl.init.end(), [&](const InitDecl& d) { return d.name == sys.states[i]; });
        InitSpec& spec = sys.init[i];
        if (it != decl.init.end()) {
            spec.is_box = it->is_box;
            if (it->is_box) spec.box = Interval{constant(it->lo), constant(it->hi)};
            else spec.value = bind_constants(it->value, params);
        } else if (i < decl.states.size()) {
            const double mid = sys.admissible[i].mid();
            spec.box = Interval{mid, mid};
        } else {
            const auto& a = args[(i - decl.states.size()) / 2];
            spec.is_box = false;
            spec.value = (i - decl.states.size()) % 2 == 0 ? ast::sin(a.source) : ast::cos(a.source);
        }
    }

    for (const auto& r : decl.reference) sys.reference.push_back({sys.state_index(r.name), constant(r.value)});
    sys.params = params;
    auto eta = params.find("eta");
    sys.eta = eta == params.end() ? 0.01 : eta->second;

    for (std::size_t k = 0; k < args.size(); ++k) {
        sys.trig.push_back({sys.state_index(args[k].sin_name), sys.state_index(args[k].cos_name), args[k].poly.with_variables(state_vars)});
    }

    sys.validate();
    return sys;
}

} // namespace bcsimplex
