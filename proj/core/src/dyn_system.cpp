#include "bcsimplex/dyn_system.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "bcsimplex/error.hpp"

namespace bcsimplex {

std::vector<std::string> DynSystem::variables() const
{
    std::vector<std::string> v = states;
    v.insert(v.end(), inputs.begin(), inputs.end());
    return v;
}

std::size_t DynSystem::state_index(std::string_view n) const
{
    auto it = std::find(states.begin(), states.end(), n);
    if (it == states.end()) throw ValidationError("unknown state '" + std::string(n) + "'");
    return static_cast<std::size_t>(it - states.begin());
}

void DynSystem::evaluate_rhs(std::span<const double> x, std::span<const double> u, std::span<double> out) const
{
    std::vector<double> xu(x.begin(), x.end());
    xu.insert(xu.end(), u.begin(), u.end());
    for (std::size_t i = 0; i < rhs.size(); ++i) out[i] = rhs[i].evaluate(xu);
}

double DynSystem::safety_margin(std::span<const double> x) const
{
    double m = std::numeric_limits<double>::infinity();
    for (const auto& g : unsafe) m = std::min(m, g.evaluate(x));
    return m;
}

std::vector<double> DynSystem::baseline_action(std::span<const double> x) const
{
    if (baseline.empty()) throw ValidationError("system '" + name + "' has no baseline control law");
    std::vector<double> u;
    u.reserve(baseline.size());
    for (const auto& b : baseline) u.push_back(b.evaluate(x));
    return u;
}

std::vector<double> DynSystem::sample_initial(const std::function<double()>& uniform01) const
{
    std::vector<double> x(states.size(), 0.0);
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (!init[i].is_box) continue;
        const Interval& b = init[i].box;
        const double r = uniform01();
        x[i] = b.is_point() ? b.lo : b.lo + r * (b.hi - b.lo);
    }
    complete_initial(x);
    return x;
}

void DynSystem::complete_initial(std::vector<double>& x) const
{
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (init[i].is_box) continue;
        x[i] = evaluate(*init[i].value, [&](const std::string& n) { return x[state_index(n)]; });
    }
}

void DynSystem::validate() const
{
    auto fail = [this](const std::string& what) { throw ValidationError("system '" + name + "': " + what); };
    if (states.empty()) fail("no states");
    if (rhs.size() != states.size()) fail("derivative count does not match state count");
    const auto vars = variables();
    auto finite = [](const Polynomial& p) {
        return std::all_of(p.terms().begin(), p.terms().end(), [](const Polynomial::Term& t) { return std::isfinite(t.coef); });
    };
    for (const auto& f : rhs) {
        if (f.variables() != vars) fail("derivative polynomial over unexpected variables");
        if (!finite(f)) fail("non-finite coefficient in dynamics");
    }
    for (const auto& g : unsafe) {
        if (g.variables() != states) fail("unsafe polynomial must be over the states");
        if (!finite(g)) fail("non-finite coefficient in unsafe set");
    }
    if (!baseline.empty() && baseline.size() != inputs.size()) fail("baseline law must give one expression per input");
    for (const auto& b : baseline) {
        if (b.variables() != states) fail("baseline law must be over the states");
    }
    if (admissible.size() != states.size()) fail("admissible box dimension mismatch");
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (!(admissible[i].lo < admissible[i].hi)) fail("admissible bound for '" + states[i] + "' requires lo < hi");
    }
    if (controls.size() != inputs.size()) fail("control box dimension mismatch");
    if (!(eta > 0.0) || !std::isfinite(eta)) fail("control period eta must be positive");
    if (init.size() != states.size()) fail("initial-state specification size mismatch");
    for (const auto& r : reference) {
        if (r.state >= states.size()) fail("reference refers to an unknown state");
    }
}

bool operator==(const DynSystem& a, const DynSystem& b)
{
    return a.states == b.states && a.inputs == b.inputs && a.rhs == b.rhs && a.admissible == b.admissible &&
           a.controls == b.controls && a.unsafe == b.unsafe && a.baseline == b.baseline && a.init == b.init &&
           a.reference == b.reference && a.eta == b.eta;
}

namespace {

std::string num(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& v)
{
    std::string s;
    for (const auto& n : v) s += (s.empty() ? "" : " ") + n;
    return s;
}

} // namespace

std::string print_system(const DynSystem& sys)
{
    std::string out;
    auto line = [&out](const std::string& s) {
        out += s;
        out += '\n';
    };
    if (!sys.name.empty()) line("# " + sys.name);
    line("states " + join(sys.states));
    line("inputs " + join(sys.inputs));
    line("params");
    line("  eta = " + num(sys.eta));
    line("dynamics");
    for (std::size_t i = 0; i < sys.states.size(); ++i) line("  d" + sys.states[i] + "/dt = " + sys.rhs[i].to_string());
    line("admissible");
    for (std::size_t i = 0; i < sys.states.size(); ++i) {
        line("  " + sys.states[i] + " in [" + num(sys.admissible[i].lo) + ", " + num(sys.admissible[i].hi) + "]");
    }
    line("controls");
    for (std::size_t i = 0; i < sys.inputs.size(); ++i) {
        line("  " + sys.inputs[i] + " in [" + num(sys.controls[i].lo) + ", " + num(sys.controls[i].hi) + "]");
    }
    line("unsafe");
    for (const auto& g : sys.unsafe) line("  unsafe when " + g.to_string() + " < 0");
    line("init");
    for (std::size_t i = 0; i < sys.states.size(); ++i) {
        const auto& s = sys.init[i];
        if (s.is_box) line("  " + sys.states[i] + " in [" + num(s.box.lo) + ", " + num(s.box.hi) + "]");
        else line("  " + sys.states[i] + " = " + print(*s.value));
    }
    line("baseline");
    for (std::size_t i = 0; i < sys.baseline.size(); ++i) line("  " + sys.inputs[i] + " = " + sys.baseline[i].to_string());
    line("reference");
    for (const auto& r : sys.reference) line("  " + sys.states[r.state] + " = " + num(r.value));
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string model_hash(const DynSystem& sys)
{
    DynSystem anon = sys;
    anon.name.clear();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(print_system(anon))));
    return buf;
}

} // namespace bcsimplex
