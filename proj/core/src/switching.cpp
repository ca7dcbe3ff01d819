#include "bcsimplex/switching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "bcsimplex/error.hpp"
#include "bcsimplex/expr.hpp"
#include "bcsimplex/model.hpp"

namespace bcsimplex {

std::string to_string(Strategy s) { return s == Strategy::PerAction ? "per-action" : "global"; }

Strategy parse_strategy(std::string_view text)
{
    if (text == "per-action") return Strategy::PerAction;
    if (text == "global") return Strategy::Global;
    throw ValidationError("unknown strategy '" + std::string(text) + "' (expected per-action or global)");
}

std::vector<std::string> SwitchingArtifact::variables() const
{
    std::vector<std::string> v = states;
    v.insert(v.end(), inputs.begin(), inputs.end());
    return v;
}

double SwitchingArtifact::h(std::span<const double> x) const
{
    std::vector<double> xu(x.begin(), x.end());
    xu.resize(states.size() + inputs.size(), 0.0);
    return chain.front().evaluate(xu);
}

bool operator==(const SwitchingArtifact& a, const SwitchingArtifact& b)
{
    return a.states == b.states && a.inputs == b.inputs && a.n == b.n && a.eta == b.eta && a.m == b.m &&
           a.strategy == b.strategy && a.depth == b.depth && a.model_hash == b.model_hash && a.chain == b.chain &&
           a.dynamics == b.dynamics && a.baseline == b.baseline && a.admissible == b.admissible && a.controls == b.controls &&
           a.unsafe == b.unsafe && a.gamma == b.gamma && a.lambda_global == b.lambda_global &&
           a.mu_dec_global == b.mu_dec_global && a.mu_inc_global == b.mu_inc_global;
}

std::vector<Polynomial> taylor_chain(const Polynomial& h, const DynSystem& sys, int n)
{
    if (n < 1) throw ValidationError("Taylor order n must be at least 1");
    const auto vars = sys.variables();
    std::vector<Polynomial> chain{h.with_variables(vars)};
    for (int i = 0; i <= n; ++i) chain.push_back(lie_derivative(chain.back(), sys.states, sys.rhs).with_variables(vars));
    return chain;
}

namespace {

// eta^(n+1) / (n+1)!, rounded up.
double remainder_scale(double eta, int n)
{
    const double num = detail::pow_up(eta, static_cast<unsigned>(n + 1));
    double fact = 1.0;
    for (int k = 2; k <= n + 1; ++k) fact *= k;
    double q = num / fact;
    if (std::fma(q, fact, -num) < 0.0) q = round_up(q);
    return q;
}

std::map<std::string, double> bind_inputs(const SwitchingArtifact& art, std::span<const double> u)
{
    if (u.size() != art.inputs.size()) {
        throw ValidationError("action has " + std::to_string(u.size()) + " components, expected " + std::to_string(art.inputs.size()));
    }
    std::map<std::string, double> b;
    for (std::size_t j = 0; j < u.size(); ++j) {
        if (!art.controls[j].contains(u[j])) {
            throw ValidationError("action component " + art.inputs[j] + " = " + std::to_string(u[j]) + " is outside the control set");
        }
        b[art.inputs[j]] = u[j];
    }
    return b;
}

Interval enclose(const SwitchingArtifact& art, const Polynomial& p, std::optional<std::span<const double>> u)
{
    if (u) return box_bound(p.substitute(bind_inputs(art, *u)).with_variables(art.states), art.admissible, art.depth);
    return box_bound(p, art.admissible.concat(art.controls), art.depth);
}

bool depends_on_inputs(const SwitchingArtifact& art, const Polynomial& p)
{
    return std::any_of(art.inputs.begin(), art.inputs.end(), [&](const std::string& u) { return p.depends_on(u); });
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

double taylor_predict(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u)
{
    std::vector<double> xu(x.begin(), x.end());
    xu.insert(xu.end(), u.begin(), u.end());
    double sum = 0.0;
    double scale = 1.0;
    for (int i = 0; i <= art.n; ++i) {
        sum += art.chain[static_cast<std::size_t>(i)].evaluate(xu) * scale;
        scale *= art.eta / (i + 1);
    }
    return sum;
}

double lambda_bound(const SwitchingArtifact& art, std::optional<std::span<const double>> u)
{
    const Interval b = enclose(art, art.chain.back(), u);
    return mul_up(b.mag(), remainder_scale(art.eta, art.n));
}

MuBounds mu_bounds(const SwitchingArtifact& art, std::optional<std::span<const double>> u)
{
    MuBounds mu;
    for (const auto& f : art.dynamics) {
        const Interval rate = enclose(art, f, u);
        mu.dec.push_back(std::max(0.0, mul_up(art.eta, -rate.lo)));
        mu.inc.push_back(std::max(0.0, mul_up(art.eta, rate.hi)));
    }
    return mu;
}

std::optional<IntervalBox> restricted_region(const IntervalBox& admissible, const MuBounds& mu, double multiplier)
{
    std::vector<Interval> dims;
    for (std::size_t i = 0; i < admissible.size(); ++i) {
        const double lo = add_up(admissible[i].lo, mul_up(multiplier, mu.dec[i]));
        const double hi = add_down(admissible[i].hi, -mul_up(multiplier, mu.inc[i]));
        if (!(lo < hi)) return std::nullopt;
        dims.emplace_back(lo, hi);
    }
    return IntervalBox(std::move(dims));
}

ActionBounds action_bounds(const SwitchingArtifact& art, std::span<const double> u)
{
    ActionBounds b;
    if (art.strategy == Strategy::Global) {
        b.lambda = art.lambda_global;
        b.mu = {art.mu_dec_global, art.mu_inc_global};
    } else {
        (void)bind_inputs(art, u);
        b.lambda = depends_on_inputs(art, art.chain.back()) ? std::min(lambda_bound(art, u), art.lambda_global) : art.lambda_global;
        b.mu = {art.mu_dec_global, art.mu_inc_global};
        // states whose rate ignores u keep the global bound
        for (std::size_t i = 0; i < art.dynamics.size(); ++i) {
            if (!depends_on_inputs(art, art.dynamics[i])) continue;
            const Interval rate = enclose(art, art.dynamics[i], u);
            b.mu.dec[i] = std::min(std::max(0.0, mul_up(art.eta, -rate.lo)), art.mu_dec_global[i]);
            b.mu.inc[i] = std::min(std::max(0.0, mul_up(art.eta, rate.hi)), art.mu_inc_global[i]);
        }
    }
    b.region = restricted_region(art.admissible, b.mu, 1.0);
    return b;
}

const ActionBounds& ActionBoundCache::get(std::span<const double> u)
{
    if (!value_ || !std::equal(u.begin(), u.end(), key_.begin(), key_.end())) {
        value_ = action_bounds(*art_, u);
        key_.assign(u.begin(), u.end());
        ++misses_;
    }
    return *value_;
}

DeriveResult derive_artifact(const DynSystem& sys, const BarrierCertificate& bc, const DeriveOptions& opts)
{
    if (opts.n < 1) throw ValidationError("Taylor order n must be at least 1");
    if (opts.m < 2) throw ValidationError("reverse-switch multiplier m must be an integer greater than 1");
    if (opts.depth < 0) throw ValidationError("bisection depth must be non-negative");
    const double eta = opts.eta.value_or(sys.eta);
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ValidationError("control period eta must be positive");

    DeriveResult out;
    if (sys.baseline.empty() && !sys.inputs.empty()) {
        if (!opts.force) throw ValidationError("system has no baseline law to certify the closed loop against (use --force)");
        out.warnings.push_back("no baseline law: certificate not checked");
    } else {
        out.report = check_bac(sys, bc, sys.baseline, {opts.budget, opts.depth});
        if (out.report.verdict == Verdict::Falsified) {
            if (!opts.force) throw ValidationError("barrier certificate falsified:\n" + describe(out.report, sys.states));
            out.warnings.push_back("barrier certificate falsified; continuing because of --force");
        } else if (out.report.margin && out.report.margin->lo < 0.0) {
            out.warnings.push_back("interval margin for the derivative clause is inconclusive: " + to_string(*out.report.margin));
        }
    }

    SwitchingArtifact& art = out.artifact;
    art.states = sys.states;
    art.inputs = sys.inputs;
    art.n = opts.n;
    art.eta = eta;
    art.m = opts.m;
    art.strategy = opts.strategy;
    art.depth = opts.depth;
    art.model_hash = model_hash(sys);
    art.chain = taylor_chain(bc.h, sys, opts.n);
    art.dynamics = sys.rhs;
    art.baseline = sys.baseline;
    art.admissible = sys.admissible;
    art.controls = sys.controls;
    art.unsafe = sys.unsafe;
    art.gamma = bc.gamma;
    art.lambda_global = lambda_bound(art, std::nullopt);
    const MuBounds mu = mu_bounds(art, std::nullopt);
    art.mu_dec_global = mu.dec;
    art.mu_inc_global = mu.inc;

    if (!restricted_region(art.admissible, mu, 1.0)) {
        throw ValidationError("restricted admissible region is empty under the global drift bounds: the system can cross A "
                              "within one period eta = " + fmt(eta) + "; shorten the period");
    }
    if (!restricted_region(art.admissible, mu, art.m)) {
        out.warnings.push_back("A_r,m is empty for m = " + std::to_string(art.m) + ": the reverse switch can never fire");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string quote(const std::string& s) { return nlohmann::json(s).dump(); }

std::string string_list(const std::vector<std::string>& v)
{
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + quote(v[i]);
    return out + "]";
}

std::string poly_list(const std::vector<Polynomial>& v, std::size_t from, const std::string& indent)
{
    if (from >= v.size()) return "[]";
    std::string out = "[\n";
    for (std::size_t i = from; i < v.size(); ++i) out += indent + "  " + quote(v[i].to_string()) + (i + 1 < v.size() ? ",\n" : "\n");
    return out + indent + "]";
}

std::string number_list(const std::vector<double>& v)
{
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
    return out + "]";
}

std::string box_list(const IntervalBox& b)
{
    std::string out = "[";
    for (std::size_t i = 0; i < b.size(); ++i) out += (i ? ", " : "") + ("[" + fmt(b[i].lo) + ", " + fmt(b[i].hi) + "]");
    return out + "]";
}

template <class T>
T field(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key)) throw ValidationError(std::string("artifact is missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("artifact field '") + key + "' has the wrong type: " + e.what());
    }
}

IntervalBox box_field(const nlohmann::json& j, const char* key)
{
    std::vector<Interval> dims;
    for (const auto& pair : field<std::vector<std::vector<double>>>(j, key)) {
        if (pair.size() != 2) throw ValidationError(std::string("artifact field '") + key + "' needs [lo, hi] pairs");
        dims.emplace_back(pair[0], pair[1]);
    }
    return IntervalBox(std::move(dims));
}

std::vector<Polynomial> poly_field(const nlohmann::json& j, const char* key, const std::vector<std::string>& vars)
{
    std::vector<Polynomial> out;
    for (const auto& text : field<std::vector<std::string>>(j, key)) out.push_back(parse_polynomial(text, vars));
    return out;
}

} // namespace

std::string serialize(const SwitchingArtifact& a)
{
    std::string s = "{\n";
    s += "  \"meta\": {\n";
    s += "    \"n\": " + std::to_string(a.n) + ",\n";
    s += "    \"eta\": " + fmt(a.eta) + ",\n";
    s += "    \"m\": " + std::to_string(a.m) + ",\n";
    s += "    \"strategy\": " + quote(to_string(a.strategy)) + ",\n";
    s += "    \"model_hash\": " + quote(a.model_hash) + ",\n";
    s += "    \"depth\": " + std::to_string(a.depth) + ",\n";
    s += "    \"states\": " + string_list(a.states) + ",\n";
    s += "    \"inputs\": " + string_list(a.inputs) + ",\n";
    s += "    \"controls\": " + box_list(a.controls) + ",\n";
    s += "    \"dynamics\": " + poly_list(a.dynamics, 0, "    ") + ",\n";
    s += "    \"baseline\": " + poly_list(a.baseline, 0, "    ") + "\n";
    s += "  },\n";
    s += "  \"h\": " + quote(a.chain.front().to_string()) + ",\n";
    s += "  \"lie\": " + poly_list(a.chain, 1, "  ") + ",\n";
    s += "  \"lambda_global\": " + fmt(a.lambda_global) + ",\n";
    s += "  \"mu_dec_global\": " + number_list(a.mu_dec_global) + ",\n";
    s += "  \"mu_inc_global\": " + number_list(a.mu_inc_global) + ",\n";
    s += "  \"admissible\": " + box_list(a.admissible) + ",\n";
    s += "  \"unsafe\": " + poly_list(a.unsafe, 0, "  ") + ",\n";
    s += "  \"gamma\": " + fmt(a.gamma) + "\n";
    s += "}\n";
    return s;
}

SwitchingArtifact deserialize(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("artifact is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("meta")) throw ValidationError("artifact is missing field 'meta'");
    const auto& meta = j["meta"];

    SwitchingArtifact a;
    a.n = field<int>(meta, "n");
    a.eta = field<double>(meta, "eta");
    a.m = field<int>(meta, "m");
    a.strategy = parse_strategy(field<std::string>(meta, "strategy"));
    a.model_hash = field<std::string>(meta, "model_hash");
    a.depth = field<int>(meta, "depth");
    a.states = field<std::vector<std::string>>(meta, "states");
    a.inputs = field<std::vector<std::string>>(meta, "inputs");
    a.controls = box_field(meta, "controls");
    const auto vars = a.variables();
    a.dynamics = poly_field(meta, "dynamics", vars);
    a.baseline = poly_field(meta, "baseline", a.states);

    a.chain.push_back(parse_polynomial(field<std::string>(j, "h"), vars));
    for (auto& p : poly_field(j, "lie", vars)) a.chain.push_back(std::move(p));
    a.lambda_global = field<double>(j, "lambda_global");
    a.mu_dec_global = field<std::vector<double>>(j, "mu_dec_global");
    a.mu_inc_global = field<std::vector<double>>(j, "mu_inc_global");
    a.admissible = box_field(j, "admissible");
    a.unsafe = poly_field(j, "unsafe", a.states);
    a.gamma = field<double>(j, "gamma");

    if (a.n < 1 || a.m < 2 || !(a.eta > 0.0)) throw ValidationError("artifact has invalid n, m or eta");
    if (a.chain.size() != static_cast<std::size_t>(a.n) + 2) throw ValidationError("artifact 'lie' must hold n + 1 derivatives");
    if (a.dynamics.size() != a.states.size() || a.admissible.size() != a.states.size() || a.controls.size() != a.inputs.size() ||
        a.mu_dec_global.size() != a.states.size() || a.mu_inc_global.size() != a.states.size()) {
        throw ValidationError("artifact dimensions are inconsistent");
    }
    if (!(a.lambda_global >= 0.0) || std::any_of(a.mu_dec_global.begin(), a.mu_dec_global.end(), [](double v) { return !(v >= 0.0); }) ||
        std::any_of(a.mu_inc_global.begin(), a.mu_inc_global.end(), [](double v) { return !(v >= 0.0); })) {
        throw ValidationError("artifact bounds must be non-negative");
    }
    for (std::size_t i = 0; i + 1 < a.chain.size(); ++i) {
        if (lie_derivative(a.chain[i], a.states, a.dynamics).with_variables(vars) != a.chain[i + 1]) {
            throw ValidationError("artifact Lie derivative " + std::to_string(i + 1) + " does not match the dynamics");
        }
    }
    return a;
}

SwitchingArtifact load_artifact(const std::string& path) { return deserialize(read_file(path)); }

} // namespace bcsimplex
