#include "bcsimplex/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bcsimplex/certify.hpp"
#include "bcsimplex/error.hpp"

namespace bcsimplex {

namespace {

using nlohmann::json;

template <class T>
T field(const json& j, const char* key)
{
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("experiment: field '") + key + "' has the wrong type");
    }
}

std::string resolve_path(const std::string& p, const std::filesystem::path& base)
{
    if (p.empty() || base.empty()) return p;
    const std::filesystem::path path(p);
    if (path.is_absolute()) return p;
    // builtin ids stay as they are
    if (is_builtin(p)) return p;
    return (base / path).lexically_normal().string();
}

} // namespace

ExperimentSpec parse_experiment(std::string_view json_text, const std::filesystem::path& base)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("experiment: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("experiment: expected a JSON object");

    static const std::set<std::string> known{"model", "params", "artifact", "bac", "order", "strategy", "ac", "bc", "runs", "init_box",
                                             "horizon", "shield", "twins", "m", "seed", "substeps", "epsilon", "workers"};
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) throw ValidationError("experiment: unknown field '" + k + "'");
    }

    ExperimentSpec s;
    if (j.contains("model")) s.model = resolve_path(field<std::string>(j, "model"), base);
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw ValidationError("experiment: 'params' must be an object");
        for (const auto& [k, v] : j["params"].items()) {
            if (!v.is_number()) throw ValidationError("experiment: parameter '" + k + "' must be a number");
            s.params[k] = v.get<double>();
        }
    }
    if (j.contains("artifact")) s.artifact = resolve_path(field<std::string>(j, "artifact"), base);
    if (j.contains("bac")) s.bac = resolve_path(field<std::string>(j, "bac"), base);
    if (j.contains("order")) s.order = field<int>(j, "order");
    if (j.contains("strategy")) s.strategy = field<std::string>(j, "strategy");
    (void)parse_strategy(s.strategy);
    if (j.contains("ac")) s.ac = field<std::string>(j, "ac");
    if (j.contains("bc")) s.bc = field<std::string>(j, "bc");
    if (j.contains("runs")) {
        const auto r = field<std::int64_t>(j, "runs");
        if (r < 1) throw ValidationError("experiment: 'runs' must be at least 1");
        s.runs = static_cast<std::size_t>(r);
    }
    if (j.contains("init_box")) {
        if (!j["init_box"].is_object()) throw ValidationError("experiment: 'init_box' must map state names to [lo, hi]");
        for (const auto& [k, v] : j["init_box"].items()) {
            if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
                throw ValidationError("experiment: init_box entry '" + k + "' must be [lo, hi]");
            }
            const double lo = v[0].get<double>();
            const double hi = v[1].get<double>();
            if (!(lo <= hi)) throw ValidationError("experiment: init_box entry '" + k + "' has lo > hi");
            s.init_box[k] = Interval(lo, hi);
        }
    }
    if (j.contains("horizon")) s.horizon = field<double>(j, "horizon");
    if (!(s.horizon > 0.0)) throw ValidationError("experiment: 'horizon' must be positive");
    if (j.contains("shield")) s.shield = field<bool>(j, "shield");
    if (j.contains("twins")) s.twins = field<bool>(j, "twins");
    if (j.contains("m")) s.m = field<int>(j, "m");
    if (s.m && *s.m < 2) throw ValidationError("experiment: 'm' must be at least 2");
    if (j.contains("seed")) s.seed = field<std::uint64_t>(j, "seed");
    if (j.contains("substeps")) s.substeps = field<int>(j, "substeps");
    if (s.substeps < 1) throw ValidationError("experiment: 'substeps' must be at least 1");
    if (j.contains("epsilon")) s.epsilon = field<double>(j, "epsilon");
    if (!(s.epsilon >= 0.0)) throw ValidationError("experiment: 'epsilon' must be non-negative");
    if (j.contains("workers")) s.workers = field<unsigned>(j, "workers");
    return s;
}

ExperimentSpec load_experiment(const std::filesystem::path& path)
{
    return parse_experiment(read_file(path), path.parent_path());
}

Convergence convergence(std::span<const double> output, double ref, double eps, double eta)
{
    Convergence c;
    if (output.empty()) return c;
    auto in_band = [&](double y) { return std::abs(y - ref) <= eps; };

    std::size_t entry = output.size();
    for (std::size_t k = 0; k < output.size(); ++k) {
        if (in_band(output[k])) {
            entry = k;
            break;
        }
    }
    if (entry == output.size()) return c;
    c.entry = static_cast<double>(entry) * eta;

    std::size_t settled = output.size();
    while (settled > 0 && in_band(output[settled - 1])) --settled;
    if (settled == output.size()) return c; // out of band at the end
    c.converged = true;
    c.settled = static_cast<double>(settled) * eta;

    double sum = 0.0;
    for (std::size_t k = entry; k < output.size(); ++k) sum += std::abs(output[k] - ref);
    c.delta = sum / static_cast<double>(output.size() - entry);
    return c;
}

Stat stat_of(std::span<const double> values)
{
    Stat s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

std::pair<DynSystem, SwitchingArtifact> resolve_experiment(const ExperimentSpec& spec)
{
    DynSystem sys = load_model(spec.model, spec.params);

    SwitchingArtifact art;
    if (!spec.artifact.empty()) {
        art = load_artifact(spec.artifact);
    } else {
        std::string text;
        if (!spec.bac.empty()) {
            text = read_file(spec.bac);
        } else if (auto b = is_builtin(spec.model) ? builtin_bac_source(spec.model) : std::nullopt) {
            text = *b;
        } else {
            throw ValidationError("experiment: no artifact given and model '" + spec.model + "' ships no certificate");
        }
        DeriveOptions o;
        o.n = spec.order;
        o.m = spec.m.value_or(o.m);
        o.strategy = parse_strategy(spec.strategy);
        art = derive_artifact(sys, parse_bac(text, sys), o).artifact;
    }
    return {std::move(sys), std::move(art)};
}

namespace {

std::vector<double> monitored(const DynSystem& sys, const RunRecord& rec)
{
    std::vector<double> y;
    if (sys.reference.empty()) return y;
    const std::size_t i = sys.reference.front().state;
    y.reserve(rec.rows.size() + 1);
    for (const auto& r : rec.rows) y.push_back(r.x[i]);
    y.push_back(rec.final_state[i]);
    return y;
}

// Initial-state sampler: the model with the experiment's box overrides. The
// overrides stay out of the system itself so the model hash is unchanged.
DynSystem sampler_for(const ExperimentSpec& spec, const DynSystem& sys)
{
    DynSystem s = sys;
    for (const auto& [name, box] : spec.init_box) {
        const std::size_t i = s.state_index(name);
        s.init[i].is_box = true;
        s.init[i].box = box;
        s.init[i].value = nullptr;
    }
    return s;
}

RunOutcome one_run(const ExperimentSpec& spec, const DynSystem& sys, const DynSystem& sampler, const SwitchingArtifact& art,
                   std::size_t index)
{
    RunOutcome out;
    UniformStream uniform(spec.seed + index);
    out.x0 = sampler.sample_initial([&] { return uniform(); });

    SimOptions so;
    so.horizon = spec.horizon;
    so.shield = spec.shield;
    so.substeps = spec.substeps;
    {
        auto ac = make_controller(spec.ac, sys);
        auto bc = make_controller(spec.bc, sys);
        out.shielded = simulate_run(sys, art, *ac, *bc, out.x0, so);
    }
    if (spec.twins) {
        auto ac = make_controller(spec.ac, sys);
        auto bc = make_controller(spec.bc, sys);
        so.shield = false;
        out.twin = simulate_run(sys, art, *ac, *bc, out.x0, so);
    }
    if (!sys.reference.empty() && !out.shielded.violation) {
        const auto y = monitored(sys, out.shielded);
        out.conv = convergence(y, sys.reference.front().value, spec.epsilon, art.eta);
    }
    return out;
}

} // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const DynSystem& sys, const SwitchingArtifact& art_in)
{
    require_matching(sys, art_in);
    ExperimentResult result;
    result.spec = spec;
    result.artifact = art_in;
    if (spec.m) result.artifact.m = *spec.m;
    const SwitchingArtifact& art = result.artifact;

    const DynSystem sampler = sampler_for(spec, sys);
    // fail fast on bad controller specs before spawning workers
    (void)make_controller(spec.ac, sys);
    (void)make_controller(spec.bc, sys);

    result.runs.resize(spec.runs);
    unsigned workers = spec.workers != 0 ? spec.workers : std::max(1U, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, spec.runs));

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= spec.runs) return;
            try {
                result.runs[i] = one_run(spec, sys, sampler, art, i);
            } catch (...) {
                const std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next.store(spec.runs);
                return;
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (failure) std::rethrow_exception(failure);

    result.summary = summarize(result.runs, art.eta);
    if (!sys.reference.empty()) {
        std::vector<double> at_switch;
        const std::size_t i = sys.reference.front().state;
        for (const auto& r : result.runs) {
            if (r.shielded.first_forward) at_switch.push_back(r.shielded.rows[*r.shielded.first_forward].x[i]);
        }
        result.summary.output_at_switch = stat_of(at_switch);
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentSpec& spec)
{
    const auto [sys, art] = resolve_experiment(spec);
    return run_experiment(spec, sys, art);
}

MetricsSummary summarize(std::span<const RunOutcome> runs, double /*eta*/)
{
    MetricsSummary s;
    s.runs = runs.size();
    std::vector<double> ct, settled, delta, to_forward, fwd_rev, sw_viol;
    std::size_t converged = 0;
    for (const auto& r : runs) {
        const RunRecord& rec = r.shielded;
        if (r.conv.converged) {
            ++converged;
            ct.push_back(*r.conv.entry);
            settled.push_back(*r.conv.settled);
            delta.push_back(r.conv.delta);
        }
        if (rec.violation) ++s.violations;
        if (r.twin && r.twin->violation) ++s.twin_violations;
        s.timeouts += rec.timeouts;
        s.clamps += rec.clamps;
        if (rec.first_forward) {
            ++s.runs_with_switch;
            const auto f = static_cast<double>(*rec.first_forward);
            to_forward.push_back(f);
            if (rec.first_reverse_after_forward) fwd_rev.push_back(static_cast<double>(*rec.first_reverse_after_forward) - f);
            if (r.twin && r.twin->violation) sw_viol.push_back(static_cast<double>(r.twin->violation->period + 1) - f);
        }
    }
    s.cr = s.runs == 0 ? 0.0 : 100.0 * static_cast<double>(converged) / static_cast<double>(s.runs);
    s.ct = stat_of(ct);
    s.settled = stat_of(settled);
    s.delta = stat_of(delta);
    s.steps_to_forward = stat_of(to_forward);
    s.forward_to_reverse = stat_of(fwd_rev);
    s.switch_to_violation = stat_of(sw_viol);
    return s;
}

namespace {

json stat_json(const Stat& s)
{
    json j = json::object();
    j["count"] = s.count;
    if (s.count == 0) {
        j["mean"] = nullptr;
        j["stddev"] = nullptr;
    } else {
        j["mean"] = s.mean;
        j["stddev"] = s.stddev;
    }
    return j;
}

std::string stat_text(const Stat& s, const char* unit)
{
    if (s.count == 0) return "n/a";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.6g%s (sd %.3g, n = %zu)", s.mean, unit, s.stddev, s.count);
    return buf;
}

} // namespace

std::string summary_json(const MetricsSummary& s)
{
    // nlohmann sorts object keys, so the output is stable
    json j;
    j["runs"] = s.runs;
    j["cr"] = s.cr;
    j["ct"] = stat_json(s.ct);
    j["settled"] = stat_json(s.settled);
    j["delta"] = stat_json(s.delta);
    j["violations"] = s.violations;
    j["twin_violations"] = s.twin_violations;
    j["runs_with_switch"] = s.runs_with_switch;
    j["steps_to_forward"] = stat_json(s.steps_to_forward);
    j["forward_to_reverse"] = stat_json(s.forward_to_reverse);
    j["switch_to_violation"] = stat_json(s.switch_to_violation);
    j["output_at_switch"] = stat_json(s.output_at_switch);
    j["timeouts"] = s.timeouts;
    j["clamps"] = s.clamps;
    return j.dump(2) + "\n";
}

std::string summary_text(const MetricsSummary& s, double eta)
{
    std::ostringstream o;
    auto periods = [&](const Stat& st) {
        if (st.count == 0) return std::string("n/a");
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.4g periods = %.4g s (sd %.3g, n = %zu)", st.mean, st.mean * eta, st.stddev, st.count);
        return std::string(buf);
    };
    o << "runs                  " << s.runs << "\n";
    o << "violations (shielded) " << s.violations << "\n";
    o << "violations (twins)    " << s.twin_violations << "\n";
    o << "CR                    " << s.cr << " %\n";
    o << "CT (entry)            " << stat_text(s.ct, " s") << "\n";
    o << "settled time          " << stat_text(s.settled, " s") << "\n";
    o << "delta                 " << stat_text(s.delta, "") << "\n";
    o << "runs with a switch    " << s.runs_with_switch << "\n";
    o << "to forward switch     " << periods(s.steps_to_forward) << "\n";
    o << "forward to reverse    " << periods(s.forward_to_reverse) << "\n";
    o << "switch to violation   " << periods(s.switch_to_violation) << "\n";
    o << "output at switch      " << stat_text(s.output_at_switch, "") << "\n";
    if (s.timeouts != 0) o << "timeouts              " << s.timeouts << "\n";
    if (s.clamps != 0) o << "clamped actions       " << s.clamps << "\n";
    return o.str();
}

void write_experiment(const ExperimentResult& result, const DynSystem& sys, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw ValidationError("cannot write " + p.string());
        return f;
    };
    for (std::size_t i = 0; i < result.runs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "run_%03zu", i);
        {
            auto f = open(dir / (std::string(name) + ".csv"));
            write_csv(f, sys, result.runs[i].shielded);
        }
        if (result.runs[i].twin) {
            auto f = open(dir / (std::string(name) + "_twin.csv"));
            write_csv(f, sys, *result.runs[i].twin);
        }
    }
    auto f = open(dir / "summary.json");
    f << summary_json(result.summary);
}

double reward_eval(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u, double v, double v_ref,
                   double eps, double w)
{
    if (fsc_eval(art, x, u).fsc) return -1000.0;
    const double e = v - v_ref;
    if (std::abs(e) <= eps) return 100.0;
    return -w * e * e;
}

namespace {

struct Rollout {
    double margin = std::numeric_limits<double>::infinity(); ///< min safety margin seen
    std::optional<double> violation;                         ///< time of the first unsafe substep
};

Rollout rollout(const DynSystem& sys, Controller& ac, std::vector<double> x, const FalsifyOptions& opts)
{
    Rollout r;
    r.margin = sys.safety_margin(x);
    if (r.margin < 0.0) {
        r.violation = 0.0;
        return r;
    }
    const double eta = sys.eta;
    const auto periods = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opts.horizon / eta)));
    std::vector<double> held(sys.inputs.size());
    for (std::size_t j = 0; j < held.size(); ++j) held[j] = sys.controls[j].mid();
    for (std::size_t k = 0; k < periods && !r.violation; ++k) {
        const double t = static_cast<double>(k) * eta;
        const ActionResult a = ac.act(t, x);
        if (!a.timeout) held = a.u;
        int sub = 0;
        try {
            x = integrate_period(sys, x, held, eta, opts.substeps, [&](std::span<const double> xs) {
                ++sub;
                const double g = sys.safety_margin(xs);
                r.margin = std::min(r.margin, g);
                if (g < 0.0 && !r.violation) r.violation = t + eta * sub / opts.substeps;
            });
        } catch (const NumericalError&) {
            // a diverging trajectory has left every bounded safe set
            r.margin = -std::numeric_limits<double>::infinity();
            if (!r.violation) r.violation = t + eta * sub / opts.substeps;
        }
    }
    return r;
}

} // namespace

std::optional<Witness> falsify_controller(const DynSystem& sys, Controller& ac, const FalsifyOptions& opts)
{
    if (opts.budget == 0) return std::nullopt;
    if (!(sys.eta > 0.0)) throw ValidationError("falsify: the model has no positive period eta");
    if (opts.substeps < 1) throw ValidationError("falsify: substeps must be at least 1");

    UniformStream uniform(opts.seed);
    std::size_t used = 0;
    std::vector<double> best;
    double best_margin = std::numeric_limits<double>::infinity();

    auto evaluate = [&](const std::vector<double>& x0) -> std::optional<Witness> {
        ++used;
        const Rollout r = rollout(sys, ac, x0, opts);
        if (r.violation) return Witness{x0, *r.violation, used};
        if (best.empty() || r.margin < best_margin) {
            best = x0;
            best_margin = r.margin;
        }
        return std::nullopt;
    };

    // the dimensions the search may move
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < sys.states.size(); ++i) {
        if (sys.init[i].is_box && !sys.init[i].box.is_point()) free.push_back(i);
    }

    const std::size_t starts = free.empty() ? 1 : std::max<std::size_t>(1, opts.budget / 4);
    for (std::size_t s = 0; s < starts && used < opts.budget; ++s) {
        if (auto w = evaluate(sys.sample_initial([&] { return uniform(); }))) return w;
    }
    if (free.empty()) return std::nullopt;

    std::vector<double> step(sys.states.size(), 0.0);
    for (std::size_t i : free) step[i] = 0.25 * sys.init[i].box.width();
    while (used < opts.budget) {
        bool improved = false;
        for (std::size_t i : free) {
            for (double dir : {-1.0, 1.0}) {
                if (used >= opts.budget) return std::nullopt;
                std::vector<double> cand = best;
                const Interval& b = sys.init[i].box;
                cand[i] = std::clamp(cand[i] + dir * step[i], b.lo, b.hi);
                if (cand[i] == best[i]) continue;
                sys.complete_initial(cand);
                const double before = best_margin;
                if (auto w = evaluate(cand)) return w;
                if (best_margin < before) improved = true;
            }
        }
        if (!improved) {
            bool alive = false;
            for (std::size_t i : free) {
                step[i] *= 0.5;
                alive = alive || step[i] > 1e-12 * std::max(1.0, sys.init[i].box.mag());
            }
            if (!alive) {
                // converged to a local minimum: restart from a random point
                std::vector<double> x0 = sys.sample_initial([&] { return uniform(); });
                ++used;
                const Rollout r = rollout(sys, ac, x0, opts);
                if (r.violation) return Witness{x0, *r.violation, used};
                best = std::move(x0);
                best_margin = r.margin;
                for (std::size_t i : free) step[i] = 0.25 * sys.init[i].box.width();
            }
        }
    }
    return std::nullopt;
}

} // namespace bcsimplex
