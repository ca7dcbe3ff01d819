// bcsimplex command-line tool.
//
// Exit codes: 0 success, 1 runtime failure (numerical, transport, or a
// falsified certificate under `check`), 2 invalid input, 3 a safety
// violation in a shielded run.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bcsimplex/certify.hpp"
#include "bcsimplex/error.hpp"
#include "bcsimplex/harness.hpp"
#include "bcsimplex/model.hpp"
#include "bcsimplex/runtime.hpp"
#include "bcsimplex/switching.hpp"
#include "bcsimplex/wire.hpp"

using namespace bcsimplex;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kInvalid = 2;
constexpr int kUnsafe = 3;

struct Common {
    std::vector<std::string> params;
    ParamOverrides overrides() const
    {
        ParamOverrides o;
        for (const auto& p : params) o.insert(parse_override(p));
        return o;
    }
};

struct DeriveFlags {
    std::string bac;
    int order = 4;
    std::optional<double> eta;
    int m = 3;
    std::string strategy = "per-action";
    int depth = 6;
    std::size_t budget = 10000;
    bool force = false;

    void add(CLI::App& c, bool with_force)
    {
        c.add_option("--bac", bac, "barrier certificate file (default: the builtin model's)");
        c.add_option("--order,-n", order, "Taylor order n")->check(CLI::PositiveNumber);
        c.add_option("--eta", eta, "control period in seconds (default: the model's)");
        c.add_option("--m", m, "reverse-switch multiplier m");
        c.add_option("--strategy", strategy, "per-action | global");
        c.add_option("--depth", depth, "bisection depth for interval bounds");
        c.add_option("--budget", budget, "certificate check samples");
        if (with_force) c.add_flag("--force", force, "accept a falsified certificate");
    }

    DeriveOptions options() const
    {
        DeriveOptions o;
        o.n = order;
        o.eta = eta;
        o.m = m;
        o.strategy = parse_strategy(strategy);
        o.depth = depth;
        o.budget = budget;
        o.force = force;
        return o;
    }
};

BarrierCertificate certificate_for(const DynSystem& sys, const std::string& model, const std::string& bac)
{
    if (!bac.empty()) return load_bac(bac, sys);
    if (is_builtin(model)) {
        if (auto text = builtin_bac_source(model)) return parse_bac(*text, sys);
    }
    throw ValidationError("no certificate: pass --bac (model '" + model + "' ships none)");
}

SwitchingArtifact artifact_for(const DynSystem& sys, const std::string& model, const std::string& artifact, const DeriveFlags& d)
{
    if (!artifact.empty()) return load_artifact(artifact);
    auto r = derive_artifact(sys, certificate_for(sys, model, d.bac), d.options());
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    return std::move(r.artifact);
}

std::vector<double> parse_vector(const std::string& text, const char* what)
{
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError(std::string("bad ") + what + " component '" + item + "'");
        }
    }
    return v;
}

std::vector<double> initial_state(const DynSystem& sys, const std::string& x0, std::uint64_t seed)
{
    if (x0.empty()) {
        UniformStream u(seed);
        return sys.sample_initial([&] { return u(); });
    }
    std::vector<double> x = parse_vector(x0, "--x0");
    if (x.size() != sys.states.size()) {
        throw ValidationError("--x0 has " + std::to_string(x.size()) + " components, the model has " + std::to_string(sys.states.size()) +
                              " states");
    }
    return x;
}

// Writes to the file, or to stdout for "" and "-".
template <class F>
void emit(const std::string& path, F&& write)
{
    if (path.empty() || path == "-") {
        write(std::cout);
        std::cout.flush();
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + path);
    write(f);
}

void report_run(const RunRecord& rec)
{
    std::cerr << "periods " << rec.rows.size() << ", forward switches " << rec.forward_switches << ", reverse switches "
              << rec.reverse_switches;
    if (rec.timeouts) std::cerr << ", timeouts " << rec.timeouts;
    if (rec.clamps) std::cerr << ", clamped " << rec.clamps;
    std::cerr << "\n";
    if (rec.violation) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.6g", rec.violation->t);
        std::cerr << "VIOLATION at t = " << buf << " (period " << rec.violation->period << ")\n";
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Barrier-certificate switching conditions and Simplex runtime assurance"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "bcsimplex 0.1.0");
    Common common;
    app.add_option("--param", common.params, "override a model parameter, name=value (repeatable)");

    // derive
    auto* derive = app.add_subcommand("derive", "derive a switching artifact from a model and certificate");
    std::string d_model, d_out;
    DeriveFlags d_flags;
    derive->add_option("model", d_model, "builtin id or model file")->required();
    d_flags.add(*derive, true);
    derive->add_option("--out,-o", d_out, "artifact file (default: stdout)");

    // check
    auto* check = app.add_subcommand("check", "check the certificate conditions over the admissible box");
    std::string c_model, c_bac;
    std::size_t c_budget = 10000;
    int c_depth = 6;
    check->add_option("model", c_model, "builtin id or model file")->required();
    check->add_option("--bac", c_bac, "barrier certificate file (default: the builtin model's)");
    check->add_option("--budget", c_budget, "samples over the admissible box");
    check->add_option("--depth", c_depth, "bisection depth for the interval margin");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run one Simplex loop and write its trace");
    std::string s_model, s_artifact, s_ac = "baseline", s_bc = "baseline", s_x0, s_out;
    double s_horizon = 10.0;
    bool s_no_shield = false;
    int s_substeps = 8;
    std::uint64_t s_seed = 1;
    DeriveFlags s_flags;
    simulate->add_option("model", s_model, "builtin id or model file")->required();
    simulate->add_option("--artifact,-a", s_artifact, "artifact file (default: derive one)");
    simulate->add_option("--ac", s_ac, "advanced controller: baseline | constant:<u..> | affine:K=<rows>;b=<b>");
    simulate->add_option("--bc", s_bc, "baseline controller");
    simulate->add_option("--x0", s_x0, "initial state, comma separated (default: sampled with --seed)");
    simulate->add_option("--horizon", s_horizon, "seconds");
    simulate->add_flag("--no-shield", s_no_shield, "never switch to the baseline controller");
    simulate->add_option("--substeps", s_substeps, "integrator substeps per period")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", s_seed, "seed for the initial state");
    simulate->add_option("--out,-o", s_out, "trace CSV (default: stdout)");
    s_flags.add(*simulate, false);

    // experiment
    auto* experiment = app.add_subcommand("experiment", "run a batch experiment from a JSON spec");
    std::string e_spec, e_out;
    std::optional<std::uint64_t> e_seed;
    std::optional<int> e_m;
    std::optional<unsigned> e_workers;
    std::optional<std::size_t> e_runs;
    bool e_json = false;
    experiment->add_option("spec", e_spec, "experiment JSON file")->required();
    experiment->add_option("--out,-o", e_out, "directory for per-run CSVs and summary.json");
    experiment->add_option("--seed", e_seed, "override the spec's seed");
    experiment->add_option("--m", e_m, "override the spec's m");
    experiment->add_option("--workers", e_workers, "worker threads (0: all cores)");
    experiment->add_option("--runs", e_runs, "override the number of runs");
    experiment->add_flag("--json", e_json, "print the summary as JSON");

    // falsify
    auto* falsify = app.add_subcommand("falsify", "search for an initial state the unshielded controller drives unsafe");
    std::string f_model, f_ac;
    FalsifyOptions f_opts;
    falsify->add_option("model", f_model, "builtin id or model file")->required();
    falsify->add_option("--ac", f_ac, "controller under test")->required();
    falsify->add_option("--budget", f_opts.budget, "rollouts");
    falsify->add_option("--seed", f_opts.seed, "search seed");
    falsify->add_option("--horizon", f_opts.horizon, "seconds per rollout");
    falsify->add_option("--substeps", f_opts.substeps, "integrator substeps per period")->check(CLI::PositiveNumber);

    // serve
    auto* serve = app.add_subcommand("serve", "run the loop with an advanced controller connected over TCP");
    std::string v_model, v_artifact, v_listen = "127.0.0.1:0", v_x0, v_out, v_bc = "baseline";
    double v_horizon = 10.0, v_deadline = 0.0, v_accept = 30.0;
    bool v_fallback = false;
    int v_substeps = 8;
    std::uint64_t v_seed = 1;
    DeriveFlags v_flags;
    serve->add_option("model", v_model, "builtin id or model file")->required();
    serve->add_option("--artifact,-a", v_artifact, "artifact file (default: derive one)");
    serve->add_option("--listen", v_listen, "host:port (port 0 picks a free one)");
    serve->add_option("--bc", v_bc, "baseline controller");
    serve->add_option("--x0", v_x0, "initial state, comma separated (default: sampled with --seed)");
    serve->add_option("--seed", v_seed, "seed for the initial state");
    serve->add_option("--horizon", v_horizon, "seconds");
    serve->add_option("--substeps", v_substeps, "integrator substeps per period")->check(CLI::PositiveNumber);
    serve->add_option("--deadline", v_deadline, "reply deadline in seconds (default: 0.9 eta)");
    serve->add_option("--accept-timeout", v_accept, "seconds to wait for the client");
    serve->add_flag("--fallback", v_fallback, "keep running on the baseline if the client disconnects");
    serve->add_option("--out,-o", v_out, "trace CSV (default: stdout)");
    v_flags.add(*serve, false);

    // model
    auto* model = app.add_subcommand("model", "list builtins or print a recast model and its hash");
    std::string m_model;
    model->add_option("model", m_model, "builtin id or model file (omit to list builtins)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        (void)app.exit(e);
        return kInvalid;
    }

    try {
        const ParamOverrides overrides = common.overrides();

        if (*derive) {
            const DynSystem sys = load_model(d_model, overrides);
            auto r = derive_artifact(sys, certificate_for(sys, d_model, d_flags.bac), d_flags.options());
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
            emit(d_out, [&](std::ostream& o) { o << serialize(r.artifact); });
            return kOk;
        }

        if (*check) {
            const DynSystem sys = load_model(c_model, overrides);
            const BarrierCertificate bc = certificate_for(sys, c_model, c_bac);
            CheckOptions o;
            o.budget = c_budget;
            o.depth = c_depth;
            const CertReport r = check_bac(sys, bc, sys.baseline, o);
            std::cout << describe(r, sys.states) << "\n";
            return r.verdict == Verdict::CertifiedOnGrid ? kOk : kFailure;
        }

        if (*simulate) {
            const DynSystem sys = load_model(s_model, overrides);
            SwitchingArtifact art = artifact_for(sys, s_model, s_artifact, s_flags);
            require_matching(sys, art);
            // --m also applies to a loaded artifact: m only enters at run time
            if (simulate->count("--m") != 0) art.m = s_flags.m;
            auto ac = make_controller(s_ac, sys);
            auto bc = make_controller(s_bc, sys);
            SimOptions so;
            so.horizon = s_horizon;
            so.shield = !s_no_shield;
            so.substeps = s_substeps;
            const RunRecord rec = simulate_run(sys, art, *ac, *bc, initial_state(sys, s_x0, s_seed), so);
            emit(s_out, [&](std::ostream& o) { write_csv(o, sys, rec); });
            report_run(rec);
            return rec.violation && so.shield ? kUnsafe : kOk;
        }

        if (*experiment) {
            ExperimentSpec spec = load_experiment(e_spec);
            if (e_seed) spec.seed = *e_seed;
            if (e_m) spec.m = *e_m;
            if (e_workers) spec.workers = *e_workers;
            if (e_runs) spec.runs = *e_runs;
            for (const auto& [k, v] : overrides) spec.params.insert_or_assign(k, v);
            const auto [sys, art] = resolve_experiment(spec);
            const ExperimentResult r = run_experiment(spec, sys, art);
            if (!e_out.empty()) write_experiment(r, sys, e_out);
            std::cout << (e_json ? summary_json(r.summary) : summary_text(r.summary, r.artifact.eta));
            return r.summary.violations != 0 && spec.shield ? kUnsafe : kOk;
        }

        if (*falsify) {
            const DynSystem sys = load_model(f_model, overrides);
            auto ac = make_controller(f_ac, sys);
            const auto w = falsify_controller(sys, *ac, f_opts);
            if (!w) {
                std::cout << "NONE\n";
                return kOk;
            }
            std::cout << "witness x0 =";
            char buf[64];
            for (std::size_t i = 0; i < w->x0.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g", w->x0[i]);
                std::cout << (i ? ", " : " ") << sys.states[i] << " = " << buf;
            }
            std::snprintf(buf, sizeof buf, "%.6g", w->t);
            std::cout << "\nviolation at t = " << buf << " after " << w->evaluations << " rollouts\n";
            return kOk;
        }

        if (*serve) {
            const DynSystem sys = load_model(v_model, overrides);
            const SwitchingArtifact art = artifact_for(sys, v_model, v_artifact, v_flags);
            require_matching(sys, art);
            const std::vector<double> x0 = initial_state(sys, v_x0, v_seed);
            wire::Listener listener(wire::parse_endpoint(v_listen));
            std::cerr << "listening on port " << listener.port() << std::endl;
            wire::LineStream stream = listener.accept(std::chrono::duration<double>(v_accept));
            wire::server_handshake(stream, {sys.states, sys.inputs, art.eta}, std::chrono::duration<double>(v_accept));
            ExternalController::Options eo;
            eo.deadline = v_deadline;
            eo.fallback = v_fallback;
            ExternalController ac(stream, sys, art.eta, eo);
            auto bc = make_controller(v_bc, sys);
            SimOptions so;
            so.horizon = v_horizon;
            so.substeps = v_substeps;
            const RunRecord rec = simulate_run(sys, art, ac, *bc, x0, so);
            stream.close();
            emit(v_out, [&](std::ostream& o) { write_csv(o, sys, rec); });
            report_run(rec);
            if (ac.stale()) std::cerr << "stale replies dropped " << ac.stale() << "\n";
            if (ac.disconnected()) std::cerr << "client disconnected; ran on the baseline controller\n";
            return rec.violation ? kUnsafe : kOk;
        }

        if (*model) {
            if (m_model.empty()) {
                for (const auto& n : builtin_names()) std::cout << n << "\n";
                return kOk;
            }
            const DynSystem sys = load_model(m_model, overrides);
            std::cout << "# hash " << model_hash(sys) << "\n" << print_system(sys);
            return kOk;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}
