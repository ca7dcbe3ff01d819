#include "bcsimplex/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "bcsimplex/error.hpp"

namespace bcsimplex {

std::vector<double> integrate_period(const DynSystem& sys, std::span<const double> x0, std::span<const double> u, double eta,
                                     int substeps, const SubstepVisitor& visit)
{
    if (substeps < 1) throw ValidationError("substeps must be at least 1");
    const std::size_t d = x0.size();
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);
    const double dt = eta / substeps;
    for (int s = 0; s < substeps; ++s) {
        sys.evaluate_rhs(x, u, k1);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
        sys.evaluate_rhs(tmp, u, k2);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
        sys.evaluate_rhs(tmp, u, k3);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + dt * k3[i];
        sys.evaluate_rhs(tmp, u, k4);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if (!std::isfinite(x[i])) {
                throw NumericalError("integration blew up: state " + sys.states[i] + " is not finite after substep " + std::to_string(s + 1));
            }
        }
        if (visit) visit(x);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Controllers

bool clamp_to(const IntervalBox& omega, std::vector<double>& u)
{
    bool moved = false;
    for (std::size_t j = 0; j < u.size(); ++j) {
        const double c = std::clamp(u[j], omega[j].lo, omega[j].hi);
        if (c != u[j] || std::isnan(u[j])) moved = true;
        u[j] = std::isnan(u[j]) ? omega[j].mid() : c;
    }
    return moved;
}

namespace {

std::vector<double> parse_reals(std::string_view text, const std::string& what)
{
    std::vector<double> out;
    std::string item;
    std::stringstream in{std::string(text)};
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("bad number '" + item + "' in " + what);
        }
    }
    return out;
}

class ClampingController : public Controller {
public:
    explicit ClampingController(const DynSystem& sys) : omega_(sys.controls) {}

    ActionResult act(double, std::span<const double> x) final
    {
        ActionResult r{compute(x)};
        r.clamped = clamp_to(omega_, r.u);
        return r;
    }

protected:
    virtual std::vector<double> compute(std::span<const double> x) const = 0;

private:
    IntervalBox omega_;
};

class BaselineController : public ClampingController {
public:
    explicit BaselineController(const DynSystem& sys) : ClampingController(sys), law_(sys.baseline)
    {
        if (law_.size() != sys.inputs.size()) throw ValidationError("model '" + sys.name + "' has no baseline law");
    }
    [[nodiscard]] std::string describe() const override { return "baseline"; }

private:
    std::vector<double> compute(std::span<const double> x) const override
    {
        std::vector<double> u;
        for (const auto& p : law_) u.push_back(p.evaluate(x));
        return u;
    }
    std::vector<Polynomial> law_;
};

class ConstantController : public ClampingController {
public:
    ConstantController(const DynSystem& sys, std::vector<double> u, std::string text)
        : ClampingController(sys), u_(std::move(u)), text_(std::move(text))
    {
    }
    [[nodiscard]] std::string describe() const override { return text_; }

private:
    std::vector<double> compute(std::span<const double>) const override { return u_; }
    std::vector<double> u_;
    std::string text_;
};

class AffineController : public ClampingController {
public:
    AffineController(const DynSystem& sys, std::vector<std::vector<double>> k, std::vector<double> b, std::string text)
        : ClampingController(sys), k_(std::move(k)), b_(std::move(b)), text_(std::move(text))
    {
    }
    [[nodiscard]] std::string describe() const override { return text_; }

private:
    std::vector<double> compute(std::span<const double> x) const override
    {
        std::vector<double> u = b_;
        for (std::size_t j = 0; j < u.size(); ++j) {
            for (std::size_t i = 0; i < x.size(); ++i) u[j] += k_[j][i] * x[i];
        }
        return u;
    }
    std::vector<std::vector<double>> k_;
    std::vector<double> b_;
    std::string text_;
};

} // namespace

std::unique_ptr<Controller> make_controller(std::string_view spec, const DynSystem& sys)
{
    const std::string text(spec);
    const std::size_t nu = sys.inputs.size();
    if (spec == "baseline") return std::make_unique<BaselineController>(sys);
    if (spec.starts_with("constant:")) {
        auto u = parse_reals(spec.substr(9), "constant controller");
        if (u.size() != nu) throw ValidationError("constant controller needs " + std::to_string(nu) + " values, got " + std::to_string(u.size()));
        return std::make_unique<ConstantController>(sys, std::move(u), text);
    }
    if (spec.starts_with("affine:")) {
        std::vector<std::vector<double>> k;
        std::vector<double> b(nu, 0.0);
        std::string part;
        std::stringstream in{std::string(spec.substr(7))};
        while (std::getline(in, part, ';')) {
            if (part.starts_with("K=")) {
                std::string row;
                std::stringstream rows{part.substr(2)};
                while (std::getline(rows, row, '/')) k.push_back(parse_reals(row, "affine gain"));
            } else if (part.starts_with("b=")) {
                b = parse_reals(part.substr(2), "affine offset");
            } else {
                throw ValidationError("affine controller expects K=... and b=..., got '" + part + "'");
            }
        }
        if (k.size() != nu || b.size() != nu) throw ValidationError("affine controller needs " + std::to_string(nu) + " gain rows and offsets");
        for (const auto& row : k) {
            if (row.size() != sys.states.size()) {
                throw ValidationError("affine gain rows need " + std::to_string(sys.states.size()) + " entries (one per state)");
            }
        }
        return std::make_unique<AffineController>(sys, std::move(k), std::move(b), text);
    }
    throw ValidationError("unknown controller '" + text + "' (expected baseline, constant:<u>, or affine:K=<rows>;b=<u>)");
}

ExternalController::ExternalController(wire::LineStream& stream, const DynSystem& sys, double eta, Options opts)
    : stream_(&stream), omega_(sys.controls), deadline_(opts.deadline > 0.0 ? opts.deadline : 0.9 * eta), fallback_(opts.fallback)
{
}

ActionResult ExternalController::act(double t, std::span<const double> x)
{
    ActionResult timeout;
    timeout.timeout = true;
    if (lost_) {
        ++timeouts_;
        return timeout;
    }
    try {
        stream_->send(wire::encode(wire::StateMsg{t, std::vector<double>(x.begin(), x.end())}));
        ++outstanding_;
        const auto deadline = wire::Clock::now() + std::chrono::duration_cast<wire::Clock::duration>(std::chrono::duration<double>(deadline_));
        while (true) {
            const auto line = stream_->receive(deadline);
            if (!line) {
                ++timeouts_;
                return timeout;
            }
            const wire::ActionMsg msg = wire::decode_action(*line);
            const bool is_stale = msg.t ? *msg.t != t : outstanding_ > 1;
            if (is_stale) {
                --outstanding_;
                ++stale_;
                continue;
            }
            outstanding_ = 0;
            if (msg.u.size() != omega_.size()) {
                throw TransportError("action has " + std::to_string(msg.u.size()) + " components, expected " + std::to_string(omega_.size()));
            }
            ActionResult r{msg.u};
            r.clamped = clamp_to(omega_, r.u);
            return r;
        }
    } catch (const TransportError&) {
        if (!fallback_) throw;
        lost_ = true;
        ++timeouts_;
        return timeout;
    }
}

// ---------------------------------------------------------------------------
// Switching logic

std::string to_string(Mode m) { return m == Mode::NC ? "AC" : "BC"; }

FscResult fsc_eval(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u, const ActionBounds& bounds)
{
    FscResult r;
    r.h_hat = taylor_predict(art, x, u);
    r.lambda = bounds.lambda;
    r.alpha = r.h_hat - r.lambda <= 0.0;
    r.beta = !bounds.region || !bounds.region->contains_open(x);
    r.fsc = r.alpha || r.beta;
    return r;
}

FscResult fsc_eval(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u)
{
    return fsc_eval(art, x, u, action_bounds(art, u));
}

std::optional<IntervalBox> reverse_region(const SwitchingArtifact& art)
{
    return restricted_region(art.admissible, {art.mu_dec_global, art.mu_inc_global}, art.m);
}

namespace {

std::vector<double> baseline_at(const SwitchingArtifact& art, std::span<const double> x)
{
    if (art.baseline.size() != art.inputs.size()) throw ValidationError("artifact carries no baseline law; the reverse condition needs one");
    std::vector<double> u;
    for (const auto& p : art.baseline) u.push_back(p.evaluate(x));
    clamp_to(art.controls, u);
    return u;
}

} // namespace

RscResult rsc_eval(const SwitchingArtifact& art, std::span<const double> x, const std::optional<IntervalBox>& region_m)
{
    RscResult r;
    std::vector<double> xu(x.begin(), x.end());
    const auto u = baseline_at(art, x);
    xu.insert(xu.end(), u.begin(), u.end());
    r.h = art.chain[0].evaluate(xu);
    r.hdot = art.chain[1].evaluate(xu);
    r.bound_ok = r.h >= art.m * art.eta * std::fabs(r.hdot);
    r.in_region = region_m && region_m->contains_open(x);
    r.rsc = r.bound_ok && r.in_region;
    return r;
}

RscResult rsc_eval(const SwitchingArtifact& art, std::span<const double> x) { return rsc_eval(art, x, reverse_region(art)); }

Mode dm_step(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u, Mode c)
{
    if (c == Mode::NC) return dm_step(c, fsc_eval(art, x, u).fsc, false);
    return dm_step(c, false, rsc_eval(art, x).rsc);
}

DecisionModule::DecisionModule(const SwitchingArtifact& art) : art_(&art), cache_(art), region_m_(reverse_region(art))
{
    if (art.baseline.size() != art.inputs.size()) throw ValidationError("artifact carries no baseline law; the reverse condition needs one");
}

FscResult DecisionModule::fsc(std::span<const double> x, std::span<const double> u) { return fsc_eval(*art_, x, u, cache_.get(u)); }

RscResult DecisionModule::rsc(std::span<const double> x) const { return rsc_eval(*art_, x, region_m_); }

// ---------------------------------------------------------------------------
// Simulation

std::string event_text(std::uint8_t events)
{
    static constexpr std::pair<Event, const char*> kNames[] = {
        {EvTimeout, "timeout"}, {EvClamp, "clamp"}, {EvReverse, "reverse"}, {EvForward, "forward"}, {EvViolation, "violation"}};
    std::string out;
    for (const auto& [bit, name] : kNames) {
        if (events & bit) out += (out.empty() ? "" : ";") + std::string(name);
    }
    return out;
}

void require_matching(const DynSystem& sys, const SwitchingArtifact& art)
{
    if (sys.states != art.states || sys.inputs != art.inputs) throw ValidationError("artifact was derived for different state or input names");
    const std::string hash = model_hash(sys);
    if (hash != art.model_hash) {
        throw ValidationError("artifact model hash " + art.model_hash + " does not match the model (" + hash + "); re-derive the artifact");
    }
}

RunRecord simulate_run(const DynSystem& sys, const SwitchingArtifact& art, Controller& ac, Controller& bc,
                       std::span<const double> x0, const SimOptions& opts)
{
    if (sys.states != art.states || sys.inputs != art.inputs) throw ValidationError("artifact was derived for different state or input names");
    if (x0.size() != sys.states.size()) throw ValidationError("initial state has the wrong dimension");
    if (!(opts.horizon > 0.0)) throw ValidationError("horizon must be positive");
    if (opts.shield && !(art.h(x0) > 0.0)) {
        throw ValidationError("initial state is not recoverable: h(x0) = " + std::to_string(art.h(x0)) + " must be positive with the shield on");
    }

    DecisionModule dm(art);
    const double eta = art.eta;
    const auto periods = static_cast<std::size_t>(std::llround(opts.horizon / eta));
    RunRecord rec;
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> held(sys.inputs.size());
    for (std::size_t j = 0; j < held.size(); ++j) held[j] = sys.controls[j].mid();
    Mode c = Mode::NC;

    for (std::size_t k = 0; k < std::max<std::size_t>(periods, 1); ++k) {
        PeriodRow row;
        row.t = static_cast<double>(k) * eta;
        row.x = x;
        row.h = art.h(x);

        const ActionResult a = ac.act(row.t, x);
        if (a.clamped) row.events |= EvClamp;
        if (a.timeout) {
            row.events |= EvTimeout;
            ++rec.timeouts;
            // a late action is treated as unsafe
            row.fsc.fsc = true;
        } else {
            row.fsc = dm.fsc(x, a.u);
        }
        row.rsc = dm.rsc(x);

        std::vector<double> u;
        if (opts.shield) {
            // a reverse switch hands control to the advanced controller, whose
            // proposal for this same period is then screened like any other
            const Mode after_reverse = dm_step(c, false, row.rsc.rsc);
            if (after_reverse != c) {
                row.events |= EvReverse;
                ++rec.reverse_switches;
                if (rec.first_forward && !rec.first_reverse_after_forward) rec.first_reverse_after_forward = k;
            }
            c = dm_step(after_reverse, row.fsc.fsc, false);
            if (c != after_reverse) {
                row.events |= EvForward;
                ++rec.forward_switches;
                if (!rec.first_forward) rec.first_forward = k;
            }
            if (c == Mode::NC) {
                u = a.u;
            } else {
                const ActionResult b = bc.act(row.t, x);
                if (b.clamped) row.events |= EvClamp;
                u = b.timeout ? held : b.u;
            }
        } else {
            u = a.timeout ? held : a.u;
        }
        held = u;
        row.u = u;
        row.mode = c;
        if (row.events & EvClamp) ++rec.clamps;

        const double dt = eta / opts.substeps;
        int sub = 0;
        x = integrate_period(sys, x, u, eta, opts.substeps, [&](std::span<const double> y) {
            ++sub;
            if (!sys.admissible.contains(y)) rec.left_admissible = true;
            if (!rec.violation && sys.is_unsafe(y)) rec.violation = Violation{k, row.t + sub * dt, std::vector<double>(y.begin(), y.end())};
        });
        if (rec.violation) row.events |= EvViolation;
        rec.rows.push_back(std::move(row));
        if (rec.violation) break;
    }
    rec.final_state = x;
    return rec;
}

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_csv(std::ostream& out, const DynSystem& sys, const RunRecord& rec)
{
    out << "t";
    for (const auto& s : sys.states) out << ',' << s;
    for (const auto& u : sys.inputs) out << ',' << u;
    out << ",controller,h,alpha,beta,fsc,rsc,event\n";
    for (const auto& r : rec.rows) {
        out << fmt(r.t);
        for (double v : r.x) out << ',' << fmt(v);
        for (double v : r.u) out << ',' << fmt(v);
        out << ',' << to_string(r.mode) << ',' << fmt(r.h) << ',' << r.fsc.alpha << ',' << r.fsc.beta << ',' << r.fsc.fsc << ','
            << r.rsc.rsc << ',' << event_text(r.events) << '\n';
    }
}

} // namespace bcsimplex
