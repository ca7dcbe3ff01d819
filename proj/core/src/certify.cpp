#include "bcsimplex/certify.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>

#include <json.hpp>

#include "bcsimplex/error.hpp"
#include "bcsimplex/expr.hpp"
#include "bcsimplex/model.hpp"

namespace bcsimplex {

namespace {

constexpr std::array<unsigned, 32> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
                                              59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<double> sample_point(const IntervalBox& box, std::size_t index)
{
    auto u = halton(index, box.size());
    for (std::size_t i = 0; i < box.size(); ++i) u[i] = box[i].lo + u[i] * (box[i].hi - box[i].lo);
    return u;
}

} // namespace

std::vector<double> halton(std::size_t index, std::size_t dims)
{
    if (dims > kPrimes.size()) throw ValidationError("low-discrepancy sampling supports at most 32 dimensions");
    std::vector<double> out(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        const unsigned base = kPrimes[d];
        double f = 1.0;
        double r = 0.0;
        std::size_t i = index;
        while (i > 0) {
            f /= base;
            r += f * static_cast<double>(i % base);
            i /= base;
        }
        out[d] = r;
    }
    return out;
}

BarrierCertificate parse_bac(std::string_view json_text, const DynSystem& sys)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("barrier certificate file is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("h") || !j["h"].is_string()) {
        throw ValidationError("barrier certificate file needs a string field 'h'");
    }
    BarrierCertificate bc;
    bc.h = parse_polynomial(j["h"].get<std::string>(), sys.states, sys.params);
    if (j.contains("gamma")) {
        if (!j["gamma"].is_number()) throw ValidationError("'gamma' must be a number");
        bc.gamma = j["gamma"].get<double>();
    }
    if (!(bc.gamma > 0.0) || !std::isfinite(bc.gamma)) throw ValidationError("class-K gain gamma must be positive");
    if (j.contains("provenance") && j["provenance"].is_string()) bc.provenance = j["provenance"].get<std::string>();
    return bc;
}

BarrierCertificate load_bac(const std::string& path, const DynSystem& sys) { return parse_bac(read_file(path), sys); }

std::string serialize_bac(const BarrierCertificate& bc)
{
    return "{\n  \"h\": " + nlohmann::json(bc.h.to_string()).dump() + ",\n  \"gamma\": " + fmt(bc.gamma) +
           ",\n  \"provenance\": " + nlohmann::json(bc.provenance).dump() + "\n}\n";
}

Polynomial closed_loop_margin(const DynSystem& sys, const BarrierCertificate& bc, const FeedbackLaw& law)
{
    if (law.size() != sys.inputs.size()) {
        throw ValidationError("closed loop needs one feedback polynomial per input (" + std::to_string(sys.inputs.size()) + ")");
    }
    const auto vars = sys.variables();
    Polynomial hdot = lie_derivative(bc.h.with_variables(vars), sys.states, sys.rhs).with_variables(vars);
    for (std::size_t j = 0; j < law.size(); ++j) hdot = hdot.compose(sys.inputs[j], law[j].with_variables(sys.states));
    return (hdot.with_variables(sys.states) + bc.gamma * bc.h.with_variables(sys.states)).with_variables(sys.states);
}

CertReport check_bac(const DynSystem& sys, const BarrierCertificate& bc, const FeedbackLaw& law, const CheckOptions& opts)
{
    if (opts.budget == 0) throw ValidationError("check_bac: sample budget must be positive");
    const Polynomial h = bc.h.with_variables(sys.states);
    const Polynomial d = closed_loop_margin(sys, bc, law);

    CertReport r;
    r.min_safe_h = std::numeric_limits<double>::infinity();
    r.max_unsafe_h = -std::numeric_limits<double>::infinity();
    r.min_derivative_margin = std::numeric_limits<double>::infinity();

    auto falsify = [&r](Clause c, std::vector<double> x, double value) {
        r.verdict = Verdict::Falsified;
        r.clause = c;
        r.witness = std::move(x);
        r.witness_value = value;
    };

    for (std::size_t i = 1; i <= opts.budget; ++i) {
        auto x = sample_point(sys.admissible, i);
        ++r.samples;
        const double hv = h.evaluate(x);
        if (!sys.is_unsafe(x)) {
            r.min_safe_h = std::min(r.min_safe_h, hv);
            if (hv < 0.0) {
                falsify(Clause::SafeNonNegative, std::move(x), hv);
                return r;
            }
        } else {
            r.max_unsafe_h = std::max(r.max_unsafe_h, hv);
            if (hv >= 0.0) {
                falsify(Clause::UnsafeNegative, std::move(x), hv);
                return r;
            }
        }
        const double dv = d.evaluate(x);
        r.min_derivative_margin = std::min(r.min_derivative_margin, dv);
        if (dv < 0.0) {
            falsify(Clause::Derivative, std::move(x), dv);
            return r;
        }
    }

    r.margin = box_bound(d, sys.admissible, opts.depth);
    r.margin_depth = opts.depth;
    return r;
}

std::string describe(const CertReport& r, const std::vector<std::string>& states)
{
    std::string out;
    if (r.verdict == Verdict::Falsified) {
        static const char* names[] = {"", "(i) h >= 0 on safe states", "(ii) h < 0 on unsafe states",
                                      "(iii) dh/dt + gamma*h >= 0"};
        out += "verdict: falsified\n";
        out += "clause: " + std::string(names[static_cast<int>(*r.clause)]) + "\n";
        out += "witness:";
        for (std::size_t i = 0; i < r.witness.size(); ++i) out += " " + states[i] + "=" + fmt(r.witness[i]);
        out += "\nvalue: " + fmt(r.witness_value) + "\n";
    } else {
        out += "verdict: certified-on-grid (sampled, not a sum-of-squares proof)\n";
    }
    out += "samples: " + std::to_string(r.samples) + "\n";
    out += "min h on safe samples: " + fmt(r.min_safe_h) + "\n";
    out += "max h on unsafe samples: " + fmt(r.max_unsafe_h) + "\n";
    out += "min dh/dt + gamma*h on samples: " + fmt(r.min_derivative_margin) + "\n";
    if (r.margin) {
        out += "interval margin over A (depth " + std::to_string(r.margin_depth) + "): " + to_string(*r.margin);
        out += r.margin->lo >= 0.0 ? " (clause iii proved on A)\n" : " (inconclusive)\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lyapunov sub-level sets

namespace {

std::vector<double> gradient(const std::vector<Polynomial>& grad, const std::vector<double>& x)
{
    std::vector<double> g(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) g[i] = grad[i].evaluate(x);
    return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void clamp_to(const IntervalBox& box, std::vector<double>& x)
{
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], box[i].lo, box[i].hi);
}

// Newton projection onto g = 0; false if it does not converge inside the box.
bool project(const Polynomial& g, const std::vector<Polynomial>& dg, const IntervalBox& box, std::vector<double>& x)
{
    for (int it = 0; it < 60; ++it) {
        const double gv = g.evaluate(x);
        if (std::fabs(gv) <= 1e-13) return true;
        const auto n = gradient(dg, x);
        const double nn = dot(n, n);
        if (nn < 1e-300) return false;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= gv * n[i] / nn;
        clamp_to(box, x);
    }
    return std::fabs(g.evaluate(x)) <= 1e-13;
}

struct Node {
    double lower;
    IntervalBox box;
    bool operator>(const Node& o) const { return lower > o.lower; }
};

} // namespace

SublevelResult lyap_sublevel_bac(const Polynomial& V_in, const DynSystem& sys, const SublevelOptions& opts)
{
    const Polynomial V = V_in.with_variables(sys.states);
    const IntervalBox& A = sys.admissible;
    if (sys.unsafe.empty()) throw ValidationError("Lyapunov sub-level extraction needs a non-empty unsafe set");

    for (std::size_t i = 1; i <= 4 * opts.boundary_samples; ++i) {
        const auto x = sample_point(A, i);
        if (V.evaluate(x) < 0.0) throw ValidationError("V is negative on the admissible box");
    }

    std::vector<Polynomial> dV;
    for (const auto& s : sys.states) dV.push_back(V.partial(s));

    // Upper estimate of inf V on the boundary: projected samples plus descent.
    double upper = std::numeric_limits<double>::infinity();
    for (const auto& g : sys.unsafe) {
        std::vector<Polynomial> dg;
        for (const auto& s : sys.states) dg.push_back(g.partial(s));
        for (std::size_t i = 1; i <= opts.boundary_samples; ++i) {
            auto x = sample_point(A, i);
            if (!project(g, dg, A, x)) continue;
            double step = 0.1;
            double best = V.evaluate(x);
            for (int it = 0; it < 200 && step > 1e-14; ++it) {
                const auto gv = gradient(dV, x);
                const auto n = gradient(dg, x);
                const double nn = dot(n, n);
                if (nn < 1e-300) break;
                const double along = dot(gv, n) / nn;
                auto y = x;
                for (std::size_t k = 0; k < y.size(); ++k) y[k] -= step * (gv[k] - along * n[k]);
                clamp_to(A, y);
                if (project(g, dg, A, y) && V.evaluate(y) < best) {
                    best = V.evaluate(y);
                    x = std::move(y);
                    step *= 1.5;
                } else {
                    step *= 0.5;
                }
            }
            upper = std::min(upper, best);
        }
    }
    if (!std::isfinite(upper)) throw ValidationError("unsafe boundary is unreachable inside the admissible box");

    // Certified lower bound: best-first branch and bound over boxes that may
    // meet the boundary.
    auto may_touch = [&sys](const IntervalBox& b) {
        return std::any_of(sys.unsafe.begin(), sys.unsafe.end(), [&b](const Polynomial& g) { return box_bound(g, b).contains(0.0); });
    };
    double min_width = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) min_width = std::max(min_width, A[i].width());
    min_width *= 1e-12;

    std::priority_queue<Node, std::vector<Node>, std::greater<>> queue;
    if (may_touch(A)) queue.push({box_bound(V, A).lo, A});
    if (queue.empty()) throw ValidationError("unsafe boundary is unreachable inside the admissible box");

    const double stop_gap = opts.tolerance * std::max(1.0, std::fabs(upper));
    double level = 0.0;
    std::size_t processed = 0;
    while (true) {
        if (queue.empty()) {
            // Every candidate box was excluded after refinement; the sampled
            // value is then not certifiable from below.
            throw ValidationError("unsafe boundary is unreachable inside the admissible box");
        }
        Node node = queue.top();
        queue.pop();
        ++processed;
        const std::size_t dim = node.box.widest_dimension();
        if (node.lower >= upper - stop_gap || node.box[dim].width() <= min_width || processed >= opts.max_boxes) {
            level = std::min(node.lower, upper);
            break;
        }
        auto [a, b] = node.box.bisect(dim);
        for (auto* child : {&a, &b}) {
            if (!may_touch(*child)) continue;
            queue.push({std::max(node.lower, box_bound(V, *child).lo), std::move(*child)});
        }
    }

    if (!(level > 0.0)) {
        throw ValidationError("sub-level c = " + fmt(level) + " is not positive: the unsafe set touches the minimum of V");
    }

    SublevelResult out;
    out.level = level;
    out.level_upper = upper;
    out.bc.h = Polynomial::constant(sys.states, level) - V;
    out.bc.gamma = 1.0;
    out.bc.provenance = "Lyapunov sub-level set V <= " + fmt(level);
    return out;
}

} // namespace bcsimplex
