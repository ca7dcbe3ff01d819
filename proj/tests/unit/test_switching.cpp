#include <gtest/gtest.h>

#include <cmath>

#include "bcsimplex/error.hpp"
#include "bcsimplex/expr.hpp"
#include "bcsimplex/model.hpp"
#include "bcsimplex/switching.hpp"
#include "generators.hpp"

using namespace bcsimplex;

namespace {

DynSystem one_dim(const std::string& rhs, const std::string& omega = "[-1, 1]", const std::string& a = "[-1, 1]")
{
    return load_text("states x\ninputs u\nparams\n  eta = 0.1\ndynamics\n  dx/dt = " + rhs + "\nadmissible\n  x in " + a +
                         "\ncontrols\n  u in " + omega + "\nunsafe\n  unsafe when 1 - x < 0\nbaseline\n  u = -x\n",
                     "onedim");
}

// Artifact assembled without the certificate check.
SwitchingArtifact artifact(const DynSystem& sys, const std::string& h, int n, double eta)
{
    SwitchingArtifact a;
    a.states = sys.states;
    a.inputs = sys.inputs;
    a.n = n;
    a.eta = eta;
    a.chain = taylor_chain(parse_polynomial(h, sys.states), sys, n);
    a.dynamics = sys.rhs;
    a.baseline = sys.baseline;
    a.admissible = sys.admissible;
    a.controls = sys.controls;
    a.unsafe = sys.unsafe;
    a.lambda_global = lambda_bound(a, std::nullopt);
    const auto mu = mu_bounds(a, std::nullopt);
    a.mu_dec_global = mu.dec;
    a.mu_inc_global = mu.inc;
    return a;
}

std::vector<Polynomial> polys(const std::vector<std::string>& texts, const std::vector<std::string>& vars)
{
    std::vector<Polynomial> out;
    for (const auto& t : texts) out.push_back(parse_polynomial(t, vars));
    return out;
}

// Fine-step RK4 with u held, calling `visit` at every substep.
template <class Visit>
std::vector<double> integrate(const DynSystem& sys, std::vector<double> x, const std::vector<double>& u, double T, int steps,
                              Visit visit)
{
    const std::size_t d = x.size();
    std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);
    const double dt = T / steps;
    for (int s = 0; s < steps; ++s) {
        sys.evaluate_rhs(x, u, k1);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
        sys.evaluate_rhs(tmp, u, k2);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
        sys.evaluate_rhs(tmp, u, k3);
        for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + dt * k3[i];
        sys.evaluate_rhs(tmp, u, k4);
        for (std::size_t i = 0; i < d; ++i) x[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        visit(x);
    }
    return x;
}

} // namespace

TEST(TaylorChain, SymbolicExamples)
{
    const DynSystem sys = one_dim("u");
    const auto vars = sys.variables();
    EXPECT_EQ(taylor_chain(parse_polynomial("x", sys.states), sys, 1), polys({"x", "u", "0"}, vars));
    EXPECT_EQ(taylor_chain(parse_polynomial("1 - x^2", sys.states), sys, 1), polys({"1 - x^2", "-2*x*u", "-2*u^2"}, vars));
    EXPECT_THROW((void)taylor_chain(parse_polynomial("x", sys.states), sys, 0), ValidationError);
}

TEST(TaylorChain, ZeroFieldKillsDerivatives)
{
    const DynSystem sys = one_dim("0");
    const auto chain = taylor_chain(parse_polynomial("3*x^2 - x + 1", sys.states), sys, 1);
    ASSERT_EQ(chain.size(), 3U);
    EXPECT_TRUE(chain[1].is_zero());
    EXPECT_TRUE(chain[2].is_zero());
}

TEST(TaylorChain, PropertyMatchesFiniteDifferenceOfFlow)
{
    // h^1 at a point equals d/dt h(x(t)) at t = 0 along the flow
    bcsimplex::testing::Gen gen(17);
    const DynSystem sys = one_dim("-x^3 + x*u + u");
    for (int trial = 0; trial < 200; ++trial) {
        const Polynomial h = gen.polynomial({"x"}, 4, 4, true);
        const auto chain = taylor_chain(h, sys, 2);
        const std::vector<double> x{gen.uniform(-1, 1)};
        const std::vector<double> u{gen.uniform(-1, 1)};
        const double dt = 1e-5;
        auto fwd = integrate(sys, x, u, dt, 4, [](auto&) {});
        auto bwd = integrate(sys, x, u, -dt, 4, [](auto&) {});
        const double fd = (h.evaluate(fwd) - h.evaluate(bwd)) / (2 * dt);
        const std::vector<double> xu{x[0], u[0]};
        EXPECT_NEAR(chain[1].evaluate(xu), fd, 1e-6 * (1 + std::fabs(fd)));
    }
}

TEST(LambdaBound, Examples)
{
    {
        const auto art = artifact(one_dim("u"), "x", 1, 0.1);
        for (double u : {-1.0, 0.0, 0.5, 1.0}) EXPECT_EQ(lambda_bound(art, std::vector<double>{u}), 0.0);
        EXPECT_EQ(art.lambda_global, 0.0);
    }
    {
        const DynSystem sys = load_text("states x\ninputs\ndynamics\n  dx/dt = 1\nadmissible\n  x in [-1, 1]\ncontrols\n", "c");
        const auto art = artifact(sys, "x^2", 1, 0.1);
        const double l = lambda_bound(art, std::vector<double>{});
        EXPECT_GE(l, 0.01 - 1e-18);
        EXPECT_NEAR(l, 0.01, 1e-15);
    }
    {
        const auto art = artifact(one_dim("u"), "1 - x^2", 1, 0.1);
        const double l = lambda_bound(art, std::vector<double>{1.0});
        EXPECT_NEAR(l, 0.01, 1e-15);
        EXPECT_GE(l, 0.01);
        EXPECT_GE(art.lambda_global, l);
    }
}

TEST(LambdaBound, ActionOutsideOmegaRejected)
{
    const auto art = artifact(one_dim("u"), "x", 1, 0.1);
    EXPECT_THROW((void)lambda_bound(art, std::vector<double>{1.5}), ValidationError);
    EXPECT_THROW((void)mu_bounds(art, std::vector<double>{-1.01}), ValidationError);
    EXPECT_THROW((void)lambda_bound(art, std::vector<double>{0.0, 0.0}), ValidationError);
}

TEST(MuBounds, Examples)
{
    {
        const auto art = artifact(one_dim("-x"), "x", 1, 0.1);
        const auto mu = mu_bounds(art, std::vector<double>{0.0});
        // vertex oracle on a linear field: the rate ranges over {-1, 1}
        EXPECT_NEAR(mu.dec[0], 0.1, 1e-16);
        EXPECT_NEAR(mu.inc[0], 0.1, 1e-16);
        EXPECT_GE(mu.dec[0], 0.1);
    }
    {
        const auto art = artifact(one_dim("u", "[-3, 3]"), "x", 1, 0.1);
        const auto mu = mu_bounds(art, std::vector<double>{2.0});
        EXPECT_EQ(mu.dec[0], 0.0);
        EXPECT_NEAR(mu.inc[0], 0.2, 1e-16);
    }
    {
        const auto art = artifact(one_dim("0"), "x", 1, 0.1);
        const auto mu = mu_bounds(art, std::nullopt);
        EXPECT_EQ(mu.dec[0], 0.0);
        EXPECT_EQ(mu.inc[0], 0.0);
    }
}

TEST(RestrictedRegion, Examples)
{
    const IntervalBox a({Interval(-1, 1)});
    const MuBounds mu{{0.1}, {0.1}};
    auto r = restricted_region(a, mu, 1);
    ASSERT_TRUE(r);
    EXPECT_NEAR((*r)[0].lo, -0.9, 1e-15);
    EXPECT_NEAR((*r)[0].hi, 0.9, 1e-15);
    EXPECT_GE((*r)[0].lo, -0.9);
    EXPECT_LE((*r)[0].hi, 0.9);
    r = restricted_region(a, mu, 3);
    ASSERT_TRUE(r);
    EXPECT_NEAR((*r)[0].lo, -0.7, 1e-15);
    EXPECT_NEAR((*r)[0].hi, 0.7, 1e-15);
    r = restricted_region(a, MuBounds{{0.6}, {0.6}}, 1);
    ASSERT_TRUE(r);
    EXPECT_NEAR((*r)[0].hi, 0.4, 1e-15);
    EXPECT_FALSE(restricted_region(a, MuBounds{{1.2}, {1.2}}, 1));
    EXPECT_FALSE(restricted_region(a, MuBounds{{0.6}, {0.6}}, 3));
    // exact collapse to a point is empty as an open set
    EXPECT_FALSE(restricted_region(a, MuBounds{{1.0}, {1.0}}, 1));
}

TEST(RestrictedRegion, OpenMembership)
{
    const IntervalBox a({Interval(0, 1)});
    const auto r = restricted_region(a, MuBounds{{0.25}, {0.25}}, 1);
    ASSERT_TRUE(r);
    const std::vector<double> edge{0.25};
    const std::vector<double> inside{0.5};
    EXPECT_FALSE(r->contains_open(edge));
    EXPECT_TRUE(r->contains_open(inside));
}

TEST(RestrictedRegion, NestingProperty)
{
    // A_{r,m} within A_r(u) within A for every u under the global bounds
    bcsimplex::testing::Gen gen(5);
    for (const char* name : {"m1", "m2", "scalar"}) {
        const DynSystem sys = builtin(name);
        const auto bc = parse_bac(std::string("{\"h\": \"") + sys.unsafe[0].to_string() + "\", \"gamma\": 1}", sys);
        DeriveOptions o;
        o.force = true;
        o.budget = 200;
        const auto art = derive_artifact(sys, bc, o).artifact;
        const auto rm = restricted_region(art.admissible, {art.mu_dec_global, art.mu_inc_global}, art.m);
        for (int k = 0; k < 50; ++k) {
            const auto u = gen.point_in(art.controls);
            const auto b = action_bounds(art, u);
            ASSERT_TRUE(b.region) << name;
            EXPECT_TRUE(art.admissible.contains(*b.region)) << name;
            if (rm) EXPECT_TRUE(b.region->contains(*rm)) << name;
        }
    }
}

TEST(ActionBounds, PerActionDominatedByGlobal)
{
    bcsimplex::testing::Gen gen(99);
    for (const char* name : {"m1", "m2", "scalar"}) {
        const DynSystem sys = builtin(name);
        const auto bc = parse_bac(std::string("{\"h\": \"") + sys.unsafe[0].to_string() + "\", \"gamma\": 1}", sys);
        DeriveOptions o;
        o.force = true;
        o.budget = 200;
        const auto art = derive_artifact(sys, bc, o).artifact;
        for (int k = 0; k < 200; ++k) {
            const auto u = gen.point_in(art.controls);
            EXPECT_LE(lambda_bound(art, u), art.lambda_global) << name;
            const auto mu = mu_bounds(art, u);
            for (std::size_t i = 0; i < mu.dec.size(); ++i) {
                EXPECT_LE(mu.dec[i], art.mu_dec_global[i]) << name << " state " << i;
                EXPECT_LE(mu.inc[i], art.mu_inc_global[i]) << name << " state " << i;
            }
        }
    }
}

TEST(ActionBounds, GlobalStrategyIgnoresAction)
{
    auto art = artifact(one_dim("u"), "1 - x^2", 1, 0.1);
    art.strategy = Strategy::Global;
    const auto b = action_bounds(art, std::vector<double>{0.0});
    EXPECT_EQ(b.lambda, art.lambda_global);
    EXPECT_EQ(b.mu.inc, art.mu_inc_global);
}

TEST(ActionBounds, CacheReusesLastAction)
{
    const auto art = artifact(one_dim("u"), "1 - x^2", 1, 0.1);
    ActionBoundCache cache(art);
    const std::vector<double> a{0.5};
    const std::vector<double> b{-0.5};
    (void)cache.get(a);
    (void)cache.get(a);
    EXPECT_EQ(cache.misses(), 1U);
    EXPECT_NEAR(cache.get(b).mu.dec[0], 0.05, 1e-16);
    EXPECT_EQ(cache.misses(), 2U);
}

TEST(Soundness, RemainderBoundHoldsOverOnePeriod)
{
    bcsimplex::testing::Gen gen(2024);
    struct Case {
        DynSystem sys;
        std::string h;
        int trials;
    };
    std::vector<Case> cases;
    cases.push_back({builtin("m1"), "(0.03*0.48)^2 - (v - 0.48)^2", 10000});
    cases.push_back({builtin("scalar"), "1 - x", 10000});
    // a field where the remainder is not identically zero
    cases.push_back({one_dim("-x^3 + u", "[-1, 1]", "[-2, 2]"), "1 - x^2", 1000});
    for (auto& c : cases) {
        const auto art = artifact(c.sys, c.h, 4, c.sys.eta > 0.05 ? 0.1 : c.sys.eta);
        int trials = 0;
        while (trials < c.trials) {
            const auto u = gen.point_in(art.controls);
            const auto b = action_bounds(art, u);
            ASSERT_TRUE(b.region);
            const auto x = gen.point_in(*b.region);
            if (!b.region->contains_open(x)) continue;
            ++trials;
            const auto end = integrate(c.sys, x, u, art.eta, 64, [](auto&) {});
            const double predicted = taylor_predict(art, x, u) - b.lambda;
            ASSERT_GE(art.h(end) + 1e-12, predicted) << c.sys.name << " trial " << trials;
        }
    }
}

TEST(Soundness, OnePeriodStaysInAdmissible)
{
    bcsimplex::testing::Gen gen(7);
    for (const char* name : {"m1", "scalar", "m2"}) {
        const DynSystem sys = builtin(name);
        const auto art = artifact(sys, sys.unsafe[0].to_string(), 4, sys.eta);
        int trials = 0;
        while (trials < 10000) {
            const auto u = gen.point_in(art.controls);
            const auto b = action_bounds(art, u);
            ASSERT_TRUE(b.region);
            const auto x = gen.point_in(*b.region);
            if (!b.region->contains_open(x)) continue;
            ++trials;
            bool inside = true;
            (void)integrate(sys, x, u, art.eta, 32, [&](const std::vector<double>& y) { inside = inside && art.admissible.contains(y); });
            ASSERT_TRUE(inside) << name << " trial " << trials;
        }
    }
}

TEST(Derive, ScalarExample)
{
    const DynSystem sys = builtin("scalar");
    const auto bc = load_bac(std::string(BCSIMPLEX_MODELS_DIR) + "/scalar.bac", sys);
    DeriveOptions o;
    o.n = 1;
    const auto res = derive_artifact(sys, bc, o);
    const auto& art = res.artifact;
    EXPECT_EQ(res.report.verdict, Verdict::CertifiedOnGrid);
    ASSERT_EQ(art.chain.size(), 3U);
    EXPECT_EQ(art.chain[1], parse_polynomial("-u", art.variables()));
    EXPECT_TRUE(art.chain[2].is_zero());
    EXPECT_EQ(art.lambda_global, 0.0);
    EXPECT_EQ(art.eta, 0.1);
    EXPECT_EQ(art.model_hash, model_hash(sys));
}

TEST(Derive, RoundTripAndDeterminism)
{
    for (const char* name : {"m1", "m2", "scalar"}) {
        const DynSystem sys = builtin(name);
        const auto bc = parse_bac(std::string("{\"h\": \"") + sys.unsafe[0].to_string() + "\", \"gamma\": 1}", sys);
        DeriveOptions o;
        o.force = true;
        o.budget = 100;
        const auto a = derive_artifact(sys, bc, o).artifact;
        const auto b = derive_artifact(sys, bc, o).artifact;
        const std::string text = serialize(a);
        EXPECT_EQ(text, serialize(b)) << name;
        const auto back = deserialize(text);
        EXPECT_EQ(back, a) << name;
        EXPECT_EQ(serialize(back), text) << name;
    }
}

TEST(Derive, TooFastForPeriodRefused)
{
    const DynSystem sys = builtin("scalar");
    const auto bc = load_bac(std::string(BCSIMPLEX_MODELS_DIR) + "/scalar.bac", sys);
    DeriveOptions o;
    o.eta = 2.5; // |u| <= 1 moves x by 2.5 per period on a width-4 box
    try {
        (void)derive_artifact(sys, bc, o);
        FAIL() << "expected refusal";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos);
    }
}

TEST(Derive, FalsifiedCertificateNeedsForce)
{
    const DynSystem sys = builtin("scalar");
    const auto bad = parse_bac(R"({"h": "x - 1", "gamma": 1})", sys);
    EXPECT_THROW((void)derive_artifact(sys, bad, {}), ValidationError);
    DeriveOptions o;
    o.force = true;
    const auto res = derive_artifact(sys, bad, o);
    EXPECT_EQ(res.report.verdict, Verdict::Falsified);
    EXPECT_FALSE(res.warnings.empty());
}

TEST(Derive, OptionValidation)
{
    const DynSystem sys = builtin("scalar");
    const auto bc = load_bac(std::string(BCSIMPLEX_MODELS_DIR) + "/scalar.bac", sys);
    DeriveOptions o;
    o.m = 1;
    EXPECT_THROW((void)derive_artifact(sys, bc, o), ValidationError);
    o = {};
    o.n = 0;
    EXPECT_THROW((void)derive_artifact(sys, bc, o), ValidationError);
    o = {};
    o.eta = -1.0;
    EXPECT_THROW((void)derive_artifact(sys, bc, o), ValidationError);
}

TEST(Artifact, TamperedChainRejected)
{
    const DynSystem sys = builtin("scalar");
    const auto bc = load_bac(std::string(BCSIMPLEX_MODELS_DIR) + "/scalar.bac", sys);
    std::string text = serialize(derive_artifact(sys, bc, {}).artifact);
    const auto pos = text.find("\"h\": \"");
    ASSERT_NE(pos, std::string::npos);
    std::string bad = text;
    bad.replace(pos, 6, "\"h\": \"2*x + ");
    EXPECT_THROW((void)deserialize(bad), ValidationError);
    EXPECT_THROW((void)deserialize("{}"), ValidationError);
    EXPECT_THROW((void)deserialize("not json"), ValidationError);
}

TEST(Strategy, Names)
{
    EXPECT_EQ(parse_strategy("global"), Strategy::Global);
    EXPECT_EQ(to_string(parse_strategy("per-action")), "per-action");
    EXPECT_THROW((void)parse_strategy("sometimes"), ValidationError);
}
