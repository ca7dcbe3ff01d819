#include <gtest/gtest.h>

#include <cmath>

#include "bcsimplex/certify.hpp"
#include "bcsimplex/error.hpp"
#include "bcsimplex/model.hpp"
#include "generators.hpp"

using namespace bcsimplex;

namespace {

// x' = u on A = [-2, 2], unsafe where 1 - x^2 < 0.
DynSystem decay_system()
{
    return load_text(R"(
states x
inputs u
params
  eta = 0.1
dynamics
  dx/dt = u
admissible
  x in [-2, 2]
controls
  u in [-3, 3]
unsafe
  unsafe when 1 - x^2 < 0
baseline
  u = -x
)",
                     "decay");
}

BarrierCertificate bac(const DynSystem& sys, const char* h)
{
    return parse_bac(std::string("{\"h\": \"") + h + "\", \"gamma\": 1}", sys);
}

FeedbackLaw law(const DynSystem& sys, const char* text) { return {parse_polynomial(text, sys.states)}; }

} // namespace

TEST(CheckBac, CertifiesStableLoop)
{
    const DynSystem sys = decay_system();
    // dh/dt + h = 2x^2 + 1 - x^2 = x^2 + 1
    const CertReport r = check_bac(sys, bac(sys, "1 - x^2"), law(sys, "-x"), {100000, 6});
    EXPECT_EQ(r.verdict, Verdict::CertifiedOnGrid);
    EXPECT_EQ(r.samples, 100000U);
    ASSERT_TRUE(r.margin.has_value());
    EXPECT_GE(r.margin->lo, 0.0);
    EXPECT_LE(r.margin->lo, 1.0);
    EXPECT_GE(r.margin->hi, 5.0);
    EXPECT_EQ(closed_loop_margin(sys, bac(sys, "1 - x^2"), law(sys, "-x")), parse_polynomial("x^2 + 1", sys.states));
}

TEST(CheckBac, FalsifiesSignFlippedLoop)
{
    const DynSystem sys = decay_system();
    // dh/dt + h = -2x^2 + 1 - x^2 = 1 - 3x^2, negative for |x| > 1/sqrt(3)
    const CertReport r = check_bac(sys, bac(sys, "1 - x^2"), law(sys, "x"), {100000, 6});
    ASSERT_EQ(r.verdict, Verdict::Falsified);
    EXPECT_EQ(r.clause, Clause::Derivative);
    ASSERT_EQ(r.witness.size(), 1U);
    EXPECT_GT(std::fabs(r.witness[0]), 1.0 / std::sqrt(3.0));
    EXPECT_DOUBLE_EQ(r.witness_value, 1.0 - 3.0 * r.witness[0] * r.witness[0]);
    EXPECT_LT(r.witness_value, 0.0);
}

TEST(CheckBac, NegativeConstantFailsClauseOne)
{
    const DynSystem sys = decay_system();
    const CertReport r = check_bac(sys, bac(sys, "-1"), law(sys, "-x"));
    ASSERT_EQ(r.verdict, Verdict::Falsified);
    EXPECT_EQ(r.clause, Clause::SafeNonNegative);
    EXPECT_FALSE(sys.is_unsafe(r.witness));
}

TEST(CheckBac, PositiveOnUnsafeFailsClauseTwo)
{
    const DynSystem sys = decay_system();
    const CertReport r = check_bac(sys, bac(sys, "4 - x^2"), law(sys, "-x"));
    ASSERT_EQ(r.verdict, Verdict::Falsified);
    EXPECT_EQ(r.clause, Clause::UnsafeNegative);
    EXPECT_TRUE(sys.is_unsafe(r.witness));
}

TEST(CheckBac, ZeroBudgetIsError)
{
    const DynSystem sys = decay_system();
    EXPECT_THROW((void)check_bac(sys, bac(sys, "1 - x^2"), law(sys, "-x"), {0, 0}), ValidationError);
}

TEST(CheckBac, FlippedLoopNeverCertifiedAcrossBudgets)
{
    const DynSystem sys = decay_system();
    for (std::size_t budget : {10U, 100U, 1000U, 100000U}) {
        EXPECT_EQ(check_bac(sys, bac(sys, "1 - x^2"), law(sys, "x"), {budget, 0}).verdict, Verdict::Falsified) << budget;
    }
}

TEST(CheckBac, MarginMonotoneInDepth)
{
    const DynSystem m1 = builtin("m1");
    const BarrierCertificate bc = parse_bac(*builtin_bac_source("m1"), m1);
    Interval prev{-INFINITY, INFINITY};
    for (int depth = 0; depth <= 6; ++depth) {
        const CertReport r = check_bac(m1, bc, m1.baseline, {2000, depth});
        ASSERT_EQ(r.verdict, Verdict::CertifiedOnGrid);
        ASSERT_TRUE(prev.contains(*r.margin)) << depth;
        EXPECT_GT(r.margin->lo, 0.0) << depth;
        prev = *r.margin;
    }
}

TEST(CheckBac, ShippedCertificatesHold)
{
    for (const char* name : {"m1", "scalar"}) {
        const DynSystem sys = builtin(name);
        const BarrierCertificate bc = parse_bac(*builtin_bac_source(name), sys);
        const CertReport r = check_bac(sys, bc, sys.baseline);
        EXPECT_EQ(r.verdict, Verdict::CertifiedOnGrid) << name << "\n" << describe(r, sys.states);
        EXPECT_GE(r.margin->lo, 0.0) << name;
    }
}

TEST(BacFile, RoundTripAndErrors)
{
    const DynSystem sys = decay_system();
    const BarrierCertificate bc = bac(sys, "1 - x^2");
    const BarrierCertificate back = parse_bac(serialize_bac(bc), sys);
    EXPECT_EQ(back.h, bc.h);
    EXPECT_EQ(back.gamma, 1.0);
    EXPECT_THROW((void)parse_bac("{\"h\": \"1 - y\"}", sys), ParseError);
    EXPECT_THROW((void)parse_bac("{\"h\": \"1\", \"gamma\": 0}", sys), ValidationError);
    EXPECT_THROW((void)parse_bac("not json", sys), ValidationError);
}

TEST(Halton, FirstPoints)
{
    EXPECT_EQ(halton(1, 2), (std::vector<double>{0.5, 1.0 / 3.0}));
    EXPECT_EQ(halton(2, 2), (std::vector<double>{0.25, 2.0 / 3.0}));
    EXPECT_EQ(halton(3, 1), (std::vector<double>{0.75}));
}

namespace {

DynSystem box_system(const char* states, const char* admissible, const char* unsafe)
{
    std::string text = std::string("states ") + states + "\ninputs\ndynamics\n";
    std::string s = states;
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto end = s.find(' ', pos);
        if (end == std::string::npos) end = s.size();
        text += "  d" + s.substr(pos, end - pos) + "/dt = 0\n";
        pos = end + 1;
    }
    text += std::string("admissible\n") + admissible + "controls\nunsafe\n  unsafe when " + unsafe + " < 0\n";
    return load_text(text, "box");
}

} // namespace

TEST(LyapSublevel, OneDimensional)
{
    // min x^2 on |x| = 2 is 4
    const DynSystem sys = box_system("x", "  x in [-3, 3]\n", "4 - x^2");
    const SublevelResult r = lyap_sublevel_bac(parse_polynomial("x^2", sys.states), sys);
    EXPECT_NEAR(r.level, 4.0, 1e-6);
    EXPECT_LE(r.level, 4.0);
    EXPECT_EQ(r.bc.h, Polynomial::constant(sys.states, r.level) - parse_polynomial("x^2", sys.states));
}

TEST(LyapSublevel, HalfPlane)
{
    // Lagrange condition: min x^2 + y^2 on x = 1 at (1, 0), value 1
    const DynSystem sys = box_system("x y", "  x in [-2, 2]\n  y in [-2, 2]\n", "1 - x");
    const SublevelResult r = lyap_sublevel_bac(parse_polynomial("x^2 + y^2", sys.states), sys);
    EXPECT_NEAR(r.level, 1.0, 1e-6);
    EXPECT_LE(r.level, 1.0);
    EXPECT_NEAR(r.level_upper, 1.0, 1e-9);

    // clause (ii) by construction: h < 0 wherever x > 1
    for (std::size_t i = 1; i <= 20000; ++i) {
        auto u = halton(i, 2);
        const std::vector<double> x{1.0 + 1e-9 + u[0], -2.0 + 4.0 * u[1]};
        ASSERT_LT(r.bc.h.evaluate(x), 0.0);
    }
}

TEST(LyapSublevel, DegenerateLevel)
{
    const DynSystem sys = box_system("x", "  x in [-1, 1]\n", "-x");
    EXPECT_THROW((void)lyap_sublevel_bac(parse_polynomial("x^2", sys.states), sys), ValidationError);
}

TEST(LyapSublevel, UnreachableBoundary)
{
    const DynSystem sys = box_system("x", "  x in [-1, 1]\n", "4 - x^2");
    EXPECT_THROW((void)lyap_sublevel_bac(parse_polynomial("x^2", sys.states), sys), ValidationError);
}

TEST(LyapSublevel, NegativeVRejected)
{
    const DynSystem sys = box_system("x", "  x in [-3, 3]\n", "4 - x^2");
    EXPECT_THROW((void)lyap_sublevel_bac(parse_polynomial("x", sys.states), sys), ValidationError);
}
