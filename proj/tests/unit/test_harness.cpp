#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bcsimplex/certify.hpp"
#include "bcsimplex/error.hpp"
#include "bcsimplex/harness.hpp"
#include "generators.hpp"

using namespace bcsimplex;

namespace {

const std::string models = BCSIMPLEX_MODELS_DIR;

ExperimentSpec unsafe_m1(std::size_t runs)
{
    ExperimentSpec s;
    s.model = "m1";
    s.ac = "constant:0.1";
    s.bc = "baseline";
    s.runs = runs;
    s.horizon = 1.0;
    s.seed = 7;
    return s;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::ostringstream o;
    o << f.rdbuf();
    return o.str();
}

} // namespace

TEST(ExperimentSpec, DefaultsAndFields)
{
    const auto s = parse_experiment(R"({"model":"m1","ac":"constant:0.1","runs":5,"init_box":{"v":[0.47,0.49]},"m":4,"seed":9,
                                        "params":{"band":0.04},"shield":false,"twins":false,"workers":2})");
    EXPECT_EQ(s.model, "m1");
    EXPECT_EQ(s.runs, 5U);
    EXPECT_EQ(s.init_box.at("v"), Interval(0.47, 0.49));
    EXPECT_EQ(s.m, 4);
    EXPECT_EQ(s.seed, 9U);
    EXPECT_EQ(s.params.at("band"), 0.04);
    EXPECT_FALSE(s.shield);
    EXPECT_FALSE(s.twins);
    EXPECT_EQ(s.workers, 2U);
    EXPECT_EQ(s.epsilon, 0.001);
    EXPECT_EQ(s.horizon, 10.0);

    const auto d = parse_experiment("{}");
    EXPECT_EQ(d.runs, 100U);
    EXPECT_TRUE(d.shield);
    EXPECT_FALSE(d.m);
}

TEST(ExperimentSpec, RejectsBadInput)
{
    EXPECT_THROW((void)parse_experiment("[1]"), ValidationError);
    EXPECT_THROW((void)parse_experiment("{"), ValidationError);
    EXPECT_THROW((void)parse_experiment(R"({"runz":3})"), ValidationError);
    EXPECT_THROW((void)parse_experiment(R"({"runs":0})"), ValidationError);
    EXPECT_THROW((void)parse_experiment(R"({"runs":"ten"})"), ValidationError);
    EXPECT_THROW((void)parse_experiment(R"({"m":1})"), ValidationError);
    EXPECT_THROW((void)parse_experiment(R"({"horizon":0})"), ValidationError);
    EXPECT_THROW((void)parse_experiment(R"({"init_box":{"v":[2,1]}})"), ValidationError);
    EXPECT_THROW((void)parse_experiment(R"({"strategy":"sometimes"})"), ValidationError);
}

TEST(ExperimentSpec, RelativePathsResolveAgainstTheFile)
{
    const auto s = parse_experiment(R"({"model":"plant.model","artifact":"a.json","bac":"/abs/h.bac"})", "/data/exp");
    EXPECT_EQ(s.model, "/data/exp/plant.model");
    EXPECT_EQ(s.artifact, "/data/exp/a.json");
    EXPECT_EQ(s.bac, "/abs/h.bac");
    EXPECT_EQ(parse_experiment(R"({"model":"m2"})", "/data/exp").model, "m2");
}

TEST(Metrics, EnteringAtStepKAndStayingGivesCtKEta)
{
    const double eta = 0.0032;
    for (std::size_t k : {0U, 1U, 17U, 250U}) {
        std::vector<double> y(300, 0.5);
        for (std::size_t i = k; i < y.size(); ++i) y[i] = 0.48 + 0.0005;
        const Convergence c = convergence(y, 0.48, 0.001, eta);
        ASSERT_TRUE(c.converged) << k;
        EXPECT_EQ(*c.entry, static_cast<double>(k) * eta);
        EXPECT_EQ(*c.settled, static_cast<double>(k) * eta);
        EXPECT_NEAR(c.delta, 0.0005, 1e-15);
    }
}

TEST(Metrics, EntryAndSettledDiffer)
{
    // in the band at 2, out at 3..4, back from 5 on
    const std::vector<double> y{1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0};
    const Convergence c = convergence(y, 0.0, 0.5, 0.1);
    ASSERT_TRUE(c.converged);
    EXPECT_DOUBLE_EQ(*c.entry, 0.2);
    EXPECT_DOUBLE_EQ(*c.settled, 0.5);
    EXPECT_DOUBLE_EQ(c.delta, 2.0 / 6.0);

    const Convergence leaves = convergence(std::vector<double>{0.0, 0.0, 1.0}, 0.0, 0.5, 0.1);
    EXPECT_FALSE(leaves.converged);
    EXPECT_TRUE(leaves.entry);
    EXPECT_FALSE(convergence(std::vector<double>{2.0, 3.0}, 0.0, 0.5, 0.1).entry);
    EXPECT_FALSE(convergence(std::vector<double>{}, 0.0, 0.5, 0.1).entry);
}

TEST(Metrics, BandEdgeCountsAsInside)
{
    const Convergence c = convergence(std::vector<double>{0.25, 0.5}, 0.0, 0.5, 1.0);
    EXPECT_TRUE(c.converged);
    EXPECT_EQ(*c.entry, 0.0);
}

TEST(Metrics, RandomTracesRespectOrdering)
{
    bcsimplex::testing::Gen g(11);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> y(static_cast<std::size_t>(g.integer(1, 40)));
        for (auto& v : y) v = g.uniform(-1.0, 1.0);
        const double eps = g.uniform(0.0, 1.0);
        const Convergence c = convergence(y, 0.0, eps, 0.01);
        if (c.converged) {
            ASSERT_TRUE(c.entry && c.settled);
            EXPECT_LE(*c.entry, *c.settled);
            double worst = 0.0;
            for (std::size_t k = static_cast<std::size_t>(std::llround(*c.entry / 0.01)); k < y.size(); ++k) worst = std::max(worst, std::abs(y[k]));
            EXPECT_LE(c.delta, worst);
            EXPECT_LE(std::abs(y.back()), eps);
        } else {
            EXPECT_GT(std::abs(y.back()), eps);
        }
    }
}

TEST(Metrics, StatIsPopulationMoments)
{
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const Stat s = stat_of(v);
    EXPECT_EQ(s.count, 4U);
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.stddev, std::sqrt(1.25));
    EXPECT_EQ(stat_of(std::vector<double>{}).count, 0U);
}

TEST(Metrics, AllConvergedGivesFullRate)
{
    std::vector<RunOutcome> runs(5);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        runs[i].conv.converged = true;
        runs[i].conv.entry = 0.1 * static_cast<double>(i);
        runs[i].conv.settled = runs[i].conv.entry;
    }
    const MetricsSummary s = summarize(runs, 0.1);
    EXPECT_EQ(s.cr, 100.0);
    EXPECT_EQ(s.ct.count, 5U);
    EXPECT_DOUBLE_EQ(s.ct.mean, 0.2);

    runs[0].conv = {};
    runs[3].conv = {};
    EXPECT_DOUBLE_EQ(summarize(runs, 0.1).cr, 60.0);
    EXPECT_EQ(summarize(runs, 0.1).ct.count, 3U);
}

TEST(Metrics, SwitchGapsFromRecords)
{
    RunOutcome r;
    r.shielded.first_forward = 30;
    r.shielded.first_reverse_after_forward = 38;
    r.twin = RunRecord{};
    r.twin->violation = Violation{32, 0.1, {}};
    RunOutcome quiet;
    quiet.twin = RunRecord{};
    const std::vector<RunOutcome> runs{r, quiet};
    const MetricsSummary s = summarize(runs, 0.0032);
    EXPECT_EQ(s.runs_with_switch, 1U);
    EXPECT_EQ(s.steps_to_forward.mean, 30.0);
    EXPECT_EQ(s.forward_to_reverse.mean, 8.0);
    EXPECT_EQ(s.switch_to_violation.mean, 3.0);
    EXPECT_EQ(s.twin_violations, 1U);
    EXPECT_EQ(s.violations, 0U);
}

TEST(Reward, ThreeClauses)
{
    DynSystem sys = builtin("scalar");
    DeriveOptions o;
    o.n = 1;
    const auto art = derive_artifact(sys, load_bac(models + "/scalar.bac", sys), o).artifact;
    const std::vector<double> calm{0.0};
    const std::vector<double> edge{0.95};
    const std::vector<double> up{1.0};
    EXPECT_EQ(reward_eval(art, edge, up, 0.48, 0.48, 0.001, 100.0), -1000.0);
    EXPECT_EQ(reward_eval(art, calm, up, 0.48, 0.48, 0.001, 100.0), 100.0);
    EXPECT_EQ(reward_eval(art, calm, up, 0.4805, 0.48, 0.001, 100.0), 100.0);
    EXPECT_NEAR(reward_eval(art, calm, up, 0.49, 0.48, 0.001, 100.0), -0.01, 1e-15);
}

TEST(Experiment, UnsafeConstantControllerIsShielded)
{
    const ExperimentResult r = run_experiment(unsafe_m1(20));
    ASSERT_EQ(r.runs.size(), 20U);
    EXPECT_EQ(r.summary.violations, 0U);
    EXPECT_EQ(r.summary.twin_violations, 20U);
    EXPECT_EQ(r.summary.runs_with_switch, 20U);
    EXPECT_GE(r.summary.switch_to_violation.mean, 1.0);
    EXPECT_LE(r.summary.switch_to_violation.mean, 10.0);
    // the forward switch fires before the band edge
    EXPECT_LT(r.summary.output_at_switch.mean, 0.48 * 1.03);
}

TEST(Experiment, TwinsShareStartAndAgreeUntilTheForwardSwitch)
{
    const ExperimentResult r = run_experiment(unsafe_m1(8));
    for (const auto& run : r.runs) {
        ASSERT_TRUE(run.twin);
        ASSERT_TRUE(run.shielded.first_forward);
        EXPECT_EQ(run.shielded.rows.front().x, run.x0);
        EXPECT_EQ(run.twin->rows.front().x, run.x0);
        const std::size_t f = *run.shielded.first_forward;
        ASSERT_LT(f, run.twin->rows.size());
        for (std::size_t k = 0; k <= f; ++k) EXPECT_EQ(run.shielded.rows[k].x, run.twin->rows[k].x) << k;
    }
}

TEST(Experiment, InitialStatesFollowTheSeedAndBox)
{
    ExperimentSpec s = unsafe_m1(6);
    s.twins = false;
    s.init_box["v"] = Interval(0.47, 0.471);
    const ExperimentResult a = run_experiment(s);
    for (const auto& run : a.runs) {
        EXPECT_GE(run.x0[0], 0.47);
        EXPECT_LT(run.x0[0], 0.471);
        EXPECT_EQ(run.x0[1], 0.2);
    }
    // run i is seeded with seed + i
    UniformStream u(s.seed + 3);
    EXPECT_EQ(a.runs[3].x0[0], 0.47 + u() * (0.471 - 0.47));
    s.seed += 1;
    EXPECT_EQ(run_experiment(s).runs[2].x0, a.runs[3].x0);
}

TEST(Experiment, WorkerCountDoesNotChangeOutputs)
{
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "bcsimplex_harness_det";
    fs::remove_all(root);
    ExperimentSpec s = unsafe_m1(6);
    s.workers = 1;
    const auto [sys, art] = resolve_experiment(s);
    write_experiment(run_experiment(s, sys, art), sys, root / "a");
    s.workers = 4;
    write_experiment(run_experiment(s, sys, art), sys, root / "b");
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(root / "a")) {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(root / "b" / e.path().filename())) << e.path();
    }
    EXPECT_EQ(files, 13U);
    fs::remove_all(root);
}

TEST(Experiment, MOverrideAndMismatchedArtifact)
{
    ExperimentSpec s = unsafe_m1(2);
    s.m = 4;
    EXPECT_EQ(run_experiment(s).artifact.m, 4);

    DynSystem scalar = builtin("scalar");
    DeriveOptions o;
    o.n = 1;
    const auto art = derive_artifact(scalar, load_bac(models + "/scalar.bac", scalar), o).artifact;
    EXPECT_THROW((void)run_experiment(s, builtin("m1"), art), ValidationError);

    ExperimentSpec bad = unsafe_m1(2);
    bad.ac = "wobbly";
    EXPECT_THROW((void)run_experiment(bad), ValidationError);

    ExperimentSpec nobac = unsafe_m1(2);
    nobac.model = "m2";
    EXPECT_THROW((void)run_experiment(nobac), ValidationError);
}

TEST(Experiment, SummaryJsonIsStable)
{
    const ExperimentResult r = run_experiment(unsafe_m1(3));
    const std::string j = summary_json(r.summary);
    EXPECT_EQ(j, summary_json(run_experiment(unsafe_m1(3)).summary));
    EXPECT_NE(j.find("\"twin_violations\": 3"), std::string::npos);
    EXPECT_NE(summary_text(r.summary, 0.0032).find("violations (shielded) 0"), std::string::npos);
}

TEST(Falsify, UnsafeConstantControllerHasAWitness)
{
    const DynSystem sys = builtin("m1");
    auto ac = make_controller("constant:0.1", sys);
    FalsifyOptions o;
    o.budget = 100;
    const auto w = falsify_controller(sys, *ac, o);
    ASSERT_TRUE(w);
    EXPECT_LE(w->evaluations, 100U);
    EXPECT_GT(w->t, 0.0);
    EXPECT_LE(w->t, o.horizon);
    ASSERT_EQ(w->x0.size(), 2U);
    EXPECT_GE(w->x0[0], 0.48 * 0.99);
    EXPECT_LE(w->x0[0], 0.48 * 1.01);
}

TEST(Falsify, HillClimbFindsANarrowWitness)
{
    // only starts within 1e-3 of the top of the init box reach the unsafe
    // set inside the horizon
    DynSystem sys = load_text(R"(
states x
inputs u
params
  eta = 0.1
dynamics
  dx/dt = u
admissible
  x in [-2, 2]
controls
  u in [-1, 1]
unsafe
  unsafe when 0.999 - x < 0
init
  x in [0, 0.9]
)",
                              "narrow");
    auto ac = make_controller("constant:0.5", sys);
    FalsifyOptions o;
    o.budget = 400;
    o.horizon = 0.2;
    o.seed = 3;
    const auto w = falsify_controller(sys, *ac, o);
    ASSERT_TRUE(w);
    EXPECT_GT(w->x0[0], 0.899);
}

TEST(Falsify, CertifiedBaselineHasNoWitness)
{
    const DynSystem sys = builtin("m1");
    auto ac = make_controller("baseline", sys);
    FalsifyOptions o;
    o.budget = 10000;
    o.horizon = 0.2;
    EXPECT_FALSE(falsify_controller(sys, *ac, o));
}

TEST(Falsify, ZeroBudgetIsEmpty)
{
    const DynSystem sys = builtin("m1");
    auto ac = make_controller("constant:0.1", sys);
    FalsifyOptions o;
    o.budget = 0;
    EXPECT_FALSE(falsify_controller(sys, *ac, o));
}
