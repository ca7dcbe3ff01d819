#include <benchmark/benchmark.h>

#include "bcsimplex/certify.hpp"
#include "bcsimplex/harness.hpp"
#include "bcsimplex/model.hpp"
#include "bcsimplex/runtime.hpp"
#include "bcsimplex/switching.hpp"

using namespace bcsimplex;

namespace {

const DynSystem& m1()
{
    static const DynSystem sys = builtin("m1");
    return sys;
}

const SwitchingArtifact& m1_artifact(Strategy s)
{
    static const auto derive = [](Strategy st) {
        DeriveOptions o;
        o.strategy = st;
        return derive_artifact(m1(), parse_bac(*builtin_bac_source("m1"), m1()), o).artifact;
    };
    static const SwitchingArtifact per_action = derive(Strategy::PerAction);
    static const SwitchingArtifact global = derive(Strategy::Global);
    return s == Strategy::PerAction ? per_action : global;
}

} // namespace

// Enclosure of every M2 derivative over A x Omega.
static void BM_BoxBoundM2Dynamics(benchmark::State& state)
{
    const DynSystem sys = builtin("m2");
    const IntervalBox box = sys.admissible.concat(sys.controls);
    const int depth = static_cast<int>(state.range(0));
    for (auto _ : state) {
        for (const auto& f : sys.rhs) benchmark::DoNotOptimize(box_bound(f, box, depth));
    }
}
BENCHMARK(BM_BoxBoundM2Dynamics)->Arg(0)->Arg(3)->Arg(6);

// Remainder term of the M1 Taylor chain.
static void BM_BoxBoundM1Remainder(benchmark::State& state)
{
    const SwitchingArtifact& art = m1_artifact(Strategy::PerAction);
    const IntervalBox box = art.admissible.concat(art.controls);
    for (auto _ : state) benchmark::DoNotOptimize(box_bound(art.chain.back(), box, art.depth));
}
BENCHMARK(BM_BoxBoundM1Remainder);

// One forward-condition evaluation with fresh per-action bounds.
static void BM_FscEvalPerAction(benchmark::State& state)
{
    const SwitchingArtifact& art = m1_artifact(Strategy::PerAction);
    const std::vector<double> x{0.481, 0.2};
    std::vector<double> u{0.05};
    for (auto _ : state) {
        u[0] = u[0] == 0.05 ? 0.06 : 0.05;
        benchmark::DoNotOptimize(fsc_eval(art, x, u));
    }
}
BENCHMARK(BM_FscEvalPerAction);

static void BM_FscEvalGlobal(benchmark::State& state)
{
    const SwitchingArtifact& art = m1_artifact(Strategy::Global);
    const std::vector<double> x{0.481, 0.2};
    const std::vector<double> u{0.05};
    for (auto _ : state) benchmark::DoNotOptimize(fsc_eval(art, x, u));
}
BENCHMARK(BM_FscEvalGlobal);

// One second of the shielded M1 loop under the unsafe constant controller.
static void BM_SimulateM1OneSecond(benchmark::State& state)
{
    const SwitchingArtifact& art = m1_artifact(Strategy::PerAction);
    auto ac = make_controller("constant:0.1", m1());
    auto bc = make_controller("baseline", m1());
    SimOptions so;
    so.horizon = 1.0;
    const std::vector<double> x0{0.48, 0.2};
    for (auto _ : state) benchmark::DoNotOptimize(simulate_run(m1(), art, *ac, *bc, x0, so));
    state.counters["periods"] = benchmark::Counter(static_cast<double>(std::llround(so.horizon / art.eta)),
                                                   benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_SimulateM1OneSecond)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
