#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bcsimplex/model.hpp"
#include "bcsimplex/runtime.hpp"
#include "bcsimplex/switching.hpp"

namespace bcsimplex {

/// Seeded uniform [0, 1) stream: (rng() >> 11) * 2^-53 over mt19937_64.
class UniformStream {
public:
    explicit UniformStream(std::uint64_t seed) : rng_(seed) {}
    double operator()() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 rng_;
};

struct ExperimentSpec {
    std::string model = "m1";
    ParamOverrides params;
    std::string artifact;            ///< path; empty derives one from `bac`
    std::string bac;                 ///< path; empty uses the builtin certificate
    int order = 4;                   ///< used only when deriving
    std::string strategy = "per-action";
    std::string ac = "baseline";
    std::string bc = "baseline";
    std::size_t runs = 100;
    std::map<std::string, Interval> init_box; ///< per-state overrides of the model's init
    double horizon = 10.0;
    bool shield = true;
    bool twins = true; ///< also run each initial state unshielded
    std::optional<int> m;
    std::uint64_t seed = 1;
    int substeps = 8;
    double epsilon = 0.001;
    unsigned workers = 0; ///< 0: hardware concurrency
};

/// JSON experiment file. Relative paths are resolved against `base`.
ExperimentSpec parse_experiment(std::string_view json_text, const std::filesystem::path& base = {});
ExperimentSpec load_experiment(const std::filesystem::path& path);

/// Convergence of the monitored output to the band [ref - eps, ref + eps].
struct Convergence {
    bool converged = false;       ///< in the band from some period to the end of the run
    std::optional<double> entry;  ///< first time in the band (CT)
    std::optional<double> settled; ///< start of the final stay in the band
    double delta = 0.0;           ///< mean |y - ref| from entry to the end
};

/// `output[k]` is the monitored output at time k * eta.
Convergence convergence(std::span<const double> output, double ref, double eps, double eta);

struct RunOutcome {
    std::vector<double> x0;
    RunRecord shielded;
    std::optional<RunRecord> twin;
    Convergence conv;
};

struct Stat {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0; ///< population standard deviation
};

Stat stat_of(std::span<const double> values);

struct MetricsSummary {
    std::size_t runs = 0;
    double cr = 0.0; ///< percent of converged runs
    Stat ct;         ///< entry time over converged runs
    Stat settled;
    Stat delta;
    std::size_t violations = 0;      ///< shielded runs with a violation
    std::size_t twin_violations = 0; ///< unshielded twins with a violation
    std::size_t runs_with_switch = 0;
    Stat steps_to_forward;          ///< periods until the first forward switch
    Stat forward_to_reverse;        ///< periods from first forward to the next reverse switch
    Stat switch_to_violation;       ///< twin violation period + 1 - forward switch period
    Stat output_at_switch;          ///< monitored output when the first forward switch fires
    std::size_t timeouts = 0;
    std::size_t clamps = 0;
};

struct ExperimentResult {
    ExperimentSpec spec;
    SwitchingArtifact artifact;
    std::vector<RunOutcome> runs;
    MetricsSummary summary;
};

/// Loads the model and artifact named by the spec (deriving one if needed).
std::pair<DynSystem, SwitchingArtifact> resolve_experiment(const ExperimentSpec& spec);

/// Runs every initial state (and its unshielded twin) on a worker pool and
/// merges results in run order.
ExperimentResult run_experiment(const ExperimentSpec& spec, const DynSystem& sys, const SwitchingArtifact& art);
ExperimentResult run_experiment(const ExperimentSpec& spec);

MetricsSummary summarize(std::span<const RunOutcome> runs, double eta);

/// Deterministic JSON summary.
std::string summary_json(const MetricsSummary& s);
/// Human-readable summary.
std::string summary_text(const MetricsSummary& s, double eta);

/// run_NNN.csv (+ run_NNN_twin.csv) and summary.json under `dir`.
void write_experiment(const ExperimentResult& result, const DynSystem& sys, const std::filesystem::path& dir);

/// -1000 if FSC(x, u); +100 if |v - v_ref| <= eps; otherwise -w (v - v_ref)^2.
double reward_eval(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u, double v, double v_ref,
                   double eps, double w);

struct FalsifyOptions {
    std::size_t budget = 1000; ///< rollouts
    std::uint64_t seed = 1;
    double horizon = 1.0;
    int substeps = 8;
};

struct Witness {
    std::vector<double> x0;
    double t = 0.0;              ///< time of the first unsafe substep
    std::size_t evaluations = 0; ///< rollouts spent
};

/// Black-box search for an initial state from which the unshielded
/// controller reaches the unsafe set: random starts, then coordinate
/// hill-climbing on the minimum safety margin. nullopt when none is found.
std::optional<Witness> falsify_controller(const DynSystem& sys, Controller& ac, const FalsifyOptions& opts);

} // namespace bcsimplex
