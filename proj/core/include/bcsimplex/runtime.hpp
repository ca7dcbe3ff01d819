#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bcsimplex/dyn_system.hpp"
#include "bcsimplex/switching.hpp"
#include "bcsimplex/wire.hpp"

namespace bcsimplex {

// ---------------------------------------------------------------------------
// Integration

using SubstepVisitor = std::function<void(std::span<const double> x)>;

/// Classical RK4, `substeps` steps over one period with u held. The visitor
/// sees the state after every substep. Throws NumericalError on a
/// non-finite state.
std::vector<double> integrate_period(const DynSystem& sys, std::span<const double> x, std::span<const double> u, double eta,
                                     int substeps, const SubstepVisitor& visit = {});

// ---------------------------------------------------------------------------
// Controllers

struct ActionResult {
    std::vector<double> u;
    bool clamped = false; ///< proposal was outside Omega and has been clamped
    bool timeout = false; ///< no action arrived in time; `u` is meaningless
};

class Controller {
public:
    virtual ~Controller() = default;
    virtual ActionResult act(double t, std::span<const double> x) = 0;
    [[nodiscard]] virtual std::string describe() const = 0;
};

/// Clamp u into the box, returning whether anything moved.
bool clamp_to(const IntervalBox& omega, std::vector<double>& u);

/// In-process controller selection:
///   baseline                       the system's baseline law
///   constant:<u1>,<u2>,...         fixed action
///   affine:K=<row>/<row>;b=<b>     u = K x + b, rows separated by '/'
std::unique_ptr<Controller> make_controller(std::string_view spec, const DynSystem& sys);

/// Remote controller on the far end of a wire connection (handshake done).
class ExternalController : public Controller {
public:
    struct Options {
        double deadline = 0.0; ///< seconds of wall clock; 0 means 0.9 * eta
        bool fallback = false; ///< on connection loss keep running with timeouts
    };

    ExternalController(wire::LineStream& stream, const DynSystem& sys, double eta, Options opts);
    ExternalController(wire::LineStream& stream, const DynSystem& sys, double eta) : ExternalController(stream, sys, eta, Options{}) {}

    ActionResult act(double t, std::span<const double> x) override;
    [[nodiscard]] std::string describe() const override { return "external"; }

    [[nodiscard]] std::size_t timeouts() const { return timeouts_; }
    [[nodiscard]] std::size_t stale() const { return stale_; }
    [[nodiscard]] bool disconnected() const { return lost_; }

private:
    wire::LineStream* stream_;
    IntervalBox omega_;
    double deadline_;
    bool fallback_;
    std::size_t outstanding_ = 0; ///< state messages not yet answered
    std::size_t timeouts_ = 0;
    std::size_t stale_ = 0;
    bool lost_ = false;
};

// ---------------------------------------------------------------------------
// Switching logic

enum class Mode { NC, BC };
std::string to_string(Mode m);

struct FscResult {
    bool fsc = false;
    bool alpha = false; ///< h_hat - lambda <= 0
    bool beta = false;  ///< x outside A_r(u)
    double h_hat = 0.0;
    double lambda = 0.0;
};

struct RscResult {
    bool rsc = false;
    bool bound_ok = false;  ///< h >= m eta |hdot|
    bool in_region = false; ///< x in A_{r,m}
    double h = 0.0;
    double hdot = 0.0; ///< h^1 under the baseline action
};

FscResult fsc_eval(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u, const ActionBounds& bounds);
FscResult fsc_eval(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u);

/// A_{r,m} from the global drift bounds; nullopt when empty.
std::optional<IntervalBox> reverse_region(const SwitchingArtifact& art);
RscResult rsc_eval(const SwitchingArtifact& art, std::span<const double> x, const std::optional<IntervalBox>& region_m);
RscResult rsc_eval(const SwitchingArtifact& art, std::span<const double> x);

/// BC if c = NC and FSC; NC if c = BC and RSC; c otherwise.
constexpr Mode dm_step(Mode c, bool fsc, bool rsc)
{
    if (c == Mode::NC && fsc) return Mode::BC;
    if (c == Mode::BC && rsc) return Mode::NC;
    return c;
}

/// Same decision evaluated from the artifact, computing only the condition it needs.
Mode dm_step(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u, Mode c);

/// Evaluates both conditions for one period, reusing per-action bounds.
class DecisionModule {
public:
    explicit DecisionModule(const SwitchingArtifact& art);
    FscResult fsc(std::span<const double> x, std::span<const double> u);
    [[nodiscard]] RscResult rsc(std::span<const double> x) const;
    [[nodiscard]] const SwitchingArtifact& artifact() const { return *art_; }

private:
    const SwitchingArtifact* art_;
    ActionBoundCache cache_;
    std::optional<IntervalBox> region_m_;
};

// ---------------------------------------------------------------------------
// Simulation

enum Event : std::uint8_t {
    EvForward = 1,
    EvReverse = 2,
    EvTimeout = 4,
    EvClamp = 8,
    EvViolation = 16,
};

std::string event_text(std::uint8_t events);

struct PeriodRow {
    double t = 0.0;
    std::vector<double> x; ///< state at the start of the period
    std::vector<double> u; ///< action applied during the period
    Mode mode = Mode::NC;  ///< controller in charge during the period
    double h = 0.0;
    FscResult fsc;         ///< FSC for the advanced controller's proposal
    RscResult rsc;
    std::uint8_t events = 0;
};

struct Violation {
    std::size_t period = 0; ///< index of the period in which it happened
    double t = 0.0;         ///< time of the offending substep
    std::vector<double> x;
};

struct RunRecord {
    std::vector<PeriodRow> rows;
    std::vector<double> final_state;
    std::optional<Violation> violation;
    std::optional<std::size_t> first_forward; ///< period index
    std::optional<std::size_t> first_reverse_after_forward;
    std::size_t forward_switches = 0;
    std::size_t reverse_switches = 0;
    std::size_t timeouts = 0;
    std::size_t clamps = 0;
    bool left_admissible = false; ///< some substep left A (monitored, never vetoed)
};

struct SimOptions {
    double horizon = 10.0;
    bool shield = true;
    int substeps = 8;
};

/// Run the Simplex loop. With the shield off the advanced controller is
/// always in charge but both conditions are still logged. Shield on requires
/// h(x0) > 0. The run stops at the horizon or at the first unsafe substep.
RunRecord simulate_run(const DynSystem& sys, const SwitchingArtifact& art, Controller& ac, Controller& bc,
                       std::span<const double> x0, const SimOptions& opts);

/// Rejects an artifact derived for a different system.
void require_matching(const DynSystem& sys, const SwitchingArtifact& art);

/// Trace CSV: t, states, inputs, controller, h, alpha, beta, fsc, rsc, event.
void write_csv(std::ostream& out, const DynSystem& sys, const RunRecord& rec);

} // namespace bcsimplex
