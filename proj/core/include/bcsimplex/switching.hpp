#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bcsimplex/certify.hpp"
#include "bcsimplex/dyn_system.hpp"
#include "bcsimplex/interval.hpp"
#include "bcsimplex/polynomial.hpp"

namespace bcsimplex {

/// Per-action bounds evaluate lambda(u) and mu(u) for the proposed action;
/// global bounds use the supremum over all of Omega.
enum class Strategy { PerAction, Global };

std::string to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

/// Everything the runtime needs to evaluate the switching conditions.
struct SwitchingArtifact {
    std::vector<std::string> states;
    std::vector<std::string> inputs;
    int n = 4;      ///< Taylor order
    double eta = 0; ///< control period
    int m = 3;      ///< reverse-switch multiplier
    Strategy strategy = Strategy::PerAction;
    int depth = 6; ///< bisection depth for runtime bounds
    std::string model_hash;

    std::vector<Polynomial> chain;    ///< h^0 .. h^{n+1}, over states then inputs
    std::vector<Polynomial> dynamics; ///< f, over states then inputs
    std::vector<Polynomial> baseline; ///< baseline law, over states
    IntervalBox admissible;
    IntervalBox controls;
    std::vector<Polynomial> unsafe;
    double gamma = 1.0;

    double lambda_global = 0.0;
    std::vector<double> mu_dec_global;
    std::vector<double> mu_inc_global;

    [[nodiscard]] std::vector<std::string> variables() const;
    /// h(x); inputs do not enter h.
    [[nodiscard]] double h(std::span<const double> x) const;
};

bool operator==(const SwitchingArtifact& a, const SwitchingArtifact& b);

/// h^0 = h, h^{i+1} = L_f h^i; n + 2 polynomials over states then inputs.
std::vector<Polynomial> taylor_chain(const Polynomial& h, const DynSystem& sys, int n);

/// Taylor predictor sum_{i=0..n} h^i(x, u) eta^i / i!.
double taylor_predict(const SwitchingArtifact& art, std::span<const double> x, std::span<const double> u);

struct MuBounds {
    std::vector<double> dec;
    std::vector<double> inc;
};

/// Sound upper bound on the Taylor remainder over A for action u, or over
/// A x Omega when u is empty. Throws ValidationError if u is outside Omega.
double lambda_bound(const SwitchingArtifact& art, std::optional<std::span<const double>> u);

/// One-period decrease/increase bounds per state for action u (or all of Omega).
MuBounds mu_bounds(const SwitchingArtifact& art, std::optional<std::span<const double>> u);

/// Open box {x : lb + k*mu_dec < x < ub - k*mu_inc}; nullopt when empty. The
/// returned box holds the open box's closure; membership must be tested with
/// IntervalBox::contains_open.
std::optional<IntervalBox> restricted_region(const IntervalBox& admissible, const MuBounds& mu, double multiplier);

/// Per-action bounds used by the runtime, clipped by the global ones.
struct ActionBounds {
    double lambda = 0.0;
    MuBounds mu;
    std::optional<IntervalBox> region; ///< A_r(u)
};

ActionBounds action_bounds(const SwitchingArtifact& art, std::span<const double> u);

/// Caches the bounds for the most recent action; constant controllers hit it
/// every period.
class ActionBoundCache {
public:
    explicit ActionBoundCache(const SwitchingArtifact& art) : art_(&art) {}
    const ActionBounds& get(std::span<const double> u);
    [[nodiscard]] std::size_t misses() const { return misses_; }

private:
    const SwitchingArtifact* art_;
    std::vector<double> key_;
    std::optional<ActionBounds> value_;
    std::size_t misses_ = 0;
};

struct DeriveOptions {
    int n = 4;
    std::optional<double> eta; ///< defaults to the system's control period
    int m = 3;
    Strategy strategy = Strategy::PerAction;
    int depth = 6;
    bool force = false;          ///< accept a falsified certificate
    std::size_t budget = 10000;  ///< check_bac samples
};

struct DeriveResult {
    SwitchingArtifact artifact;
    CertReport report;
    std::vector<std::string> warnings;
};

/// Build the artifact. Throws ValidationError when the certificate is
/// falsified (unless forced) or when A_r is empty under the global bounds.
DeriveResult derive_artifact(const DynSystem& sys, const BarrierCertificate& bc, const DeriveOptions& opts = {});

/// Deterministic JSON text (fixed field order, 17 significant digits).
std::string serialize(const SwitchingArtifact& art);
/// Parse and re-check the chain invariant; throws ValidationError.
SwitchingArtifact deserialize(std::string_view text);
SwitchingArtifact load_artifact(const std::string& path);

} // namespace bcsimplex
