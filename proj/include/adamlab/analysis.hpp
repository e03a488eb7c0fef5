#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adamlab/noise.hpp"
#include "adamlab/objectives.hpp"
#include "adamlab/optimizers.hpp"

namespace adamlab {

inline constexpr double kInequalityTolerance = 1e-9;

/// Slack is (rhs - lhs) / max(1, |rhs|); an instance is a violation when its
/// slack is below -kInequalityTolerance.
struct InequalityReport {
    std::string name;
    std::int64_t instances = 0;
    std::int64_t violations = 0;
    /// Instances not asserted because the inequality's own hypothesis failed.
    std::int64_t skipped = 0;
    double worst_slack = 0.0;
    /// JSON text of the first violating instance with enough to replay it.
    std::optional<std::string> witness{};

    bool passed() const noexcept { return violations == 0; }
    /// Folds one instance in; returns true when it is a violation.
    bool add(double lhs, double rhs);
};

std::string to_json(const InequalityReport& report);

/// Update-norm bound eta (1 - beta1) / (sqrt(1 - beta2) sqrt(1 - beta1^2 / beta2)).
double lemma1_bound(double eta, double beta1, double beta2);

/// Per-step check on an adam trajectory recorded with keep_trace.
InequalityReport check_lemma1(const TrajectoryRecord& trajectory, const HyperParams<double>& hyper);

/// Random adam runs (m0 = 0, random dimension, constants and gradients)
/// totalling `n_steps` steps.
InequalityReport check_lemma1_random(std::int64_t n_steps, std::uint64_t seed);

struct Lemma2Options {
    double box_lo = -4.0;
    double box_hi = 4.0;
    /// Take the inner product with grad f(w1) instead of grad f(w3); this is
    /// the form the proof's integral argument produces.
    bool anchor_at_w1 = false;
};

InequalityReport check_lemma2(const Objective& obj, std::int64_t n_triples, std::uint64_t seed,
                              const Lemma2Options& options = {});

struct Lemma3Sides {
    double lhs = 0.0;
    double rhs = 0.0;
};

/// Both sides for one sequence, with c_0 = 0.
Lemma3Sides lemma3_sides(const std::vector<double>& a, double beta1, double beta2, double b0);

InequalityReport check_lemma3(std::int64_t n_sequences, std::int64_t length, std::uint64_t seed);

struct Lemma45Report {
    InequalityReport lemma4;
    InequalityReport lemma5;
};

/// Needs an adam trace with constant beta2 >= beta1, m0 = 0 and lambda = 0.
/// Steps violating the lemma-5 displacement condition (1 - beta1^{1/8}) / (6 L1)
/// make the remainder of the trajectory count as skipped for lemma 5.
Lemma45Report check_lemma45(const TrajectoryRecord& trajectory, const Objective& obj,
                            const HyperParams<double>& hyper);

struct RateFit {
    std::vector<std::pair<double, double>> points;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Least squares of log(metric) on log(T).
RateFit fit_rate_exponent(const std::vector<std::pair<double, double>>& points);

std::string to_json(const RateFit& fit);

/// First t with ||grad f(w_t)|| < epsilon, or nullopt.
std::optional<std::int64_t> steps_to_epsilon(const TrajectoryRecord& trajectory, double epsilon);

struct TuneCell {
    double eta = 0.0;
    double beta = 0.0;
    std::optional<std::int64_t> steps;
    std::string status;
};

struct TuneResult {
    double eta = 0.0;
    double beta = 0.0;
    std::optional<std::int64_t> steps;
    std::vector<TuneCell> cells;
};

struct TuneOptions {
    unsigned workers = 0;  // 0: hardware concurrency
    MomentumInit momentum_init = MomentumInit::zero;
    /// For adam the beta grid sets beta1; beta2 comes from here.
    double beta2 = 0.999;
};

/// Geometric grid of n points over [lo, hi].
std::vector<double> geometric_grid(double lo, double hi, int n);

/// Runs every (eta, beta) cell with a constant schedule and returns the one
/// with fewest steps to epsilon; ties go to smaller eta, then smaller beta.
TuneResult tune_best(OptimizerKind optimizer, const Objective& obj, const OracleConfig& oracle,
                     const Eigen::Ref<const Vector>& w1, std::int64_t T, double epsilon,
                     const std::vector<double>& eta_grid, const std::vector<double>& beta_grid,
                     const TuneOptions& options = {});

enum class Regime { f1_catches, f2_catches, f3_catches };

std::string to_string(Regime regime);

struct RegimeThresholds {
    double eta_star = 0.0;  // learning-rate threshold shared by the three lemmas
    double beta_star = 0.0; // momentum ceiling (f1) / floor (f3)
};

RegimeThresholds gdm_thresholds(double l0, double l1, double epsilon, double delta1);

/// Names the counterexample whose lemma covers GDM with (eta, beta). Points on
/// a threshold go to the large-eta / large-beta side. Throws CoverageGap when
/// the covering lemma's hypotheses on (l0, l1, epsilon, delta1) fail.
Regime gdm_regime_probe(double eta, double beta, double l0, double l1, double epsilon, double delta1);

struct ProbeRun {
    Regime regime = Regime::f2_catches;
    double start = 0.0;
    /// Steps over which the lemma guarantees ||f'|| >= epsilon; for f1 the
    /// guarantee is unbounded and the run stops at divergence or `f1_cap`.
    std::int64_t horizon = 0;
    std::int64_t checked = 0;
    double min_grad = 0.0;
    std::optional<std::int64_t> first_below;
    std::optional<std::int64_t> diverged_at;

    bool held() const noexcept { return !first_below.has_value(); }
};

/// Probes (eta, beta), then runs GDM with m_1 = g_1 on the named 1D function
/// from its gap-calibrated start and checks the gradient stays >= epsilon.
ProbeRun probe_and_run(double eta, double beta, double l0, double l1, double epsilon, double delta1,
                       std::int64_t f1_cap = 1'000'000);

}  // namespace adamlab
