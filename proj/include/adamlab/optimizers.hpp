#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adamlab/errors.hpp"
#include "adamlab/noise.hpp"
#include "adamlab/objectives.hpp"

namespace adamlab {

enum class MomentumInit { zero, first_gradient };

template <typename Scalar = double>
struct HyperParams {
    Scalar eta = Scalar(0.01);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar lambda = Scalar(0);
    /// Initial conditioner; unset means sigma0^2 for stochastic oracles, 1 otherwise.
    std::optional<Scalar> nu0;
    /// Initial momentum; empty means zero (or g_1 under MomentumInit::first_gradient).
    VectorX<Scalar> m0;
    MomentumInit momentum_init = MomentumInit::zero;
};

template <typename Scalar = double>
struct AdamState {
    VectorX<Scalar> w;
    VectorX<Scalar> m;
    Scalar nu = Scalar(1);
    std::int64_t t = 0;
};

template <typename Scalar = double>
struct SgdmState {
    VectorX<Scalar> w;
    VectorX<Scalar> m;
    std::int64_t t = 0;
};

template <typename Scalar = double>
struct AdaGradState {
    VectorX<Scalar> w;
    Scalar v_sum = Scalar(0);
    std::int64_t t = 0;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& g, std::int64_t t) {
    if (!g.allFinite()) {
        throw NumericError("non-finite gradient at step " + std::to_string(t), t);
    }
}

}  // namespace detail

template <typename Scalar, typename Derived>
AdamState<Scalar> adam_step(const AdamState<Scalar>& s, const HyperParams<Scalar>& h,
                            const Eigen::MatrixBase<Derived>& g) {
    detail::require_finite(g, s.t + 1);
    AdamState<Scalar> out;
    out.nu = h.beta2 * s.nu + (Scalar(1) - h.beta2) * g.squaredNorm();
    out.m = h.beta1 * s.m + (Scalar(1) - h.beta1) * g;
    out.w = s.w - (h.eta / (h.lambda + std::sqrt(out.nu))) * out.m;
    out.t = s.t + 1;
    return out;
}

template <typename Scalar, typename Derived>
SgdmState<Scalar> sgdm_step(const SgdmState<Scalar>& s, Scalar eta, Scalar beta, const Eigen::MatrixBase<Derived>& g) {
    detail::require_finite(g, s.t + 1);
    SgdmState<Scalar> out;
    out.m = beta * s.m + (Scalar(1) - beta) * g;
    out.w = s.w - eta * out.m;
    out.t = s.t + 1;
    return out;
}

template <typename Scalar, typename Derived>
AdaGradState<Scalar> adagrad_step(const AdaGradState<Scalar>& s, Scalar eta, const Eigen::MatrixBase<Derived>& g) {
    detail::require_finite(g, s.t + 1);
    AdaGradState<Scalar> out;
    out.v_sum = s.v_sum + g.squaredNorm();
    if (!(out.v_sum > Scalar(0))) {
        throw NumericError("adagrad division guard: accumulated squared norm is zero at step " +
                               std::to_string(s.t + 1),
                           s.t + 1);
    }
    out.w = s.w - (eta / std::sqrt(out.v_sum)) * g;
    out.t = s.t + 1;
    return out;
}

enum class ScheduleKind { constant, thm1_deterministic, thm3_stochastic, thm5_stochastic, thm6_agnostic };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

struct ScheduleValue {
    double eta = 0.0;
    /// Unset for a constant schedule built without beta2.
    std::optional<double> beta2;
};

class Schedule {
public:
    Schedule() = default;
    Schedule(ScheduleKind kind, ParamMap inputs, ScheduleValue fixed);

    ScheduleKind kind() const noexcept { return kind_; }
    const ParamMap& inputs() const noexcept { return inputs_; }
    /// (eta_t, beta2_t) for t >= 1.
    ScheduleValue at(std::int64_t t) const;

private:
    ScheduleKind kind_ = ScheduleKind::constant;
    ParamMap inputs_;
    ScheduleValue fixed_;
};

/// Required inputs per kind:
///   constant: eta (beta2 optional)
///   thm1_deterministic: T, delta1, l0, beta1, beta2
///   thm3_stochastic: T, delta1, l0, l1, sigma0, sigma1, beta1
///   thm5_stochastic: T, delta1, l0, l1, sigma1, beta1
///   thm6_agnostic: none
/// Missing inputs and emitted beta2 outside the valid range raise ConfigError.
Schedule make_schedule(ScheduleKind kind, const ParamMap& inputs);

/// thm3_stochastic's beta2 appears on both sides of its defining equation;
/// solved by fixed-point iteration. Exposed for testing.
double thm3_beta2(double eta, double l0, double l1, double sigma1, double beta1);

enum class OptimizerKind { adam, sgdm, gd, adagrad };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct TrajectoryRow {
    std::int64_t t = 0;
    double grad_norm = 0.0;  // ||grad f(w_t)||
    double gap = 0.0;        // f(w_t) - f*
    double step_norm = 0.0;  // ||w_{t+1} - w_t||
    double nu = 0.0;         // nu_t, 0 for optimizers without a conditioner
};

/// Per-step quantities kept when TrajectoryOptions::keep_trace is set.
struct TraceStep {
    double eta = 0.0;
    double beta2 = 0.0;
    double g_norm2 = 0.0;     // ||g_t||^2 (oracle)
    double G_norm2 = 0.0;     // ||grad f(w_t)||^2
    double m_norm2 = 0.0;     // ||m_t||^2
    double nu = 0.0;          // nu_t
    double nu_prev = 0.0;     // nu_{t-1}
    double step_norm = 0.0;
};

struct TrajectoryRecord {
    std::string fingerprint;
    std::int64_t horizon = 0;
    std::uint64_t replica = 0;
    std::vector<TrajectoryRow> rows;
    double running_min_grad = 0.0;
    double running_mean_grad = 0.0;
    /// ||grad f(w_t)|| for t = 1..steps taken; empty when not stored.
    std::vector<double> grad_norms;
    std::vector<TraceStep> trace;
    std::int64_t steps = 0;
    /// First t whose true gradient norm fell below TrajectoryOptions::stop_below.
    std::optional<std::int64_t> first_below;
    std::optional<std::int64_t> diverged_at;
    /// Numeric error raised by a step, with its index.
    std::optional<std::string> error;

    bool diverged() const noexcept { return diverged_at.has_value(); }
    std::string status() const;
};

struct TrajectoryOptions {
    std::int64_t record_every = 1;
    double guard = 1e12;
    bool store_grad_norms = true;
    bool keep_trace = false;
    /// Stop as soon as the true gradient norm drops below this value.
    std::optional<double> stop_below;
    /// RNG stream index under the oracle's master seed.
    std::uint64_t stream = 0;
};

TrajectoryRecord run_trajectory(OptimizerKind optimizer, const Objective& obj, const OracleConfig& oracle,
                                const Schedule& schedule, const HyperParams<double>& hyper,
                                const Eigen::Ref<const Vector>& w1, std::int64_t T,
                                const TrajectoryOptions& options = {});

}  // namespace adamlab
