#include "adamlab/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace adamlab {

namespace {

double require(const ParamMap& inputs, const std::string& key) {
    const auto it = inputs.find(key);
    if (it == inputs.end()) {
        throw ConfigError("schedule." + key, "required schedule input missing");
    }
    if (!std::isfinite(it->second)) {
        throw ConfigError("schedule." + key, "must be finite");
    }
    return it->second;
}

double require_positive(const ParamMap& inputs, const std::string& key) {
    const double v = require(inputs, key);
    if (!(v > 0.0)) {
        throw ConfigError("schedule." + key, "must be positive");
    }
    return v;
}

double require_beta1(const ParamMap& inputs) {
    const double b = require(inputs, "beta1");
    if (b < 0.0 || b >= 1.0) {
        throw ConfigError("schedule.beta1", "must lie in [0, 1)");
    }
    return b;
}

void check_beta2(double beta2, const std::string& kind) {
    if (!(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("schedule.beta2", kind + " yields beta2 = " + std::to_string(beta2) +
                                                " outside [0, 1); the horizon T is too small for these constants");
    }
}

}  // namespace

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::constant: return "constant";
        case ScheduleKind::thm1_deterministic: return "thm1_deterministic";
        case ScheduleKind::thm3_stochastic: return "thm3_stochastic";
        case ScheduleKind::thm5_stochastic: return "thm5_stochastic";
        case ScheduleKind::thm6_agnostic: return "thm6_agnostic";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
    for (auto k : {ScheduleKind::constant, ScheduleKind::thm1_deterministic, ScheduleKind::thm3_stochastic,
                   ScheduleKind::thm5_stochastic, ScheduleKind::thm6_agnostic}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("schedule.kind", "unknown schedule kind '" + name + "'");
}

Schedule::Schedule(ScheduleKind kind, ParamMap inputs, ScheduleValue fixed)
    : kind_(kind), inputs_(std::move(inputs)), fixed_(fixed) {}

ScheduleValue Schedule::at(std::int64_t t) const {
    if (kind_ != ScheduleKind::thm6_agnostic) return fixed_;
    if (t < 1) {
        throw InvalidParameter("schedule queried at t < 1");
    }
    const double td = static_cast<double>(t);
    return ScheduleValue{1.0 / std::sqrt(td), 1.0 - std::pow(td, -0.75)};
}

double thm3_beta2(double eta, double l0, double l1, double sigma1, double beta1) {
    const double k = 1024.0 * sigma1 * sigma1 * (l0 + l1);
    double beta2 = 1.0 - eta * eta * k * k;
    for (int i = 0; i < 500; ++i) {
        if (!(beta2 > beta1 * beta1 && beta2 < 1.0)) {
            throw ConfigError("schedule.beta2", "thm3_stochastic fixed point left (beta1^2, 1) at beta2 = " +
                                                    std::to_string(beta2));
        }
        const double x = k * (1.0 - beta1) / (std::sqrt(1.0 - beta1 * beta1 / beta2) * (1.0 - beta1 / std::sqrt(beta2)));
        const double next = 1.0 - eta * eta * x * x;
        if (std::abs(next - beta2) <= 1e-15 * std::abs(next)) return next;
        beta2 = next;
    }
    throw ConfigError("schedule.beta2", "thm3_stochastic fixed point did not converge");
}

Schedule make_schedule(ScheduleKind kind, const ParamMap& inputs) {
    ScheduleValue v;
    switch (kind) {
        case ScheduleKind::constant: {
            v.eta = require_positive(inputs, "eta");
            if (inputs.count("beta2")) v.beta2 = require(inputs, "beta2");
            break;
        }
        case ScheduleKind::thm1_deterministic: {
            const double T = require_positive(inputs, "T");
            const double delta = require(inputs, "delta1");
            const double l0 = require_positive(inputs, "l0");
            const double b1 = require_beta1(inputs);
            const double b2 = require(inputs, "beta2");
            if (!(b1 * b1 < b2 && b2 < 1.0)) {
                throw ConfigError("schedule.beta2", "need beta1^2 < beta2 < 1");
            }
            if (delta < 0.0) throw ConfigError("schedule.delta1", "must be nonnegative");
            v.eta = std::sqrt(delta) * std::sqrt(1.0 - b1 * b1 / b2) / (std::sqrt(T * l0) * (1.0 - b1));
            v.beta2 = b2;
            break;
        }
        case ScheduleKind::thm3_stochastic: {
            const double T = require_positive(inputs, "T");
            const double delta = require(inputs, "delta1");
            const double l0 = require(inputs, "l0");
            const double l1 = require(inputs, "l1");
            const double s0 = require_positive(inputs, "sigma0");
            const double s1 = require_positive(inputs, "sigma1");
            const double b1 = require_beta1(inputs);
            if (!(l0 + l1 > 0.0)) throw ConfigError("schedule.l0", "l0 + l1 must be positive");
            v.eta = std::sqrt(delta) / (std::sqrt(l0 + l1) * std::sqrt(T * s0 * s1 * s1));
            v.beta2 = thm3_beta2(v.eta, l0, l1, s1, b1);
            break;
        }
        case ScheduleKind::thm5_stochastic: {
            const double T = require_positive(inputs, "T");
            const double delta = require(inputs, "delta1");
            const double l0 = require_positive(inputs, "l0");
            const double l1 = require(inputs, "l1");
            const double s1 = require_positive(inputs, "sigma1");
            const double b1 = require_beta1(inputs);
            v.eta = (1.0 - b1) * std::sqrt(l0 * delta) / std::sqrt(T);
            const double k = 256.0 * s1 * s1 * l1;
            v.beta2 = 1.0 - v.eta * v.eta * k * k / (1.0 - b1);
            check_beta2(*v.beta2, "thm5_stochastic");
            break;
        }
        case ScheduleKind::thm6_agnostic:
            break;
    }
    return Schedule(kind, inputs, v);
}

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::sgdm: return "sgdm";
        case OptimizerKind::gd: return "gd";
        case OptimizerKind::adagrad: return "adagrad";
    }
    return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
    for (auto k : {OptimizerKind::adam, OptimizerKind::sgdm, OptimizerKind::gd, OptimizerKind::adagrad}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("optimizer", "unknown optimizer '" + name + "'");
}

std::string TrajectoryRecord::status() const {
    if (error) return "error: " + *error;
    if (diverged_at) return "diverged at " + std::to_string(*diverged_at);
    return "completed";
}

TrajectoryRecord run_trajectory(OptimizerKind optimizer, const Objective& obj, const OracleConfig& oracle,
                                const Schedule& schedule, const HyperParams<double>& hyper,
                                const Eigen::Ref<const Vector>& w1, std::int64_t T,
                                const TrajectoryOptions& options) {
    if (T < 1) throw InvalidParameter("T must be at least 1");
    if (w1.size() != obj.dim()) throw InvalidParameter("w1 dimension does not match the objective");
    if (!w1.allFinite()) throw InvalidParameter("w1 must be finite");
    if (options.record_every < 1) throw InvalidParameter("record_every must be at least 1");
    oracle.validate();

    const bool stochastic = oracle.kind != OracleKind::deterministic;
    const Eigen::Index d = obj.dim();
    Rng rng = make_stream(oracle.seed, options.stream);

    Vector w = w1;
    Vector w_next(d);
    Vector G(d);
    Vector g(d);
    Vector m = Vector::Zero(d);
    bool seed_momentum = false;
    if (hyper.m0.size() != 0) {
        if (hyper.m0.size() != d) throw InvalidParameter("m0 dimension does not match the objective");
        m = hyper.m0;
    } else if (hyper.momentum_init == MomentumInit::first_gradient) {
        seed_momentum = true;
    }
    double nu = hyper.nu0 ? *hyper.nu0 : (stochastic && oracle.sigma0 > 0.0 ? oracle.sigma0 * oracle.sigma0 : 1.0);
    double v_sum = 0.0;

    const double beta = optimizer == OptimizerKind::gd ? 0.0 : hyper.beta1;

    TrajectoryRecord rec;
    rec.horizon = T;
    rec.replica = options.stream;
    rec.running_min_grad = std::numeric_limits<double>::infinity();
    if (options.store_grad_norms) rec.grad_norms.reserve(static_cast<std::size_t>(std::min<std::int64_t>(T, 1 << 24)));
    if (options.keep_trace) rec.trace.reserve(static_cast<std::size_t>(std::min<std::int64_t>(T, 1 << 24)));
    double grad_sum = 0.0;
    std::int64_t evaluated = 0;

    for (std::int64_t t = 1; t <= T; ++t) {
        obj.gradient_into(w, G);
        const double gn = G.norm();
        if (!std::isfinite(gn) || w.cwiseAbs().maxCoeff() > options.guard) {
            rec.diverged_at = t;
            break;
        }
        ++evaluated;
        grad_sum += gn;
        rec.running_min_grad = std::min(rec.running_min_grad, gn);
        if (options.store_grad_norms) rec.grad_norms.push_back(gn);
        if (options.stop_below && gn < *options.stop_below) {
            rec.first_below = t;
            break;
        }

        if (stochastic) {
            g = sample(oracle, G, rng);
            if (!g.allFinite()) throw NumericError("non-finite oracle sample at step " + std::to_string(t), t);
        } else {
            g = G;
        }
        if (seed_momentum) {
            m = g;
            seed_momentum = false;
        }

        const ScheduleValue sv = schedule.at(t);
        const double nu_prev = nu;
        switch (optimizer) {
            case OptimizerKind::adam: {
                const double b2 = sv.beta2.value_or(hyper.beta2);
                detail::require_finite(g, t);
                nu = b2 * nu + (1.0 - b2) * g.squaredNorm();
                m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
                w_next = w - (sv.eta / (hyper.lambda + std::sqrt(nu))) * m;
                break;
            }
            case OptimizerKind::sgdm:
            case OptimizerKind::gd: {
                detail::require_finite(g, t);
                m = beta * m + (1.0 - beta) * g;
                w_next = w - sv.eta * m;
                break;
            }
            case OptimizerKind::adagrad: {
                detail::require_finite(g, t);
                v_sum += g.squaredNorm();
                if (!(v_sum > 0.0)) {
                    throw NumericError("adagrad division guard: accumulated squared norm is zero at step " +
                                           std::to_string(t),
                                       t);
                }
                w_next = w - (sv.eta / std::sqrt(v_sum)) * g;
                break;
            }
        }

        const double step = (w_next - w).norm();
        const double nu_out = optimizer == OptimizerKind::adam ? nu : optimizer == OptimizerKind::adagrad ? v_sum : 0.0;
        if (t % options.record_every == 0) {
            rec.rows.push_back(TrajectoryRow{t, gn, obj.gap(w), step, nu_out});
        }
        if (options.keep_trace) {
            rec.trace.push_back(TraceStep{sv.eta, sv.beta2.value_or(hyper.beta2), g.squaredNorm(), gn * gn,
                                          m.squaredNorm(), nu, nu_prev, step});
        }
        w.swap(w_next);
        rec.steps = t;
    }

    rec.running_mean_grad = evaluated > 0 ? grad_sum / static_cast<double>(evaluated) : 0.0;
    if (evaluated == 0) rec.running_min_grad = std::numeric_limits<double>::quiet_NaN();
    return rec;
}

}  // namespace adamlab
