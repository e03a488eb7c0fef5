#include "adamlab/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "adamlab/errors.hpp"

namespace adamlab {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(uniform(rng, std::log(lo), std::log(hi))); }

Vector random_in_ball(Rng& rng, Eigen::Index d, double radius) {
    std::normal_distribution<double> normal;
    Vector dir(d);
    double n2 = 0.0;
    while (n2 == 0.0) {
        for (Eigen::Index i = 0; i < d; ++i) dir(i) = normal(rng);
        n2 = dir.squaredNorm();
    }
    const double r = radius * std::pow(uniform(rng, 0.0, 1.0), 1.0 / static_cast<double>(d));
    return dir * (r / std::sqrt(n2));
}

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void require_trace(const TrajectoryRecord& trajectory) {
    if (trajectory.trace.empty()) {
        throw InvalidParameter("trajectory has no per-step trace; run it with keep_trace");
    }
}

}  // namespace

bool InequalityReport::add(double lhs, double rhs) {
    const double slack = (rhs - lhs) / std::max(1.0, std::abs(rhs));
    worst_slack = instances == 0 ? slack : std::min(worst_slack, slack);
    ++instances;
    const bool bad = !(slack >= -kInequalityTolerance);
    if (bad) ++violations;
    return bad;
}

std::string to_json(const InequalityReport& report) {
    json j{{"name", report.name},
           {"instances", report.instances},
           {"violations", report.violations},
           {"skipped", report.skipped},
           {"worst_slack", report.worst_slack},
           {"passed", report.passed()}};
    j["witness"] = report.witness ? json::parse(*report.witness) : json(nullptr);
    return j.dump(2);
}

double lemma1_bound(double eta, double beta1, double beta2) {
    return eta * (1.0 - beta1) / (std::sqrt(1.0 - beta2) * std::sqrt(1.0 - beta1 * beta1 / beta2));
}

InequalityReport check_lemma1(const TrajectoryRecord& trajectory, const HyperParams<double>& hyper) {
    require_trace(trajectory);
    if (hyper.lambda != 0.0) throw ConfigError("hyper.lambda", "lemma 1 is stated for lambda = 0");
    InequalityReport report{.name = "lemma1"};
    for (std::size_t i = 0; i < trajectory.trace.size(); ++i) {
        const TraceStep& s = trajectory.trace[i];
        if (!(hyper.beta1 * hyper.beta1 < s.beta2 && s.beta2 < 1.0)) {
            throw ConfigError("hyper.beta2", "lemma 1 needs beta1^2 < beta2 < 1");
        }
        const double lhs = s.step_norm;
        const double rhs = lemma1_bound(s.eta, hyper.beta1, s.beta2);
        if (report.add(lhs, rhs) && !report.witness) {
            report.witness = json{{"fingerprint", trajectory.fingerprint},
                                  {"step", i + 1},
                                  {"eta", s.eta},
                                  {"beta1", hyper.beta1},
                                  {"beta2", s.beta2},
                                  {"lhs", lhs},
                                  {"rhs", rhs}}
                                 .dump();
        }
    }
    return report;
}

InequalityReport check_lemma1_random(std::int64_t n_steps, std::uint64_t seed) {
    InequalityReport report{.name = "lemma1"};
    Rng rng = make_stream(seed, 0);
    std::normal_distribution<double> normal;
    std::int64_t run = 0;
    while (report.instances < n_steps) {
        const auto d = static_cast<Eigen::Index>(std::uniform_int_distribution<int>(1, 5)(rng));
        HyperParams<double> h;
        h.beta2 = uniform(rng, 0.01, 0.9999);
        h.beta1 = uniform(rng, 0.0, 0.999 * std::sqrt(h.beta2));
        h.eta = log_uniform(rng, 1e-3, 10.0);
        h.lambda = 0.0;
        AdamState<double> s{Vector::Zero(d), Vector::Zero(d), log_uniform(rng, 1e-6, 1e2), 0};
        const double nu0 = s.nu;
        const double bound = lemma1_bound(h.eta, h.beta1, h.beta2);
        const std::int64_t len = std::min<std::int64_t>(100, n_steps - report.instances);
        for (std::int64_t k = 0; k < len; ++k) {
            Vector g(d);
            const double scale = uniform(rng, 0.0, 1.0) < 0.05 ? 0.0 : log_uniform(rng, 1e-4, 1e4);
            for (Eigen::Index i = 0; i < d; ++i) g(i) = scale * normal(rng);
            const AdamState<double> next = adam_step(s, h, g);
            const double lhs = (next.w - s.w).norm();
            if (report.add(lhs, bound) && !report.witness) {
                report.witness = json{{"seed", seed},   {"run", run},         {"step", k + 1},
                                      {"eta", h.eta},   {"beta1", h.beta1},   {"beta2", h.beta2},
                                      {"nu0", nu0},     {"gradient", to_std(g)}, {"lhs", lhs},
                                      {"rhs", bound}}
                                     .dump();
            }
            s = next;
        }
        ++run;
    }
    return report;
}

InequalityReport check_lemma2(const Objective& obj, std::int64_t n_triples, std::uint64_t seed,
                              const Lemma2Options& options) {
    if (!(obj.l1() > 0.0)) throw InvalidParameter("lemma 2 needs l1 > 0");
    InequalityReport report{.name = "lemma2"};
    Rng rng = make_stream(seed, 0);
    const double r = 1.0 / (2.0 * obj.l1());
    const Eigen::Index d = obj.dim();
    for (std::int64_t k = 0; k < n_triples; ++k) {
        Vector w1(d);
        for (Eigen::Index i = 0; i < d; ++i) w1(i) = uniform(rng, options.box_lo, options.box_hi);
        const Vector w2 = w1 + random_in_ball(rng, d, r);
        const Vector w3 = w1 + random_in_ball(rng, d, r);
        const Vector anchor = obj.gradient(options.anchor_at_w1 ? w1 : w3);
        const double lhs = obj.value(w2);
        const double rhs = obj.value(w3) + anchor.dot(w2 - w3) +
                           0.5 * (obj.l0() + obj.l1() * obj.gradient(w1).norm()) * (w2 - w3).norm() *
                               ((w1 - w3).norm() + (w1 - w2).norm());
        if (report.add(lhs, rhs) && !report.witness) {
            report.witness = json{{"objective", obj.id()},
                                  {"params", obj.params()},
                                  {"l0", obj.l0()},
                                  {"l1", obj.l1()},
                                  {"seed", seed},
                                  {"index", k},
                                  {"anchor_at_w1", options.anchor_at_w1},
                                  {"w1", to_std(w1)},
                                  {"w2", to_std(w2)},
                                  {"w3", to_std(w3)},
                                  {"lhs", lhs},
                                  {"rhs", rhs}}
                                 .dump();
        }
    }
    return report;
}

Lemma3Sides lemma3_sides(const std::vector<double>& a, double beta1, double beta2, double b0) {
    if (!(beta1 * beta1 < beta2 && beta2 < 1.0 && beta1 >= 0.0)) {
        throw InvalidParameter("lemma 3 needs 0 <= beta1^2 < beta2 < 1");
    }
    if (!(b0 > 0.0)) throw InvalidParameter("lemma 3 needs b0 > 0");
    double b = b0;
    double c = 0.0;
    Lemma3Sides out;
    for (double an : a) {
        b = beta2 * b + (1.0 - beta2) * an * an;
        c = beta1 * c + (1.0 - beta1) * an;
        out.lhs += c * c / b;
    }
    const double T = static_cast<double>(a.size());
    const double q = 1.0 - beta1 / std::sqrt(beta2);
    const double coef = (1.0 - beta1) * (1.0 - beta1) / (q * q * (1.0 - beta2));
    out.rhs = coef * (std::log(b) - std::log(b0) - T * std::log(beta2));
    return out;
}

InequalityReport check_lemma3(std::int64_t n_sequences, std::int64_t length, std::uint64_t seed) {
    InequalityReport report{.name = "lemma3"};
    Rng rng = make_stream(seed, 0);
    std::normal_distribution<double> normal;
    for (std::int64_t k = 0; k < n_sequences; ++k) {
        const double beta2 = uniform(rng, 0.01, 0.999);
        const double beta1 = uniform(rng, 1e-6, std::sqrt(beta2));
        const double b0 = log_uniform(rng, 1e-4, 1e4);
        const double scale = log_uniform(rng, 1e-3, 1e3);
        std::vector<double> a(static_cast<std::size_t>(length));
        for (double& x : a) x = scale * normal(rng);
        const Lemma3Sides s = lemma3_sides(a, beta1, beta2, b0);
        if (report.add(s.lhs, s.rhs) && !report.witness) {
            report.witness = json{{"seed", seed}, {"index", k},     {"beta1", beta1}, {"beta2", beta2},
                                  {"b0", b0},     {"a", a},         {"lhs", s.lhs},   {"rhs", s.rhs}}
                                 .dump();
        }
    }
    return report;
}

Lemma45Report check_lemma45(const TrajectoryRecord& trajectory, const Objective& obj,
                            const HyperParams<double>& hyper) {
    require_trace(trajectory);
    const double b1 = hyper.beta1;
    const double b2 = trajectory.trace.front().beta2;
    for (const TraceStep& s : trajectory.trace) {
        if (s.beta2 != b2) throw ConfigError("schedule.beta2", "lemmas 4 and 5 need a constant beta2");
    }
    if (!(b2 >= b1 && b2 < 1.0)) throw ConfigError("hyper.beta2", "lemmas 4 and 5 need beta1 <= beta2 < 1");
    if (hyper.lambda != 0.0) throw ConfigError("hyper.lambda", "lemmas 4 and 5 are stated for lambda = 0");
    if ((hyper.m0.size() != 0 && !hyper.m0.isZero(0.0)) || hyper.momentum_init != MomentumInit::zero) {
        throw ConfigError("hyper.m0", "lemmas 4 and 5 need m0 = 0");
    }

    const double l0 = obj.l0();
    const double l1 = obj.l1();
    const double ratio = l1 == 0.0 ? 0.0 : (l0 > 0.0 ? (l1 / l0) * (l1 / l0) : kInf);
    const double step_cap = l1 > 0.0 ? (1.0 - std::pow(b1, 0.125)) / (6.0 * l1) : kInf;
    const double r4 = std::pow(b1, 0.25);
    const double r8 = std::pow(b1, 0.125);

    Lemma45Report out{InequalityReport{.name = "lemma4"}, InequalityReport{.name = "lemma5"}};
    double s4 = 0.0;
    double a5 = 0.0;
    double t5 = 0.0;
    bool lemma5_ok = true;
    const auto witness = [&](std::size_t step, double lhs, double rhs) {
        return json{{"fingerprint", trajectory.fingerprint},
                    {"objective", obj.id()},
                    {"params", obj.params()},
                    {"step", step},
                    {"beta1", b1},
                    {"beta2", b2},
                    {"lhs", lhs},
                    {"rhs", rhs}}
            .dump();
    };
    for (std::size_t i = 0; i < trajectory.trace.size(); ++i) {
        const TraceStep& s = trajectory.trace[i];
        const double dscale = 1.0 / std::sqrt(b2 * s.nu_prev) - 1.0 / std::sqrt(s.nu);
        s4 = r4 * s4 + dscale;
        a5 = r8 * a5 + s.g_norm2 * s.G_norm2 / (s.nu * std::sqrt(b2 * s.nu_prev));
        t5 = r8 * t5 + dscale;

        const double lhs4 = s.m_norm2 / std::pow(s.nu, 1.5);
        const double rhs4 = 4.0 * (1.0 - b1) * (2.0 / (1.0 - b2)) * s4;
        if (out.lemma4.add(lhs4, rhs4) && !out.lemma4.witness) out.lemma4.witness = witness(i + 1, lhs4, rhs4);

        if (s.step_norm > step_cap) lemma5_ok = false;
        if (!lemma5_ok) {
            ++out.lemma5.skipped;
            continue;
        }
        const double lhs5 = s.m_norm2 * s.G_norm2 / (s.nu * std::sqrt(b2 * s.nu_prev));
        const double tail = t5 == 0.0 ? 0.0 : 8.0 * (1.0 - b1) / (1.0 - b2) * ratio * t5;
        const double rhs5 = 4.0 * (1.0 - b1) * a5 + tail;
        if (out.lemma5.add(lhs5, rhs5) && !out.lemma5.witness) out.lemma5.witness = witness(i + 1, lhs5, rhs5);
    }
    return out;
}

RateFit fit_rate_exponent(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 4) throw InvalidParameter("rate fit needs at least 4 points");
    RateFit fit;
    fit.points = points;
    const double n = static_cast<double>(points.size());
    double mx = 0.0;
    double my = 0.0;
    for (const auto& [T, metric] : points) {
        if (!(T > 0.0)) throw DomainError("rate fit needs positive T");
        if (!(metric > 0.0) || !std::isfinite(metric)) throw DomainError("rate fit needs positive finite metrics");
        mx += std::log(T);
        my += std::log(metric);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (const auto& [T, metric] : points) {
        const double dx = std::log(T) - mx;
        const double dy = std::log(metric) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw DomainError("rate fit needs at least two distinct T values");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (const auto& [T, metric] : points) {
        const double e = std::log(metric) - (fit.intercept + fit.slope * std::log(T));
        ss_res += e * e;
    }
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    return fit;
}

std::string to_json(const RateFit& fit) {
    json pts = json::array();
    for (const auto& [T, metric] : fit.points) pts.push_back({T, metric});
    return json{{"slope", fit.slope}, {"intercept", fit.intercept}, {"r_squared", fit.r_squared}, {"points", pts}}
        .dump(2);
}

std::optional<std::int64_t> steps_to_epsilon(const TrajectoryRecord& trajectory, double epsilon) {
    for (std::size_t i = 0; i < trajectory.grad_norms.size(); ++i) {
        if (trajectory.grad_norms[i] < epsilon) return static_cast<std::int64_t>(i + 1);
    }
    if (trajectory.grad_norms.empty()) return trajectory.first_below;
    return std::nullopt;
}

std::vector<double> geometric_grid(double lo, double hi, int n) {
    if (n < 1 || !(lo > 0.0) || !(hi >= lo)) throw InvalidParameter("geometric grid needs n >= 1 and 0 < lo <= hi");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    }
    out.back() = n == 1 ? lo : hi;
    return out;
}

TuneResult tune_best(OptimizerKind optimizer, const Objective& obj, const OracleConfig& oracle,
                     const Eigen::Ref<const Vector>& w1, std::int64_t T, double epsilon,
                     const std::vector<double>& eta_grid, const std::vector<double>& beta_grid,
                     const TuneOptions& options) {
    if (eta_grid.empty() || beta_grid.empty()) throw InvalidParameter("tuning grids must be nonempty");
    TuneResult result;
    for (double eta : eta_grid) {
        for (double beta : beta_grid) result.cells.push_back(TuneCell{eta, beta, std::nullopt, ""});
    }
    const Vector start = w1;

    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < result.cells.size(); i = next++) {
            TuneCell& cell = result.cells[i];
            HyperParams<double> h;
            h.beta1 = cell.beta;
            h.beta2 = options.beta2;
            h.momentum_init = options.momentum_init;
            TrajectoryOptions topt;
            topt.store_grad_norms = false;
            topt.stop_below = epsilon;
            try {
                const Schedule sched = make_schedule(ScheduleKind::constant, {{"eta", cell.eta}});
                const TrajectoryRecord rec = run_trajectory(optimizer, obj, oracle, sched, h, start, T, topt);
                cell.steps = rec.first_below;
                cell.status = rec.status();
            } catch (const NumericError& e) {
                cell.status = std::string("error: ") + e.what();
            }
        }
    };
    unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, result.cells.size()));
    {
        std::vector<std::jthread> pool;
        for (unsigned i = 1; i < workers; ++i) pool.emplace_back(work);
        work();
    }

    const auto key = [](const TuneCell& c) {
        return std::make_tuple(c.steps.value_or(std::numeric_limits<std::int64_t>::max()), c.eta, c.beta);
    };
    const TuneCell& best =
        *std::min_element(result.cells.begin(), result.cells.end(),
                          [&](const TuneCell& a, const TuneCell& b) { return key(a) < key(b); });
    result.eta = best.eta;
    result.beta = best.beta;
    result.steps = best.steps;
    return result;
}

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::f1_catches: return "f1_catches";
        case Regime::f2_catches: return "f2_catches";
        case Regime::f3_catches: return "f3_catches";
    }
    return "unknown";
}

RegimeThresholds gdm_thresholds(double l0, double l1, double epsilon, double delta1) {
    if (!(l0 > 0.0 && l1 > 0.0 && epsilon > 0.0 && delta1 > 0.0)) {
        throw InvalidParameter("regime thresholds need positive l0, l1, epsilon and delta1");
    }
    const double lg = std::log(1.0 / epsilon);
    const double shifted = delta1 + l0 / (2.0 * l1 * l1);
    RegimeThresholds th;
    th.eta_star = (5.0 + 8.0 * lg) * (1.0 + std::log(0.5 + l1 * l1 * delta1 / l0)) / (l1 * l1 * shifted);
    th.beta_star = 1.0 - 2.0 * std::exp(-(4.0 * lg + 2.0) * (std::log(l1 * l1 * std::exp(1.0) / l0) + std::log(shifted)));
    return th;
}

Regime gdm_regime_probe(double eta, double beta, double l0, double l1, double epsilon, double delta1) {
    if (!(eta > 0.0)) throw InvalidParameter("eta must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidParameter("beta must lie in [0, 1]");
    const RegimeThresholds th = gdm_thresholds(l0, l1, epsilon, delta1);
    const double e = std::exp(1.0);
    if (eta < th.eta_star) {
        if (!(delta1 >= epsilon / 2.0 + l1 / l0)) {
            throw CoverageGap("f2 lemma needs delta1 >= epsilon/2 + l1/l0");
        }
        return Regime::f2_catches;
    }
    if (beta < th.beta_star) {
        if (!(delta1 >= l0 / (l1 * l1) * (e - 0.5)) || !(epsilon <= 1.0)) {
            throw CoverageGap("f1 lemma needs delta1 >= (l0/l1^2)(e - 1/2) and epsilon <= 1");
        }
        return Regime::f1_catches;
    }
    if (!(delta1 >= l0 * e / (l1 * l1) + 4.0 * e + l0 * l0 / (e * e * l1 * l1)) || !(l1 >= 1.0) ||
        !(epsilon <= 0.5)) {
        throw CoverageGap("f3 lemma needs delta1 >= l0 e/l1^2 + 4e + l0^2/(e^2 l1^2), l1 >= 1 and epsilon <= 1/2");
    }
    return Regime::f3_catches;
}

ProbeRun probe_and_run(double eta, double beta, double l0, double l1, double epsilon, double delta1,
                       std::int64_t f1_cap) {
    ProbeRun run;
    run.regime = gdm_regime_probe(eta, beta, l0, l1, epsilon, delta1);
    const Objective obj = run.regime == Regime::f1_catches   ? build_f1(l0, l1)
                          : run.regime == Regime::f2_catches ? build_f2(epsilon)
                                                             : build_f3(l0, l1, epsilon);
    const Part part = obj.parts().front();
    run.start = init_point_for_gap(obj, delta1)(0);

    constexpr double kCap = 2147483648.0;
    switch (run.regime) {
        case Regime::f1_catches:
            run.horizon = f1_cap;
            break;
        case Regime::f2_catches:
            run.horizon = static_cast<std::int64_t>(std::min(kCap, std::floor((run.start - 1.0) / (eta * epsilon))));
            break;
        case Regime::f3_catches: {
            const double momentum_phase = beta < 1.0 ? std::floor(1.0 / (1.0 - beta)) : kCap;
            const double linear_phase = std::floor(l1 * l1 * delta1 * delta1 / (16.0 * epsilon * epsilon * epsilon));
            run.horizon = static_cast<std::int64_t>(std::min(kCap, momentum_phase + linear_phase));
            break;
        }
    }

    double x = run.start;
    double m = 0.0;
    run.min_grad = kInf;
    for (std::int64_t t = 1; t <= run.horizon; ++t) {
        const double g = part.derivative(x);
        if (!std::isfinite(g) || std::abs(x) > 1e12) {
            run.diverged_at = t;
            break;
        }
        run.checked = t;
        run.min_grad = std::min(run.min_grad, std::abs(g));
        if (std::abs(g) < epsilon) {
            run.first_below = t;
            break;
        }
        m = t == 1 ? g : beta * m + (1.0 - beta) * g;
        x -= eta * m;
    }
    return run;
}

}  // namespace adamlab
