#include <cmath>

#include <doctest.h>
#include <json.hpp>

#include "adamlab/analysis.hpp"
#include "adamlab/errors.hpp"

using namespace adamlab;
using doctest::Approx;

TEST_CASE("InequalityReport slack") {
    InequalityReport r{.name = "t"};
    CHECK_FALSE(r.add(1.0, 1.0));
    CHECK_FALSE(r.add(1.0 + 1e-10, 1.0));
    CHECK(r.add(2.0, 1.0));
    CHECK(r.instances == 3);
    CHECK(r.violations == 1);
    CHECK(r.worst_slack == Approx(-1.0));
    const auto j = nlohmann::json::parse(to_json(r));
    CHECK(j["violations"] == 1);
}

TEST_CASE("lemma 1") {
    CHECK(lemma1_bound(0.1, 0.5, 0.9) == Approx(0.186052).epsilon(1e-6));
    CHECK(lemma1_bound(0.2, 0.0, 0.75) == Approx(0.4));

    // single beta1 = 0 step from nu0 with constant g stays below the bound
    const double eta = 0.2;
    const double b2 = 0.75;
    const double nu0 = 1.0;
    const double g = 3.0;
    const double step = eta * g / std::sqrt((1 - b2) * g * g + b2 * nu0);
    CHECK(step < lemma1_bound(eta, 0.0, b2));

    const InequalityReport r = check_lemma1_random(5000, 3);
    CHECK(r.instances == 5000);
    CHECK(r.passed());

    const Objective f = build_f2(0.5);
    HyperParams<double> h;
    h.beta1 = 0.5;
    h.beta2 = 0.9;
    TrajectoryOptions opt;
    opt.keep_trace = true;
    const auto rec = run_trajectory(OptimizerKind::adam, f, OracleConfig::deterministic(),
                                    make_schedule(ScheduleKind::constant, {{"eta", 0.1}}), h, Vector::Zero(1), 20, opt);
    const InequalityReport z = check_lemma1(rec, h);
    CHECK(z.instances == 20);
    CHECK(z.passed());
    CHECK(z.worst_slack == Approx(lemma1_bound(0.1, 0.5, 0.9)));
}

TEST_CASE("lemma 1 precondition") {
    HyperParams<double> h;
    h.beta1 = 0.9;
    h.beta2 = 0.5;
    TrajectoryRecord rec;
    rec.trace.push_back(TraceStep{});
    CHECK_THROWS_AS(check_lemma1(rec, h), ConfigError);
}

TEST_CASE("lemma 2") {
    const InequalityReport q = check_lemma2(build_quadratic(1.0).with_constants(1.0, 3.0), 10000, 5);
    CHECK(q.passed());
    CHECK(q.instances == 10000);
    Lemma2Options anchored;
    anchored.anchor_at_w1 = true;
    CHECK(check_lemma2(build_quadratic(2.0).with_constants(2.0, 1.0), 10000, 6, anchored).passed());
    CHECK(check_lemma2(build_f2(0.5).with_constants(1.0, 1.0), 10000, 5).passed());
    CHECK(check_lemma2(build_f2(0.5).with_constants(1.0, 1.0), 10000, 5, anchored).passed());

    const Vector w = Vector::Constant(1, 2.5);
    const Objective f1 = build_f1(1.0, 1.0);
    // degenerate triple: both sides are f(w)
    CHECK(f1.value(w) <= f1.value(w) + f1.gradient(w).dot(w - w));
}

TEST_CASE("lemma 3") {
    const Lemma3Sides s = lemma3_sides({1.0}, 0.0, 0.5, 1.0);
    CHECK(s.lhs == Approx(1.0));
    CHECK(s.rhs == Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(s.rhs == Approx(1.386).epsilon(1e-3));

    const Lemma3Sides z = lemma3_sides(std::vector<double>(50, 0.0), 0.3, 0.8, 2.0);
    CHECK(z.lhs == 0.0);
    CHECK(std::abs(z.rhs) < 1e-12);

    CHECK(check_lemma3(1000, 100, 7).passed());
}

TEST_CASE("lemmas 4 and 5") {
    const Objective f1 = build_f1(1.0, 1.0);
    HyperParams<double> h;
    h.beta1 = 0.0;
    h.beta2 = 0.9;
    h.nu0 = 1.0;
    TrajectoryOptions opt;
    opt.keep_trace = true;

    SUBCASE("constant gradient") {
        // f2's linear branch gives a constant gradient over the whole run
        const Objective f2 = build_f2(0.5);
        const auto rec = run_trajectory(OptimizerKind::adam, f2, OracleConfig::deterministic(),
                                        make_schedule(ScheduleKind::constant, {{"eta", 0.01}}), h,
                                        Vector::Constant(1, 50.0), 200, opt);
        const Lemma45Report r = check_lemma45(rec, f2.with_constants(1.0, 1.0), h);
        CHECK(r.lemma4.instances == 200);
        CHECK(r.lemma4.passed());
        CHECK(r.lemma5.passed());
    }
    SUBCASE("zero gradients") {
        const auto rec = run_trajectory(OptimizerKind::adam, f1, OracleConfig::deterministic(),
                                        make_schedule(ScheduleKind::constant, {{"eta", 0.01}}), h, Vector::Zero(1), 50,
                                        opt);
        const Lemma45Report r = check_lemma45(rec, f1, h);
        CHECK(r.lemma4.passed());
        CHECK(r.lemma5.passed());
        CHECK(r.lemma4.worst_slack >= 0.0);
    }
    SUBCASE("thm1 schedule on f1") {
        h.beta1 = 0.5;
        const Vector w1 = init_point_for_gap(f1, 10.0);
        const auto sched = make_schedule(ScheduleKind::thm1_deterministic,
                                         {{"T", 1e4}, {"delta1", 10.0}, {"l0", 1}, {"beta1", 0.5}, {"beta2", 0.9}});
        const auto rec =
            run_trajectory(OptimizerKind::adam, f1, OracleConfig::deterministic(), sched, h, w1, 10000, opt);
        const Lemma45Report r = check_lemma45(rec, f1, h);
        CHECK(r.lemma4.instances == 10000);
        CHECK(r.lemma4.passed());
        CHECK(r.lemma5.passed());
    }
    SUBCASE("preconditions") {
        h.beta1 = 0.95;
        const auto rec = run_trajectory(OptimizerKind::adam, f1, OracleConfig::deterministic(),
                                        make_schedule(ScheduleKind::constant, {{"eta", 0.01}}), h, Vector::Zero(1), 5,
                                        opt);
        CHECK_THROWS_AS(check_lemma45(rec, f1, h), ConfigError);
    }
}

TEST_CASE("fit_rate_exponent") {
    std::vector<std::pair<double, double>> p;
    for (double T : {1e2, 1e3, 1e4, 1e5}) p.emplace_back(T, 1.0 / std::sqrt(T));
    RateFit f = fit_rate_exponent(p);
    CHECK(std::abs(f.slope + 0.5) < 1e-12);
    CHECK(f.r_squared == Approx(1.0).epsilon(1e-12));

    p.clear();
    for (double T : {16.0, 64.0, 256.0, 1024.0, 4096.0}) p.emplace_back(T, 3.0 * std::pow(T, -0.25));
    f = fit_rate_exponent(p);
    CHECK(std::abs(f.slope + 0.25) < 1e-12);
    CHECK(f.intercept == Approx(std::log(3.0)).epsilon(1e-12));

    p.clear();
    for (double T : {1.0, 2.0, 3.0, 4.0}) p.emplace_back(T, 7.0);
    f = fit_rate_exponent(p);
    CHECK(std::abs(f.slope) < 1e-12);
    CHECK(f.r_squared == 1.0);

    p[2].second = 0.0;
    CHECK_THROWS_AS(fit_rate_exponent(p), DomainError);
    CHECK_THROWS_AS(fit_rate_exponent({{1.0, 1.0}, {2.0, 1.0}}), Error);

    // noisy data keeps r^2 in [0, 1]
    p = {{10, 3.0}, {20, 1.0}, {30, 4.0}, {40, 1.5}, {50, 5.0}};
    f = fit_rate_exponent(p);
    CHECK(f.r_squared >= 0.0);
    CHECK(f.r_squared <= 1.0);
}

TEST_CASE("steps_to_epsilon") {
    const Objective f2 = build_f2(0.5);
    HyperParams<double> h;
    const auto sched = make_schedule(ScheduleKind::constant, {{"eta", 0.1}});
    const auto rec =
        run_trajectory(OptimizerKind::gd, f2, OracleConfig::deterministic(), sched, h, Vector::Constant(1, 20.5), 1000);
    CHECK(steps_to_epsilon(rec, 0.5) == 391);

    const auto low =
        run_trajectory(OptimizerKind::gd, f2, OracleConfig::deterministic(), sched, h, Vector::Constant(1, 0.1), 10);
    CHECK(steps_to_epsilon(low, 0.5) == 1);

    h.beta1 = 1.0;
    const auto frozen =
        run_trajectory(OptimizerKind::sgdm, f2, OracleConfig::deterministic(), sched, h, Vector::Constant(1, 5.0), 100);
    CHECK_FALSE(steps_to_epsilon(frozen, 0.5).has_value());
}

TEST_CASE("geometric grid") {
    const auto g = geometric_grid(1e-4, 1e2, 25);
    CHECK(g.size() == 25);
    CHECK(g.front() == Approx(1e-4));
    CHECK(g.back() == Approx(1e2));
    CHECK(g[1] / g[0] == Approx(g[24] / g[23]));
}

TEST_CASE("tune_best") {
    const Objective f2 = build_f2(0.5);
    const Vector w1 = init_point_for_gap(f2, 10.0);
    SUBCASE("single cell") {
        const TuneResult r =
            tune_best(OptimizerKind::gd, f2, OracleConfig::deterministic(), w1, 10000, 0.5, {0.3}, {0.0});
        CHECK(r.eta == 0.3);
        CHECK(r.beta == 0.0);
        CHECK(r.cells.size() == 1);
    }
    SUBCASE("GD on f2 over an eta grid") {
        const std::vector<double> etas{0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0};
        TuneOptions opt;
        opt.workers = 3;
        const TuneResult r =
            tune_best(OptimizerKind::gd, f2, OracleConfig::deterministic(), w1, 100000, 0.5, etas, {0.0}, opt);
        REQUIRE(r.steps.has_value());
        // linear branch: each step moves eta * eps until |y| < 1
        const double y1 = w1(0);
        CHECK(*r.steps >= static_cast<std::int64_t>((y1 - 1.0) / (etas.back() * 0.5)));
        opt.workers = 1;
        const TuneResult serial =
            tune_best(OptimizerKind::gd, f2, OracleConfig::deterministic(), w1, 100000, 0.5, etas, {0.0}, opt);
        CHECK(serial.eta == r.eta);
        CHECK(serial.steps == r.steps);
    }
}

TEST_CASE("gdm regime probe") {
    const RegimeThresholds th = gdm_thresholds(1.0, 1.0, 0.5, 20.0);
    CHECK(th.eta_star > 0.0);
    CHECK(th.beta_star < 1.0);
    CHECK(gdm_regime_probe(1e-6, 0.5, 1.0, 1.0, 0.5, 20.0) == Regime::f2_catches);
    CHECK(gdm_regime_probe(100.0, 0.0, 1.0, 1.0, 0.5, 20.0) == Regime::f1_catches);
    CHECK(gdm_regime_probe(100.0, 1.0 - 1e-12, 1.0, 1.0, 0.5, 20.0) == Regime::f3_catches);
    CHECK(gdm_regime_probe(th.eta_star, 0.0, 1.0, 1.0, 0.5, 20.0) == Regime::f1_catches);
    // gap below the f1 lemma's floor (L0/L1^2)(e - 1/2)
    CHECK_THROWS_AS(gdm_regime_probe(100.0, 0.0, 1.0, 1.0, 0.5, 1.0), CoverageGap);

    const ProbeRun small = probe_and_run(th.eta_star / 10.0, 0.5, 1.0, 1.0, 0.5, 20.0);
    CHECK(small.regime == Regime::f2_catches);
    CHECK(small.held());
    CHECK(small.checked >= small.horizon);

    const ProbeRun big = probe_and_run(2.0 * th.eta_star, 0.0, 1.0, 1.0, 0.5, 20.0, 10000);
    CHECK(big.regime == Regime::f1_catches);
    CHECK(big.held());
}
