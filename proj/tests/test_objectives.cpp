#include <algorithm>
#include <cmath>
#include <limits>

#include <doctest.h>

#include "adamlab/errors.hpp"
#include "adamlab/objectives.hpp"

using namespace adamlab;
using doctest::Approx;

namespace {

double at(const Objective& f, double x) { return f.value(Vector::Constant(1, x)); }
double d_at(const Objective& f, double x) { return f.gradient(Vector::Constant(1, x))(0); }

}  // namespace

TEST_CASE("f1 values") {
    const Objective f = build_f1(1.0, 1.0);
    CHECK(at(f, 0.0) == Approx(0.5).epsilon(1e-15));
    CHECK(at(f, 1.0) == Approx(1.0).epsilon(1e-15));
    CHECK(at(f, std::nextafter(1.0, 0.0)) == Approx(1.0).epsilon(1e-12));
    CHECK(d_at(f, 2.0) == Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(d_at(f, -2.0) == Approx(-std::exp(1.0)).epsilon(1e-12));
    CHECK(f.f_star() == 0.5);
    CHECK(f.l0() == 1.0);
    CHECK(f.l1() == 1.0);
}

TEST_CASE("f2 and g2 values") {
    const Objective f = build_f2(0.5);
    CHECK(at(f, 0.0) == 0.0);
    CHECK(at(f, 1.0) == Approx(0.25));
    CHECK(d_at(f, 3.0) == Approx(0.5));
    CHECK(f.f_star() == 0.0);

    const Objective g = build_g2(0.5);
    CHECK(at(g, -1.0) == Approx(0.25));
    CHECK(d_at(g, 0.0) == 0.0);
    CHECK(at(g, -3.0) == Approx(1.25));
}

TEST_CASE("f3 values") {
    const Objective f = build_f3(1.0, 1.0, 0.5);
    CHECK(at(f, 0.0) == Approx(0.5));
    CHECK(at(f, -1.0) == Approx(1.0));
    CHECK(d_at(f, 0.5) == Approx(0.25));
    CHECK(f.f_star() == 0.5);
}

TEST_CASE("builders reject nonpositive constants") {
    CHECK_THROWS_AS(build_f1(0.0, 1.0), InvalidParameter);
    CHECK_THROWS_AS(build_f1(1.0, -1.0), InvalidParameter);
    CHECK_THROWS_AS(build_f2(0.0), InvalidParameter);
    CHECK_THROWS_AS(build_g2(-0.5), InvalidParameter);
    CHECK_THROWS_AS(build_f3(1.0, 1.0, 0.0), InvalidParameter);
    CHECK_THROWS_AS(build_composite({}), InvalidParameter);
}

TEST_CASE("composite") {
    const Objective c = build_composite({build_f1(1.0, 1.0), build_f2(0.5)});
    CHECK(c.dim() == 2);
    CHECK(c.value(Vector::Zero(2)) == Approx(0.5));
    CHECK(c.gradient(Vector::Zero(2)).norm() == 0.0);

    const Objective c13 = build_composite({build_f1(1.0, 1.0), build_f3(1.0, 1.0, 0.5)});
    CHECK(c13.f_star() == Approx(1.0));

    const Objective c3 = make_objective("composite:f1+f2+f3", {{"l0", 2.0}, {"l1", 0.5}, {"epsilon", 0.5}});
    CHECK(c3.dim() == 3);
    CHECK(c3.l0() == 2.0);
    CHECK(c3.l1() == 0.5);
    Vector w(3);
    w << 1.3, -2.0, 0.7;
    const Vector g = c3.gradient(w);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(g(i) == c3.parts()[static_cast<std::size_t>(i)].derivative(w(i)));
}

TEST_CASE("make_objective ids and declared constants") {
    CHECK(make_objective("f1", {}).id() == "f1");
    const Objective f2 = make_objective("f2", {{"epsilon", 0.5}, {"declared_l0", 1.0}, {"declared_l1", 0.0}});
    CHECK(f2.l0() == 1.0);
    CHECK_THROWS_AS(make_objective("f9", {}), ConfigError);
}

TEST_CASE("init_point_for_gap") {
    const Objective f1 = build_f1(1.0, 1.0);
    const Vector x1 = init_point_for_gap(f1, 10.0);
    CHECK(x1(0) == Approx(1.0 + std::log(10.5)).epsilon(1e-12));
    CHECK(x1(0) == Approx(3.351375).epsilon(1e-6));
    CHECK(f1.gap(x1) == Approx(10.0).epsilon(1e-10));

    const Objective f2 = build_f2(0.5);
    CHECK(init_point_for_gap(f2, 10.0)(0) == Approx(20.5).epsilon(1e-12));

    const Objective f3 = build_f3(1.0, 1.0, 0.5);
    const Vector z1 = init_point_for_gap(f3, 10.0);
    CHECK(z1(0) == Approx(-(1.0 + std::log(10.5))).epsilon(1e-12));
    CHECK(f3.gap(z1) == Approx(10.0).epsilon(1e-10));

    const Objective c = make_objective("composite:f1+f2+f3", {{"epsilon", 0.5}});
    const Vector w = init_point_for_gap(c, 10.0);
    CHECK(w(0) > 0.0);
    CHECK(w(2) < 0.0);
    CHECK(c.gap(w) == Approx(30.0).epsilon(1e-10));
}

TEST_CASE("gap calibration round trip over a grid") {
    for (double delta : {1e-6, 0.01, 0.3, 1.0, 2.2, 10.0, 100.0, 1e4}) {
        for (const Objective& f : {build_f1(1.0, 1.0), build_f1(3.0, 0.5), build_f2(0.5), build_g2(0.25),
                                   build_f3(1.0, 1.0, 0.5), build_f3(2.0, 3.0, 0.1), build_quadratic(2.0)}) {
            for (Side s : {Side::positive, Side::negative, Side::canonical}) {
                Vector p;
                try {
                    p = init_point_for_gap(f, delta, s);
                } catch (const DomainError&) {
                    continue;
                }
                CAPTURE(f.id());
                CAPTURE(delta);
                // gap = value - f_star cannot resolve below an ulp of f_star
                const double floor = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, f.f_star());
                CHECK(std::abs(f.gap(p) - delta) <= std::max(1e-10 * delta, floor));
            }
        }
    }
}

TEST_CASE("unreachable gap is a domain error") {
    // f3's right side is linear, its left side exponential; both reach any gap,
    // so use a negative gap for the error path.
    CHECK_THROWS_AS(init_point_for_gap(build_f1(1.0, 1.0), -1.0), DomainError);
}

TEST_CASE("continuity at every kink") {
    for (const Objective& f : {build_f1(1.0, 1.0), build_f1(0.3, 4.0), build_f2(0.5), build_g2(0.5),
                               build_f3(1.0, 1.0, 0.5), build_f3(2.0, 0.7, 0.2),
                               make_objective("composite:f1+f2+f3", {{"epsilon", 0.5}})}) {
        const ContinuityCheck c = check_continuity(f);
        CAPTURE(f.id());
        CHECK(c.kinks > 0);
        CHECK(c.max_value_jump <= 1e-12);
        CHECK(c.max_derivative_jump <= 1e-12);
    }
}

TEST_CASE("finite-difference gradient check") {
    std::uint64_t seed = 1;
    for (const Objective& f : {build_f1(1.0, 1.0), build_f1(0.3, 4.0), build_f2(0.5), build_g2(0.5),
                               build_f3(1.0, 1.0, 0.5), build_f3(2.0, 0.7, 0.2), build_quadratic(3.0),
                               make_objective("composite:f1+f2+f3", {{"epsilon", 0.5}})}) {
        const GradientCheck g = check_gradient_fd(f, 1000, seed++);
        CAPTURE(f.id());
        CHECK(g.points == 1000);
        CHECK(g.max_rel_error < 1e-6);
        CHECK(g.min_gap >= 0.0);
    }
}

TEST_CASE("smoothness certificates") {
    SUBCASE("quadratic is exact") {
        CertifyOptions opt;
        opt.n_pairs = 10000;
        const SmoothnessCert c = certify_smoothness(build_quadratic(1.0), opt);
        CHECK(c.max_violation == 0.0);
        CHECK(c.passed());
    }
    SUBCASE("f2 and g2 pass with l0 >= epsilon") {
        CertifyOptions opt;
        opt.n_pairs = 20000;
        CHECK(certify_smoothness(build_f2(0.5).with_constants(1.0, 1.0), opt).passed());
        CHECK(certify_smoothness(build_g2(0.5).with_constants(0.5, 0.0), opt).passed());
    }
    SUBCASE("f2 fails when the declared l0 is below epsilon") {
        CertifyOptions opt;
        opt.n_pairs = 20000;
        const SmoothnessCert c = certify_smoothness(build_f2(0.5).with_constants(0.25, 0.0), opt);
        CHECK_FALSE(c.passed());
        CHECK(c.violating_pair.has_value());
        CHECK(c.required_scale == Approx(2.0).epsilon(1e-9));
    }
    SUBCASE("pairs respect the radius") {
        CertifyOptions opt;
        opt.n_pairs = 1000;
        opt.box_lo = -5.0;
        opt.box_hi = 5.0;
        const SmoothnessCert c = certify_smoothness(build_f1(1.0, 1.0), opt);
        CHECK(c.pairs_tested == 1000);
    }
}

TEST_CASE("envelope box") {
    const auto [lo, hi] = envelope_box(-1.0, 3.0, 2.0);
    CHECK(lo == -2.0);
    CHECK(hi == 4.0);
}
