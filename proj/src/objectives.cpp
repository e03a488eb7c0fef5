#include "adamlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "adamlab/errors.hpp"

namespace adamlab {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidParameter(std::string(name) + " must be positive and finite");
    }
}

double param_or(const ParamMap& params, const std::string& key, std::optional<double> fallback) {
    if (auto it = params.find(key); it != params.end()) {
        return it->second;
    }
    if (!fallback) {
        throw ConfigError(key, "required objective parameter missing");
    }
    return *fallback;
}

// Inverse of the exponential branch L0 e^{L1 |x| - 1} / L1^2 measured from
// the minimum L0 / (2 L1^2).
double exp_branch_offset(double l0, double l1, double delta1) {
    return (1.0 + std::log(0.5 + l1 * l1 * delta1 / l0)) / l1;
}

double part_offset(const Part& p, double delta1, bool positive) {
    switch (p.kind) {
        case PartKind::f1: {
            const double x = delta1 >= p.l0 / (2.0 * p.l1 * p.l1)
                                 ? exp_branch_offset(p.l0, p.l1, delta1)
                                 : std::sqrt(2.0 * delta1 / p.l0);
            return positive ? x : -x;
        }
        case PartKind::f2:
        case PartKind::g2: {
            const double y = delta1 >= p.epsilon / 2.0 ? delta1 / p.epsilon + 0.5
                                                       : std::sqrt(2.0 * delta1 / p.epsilon);
            return positive ? y : -y;
        }
        case PartKind::f3: {
            if (!positive) {
                return delta1 >= p.l0 / (2.0 * p.l1 * p.l1) ? -exp_branch_offset(p.l0, p.l1, delta1)
                                                             : -std::sqrt(2.0 * delta1 / p.l0);
            }
            const double corner = p.epsilon / (2.0 * p.l1);
            return delta1 >= corner ? 1.0 / p.l1 + (delta1 - corner) / p.epsilon
                                    : std::sqrt(2.0 * delta1 / (p.epsilon * p.l1));
        }
        case PartKind::quadratic: {
            const double x = std::sqrt(2.0 * delta1 / p.curvature);
            return positive ? x : -x;
        }
    }
    return 0.0;
}

}  // namespace

std::string to_string(PartKind kind) {
    switch (kind) {
        case PartKind::f1: return "f1";
        case PartKind::f2: return "f2";
        case PartKind::f3: return "f3";
        case PartKind::g2: return "g2";
        case PartKind::quadratic: return "quadratic";
    }
    return "unknown";
}

double Part::value(double x) const {
    switch (kind) {
        case PartKind::f1: {
            const double s = 1.0 / l1;
            if (x >= s) return l0 * std::exp(l1 * x - 1.0) / (l1 * l1);
            if (x >= -s) return l0 * x * x / 2.0 + l0 / (2.0 * l1 * l1);
            return l0 * std::exp(-l1 * x - 1.0) / (l1 * l1);
        }
        case PartKind::f2:
        case PartKind::g2: {
            if (x >= 1.0) return epsilon * (x - 1.0) + epsilon / 2.0;
            if (x >= -1.0) return epsilon * x * x / 2.0;
            return -epsilon * (x + 1.0) + epsilon / 2.0;
        }
        case PartKind::f3: {
            const double s = 1.0 / l1;
            const double floor = l0 / (2.0 * l1 * l1);
            if (x >= s) return epsilon * (x - s) + epsilon / (2.0 * l1) + floor;
            if (x >= 0.0) return epsilon * l1 * x * x / 2.0 + floor;
            if (x >= -s) return l0 * x * x / 2.0 + floor;
            return l0 * std::exp(-l1 * x - 1.0) / (l1 * l1);
        }
        case PartKind::quadratic:
            return curvature * x * x / 2.0;
    }
    return 0.0;
}

double Part::derivative(double x) const {
    switch (kind) {
        case PartKind::f1: {
            const double s = 1.0 / l1;
            if (x >= s) return l0 * std::exp(l1 * x - 1.0) / l1;
            if (x >= -s) return l0 * x;
            return -l0 * std::exp(-l1 * x - 1.0) / l1;
        }
        case PartKind::f2:
        case PartKind::g2: {
            if (x >= 1.0) return epsilon;
            if (x >= -1.0) return epsilon * x;
            return -epsilon;
        }
        case PartKind::f3: {
            const double s = 1.0 / l1;
            if (x >= s) return epsilon;
            if (x >= 0.0) return epsilon * l1 * x;
            if (x >= -s) return l0 * x;
            return -l0 * std::exp(-l1 * x - 1.0) / l1;
        }
        case PartKind::quadratic:
            return curvature * x;
    }
    return 0.0;
}

double Part::infimum() const {
    switch (kind) {
        case PartKind::f1:
        case PartKind::f3:
            return l0 / (2.0 * l1 * l1);
        case PartKind::f2:
        case PartKind::g2:
        case PartKind::quadratic:
            return 0.0;
    }
    return 0.0;
}

std::vector<double> Part::kinks() const {
    switch (kind) {
        case PartKind::f1: return {-1.0 / l1, 1.0 / l1};
        case PartKind::f2:
        case PartKind::g2: return {-1.0, 1.0};
        case PartKind::f3: return {-1.0 / l1, 0.0, 1.0 / l1};
        case PartKind::quadratic: return {};
    }
    return {};
}

Objective::Objective(std::string id, std::vector<Part> parts, double l0, double l1, ParamMap params)
    : id_(std::move(id)), parts_(std::move(parts)), l0_(l0), l1_(l1), f_star_(0.0), params_(std::move(params)) {
    if (parts_.empty()) {
        throw InvalidParameter("objective needs at least one part");
    }
    if (l0_ < 0.0 || l1_ < 0.0) {
        throw InvalidParameter("declared smoothness constants must be nonnegative");
    }
    for (const auto& p : parts_) {
        f_star_ += p.infimum();
    }
}

double Objective::value(const Eigen::Ref<const Vector>& w) const {
    double total = 0.0;
    for (Eigen::Index i = 0; i < dim(); ++i) {
        total += parts_[static_cast<std::size_t>(i)].value(w(i));
    }
    return total;
}

Vector Objective::gradient(const Eigen::Ref<const Vector>& w) const {
    Vector g(dim());
    gradient_into(w, g);
    return g;
}

void Objective::gradient_into(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> out) const {
    for (Eigen::Index i = 0; i < dim(); ++i) {
        out(i) = parts_[static_cast<std::size_t>(i)].derivative(w(i));
    }
}

Objective Objective::with_constants(double l0, double l1) const {
    ParamMap params = params_;
    params["declared_l0"] = l0;
    params["declared_l1"] = l1;
    return Objective(id_, parts_, l0, l1, std::move(params));
}

Objective build_f1(double l0, double l1) {
    require_positive(l0, "l0");
    require_positive(l1, "l1");
    Part p{PartKind::f1, l0, l1, 0.0, 0.0};
    return Objective("f1", {p}, l0, l1, {{"l0", l0}, {"l1", l1}});
}

Objective build_f2(double epsilon) {
    require_positive(epsilon, "epsilon");
    Part p{PartKind::f2, 0.0, 0.0, epsilon, 0.0};
    return Objective("f2", {p}, epsilon, 0.0, {{"epsilon", epsilon}});
}

Objective build_f3(double l0, double l1, double epsilon) {
    require_positive(l0, "l0");
    require_positive(l1, "l1");
    require_positive(epsilon, "epsilon");
    Part p{PartKind::f3, l0, l1, epsilon, 0.0};
    return Objective("f3", {p}, l0, l1, {{"l0", l0}, {"l1", l1}, {"epsilon", epsilon}});
}

Objective build_g2(double epsilon) {
    require_positive(epsilon, "epsilon");
    Part p{PartKind::g2, 0.0, 0.0, epsilon, 0.0};
    return Objective("g2", {p}, epsilon, 0.0, {{"epsilon", epsilon}});
}

Objective build_quadratic(double curvature) {
    require_positive(curvature, "curvature");
    Part p{PartKind::quadratic, 0.0, 0.0, 0.0, curvature};
    return Objective("quadratic", {p}, curvature, 0.0, {{"curvature", curvature}});
}

Objective build_composite(const std::vector<Objective>& parts) {
    if (parts.empty()) {
        throw InvalidParameter("composite needs at least one part");
    }
    std::vector<Part> all;
    std::string id = "composite:";
    ParamMap params;
    double l0 = 0.0;
    double l1 = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& obj = parts[i];
        if (obj.dim() != 1) {
            throw InvalidParameter("composite parts must be one-dimensional");
        }
        all.push_back(obj.parts().front());
        id += (i ? "+" : "") + obj.id();
        l0 = std::max(l0, obj.l0());
        l1 = std::max(l1, obj.l1());
        for (const auto& [k, v] : obj.params()) {
            params.emplace(k, v);
        }
    }
    return Objective(id, std::move(all), l0, l1, std::move(params));
}

Objective make_objective(const std::string& id, const ParamMap& params) {
    const auto build_one = [&](const std::string& name) {
        if (name == "f1") {
            return build_f1(param_or(params, "l0", 1.0), param_or(params, "l1", 1.0));
        }
        if (name == "f2") {
            return build_f2(param_or(params, "epsilon", std::nullopt));
        }
        if (name == "f3") {
            return build_f3(param_or(params, "l0", 1.0), param_or(params, "l1", 1.0),
                            param_or(params, "epsilon", std::nullopt));
        }
        if (name == "g2") {
            return build_g2(param_or(params, "epsilon", std::nullopt));
        }
        if (name == "quadratic") {
            return build_quadratic(param_or(params, "curvature", 1.0));
        }
        throw ConfigError("objective.id", "unknown objective '" + name + "'");
    };

    Objective obj = [&] {
        const std::string prefix = "composite:";
        if (id.rfind(prefix, 0) != 0) {
            return build_one(id);
        }
        std::vector<Objective> parts;
        std::size_t start = prefix.size();
        while (start <= id.size()) {
            const auto end = id.find('+', start);
            parts.push_back(build_one(id.substr(start, end == std::string::npos ? std::string::npos : end - start)));
            if (end == std::string::npos) break;
            start = end + 1;
        }
        return build_composite(parts);
    }();

    const auto l0 = params.find("declared_l0");
    const auto l1 = params.find("declared_l1");
    if (l0 != params.end() || l1 != params.end()) {
        obj = obj.with_constants(l0 != params.end() ? l0->second : obj.l0(),
                                 l1 != params.end() ? l1->second : obj.l1());
    }
    return obj;
}

Vector init_point_for_gap(const Objective& obj, double delta1, Side side) {
    if (!(delta1 >= 0.0) || !std::isfinite(delta1)) {
        throw DomainError("gap must be a finite nonnegative number");
    }
    Vector w(obj.dim());
    for (Eigen::Index i = 0; i < obj.dim(); ++i) {
        const Part& p = obj.parts()[static_cast<std::size_t>(i)];
        bool positive = side != Side::negative;
        if (side == Side::canonical) {
            positive = p.kind != PartKind::f3;
        }
        w(i) = part_offset(p, delta1, positive);
    }
    return w;
}

std::pair<double, double> envelope_box(double x_min, double x_max, double l1) {
    const double pad = l1 > 0.0 ? 2.0 / l1 : 2.0;
    return {x_min - pad, x_max + pad};
}

namespace {

std::pair<double, double> default_box(const Objective& obj) {
    double kmin = 0.0;
    double kmax = 0.0;
    for (const auto& p : obj.parts()) {
        for (double k : p.kinks()) {
            kmin = std::min(kmin, k);
            kmax = std::max(kmax, k);
        }
    }
    return envelope_box(kmin, kmax, obj.l1());
}

}  // namespace

SmoothnessCert certify_smoothness(const Objective& obj, const CertifyOptions& options) {
    if (options.n_pairs < 1) {
        throw InvalidParameter("n_pairs must be at least 1");
    }
    const auto [dlo, dhi] = default_box(obj);
    const double lo = options.box_lo.value_or(dlo);
    const double hi = options.box_hi.value_or(dhi);
    if (!(hi > lo)) {
        throw InvalidParameter("certification box is empty");
    }
    const double radius = options.radius.value_or(obj.l1() > 0.0 ? 1.0 / obj.l1() : hi - lo);
    if (obj.l1() > 0.0 && radius > 1.0 / obj.l1() * (1.0 + 1e-12)) {
        throw InvalidParameter("pair radius exceeds 1/l1, outside the condition's hypothesis");
    }

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> box(lo, hi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal;

    const auto d = obj.dim();
    SmoothnessCert cert;
    cert.max_violation = -std::numeric_limits<double>::infinity();
    Vector w1(d), w2(d), dir(d), g1(d), g2(d);
    for (std::int64_t i = 0; i < options.n_pairs; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            w1(j) = box(rng);
            dir(j) = normal(rng);
        }
        const double n = dir.norm();
        const double r = radius * std::pow(unit(rng), 1.0 / static_cast<double>(d));
        w2 = w1 + (n > 0.0 ? r / n : 0.0) * dir;

        obj.gradient_into(w1, g1);
        obj.gradient_into(w2, g2);
        const double lhs = (g1 - g2).norm();
        const double rhs = (obj.l0() + obj.l1() * g1.norm()) * (w1 - w2).norm();
        const double violation = (lhs - rhs) / std::max(1.0, rhs);
        if (rhs > 0.0) {
            cert.required_scale = std::max(cert.required_scale, lhs / rhs);
        }
        if (violation > cert.max_violation) {
            cert.max_violation = violation;
            if (violation > 1e-9) {
                cert.violating_pair = std::make_pair(w1, w2);
            }
        }
        ++cert.pairs_tested;
    }
    return cert;
}

GradientCheck check_gradient_fd(const Objective& obj, std::int64_t n_points, std::uint64_t seed, double h) {
    if (n_points < 1 || !(h > 0.0)) {
        throw InvalidParameter("need n_points >= 1 and h > 0");
    }
    const auto [lo, hi] = default_box(obj);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> box(lo, hi);
    const auto d = obj.dim();

    GradientCheck out;
    out.min_gap = std::numeric_limits<double>::infinity();
    Vector w(d);
    while (out.points < n_points) {
        bool near_kink = false;
        for (Eigen::Index j = 0; j < d; ++j) {
            w(j) = box(rng);
            for (double k : obj.parts()[static_cast<std::size_t>(j)].kinks()) {
                near_kink = near_kink || std::abs(w(j) - k) < 2.0 * h;
            }
        }
        if (near_kink) continue;
        const Vector g = obj.gradient(w);
        for (Eigen::Index j = 0; j < d; ++j) {
            Vector wp = w;
            Vector wm = w;
            wp(j) += h;
            wm(j) -= h;
            const double fd = (obj.value(wp) - obj.value(wm)) / (2.0 * h);
            out.max_rel_error = std::max(out.max_rel_error, std::abs(fd - g(j)) / std::max(1.0, std::abs(g(j))));
        }
        out.min_gap = std::min(out.min_gap, obj.gap(w));
        ++out.points;
    }
    return out;
}

ContinuityCheck check_continuity(const Objective& obj) {
    ContinuityCheck out;
    for (const Part& p : obj.parts()) {
        for (double k : p.kinks()) {
            const double left = std::nextafter(k, -std::numeric_limits<double>::infinity());
            out.max_value_jump = std::max(out.max_value_jump, std::abs(p.value(k) - p.value(left)));
            out.max_derivative_jump = std::max(out.max_derivative_jump, std::abs(p.derivative(k) - p.derivative(left)));
            ++out.kinks;
        }
    }
    return out;
}

}  // namespace adamlab
