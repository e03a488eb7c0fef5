#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace adamlab {

using Vector = Eigen::VectorXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using ParamMap = std::map<std::string, double>;

enum class PartKind { f1, f2, f3, g2, quadratic };

std::string to_string(PartKind kind);

/// One coordinate of a separable objective.
///
/// f1: exponential / quadratic / exponential, minimum L0/(2 L1^2) at 0.
/// f2, g2: Huber-like with slope epsilon outside [-1, 1], minimum 0.
/// f3: exponential on the left, quadratic with curvature L0 on [-1/L1, 0],
///     curvature epsilon*L1 on [0, 1/L1], slope epsilon beyond.
/// quadratic: curvature * x^2 / 2.
///
/// At a kink the derivative of the right-hand branch is returned.
struct Part {
    PartKind kind = PartKind::quadratic;
    double l0 = 0.0;
    double l1 = 0.0;
    double epsilon = 0.0;
    double curvature = 0.0;

    double value(double x) const;
    double derivative(double x) const;
    double infimum() const;
    std::vector<double> kinks() const;
};

/// Analytic objective with exact gradient, declared (L0, L1) constants and a
/// known global infimum. Immutable once built.
class Objective {
public:
    Objective(std::string id, std::vector<Part> parts, double l0, double l1, ParamMap params);

    const std::string& id() const noexcept { return id_; }
    Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(parts_.size()); }
    double l0() const noexcept { return l0_; }
    double l1() const noexcept { return l1_; }
    double f_star() const noexcept { return f_star_; }
    const ParamMap& params() const noexcept { return params_; }
    const std::vector<Part>& parts() const noexcept { return parts_; }

    double value(const Eigen::Ref<const Vector>& w) const;
    Vector gradient(const Eigen::Ref<const Vector>& w) const;
    void gradient_into(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> out) const;
    double gap(const Eigen::Ref<const Vector>& w) const { return value(w) - f_star_; }

    /// Same function with different declared constants.
    Objective with_constants(double l0, double l1) const;

private:
    std::string id_;
    std::vector<Part> parts_;
    double l0_;
    double l1_;
    double f_star_;
    ParamMap params_;
};

Objective build_f1(double l0, double l1);
Objective build_f2(double epsilon);
Objective build_f3(double l0, double l1, double epsilon);
Objective build_g2(double epsilon);
Objective build_quadratic(double curvature = 1.0);

/// Separable sum of 1D objectives. Declared constants are the coordinatewise
/// maxima; the infimum is the sum of the parts' infima.
Objective build_composite(const std::vector<Objective>& parts);

/// Builds an objective from its string id ("f1", "f2", "f3", "g2",
/// "quadratic", "composite:f1+f2+f3", ...) and a parameter map.
/// Recognised keys: l0, l1, epsilon, curvature. Optional "declared_l0" /
/// "declared_l1" override the declared constants.
Objective make_objective(const std::string& id, const ParamMap& params);

enum class Side { positive, negative, canonical };

/// Point whose gap f(p) - f* equals delta1 (per coordinate for composites).
/// `canonical` picks the side used by the lower-bound constructions: positive
/// for f1, f2, g2 and quadratic, negative for f3.
Vector init_point_for_gap(const Objective& obj, double delta1, Side side = Side::canonical);

struct SmoothnessCert {
    std::int64_t pairs_tested = 0;
    /// Largest (lhs - rhs) / max(1, rhs) seen; a pass needs this <= 1e-9.
    double max_violation = 0.0;
    /// Largest lhs / rhs seen over pairs with rhs > 0. Values above 1 give the
    /// factor by which (L0, L1) would have to grow for the sample to pass.
    double required_scale = 0.0;
    std::optional<std::pair<Vector, Vector>> violating_pair;

    bool passed(double tolerance = 1e-9) const { return max_violation <= tolerance; }
};

struct CertifyOptions {
    std::int64_t n_pairs = 10000;
    /// Sampling box applied to every coordinate. Defaults to the hull of the
    /// kinks widened by 2/l1 (by 2 when l1 = 0).
    std::optional<double> box_lo;
    std::optional<double> box_hi;
    /// Maximum pair distance; defaults to 1/l1 (the box width when l1 = 0).
    std::optional<double> radius;
    std::uint64_t seed = 0;
};

/// Box [x_min - 2/l1, x_max + 2/l1] around a trajectory envelope.
std::pair<double, double> envelope_box(double x_min, double x_max, double l1);

SmoothnessCert certify_smoothness(const Objective& obj, const CertifyOptions& options = {});

struct GradientCheck {
    std::int64_t points = 0;
    /// max |fd - g| / max(1, |g|) over coordinates and points.
    double max_rel_error = 0.0;
    /// Smallest value(w) - f_star seen; negative means the infimum is wrong.
    double min_gap = 0.0;

    bool passed(double tolerance = 1e-6) const { return max_rel_error < tolerance && min_gap >= 0.0; }
};

/// Central differences with step h at `n_points` uniform points of the
/// default certification box, skipping points within 2h of a kink.
GradientCheck check_gradient_fd(const Objective& obj, std::int64_t n_points, std::uint64_t seed, double h = 1e-6);

struct ContinuityCheck {
    std::int64_t kinks = 0;
    double max_value_jump = 0.0;
    double max_derivative_jump = 0.0;

    bool passed(double tolerance = 1e-12) const {
        return max_value_jump <= tolerance && max_derivative_jump <= tolerance;
    }
};

/// Compares value and derivative one ulp left of each kink with the kink itself.
ContinuityCheck check_continuity(const Objective& obj);

}  // namespace adamlab
