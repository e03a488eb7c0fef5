#include "adamlab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "adamlab/errors.hpp"

namespace adamlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log |f1'(w)| evaluated without forming the exponential.
double log_abs_f1_derivative(const Part& p, double w) {
    const double s = 1.0 / p.l1;
    if (w >= s) return std::log(p.l0 / p.l1) + p.l1 * w - 1.0;
    if (w >= -s) return w == 0.0 ? kNegInf : std::log(p.l0 * std::abs(w));
    return std::log(p.l0 / p.l1) - p.l1 * w - 1.0;
}

struct StepModel {
    Part part;
    double base;   // w_{t+1} at z = 0
    double slope;  // eta (1 - beta); w_{t+1}(z) = base - slope * z
    double c;

    // log of the integrand at s = |z|, z = -s.
    double log_integrand(double s) const {
        return log_abs_f1_derivative(part, base + slope * s) + heavy_log_density(-s, c);
    }
};

StepModel make_model(const Objective& obj, const DivergenceInputs& in) {
    if (obj.dim() != 1 || obj.parts().front().kind != PartKind::f1) {
        throw InvalidParameter("divergence certificate is defined for f1 only");
    }
    if (!(in.c > 0.0)) {
        throw InvalidParameter("heavy oracle scale c must be positive");
    }
    if (in.eta < 0.0 || in.beta < 0.0 || in.beta > 1.0) {
        throw InvalidParameter("need eta >= 0 and beta in [0, 1]");
    }
    const Part& p = obj.parts().front();
    const double a = in.eta * (1.0 - in.beta);
    const double base = in.w_t - a * p.derivative(in.w_t) - in.eta * in.beta * in.m_prev;
    return StepModel{p, base, a, in.c};
}

// log of the integral over s in [s0, s1]. Integrates in v = sqrt(s) so the
// density's sqrt is smooth, splits at branch changes of f1', and rescales
// every piece by its own maximum.
double segment_log_integral(const StepModel& m, double s0, double s1, double rel_tol, std::size_t window) {
    std::vector<double> cuts{s0, s1};
    if (m.slope > 0.0) {
        const double s = 1.0 / m.part.l1;
        for (double x : {-s, 0.0, s}) {
            const double at = (x - m.base) / m.slope;
            if (at > s0 && at < s1) cuts.push_back(at);
        }
    }
    std::sort(cuts.begin(), cuts.end());

    using Quad = boost::math::quadrature::gauss_kronrod<double, 31>;
    double total = kNegInf;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double v0 = std::sqrt(cuts[k]);
        const double v1 = std::sqrt(cuts[k + 1]);
        if (!(v1 > v0)) continue;
        const double span = std::max({(v1 - v0) / m.c, m.slope * (v1 * v1 - v0 * v0) / 2.0, 8.0});
        const auto pieces = static_cast<std::size_t>(std::min(std::ceil(span), 200000.0));
        const double dv = (v1 - v0) / static_cast<double>(pieces);
        if (!(dv > std::numeric_limits<double>::epsilon() * std::max(1.0, v1))) {
            throw NumericError("integration step underflow in window " + std::to_string(window),
                               static_cast<std::int64_t>(window));
        }
        for (std::size_t j = 0; j < pieces; ++j) {
            const double a = v0 + dv * static_cast<double>(j);
            const double b = j + 1 == pieces ? v1 : a + dv;
            const auto log_f = [&](double v) { return m.log_integrand(v * v) + std::log(2.0 * v); };
            double peak = std::max({log_f(a), log_f(b), log_f(0.5 * (a + b))});
            if (peak == kNegInf) continue;
            if (!std::isfinite(peak)) {
                throw NumericError("non-finite integrand in window " + std::to_string(window),
                                   static_cast<std::int64_t>(window));
            }
            double err = 0.0;
            const double value = Quad::integrate([&](double v) { return std::exp(log_f(v) - peak); }, a, b, 20,
                                                 rel_tol, &err);
            if (!std::isfinite(value) || err > 10.0 * rel_tol * std::abs(value) + 1e-300) {
                throw NumericError("quadrature did not converge in window " + std::to_string(window),
                                   static_cast<std::int64_t>(window));
            }
            if (value > 0.0) {
                total = log_add(total, peak + std::log(value));
            }
        }
    }
    return total;
}

}  // namespace

Rng make_stream(std::uint64_t master, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x9e3779b9u};
    return Rng(seq);
}

std::string to_string(OracleKind kind) {
    switch (kind) {
        case OracleKind::deterministic: return "deterministic";
        case OracleKind::gaussian_affine: return "gaussian_affine";
        case OracleKind::heavy_sqrt_exp: return "heavy_sqrt_exp";
    }
    return "unknown";
}

OracleKind oracle_kind_from_string(const std::string& name) {
    if (name == "deterministic") return OracleKind::deterministic;
    if (name == "gaussian_affine") return OracleKind::gaussian_affine;
    if (name == "heavy_sqrt_exp") return OracleKind::heavy_sqrt_exp;
    throw ConfigError("oracle.kind", "unknown oracle kind '" + name + "'");
}

OracleConfig OracleConfig::deterministic() { return OracleConfig{}; }

OracleConfig OracleConfig::gaussian_affine(double sigma0, double sigma1, std::uint64_t seed) {
    OracleConfig cfg{OracleKind::gaussian_affine, sigma0, sigma1, 0.0, seed};
    cfg.validate();
    return cfg;
}

OracleConfig OracleConfig::heavy(double sigma0, std::uint64_t seed) {
    OracleConfig cfg{OracleKind::heavy_sqrt_exp, sigma0, 1.0, calibrate_c(sigma0), seed};
    cfg.validate();
    return cfg;
}

void OracleConfig::validate() const {
    if (kind == OracleKind::deterministic) return;
    if (!(sigma0 >= 0.0) || !std::isfinite(sigma0)) {
        throw ConfigError("oracle.sigma0", "must be a finite nonnegative number");
    }
    if (!(sigma1 >= 1.0) || !std::isfinite(sigma1)) {
        throw ConfigError("oracle.sigma1", "must be >= 1");
    }
    if (kind == OracleKind::heavy_sqrt_exp && !(c > 0.0)) {
        throw ConfigError("oracle.c", "heavy oracle needs a positive density scale");
    }
}

Vector sample(const OracleConfig& cfg, const Eigen::Ref<const Vector>& true_grad, Rng& rng) {
    switch (cfg.kind) {
        case OracleKind::deterministic:
            return true_grad;
        case OracleKind::gaussian_affine: {
            const double d = static_cast<double>(true_grad.size());
            const double var = cfg.sigma0 * cfg.sigma0 + (cfg.sigma1 * cfg.sigma1 - 1.0) * true_grad.squaredNorm();
            const double scale = std::sqrt(var / d);
            std::normal_distribution<double> normal;
            Vector g = true_grad;
            for (Eigen::Index i = 0; i < g.size(); ++i) {
                g(i) += scale * normal(rng);
            }
            return g;
        }
        case OracleKind::heavy_sqrt_exp: {
            if (true_grad.size() != 1) {
                throw UnsupportedDimension("heavy_sqrt_exp oracle is one-dimensional");
            }
            std::gamma_distribution<double> gamma(2.0, 1.0);
            std::bernoulli_distribution coin(0.5);
            const double u = gamma(rng);
            const double z = cfg.c * cfg.c * u * u;
            Vector g = true_grad;
            g(0) += coin(rng) ? z : -z;
            return g;
        }
    }
    return true_grad;
}

double calibrate_c(double sigma0) {
    if (!(sigma0 > 0.0)) {
        throw InvalidParameter("sigma0 must be positive");
    }
    return std::pow(sigma0 * sigma0 / 120.0, 0.25);
}

double heavy_log_density(double z, double c) {
    return -std::log(4.0 * c * c) - std::sqrt(std::abs(z)) / c;
}

AffineVarianceReport verify_affine_variance(const OracleConfig& cfg, const std::vector<Vector>& grads,
                                            std::int64_t n_draws) {
    cfg.validate();
    if (n_draws < 2) {
        throw InvalidParameter("n_draws must be at least 2");
    }
    AffineVarianceReport report;
    report.worst_slack = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const Vector& G = grads[i];
        Rng rng = make_stream(cfg.seed, i);
        double mean = 0.0;
        double m2 = 0.0;
        for (std::int64_t k = 0; k < n_draws; ++k) {
            const double x = sample(cfg, G, rng).squaredNorm();
            const double delta = x - mean;
            mean += delta / static_cast<double>(k + 1);
            m2 += delta * (x - mean);
        }
        AffineVarianceEntry e;
        e.grad_norm = G.norm();
        e.estimate = mean;
        e.bound = cfg.sigma0 * cfg.sigma0 + cfg.sigma1 * cfg.sigma1 * G.squaredNorm();
        e.std_error = std::sqrt(m2 / static_cast<double>(n_draws - 1) / static_cast<double>(n_draws));
        e.slack = e.bound + 3.0 * e.std_error - e.estimate;
        report.worst_slack = std::min(report.worst_slack, e.slack);
        report.passed = report.passed && e.slack >= 0.0;
        report.entries.push_back(e);
    }
    return report;
}

DivergenceCertificate divergence_certificate(const Objective& obj, const DivergenceInputs& in,
                                             const std::vector<double>& windows) {
    const StepModel model = make_model(obj, in);
    if (windows.empty()) {
        throw InvalidParameter("need at least one window");
    }
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!(windows[i] > (i ? windows[i - 1] : 0.0))) {
            throw InvalidParameter("windows must be positive and strictly increasing");
        }
    }

    DivergenceCertificate cert;
    cert.threshold = in.threshold;
    double log_total = kNegInf;
    double prev = 0.0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        log_total = log_add(log_total, segment_log_integral(model, prev, windows[i], in.rel_tol, i));
        prev = windows[i];
        cert.window_bounds.push_back(windows[i]);
        cert.log_partial_integrals.push_back(log_total);
        cert.partial_integrals.push_back(std::exp(log_total));
    }

    bool increasing = true;
    for (std::size_t i = 1; i < cert.log_partial_integrals.size(); ++i) {
        increasing = increasing && cert.log_partial_integrals[i] > cert.log_partial_integrals[i - 1];
    }
    cert.verdict = increasing && cert.log_partial_integrals.back() > std::log(in.threshold);
    return cert;
}

std::vector<double> auto_windows(const Objective& obj, const DivergenceInputs& in) {
    const StepModel model = make_model(obj, in);
    if (!(model.slope > 0.0)) {
        return {1e2, 1e3, 1e4};
    }
    const double crossover = 1.0 / ((model.c * model.slope) * (model.c * model.slope));
    const double target = std::log(10.0 * in.threshold);
    std::vector<double> windows;
    double z = std::max(crossover / 8.0, 1.0);
    double log_total = kNegInf;
    double prev = 0.0;
    for (int i = 0; i < 64; ++i) {
        const double next = log_add(log_total, segment_log_integral(model, prev, z, in.rel_tol, windows.size()));
        // An increment below double resolution would show up as a tie; widen the
        // last window instead so the reported sequence stays strictly increasing.
        if (!windows.empty() && !(next > log_total + 1e-9)) {
            windows.back() = z;
        } else {
            windows.push_back(z);
        }
        log_total = next;
        prev = z;
        if (windows.size() >= 3 && log_total > target) break;
        z *= 2.0;
    }
    return windows;
}

}  // namespace adamlab
