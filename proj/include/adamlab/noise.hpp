#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "adamlab/objectives.hpp"

namespace adamlab {

using Rng = std::mt19937_64;

/// Independent stream for replica `index` of a run seeded with `master`.
Rng make_stream(std::uint64_t master, std::uint64_t index);

enum class OracleKind { deterministic, gaussian_affine, heavy_sqrt_exp };

std::string to_string(OracleKind kind);
OracleKind oracle_kind_from_string(const std::string& name);

struct OracleConfig {
    OracleKind kind = OracleKind::deterministic;
    double sigma0 = 0.0;
    double sigma1 = 1.0;
    /// Density scale of the heavy oracle, density proportional to e^{-sqrt|z|/c}.
    double c = 0.0;
    std::uint64_t seed = 0;

    static OracleConfig deterministic();
    static OracleConfig gaussian_affine(double sigma0, double sigma1, std::uint64_t seed = 0);
    /// Heavy oracle with c calibrated so the noise variance is sigma0^2.
    static OracleConfig heavy(double sigma0, std::uint64_t seed = 0);

    void validate() const;
};

/// Noise added by the oracle at true gradient `true_grad`.
///
/// gaussian_affine: isotropic Gaussian with E||zeta||^2 = sigma0^2 + (sigma1^2 - 1)||G||^2,
/// so E||g||^2 = sigma0^2 + sigma1^2 ||G||^2 holds with equality.
/// heavy_sqrt_exp: 1D only, |z| = c^2 u^2 with u ~ Gamma(2, 1) and a uniform sign.
Vector sample(const OracleConfig& cfg, const Eigen::Ref<const Vector>& true_grad, Rng& rng);

/// Scale c for which K e^{-sqrt|z|/c} (K = 1/(4c^2)) has variance sigma0^2.
/// E[z^2] = c^4 E[u^4] = 120 c^4 for u ~ Gamma(2, 1).
double calibrate_c(double sigma0);

/// log of the heavy density at z.
double heavy_log_density(double z, double c);

struct AffineVarianceEntry {
    double grad_norm = 0.0;
    double estimate = 0.0;  // mean of ||g||^2
    double bound = 0.0;     // sigma0^2 + sigma1^2 ||G||^2
    double std_error = 0.0;
    double slack = 0.0;     // bound + 3 se - estimate
};

struct AffineVarianceReport {
    std::vector<AffineVarianceEntry> entries;
    double worst_slack = 0.0;
    bool passed = true;
};

AffineVarianceReport verify_affine_variance(const OracleConfig& cfg, const std::vector<Vector>& grads,
                                            std::int64_t n_draws);

struct DivergenceCertificate {
    std::vector<double> window_bounds;
    /// Partial integrals over z in [-Z, 0]; +inf when they overflow a double.
    std::vector<double> partial_integrals;
    std::vector<double> log_partial_integrals;
    double threshold = 1e6;
    bool verdict = false;
};

struct DivergenceInputs {
    double w_t = 0.0;
    double eta = 0.0;
    double beta = 0.0;
    double m_prev = 0.0;
    double c = 0.0;
    double threshold = 1e6;
    double rel_tol = 1e-6;
};

/// Partial integrals of |f1'(w_{t+1}(z))| times the heavy density over
/// z in [-Z, 0] for every Z in `windows`, where w_{t+1}(z) is one SGDM step
/// from w_t with noise z. Computed in the log domain.
DivergenceCertificate divergence_certificate(const Objective& obj, const DivergenceInputs& in,
                                             const std::vector<double>& windows);

/// Geometric windows around the point where the exponential growth of f1'
/// overtakes the density's decay; extended until the partial integral passes
/// ten times the threshold (or a fixed number of doublings when eta(1-beta)=0).
std::vector<double> auto_windows(const Objective& obj, const DivergenceInputs& in);

}  // namespace adamlab
