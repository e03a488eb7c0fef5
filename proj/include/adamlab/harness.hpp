#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adamlab/analysis.hpp"
#include "adamlab/noise.hpp"
#include "adamlab/objectives.hpp"
#include "adamlab/optimizers.hpp"

namespace adamlab {

inline constexpr const char* kToolVersion = "adamlab 0.1.0";

struct DivergeSpec {
    double eta = 1.0;
    double beta = 0.0;
    double m_prev = 0.0;
    double threshold = 1e6;
    double rel_tol = 1e-6;
    /// Point w_t; defaults to the configured start.
    std::optional<double> w_t;
    /// Empty: windows chosen automatically.
    std::vector<double> windows;
};

struct ExperimentConfig {
    std::string id = "experiment";
    std::string objective_id;
    ParamMap objective_params;
    OracleConfig oracle;
    OptimizerKind optimizer = OptimizerKind::adam;
    HyperParams<double> hyper;
    ScheduleKind schedule_kind = ScheduleKind::constant;
    /// Explicit inputs; anything missing is filled from T, the start gap,
    /// the objective's constants, the oracle and the hyperparameters.
    ParamMap schedule_inputs;
    std::optional<std::vector<double>> start_point;
    double delta1 = 1.0;
    Side side = Side::canonical;
    std::vector<std::int64_t> T;
    int replicas = 1;
    std::uint64_t seed = 0;
    std::int64_t record_every = 1;
    double guard = 1e12;
    std::string output_dir;
    unsigned workers = 0;
    // tune
    double epsilon = 0.5;
    std::vector<double> eta_grid;
    std::vector<double> beta_grid;
    // diverge-cert
    DivergeSpec diverge;
};

/// Parses the YAML config format (see README).
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of every field that influences results.
std::string canonical_json(const ExperimentConfig& cfg);
/// Hex SHA-256 of canonical_json.
std::string fingerprint(const ExperimentConfig& cfg);
std::string sha256_hex(const std::string& bytes);

Objective build_objective(const ExperimentConfig& cfg);
Vector start_point(const ExperimentConfig& cfg, const Objective& obj);
Schedule build_schedule(const ExperimentConfig& cfg, const Objective& obj, const Vector& w1, std::int64_t T);

/// One record per (T, replica), ordered by T then replica. Numeric errors are
/// captured in TrajectoryRecord::error.
std::vector<TrajectoryRecord> run_experiment(const ExperimentConfig& cfg, const TrajectoryOptions& base = {});

enum class Metric { mean_grad, min_grad };

Metric metric_from_string(const std::string& name);

struct SweepResult {
    std::vector<TrajectoryRecord> records;
    /// Unset when any record diverged or failed.
    std::optional<RateFit> fit;
    std::string divergence_summary;
};

/// Replica-averaged metric per T, fitted against T.
SweepResult sweep_rate(const ExperimentConfig& cfg, Metric metric);

/// Replica average of the metric for each T, in config order.
std::vector<std::pair<double, double>> metric_points(const std::vector<TrajectoryRecord>& records, Metric metric);

struct Artifacts {
    std::string fingerprint;
    std::vector<TrajectoryRecord> records;
    std::vector<std::pair<std::string, RateFit>> fits;
    /// (name, JSON text) pairs: certificates, reports.
    std::vector<std::pair<std::string, std::string>> documents;
};

/// Writes CSV trajectories, JSON fits and documents, gnuplot data per fit and
/// manifest.json into `dir`. Returns the manifest path.
std::filesystem::path persist(const Artifacts& artifacts, const std::filesystem::path& dir);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

std::string trajectory_csv(const TrajectoryRecord& record);

}  // namespace adamlab
