#include "adamlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "adamlab/errors.hpp"

namespace adamlab {

using nlohmann::json;

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& field) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(field, "cannot parse value");
    }
}

double number(const YAML::Node& node, const std::string& field) {
    const double v = scalar<double>(node, field);
    if (!std::isfinite(v)) throw ConfigError(field, "must be finite");
    return v;
}

void reject_unknown(const YAML::Node& node, const std::string& prefix, std::initializer_list<const char*> known) {
    if (!node.IsMap()) throw ConfigError(prefix.empty() ? "config" : prefix, "expected a mapping");
    const std::set<std::string> ok(known.begin(), known.end());
    for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        if (!ok.count(key)) throw ConfigError(prefix.empty() ? key : prefix + "." + key, "unknown key");
    }
}

ParamMap param_map(const YAML::Node& node, const std::string& field) {
    ParamMap out;
    if (!node) return out;
    if (!node.IsMap()) throw ConfigError(field, "expected a mapping of numbers");
    for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        out[key] = number(kv.second, field + "." + key);
    }
    return out;
}

std::vector<double> number_list(const YAML::Node& node, const std::string& field) {
    std::vector<double> out;
    if (node.IsScalar()) return {number(node, field)};
    if (!node.IsSequence()) throw ConfigError(field, "expected a number or a list");
    for (std::size_t i = 0; i < node.size(); ++i) out.push_back(number(node[i], field + "[" + std::to_string(i) + "]"));
    return out;
}

// Either an explicit list or {lo, hi, n} for a geometric grid.
std::vector<double> grid(const YAML::Node& node, const std::string& field) {
    if (node.IsMap()) {
        reject_unknown(node, field, {"lo", "hi", "n"});
        if (!node["lo"] || !node["hi"] || !node["n"]) throw ConfigError(field, "grid needs lo, hi and n");
        try {
            return geometric_grid(number(node["lo"], field + ".lo"), number(node["hi"], field + ".hi"),
                                  scalar<int>(node["n"], field + ".n"));
        } catch (const InvalidParameter& e) {
            throw ConfigError(field, e.what());
        }
    }
    return number_list(node, field);
}

Side side_from_string(const std::string& s) {
    if (s == "positive") return Side::positive;
    if (s == "negative") return Side::negative;
    if (s == "canonical") return Side::canonical;
    throw ConfigError("start.side", "expected positive, negative or canonical");
}

std::string to_string(Side s) {
    switch (s) {
        case Side::positive: return "positive";
        case Side::negative: return "negative";
        case Side::canonical: return "canonical";
    }
    return "canonical";
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

template <typename F>
void parallel_for(std::size_t n, unsigned workers, F&& body) {
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) body(i);
    };
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    std::vector<std::jthread> pool;
    for (unsigned i = 1; i < workers; ++i) pool.emplace_back(work);
    work();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError("config", std::string("malformed YAML: ") + e.what());
    }
    if (!root || !root.IsMap()) throw ConfigError("config", "expected a mapping at the top level");
    reject_unknown(root, "", {"id", "objective", "oracle", "optimizer", "hyper", "schedule", "start", "T", "replicas",
                              "seed", "record_every", "guard", "output", "workers", "tune", "diverge"});

    ExperimentConfig cfg;
    if (root["id"]) cfg.id = scalar<std::string>(root["id"], "id");

    const YAML::Node obj = root["objective"];
    if (!obj) throw ConfigError("objective", "required section missing");
    reject_unknown(obj, "objective", {"id", "params"});
    if (!obj["id"]) throw ConfigError("objective.id", "required");
    cfg.objective_id = scalar<std::string>(obj["id"], "objective.id");
    cfg.objective_params = param_map(obj["params"], "objective.params");

    if (const YAML::Node o = root["oracle"]) {
        reject_unknown(o, "oracle", {"kind", "sigma0", "sigma1", "c"});
        cfg.oracle.kind = o["kind"] ? oracle_kind_from_string(scalar<std::string>(o["kind"], "oracle.kind"))
                                    : OracleKind::deterministic;
        if (o["sigma0"]) cfg.oracle.sigma0 = number(o["sigma0"], "oracle.sigma0");
        if (o["sigma1"]) cfg.oracle.sigma1 = number(o["sigma1"], "oracle.sigma1");
        if (o["c"]) {
            cfg.oracle.c = number(o["c"], "oracle.c");
        } else if (cfg.oracle.kind == OracleKind::heavy_sqrt_exp) {
            if (!(cfg.oracle.sigma0 > 0.0)) throw ConfigError("oracle.sigma0", "heavy oracle needs sigma0 > 0");
            cfg.oracle.c = calibrate_c(cfg.oracle.sigma0);
        }
    }

    if (root["optimizer"]) cfg.optimizer = optimizer_kind_from_string(scalar<std::string>(root["optimizer"], "optimizer"));

    if (const YAML::Node h = root["hyper"]) {
        reject_unknown(h, "hyper", {"eta", "beta1", "beta2", "lambda", "nu0", "m0", "momentum_init"});
        if (h["eta"]) cfg.hyper.eta = number(h["eta"], "hyper.eta");
        if (h["beta1"]) cfg.hyper.beta1 = number(h["beta1"], "hyper.beta1");
        if (h["beta2"]) cfg.hyper.beta2 = number(h["beta2"], "hyper.beta2");
        if (h["lambda"]) cfg.hyper.lambda = number(h["lambda"], "hyper.lambda");
        if (h["nu0"]) cfg.hyper.nu0 = number(h["nu0"], "hyper.nu0");
        if (h["m0"]) {
            const auto v = number_list(h["m0"], "hyper.m0");
            cfg.hyper.m0 = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
        if (h["momentum_init"]) {
            const auto s = scalar<std::string>(h["momentum_init"], "hyper.momentum_init");
            if (s == "zero") cfg.hyper.momentum_init = MomentumInit::zero;
            else if (s == "first_gradient") cfg.hyper.momentum_init = MomentumInit::first_gradient;
            else throw ConfigError("hyper.momentum_init", "expected zero or first_gradient");
        }
        if (cfg.hyper.beta1 < 0.0 || cfg.hyper.beta1 > 1.0) throw ConfigError("hyper.beta1", "must lie in [0, 1]");
        if (cfg.hyper.beta2 < 0.0 || cfg.hyper.beta2 >= 1.0) throw ConfigError("hyper.beta2", "must lie in [0, 1)");
        if (cfg.hyper.lambda < 0.0) throw ConfigError("hyper.lambda", "must be nonnegative");
        if (cfg.hyper.nu0 && !(*cfg.hyper.nu0 > 0.0)) throw ConfigError("hyper.nu0", "must be positive");
    }

    if (const YAML::Node s = root["schedule"]) {
        reject_unknown(s, "schedule", {"kind", "inputs"});
        if (s["kind"]) cfg.schedule_kind = schedule_kind_from_string(scalar<std::string>(s["kind"], "schedule.kind"));
        cfg.schedule_inputs = param_map(s["inputs"], "schedule.inputs");
    }

    if (const YAML::Node st = root["start"]) {
        reject_unknown(st, "start", {"delta1", "side", "point"});
        if (st["point"]) cfg.start_point = number_list(st["point"], "start.point");
        if (st["delta1"]) cfg.delta1 = number(st["delta1"], "start.delta1");
        if (st["side"]) cfg.side = side_from_string(scalar<std::string>(st["side"], "start.side"));
        if (cfg.delta1 < 0.0) throw ConfigError("start.delta1", "must be nonnegative");
    }

    if (const YAML::Node t = root["T"]) {
        for (double v : number_list(t, "T")) {
            if (!(v >= 1.0) || v != std::floor(v) || v > 67108864.0) {
                throw ConfigError("T", "entries must be integers in [1, 2^26]");
            }
            cfg.T.push_back(static_cast<std::int64_t>(v));
        }
    }
    if (root["replicas"]) cfg.replicas = scalar<int>(root["replicas"], "replicas");
    if (cfg.replicas < 1) throw ConfigError("replicas", "must be at least 1");
    if (root["seed"]) cfg.seed = scalar<std::uint64_t>(root["seed"], "seed");
    cfg.oracle.seed = cfg.seed;
    if (root["record_every"]) cfg.record_every = scalar<std::int64_t>(root["record_every"], "record_every");
    if (cfg.record_every < 1) throw ConfigError("record_every", "must be at least 1");
    if (root["guard"]) cfg.guard = number(root["guard"], "guard");
    if (root["output"]) cfg.output_dir = scalar<std::string>(root["output"], "output");
    if (root["workers"]) cfg.workers = scalar<unsigned>(root["workers"], "workers");

    if (const YAML::Node tn = root["tune"]) {
        reject_unknown(tn, "tune", {"epsilon", "eta_grid", "beta_grid"});
        if (tn["epsilon"]) cfg.epsilon = number(tn["epsilon"], "tune.epsilon");
        if (tn["eta_grid"]) cfg.eta_grid = grid(tn["eta_grid"], "tune.eta_grid");
        if (tn["beta_grid"]) cfg.beta_grid = number_list(tn["beta_grid"], "tune.beta_grid");
    }

    if (const YAML::Node d = root["diverge"]) {
        reject_unknown(d, "diverge", {"eta", "beta", "m_prev", "threshold", "rel_tol", "w_t", "windows"});
        if (d["eta"]) cfg.diverge.eta = number(d["eta"], "diverge.eta");
        if (d["beta"]) cfg.diverge.beta = number(d["beta"], "diverge.beta");
        if (d["m_prev"]) cfg.diverge.m_prev = number(d["m_prev"], "diverge.m_prev");
        if (d["threshold"]) cfg.diverge.threshold = number(d["threshold"], "diverge.threshold");
        if (d["rel_tol"]) cfg.diverge.rel_tol = number(d["rel_tol"], "diverge.rel_tol");
        if (d["w_t"]) cfg.diverge.w_t = number(d["w_t"], "diverge.w_t");
        if (d["windows"]) cfg.diverge.windows = number_list(d["windows"], "diverge.windows");
    }

    cfg.oracle.validate();
    build_objective(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config", "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string canonical_json(const ExperimentConfig& cfg) {
    json j;
    j["id"] = cfg.id;
    j["objective"] = {{"id", cfg.objective_id}, {"params", cfg.objective_params}};
    j["oracle"] = {{"kind", to_string(cfg.oracle.kind)},
                   {"sigma0", cfg.oracle.sigma0},
                   {"sigma1", cfg.oracle.sigma1},
                   {"c", cfg.oracle.c}};
    j["optimizer"] = to_string(cfg.optimizer);
    j["hyper"] = {{"eta", cfg.hyper.eta},
                  {"beta1", cfg.hyper.beta1},
                  {"beta2", cfg.hyper.beta2},
                  {"lambda", cfg.hyper.lambda},
                  {"nu0", cfg.hyper.nu0 ? json(*cfg.hyper.nu0) : json(nullptr)},
                  {"m0", std::vector<double>(cfg.hyper.m0.data(), cfg.hyper.m0.data() + cfg.hyper.m0.size())},
                  {"momentum_init", cfg.hyper.momentum_init == MomentumInit::zero ? "zero" : "first_gradient"}};
    j["schedule"] = {{"kind", to_string(cfg.schedule_kind)}, {"inputs", cfg.schedule_inputs}};
    j["start"] = {{"delta1", cfg.delta1},
                  {"side", to_string(cfg.side)},
                  {"point", cfg.start_point ? json(*cfg.start_point) : json(nullptr)}};
    j["T"] = cfg.T;
    j["replicas"] = cfg.replicas;
    j["seed"] = cfg.seed;
    j["record_every"] = cfg.record_every;
    j["guard"] = cfg.guard;
    j["tune"] = {{"epsilon", cfg.epsilon}, {"eta_grid", cfg.eta_grid}, {"beta_grid", cfg.beta_grid}};
    j["diverge"] = {{"eta", cfg.diverge.eta},
                    {"beta", cfg.diverge.beta},
                    {"m_prev", cfg.diverge.m_prev},
                    {"threshold", cfg.diverge.threshold},
                    {"rel_tol", cfg.diverge.rel_tol},
                    {"w_t", cfg.diverge.w_t ? json(*cfg.diverge.w_t) : json(nullptr)},
                    {"windows", cfg.diverge.windows}};
    j["tool_version"] = kToolVersion;
    return j.dump();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string fingerprint(const ExperimentConfig& cfg) { return sha256_hex(canonical_json(cfg)); }

Objective build_objective(const ExperimentConfig& cfg) {
    try {
        return make_objective(cfg.objective_id, cfg.objective_params);
    } catch (const ConfigError& e) {
        throw ConfigError("objective." + e.field(), e.what());
    } catch (const InvalidParameter& e) {
        throw ConfigError("objective.params", e.what());
    }
}

Vector start_point(const ExperimentConfig& cfg, const Objective& obj) {
    if (cfg.start_point) {
        if (static_cast<Eigen::Index>(cfg.start_point->size()) != obj.dim()) {
            throw ConfigError("start.point", "dimension does not match the objective");
        }
        return Eigen::Map<const Vector>(cfg.start_point->data(), obj.dim());
    }
    try {
        return init_point_for_gap(obj, cfg.delta1, cfg.side);
    } catch (const Error& e) {
        throw ConfigError("start.delta1", e.what());
    }
}

Schedule build_schedule(const ExperimentConfig& cfg, const Objective& obj, const Vector& w1, std::int64_t T) {
    ParamMap in = cfg.schedule_inputs;
    const auto fill = [&](const char* key, double v) { in.emplace(key, v); };
    fill("T", static_cast<double>(T));
    fill("delta1", obj.gap(w1));
    fill("l0", obj.l0());
    fill("l1", obj.l1());
    if (cfg.oracle.kind != OracleKind::deterministic) {
        fill("sigma0", cfg.oracle.sigma0);
        fill("sigma1", cfg.oracle.sigma1);
    }
    fill("beta1", cfg.hyper.beta1);
    fill("beta2", cfg.hyper.beta2);
    fill("eta", cfg.hyper.eta);
    return make_schedule(cfg.schedule_kind, in);
}

std::vector<TrajectoryRecord> run_experiment(const ExperimentConfig& cfg, const TrajectoryOptions& base) {
    if (cfg.T.empty()) throw ConfigError("T", "at least one horizon is required");
    const Objective obj = build_objective(cfg);
    const Vector w1 = start_point(cfg, obj);
    std::vector<Schedule> schedules;
    for (std::int64_t T : cfg.T) schedules.push_back(build_schedule(cfg, obj, w1, T));
    const std::string fp = fingerprint(cfg);
    OracleConfig oracle = cfg.oracle;
    oracle.seed = cfg.seed;

    const std::size_t R = static_cast<std::size_t>(cfg.replicas);
    std::vector<TrajectoryRecord> out(cfg.T.size() * R);
    parallel_for(out.size(), cfg.workers, [&](std::size_t i) {
        const std::size_t ti = i / R;
        TrajectoryOptions opt = base;
        opt.record_every = cfg.record_every;
        opt.guard = cfg.guard;
        opt.stream = i % R;
        TrajectoryRecord rec;
        try {
            rec = run_trajectory(cfg.optimizer, obj, oracle, schedules[ti], cfg.hyper, w1, cfg.T[ti], opt);
        } catch (const NumericError& e) {
            rec.horizon = cfg.T[ti];
            rec.replica = opt.stream;
            rec.error = e.what();
        }
        rec.fingerprint = fp;
        out[i] = std::move(rec);
    });
    return out;
}

Metric metric_from_string(const std::string& name) {
    if (name == "mean" || name == "mean_grad") return Metric::mean_grad;
    if (name == "min" || name == "min_grad") return Metric::min_grad;
    throw ConfigError("metric", "expected mean or min");
}

std::vector<std::pair<double, double>> metric_points(const std::vector<TrajectoryRecord>& records, Metric metric) {
    std::vector<std::pair<double, double>> points;
    std::vector<int> counts;
    for (const TrajectoryRecord& r : records) {
        const double v = metric == Metric::mean_grad ? r.running_mean_grad : r.running_min_grad;
        const double T = static_cast<double>(r.horizon);
        auto it = std::find_if(points.begin(), points.end(), [&](const auto& p) { return p.first == T; });
        if (it == points.end()) {
            points.emplace_back(T, v);
            counts.push_back(1);
        } else {
            it->second += v;
            ++counts[static_cast<std::size_t>(it - points.begin())];
        }
    }
    for (std::size_t i = 0; i < points.size(); ++i) points[i].second /= counts[i];
    return points;
}

SweepResult sweep_rate(const ExperimentConfig& cfg, Metric metric) {
    if (cfg.T.size() < 4) throw ConfigError("T", "a rate sweep needs at least 4 horizons");
    SweepResult result;
    result.records = run_experiment(cfg);
    std::ostringstream summary;
    for (const TrajectoryRecord& r : result.records) {
        if (r.diverged() || r.error) {
            summary << "T=" << r.horizon << " replica=" << r.replica << ": " << r.status() << "\n";
        }
    }
    result.divergence_summary = summary.str();
    if (result.divergence_summary.empty()) {
        result.fit = fit_rate_exponent(metric_points(result.records, metric));
    }
    return result;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string trajectory_csv(const TrajectoryRecord& record) {
    std::string out = "t,grad_norm,gap,step_norm,nu\n";
    for (const TrajectoryRow& r : record.rows) {
        out += std::to_string(r.t);
        for (double v : {r.grad_norm, r.gap, r.step_norm, r.nu}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

std::filesystem::path persist(const Artifacts& artifacts, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    json files = json::array();
    json records = json::array();
    for (const TrajectoryRecord& r : artifacts.records) {
        const std::string name = "trajectory_T" + std::to_string(r.horizon) + "_r" + std::to_string(r.replica) + ".csv";
        write_file(dir / name, trajectory_csv(r));
        files.push_back(name);
        records.push_back({{"file", name},
                           {"T", r.horizon},
                           {"replica", r.replica},
                           {"status", r.status()},
                           {"steps", r.steps},
                           {"running_min_grad", format_double(r.running_min_grad)},
                           {"running_mean_grad", format_double(r.running_mean_grad)}});
    }
    for (const auto& [name, fit] : artifacts.fits) {
        write_file(dir / ("fit_" + name + ".json"), to_json(fit) + "\n");
        std::string dat = "# T metric\n";
        for (const auto& [T, metric] : fit.points) dat += format_double(T) + " " + format_double(metric) + "\n";
        write_file(dir / ("fit_" + name + ".dat"), dat);
        files.push_back("fit_" + name + ".json");
        files.push_back("fit_" + name + ".dat");
    }
    for (const auto& [name, text] : artifacts.documents) {
        write_file(dir / (name + ".json"), text + "\n");
        files.push_back(name + ".json");
    }
    const json manifest{{"tool_version", kToolVersion},
                        {"fingerprint", artifacts.fingerprint},
                        {"files", files},
                        {"records", records}};
    const auto path = dir / "manifest.json";
    write_file(path, manifest.dump(2) + "\n");
    return path;
}

}  // namespace adamlab
