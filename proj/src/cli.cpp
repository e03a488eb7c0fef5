#include "adamlab/cli.hpp"

#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adamlab/analysis.hpp"
#include "adamlab/errors.hpp"
#include "adamlab/harness.hpp"
#include "adamlab/noise.hpp"

namespace adamlab {

using nlohmann::json;

namespace {

json certificate_json(const std::string& id, const SmoothnessCert& cert) {
    json j{{"objective", id},
           {"pairs_tested", cert.pairs_tested},
           {"max_violation", cert.max_violation},
           {"required_scale", cert.required_scale},
           {"passed", cert.passed()}};
    if (cert.violating_pair) {
        const auto& [a, b] = *cert.violating_pair;
        j["violating_pair"] = {std::vector<double>(a.data(), a.data() + a.size()),
                               std::vector<double>(b.data(), b.data() + b.size())};
    }
    return j;
}

json divergence_json(const DivergenceCertificate& cert) {
    json partial = json::array();
    for (double v : cert.partial_integrals) partial.push_back(std::isfinite(v) ? json(v) : json("inf"));
    return json{{"windows", cert.window_bounds},
                {"partial_integrals", partial},
                {"log_partial_integrals", cert.log_partial_integrals},
                {"threshold", cert.threshold},
                {"verdict", cert.verdict}};
}

// Trajectory used for the lemma 4/5 check: adam on f1 with a constant step
// small enough for the lemma-5 displacement condition.
Lemma45Report lemma45_suite(std::int64_t steps) {
    const Objective f1 = build_f1(1.0, 1.0);
    HyperParams<double> h;
    h.beta1 = 0.5;
    h.beta2 = 0.9;
    h.nu0 = 1.0;
    TrajectoryOptions opt;
    opt.keep_trace = true;
    opt.store_grad_norms = false;
    const Schedule sched = make_schedule(ScheduleKind::constant, {{"eta", 0.005}, {"beta2", h.beta2}});
    const TrajectoryRecord rec = run_trajectory(OptimizerKind::adam, f1, OracleConfig::deterministic(), sched, h,
                                                init_point_for_gap(f1, 10.0), steps, opt);
    return check_lemma45(rec, f1, h);
}

int cmd_certify(const std::string& id, const std::vector<std::string>& kv, std::int64_t pairs, std::uint64_t seed,
                std::ostream& out) {
    ParamMap params;
    for (const std::string& item : kv) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("params", "expected key=value, got '" + item + "'");
        try {
            params[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw ConfigError(item.substr(0, eq), "not a number");
        }
    }
    Objective obj = [&] {
        try {
            return make_objective(id, params);
        } catch (const InvalidParameter& e) {
            throw ConfigError("params", e.what());
        }
    }();
    CertifyOptions opt;
    opt.n_pairs = pairs;
    opt.seed = seed;
    const SmoothnessCert cert = certify_smoothness(obj, opt);
    out << certificate_json(obj.id(), cert).dump(2) << "\n";
    return cert.passed() ? 0 : 1;
}

int cmd_check_lemmas(int lemma, std::optional<std::int64_t> instances, std::uint64_t seed, std::ostream& out) {
    if (lemma < 0 || lemma > 5) throw ConfigError("--lemma", "expected 1..5");
    std::vector<InequalityReport> reports;
    const auto want = [&](int n) { return lemma == 0 || lemma == n; };
    if (want(1)) reports.push_back(check_lemma1_random(instances.value_or(10000), seed));
    if (want(2)) {
        InequalityReport a = check_lemma2(build_f1(1.0, 1.0), instances.value_or(10000), seed);
        a.name = "lemma2:f1";
        InequalityReport b = check_lemma2(build_quadratic(1.0).with_constants(1.0, 1.0), instances.value_or(10000), seed);
        b.name = "lemma2:quadratic";
        reports.push_back(a);
        reports.push_back(b);
    }
    if (want(3)) reports.push_back(check_lemma3(instances.value_or(1000), 100, seed));
    if (want(4) || want(5)) {
        const Lemma45Report r = lemma45_suite(instances.value_or(10000));
        if (want(4)) reports.push_back(r.lemma4);
        if (want(5)) reports.push_back(r.lemma5);
    }
    json arr = json::array();
    bool ok = true;
    for (const auto& r : reports) {
        arr.push_back(json::parse(to_json(r)));
        ok = ok && r.passed();
    }
    out << arr.dump(2) << "\n";
    return ok ? 0 : 1;
}

int cmd_run(const std::string& path, std::ostream& out) {
    const ExperimentConfig cfg = load_config(path);
    const auto records = run_experiment(cfg);
    json j{{"fingerprint", fingerprint(cfg)}};
    json recs = json::array();
    for (const auto& r : records) {
        recs.push_back({{"T", r.horizon},
                        {"replica", r.replica},
                        {"status", r.status()},
                        {"running_min_grad", r.running_min_grad},
                        {"running_mean_grad", r.running_mean_grad}});
    }
    j["records"] = recs;
    if (!cfg.output_dir.empty()) {
        j["manifest"] = persist(Artifacts{fingerprint(cfg), records, {}, {}}, cfg.output_dir).string();
    }
    out << j.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const std::string& path, const std::string& metric_name, std::ostream& out, std::ostream& err) {
    const ExperimentConfig cfg = load_config(path);
    const Metric metric = metric_from_string(metric_name);
    const SweepResult sweep = sweep_rate(cfg, metric);
    if (!cfg.output_dir.empty()) {
        Artifacts a{fingerprint(cfg), sweep.records, {}, {}};
        if (sweep.fit) a.fits.emplace_back(cfg.id, *sweep.fit);
        persist(a, cfg.output_dir);
    }
    if (!sweep.fit) {
        err << "fit aborted, diverged records:\n" << sweep.divergence_summary;
        return 1;
    }
    out << to_json(*sweep.fit) << "\n";
    return 0;
}

int cmd_tune(const std::string& path, std::ostream& out) {
    const ExperimentConfig cfg = load_config(path);
    if (cfg.T.empty()) throw ConfigError("T", "tune needs a step budget");
    const Objective obj = build_objective(cfg);
    const Vector w1 = start_point(cfg, obj);
    const std::vector<double> etas = cfg.eta_grid.empty() ? geometric_grid(1e-4, 1e2, 25) : cfg.eta_grid;
    const std::vector<double> betas =
        cfg.beta_grid.empty() ? std::vector<double>{0.0, 0.5, 0.9, 0.99, 1.0 - 1e-4} : cfg.beta_grid;
    TuneOptions opt;
    opt.workers = cfg.workers;
    opt.momentum_init = cfg.hyper.momentum_init;
    opt.beta2 = cfg.hyper.beta2;
    OracleConfig oracle = cfg.oracle;
    oracle.seed = cfg.seed;
    const TuneResult r = tune_best(cfg.optimizer, obj, oracle, w1, *std::max_element(cfg.T.begin(), cfg.T.end()),
                                   cfg.epsilon, etas, betas, opt);
    json cells = json::array();
    for (const auto& c : r.cells) {
        cells.push_back({{"eta", c.eta},
                         {"beta", c.beta},
                         {"steps", c.steps ? json(*c.steps) : json("never")},
                         {"status", c.status}});
    }
    json j{{"eta", r.eta}, {"beta", r.beta}, {"steps", r.steps ? json(*r.steps) : json("never")}, {"cells", cells}};
    if (!cfg.output_dir.empty()) {
        persist(Artifacts{fingerprint(cfg), {}, {}, {{"tune", j.dump(2)}}}, cfg.output_dir);
    }
    out << j.dump(2) << "\n";
    return 0;
}

int cmd_diverge(const std::string& path, std::ostream& out) {
    const ExperimentConfig cfg = load_config(path);
    const Objective obj = build_objective(cfg);
    if (cfg.oracle.kind != OracleKind::heavy_sqrt_exp) {
        throw ConfigError("oracle.kind", "diverge-cert needs the heavy_sqrt_exp oracle");
    }
    DivergenceInputs in;
    in.w_t = cfg.diverge.w_t ? *cfg.diverge.w_t : start_point(cfg, obj)(0);
    in.eta = cfg.diverge.eta;
    in.beta = cfg.diverge.beta;
    in.m_prev = cfg.diverge.m_prev;
    in.c = cfg.oracle.c;
    in.threshold = cfg.diverge.threshold;
    in.rel_tol = cfg.diverge.rel_tol;
    DivergenceCertificate cert;
    try {
        cert = divergence_certificate(obj, in, cfg.diverge.windows.empty() ? auto_windows(obj, in) : cfg.diverge.windows);
    } catch (const InvalidParameter& e) {
        throw ConfigError("diverge", e.what());
    }
    const json j = divergence_json(cert);
    if (!cfg.output_dir.empty()) {
        persist(Artifacts{fingerprint(cfg), {}, {}, {{"divergence_certificate", j.dump(2)}}}, cfg.output_dir);
    }
    out << j.dump(2) << "\n";
    return cert.verdict ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Numerical experiments for norm-Adam, GDM and AdaGrad under (L0,L1)-smoothness"};
    app.require_subcommand(1);

    std::string config;
    std::string objective;
    std::vector<std::string> params;
    std::int64_t pairs = 100000;
    std::uint64_t seed = 0;
    int lemma = 0;
    std::optional<std::int64_t> instances;
    std::string metric = "mean";

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config, "config file")->required();
    auto* certify = app.add_subcommand("certify", "smoothness certificate for an objective");
    certify->add_option("objective", objective, "objective id")->required();
    certify->add_option("params", params, "key=value parameters");
    certify->add_option("--pairs", pairs, "sampled pairs");
    certify->add_option("--seed", seed, "sampling seed");
    auto* lemmas = app.add_subcommand("check-lemmas", "run the auxiliary inequality suites");
    lemmas->add_option("--lemma", lemma, "lemma number (1-5), all when omitted");
    lemmas->add_option("--instances", instances, "instances per suite");
    lemmas->add_option("--seed", seed, "sampling seed");
    auto* sweep = app.add_subcommand("sweep", "fit a rate exponent over T");
    sweep->add_option("config", config, "config file")->required();
    sweep->add_option("--metric", metric, "mean or min")->check(CLI::IsMember({"mean", "min"}));
    auto* tune = app.add_subcommand("tune", "grid-tune (eta, beta) for steps to epsilon");
    tune->add_option("config", config, "config file")->required();
    auto* diverge = app.add_subcommand("diverge-cert", "SGDM divergence certificate on f1");
    diverge->add_option("config", config, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(config, out);
        if (certify->parsed()) return cmd_certify(objective, params, pairs, seed, out);
        if (lemmas->parsed()) return cmd_check_lemmas(lemma, instances, seed, out);
        if (sweep->parsed()) return cmd_sweep(config, metric, out, err);
        if (tune->parsed()) return cmd_tune(config, out);
        if (diverge->parsed()) return cmd_diverge(config, out);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace adamlab
