#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "adamlab/cli.hpp"
#include "adamlab/errors.hpp"
#include "adamlab/harness.hpp"

using namespace adamlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("adamlab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "adamlab");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    return rc;
}

const char* kAdamYaml = R"(
id: adam-f1
objective: {id: f1, params: {l0: 1, l1: 1}}
optimizer: adam
hyper: {beta1: 0.5, beta2: 0.9}
schedule: {kind: thm1_deterministic}
start: {delta1: 10}
T: [1024, 4096]
replicas: 3
seed: 4
)";

const char* kStochYaml = R"(
objective: {id: f1}
oracle: {kind: gaussian_affine, sigma0: 1, sigma1: 1}
optimizer: adam
hyper: {beta1: 0.9, beta2: 0.99, eta: 0.01}
start: {delta1: 1}
T: [300]
replicas: 2
seed: 17
)";

}  // namespace

TEST_CASE("config parsing") {
    const ExperimentConfig cfg = parse_config(kAdamYaml);
    CHECK(cfg.id == "adam-f1");
    CHECK(cfg.T.size() == 2);
    CHECK(cfg.schedule_kind == ScheduleKind::thm1_deterministic);
    CHECK(cfg.replicas == 3);

    CHECK_THROWS_AS(parse_config("objective: {id: f1}\nbogus: 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("T: [10]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("objective: {id: f1}\nT: [0]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("objective: {id: f1}\noptimizer: lion\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("objective: {id: f1}\noracle: {kind: gaussian_affine, sigma1: 0.5}\n"), ConfigError);
    CHECK_THROWS_AS(parse_config(": : :\n- ["), ConfigError);
    try {
        parse_config("objective: {id: f1}\nhyper: {beta2: 1.5}\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "hyper.beta2");
    }
    const ExperimentConfig heavy = parse_config("objective: {id: f1}\noracle: {kind: heavy_sqrt_exp, sigma0: 1}\n");
    CHECK(heavy.oracle.c == doctest::Approx(0.302138).epsilon(1e-6));
}

TEST_CASE("fingerprint") {
    const ExperimentConfig a = parse_config(kAdamYaml);
    ExperimentConfig b = parse_config(kAdamYaml);
    CHECK(fingerprint(a) == fingerprint(b));
    CHECK(fingerprint(a).size() == 64);
    b.workers = 7;
    CHECK(fingerprint(a) == fingerprint(b));
    b.seed = 5;
    CHECK(fingerprint(a) != fingerprint(b));
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("run_experiment: deterministic replicas are identical") {
    const ExperimentConfig cfg = parse_config(kAdamYaml);
    const auto recs = run_experiment(cfg);
    REQUIRE(recs.size() == 6);
    CHECK(recs[0].horizon == 1024);
    CHECK(recs[3].horizon == 4096);
    for (int i = 1; i < 3; ++i) {
        CHECK(trajectory_csv(recs[0]) == trajectory_csv(recs[static_cast<std::size_t>(i)]));
        CHECK(recs[0].running_mean_grad == recs[static_cast<std::size_t>(i)].running_mean_grad);
    }
    CHECK(recs[0].fingerprint == fingerprint(cfg));
}

TEST_CASE("run_experiment: stochastic replicas differ and rerun is exact") {
    const ExperimentConfig cfg = parse_config(kStochYaml);
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    REQUIRE(a.size() == 2);
    CHECK(trajectory_csv(a[0]) != trajectory_csv(a[1]));
    CHECK(trajectory_csv(a[0]) == trajectory_csv(b[0]));
    CHECK(trajectory_csv(a[1]) == trajectory_csv(b[1]));
}

TEST_CASE("persist") {
    SUBCASE("empty") {
        const fs::path d = scratch("empty");
        const fs::path m = persist(Artifacts{"abc", {}, {}, {}}, d);
        const auto j = nlohmann::json::parse(slurp(m));
        CHECK(j["files"].empty());
        CHECK(j["fingerprint"] == "abc");
        CHECK(j["tool_version"] == kToolVersion);
    }
    SUBCASE("record_every 100 over 1000 steps") {
        ExperimentConfig cfg = parse_config(kAdamYaml);
        cfg.T = {1000};
        cfg.replicas = 1;
        cfg.record_every = 100;
        const fs::path d = scratch("rows");
        persist(Artifacts{fingerprint(cfg), run_experiment(cfg), {}, {}}, d);
        const std::string csv = slurp(d / "trajectory_T1000_r0.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
        CHECK(csv.rfind("t,grad_norm,gap,step_norm,nu\n", 0) == 0);
    }
    SUBCASE("worker count does not change outputs") {
        ExperimentConfig cfg = parse_config(kStochYaml);
        cfg.T = {100, 200};
        cfg.replicas = 3;
        cfg.workers = 1;
        const fs::path d1 = scratch("w1");
        persist(Artifacts{fingerprint(cfg), run_experiment(cfg), {}, {}}, d1);
        cfg.workers = 4;
        const fs::path d4 = scratch("w4");
        persist(Artifacts{fingerprint(cfg), run_experiment(cfg), {}, {}}, d4);
        for (const auto& e : fs::directory_iterator(d1)) {
            CHECK(slurp(e.path()) == slurp(d4 / e.path().filename()));
        }
    }
    SUBCASE("divergence is carried into the manifest") {
        ExperimentConfig cfg = parse_config(
            "objective: {id: f1}\noptimizer: gd\nhyper: {eta: 1}\nstart: {delta1: 10}\nT: [200]\n");
        const fs::path d = scratch("div");
        const auto m = nlohmann::json::parse(slurp(persist(Artifacts{fingerprint(cfg), run_experiment(cfg), {}, {}}, d)));
        CHECK(m["records"][0]["status"].get<std::string>().rfind("diverged at ", 0) == 0);
    }
    SUBCASE("io error names the path") {
        const fs::path d = scratch("io");
        std::ofstream(d / "file") << "x";
        CHECK_THROWS_AS(persist(Artifacts{}, d / "file" / "sub"), IoError);
    }
}

TEST_CASE("sweep_rate") {
    ExperimentConfig cfg = parse_config(kAdamYaml);
    CHECK_THROWS_AS(sweep_rate(cfg, Metric::mean_grad), ConfigError);
    cfg.T = {256, 512, 1024, 2048};
    cfg.replicas = 1;
    const SweepResult r = sweep_rate(cfg, Metric::mean_grad);
    REQUIRE(r.fit.has_value());
    CHECK(r.fit->points.size() == 4);
    CHECK(r.fit->slope < 0.0);

    ExperimentConfig bad =
        parse_config("objective: {id: f1}\noptimizer: gd\nhyper: {eta: 1}\nstart: {delta1: 10}\nT: [10, 20, 30, 200]\n");
    const SweepResult d = sweep_rate(bad, Metric::min_grad);
    CHECK_FALSE(d.fit.has_value());
    CHECK(d.divergence_summary.find("diverged at") != std::string::npos);
}

TEST_CASE("metric_points averages replicas") {
    std::vector<TrajectoryRecord> recs(4);
    const double vals[] = {1.0, 3.0, 10.0, 20.0};
    for (int i = 0; i < 4; ++i) {
        recs[static_cast<std::size_t>(i)].horizon = i < 2 ? 100 : 200;
        recs[static_cast<std::size_t>(i)].running_min_grad = vals[i];
    }
    const auto p = metric_points(recs, Metric::min_grad);
    REQUIRE(p.size() == 2);
    CHECK(p[0].second == 2.0);
    CHECK(p[1].second == 15.0);
}

TEST_CASE("format_double round trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("cli exit codes") {
    std::string out;
    CHECK(cli({"check-lemmas", "--lemma", "3", "--instances", "1000", "--seed", "7"}, &out) == 0);
    const auto j = nlohmann::json::parse(out);
    CHECK(j[0]["violations"] == 0);

    CHECK(cli({"certify", "f2", "epsilon=0.5"}) == 0);
    CHECK(cli({"certify", "f2", "epsilon=0.5", "declared_l0=0.25"}) == 1);
    CHECK(cli({"certify", "f2", "epsilon=oops"}) == 2);
    CHECK(cli({"run", "/nonexistent/missing.yaml"}) == 2);
    CHECK(cli({"frobnicate"}) == 2);
    CHECK(cli({"check-lemmas", "--bogus"}) == 2);
    CHECK(cli({"check-lemmas", "--lemma", "9"}) == 2);

    const fs::path d = scratch("cli");
    {
        std::ofstream f(d / "cfg.yaml");
        f << kAdamYaml << "output: " << (d / "out").string() << "\n";
    }
    CHECK(cli({"run", (d / "cfg.yaml").string()}, &out) == 0);
    CHECK(fs::exists(d / "out" / "manifest.json"));

    {
        std::ofstream f(d / "div.yaml");
        f << "objective: {id: f1}\noracle: {kind: heavy_sqrt_exp, sigma0: 1}\noptimizer: sgdm\nstart: {delta1: 10}\n"
             "diverge: {eta: 0.1, beta: 0, windows: [100, 1000, 10000]}\n";
    }
    CHECK(cli({"diverge-cert", (d / "div.yaml").string()}, &out) == 0);
    CHECK(nlohmann::json::parse(out)["verdict"] == true);

    {
        std::ofstream f(d / "tune.yaml");
        f << "objective: {id: f2, params: {epsilon: 0.5}}\noptimizer: gd\nstart: {delta1: 10}\nT: [5000]\n"
             "tune: {epsilon: 0.5, eta_grid: [0.1, 1], beta_grid: [0]}\n";
    }
    CHECK(cli({"tune", (d / "tune.yaml").string()}, &out) == 0);
    CHECK(nlohmann::json::parse(out)["eta"] == 1.0);
}
