#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "zz/cli.hpp"
#include "zz/errors.hpp"

using namespace zz;
using namespace zz::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome call(std::vector<std::string> args)
{
    args.insert(args.begin(), "zzscale");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::stringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("zz_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        files[e.path().filename().string()] = slurp(e.path());
    return files;
}

std::map<std::string, std::string> manifest(const fs::path& dir)
{
    std::map<std::string, std::string> kv;
    std::ifstream in(dir / "manifest.txt");
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

ConfigError config_error(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("no ConfigError for: " << text);
    return ConfigError("unreachable");
}

}  // namespace

TEST_CASE("n grid syntax")
{
    CHECK(parse_n_grid("1000") == std::vector<std::size_t>{1000});
    CHECK(parse_n_grid("100, 1000,10000") == std::vector<std::size_t>{100, 1000, 10000});
    CHECK(parse_n_grid("10^4") == std::vector<std::size_t>{10000});
    CHECK(parse_n_grid("2^10..2^18:2") == std::vector<std::size_t>{1024, 4096, 16384, 65536, 262144});
    CHECK(parse_n_grid("2^10..2^18").size() == 9);
    CHECK(parse_n_grid("2^3..2^3") == std::vector<std::size_t>{8});
    CHECK_THROWS(parse_n_grid("2^3..3^4"));
    CHECK_THROWS(parse_n_grid("2^5..2^3"));
    CHECK_THROWS(parse_n_grid("ten"));
    CHECK_THROWS(parse_n_grid(""));
}

TEST_CASE("defaults round-trip")
{
    const RunConfig c = parse_config("");
    CHECK(!c.seed);
    CHECK(emit_config(parse_config(emit_config(c))) == emit_config(c));
}

TEST_CASE("a full config round-trips through emit and parse")
{
    const std::string text = R"(
# comment
seed = 18446744073709551615
model.kind = logistic
truth.family = logistic
truth.x0 = 1, -0.5
truth.covariates = point:1; uniform:-1:1
scheme.kind = can,ss,cv,mixed
scheme.m = 0
scheme.reference = perturbed:0.25,-1
scheme.mixed_radius = 2.5
experiment.n = 2^10..2^14:2
experiment.replicates = 4
experiment.t_max = 0.1
experiment.start = 0.3,0.7
experiment.level = -1.5
experiment.acf_lags = 0.1,0.2
drift.grid = -1:1:0.125
drift.xstar = 0.5,0.5
drift.method = montecarlo
data.file = some/data.csv
ou.start = zero
output.dir = out/run
)";
    const RunConfig c = parse_config(text);
    CHECK(*c.seed == 18446744073709551615ull);
    CHECK(c.experiment.seed == 18446744073709551615ull);
    CHECK(c.experiment.model == ModelKind::Logistic);
    CHECK(c.experiment.truth.x0[1] == -0.5);
    REQUIRE(c.experiment.truth.covariates.size() == 2);
    CHECK(c.experiment.truth.covariates[1].kind == Covariate::Kind::Uniform);
    CHECK(c.experiment.schemes.size() == 4);
    CHECK(c.experiment.m == 0);
    CHECK(c.experiment.reference.kind == ReferenceStrategy::Kind::PerturbedMle);
    CHECK(c.experiment.n_grid == std::vector<std::size_t>{1024, 4096, 16384});
    CHECK(*c.experiment.level == -1.5);
    CHECK(c.experiment.grid_step == 0.125);
    CHECK(c.experiment.drift_method == DriftMethod::MonteCarlo);
    CHECK(c.data_file == "some/data.csv");
    CHECK(c.ou_start == OUStart::Zero);
    CHECK(c.experiment.output_dir == "out/run");

    const std::string emitted = emit_config(c);
    const RunConfig back = parse_config(emitted);
    CHECK(emit_config(back) == emitted);
    CHECK(back.experiment.truth.x0 == c.experiment.truth.x0);
    CHECK(back.experiment.reference.value == c.experiment.reference.value);
    CHECK(back.experiment.acf_lags == c.experiment.acf_lags);
    CHECK(back.experiment.t_max == c.experiment.t_max);
}

TEST_CASE("every key appears in the emitted config")
{
    RunConfig c = parse_config("seed = 1");
    const std::string emitted = emit_config(c);
    for (const auto& k : config_keys())
        CHECK_MESSAGE(emitted.find(k.name + " = ") != std::string::npos, k.name);
}

TEST_CASE("config errors carry key and line")
{
    ConfigError e = config_error("model.kind = gaussian\nmodel.colour = red\n");
    CHECK(e.key == "model.colour");
    CHECK(e.line == 2);

    e = config_error("\n\nscheme.m = many\n");
    CHECK(e.key == "scheme.m");
    CHECK(e.line == 3);

    e = config_error("experiment.n\n");
    CHECK(e.line == 1);

    e = config_error("experiment.n = 100,50\n");
    CHECK(e.key == "experiment.n");

    e = config_error("experiment.t_max = inf\n");
    CHECK(e.key == "experiment.t_max");

    e = config_error("truth.family = logistic\ntruth.x0 = 1,2\n");
    CHECK(e.key == "truth.covariates");
}

TEST_CASE("later assignments win and the truth follows the model")
{
    RunConfig c = build_config({{"scheme.m", "3", 1}, {"scheme.m", "5", 0}});
    CHECK(c.experiment.m == 5);

    c = parse_config("model.kind = cauchy");
    CHECK(c.experiment.truth.family == Family::Cauchy);

    c = parse_config("model.kind = gaussian\ntruth.family = laplace");
    CHECK(c.experiment.truth.family == Family::Laplace);

    c = parse_config("model.kind = logistic");
    CHECK(c.experiment.truth.family == Family::Logistic);
    CHECK(c.experiment.dim() == 2);
}

TEST_CASE("help lists every config key")
{
    const Outcome top = call({"--help"});
    CHECK(top.code == kOk);
    for (const auto& k : config_keys())
        CHECK_MESSAGE(top.out.find(k.name) != std::string::npos, k.name);
    for (const char* sub : {"generate-data", "sample", "fluid", "ou", "drift-table", "scaling", "transient",
                            "stationary", "confinement", "limiting-rate", "mixed"})
        CHECK(top.out.find(sub) != std::string::npos);

    const Outcome sub = call({"sample", "--help"});
    CHECK(sub.code == kOk);
    for (const auto& k : config_keys())
        CHECK_MESSAGE(sub.out.find(k.name) != std::string::npos, k.name);
    CHECK(sub.out.find("--seed") != std::string::npos);
}

TEST_CASE("sample is deterministic given the seed")
{
    const fs::path dir = scratch("sample");
    const std::vector<std::string> args{"sample", "--model", "gaussian", "--scheme", "ss", "--m", "1", "--n", "1000",
                                        "--t-max", "100", "--seed", "7", "-o", dir.string()};
    const Outcome first = call(args);
    REQUIRE(first.code == kOk);
    const auto files = snapshot(dir);
    CHECK(files.count("skeleton.csv") == 1);
    CHECK(files.count("ledger.csv") == 1);
    CHECK(files.count("config.txt") == 1);
    const Outcome second = call(args);
    REQUIRE(second.code == kOk);
    CHECK(snapshot(dir) == files);

    const auto m = manifest(dir);
    CHECK(m.at("seed") == "7");
    CHECK(m.at("seed_source") == "flag");
    CHECK(m.at("config_hash").size() == 16);
    CHECK(m.at("checks_failed") == "0");
    CHECK(m.at("config.scheme.kind") == "ss");
    CHECK(slurp(dir / "skeleton.csv").rfind("t,x1,v1\n", 0) == 0);

    // The config file written next to the outputs reproduces the run.
    const fs::path again = scratch("sample_again");
    const fs::path cfg = scratch("sample_cfg.txt");
    fs::copy_file(dir / "config.txt", cfg);
    REQUIRE(call({"sample", "-c", cfg.string(), "-o", again.string()}).code == kOk);
    CHECK(slurp(again / "skeleton.csv") == files.at("skeleton.csv"));
    CHECK(manifest(again).at("config_hash") == m.at("config_hash"));
    CHECK(manifest(again).at("seed_source") == "config");
}

TEST_CASE("omitting the seed draws one and records it")
{
    const fs::path dir = scratch("fresh");
    REQUIRE(call({"sample", "--n", "50", "--t-max", "1", "-o", dir.string()}).code == kOk);
    const auto m = manifest(dir);
    CHECK(m.at("seed_source") == "drawn");
    const std::string seed = m.at("seed");
    CHECK(!seed.empty());

    const fs::path replay = scratch("fresh_replay");
    REQUIRE(call({"sample", "--n", "50", "--t-max", "1", "--seed", seed, "-o", replay.string()}).code == kOk);
    CHECK(slurp(replay / "skeleton.csv") == slurp(dir / "skeleton.csv"));
}

TEST_CASE("generated data feeds sample")
{
    const fs::path dir = scratch("data");
    REQUIRE(call({"generate-data", "--model", "cauchy", "--n", "200", "--seed", "3", "-o", dir.string()}).code == kOk);
    CHECK(slurp(dir / "data.csv").rfind("y\n", 0) == 0);
    CHECK(fs::exists(dir / "data.meta"));

    const fs::path a = scratch("data_a");
    const fs::path b = scratch("data_b");
    REQUIRE(call({"sample", "--model", "cauchy", "--scheme", "cv", "--n", "200", "--t-max", "5", "--seed", "3", "-o",
                  a.string()})
                .code == kOk);
    REQUIRE(call({"sample", "--model", "cauchy", "--scheme", "cv", "--n", "200", "--t-max", "5", "--seed", "3",
                  "--data", (dir / "data.csv").string(), "-o", b.string()})
                .code == kOk);
    CHECK(slurp(a / "skeleton.csv") == slurp(b / "skeleton.csv"));
}

TEST_CASE("limit commands write their CSVs")
{
    const fs::path dir = scratch("limits");
    Outcome o = call({"fluid", "--model", "gaussian", "--scheme", "canonical", "--t-max", "4", "--seed", "1", "-o",
                      dir.string()});
    REQUIRE(o.code == kOk);
    CHECK(manifest(dir).at("fluid_status") == "hit_h");
    CHECK(std::stod(manifest(dir).at("fluid_t_stop")) == doctest::Approx(3.0).epsilon(1e-6));

    o = call({"ou", "--scheme", "ss", "--t-max", "10", "--dt", "0.1", "--seed", "1", "-o", dir.string()});
    REQUIRE(o.code == kOk);
    CHECK(fs::exists(dir / "ou.csv"));
    CHECK(std::stod(manifest(dir).at("ou_stationary_covariance")) == doctest::Approx(1.0));

    o = call({"drift-table", "--model", "cauchy", "--grid", "-5:5:0.5", "--xstar", "0", "--seed", "1", "-o",
              dir.string()});
    REQUIRE(o.code == kOk);
    CHECK(slurp(dir / "drift_summary.csv").find("cauchy,1,0,1.60") != std::string::npos);
}

TEST_CASE("experiment commands write their CSVs")
{
    const fs::path dir = scratch("experiments");
    const std::string out = dir.string();
    CHECK(call({"transient", "--n", "100,200", "--t-max", "4", "--replicates", "2", "--seed", "1", "-o", out}).code ==
          kOk);
    CHECK(call({"stationary", "--n", "20", "--scheme", "cv", "--t-max", "400", "--seed", "1", "-o", out}).code == kOk);
    CHECK(call({"scaling", "--n", "64,256", "--schemes", "can,ss", "--set", "experiment.horizon_scale=150", "--set",
                "experiment.min_switches=2000", "--seed", "1", "-o", out})
              .code == kOk);
    CHECK(call({"confinement", "--n", "100,400", "--replicates", "5", "--t-max", "1", "--seed", "1", "-o", out})
              .code == kOk);
    CHECK(call({"limiting-rate", "--scheme", "cv", "--n", "200", "--t-max", "2000", "--set",
                "experiment.min_events=50", "--seed", "1", "-o", out})
              .code == kOk);
    CHECK(call({"mixed", "--model", "cauchy", "--schemes", "ss,cv,mixed", "--n", "200", "--replicates", "2",
                "--start", "8", "--t-max", "30", "--seed", "1", "-o", out})
              .code == kOk);
    for (const char* f : {"transient_summary.csv", "transient_paths.csv", "transient_ode.csv", "stationary_summary.csv",
                          "stationary_acf.csv", "stationary_samples.csv", "scaling.csv", "scaling_slopes.csv",
                          "confinement.csv", "limiting_rate.csv", "mixed_hitting.csv", "mixed_summary.csv",
                          "mixed_paths.csv", "manifest.txt", "config.txt"})
        CHECK_MESSAGE(fs::exists(dir / f), std::string(f));
}

TEST_CASE("exit codes")
{
    CHECK(call({}).code == kConfigFailure);
    CHECK(call({"sample", "--no-such-flag"}).code == kConfigFailure);
    CHECK(call({"no-such-command"}).code == kConfigFailure);

    Outcome o = call({"sample", "--set", "model.colour=red", "-o", scratch("codes").string()});
    CHECK(o.code == kConfigFailure);
    CHECK(o.err.find("model.colour") != std::string::npos);

    o = call({"sample", "--set", "nonsense", "-o", scratch("codes").string()});
    CHECK(o.code == kConfigFailure);

    o = call({"sample", "-c", "/nonexistent/zz.cfg"});
    CHECK(o.code == kConfigFailure);

    o = call({"sample", "--schemes", "ss,cv", "-o", scratch("codes").string()});
    CHECK(o.code == kConfigFailure);
    CHECK(o.err.find("scheme.kind") != std::string::npos);

    // Too short for any intensity bin to fill: a runtime failure.
    o = call({"limiting-rate", "--n", "1000", "--t-max", "1", "--seed", "1", "-o", scratch("codes").string()});
    CHECK(o.code == kRuntimeFailure);
    CHECK(o.err.find("experiment.t_max") != std::string::npos);
}
