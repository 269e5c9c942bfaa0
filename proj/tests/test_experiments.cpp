#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "zz/errors.hpp"
#include "zz/experiments.hpp"
#include "zz/rng.hpp"

using namespace zz;
namespace fs = std::filesystem;

namespace {

Vector x1(double x)
{
    return Vector::Constant(1, x);
}

TruthSpec location_truth(Family family, double location = 0.0)
{
    TruthSpec t;
    t.family = family;
    t.location = location;
    return t;
}

std::vector<double> ar1(double rho, std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> out(n);
    double x = rng.normal() / std::sqrt(1.0 - rho * rho);
    for (auto& v : out) {
        v = x;
        x = rho * x + rng.normal();
    }
    return out;
}

std::string first_line(const fs::path& p)
{
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("zz_test_experiments_" + name);
    fs::remove_all(p);
    return p;
}

/// Two-event path: up from 0 until t = 1, then down until t_end = 2.5.
Skeleton tent()
{
    Skeleton s(1);
    s.push_event(0.0, x1(0.0), x1(1.0));
    s.push_event(1.0, x1(1.0), x1(-1.0));
    s.set_end(2.5);
    return s;
}

}  // namespace

TEST_CASE("iact of white noise is dt")
{
    Rng rng(1);
    std::vector<double> x(100'000);
    for (auto& v : x)
        v = rng.normal();
    const IactResult r = iact_estimate(x, 0.5);
    CHECK(r.iact == doctest::Approx(0.5).epsilon(0.10));
    CHECK(r.consistent);
}

TEST_CASE("iact of AR(1) matches (1 + rho) / (1 - rho)")
{
    const double rho = 0.9;
    const IactResult r = iact_estimate(ar1(rho, 400'000, 2), 1.0);
    CHECK(r.iact == doctest::Approx((1.0 + rho) / (1.0 - rho)).epsilon(0.15));
    CHECK(r.batch_means == doctest::Approx(19.0).epsilon(0.20));
}

TEST_CASE("iact of an OU path is 2 / B")
{
    OUParams p;
    p.a = Matrix::Constant(1, 1, 2.0);
    p.info = Matrix::Constant(1, 1, 1.5);
    p.b = p.a * p.info / 2.0;
    const OUPath path = simulate_ou(p, OUStart::Stationary, 20'000.0, 0.05, 3);
    std::vector<double> x(static_cast<std::size_t>(path.xi.rows()));
    for (std::size_t k = 0; k < x.size(); ++k)
        x[k] = path.xi(static_cast<Eigen::Index>(k), 0);
    CHECK(iact_estimate(x, 0.05).iact == doctest::Approx(2.0 / 1.5).epsilon(0.15));
}

TEST_CASE("iact needs 1000 samples")
{
    CHECK_THROWS_AS(iact_estimate(std::vector<double>(999, 0.0), 1.0), TooFewSamples);
}

TEST_CASE("autocorrelation of AR(1)")
{
    const auto acf = autocorrelation(ar1(0.5, 200'000, 4), 3);
    REQUIRE(acf.size() == 4);
    CHECK(acf[0] == doctest::Approx(1.0));
    CHECK(acf[1] == doctest::Approx(0.5).epsilon(0.02));
    CHECK(acf[2] == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("ks statistic")
{
    const auto uniform = [](double y) { return std::clamp(y, 0.0, 1.0); };
    CHECK(ks_statistic({0.5}, uniform) == doctest::Approx(0.5));
    CHECK(ks_statistic({0.75, 0.25}, uniform) == doctest::Approx(0.25));
    CHECK(ks_statistic({0.1, 0.2, 0.3}, uniform) == doctest::Approx(0.7));

    Rng rng(5);
    std::vector<double> x(20'000);
    for (auto& v : x)
        v = rng.normal();
    const double d = ks_statistic(x, [](double y) { return 0.5 * std::erfc(-y / std::sqrt(2.0)); });
    CHECK(d < 1.63 / std::sqrt(20'000.0));
}

TEST_CASE("least squares line")
{
    const LineFit exact = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
    CHECK(exact.slope == doctest::Approx(2.0));
    CHECK(exact.intercept == doctest::Approx(1.0));
    CHECK(exact.slope_se == doctest::Approx(0.0));
    CHECK(exact.r2 == doctest::Approx(1.0));
    CHECK(exact.points == 4);

    const LineFit flat = fit_line({0.0, 1.0, 2.0}, {4.0, 4.0, 4.0});
    CHECK(flat.slope == doctest::Approx(0.0));
    CHECK(flat.r2 == doctest::Approx(1.0));

    // Hand computed: Sxx = 2, Sxy = 3, SSE = 1/6, SST = 42/9.
    const LineFit f = fit_line({0.0, 1.0, 2.0}, {0.0, 1.0, 3.0});
    CHECK(f.slope == doctest::Approx(1.5));
    CHECK(f.intercept == doctest::Approx(-1.0 / 6.0));
    CHECK(f.slope_se == doctest::Approx(std::sqrt(1.0 / 12.0)));
    CHECK(f.r2 == doctest::Approx(1.0 - 1.0 / 28.0));

    CHECK_THROWS(fit_line({1.0, 1.0}, {0.0, 1.0}));
}

TEST_CASE("mean, standard error and median")
{
    const MeanSe m = mean_se({1.0, 2.0, 3.0});
    CHECK(m.mean == doctest::Approx(2.0));
    CHECK(m.se == doctest::Approx(1.0 / std::sqrt(3.0)));
    CHECK(mean_se({4.0}).se == 0.0);
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    CHECK(median({kInf, 1.0, 2.0}) == 2.0);
    CHECK(std::isinf(median({kInf, kInf, 1.0})));
}

TEST_CASE("grid sink samples a piecewise linear path")
{
    const Skeleton s = tent();
    GridSink grid(0.5);
    grid.start(0.0, s.start_state());
    grid.event(1.0, {x1(1.0), x1(-1.0)}, 0);
    grid.finish(2.5, s.end_state());
    const auto x = grid.coordinate(0);
    const std::vector<double> expect{0.0, 0.5, 1.0, 0.5, 0.0, -0.5};
    REQUIRE(x.size() == expect.size());
    for (std::size_t k = 0; k < x.size(); ++k)
        CHECK(x[k] == doctest::Approx(expect[k]));
    CHECK(grid.coordinate(0, 4).size() == 2);
    CHECK(grid.coordinate(0, 10).empty());
    CHECK_THROWS(GridSink(0.0));
}

TEST_CASE("path functionals on a hand-built skeleton")
{
    const Skeleton s = tent();
    CHECK(skeleton_position(s, 0.25)[0] == doctest::Approx(0.25));
    CHECK(skeleton_position(s, 2.0)[0] == doctest::Approx(0.0));
    CHECK(first_entry_time(s, 0, 0.7, 2.0) == doctest::Approx(0.7));
    CHECK(first_entry_time(s, 0, -1.0, -0.2) == doctest::Approx(2.2));
    CHECK(std::isinf(first_entry_time(s, 0, 1.5, 2.0)));
    CHECK(sup_excursion(s, x1(0.0)) == doctest::Approx(1.0));
    CHECK(sup_excursion(s, x1(-1.0)) == doctest::Approx(2.0));

    // Fluid path x = t on [0, 2]; the skeleton turns at t = 1.
    FluidPath f;
    f.t = {0.0, 2.0};
    f.x = {x1(0.0), x1(2.0)};
    f.t_stop = 2.0;
    CHECK(sup_error(s, f, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sup_error(s, f, 1.5) == doctest::Approx(1.0));
    CHECK(sup_error(s, f, 2.0) == doctest::Approx(2.0));
}

TEST_CASE("parallel_for visits every index and rethrows")
{
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), 4, [&](std::size_t k) { hits[k].fetch_add(1); });
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));

    CHECK_THROWS_AS(parallel_for(50, 3,
                                 [](std::size_t k) {
                                     if (k == 17)
                                         throw std::runtime_error("task 17");
                                 }),
                    std::runtime_error);
}

TEST_CASE("thread cap from the environment")
{
    ::setenv("ZZSCALE_THREADS", "2", 1);
    CHECK(worker_count(8) == 2);
    CHECK(worker_count(1) == 1);
    ::setenv("ZZSCALE_THREADS", "junk", 1);
    CHECK(worker_count(8) == 8);
    ::unsetenv("ZZSCALE_THREADS");
    CHECK(worker_count(5) == 5);
    CHECK(worker_count(0) >= 1);
}

TEST_CASE("config validation names the key")
{
    auto key_of = [](const ExperimentConfig& c) {
        try {
            c.validate();
        } catch (const ConfigError& e) {
            return e.key;
        }
        return std::string("none");
    };
    ExperimentConfig c;
    CHECK(key_of(c) == "none");
    c.n_grid = {100, 100};
    CHECK(key_of(c) == "experiment.n");
    c.n_grid = {};
    CHECK(key_of(c) == "experiment.n");
    c = {};
    c.replicates = 0;
    CHECK(key_of(c) == "experiment.replicates");
    c = {};
    c.t_max = 0.0;
    CHECK(key_of(c) == "experiment.t_max");
    c = {};
    c.start = Vector::Zero(2);
    CHECK(key_of(c) == "experiment.start");
    c = {};
    c.model = ModelKind::Logistic;
    CHECK(key_of(c) == "truth.family");
    c = {};
    c.burn_in = 1.0;
    CHECK(key_of(c) == "experiment.burn_in");
}

TEST_CASE("transient: Laplace CV left of the reference moves at unit speed")
{
    ExperimentConfig c;
    c.model = ModelKind::Laplace;
    c.truth = location_truth(Family::Laplace);
    c.schemes = {SchemeKind::ControlVariate};
    c.reference = ReferenceStrategy::fixed(x1(-1.0));
    c.x_star = x1(-1.0);
    c.n_grid = {10'000};
    c.replicates = 3;
    c.seed = 41;
    c.start = x1(-4.0);
    c.t_max = 2.5;
    const TransientResult res = transient_experiment(c);
    CHECK(all_passed(res.checks));
    REQUIRE(res.traces.size() == 1);
    const Skeleton& path = res.traces.front().path;
    const double slope = (skeleton_position(path, 2.5)[0] - skeleton_position(path, 0.5)[0]) / 2.0;
    CHECK(slope == doctest::Approx(1.0).epsilon(0.02));
    // The fluid limit has the same slope on this branch.
    const FluidPath& ode = res.traces.front().ode;
    CHECK(fluid_position(ode, 2.5)[0] - fluid_position(ode, 0.5)[0] == doctest::Approx(2.0).epsilon(1e-6));
    for (const auto& r : res.rows)
        CHECK(r.sup_error < 0.05);
}

TEST_CASE("transient: Cauchy CV reaches x = 2 later than SS")
{
    ExperimentConfig c;
    c.model = ModelKind::Cauchy;
    c.truth = location_truth(Family::Cauchy);
    c.schemes = {SchemeKind::Subsampling, SchemeKind::ControlVariate};
    c.n_grid = {2000};
    c.replicates = 5;
    c.seed = 43;
    c.start = x1(8.0);
    c.level = 2.0;
    c.t_max = 40.0;
    const TransientResult res = transient_experiment(c);
    CHECK(all_passed(res.checks));
    std::vector<double> ss, cv;
    double ode_ss = 0.0, ode_cv = 0.0;
    for (const auto& r : res.rows) {
        (r.scheme == SchemeKind::Subsampling ? ss : cv).push_back(r.level_time);
        (r.scheme == SchemeKind::Subsampling ? ode_ss : ode_cv) = r.ode_level_time;
    }
    CHECK(median(cv) > median(ss));
    CHECK(ode_cv > ode_ss);
}

TEST_CASE("transient outputs are identical for any thread count")
{
    ExperimentConfig c;
    c.schemes = {SchemeKind::Canonical, SchemeKind::Subsampling};
    c.n_grid = {200, 400};
    c.replicates = 3;
    c.seed = 7;
    c.t_max = 4.0;
    c.level = 1.0;
    const fs::path a = scratch("det_a");
    const fs::path b = scratch("det_b");
    c.threads = 1;
    write_transient_outputs(a.string(), transient_experiment(c));
    c.threads = 3;
    write_transient_outputs(b.string(), transient_experiment(c));
    for (const char* f : {"transient_summary.csv", "transient_paths.csv", "transient_ode.csv"}) {
        CHECK(slurp(a / f) == slurp(b / f));
        CHECK(!slurp(a / f).empty());
    }
    CHECK(first_line(a / "transient_summary.csv") ==
          "scheme,n,replicate,sup_error,t_window,ode_status,ode_t_stop,level_time,ode_level_time");
    CHECK(first_line(a / "transient_paths.csv") == "scheme,n,t,x1");
    CHECK(first_line(a / "transient_ode.csv") == "scheme,n,t,x1");
}

TEST_CASE("stationary check on an exact Gaussian posterior")
{
    ExperimentConfig c;
    c.schemes = {SchemeKind::Subsampling};
    c.n_grid = {20};
    c.seed = 13;
    c.t_max = 500.0;
    c.target_samples = 5000;
    const StationaryResult res = stationary_distribution_check(c);
    CHECK(all_passed(res.checks));
    REQUIRE(res.rows.size() == 1);
    const StationaryRow& r = res.rows.front();
    CHECK(r.samples >= 5000);
    CHECK(r.ks < 0.03);
    CHECK(r.variance_xi == doctest::Approx(1.0).epsilon(0.08));
    CHECK(r.spacing >= 3.0 * r.iact);
    REQUIRE(r.acf_predicted.size() == c.acf_lags.size());
    CHECK(r.acf_predicted[2] == doctest::Approx(std::exp(-std::sqrt(2.0 * std::numbers::pi) / 2.0)));

    const fs::path dir = scratch("stationary");
    write_stationary_outputs(dir.string(), res);
    CHECK(first_line(dir / "stationary_acf.csv") == "scheme,n,replicate,lag,empirical,predicted");
    CHECK(first_line(dir / "stationary_samples.csv") == "scheme,n,xi1");
    CHECK(first_line(dir / "stationary_summary.csv").rfind("scheme,n,m,replicate", 0) == 0);
}

TEST_CASE("stationary check extends short runs")
{
    ExperimentConfig c;
    c.n_grid = {50};
    c.schemes = {SchemeKind::Subsampling};
    c.t_max = 1.0;
    c.dt = 0.1;
    const StationaryResult res = stationary_distribution_check(c);
    REQUIRE(res.rows.size() == 1);
    CHECK(res.rows[0].t_total > 100.0);
    CHECK(res.rows[0].samples >= 200);
}

TEST_CASE("confinement trivial limits")
{
    ExperimentConfig c;
    c.n_grid = {100, 1000};
    c.replicates = 10;
    c.seed = 19;
    c.t_max = 1.0;
    c.epsilon = 1.5;
    ConfinementResult res = confinement_check(c);
    CHECK(all_passed(res.checks));
    for (const auto& r : res.rows)
        CHECK(r.fraction == 0.0);

    c.epsilon = 1e-9;
    res = confinement_check(c);
    for (const auto& r : res.rows)
        CHECK(r.fraction == 1.0);

    const fs::path dir = scratch("confinement");
    write_confinement_outputs(dir.string(), res);
    CHECK(first_line(dir / "confinement.csv") == "n,epsilon,t,replicates,exceedances,fraction");

    c.model = ModelKind::Cauchy;
    c.truth = location_truth(Family::Cauchy);
    CHECK_THROWS(confinement_check(c));
}

TEST_CASE("small scaling study: exact cost slopes")
{
    ExperimentConfig c;
    c.schemes = {SchemeKind::Canonical, SchemeKind::ControlVariate};
    c.n_grid = {256, 1024, 4096};
    c.seed = 29;
    c.horizon_scale = 50.0;
    c.min_switches = 3000;
    const ScalingResult res = scaling_study(c);
    CHECK(all_passed(res.checks));
    CHECK(res.rows.size() == 6);
    CHECK(find_slope(res, SchemeKind::Canonical, "grad_evals_per_proposal").fit.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(find_slope(res, SchemeKind::ControlVariate, "grad_evals_per_proposal").fit.slope) < 1e-12);
    for (const auto& r : res.rows) {
        CHECK(r.iact_x1.mean > 0.0);
        CHECK(r.accepted_per_unit_time.mean <= r.proposals_per_unit_time.mean);
    }
    CHECK(find_slope(res, SchemeKind::Canonical, "accepted_per_unit_time").fit.slope ==
          doctest::Approx(0.5).epsilon(0.4));
    CHECK_THROWS_AS(find_slope(res, SchemeKind::Subsampling, "iact_x1"), std::out_of_range);

    const fs::path dir = scratch("scaling");
    write_scaling_outputs(dir.string(), res);
    CHECK(first_line(dir / "scaling_slopes.csv") == "scheme,quantity,slope,slope_se,intercept,r2,points");
    CHECK(first_line(dir / "scaling.csv").rfind("scheme,n,replicates,t_run,proposals_per_unit_time,", 0) == 0);
}

TEST_CASE("limiting CV rate on a Gaussian model")
{
    ExperimentConfig c;
    c.n_grid = {1000};
    c.seed = 31;
    c.t_max = 2e4;
    c.min_events = 200;
    const LimitingRateStudy s = limiting_rate_check(c);
    CHECK(all_passed(s.checks));
    const LimitingRateResult& r = s.results.front();
    CHECK(r.bins_used > 0);
    CHECK(r.max_abs_z < 4.0);
    // With the MLE as reference the rate (v xi)_+ vanishes when v xi < 0.
    for (const auto& b : r.bins)
        if (std::max(b.v * b.lo, b.v * b.hi) <= 0.0) {
            CHECK(b.events == 0);
            CHECK(b.expected == 0.0);
        }

    const fs::path dir = scratch("limiting");
    write_limiting_rate_outputs(dir.string(), s);
    CHECK(first_line(dir / "limiting_rate.csv") == "n,m,coord,v,xi_lo,xi_hi,events,time,expected,empirical,predicted,z");

    c.t_max = 1e-3;
    CHECK_THROWS_AS(limiting_rate_check(c), InsufficientEvents);
}

TEST_CASE("drift table on the Gaussian model is -sign(x) for canonical and CV")
{
    ExperimentConfig c;
    c.grid_lo = -2.0;
    c.grid_hi = 2.0;
    c.grid_step = 0.5;
    const DriftTable t = drift_table(c);
    REQUIRE(t.rows.size() == 9);
    for (const auto& r : t.rows) {
        if (r.x == 0.0) {
            CHECK(std::isnan(r.b_can));
            continue;
        }
        CHECK(r.b_can == doctest::Approx(r.x > 0 ? -1.0 : 1.0));
        CHECK(r.b_cv == doctest::Approx(r.b_can));
        CHECK(std::abs(r.b_ss) < 1.0);
        CHECK(r.b_ss * r.x < 0.0);
    }
    CHECK(!t.crossing);

    const fs::path dir = scratch("drift");
    write_drift_outputs(dir.string(), t);
    CHECK(first_line(dir / "drift_table.csv") == "x,b_can,b_ss,b_cv");
    CHECK(first_line(dir / "drift_summary.csv") == "model,m,x_star,crossing");
}

TEST_CASE("Cauchy drift table reports the SS/CV crossing")
{
    ExperimentConfig c;
    c.model = ModelKind::Cauchy;
    c.truth = location_truth(Family::Cauchy);
    c.grid_lo = 1.0;
    c.grid_hi = 3.0;
    c.grid_step = 1.0;
    const DriftTable t = drift_table(c);
    REQUIRE(t.crossing);
    CHECK(*t.crossing == doctest::Approx(1.605).epsilon(0.01 / 1.605));
    // Beyond the crossing the CV drift is the weaker one.
    CHECK(std::abs(t.rows.back().b_cv) < std::abs(t.rows.back().b_ss));
}

TEST_CASE("mixed comparison runs every scheme on shared data")
{
    ExperimentConfig c;
    c.model = ModelKind::Cauchy;
    c.truth = location_truth(Family::Cauchy);
    c.schemes = {SchemeKind::Subsampling, SchemeKind::ControlVariate, SchemeKind::Mixed};
    c.n_grid = {500};
    c.replicates = 3;
    c.seed = 47;
    c.start = x1(8.0);
    c.t_max = 40.0;
    c.level = 2.0;
    const MixedResult res = mixed_comparison(c);
    CHECK(all_passed(res.checks));
    CHECK(res.radius == 1.605);
    CHECK(res.rows.size() == 9);
    CHECK(res.trajectories.size() == 3);
    for (SchemeKind k : c.schemes) {
        CHECK(std::isfinite(res.median_hit(k)));
        CHECK(res.median_level(k) <= res.median_hit(k));
    }
    CHECK_THROWS_AS(res.median_hit(SchemeKind::Canonical), std::out_of_range);

    const fs::path dir = scratch("mixed");
    write_mixed_outputs(dir.string(), res);
    CHECK(first_line(dir / "mixed_hitting.csv") == "scheme,replicate,hit_time,level_time");
    CHECK(first_line(dir / "mixed_summary.csv") == "scheme,radius,median_hit_time,median_level_time");
    CHECK(first_line(dir / "mixed_paths.csv") == "scheme,t,x1");
}

TEST_CASE("manifest helpers")
{
    CHECK(hash_text("") == "cbf29ce484222325");
    CHECK(hash_text("a") == "af63dc4c8601ec8c");
    CHECK(csv_num(0.1) == "0.10000000000000001");
    const Manifest info = build_info();
    CHECK(std::any_of(info.begin(), info.end(), [](const auto& kv) { return kv.first == "version"; }));
    const fs::path dir = scratch("manifest");
    fs::create_directories(dir);
    write_manifest((dir / "manifest.txt").string(), {{"seed", "5"}, {"config_hash", "abc"}});
    CHECK(slurp(dir / "manifest.txt") == "seed=5\nconfig_hash=abc\n");
}
