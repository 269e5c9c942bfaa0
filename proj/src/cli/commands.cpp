#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>

#include "zz/cli.hpp"
#include "zz/errors.hpp"
#include "zz/rates.hpp"

namespace zz::cli {

namespace {

namespace fs = std::filesystem;

// Seed streams of the single-run commands.
enum Stream : std::uint64_t { kData = 1, kVelocity = 2, kSampler = 3, kOu = 7 };

/// Everything one command invocation needs besides the config.
struct Context {
    std::ostream& out;
    std::string command;
    std::string seed_source;
    std::vector<std::string> outputs;
    std::vector<Check> checks;
    Manifest extra;
};

std::ofstream create(const RunConfig& c, Context& ctx, const std::string& name)
{
    fs::create_directories(c.experiment.output_dir);
    const fs::path p = fs::path(c.experiment.output_dir) / name;
    std::ofstream f(p);
    if (!f)
        throw std::runtime_error("cannot write " + p.string());
    ctx.outputs.push_back(name);
    return f;
}

SchemeKind single_scheme(const RunConfig& c)
{
    if (c.experiment.schemes.size() != 1)
        throw ConfigError("this command takes exactly one scheme", "scheme.kind");
    return c.experiment.schemes.front();
}

std::size_t single_n(const RunConfig& c)
{
    if (c.experiment.n_grid.size() != 1)
        throw ConfigError("this command takes exactly one n", "experiment.n");
    return c.experiment.n_grid.front();
}

Vector random_velocity(std::size_t d, std::uint64_t seed)
{
    Rng rng(seed);
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return v;
}

Dataset load_or_generate(const RunConfig& c, std::size_t n)
{
    if (c.data_file.empty())
        return generate_data(c.experiment.truth, n, stream_seed(c.experiment.seed, kData));
    std::ifstream in(c.data_file);
    if (!in)
        throw ConfigError("cannot open dataset " + c.data_file, "data.file");
    Dataset d = read_dataset_csv(in);
    if (d.dim != c.experiment.dim())
        throw ConfigError(fmt::format("dataset has dimension {}, the model {}", d.dim, c.experiment.dim()),
                          "data.file");
    return d;
}

void record(Context& ctx, const std::vector<Check>& checks)
{
    ctx.checks.insert(ctx.checks.end(), checks.begin(), checks.end());
}

int cmd_generate_data(const RunConfig& c, Context& ctx)
{
    const Dataset d = generate_data(c.experiment.truth, single_n(c), stream_seed(c.experiment.seed, kData));
    auto csv = create(c, ctx, "data.csv");
    write_dataset_csv(csv, d);
    auto meta = create(c, ctx, "data.meta");
    write_dataset_meta(meta, d, c.experiment.truth);
    fmt::print(ctx.out, "{} observations from {}\n", d.size(), c.experiment.truth.describe());
    return kOk;
}

int cmd_sample(const RunConfig& c, Context& ctx)
{
    const SchemeKind kind = single_scheme(c);
    const Dataset data = load_or_generate(c, single_n(c));
    auto model = make_model(c.experiment.model, c.experiment.dim());
    SchemeConfig sc;
    sc.kind = kind;
    sc.m = batch_size(c.experiment, data.size());
    sc.reference = c.experiment.reference;
    sc.mixed_radius = c.experiment.mixed_radius;
    sc.mixed_horizon = c.experiment.mixed_horizon;
    const GradEstimatorScheme scheme(data, *model, sc);
    SchemeRate rate(scheme);

    const Vector x_hat = fit_mle(data, *model);
    const PhaseState z0{c.experiment.start.size() > 0 ? c.experiment.start : x_hat,
                        random_velocity(c.experiment.dim(), stream_seed(c.experiment.seed, kVelocity))};
    SimBudget budget;
    budget.t_max = c.experiment.t_max;
    const SimResult sim = simulate(rate, z0, budget, stream_seed(c.experiment.seed, kSampler));

    auto sk = create(c, ctx, "skeleton.csv");
    write_skeleton_csv(sk, sim.skeleton);
    auto ledger = create(c, ctx, "ledger.csv");
    const CostLedger& l = sim.ledger;
    ledger << "n,m,proposals,accepted,grad_term_evals,setup_evals,bound_refreshes,bound_violations\n";
    ledger << fmt::format("{},{},{},{},{},{},{},{}\n", scheme.n(), scheme.m(), l.proposals, l.accepted,
                          l.grad_term_evals, l.setup_evals, l.bound_refreshes, l.bound_violations);
    ctx.checks.push_back(ledger_check(scheme, l, "sample ledger"));
    std::vector<std::string> mle;
    for (Eigen::Index i = 0; i < x_hat.size(); ++i)
        mle.push_back(csv_num(x_hat[i]));
    ctx.extra.push_back({"mle", fmt::format("{}", fmt::join(mle, ","))});
    fmt::print(ctx.out, "{} events, {} proposals, {} gradient term evaluations over t = {}\n", sim.skeleton.size(),
               l.proposals, l.grad_term_evals, c.experiment.t_max);
    return kOk;
}

int cmd_fluid(const RunConfig& c, Context& ctx)
{
    const SchemeKind kind = single_scheme(c);
    const DriftFunction f = prepared(experiment_drift(c.experiment, kind, c.experiment.n_grid.front()));
    const Vector start = c.experiment.start.size() > 0 ? c.experiment.start
                                                       : Vector(f.x0.array() + c.experiment.start_offset);
    const FluidPath path = solve_fluid_ode(f, start, c.experiment.t_max);
    auto out = create(c, ctx, "fluid.csv");
    write_fluid_csv(out, path);
    const std::string status = path.status == FluidStatus::HitH ? "hit_h" : "completed";
    ctx.extra.push_back({"fluid_status", status});
    ctx.extra.push_back({"fluid_t_stop", csv_num(path.t_stop)});
    fmt::print(ctx.out, "fluid path {} at t = {:.6g}\n", status, path.t_stop);
    return kOk;
}

int cmd_ou(const RunConfig& c, Context& ctx)
{
    const SchemeKind kind = single_scheme(c);
    const DriftFunction f = prepared(experiment_drift(c.experiment, kind, c.experiment.n_grid.front()));
    const OUParams p = ou_params(f);
    const double dt = c.experiment.dt > 0.0 ? c.experiment.dt : 0.01;
    const OUPath path = simulate_ou(p, c.ou_start, c.experiment.t_max, dt, stream_seed(c.experiment.seed, kOu));
    auto out = create(c, ctx, "ou.csv");
    write_ou_csv(out, path);
    const Matrix s = ou_stationary_covariance(p);
    auto flat = [](const Matrix& m) {
        std::vector<std::string> v;
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                v.push_back(csv_num(m(i, j)));
        return fmt::format("{}", fmt::join(v, ","));
    };
    ctx.extra.push_back({"ou_a", flat(p.a)});
    ctx.extra.push_back({"ou_b", flat(p.b)});
    ctx.extra.push_back({"ou_stationary_covariance", flat(s)});
    fmt::print(ctx.out, "OU A = [{}], B = [{}], stationary covariance [{}]\n", flat(p.a), flat(p.b), flat(s));
    return kOk;
}

int cmd_drift_table(const RunConfig& c, Context& ctx)
{
    const DriftTable t = drift_table(c.experiment);
    write_drift_outputs(c.experiment.output_dir, t);
    ctx.outputs.insert(ctx.outputs.end(), {"drift_table.csv", "drift_summary.csv"});
    fmt::print(ctx.out, "{} grid points; |b_ss| = |b_cv| crossing: {}\n", t.rows.size(),
               t.crossing ? fmt::format("{:.6f}", *t.crossing) : std::string("none"));
    return kOk;
}

int cmd_scaling(const RunConfig& c, Context& ctx)
{
    const ScalingResult r = scaling_study(c.experiment);
    write_scaling_outputs(c.experiment.output_dir, r);
    ctx.outputs.insert(ctx.outputs.end(), {"scaling.csv", "scaling_slopes.csv"});
    record(ctx, r.checks);
    for (const auto& s : r.slopes)
        fmt::print(ctx.out, "{:<10} {:<24} slope {:+.3f} +- {:.3f}  R2 {:.3f}\n", to_string(s.scheme), s.quantity,
                   s.fit.slope, s.fit.slope_se, s.fit.r2);
    return kOk;
}

int cmd_transient(const RunConfig& c, Context& ctx)
{
    const TransientResult r = transient_experiment(c.experiment);
    write_transient_outputs(c.experiment.output_dir, r);
    ctx.outputs.insert(ctx.outputs.end(), {"transient_summary.csv", "transient_paths.csv", "transient_ode.csv"});
    record(ctx, r.checks);
    for (SchemeKind k : c.experiment.schemes)
        for (std::size_t n : c.experiment.n_grid) {
            std::vector<double> e;
            for (const auto& row : r.rows)
                if (row.scheme == k && row.n == n)
                    e.push_back(row.sup_error);
            fmt::print(ctx.out, "{} n={}: median sup error {:.4g}\n", to_string(k), n, median(e));
        }
    return kOk;
}

int cmd_stationary(const RunConfig& c, Context& ctx)
{
    const StationaryResult r = stationary_distribution_check(c.experiment);
    write_stationary_outputs(c.experiment.output_dir, r);
    ctx.outputs.insert(ctx.outputs.end(), {"stationary_summary.csv", "stationary_acf.csv", "stationary_samples.csv"});
    record(ctx, r.checks);
    for (const auto& row : r.rows)
        fmt::print(ctx.out, "{} n={} rep={}: KS {:.4f} on {} samples, iact {:.4g}, var(xi) {:.4f}\n",
                   to_string(row.scheme), row.n, row.replicate, row.ks, row.samples, row.iact, row.variance_xi);
    return kOk;
}

int cmd_confinement(const RunConfig& c, Context& ctx)
{
    const ConfinementResult r = confinement_check(c.experiment);
    write_confinement_outputs(c.experiment.output_dir, r);
    ctx.outputs.push_back("confinement.csv");
    record(ctx, r.checks);
    for (const auto& row : r.rows)
        fmt::print(ctx.out, "n={}: {}/{} runs leave the {}-ball by t = {}\n", row.n, row.exceedances,
                   row.replicates, row.epsilon, row.t);
    return kOk;
}

int cmd_limiting_rate(const RunConfig& c, Context& ctx)
{
    const LimitingRateStudy s = limiting_rate_check(c.experiment);
    write_limiting_rate_outputs(c.experiment.output_dir, s);
    ctx.outputs.push_back("limiting_rate.csv");
    record(ctx, s.checks);
    for (const auto& r : s.results)
        fmt::print(ctx.out, "n={}: {} bins used, max |z| {:.3f}, max relative deviation {:.4f}\n", r.n, r.bins_used,
                   r.max_abs_z, r.max_rel_dev);
    return kOk;
}

int cmd_mixed(const RunConfig& c, Context& ctx)
{
    const MixedResult r = mixed_comparison(c.experiment);
    write_mixed_outputs(c.experiment.output_dir, r);
    ctx.outputs.insert(ctx.outputs.end(), {"mixed_hitting.csv", "mixed_summary.csv", "mixed_paths.csv"});
    record(ctx, r.checks);
    ctx.extra.push_back({"mixed_radius", csv_num(r.radius)});
    for (const auto& [k, m] : r.medians)
        fmt::print(ctx.out, "{}: median hitting time {:.4g}\n", to_string(k), m.first);
    return kOk;
}

struct Command {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, Context&);
};

const Command kCommands[] = {
    {"generate-data", "draw a dataset from the truth (data.csv, data.meta)", cmd_generate_data},
    {"sample", "one Zig-Zag run (skeleton.csv, ledger.csv)", cmd_sample},
    {"fluid", "fluid-limit ODE path (fluid.csv)", cmd_fluid},
    {"ou", "Ornstein-Uhlenbeck limit path (ou.csv)", cmd_ou},
    {"drift-table", "asymptotic drifts on a grid (drift_table.csv, drift_summary.csv)", cmd_drift_table},
    {"scaling", "cost and mixing against n (scaling.csv, scaling_slopes.csv)", cmd_scaling},
    {"transient", "sampler paths against the fluid limit (transient_*.csv)", cmd_transient},
    {"stationary", "stationary distribution and autocorrelation checks (stationary_*.csv)", cmd_stationary},
    {"confinement", "exceedance fractions around the MLE (confinement.csv)", cmd_confinement},
    {"limiting-rate", "rescaled control-variate switching intensities (limiting_rate.csv)", cmd_limiting_rate},
    {"mixed", "hitting times of the sub-sampling schemes (mixed_*.csv)", cmd_mixed},
};

/// Flag shortcuts for config keys.
struct Shortcut {
    const char* flag;
    const char* key;
};

const Shortcut kShortcuts[] = {
    {"--model", "model.kind"},
    {"--truth", "truth.family"},
    {"--scheme,--schemes", "scheme.kind"},
    {"--m", "scheme.m"},
    {"--reference", "scheme.reference"},
    {"--mixed-radius", "scheme.mixed_radius"},
    {"--n,--ngrid", "experiment.n"},
    {"--replicates", "experiment.replicates"},
    {"--t-max", "experiment.t_max"},
    {"--dt", "experiment.dt"},
    {"--start", "experiment.start"},
    {"--level", "experiment.level"},
    {"--threads", "experiment.threads"},
    {"--grid", "drift.grid"},
    {"--xstar", "drift.xstar"},
    {"--drift-method", "drift.method"},
    {"--data", "data.file"},
    {"--seed", "seed"},
    {"-o,--output", "output.dir"},
};

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t fresh_seed()
{
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

int execute(const Command& cmd, const std::string& config_file, const std::vector<Assignment>& overrides,
            std::ostream& out)
{
    std::vector<Assignment> all;
    if (!config_file.empty())
        all = read_assignments(read_file(config_file));
    all.insert(all.end(), overrides.begin(), overrides.end());

    Context ctx{out, cmd.name, "config", {}, {}, {}};
    const auto last_seed =
        std::find_if(all.rbegin(), all.rend(), [](const Assignment& a) { return a.key == "seed"; });
    if (last_seed == all.rend() || last_seed->value.empty()) {
        all.push_back({"seed", std::to_string(fresh_seed()), 0});
        ctx.seed_source = "drawn";
    } else if (last_seed->line == 0) {
        ctx.seed_source = "flag";
    }
    const RunConfig config = build_config(all);

    const int code = cmd.fn(config, ctx);
    const bool passed = all_passed(ctx.checks);
    std::size_t failed = 0;
    for (const auto& c : ctx.checks)
        if (!c.passed) {
            ++failed;
            fmt::print(out, "assertion failed: {}: {}\n", c.name, c.detail);
        }

    const std::string text = emit_config(config);
    {
        auto f = create(config, ctx, "config.txt");
        f << text;
    }
    Manifest m;
    m.push_back({"command", cmd.name});
    m.push_back({"seed", std::to_string(*config.seed)});
    m.push_back({"seed_source", ctx.seed_source});
    // The hash identifies the experiment, so the output location is left out.
    std::string hashed;
    for (const auto& line : read_assignments(text))
        if (line.key != "output.dir")
            hashed += line.key + " = " + line.value + "\n";
    m.push_back({"config_hash", hash_text(hashed)});
    for (const auto& kv : build_info())
        m.push_back(kv);
    m.insert(m.end(), ctx.extra.begin(), ctx.extra.end());
    m.push_back({"checks", std::to_string(ctx.checks.size())});
    m.push_back({"checks_failed", std::to_string(failed)});
    ctx.outputs.push_back("manifest.txt");
    m.push_back({"outputs", fmt::format("{}", fmt::join(ctx.outputs, ","))});
    for (const auto& line : read_assignments(text))
        m.push_back({"config." + line.key, line.value});
    write_manifest((fs::path(config.experiment.output_dir) / "manifest.txt").string(), m);
    return code == kOk && !passed ? kAssertionFailure : code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"zzscale: Zig-Zag sub-sampling experiments against their large-n limits", "zzscale"};
    app.require_subcommand(1);
    app.footer("\n" + key_reference() +
               "\nEnvironment: ZZSCALE_THREADS caps worker threads.\n"
               "Exit codes: 0 ok, 1 assertion failure, 2 config error, 3 runtime error.");

    struct Options {
        std::string config_file;
        std::vector<std::string> sets;
    };
    std::vector<Options> options(std::size(kCommands));
    std::vector<std::vector<std::pair<CLI::Option*, std::string>>> shortcut_opts(std::size(kCommands));
    std::vector<std::vector<std::string>> values(std::size(kCommands),
                                                 std::vector<std::string>(std::size(kShortcuts)));
    std::vector<CLI::App*> subs;
    for (std::size_t k = 0; k < std::size(kCommands); ++k) {
        CLI::App* sub = app.add_subcommand(kCommands[k].name, kCommands[k].help);
        sub->add_option("-c,--config", options[k].config_file, "config file of key = value lines");
        sub->add_option("--set", options[k].sets, "override one key: --set key=value (repeatable)");
        for (std::size_t s = 0; s < std::size(kShortcuts); ++s) {
            CLI::Option* o = sub->add_option(kShortcuts[s].flag, values[k][s],
                                             std::string("sets ") + kShortcuts[s].key);
            shortcut_opts[k].push_back({o, kShortcuts[s].key});
        }
        sub->footer("\n" + key_reference());
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::stringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? kOk : kConfigFailure;
    }

    for (std::size_t k = 0; k < subs.size(); ++k) {
        if (!subs[k]->parsed())
            continue;
        try {
            std::vector<Assignment> overrides;
            for (std::size_t s = 0; s < std::size(kShortcuts); ++s)
                if (shortcut_opts[k][s].first->count() > 0)
                    overrides.push_back({shortcut_opts[k][s].second, values[k][s], 0});
            for (const auto& kv : options[k].sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos)
                    throw ConfigError("--set expects key=value, got '" + kv + "'");
                overrides.push_back({kv.substr(0, eq), kv.substr(eq + 1), 0});
            }
            return execute(kCommands[k], options[k].config_file, overrides, out);
        } catch (const ConfigError& e) {
            err << "config error: " << e.what() << '\n';
            return kConfigFailure;
        } catch (const std::invalid_argument& e) {
            err << "config error: " << e.what() << '\n';
            return kConfigFailure;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return kRuntimeFailure;
        }
    }
    return kConfigFailure;
}

}  // namespace zz::cli
