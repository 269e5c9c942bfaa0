#include <cmath>

#include <fmt/format.h>

#include "detail.hpp"
#include "zz/experiments.hpp"

namespace zz {

namespace {

/// First time the fluid path reaches `level` in coordinate 0, by linear
/// interpolation between solver steps.
double fluid_level_time(const FluidPath& p, double level)
{
    for (std::size_t k = 0; k + 1 < p.t.size(); ++k) {
        const double a = p.x[k][0] - level;
        const double b = p.x[k + 1][0] - level;
        if (a == 0.0)
            return p.t[k];
        if ((a < 0.0) != (b < 0.0) || b == 0.0)
            return p.t[k] + (p.t[k + 1] - p.t[k]) * a / (a - b);
    }
    return kInf;
}

double skeleton_level_time(const Skeleton& s, double start, double level)
{
    return start > level ? first_entry_time(s, 0, -kInf, level) : first_entry_time(s, 0, level, kInf);
}

}  // namespace

TransientResult transient_experiment(const ExperimentConfig& config)
{
    config.validate();
    const std::size_t d = config.dim();
    const Vector x0 = detail::limit_point(config);
    const Vector start = config.start.size() > 0 ? config.start : Vector(x0.array() + config.start_offset);

    const std::size_t S = config.schemes.size();
    const std::size_t N = config.n_grid.size();
    const std::size_t R = config.replicates;
    const std::size_t threads = worker_count(config.threads);

    // The fluid path depends on the scheme and on n only through m.
    std::vector<FluidPath> odes(S * N);
    parallel_for(S * N, threads, [&](std::size_t k) {
        const SchemeKind kind = config.schemes[k / N];
        odes[k] = solve_fluid_ode(experiment_drift(config, kind, config.n_grid[k % N]), start, config.t_max);
    });

    TransientResult out;
    out.rows.resize(S * N * R);
    std::vector<Skeleton> paths(S * N);
    std::vector<Check> checks(S * N * R);
    parallel_for(S * N * R, threads, [&](std::size_t task) {
        const std::size_t s = task / (N * R);
        const std::size_t ni = task / R % N;
        const std::size_t r = task % R;
        const SchemeKind kind = config.schemes[s];
        const std::size_t n = config.n_grid[ni];
        auto inst = make_instance(config, kind, n, stream_seed(config.seed, detail::kData, ni, r));
        SchemeRate rate(*inst->scheme);
        const PhaseState z0{start, detail::random_velocity(d, stream_seed(config.seed, detail::kVelocity, ni, r))};
        SimBudget budget;
        budget.t_max = config.t_max;
        SimResult sim = simulate(rate, z0, budget, stream_seed(config.seed, detail::kSampler, ni * S + s, r));

        const FluidPath& ode = odes[s * N + ni];
        TransientRow& row = out.rows[task];
        row.scheme = kind;
        row.n = n;
        row.replicate = r;
        row.ode_status = ode.status;
        row.ode_t_stop = ode.t_stop;
        row.t_window = ode.status == FluidStatus::HitH ? std::max(0.0, ode.t_stop - config.stop_margin) : config.t_max;
        row.sup_error = sup_error(sim.skeleton, ode, row.t_window);
        if (config.level) {
            row.level_time = skeleton_level_time(sim.skeleton, start[0], *config.level);
            row.ode_level_time = fluid_level_time(ode, *config.level);
        }
        checks[task] = ledger_check(*inst->scheme, sim.ledger,
                                    fmt::format("transient ledger {} n={} rep={}", to_string(kind), n, r));
        if (r == 0)
            paths[s * N + ni] = std::move(sim.skeleton);
    });

    for (std::size_t k = 0; k < S * N; ++k)
        out.traces.push_back({config.schemes[k / N], config.n_grid[k % N], std::move(paths[k]), std::move(odes[k])});
    out.checks = std::move(checks);
    return out;
}

void write_transient_outputs(const std::string& dir, const TransientResult& result)
{
    auto summary = detail::open_output(dir, "transient_summary.csv");
    summary << "scheme,n,replicate,sup_error,t_window,ode_status,ode_t_stop,level_time,ode_level_time\n";
    for (const auto& r : result.rows)
        summary << fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(r.scheme), r.n, r.replicate,
                               csv_num(r.sup_error), csv_num(r.t_window),
                               r.ode_status == FluidStatus::HitH ? "hit_h" : "completed", csv_num(r.ode_t_stop),
                               csv_num(r.level_time), csv_num(r.ode_level_time));

    const std::size_t d = result.traces.empty() ? 1 : result.traces.front().path.dim();
    auto paths = detail::open_output(dir, "transient_paths.csv");
    paths << "scheme,n,t" << detail::columns("x", d) << '\n';
    auto odes = detail::open_output(dir, "transient_ode.csv");
    odes << "scheme,n,t" << detail::columns("x", d) << '\n';
    for (const auto& tr : result.traces) {
        const std::string key = fmt::format("{},{}", to_string(tr.scheme), tr.n);
        for (std::size_t k = 0; k < tr.path.size(); ++k)
            paths << key << ',' << csv_num(tr.path.time(k)) << detail::row(tr.path.position(k)) << '\n';
        if (!tr.path.empty() && tr.path.t_end() > tr.path.time(tr.path.size() - 1))
            paths << key << ',' << csv_num(tr.path.t_end()) << detail::row(tr.path.end_state().x) << '\n';
        for (std::size_t k = 0; k < tr.ode.t.size(); ++k)
            odes << key << ',' << csv_num(tr.ode.t[k]) << detail::row(tr.ode.x[k]) << '\n';
    }
}

}  // namespace zz
