#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "detail.hpp"
#include "zz/experiments.hpp"

namespace zz {

namespace {

double drift_or_nan(const DriftFunction& f, double x)
{
    const DriftValue v = drift_components(f, Vector::Constant(1, x));
    return v.denominator[0] < kZeroDenominator ? kNaN : v.b[0];
}

double magnitude_gap(const DriftFunction& base, double x)
{
    DriftFunction ss = base;
    ss.scheme = SchemeKind::Subsampling;
    DriftFunction cv = base;
    cv.scheme = SchemeKind::ControlVariate;
    const Vector p = Vector::Constant(1, x);
    const double a = std::abs(drift_components(ss, p).b[0]);
    const double b = std::abs(drift_components(cv, p).b[0]);
    // Differences at rounding level count as ties.
    return std::abs(a - b) <= 1e-12 * std::max(a, b) ? 0.0 : a - b;
}

}  // namespace

std::optional<double> drift_crossing(const DriftFunction& base, double lo, double hi, double tol)
{
    const DriftFunction f = prepared(base);
    double glo = magnitude_gap(f, lo);
    const double ghi = magnitude_gap(f, hi);
    if (glo == 0.0)
        return lo;
    if (ghi == 0.0)
        return hi;
    if ((glo < 0.0) == (ghi < 0.0))
        return std::nullopt;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double g = magnitude_gap(f, mid);
        if ((g < 0.0) == (glo < 0.0)) {
            lo = mid;
            glo = g;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

std::optional<double> find_drift_crossing(const DriftFunction& base)
{
    const DriftFunction f = prepared(base);
    if (f.x0.size() != 1)
        throw std::invalid_argument("drift crossing is defined for 1-d models");
    const double x0 = f.x0[0];
    const double step = 0.25;
    // A gap that only touches zero (both drifts saturating at 1) is not a
    // crossing, so a sign change is needed between nonzero values.
    double last = x0 + step;
    double prev = magnitude_gap(f, last);
    for (int k = 2; k <= 200; ++k) {
        const double x = x0 + step * k;
        const double g = magnitude_gap(f, x);
        if (g == 0.0)
            continue;
        if (prev != 0.0 && (g < 0.0) != (prev < 0.0))
            return drift_crossing(f, last, x);
        last = x;
        prev = g;
    }
    return std::nullopt;
}

DriftTable drift_table(const ExperimentConfig& config)
{
    config.validate();
    if (config.dim() != 1)
        throw std::invalid_argument("drift table is defined for 1-d models");
    const std::size_t m = config.m > 0 ? config.m : 1;
    ExperimentConfig c = config;
    c.m = m;
    const DriftFunction base = prepared(experiment_drift(c, SchemeKind::Subsampling, config.n_grid.front()));

    DriftTable table;
    table.model = config.model;
    table.m = m;
    table.x_star = base.x_star[0];
    const auto points =
        static_cast<std::size_t>(std::floor((config.grid_hi - config.grid_lo) / config.grid_step + 1e-9)) + 1;
    table.rows.resize(points);
    parallel_for(points, worker_count(config.threads), [&](std::size_t k) {
        DriftRow& row = table.rows[k];
        row.x = config.grid_lo + static_cast<double>(k) * config.grid_step;
        DriftFunction f = base;
        f.scheme = SchemeKind::Canonical;
        row.b_can = drift_or_nan(f, row.x);
        f.scheme = SchemeKind::Subsampling;
        row.b_ss = drift_or_nan(f, row.x);
        f.scheme = SchemeKind::ControlVariate;
        row.b_cv = drift_or_nan(f, row.x);
    });
    table.crossing = find_drift_crossing(base);
    return table;
}

void write_drift_outputs(const std::string& dir, const DriftTable& table)
{
    auto out = detail::open_output(dir, "drift_table.csv");
    out << "x,b_can,b_ss,b_cv\n";
    for (const auto& r : table.rows)
        out << fmt::format("{},{},{},{}\n", csv_num(r.x), csv_num(r.b_can), csv_num(r.b_ss), csv_num(r.b_cv));
    auto summary = detail::open_output(dir, "drift_summary.csv");
    summary << "model,m,x_star,crossing\n";
    summary << fmt::format("{},{},{},{}\n", to_string(table.model), table.m, csv_num(table.x_star),
                           csv_num(table.crossing ? *table.crossing : kNaN));
}

double MixedResult::median_hit(SchemeKind kind) const
{
    for (const auto& [k, v] : medians)
        if (k == kind)
            return v.first;
    throw std::out_of_range("scheme not in mixed comparison: " + to_string(kind));
}

double MixedResult::median_level(SchemeKind kind) const
{
    for (const auto& [k, v] : medians)
        if (k == kind)
            return v.second;
    throw std::out_of_range("scheme not in mixed comparison: " + to_string(kind));
}

MixedResult mixed_comparison(const ExperimentConfig& config)
{
    config.validate();
    if (config.dim() != 1)
        throw std::invalid_argument("mixed comparison is defined for 1-d models");
    const Vector x0 = detail::limit_point(config);
    const Vector start = config.start.size() > 0 ? config.start : Vector(x0.array() + config.start_offset);

    ExperimentConfig c = config;
    if (!(c.mixed_radius > 0.0)) {
        const auto m = find_drift_crossing(experiment_drift(config, SchemeKind::Subsampling, config.n_grid.front()));
        if (!m)
            throw std::runtime_error("no crossing of |b_ss| and |b_cv|; set scheme.mixed_radius");
        c.mixed_radius = *m;
    }

    const std::size_t S = c.schemes.size();
    const std::size_t R = c.replicates;
    const std::size_t n = c.n_grid.front();
    MixedResult out;
    out.radius = c.mixed_radius;
    out.rows.resize(S * R);
    std::vector<Skeleton> paths(S);
    std::vector<Check> checks(S * R);
    parallel_for(S * R, worker_count(c.threads), [&](std::size_t task) {
        const std::size_t s = task / R;
        const std::size_t r = task % R;
        const SchemeKind kind = c.schemes[s];
        auto inst = make_instance(c, kind, n, stream_seed(c.seed, detail::kData, 0, r));
        SchemeRate rate(*inst->scheme);
        const PhaseState z0{start, detail::random_velocity(1, stream_seed(c.seed, detail::kVelocity, 0, r))};
        SimBudget budget;
        budget.t_max = c.t_max;
        SimResult sim = simulate(rate, z0, budget, stream_seed(c.seed, detail::kSampler, s, r));
        HittingRow& row = out.rows[task];
        row.scheme = kind;
        row.replicate = r;
        row.hit_time = first_entry_time(sim.skeleton, 0, x0[0] - c.hit_radius, x0[0] + c.hit_radius);
        if (c.level)
            row.level_time = start[0] > *c.level ? first_entry_time(sim.skeleton, 0, -kInf, *c.level)
                                                 : first_entry_time(sim.skeleton, 0, *c.level, kInf);
        checks[task] = ledger_check(*inst->scheme, sim.ledger,
                                    fmt::format("mixed-comparison ledger {} rep={}", to_string(kind), r));
        if (r == 0)
            paths[s] = std::move(sim.skeleton);
    });

    for (std::size_t s = 0; s < S; ++s) {
        std::vector<double> hit;
        std::vector<double> level;
        for (std::size_t r = 0; r < R; ++r) {
            hit.push_back(out.rows[s * R + r].hit_time);
            level.push_back(out.rows[s * R + r].level_time);
        }
        out.medians.push_back({c.schemes[s], {median(hit), median(level)}});
        out.trajectories.emplace_back(c.schemes[s], std::move(paths[s]));
    }
    out.checks = std::move(checks);
    return out;
}

void write_mixed_outputs(const std::string& dir, const MixedResult& result)
{
    auto hits = detail::open_output(dir, "mixed_hitting.csv");
    hits << "scheme,replicate,hit_time,level_time\n";
    for (const auto& r : result.rows)
        hits << fmt::format("{},{},{},{}\n", to_string(r.scheme), r.replicate, csv_num(r.hit_time),
                            csv_num(r.level_time));
    auto summary = detail::open_output(dir, "mixed_summary.csv");
    summary << "scheme,radius,median_hit_time,median_level_time\n";
    for (const auto& [k, v] : result.medians)
        summary << fmt::format("{},{},{},{}\n", to_string(k), csv_num(result.radius), csv_num(v.first),
                               csv_num(v.second));
    auto paths = detail::open_output(dir, "mixed_paths.csv");
    paths << "scheme,t,x1\n";
    for (const auto& [k, s] : result.trajectories) {
        for (std::size_t j = 0; j < s.size(); ++j)
            paths << to_string(k) << ',' << csv_num(s.time(j)) << ',' << csv_num(s.position(j)[0]) << '\n';
        if (!s.empty() && s.t_end() > s.time(s.size() - 1))
            paths << to_string(k) << ',' << csv_num(s.t_end()) << ',' << csv_num(s.end_state().x[0]) << '\n';
    }
}

}  // namespace zz
