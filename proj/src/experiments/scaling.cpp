#include <cmath>

#include <fmt/format.h>

#include "detail.hpp"
#include "zz/errors.hpp"
#include "zz/experiments.hpp"

namespace zz {

namespace {

struct RunStats {
    double t = 0.0;
    double proposals = 0.0;
    double accepted = 0.0;
    double evals_per_proposal = 0.0;
    double iact = 0.0;
    double ks = kNaN;
};

const char* const kQuantities[] = {"proposals_per_unit_time", "accepted_per_unit_time", "grad_evals_per_proposal",
                                   "iact_x1"};

}  // namespace

ScalingResult scaling_study(const ExperimentConfig& config)
{
    config.validate();
    const std::size_t d = config.dim();
    const Vector x0 = detail::limit_point(config);
    const Matrix info = detail::limit_information(config, x0);
    const BvmGaussian bvm(info);
    const double scale = 1.0 / std::sqrt(info(0, 0));

    const std::size_t S = config.schemes.size();
    const std::size_t N = config.n_grid.size();
    const std::size_t R = config.replicates;

    std::vector<RunStats> runs(S * N * R);
    std::vector<Check> checks(S * N * R);
    // Largest n first so the longest runs start early.
    parallel_for(S * N * R, worker_count(config.threads), [&](std::size_t k) {
        const std::size_t task = S * N * R - 1 - k;
        const std::size_t s = task / (N * R);
        const std::size_t ni = task / R % N;
        const std::size_t r = task % R;
        const SchemeKind kind = config.schemes[s];
        const std::size_t n = config.n_grid[ni];
        const double root = std::sqrt(static_cast<double>(n));

        auto inst = make_instance(config, kind, n, stream_seed(config.seed, detail::kData, ni, r));
        SchemeRate rate(*inst->scheme);
        const PhaseState z0{inst->x_hat,
                            detail::random_velocity(d, stream_seed(config.seed, detail::kVelocity, ni, r))};
        const bool ss = kind == SchemeKind::Subsampling || kind == SchemeKind::Mixed;
        const double unit = ss ? scale : scale / root;
        const double dt = config.dt > 0.0 ? config.dt : 0.1 * unit;

        GridSink grid(dt);
        ZigZagSampler sampler(rate, z0, stream_seed(config.seed, detail::kSampler, ni * S + s, r));
        grid.start(0.0, z0);
        sampler.advance(config.horizon_scale * unit, grid);
        if (sampler.ledger().accepted < config.min_switches)
            sampler.advance(kInf, grid, config.min_switches);
        grid.finish(sampler.time(), sampler.state());

        const CostLedger& ledger = sampler.ledger();
        RunStats& st = runs[task];
        st.t = sampler.time();
        st.proposals = static_cast<double>(ledger.proposals) / st.t;
        st.accepted = static_cast<double>(ledger.accepted) / st.t;
        st.evals_per_proposal = ledger.proposals > 0 ? static_cast<double>(ledger.grad_term_evals - ledger.setup_evals) /
                                                           static_cast<double>(ledger.proposals)
                                                     : kNaN;
        const auto skip = static_cast<std::size_t>(std::ceil(config.burn_in * static_cast<double>(grid.samples().size())));
        std::vector<double> x1 = grid.coordinate(0, skip);
        if (x1.size() < 1000)
            throw InsufficientSamples(fmt::format("scaling {} n={} rep={}: {} grid points after burn-in, the iact "
                                                  "estimate needs 1000; raise experiment.horizon_scale",
                                                  to_string(kind), n, r, x1.size()));
        st.iact = iact_estimate(x1, dt).iact;
        const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3.0 * st.iact / dt)));
        std::vector<double> thinned;
        for (std::size_t j = 0; j < x1.size(); j += stride)
            thinned.push_back(root * (x1[j] - inst->x_hat[0]));
        if (thinned.size() >= 10)
            st.ks = ks_statistic(thinned, [&](double v) { return bvm.marginal_cdf(0, v); });
        checks[task] = ledger_check(*inst->scheme, ledger,
                                    fmt::format("scaling ledger {} n={} rep={}", to_string(kind), n, r));
    });

    ScalingResult out;
    for (std::size_t s = 0; s < S; ++s) {
        std::vector<double> log_n;
        std::vector<std::vector<double>> log_q(4);
        for (std::size_t ni = 0; ni < N; ++ni) {
            ScalingRow row;
            row.scheme = config.schemes[s];
            row.n = config.n_grid[ni];
            row.replicates = R;
            std::vector<double> t, p, a, e, iact, ks;
            for (std::size_t r = 0; r < R; ++r) {
                const RunStats& st = runs[(s * N + ni) * R + r];
                t.push_back(st.t);
                p.push_back(st.proposals);
                a.push_back(st.accepted);
                e.push_back(st.evals_per_proposal);
                iact.push_back(st.iact);
                ks.push_back(st.ks);
            }
            row.t_run = mean_se(t).mean;
            row.proposals_per_unit_time = mean_se(p);
            row.accepted_per_unit_time = mean_se(a);
            row.grad_evals_per_proposal = mean_se(e);
            row.iact_x1 = mean_se(iact);
            row.ks_to_bvm = mean_se(ks);
            log_n.push_back(std::log(static_cast<double>(row.n)));
            log_q[0].push_back(std::log(row.proposals_per_unit_time.mean));
            log_q[1].push_back(std::log(row.accepted_per_unit_time.mean));
            log_q[2].push_back(std::log(row.grad_evals_per_proposal.mean));
            log_q[3].push_back(std::log(row.iact_x1.mean));
            out.rows.push_back(row);
        }
        if (N >= 2)
            for (std::size_t q = 0; q < 4; ++q)
                out.slopes.push_back({config.schemes[s], kQuantities[q], fit_line(log_n, log_q[q])});
    }
    out.checks = std::move(checks);
    return out;
}

const ScalingSlope& find_slope(const ScalingResult& result, SchemeKind scheme, const std::string& quantity)
{
    for (const auto& s : result.slopes)
        if (s.scheme == scheme && s.quantity == quantity)
            return s;
    throw std::out_of_range(fmt::format("no {} slope for {}", quantity, to_string(scheme)));
}

void write_scaling_outputs(const std::string& dir, const ScalingResult& result)
{
    auto rows = detail::open_output(dir, "scaling.csv");
    rows << "scheme,n,replicates,t_run";
    for (const char* q : {"proposals_per_unit_time", "accepted_per_unit_time", "grad_evals_per_proposal", "iact_x1",
                          "ks_to_bvm"})
        rows << ',' << q << ',' << q << "_se";
    rows << '\n';
    for (const auto& r : result.rows) {
        rows << fmt::format("{},{},{},{}", to_string(r.scheme), r.n, r.replicates, csv_num(r.t_run));
        for (const MeanSe* v : {&r.proposals_per_unit_time, &r.accepted_per_unit_time, &r.grad_evals_per_proposal,
                                &r.iact_x1, &r.ks_to_bvm})
            rows << ',' << csv_num(v->mean) << ',' << csv_num(v->se);
        rows << '\n';
    }
    auto slopes = detail::open_output(dir, "scaling_slopes.csv");
    slopes << "scheme,quantity,slope,slope_se,intercept,r2,points\n";
    for (const auto& s : result.slopes)
        slopes << fmt::format("{},{},{},{},{},{},{}\n", to_string(s.scheme), s.quantity, csv_num(s.fit.slope),
                              csv_num(s.fit.slope_se), csv_num(s.fit.intercept), csv_num(s.fit.r2), s.fit.points);
}

}  // namespace zz
