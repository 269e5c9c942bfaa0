#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "detail.hpp"
#include "zz/errors.hpp"
#include "zz/experiments.hpp"

namespace zz {

namespace {

bool subsampled(SchemeKind kind)
{
    return kind == SchemeKind::Subsampling || kind == SchemeKind::Mixed;
}

double auto_step(SchemeKind kind, double scale, std::size_t n)
{
    // Sub-sampled paths mix on an O(1) clock, the others on O(n^{-1/2}).
    return subsampled(kind) ? 0.05 * scale : 0.1 * scale / std::sqrt(static_cast<double>(n));
}

}  // namespace

StationaryResult stationary_distribution_check(const ExperimentConfig& config)
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
    const std::size_t threads = worker_count(config.threads);

    StationaryResult out;
    out.acf_lags = config.acf_lags;
    out.rows.resize(S * N * R);
    std::vector<std::vector<Vector>> kept(S * N);
    std::vector<Check> checks(S * N * R);

    parallel_for(S * N * R, threads, [&](std::size_t task) {
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
        const double dt = config.dt > 0.0 ? config.dt : auto_step(kind, scale, n);
        GridSink grid(dt);
        ZigZagSampler sampler(rate, z0, stream_seed(config.seed, detail::kSampler, ni * S + s, r));
        grid.start(0.0, z0);

        StationaryRow& row = out.rows[task];
        row.scheme = kind;
        row.n = n;
        row.m = kind == SchemeKind::Canonical ? n : inst->scheme->m();
        row.replicate = r;
        row.dt = dt;

        std::vector<double> xi;
        std::size_t skip = 0;
        std::size_t stride = 1;
        double horizon = config.t_max;
        for (int round = 0;; ++round) {
            sampler.advance(horizon, grid);
            grid.finish(sampler.time(), sampler.state());
            skip = static_cast<std::size_t>(std::ceil(config.burn_in * static_cast<double>(grid.samples().size())));
            xi = grid.coordinate(0, skip);
            for (double& v : xi)
                v = root * (v - inst->x_hat[0]);
            if (xi.size() < 1000 && round < 4) {
                horizon = std::max(horizon * 1.1, 1100.0 * dt / (1.0 - config.burn_in));
                continue;
            }
            if (xi.size() < 1000)
                throw InsufficientSamples(fmt::format("{} n={} rep={}: {} grid points after burn-in, the iact "
                                                      "estimate needs 1000",
                                                      to_string(kind), n, r, xi.size()));
            const IactResult iact = iact_estimate(xi, dt);
            row.iact = iact.iact;
            row.iact_consistent = iact.consistent;
            stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3.0 * iact.iact / dt)));
            const std::size_t have = (xi.size() + stride - 1) / stride;
            const std::size_t want = std::max<std::size_t>(config.target_samples, 200);
            if (have >= want || round == 4)
                break;
            const double need = static_cast<double>(want * stride) * dt / (1.0 - config.burn_in);
            horizon = std::max(horizon * 1.1, 1.05 * need);
        }
        row.t_total = sampler.time();
        row.spacing = static_cast<double>(stride) * dt;

        std::vector<double> thinned;
        std::vector<Vector> thinned_full;
        for (std::size_t k = 0; k < xi.size(); k += stride) {
            thinned.push_back(xi[k]);
            if (r == 0)
                thinned_full.push_back(root * (grid.samples()[skip + k] - inst->x_hat));
        }
        row.samples = thinned.size();
        if (row.samples < 200)
            throw InsufficientSamples(fmt::format("{} n={}: {} thinned samples, need 200", to_string(kind), n,
                                                  row.samples));
        row.ks = ks_statistic(thinned, [&](double v) { return bvm.marginal_cdf(0, v); });

        double mean = 0.0;
        for (double v : xi)
            mean += v;
        mean /= static_cast<double>(xi.size());
        double var = 0.0;
        for (double v : xi)
            var += (v - mean) * (v - mean);
        row.variance_xi = var / static_cast<double>(xi.size() - 1);

        std::size_t max_lag = 0;
        for (double lag : config.acf_lags)
            max_lag = std::max(max_lag, static_cast<std::size_t>(std::llround(lag / dt)));
        const std::vector<double> acf = autocorrelation(xi, max_lag);
        for (double lag : config.acf_lags)
            row.acf_empirical.push_back(acf[std::min(acf.size() - 1, static_cast<std::size_t>(std::llround(lag / dt)))]);
        if (kind == SchemeKind::Subsampling) {
            const OUParams ou = ou_params(experiment_drift(config, kind, n));
            const Matrix cov = ou_stationary_covariance(ou);
            for (double lag : config.acf_lags) {
                const Matrix decay = (-lag * ou.b).exp() * cov;
                row.acf_predicted.push_back(decay(0, 0) / cov(0, 0));
            }
        }
        checks[task] = ledger_check(*inst->scheme, sampler.ledger(),
                                    fmt::format("stationary ledger {} n={} rep={}", to_string(kind), n, r));
        if (r == 0)
            kept[s * N + ni] = std::move(thinned_full);
    });

    for (std::size_t k = 0; k < S * N; ++k)
        out.samples.emplace_back(out.rows[k * R], std::move(kept[k]));
    out.checks = std::move(checks);
    return out;
}

void write_stationary_outputs(const std::string& dir, const StationaryResult& result)
{
    auto summary = detail::open_output(dir, "stationary_summary.csv");
    summary << "scheme,n,m,replicate,t_total,dt,iact,iact_consistent,spacing,samples,ks,variance_xi\n";
    auto acf = detail::open_output(dir, "stationary_acf.csv");
    acf << "scheme,n,replicate,lag,empirical,predicted\n";
    for (const auto& r : result.rows) {
        summary << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(r.scheme), r.n, r.m, r.replicate,
                               csv_num(r.t_total), csv_num(r.dt), csv_num(r.iact), r.iact_consistent ? 1 : 0,
                               csv_num(r.spacing), r.samples, csv_num(r.ks), csv_num(r.variance_xi));
        for (std::size_t k = 0; k < result.acf_lags.size() && k < r.acf_empirical.size(); ++k)
            acf << fmt::format("{},{},{},{},{},{}\n", to_string(r.scheme), r.n, r.replicate,
                               csv_num(result.acf_lags[k]), csv_num(r.acf_empirical[k]),
                               csv_num(k < r.acf_predicted.size() ? r.acf_predicted[k] : kNaN));
    }
    const std::size_t d = result.samples.empty() || result.samples.front().second.empty()
                              ? 1
                              : static_cast<std::size_t>(result.samples.front().second.front().size());
    auto samples = detail::open_output(dir, "stationary_samples.csv");
    samples << "scheme,n" << detail::columns("xi", d) << '\n';
    for (const auto& [r, xs] : result.samples)
        for (const auto& x : xs)
            samples << to_string(r.scheme) << ',' << r.n << detail::row(x) << '\n';
}

ConfinementResult confinement_check(const ExperimentConfig& config)
{
    config.validate();
    if (config.dim() != 1 || !(config.model == ModelKind::Gaussian || config.model == ModelKind::Laplace))
        throw std::invalid_argument("confinement check needs a 1-d log-concave model (gaussian or laplace)");
    const SchemeKind kind = config.schemes.front();
    const std::size_t N = config.n_grid.size();
    const std::size_t R = config.replicates;

    std::vector<char> exceeded(N * R, 0);
    std::vector<Check> checks(N * R);
    parallel_for(N * R, worker_count(config.threads), [&](std::size_t task) {
        const std::size_t ni = task / R;
        const std::size_t r = task % R;
        const std::size_t n = config.n_grid[ni];
        auto inst = make_instance(config, kind, n, stream_seed(config.seed, detail::kData, ni, r));
        SchemeRate rate(*inst->scheme);
        const PhaseState z0{inst->x_hat, detail::random_velocity(1, stream_seed(config.seed, detail::kVelocity, ni, r))};
        SimBudget budget;
        budget.t_max = config.t_max;
        const SimResult sim = simulate(rate, z0, budget, stream_seed(config.seed, detail::kSampler, ni, r));
        exceeded[task] = sup_excursion(sim.skeleton, inst->x_hat) > config.epsilon ? 1 : 0;
        checks[task] =
            ledger_check(*inst->scheme, sim.ledger, fmt::format("confinement ledger n={} rep={}", n, r));
    });

    ConfinementResult out;
    for (std::size_t ni = 0; ni < N; ++ni) {
        ConfinementRow row;
        row.n = config.n_grid[ni];
        row.epsilon = config.epsilon;
        row.t = config.t_max;
        row.replicates = R;
        for (std::size_t r = 0; r < R; ++r)
            row.exceedances += static_cast<std::size_t>(exceeded[ni * R + r]);
        row.fraction = static_cast<double>(row.exceedances) / static_cast<double>(R);
        out.rows.push_back(row);
    }
    out.checks = std::move(checks);
    return out;
}

void write_confinement_outputs(const std::string& dir, const ConfinementResult& result)
{
    auto out = detail::open_output(dir, "confinement.csv");
    out << "n,epsilon,t,replicates,exceedances,fraction\n";
    for (const auto& r : result.rows)
        out << fmt::format("{},{},{},{},{},{}\n", r.n, csv_num(r.epsilon), csv_num(r.t), r.replicates,
                           r.exceedances, csv_num(r.fraction));
}

}  // namespace zz
