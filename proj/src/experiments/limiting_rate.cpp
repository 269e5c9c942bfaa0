#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "detail.hpp"
#include "zz/errors.hpp"
#include "zz/experiments.hpp"

namespace zz {

namespace {

/// Integral of (a + b s)_+ over [s0, s1].
double positive_part_integral(double a, double b, double s0, double s1)
{
    if (b == 0.0)
        return std::max(a, 0.0) * (s1 - s0);
    const double root = -a / b;
    double lo = s0;
    double hi = s1;
    if (b > 0.0)
        lo = std::max(lo, root);
    else
        hi = std::min(hi, root);
    if (!(hi > lo))
        return 0.0;
    return a * (hi - lo) + 0.5 * b * (hi * hi - lo * lo);
}

/// The limiting rate of coordinate i at (xi, v) is the average over draws k of
/// (v_i (alpha_ki + beta_k,i . xi))_+, with beta_k the mean Hessian of one
/// sub-sample and alpha_ki = -(beta_k,i - I_i) . xi*.
struct RateDraws {
    std::vector<Matrix> beta;
    std::vector<Vector> alpha;
};

RateDraws make_draws(const ExperimentConfig& config, const Vector& x0, const Matrix& info, const Vector& xi_star,
                     std::size_t m, std::uint64_t seed)
{
    const std::size_t d = config.dim();
    auto model = make_model(config.model, d);
    const bool labeled = config.truth.observation_kind() == ObservationKind::Labeled;
    std::vector<double> w(labeled ? d : 0);
    Rng rng(seed);
    RateDraws out;
    for (std::size_t k = 0; k < config.rate_draws; ++k) {
        Matrix g = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < m; ++j) {
            const double y = config.truth.sample(rng, labeled ? w.data() : nullptr);
            g += model->hess_term(x0, {y, labeled ? w.data() : nullptr});
        }
        g /= static_cast<double>(m);
        out.beta.push_back(g);
        out.alpha.push_back(-(g - info) * xi_star);
        // A data-independent Hessian gives identical draws.
        if (k == 1 && out.beta[0] == out.beta[1]) {
            out.beta.pop_back();
            out.alpha.pop_back();
            break;
        }
    }
    return out;
}

class IntensitySink : public EventSink {
public:
    IntensitySink(const RateDraws& draws, const Vector& x_hat, double n, double width, double range)
        : draws_(draws), x_hat_(x_hat), root_(std::sqrt(n)), width_(width), range_(range),
          cells_(static_cast<std::size_t>(std::ceil(2.0 * range / width - 1e-9)))
    {
        const std::size_t d = static_cast<std::size_t>(x_hat.size());
        bins_.resize(d * 2 * cells_);
        for (std::size_t i = 0; i < d; ++i)
            for (int s = 0; s < 2; ++s)
                for (std::size_t c = 0; c < cells_; ++c) {
                    IntensityBin& b = bin(i, s == 0 ? -1.0 : 1.0, c);
                    b.coord = i;
                    b.v = s == 0 ? -1.0 : 1.0;
                    b.lo = -range + static_cast<double>(c) * width;
                    b.hi = std::min(range, b.lo + width);
                }
    }

    void start(double t, const PhaseState& z) override { remember(t, z); }

    void event(double t, const PhaseState& z, std::size_t coord) override
    {
        segment(t);
        const auto i = static_cast<Eigen::Index>(coord);
        const double xi = root_ * (z.x[i] - x_hat_[i]);
        const long c = cell(xi, -z.v[i]);
        if (c >= 0 && c < static_cast<long>(cells_))
            ++bin(coord, -z.v[i], static_cast<std::size_t>(c)).events;
        remember(t, z);
    }

    void finish(double t, const PhaseState& z) override
    {
        segment(t);
        remember(t, z);
    }

    const std::vector<IntensityBin>& bins() const { return bins_; }

private:
    IntensityBin& bin(std::size_t i, double v, std::size_t c)
    {
        return bins_[(i * 2 + (v < 0.0 ? 0 : 1)) * cells_ + c];
    }

    /// Cell index along direction v: -1 below the range, cells_ above it.
    /// Cells are [lo, hi) when moving up and (lo, hi] when moving down, so a
    /// point on an edge belongs to the cell being entered.
    long cell(double xi, double v) const
    {
        const auto top = static_cast<long>(cells_);
        const double u = (xi + range_) / width_;
        if (v > 0.0) {
            if (xi < -range_)
                return -1;
            if (xi >= range_)
                return top;
            return std::min(top - 1, static_cast<long>(std::floor(u)));
        }
        if (xi <= -range_)
            return -1;
        if (xi > range_)
            return top;
        return std::clamp(static_cast<long>(std::ceil(u)) - 1, 0L, top - 1);
    }

    double edge(long j) const { return std::min(range_, -range_ + static_cast<double>(j) * width_); }

    void remember(double t, const PhaseState& z)
    {
        t_ = t;
        xi_ = root_ * (z.x - x_hat_);
        v_ = z.v;
    }

    /// Accumulates time and expected events from the last state to time t,
    /// in rescaled time s = sqrt(n) t.
    void segment(double t)
    {
        const double len = root_ * (t - t_);
        if (!(len > 0.0))
            return;
        const Eigen::Index d = xi_.size();
        for (Eigen::Index i = 0; i < d; ++i) {
            const double vi = v_[i];
            // Walk the cells crossed by xi_i(s) = xi_i + v_i s.
            long c = cell(xi_[i], vi);
            double s0 = 0.0;
            while (s0 < len) {
                double s1 = len;
                if (vi > 0.0 && c < static_cast<long>(cells_))
                    s1 = std::min(len, edge(c + 1) - xi_[i]);
                else if (vi < 0.0 && c >= 0)
                    s1 = std::min(len, xi_[i] - edge(c));
                s1 = std::max(s1, s0);
                if (c >= 0 && c < static_cast<long>(cells_) && s1 > s0) {
                    IntensityBin& b = bin(static_cast<std::size_t>(i), vi, static_cast<std::size_t>(c));
                    b.time += s1 - s0;
                    double sum = 0.0;
                    for (std::size_t k = 0; k < draws_.beta.size(); ++k) {
                        const double a = vi * (draws_.alpha[k][i] + draws_.beta[k].row(i).dot(xi_));
                        const double slope = vi * draws_.beta[k].row(i).dot(v_);
                        sum += positive_part_integral(a, slope, s0, s1);
                    }
                    b.expected += sum / static_cast<double>(draws_.beta.size());
                }
                c += vi > 0.0 ? 1 : -1;
                s0 = s1;
            }
        }
    }

    const RateDraws& draws_;
    Vector x_hat_;
    double root_;
    double width_;
    double range_;
    std::size_t cells_;
    std::vector<IntensityBin> bins_;
    double t_ = 0.0;
    Vector xi_;
    Vector v_;
};

}  // namespace

LimitingRateStudy limiting_rate_check(const ExperimentConfig& config)
{
    config.validate();
    const std::size_t d = config.dim();
    const Vector x0 = detail::limit_point(config);
    const Matrix info = detail::limit_information(config, x0);
    const std::size_t N = config.n_grid.size();
    const std::size_t R = config.replicates;

    std::vector<std::vector<IntensityBin>> bins(N * R);
    std::vector<Check> checks(N * R);
    parallel_for(N * R, worker_count(config.threads), [&](std::size_t task) {
        const std::size_t ni = task / R;
        const std::size_t r = task % R;
        const std::size_t n = config.n_grid[ni];
        const double root = std::sqrt(static_cast<double>(n));
        auto inst = make_instance(config, SchemeKind::ControlVariate, n, stream_seed(config.seed, detail::kData, ni, r));
        const Vector xi_star = root * (inst->scheme->x_ref() - inst->x_hat);
        const RateDraws draws = make_draws(config, x0, info, xi_star, inst->scheme->m(),
                                           stream_seed(config.seed, detail::kRateDraws, ni, r));

        SchemeRate rate(*inst->scheme);
        const PhaseState z0{inst->x_hat,
                            detail::random_velocity(d, stream_seed(config.seed, detail::kVelocity, ni, r))};
        IntensitySink sink(draws, inst->x_hat, static_cast<double>(n), config.bin_width, config.bin_range);
        CostLedger ledger;
        SimBudget budget;
        budget.t_max = config.t_max / root;
        simulate_into(rate, z0, budget, stream_seed(config.seed, detail::kSampler, ni, r), sink, &ledger);
        bins[task] = sink.bins();
        checks[task] = ledger_check(*inst->scheme, ledger, fmt::format("limiting-rate ledger n={} rep={}", n, r));
    });

    LimitingRateStudy study;
    for (std::size_t ni = 0; ni < N; ++ni) {
        LimitingRateResult res;
        res.n = config.n_grid[ni];
        res.m = batch_size(config, res.n);
        res.bins = bins[ni * R];
        for (std::size_t r = 1; r < R; ++r)
            for (std::size_t b = 0; b < res.bins.size(); ++b) {
                res.bins[b].events += bins[ni * R + r][b].events;
                res.bins[b].time += bins[ni * R + r][b].time;
                res.bins[b].expected += bins[ni * R + r][b].expected;
            }
        for (auto& b : res.bins) {
            b.z = b.expected > 0.0 ? (static_cast<double>(b.events) - b.expected) / std::sqrt(b.expected)
                                   : (b.events > 0 ? kInf : 0.0);
            if (b.events < config.min_events)
                continue;
            ++res.bins_used;
            res.max_abs_z = std::max(res.max_abs_z, std::abs(b.z));
            res.max_rel_dev = std::max(res.max_rel_dev, std::abs(static_cast<double>(b.events) - b.expected) /
                                                            std::max(b.expected, 1e-300));
        }
        if (res.bins_used == 0)
            throw InsufficientEvents(fmt::format("n={}: no bin has {} events; raise experiment.t_max or lower experiment.min_events", res.n, config.min_events));
        study.results.push_back(std::move(res));
    }
    study.checks = std::move(checks);
    return study;
}

void write_limiting_rate_outputs(const std::string& dir, const LimitingRateStudy& study)
{
    auto out = detail::open_output(dir, "limiting_rate.csv");
    out << "n,m,coord,v,xi_lo,xi_hi,events,time,expected,empirical,predicted,z\n";
    for (const auto& res : study.results)
        for (const auto& b : res.bins)
            out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", res.n, res.m, b.coord + 1, csv_num(b.v),
                               csv_num(b.lo), csv_num(b.hi), b.events, csv_num(b.time), csv_num(b.expected),
                               csv_num(b.empirical()), csv_num(b.predicted()), csv_num(b.z));
}

}  // namespace zz
