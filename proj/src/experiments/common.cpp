#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <boost/version.hpp>
#include <fmt/format.h>

#include "zz/errors.hpp"
#include "zz/experiments.hpp"

namespace zz {

// Sinks -----------------------------------------------------------------------

GridSink::GridSink(double dt, double t0) : dt_(dt), next_(t0)
{
    if (!(dt > 0.0))
        throw std::invalid_argument("grid step must be positive");
}

void GridSink::fill_until(double t)
{
    // Grid times are t0 + k dt, recomputed from k to avoid drift.
    const double t0 = next_ - static_cast<double>(samples_.size()) * dt_;
    while (next_ <= t) {
        samples_.push_back(x_last_ + v_last_ * (next_ - t_last_));
        next_ = t0 + static_cast<double>(samples_.size()) * dt_;
    }
}

void GridSink::start(double t, const PhaseState& z)
{
    samples_.clear();
    t_last_ = t;
    x_last_ = z.x;
    v_last_ = z.v;
    if (next_ < t)
        next_ = t;
    fill_until(t);
}

void GridSink::event(double t, const PhaseState& z, std::size_t)
{
    fill_until(t);
    t_last_ = t;
    x_last_ = z.x;
    v_last_ = z.v;
}

void GridSink::finish(double t, const PhaseState&)
{
    fill_until(t);
}

std::vector<double> GridSink::coordinate(std::size_t i, std::size_t skip) const
{
    std::vector<double> out;
    if (skip >= samples_.size())
        return out;
    out.reserve(samples_.size() - skip);
    for (std::size_t k = skip; k < samples_.size(); ++k)
        out.push_back(samples_[k][static_cast<Eigen::Index>(i)]);
    return out;
}

void TeeSink::start(double t, const PhaseState& z)
{
    for (auto* s : sinks_)
        s->start(t, z);
}

void TeeSink::event(double t, const PhaseState& z, std::size_t coord)
{
    for (auto* s : sinks_)
        s->event(t, z, coord);
}

void TeeSink::finish(double t, const PhaseState& z)
{
    for (auto* s : sinks_)
        s->finish(t, z);
}

// Path functionals --------------------------------------------------------------

Vector skeleton_position(const Skeleton& s, double t)
{
    if (s.empty())
        throw std::invalid_argument("empty skeleton");
    const auto& times = s.times();
    auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
    return s.position(k) + s.velocity(k) * (t - s.time(k));
}

double first_entry_time(const Skeleton& s, std::size_t i, double lo, double hi)
{
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double t0 = s.time(k);
        const double t1 = k + 1 < s.size() ? s.time(k + 1) : s.t_end();
        const double p = s.position(k)[ii];
        const double v = s.velocity(k)[ii];
        if (p >= lo && p <= hi)
            return t0;
        double dt = kInf;
        if (v > 0.0 && p < lo)
            dt = lo - p;
        else if (v < 0.0 && p > hi)
            dt = p - hi;
        if (t0 + dt <= t1)
            return t0 + dt;
    }
    return kInf;
}

double sup_error(const Skeleton& s, const FluidPath& fluid, double t_stop)
{
    if (s.empty() || fluid.t.empty())
        throw std::invalid_argument("sup error of an empty path");
    t_stop = std::min(t_stop, s.t_end());
    auto gap = [&](double t) { return (skeleton_position(s, t) - fluid_position(fluid, t)).cwiseAbs().maxCoeff(); };
    double worst = gap(t_stop);
    for (std::size_t k = 0; k < s.size() && s.time(k) <= t_stop; ++k)
        worst = std::max(worst, gap(s.time(k)));
    for (double t : fluid.t) {
        if (t > t_stop)
            break;
        worst = std::max(worst, gap(t));
    }
    return worst;
}

double sup_excursion(const Skeleton& s, const Vector& centre)
{
    if (s.empty())
        throw std::invalid_argument("excursion of an empty skeleton");
    double worst = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k)
        worst = std::max(worst, (s.position(k) - centre).cwiseAbs().maxCoeff());
    return std::max(worst, (s.end_state().x - centre).cwiseAbs().maxCoeff());
}

// Parallel execution --------------------------------------------------------------

std::size_t worker_count(std::size_t requested)
{
    std::size_t n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("ZZSCALE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(cap, &end, 10);
        if (end != cap && *end == '\0' && v > 0)
            n = std::min(n, static_cast<std::size_t>(v));
    }
    return n;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn)
{
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t k = 0; k < count; ++k)
            fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= count || failed.load())
                return;
            try {
                fn(k);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back(worker);
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

// Configuration ---------------------------------------------------------------------

void ExperimentConfig::validate() const
{
    if (n_grid.empty())
        throw ConfigError("n grid is empty", "experiment.n");
    for (std::size_t k = 0; k < n_grid.size(); ++k) {
        if (n_grid[k] < 2)
            throw ConfigError("every n must be at least 2", "experiment.n");
        if (k > 0 && n_grid[k] <= n_grid[k - 1])
            throw ConfigError("n grid must be strictly increasing", "experiment.n");
    }
    if (replicates < 1)
        throw ConfigError("replicates must be at least 1", "experiment.replicates");
    if (schemes.empty())
        throw ConfigError("no scheme given", "scheme.kind");
    if (truth.family == Family::Logistic) {
        if (model != ModelKind::Logistic)
            throw ConfigError("labeled data needs the logistic model", "model.kind");
    } else if (model == ModelKind::Logistic) {
        throw ConfigError("the logistic model needs logistic truth", "truth.family");
    }
    if (!(t_max > 0.0))
        throw ConfigError("t_max must be positive", "experiment.t_max");
    if (!(dt >= 0.0))
        throw ConfigError("dt must be non-negative", "experiment.dt");
    if (start.size() != 0 && static_cast<std::size_t>(start.size()) != dim())
        throw ConfigError("start has the wrong dimension", "experiment.start");
    if (x_star.size() != 0 && static_cast<std::size_t>(x_star.size()) != dim())
        throw ConfigError("x_star has the wrong dimension", "drift.xstar");
    if (!(burn_in >= 0.0 && burn_in < 1.0))
        throw ConfigError("burn-in fraction must lie in [0, 1)", "experiment.burn_in");
    if (!(epsilon > 0.0))
        throw ConfigError("epsilon must be positive", "experiment.epsilon");
    if (!(horizon_scale > 0.0))
        throw ConfigError("horizon scale must be positive", "experiment.horizon_scale");
    if (!(bin_width > 0.0) || !(bin_range > 0.0))
        throw ConfigError("bin width and range must be positive", "experiment.bin_width");
    if (!(grid_step > 0.0) || !(grid_lo < grid_hi))
        throw ConfigError("drift grid needs lo < hi and a positive step", "drift.grid");
    if (!(hit_radius > 0.0))
        throw ConfigError("hit radius must be positive", "experiment.hit_radius");
    if (!(mixed_radius >= 0.0))
        throw ConfigError("mixed radius must be non-negative", "scheme.mixed_radius");
    if (!(mixed_horizon > 0.0))
        throw ConfigError("mixed horizon must be positive", "scheme.mixed_horizon");
    for (double s : acf_lags)
        if (!(s > 0.0))
            throw ConfigError("autocorrelation lags must be positive", "experiment.acf_lags");
    if (rate_draws < 1)
        throw ConfigError("rate draws must be at least 1", "experiment.rate_draws");
}

std::size_t batch_size(const ExperimentConfig& config, std::size_t n)
{
    if (config.m > 0)
        return config.m;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::log(static_cast<double>(n)))));
}

std::uint64_t stream_seed(std::uint64_t root, std::uint64_t purpose, std::uint64_t a, std::uint64_t b)
{
    return derive_seed(derive_seed(derive_seed(root, purpose), a), b);
}

bool all_passed(const std::vector<Check>& checks)
{
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::unique_ptr<Instance> make_instance(const ExperimentConfig& config, SchemeKind kind, std::size_t n,
                                        std::uint64_t data_seed)
{
    auto inst = std::make_unique<Instance>();
    inst->data = generate_data(config.truth, n, data_seed);
    inst->model = make_model(config.model, config.dim());
    SchemeConfig sc;
    sc.kind = kind;
    sc.m = batch_size(config, n);
    sc.reference = config.reference;
    sc.mixed_radius = config.mixed_radius;
    sc.mixed_horizon = config.mixed_horizon;
    inst->scheme = std::make_unique<GradEstimatorScheme>(inst->data, *inst->model, sc);
    inst->x_hat = fit_mle(inst->data, *inst->model);
    return inst;
}

Check ledger_check(const GradEstimatorScheme& scheme, const CostLedger& ledger, const std::string& label)
{
    Check c;
    c.name = label;
    if (ledger.bound_violations != 0) {
        c.passed = false;
        c.detail = fmt::format("{} bound violations", ledger.bound_violations);
        return c;
    }
    std::uint64_t per = 0;
    switch (scheme.kind()) {
    case SchemeKind::Canonical: per = scheme.n(); break;
    case SchemeKind::Subsampling: per = scheme.m(); break;
    case SchemeKind::ControlVariate: per = 2 * scheme.m(); break;
    case SchemeKind::Mixed: return c;
    }
    const std::uint64_t expect = ledger.proposals * per + ledger.setup_evals;
    if (ledger.grad_term_evals != expect) {
        c.passed = false;
        c.detail = fmt::format("grad_term_evals {} != {} x {} + {}", ledger.grad_term_evals, ledger.proposals, per,
                               ledger.setup_evals);
    }
    return c;
}

// Output ------------------------------------------------------------------------------

std::string csv_num(double x)
{
    return fmt::format("{:.17g}", x);
}

void write_manifest(const std::string& path, const Manifest& manifest)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    for (const auto& [k, v] : manifest)
        out << k << '=' << v << '\n';
}

Manifest build_info()
{
    Manifest m;
    m.emplace_back("version", "0.1.0");
#if defined(__clang__)
    m.emplace_back("compiler", fmt::format("clang {}", __clang_version__));
#elif defined(__GNUC__)
    m.emplace_back("compiler", fmt::format("gcc {}", __VERSION__));
#endif
    m.emplace_back("eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION));
    m.emplace_back("boost", fmt::format("{}.{}.{}", BOOST_VERSION / 100000, BOOST_VERSION / 100 % 1000,
                                        BOOST_VERSION % 100));
    m.emplace_back("fmt", fmt::format("{}", FMT_VERSION));
    return m;
}

std::string hash_text(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace zz
