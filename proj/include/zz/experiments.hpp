#pragma once

// Simulation experiments compared against the large-n limits, plus the
// statistics they need.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zz/asymptotics.hpp"
#include "zz/core.hpp"
#include "zz/models.hpp"
#include "zz/rates.hpp"

namespace zz {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Statistics ----------------------------------------------------------------

struct IactResult {
    /// Initial positive sequence estimate, in time units.
    double iact = 0.0;
    /// Batch-means estimate with batch length floor(sqrt(N)).
    double batch_means = 0.0;
    /// True when the two estimates agree within 20%.
    bool consistent = false;
};

/// Integrated autocorrelation time of an evenly spaced series, times dt.
/// Throws TooFewSamples below 1000 samples.
IactResult iact_estimate(const std::vector<double>& samples, double dt);

/// Normalized autocovariance at each lag 0..max_lag (FFT based).
std::vector<double> autocorrelation(const std::vector<double>& samples, std::size_t max_lag);

/// sup_y |F_N(y) - cdf(y)|.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    /// 1 for an exact fit, including a constant response.
    double r2 = 0.0;
    std::size_t points = 0;
};

/// Ordinary least squares of y on x. Needs at least two distinct x values.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct MeanSe {
    double mean = 0.0;
    /// Zero for a single value.
    double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& values);
double median(std::vector<double> values);

// Path utilities --------------------------------------------------------------

/// Records coordinate values of a running path on the grid t0, t0 + dt, ...
class GridSink : public EventSink {
public:
    GridSink(double dt, double t0 = 0.0);

    void start(double t, const PhaseState& z) override;
    void event(double t, const PhaseState& z, std::size_t coord) override;
    void finish(double t, const PhaseState& z) override;

    double dt() const { return dt_; }
    /// Row k holds the position at t0 + k dt.
    const std::vector<Vector>& samples() const { return samples_; }
    std::vector<double> coordinate(std::size_t i, std::size_t skip = 0) const;

private:
    void fill_until(double t);

    double dt_;
    double next_;
    double t_last_ = 0.0;
    Vector x_last_;
    Vector v_last_;
    std::vector<Vector> samples_;
};

/// Forwards every call to several sinks.
class TeeSink : public EventSink {
public:
    explicit TeeSink(std::vector<EventSink*> sinks) : sinks_(std::move(sinks)) {}
    void start(double t, const PhaseState& z) override;
    void event(double t, const PhaseState& z, std::size_t coord) override;
    void finish(double t, const PhaseState& z) override;

private:
    std::vector<EventSink*> sinks_;
};

/// Position of a skeleton at time t (linear between events).
Vector skeleton_position(const Skeleton& s, double t);

/// First time coordinate i of the path lies in [lo, hi]; kInf if never.
double first_entry_time(const Skeleton& s, std::size_t i, double lo, double hi);

/// sup over t in [0, t_stop] of |X_t - Y_t| (max norm), where X is the
/// skeleton and Y the fluid path; both are piecewise linear.
double sup_error(const Skeleton& s, const FluidPath& fluid, double t_stop);

/// sup over the path of max_i |X_t,i - centre_i|.
double sup_excursion(const Skeleton& s, const Vector& centre);

/// Worker count: `requested` (0 = hardware), capped by ZZSCALE_THREADS.
std::size_t worker_count(std::size_t requested);

/// Runs fn(0..count-1) on up to `threads` workers. The first exception thrown
/// by any task is rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

// Configuration ---------------------------------------------------------------

struct ExperimentConfig {
    ModelKind model = ModelKind::Gaussian;
    TruthSpec truth;
    std::vector<SchemeKind> schemes{SchemeKind::Canonical};
    /// Strictly increasing.
    std::vector<std::size_t> n_grid{1000};
    /// Sub-sample size; 0 means ceil(log n).
    std::size_t m = 1;
    ReferenceStrategy reference;
    /// Mixed scheme radius; 0 means the b_ss/b_cv crossing.
    double mixed_radius = 1.605;
    double mixed_horizon = 0.1;
    std::size_t replicates = 1;
    std::uint64_t seed = 1;

    double t_max = 10.0;
    /// Discretization step; 0 picks one from the posterior time scale.
    double dt = 0.0;
    /// Start point for transient and mixed runs; empty means x0 + offset.
    Vector start;
    double start_offset = 3.0;
    /// Transient sup error stops this long before the fluid path hits H.
    double stop_margin = 0.0;
    /// Level whose first passage time is reported by transient and mixed runs.
    std::optional<double> level;

    double burn_in = 0.1;
    /// Stationary runs are extended until this many thinned samples exist
    /// (at least 200).
    std::size_t target_samples = 0;
    std::vector<double> acf_lags{0.25, 0.5, 1.0, 2.0};

    double epsilon = 0.5;

    /// Scaling runs last at least horizon_scale natural time units (1 for
    /// sub-sampling, n^{-1/2} otherwise) and min_switches accepted switches.
    double horizon_scale = 400.0;
    std::uint64_t min_switches = 10'000;

    double bin_width = 1.0;
    double bin_range = 3.0;
    std::uint64_t min_events = 500;
    std::size_t rate_draws = 256;

    /// Drift table grid and reference limit; empty x_star means x0.
    double grid_lo = -5.0;
    double grid_hi = 5.0;
    double grid_step = 0.01;
    Vector x_star;
    DriftMethod drift_method = DriftMethod::Auto;
    std::size_t drift_mc_budget = 1'000'000;

    double hit_radius = 0.1;

    std::size_t threads = 0;
    std::string output_dir = ".";

    std::size_t dim() const { return truth.dim(); }
    /// Throws ConfigError naming the offending key.
    void validate() const;
};

/// Drift function of a scheme at data size n. The control-variate limit is
/// x_star, else the fixed reference point when one is configured, else x0.
DriftFunction experiment_drift(const ExperimentConfig& config, SchemeKind kind, std::size_t n);

/// Sub-sample size used at data size n.
std::size_t batch_size(const ExperimentConfig& config, std::size_t n);

/// Seed for one (purpose, a, b) stream of a root seed.
std::uint64_t stream_seed(std::uint64_t root, std::uint64_t purpose, std::uint64_t a = 0, std::uint64_t b = 0);

/// In-run consistency assertion.
struct Check {
    std::string name;
    bool passed = true;
    std::string detail;
};

bool all_passed(const std::vector<Check>& checks);

/// Data, model and scheme for one run. Not movable: the scheme refers to the
/// other two members.
struct Instance {
    Dataset data;
    std::unique_ptr<Model> model;
    std::unique_ptr<GradEstimatorScheme> scheme;
    Vector x_hat;

    Instance() = default;
    Instance(const Instance&) = delete;
    Instance& operator=(const Instance&) = delete;
};

std::unique_ptr<Instance> make_instance(const ExperimentConfig& config, SchemeKind kind, std::size_t n,
                                        std::uint64_t data_seed);

/// Verifies zero bound violations and, for fixed-charge schemes, that
/// grad_term_evals equals proposals times the charge plus setup.
Check ledger_check(const GradEstimatorScheme& scheme, const CostLedger& ledger, const std::string& label);

// Transient phase -------------------------------------------------------------

struct TransientRow {
    SchemeKind scheme = SchemeKind::Canonical;
    std::size_t n = 0;
    std::size_t replicate = 0;
    double sup_error = 0.0;
    /// End of the window over which sup_error is taken.
    double t_window = 0.0;
    FluidStatus ode_status = FluidStatus::Completed;
    double ode_t_stop = 0.0;
    double level_time = kNaN;
    double ode_level_time = kNaN;
};

struct TransientTrace {
    SchemeKind scheme = SchemeKind::Canonical;
    std::size_t n = 0;
    Skeleton path;
    FluidPath ode;
};

struct TransientResult {
    std::vector<TransientRow> rows;
    /// Replicate 0 of every (scheme, n).
    std::vector<TransientTrace> traces;
    std::vector<Check> checks;
};

TransientResult transient_experiment(const ExperimentConfig& config);
void write_transient_outputs(const std::string& dir, const TransientResult& result);

// Stationary phase ------------------------------------------------------------

struct StationaryRow {
    SchemeKind scheme = SchemeKind::Canonical;
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t replicate = 0;
    double t_total = 0.0;
    double dt = 0.0;
    double iact = 0.0;
    bool iact_consistent = false;
    double spacing = 0.0;
    std::size_t samples = 0;
    double ks = 0.0;
    double variance_xi = 0.0;
    std::vector<double> acf_empirical;
    /// Only filled for sub-sampling, from the OU limit.
    std::vector<double> acf_predicted;
};

struct StationaryResult {
    std::vector<StationaryRow> rows;
    std::vector<double> acf_lags;
    /// Thinned xi samples of replicate 0 per (scheme, n).
    std::vector<std::pair<StationaryRow, std::vector<Vector>>> samples;
    std::vector<Check> checks;
};

/// Throws InsufficientSamples when fewer than 200 thinned samples remain.
StationaryResult stationary_distribution_check(const ExperimentConfig& config);
void write_stationary_outputs(const std::string& dir, const StationaryResult& result);

// Confinement -----------------------------------------------------------------

struct ConfinementRow {
    std::size_t n = 0;
    double epsilon = 0.0;
    double t = 0.0;
    std::size_t replicates = 0;
    std::size_t exceedances = 0;
    double fraction = 0.0;
};

struct ConfinementResult {
    std::vector<ConfinementRow> rows;
    std::vector<Check> checks;
};

/// Canonical process on a 1-d log-concave model started at the MLE; t_max is
/// the horizon t.
ConfinementResult confinement_check(const ExperimentConfig& config);
void write_confinement_outputs(const std::string& dir, const ConfinementResult& result);

// Scaling ---------------------------------------------------------------------

struct ScalingRow {
    SchemeKind scheme = SchemeKind::Canonical;
    std::size_t n = 0;
    std::size_t replicates = 0;
    double t_run = 0.0;
    MeanSe proposals_per_unit_time;
    MeanSe accepted_per_unit_time;
    MeanSe grad_evals_per_proposal;
    MeanSe iact_x1;
    MeanSe ks_to_bvm;
};

struct ScalingSlope {
    SchemeKind scheme = SchemeKind::Canonical;
    std::string quantity;
    LineFit fit;
};

struct ScalingResult {
    std::vector<ScalingRow> rows;
    std::vector<ScalingSlope> slopes;
    std::vector<Check> checks;
};

/// Log-log slopes for proposals, accepted switches, grad evals per proposal
/// and iact against n.
ScalingResult scaling_study(const ExperimentConfig& config);
void write_scaling_outputs(const std::string& dir, const ScalingResult& result);
const ScalingSlope& find_slope(const ScalingResult& result, SchemeKind scheme, const std::string& quantity);

// Limiting control-variate rate -------------------------------------------------

struct IntensityBin {
    std::size_t coord = 0;
    double v = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::uint64_t events = 0;
    double time = 0.0;
    /// Integral of the limiting rate over the time spent in the bin.
    double expected = 0.0;
    double z = 0.0;

    double empirical() const { return time > 0.0 ? static_cast<double>(events) / time : kNaN; }
    double predicted() const { return time > 0.0 ? expected / time : kNaN; }
};

struct LimitingRateResult {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<IntensityBin> bins;
    std::size_t bins_used = 0;
    double max_abs_z = 0.0;
    double max_rel_dev = 0.0;
};

struct LimitingRateStudy {
    std::vector<LimitingRateResult> results;
    std::vector<Check> checks;
};

/// ZZ-CV runs rescaled in space and time; event counts per (coordinate,
/// xi-cell, pre-switch velocity) against the limiting rate integrated along
/// the observed path. Throws InsufficientEvents when no bin has min_events.
LimitingRateStudy limiting_rate_check(const ExperimentConfig& config);
void write_limiting_rate_outputs(const std::string& dir, const LimitingRateStudy& study);

// Drift table and mixed scheme --------------------------------------------------

struct DriftRow {
    double x = 0.0;
    double b_can = kNaN;
    double b_ss = kNaN;
    double b_cv = kNaN;
};

struct DriftTable {
    ModelKind model = ModelKind::Gaussian;
    std::size_t m = 1;
    double x_star = 0.0;
    std::vector<DriftRow> rows;
    /// First x > x0 where |b_ss| and |b_cv| cross.
    std::optional<double> crossing;
};

DriftTable drift_table(const ExperimentConfig& config);
void write_drift_outputs(const std::string& dir, const DriftTable& table);

/// Bisection for |b_ss(x)| = |b_cv(x)| on [lo, hi]; nullopt without a sign
/// change at the ends.
std::optional<double> drift_crossing(const DriftFunction& base, double lo, double hi, double tol = 1e-9);

/// Crossing to the right of x0, scanned with step 0.25 up to x0 + 50.
std::optional<double> find_drift_crossing(const DriftFunction& base);

struct HittingRow {
    SchemeKind scheme = SchemeKind::Canonical;
    std::size_t replicate = 0;
    double hit_time = kInf;
    double level_time = kInf;
};

struct MixedResult {
    double radius = 0.0;
    std::vector<HittingRow> rows;
    /// Scheme with median hit and level times.
    std::vector<std::pair<SchemeKind, std::pair<double, double>>> medians;
    std::vector<std::pair<SchemeKind, Skeleton>> trajectories;
    std::vector<Check> checks;

    double median_hit(SchemeKind kind) const;
    double median_level(SchemeKind kind) const;
};

/// Hitting times of [x0 - r, x0 + r] from a common start, one dataset per
/// replicate shared by all schemes.
MixedResult mixed_comparison(const ExperimentConfig& config);
void write_mixed_outputs(const std::string& dir, const MixedResult& result);

// Output ------------------------------------------------------------------------

/// Full-precision float for CSV output.
std::string csv_num(double x);

/// Ordered key=value lines.
using Manifest = std::vector<std::pair<std::string, std::string>>;

void write_manifest(const std::string& path, const Manifest& manifest);
/// Library version, compiler and dependency versions.
Manifest build_info();
/// FNV-1a 64-bit hash as 16 hex digits.
std::string hash_text(const std::string& text);

}  // namespace zz
