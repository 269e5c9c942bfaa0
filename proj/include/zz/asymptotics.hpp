#pragma once

// Large-n limit objects: asymptotic drifts and the fluid ODE, the OU limit of
// sub-sampled Zig-Zag, limiting control-variate rates, the BvM Gaussian and
// the xi-rescaling of paths.

#include <cstdint>
#include <vector>

#include "zz/core.hpp"
#include "zz/models.hpp"
#include "zz/rates.hpp"

namespace zz {

/// Denominators below this are treated as zero (the locus H).
inline constexpr double kZeroDenominator = 1e-8;

enum class DriftMethod { Auto, ClosedForm, Quadrature, MonteCarlo };

std::string to_string(DriftMethod method);
DriftMethod parse_drift_method(const std::string& name);

/// Limiting drift b_i(x) = -E_P s_i(x; Y) / (lambda_i(x, -1) + lambda_i(x, +1))
/// for one scheme, model and data law.
struct DriftFunction {
    SchemeKind scheme = SchemeKind::Canonical;
    ModelKind model = ModelKind::Gaussian;
    TruthSpec truth;
    std::size_t m = 1;
    /// Limit of the control-variate reference points; defaults to x0.
    Vector x_star;
    /// KL minimizer; filled from kl_minimizer() when left empty.
    Vector x0;
    DriftMethod method = DriftMethod::Auto;
    /// Monte Carlo sample count (groups of m draws).
    std::size_t mc_budget = 1'000'000;
    /// Fixed seed: every Monte Carlo evaluation reuses the same draws, so b is
    /// a deterministic function of x.
    std::uint64_t seed = 1;
    double mixed_radius = 1.605;
    /// Absolute tolerance for quadrature.
    double quad_tol = 1e-10;
};

struct DriftValue {
    Vector b;
    /// -E_P s(x; Y).
    Vector numerator;
    /// lambda_i(x, -1) + lambda_i(x, +1) per datum.
    Vector denominator;
    /// Zero for closed forms and quadrature. For control variates the error
    /// of the estimated constant E s(x*; Y) is not included.
    Vector std_error;
    DriftMethod method = DriftMethod::ClosedForm;
};

/// Fills x0 and x_star, validates the combination.
DriftFunction prepared(DriftFunction f);

/// Throws ZeroDenominator when x lies in H (denominator below 1e-8).
DriftValue asymptotic_drift(const DriftFunction& f, const Vector& x);

/// Same, but returns the raw value with b = 0 on H instead of throwing.
DriftValue drift_components(const DriftFunction& f, const Vector& x);

/// b^n(x) for a finite dataset: exact subset enumeration when feasible,
/// otherwise Monte Carlo with `mc_draws` estimates per direction. Coordinates
/// with zero rate sum get 0.
Vector finite_n_drift(const GradEstimatorScheme& scheme, const Vector& x, std::size_t mc_draws = 0,
                      std::uint64_t seed = 1);

enum class FluidStatus { Completed, HitH };

struct FluidPath {
    std::vector<double> t;
    std::vector<Vector> x;
    FluidStatus status = FluidStatus::Completed;
    /// Time at which H was reached (t_max when Completed).
    double t_stop = 0.0;
};

/// Classical RK4 with fixed step (default 1e-3 t_max). Halts when the drift
/// denominator falls below 1e-8, locating the crossing by bisection.
FluidPath solve_fluid_ode(const DriftFunction& f, const Vector& x_start, double t_max, double step = 0.0);

/// Position on the fluid path at time t (linear interpolation, held after t_stop).
Vector fluid_position(const FluidPath& path, double t);

void write_fluid_csv(std::ostream& out, const FluidPath& path);

// Ornstein-Uhlenbeck limit --------------------------------------------------

struct OUParams {
    /// Diagonal damping matrix.
    Matrix a;
    /// I(x0).
    Matrix info;
    /// a * info / 2.
    Matrix b;

    void validate() const;
};

/// A_ii = 2 / E|m^{-1} sum_j s_i(x0; Y_j)|, B = A I0 / 2.
OUParams ou_params(const DriftFunction& f);

/// Solution S of B S + S B^T = A.
Matrix ou_stationary_covariance(const OUParams& params);

enum class OUStart { Stationary, Zero };

struct OUPath {
    double dt = 0.0;
    /// One row per time point, one column per coordinate.
    Matrix xi;
};

/// 1-d: exact AR(1) transition. Multi-d: Euler-Maruyama with internal step
/// at most 1e-3 / ||B||, recorded every dt.
OUPath simulate_ou(const OUParams& params, OUStart start, double t_max, double dt, std::uint64_t seed,
                   bool noiseless = false);

void write_ou_csv(std::ostream& out, const OUPath& path);

// Limiting control-variate rates --------------------------------------------

struct RateEstimate {
    Vector rate;
    Vector std_error;
};

/// lambda_i(xi, v | xi*) = E (v_i m^{-1} sum_j (xi . grad s_i(x0; Y_j)
/// - xi* . (grad s_i(x0; Y_j) - E grad s_i)))_+ by Monte Carlo; with
/// `infinite_m` the form (v_i xi . E grad s_i(x0; Y))_+.
RateEstimate limiting_zzcv_rate(const Vector& xi, const Vector& v, const Vector& xi_star, const DriftFunction& f,
                                std::size_t mc_budget, std::uint64_t seed, bool infinite_m = false);

// Rescaling ----------------------------------------------------------------

enum class RescaleMode { SpaceOnly, SpaceAndTime };

struct RescaledPath {
    Skeleton skeleton;
    double n = 1.0;
    Vector x_hat;
    /// 1 (SpaceOnly) or sqrt(n) (SpaceAndTime).
    double time_scale = 1.0;
};

/// xi = sqrt(n) (x - x_hat), and t -> sqrt(n) t in SpaceAndTime mode.
RescaledPath rescale_trajectory(const Skeleton& skeleton, const Vector& x_hat, double n, RescaleMode mode);
Skeleton unrescale(const RescaledPath& path);

/// N(0, I0^{-1}).
class BvmGaussian {
public:
    explicit BvmGaussian(const Matrix& info);

    std::size_t dim() const { return static_cast<std::size_t>(cov_.rows()); }
    const Matrix& covariance() const { return cov_; }
    Vector sample(Rng& rng) const;
    double marginal_cdf(std::size_t i, double xi) const;
    double log_density(const Vector& xi) const;

private:
    Matrix cov_;
    Matrix chol_;
    Matrix precision_;
    double log_norm_ = 0.0;
};

}  // namespace zz
