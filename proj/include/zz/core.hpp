#pragma once

// Zig-Zag process simulation by Poisson thinning, plus skeleton utilities.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "zz/rng.hpp"

namespace zz {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Zig-Zag state (x, v). Velocities are stored as doubles equal to -1 or +1.
struct PhaseState {
    Vector x;
    Vector v;

    std::size_t dim() const { return static_cast<std::size_t>(x.size()); }

    /// Throws std::invalid_argument when v has an entry other than +-1, when
    /// x has a non-finite entry, or when the sizes differ.
    void validate() const;
};

/// v with coordinate i negated (0-based). Throws std::out_of_range.
Vector flip(const Vector& v, std::size_t i);

/// Ordered switch events of a piecewise-linear Zig-Zag path. The first event
/// is the start state; `t_end` may lie beyond the last event.
class Skeleton {
public:
    Skeleton() = default;
    explicit Skeleton(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return times_.size(); }
    bool empty() const { return times_.empty(); }

    double time(std::size_t k) const { return times_[k]; }
    const std::vector<double>& times() const { return times_; }
    Eigen::Map<const Vector> position(std::size_t k) const
    {
        return Eigen::Map<const Vector>(positions_.data() + k * dim_, static_cast<Eigen::Index>(dim_));
    }
    Eigen::Map<const Vector> velocity(std::size_t k) const
    {
        return Eigen::Map<const Vector>(velocities_.data() + k * dim_, static_cast<Eigen::Index>(dim_));
    }
    double t_end() const { return t_end_; }

    /// Appends an event; times must be strictly increasing.
    void push_event(double t, const Vector& x, const Vector& v);
    void set_end(double t_end);

    PhaseState start_state() const;
    /// State at t_end (position extrapolated from the last event).
    PhaseState end_state() const;

    /// Checks ordering, unit speed (tolerance rel_tol * t) and single flips.
    /// Throws std::logic_error describing the first violation.
    void validate(double rel_tol = 1e-12) const;

    bool operator==(const Skeleton&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> times_;
    std::vector<double> positions_;
    std::vector<double> velocities_;
    double t_end_ = 0.0;
};

struct SimBudget {
    double t_max = 1.0;
    std::uint64_t max_events = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t max_proposals = std::numeric_limits<std::uint64_t>::max();

    void validate() const;
};

struct CostLedger {
    std::uint64_t proposals = 0;
    std::uint64_t accepted = 0;
    /// Per-datum gradient term evaluations, including `setup_evals`.
    std::uint64_t grad_term_evals = 0;
    /// Evaluations spent before the first proposal (reference-point caches).
    std::uint64_t setup_evals = 0;
    std::uint64_t bound_refreshes = 0;
    /// Only non-zero in clamp mode.
    std::uint64_t bound_violations = 0;
    double wall_time = 0.0;
};

/// Dominating intensity for one coordinate over local time [0, horizon):
/// `intercept + slope * t`. A constant bound has slope 0.
struct BoundSegment {
    std::size_t coord = 0;
    double intercept = 0.0;
    double slope = 0.0;
    double horizon = kInf;

    static BoundSegment constant(std::size_t i, double c, double horizon = kInf)
    {
        return {i, c, 0.0, horizon};
    }
    static BoundSegment affine(std::size_t i, double a, double b, double horizon = kInf)
    {
        return {i, a, b, horizon};
    }

    bool is_constant() const { return slope == 0.0; }
    double value_at(double t) const { return intercept + slope * t; }

    /// Throws std::invalid_argument unless intercept >= 0, horizon > 0 and the
    /// bound stays non-negative on [0, horizon].
    void validate() const;

    /// First arrival time of a Poisson process with this intensity, by
    /// inversion of the integrated rate against a standard exponential draw.
    /// Returns kInf when no arrival occurs before the horizon.
    double first_arrival(double exp_draw) const;
};

/// Switching-rate process driven by the thinning loop.
class RateProcess {
public:
    virtual ~RateProcess() = default;

    virtual std::size_t dim() const = 0;

    /// Bound for coordinate i, valid along x + v t for t within the horizon.
    virtual BoundSegment bound(const PhaseState& z, std::size_t i) = 0;

    /// Draw the (possibly randomized) realized rate for coordinate i at z.
    virtual double realize(const PhaseState& z, std::size_t i, Rng& rng, CostLedger& ledger) = 0;

    /// Gradient evaluations already spent building this process.
    virtual std::uint64_t setup_evals() const { return 0; }
};

/// Rate given explicitly as a function of (x, v) with a user bound. Useful for
/// toy targets and tests.
class ExplicitRate : public RateProcess {
public:
    using RateFn = std::function<double(const PhaseState&, std::size_t)>;
    using BoundFn = std::function<BoundSegment(const PhaseState&, std::size_t)>;

    ExplicitRate(std::size_t dim, RateFn rate, BoundFn bound)
        : dim_(dim), rate_(std::move(rate)), bound_(std::move(bound))
    {
    }

    std::size_t dim() const override { return dim_; }
    BoundSegment bound(const PhaseState& z, std::size_t i) override { return bound_(z, i); }
    double realize(const PhaseState& z, std::size_t i, Rng&, CostLedger&) override { return rate_(z, i); }

private:
    std::size_t dim_;
    RateFn rate_;
    BoundFn bound_;
};

/// Receives the path as it is generated.
class EventSink {
public:
    virtual ~EventSink() = default;
    virtual void start(double t, const PhaseState& z) = 0;
    /// Called after coordinate `coord` flipped at time t; z is the new state.
    virtual void event(double t, const PhaseState& z, std::size_t coord) = 0;
    virtual void finish(double t, const PhaseState& z) = 0;
};

class SkeletonRecorder : public EventSink {
public:
    void start(double t, const PhaseState& z) override;
    void event(double t, const PhaseState& z, std::size_t coord) override;
    void finish(double t, const PhaseState& z) override;

    Skeleton& skeleton() { return skeleton_; }
    Skeleton release() { return std::move(skeleton_); }

private:
    Skeleton skeleton_;
};

enum class StopReason { Horizon, EventCap, ProposalCap };

struct SimOptions {
    /// Replace fatal BoundViolation by clamping the acceptance probability to 1
    /// and counting the violation. Breaks exactness; exploratory runs only.
    bool clamp_violations = false;
    /// Relative slack tolerated before a realized rate counts as a violation.
    double violation_rel_tol = 1e-9;
};

/// Resumable thinning loop. Holds the current state, time, RNG and ledger.
class ZigZagSampler {
public:
    ZigZagSampler(RateProcess& rates, PhaseState z0, std::uint64_t seed, SimOptions options = {});

    /// Run until absolute time `t_until` or until a cap is hit. Events go to
    /// `sink`; start()/finish() are not called here.
    StopReason advance(double t_until, EventSink& sink,
                       std::uint64_t max_events = std::numeric_limits<std::uint64_t>::max(),
                       std::uint64_t max_proposals = std::numeric_limits<std::uint64_t>::max());

    const PhaseState& state() const { return z_; }
    double time() const { return t_; }
    const CostLedger& ledger() const { return ledger_; }

private:
    void move(double dt);

    RateProcess& rates_;
    PhaseState z_;
    double t_ = 0.0;
    double last_event_time_ = 0.0;
    Rng rng_;
    SimOptions options_;
    CostLedger ledger_;
    std::vector<BoundSegment> bounds_;
};

struct SimResult {
    Skeleton skeleton;
    CostLedger ledger;
    StopReason stop = StopReason::Horizon;
};

/// Simulate from z0 until the first budget limit. Same seed, same output.
SimResult simulate(RateProcess& rates, const PhaseState& z0, const SimBudget& budget,
                   std::uint64_t seed, SimOptions options = {});

/// Run with a caller-provided sink; start()/finish() are called.
StopReason simulate_into(RateProcess& rates, const PhaseState& z0, const SimBudget& budget,
                         std::uint64_t seed, EventSink& sink, CostLedger* ledger = nullptr,
                         SimOptions options = {});

// Trajectory queries --------------------------------------------------------

/// Position at time t (left-closed at event times). Throws std::out_of_range.
Vector position_at(const Skeleton& skeleton, double t);

/// Positions at 0, dt, 2dt, ... <= t_end.
std::vector<Vector> discretize(const Skeleton& skeleton, double dt);

/// Time average of f over [t0, t1]. Integrates each linear piece by adaptive
/// Simpson (exact for polynomials up to degree 3) to relative tolerance 1e-8.
double path_average(const Skeleton& skeleton, const std::function<double(const Vector&)>& f,
                    double t0, double t1);

// Serialization --------------------------------------------------------------

/// CSV `t,x1..xd,v1..vd`, one row per event plus a final row at t_end.
void write_skeleton_csv(std::ostream& out, const Skeleton& skeleton);
Skeleton read_skeleton_csv(std::istream& in);

}  // namespace zz
