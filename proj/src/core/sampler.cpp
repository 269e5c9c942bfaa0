#include <chrono>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "zz/core.hpp"
#include "zz/errors.hpp"

namespace zz {

void BoundSegment::validate() const
{
    if (!(intercept >= 0.0) || !std::isfinite(intercept))
        throw std::invalid_argument(fmt::format("bound intercept {} for coordinate {} is not a finite non-negative number", intercept, coord));
    if (!(horizon > 0.0))
        throw std::invalid_argument(fmt::format("bound horizon {} is not positive", horizon));
    if (!std::isfinite(slope))
        throw std::invalid_argument("bound slope is not finite");
    if (slope < 0.0) {
        const double end = intercept + slope * horizon;
        if (end < -1e-12 * std::max(1.0, intercept))
            throw std::invalid_argument(fmt::format("bound becomes negative ({}) within its horizon", end));
    }
}

double BoundSegment::first_arrival(double e) const
{
    double tau = kInf;
    if (slope == 0.0) {
        if (intercept > 0.0)
            tau = e / intercept;
    } else {
        // Solve a t + b t^2 / 2 = e in the form that is stable for either sign of b.
        const double disc = intercept * intercept + 2.0 * slope * e;
        if (disc >= 0.0) {
            const double denom = intercept + std::sqrt(disc);
            if (denom > 0.0)
                tau = 2.0 * e / denom;
        }
    }
    return tau <= horizon ? tau : kInf;
}

ZigZagSampler::ZigZagSampler(RateProcess& rates, PhaseState z0, std::uint64_t seed, SimOptions options)
    : rates_(rates), z_(std::move(z0)), rng_(seed), options_(options)
{
    z_.validate();
    if (z_.dim() != rates_.dim())
        throw std::invalid_argument(fmt::format("state dimension {} does not match rate dimension {}",
                                                z_.dim(), rates_.dim()));
    ledger_.setup_evals = rates_.setup_evals();
    ledger_.grad_term_evals = ledger_.setup_evals;
    bounds_.resize(z_.dim());
}

void ZigZagSampler::move(double dt)
{
    z_.x += z_.v * dt;
    t_ += dt;
}

StopReason ZigZagSampler::advance(double t_until, EventSink& sink, std::uint64_t max_events,
                                  std::uint64_t max_proposals)
{
    const auto wall_start = std::chrono::steady_clock::now();
    const std::size_t d = z_.dim();
    StopReason reason = StopReason::Horizon;

    while (t_ < t_until) {
        if (ledger_.accepted >= max_events) {
            reason = StopReason::EventCap;
            break;
        }
        if (ledger_.proposals >= max_proposals) {
            reason = StopReason::ProposalCap;
            break;
        }

        // Every bound is recomputed at each restart, so fresh exponential
        // draws are valid by the memoryless property.
        double best = kInf;
        std::size_t best_i = d;
        double horizon = t_until - t_;
        for (std::size_t i = 0; i < d; ++i) {
            bounds_[i] = rates_.bound(z_, i);
            bounds_[i].validate();
            horizon = std::min(horizon, bounds_[i].horizon);
            const double tau = bounds_[i].first_arrival(rng_.exponential());
            if (tau < best) {
                best = tau;
                best_i = i;
            }
        }

        if (best_i == d || best > horizon) {
            if (t_ + horizon >= t_until) {
                move(t_until - t_);
                t_ = t_until;
                break;
            }
            move(horizon);
            ++ledger_.bound_refreshes;
            continue;
        }

        move(best);
        ++ledger_.proposals;
        const double bound_value = bounds_[best_i].value_at(best);
        const double rate = rates_.realize(z_, best_i, rng_, ledger_);
        if (rate > bound_value * (1.0 + options_.violation_rel_tol) + 1e-12) {
            if (!options_.clamp_violations)
                throw BoundViolation(t_, z_.x, z_.v, best_i, rate, bound_value);
            ++ledger_.bound_violations;
        }
        if (rng_.uniform() * bound_value < rate) {
            const auto i = static_cast<Eigen::Index>(best_i);
            z_.v[i] = -z_.v[i];
            ++ledger_.accepted;
            // Two proposals closer than one ulp of t would collapse onto a
            // single time stamp; keep event times strictly increasing.
            if (t_ <= last_event_time_)
                t_ = std::nextafter(last_event_time_, kInf);
            last_event_time_ = t_;
            sink.event(t_, z_, best_i);
        }
    }

    ledger_.wall_time += std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return reason;
}

StopReason simulate_into(RateProcess& rates, const PhaseState& z0, const SimBudget& budget,
                         std::uint64_t seed, EventSink& sink, CostLedger* ledger, SimOptions options)
{
    budget.validate();
    ZigZagSampler sampler(rates, z0, seed, options);
    sink.start(0.0, sampler.state());
    const StopReason stop = sampler.advance(budget.t_max, sink, budget.max_events, budget.max_proposals);
    sink.finish(sampler.time(), sampler.state());
    if (ledger)
        *ledger = sampler.ledger();
    return stop;
}

SimResult simulate(RateProcess& rates, const PhaseState& z0, const SimBudget& budget,
                   std::uint64_t seed, SimOptions options)
{
    SkeletonRecorder recorder;
    SimResult result;
    result.stop = simulate_into(rates, z0, budget, seed, recorder, &result.ledger, options);
    result.skeleton = recorder.release();
    return result;
}

}  // namespace zz
