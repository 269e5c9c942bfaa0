#include <cmath>

#include <fmt/format.h>

#include "zz/errors.hpp"
#include "zz/rates.hpp"

namespace zz {

namespace {

/// Affine bound a + b t, with the negative part of a handled by a zero
/// segment that ends where the line becomes positive.
BoundSegment affine_segment(std::size_t i, double a, double b, double horizon = kInf)
{
    if (a >= 0.0)
        return BoundSegment::affine(i, a, b, horizon);
    if (b <= 0.0)
        return BoundSegment::constant(i, 0.0, horizon);
    const double zero_until = -a / b;
    if (zero_until <= 1e-12)
        return BoundSegment::affine(i, 0.0, b, horizon);
    return BoundSegment::constant(i, 0.0, std::min(horizon, zero_until));
}

/// Pointwise minimum of two affine lines, valid up to their crossing.
BoundSegment min_affine(std::size_t i, double a1, double b1, double a2, double b2, double horizon = kInf)
{
    if (a1 > a2 || (a1 == a2 && b1 > b2)) {
        std::swap(a1, a2);
        std::swap(b1, b2);
    }
    // Line 1 is the lower one at t = 0.
    if (b1 > b2)
        horizon = std::min(horizon, (a2 - a1) / (b1 - b2));
    if (!(horizon > 0.0))
        return affine_segment(i, a2, b2);
    return affine_segment(i, a1, b1, horizon);
}

}  // namespace

BoundSegment GradEstimatorScheme::canonical_bound(const PhaseState& z, std::size_t i, const Vector& anchor,
                                                  const Vector& anchor_grad) const
{
    const auto k = static_cast<Eigen::Index>(i);
    const double vi = z.v[k];
    const double sqrt_d = std::sqrt(static_cast<double>(dim()));
    const double plip = model_.prior_lipschitz();
    const double prior = model_.prior_grad_coord(z.x, i);

    // Bounded models: |grad_i U| <= n c_i + |prior_i|.
    const bool has_c = c_.has_value();
    const double ka = has_c ? static_cast<double>(n()) * (*c_)[k] + std::abs(prior) : 0.0;
    const double kb = plip;

    if (lip_total_ && anchor.size() == z.x.size()) {
        const double l = (*lip_total_)[k] + plip;
        const double a = vi * anchor_grad[k] + l * (z.x - anchor).norm();
        const double b = l * sqrt_d;
        if (has_c)
            return min_affine(i, a, b, ka, kb);
        return affine_segment(i, a, b);
    }
    if (has_c)
        return affine_segment(i, ka, kb);
    throw NoBoundAvailable(model_.name() + " offers neither gradient bounds nor Lipschitz constants");
}

BoundSegment GradEstimatorScheme::ss_bound(const PhaseState& z, std::size_t i) const
{
    const auto k = static_cast<Eigen::Index>(i);
    const double vi = z.v[k];
    const double nn = static_cast<double>(n());
    const double plip = model_.prior_lipschitz();
    const double prior = model_.prior_grad_coord(z.x, i);
    if (c_)
        return affine_segment(i, nn * (*c_)[k] + std::abs(prior), plip);
    if (lip_ && c_plus_.size() == z.x.size()) {
        // v_i s^j_i(x) <= v_i s^j_i(x_ref) + L_i ||x - x_ref||, maximized over j.
        const double c = vi > 0.0 ? c_plus_[k] : c_minus_[k];
        const double a = nn * (c + (*lip_)[k] * (z.x - x_ref_).norm()) + vi * prior;
        const double b = nn * (*lip_)[k] * std::sqrt(static_cast<double>(dim())) + plip;
        return affine_segment(i, a, b);
    }
    throw NoBoundAvailable("sub-sampling needs bounded gradients or Lipschitz constants for " + model_.name());
}

BoundSegment GradEstimatorScheme::cv_bound(const PhaseState& z, std::size_t i) const
{
    const auto k = static_cast<Eigen::Index>(i);
    const double vi = z.v[k];
    const double nn = static_cast<double>(n());
    const double plip = model_.prior_lipschitz();
    const double prior = model_.prior_grad_coord(z.x, i);
    const double centre = vi * mean_grad_ref_[k];

    const bool has_c = c_.has_value();
    const double ka = has_c ? nn * (2.0 * (*c_)[k] + centre) + std::abs(prior) : 0.0;
    if (lip_) {
        const double a = nn * (centre + (*lip_)[k] * (z.x - x_ref_).norm()) + vi * prior;
        const double b = nn * (*lip_)[k] * std::sqrt(static_cast<double>(dim())) + plip;
        if (has_c)
            return min_affine(i, a, b, ka, plip);
        return affine_segment(i, a, b);
    }
    if (has_c)
        return affine_segment(i, ka, plip);
    throw NoBoundAvailable("control variates need bounded gradients or Lipschitz constants for " + model_.name());
}

BoundSegment GradEstimatorScheme::make_bound(const PhaseState& z, std::size_t i, const Vector& anchor,
                                             const Vector& anchor_grad) const
{
    switch (config_.kind) {
    case SchemeKind::Canonical:
        return canonical_bound(z, i, anchor, anchor_grad);
    case SchemeKind::Subsampling:
        return ss_bound(z, i);
    case SchemeKind::ControlVariate:
        return cv_bound(z, i);
    case SchemeKind::Mixed: {
        const double sqrt_d = std::sqrt(static_cast<double>(dim()));
        const double reach = (z.x.norm() - config_.mixed_radius) / sqrt_d;
        const double window = config_.mixed_horizon;
        if (reach >= window) {
            BoundSegment s = ss_bound(z, i);
            s.horizon = std::min(s.horizon, reach);
            return s;
        }
        if (-reach >= window) {
            BoundSegment s = cv_bound(z, i);
            s.horizon = std::min(s.horizon, -reach);
            return s;
        }
        // Close to the switching radius: dominate both branches for a while.
        const BoundSegment s1 = ss_bound(z, i);
        const BoundSegment s2 = cv_bound(z, i);
        return BoundSegment::affine(i, std::max(s1.intercept, s2.intercept), std::max(s1.slope, s2.slope),
                                    std::min({s1.horizon, s2.horizon, window}));
    }
    }
    throw std::logic_error("unknown scheme");
}

}  // namespace zz
