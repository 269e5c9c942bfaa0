#include <numeric>

#include "zz/rates.hpp"

namespace zz {

SchemeRate::SchemeRate(const GradEstimatorScheme& scheme) : scheme_(scheme)
{
    if (scheme_.kind() != SchemeKind::Canonical) {
        indices_.resize(scheme_.n());
        std::iota(indices_.begin(), indices_.end(), 0u);
    } else if (scheme_.setup_evals() > 0) {
        // The reference caches hold the full gradient at x_ref.
        anchor_ = scheme_.x_ref();
        anchor_grad_ = scheme_.cached_mean_grad() * static_cast<double>(scheme_.n());
        for (std::size_t i = 0; i < scheme_.dim(); ++i)
            anchor_grad_[static_cast<Eigen::Index>(i)] += scheme_.model().prior_grad_coord(anchor_, i);
    }
}

BoundSegment SchemeRate::bound(const PhaseState& z, std::size_t i)
{
    return scheme_.make_bound(z, i, anchor_, anchor_grad_);
}

double SchemeRate::realize(const PhaseState& z, std::size_t i, Rng& rng, CostLedger& ledger)
{
    const double vi = z.v[static_cast<Eigen::Index>(i)];
    if (scheme_.kind() == SchemeKind::Canonical) {
        const Vector g = potential_grad(scheme_.data(), scheme_.model(), z.x, &ledger);
        if (anchor_.size() > 0) {
            anchor_ = z.x;
            anchor_grad_ = g;
        }
        return std::max(0.0, vi * g[static_cast<Eigen::Index>(i)]);
    }
    return std::max(0.0, vi * scheme_.estimate_coord(z.x, i, rng, indices_, &ledger));
}

}  // namespace zz
