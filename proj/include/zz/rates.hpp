#pragma once

// Gradient estimators for exact sub-sampling and the matching rate processes.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zz/core.hpp"
#include "zz/models.hpp"

namespace zz {

enum class SchemeKind { Canonical, Subsampling, ControlVariate, Mixed };

std::string to_string(SchemeKind kind);
/// Accepts canonical|can|zz, ss, cv, mixed.
SchemeKind parse_scheme_kind(const std::string& name);

struct ReferenceStrategy {
    enum class Kind { Mle, PerturbedMle, Fixed } kind = Kind::Mle;
    /// Offset delta (PerturbedMle: x_mle + delta / sqrt(n)) or fixed point.
    Vector value;

    static ReferenceStrategy mle() { return {}; }
    static ReferenceStrategy perturbed(Vector delta) { return {Kind::PerturbedMle, std::move(delta)}; }
    static ReferenceStrategy fixed(Vector x) { return {Kind::Fixed, std::move(x)}; }

    /// `mle`, `perturbed:<d1,...>`, `fixed:<x1,...>`.
    static ReferenceStrategy parse(const std::string& text);
    std::string describe() const;
};

struct SchemeConfig {
    SchemeKind kind = SchemeKind::Canonical;
    std::size_t m = 1;
    ReferenceStrategy reference;
    double mixed_radius = 1.605;
    /// Bound validity window near the mixed switching radius.
    double mixed_horizon = 0.1;
};

/// Returns the reference point; fit errors propagate.
Vector choose_reference(const Dataset& data, const Model& model, const ReferenceStrategy& strategy);

struct RateIdentity {
    double residual = 0.0;
    double scale = 0.0;
};

/// Unbiased estimator of grad U_n built from per-datum terms E^j. Holds
/// references to the dataset and model, which must outlive it. Immutable after
/// construction, so one scheme can serve concurrent runs.
class GradEstimatorScheme {
public:
    GradEstimatorScheme(const Dataset& data, const Model& model, SchemeConfig config);
    GradEstimatorScheme(Dataset&&, const Model&, SchemeConfig) = delete;

    SchemeKind kind() const { return config_.kind; }
    const SchemeConfig& config() const { return config_; }
    std::size_t m() const { return m_; }
    std::size_t n() const { return data_.size(); }
    std::size_t dim() const { return model_.dim(); }
    const Dataset& data() const { return data_; }
    const Model& model() const { return model_; }

    const Vector& x_ref() const { return x_ref_; }
    /// n^{-1} sum_k s^k(x_ref).
    const Vector& cached_mean_grad() const { return mean_grad_ref_; }
    /// Evaluations spent on reference caches at construction.
    std::uint64_t setup_evals() const { return setup_evals_; }

    /// Mixed scheme: true where the plain sub-sampling branch applies.
    bool ss_branch(const Vector& x) const;

    /// E^j_i(x), prior share included. Adds fresh evaluations to `evals`.
    double per_datum_term(std::size_t j, const Vector& x, std::size_t i, std::uint64_t* evals = nullptr) const;
    Vector per_datum_terms(std::size_t j, const Vector& x, std::uint64_t* evals = nullptr) const;

    /// Evaluations charged per estimate at x: n, m, 2m, or the branch value.
    std::uint64_t charge(const Vector& x) const;

    /// (n/m) sum_{j in S} E^j_i(x) for a uniform subset S of size m drawn with
    /// `indices` (a permutation of 0..n-1 that is reshuffled in place).
    double estimate_coord(const Vector& x, std::size_t i, Rng& rng, std::vector<std::uint32_t>& indices,
                          CostLedger* ledger = nullptr) const;
    /// Vector estimate from a single subset.
    Vector draw_estimate(const Vector& x, Rng& rng, CostLedger* ledger = nullptr) const;

    /// Subset-averaged rate by full enumeration; throws EnumerationTooLarge
    /// when binom(n, m) > max_subsets.
    double effective_rate_exact(const Vector& x, double v_i, std::size_t i,
                                double max_subsets = 1e6) const;
    /// Subset average of the estimator itself (equals grad U_n).
    Vector exact_mean_estimate(const Vector& x, double max_subsets = 1e6) const;
    /// max_i |lambda_i(x, +) - lambda_i(x, -) - grad_i U_n(x)| with the scale
    /// n max_j |E^j_i(x)| against which the residual is judged.
    RateIdentity rate_identity_check(const Vector& x, double max_subsets = 1e6) const;

    /// Thinning bound for coordinate i along z.x + z.v t. `anchor`/`anchor_grad`
    /// is the last point where the full gradient was computed (canonical only).
    BoundSegment make_bound(const PhaseState& z, std::size_t i, const Vector& anchor,
                            const Vector& anchor_grad) const;

private:
    double ss_term(std::size_t j, const Vector& x, std::size_t i, std::uint64_t* evals) const;
    double cv_term(std::size_t j, const Vector& x, std::size_t i, std::uint64_t* evals) const;
    BoundSegment canonical_bound(const PhaseState& z, std::size_t i, const Vector& anchor,
                                 const Vector& anchor_grad) const;
    BoundSegment ss_bound(const PhaseState& z, std::size_t i) const;
    BoundSegment cv_bound(const PhaseState& z, std::size_t i) const;

    const Dataset& data_;
    const Model& model_;
    SchemeConfig config_;
    std::size_t m_;
    Vector x_ref_;
    Vector mean_grad_ref_;
    /// Per-datum s^j(x_ref), row-major n x d (CV and Mixed).
    std::vector<double> s_ref_;
    /// max_j s^j_i(x_ref) and max_j -s^j_i(x_ref), for unbounded SS bounds.
    Vector c_plus_;
    Vector c_minus_;
    std::optional<Vector> c_;
    std::optional<Vector> lip_;
    std::optional<Vector> lip_total_;
    std::uint64_t setup_evals_ = 0;
};

/// RateProcess driving the thinning loop with a scheme's randomized estimate.
/// One instance per simulation run.
class SchemeRate : public RateProcess {
public:
    explicit SchemeRate(const GradEstimatorScheme& scheme);

    std::size_t dim() const override { return scheme_.dim(); }
    BoundSegment bound(const PhaseState& z, std::size_t i) override;
    double realize(const PhaseState& z, std::size_t i, Rng& rng, CostLedger& ledger) override;
    std::uint64_t setup_evals() const override { return scheme_.setup_evals(); }

private:
    const GradEstimatorScheme& scheme_;
    std::vector<std::uint32_t> indices_;
    Vector anchor_;
    Vector anchor_grad_;
};

/// Canonical rate (v_i grad_i U_n(x))_+ computed from the full data.
double canonical_rate(const Dataset& data, const Model& model, const Vector& x, double v_i, std::size_t i);

}  // namespace zz
