#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "zz/errors.hpp"
#include "zz/rates.hpp"

namespace zz {

std::string to_string(SchemeKind kind)
{
    switch (kind) {
    case SchemeKind::Canonical: return "canonical";
    case SchemeKind::Subsampling: return "ss";
    case SchemeKind::ControlVariate: return "cv";
    case SchemeKind::Mixed: return "mixed";
    }
    return "unknown";
}

SchemeKind parse_scheme_kind(const std::string& name)
{
    if (name == "canonical" || name == "can" || name == "zz")
        return SchemeKind::Canonical;
    if (name == "ss")
        return SchemeKind::Subsampling;
    if (name == "cv")
        return SchemeKind::ControlVariate;
    if (name == "mixed")
        return SchemeKind::Mixed;
    throw std::invalid_argument("unknown scheme '" + name + "'");
}

namespace {

Vector parse_vector(const std::string& text)
{
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ','))
        vals.push_back(std::stod(cell));
    if (vals.empty())
        throw std::invalid_argument("empty vector '" + text + "'");
    return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::string format_vector(const Vector& v)
{
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        s += fmt::format("{}{:.17g}", i ? "," : "", v[i]);
    return s;
}

}  // namespace

ReferenceStrategy ReferenceStrategy::parse(const std::string& text)
{
    if (text == "mle")
        return mle();
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    if (colon == std::string::npos)
        throw std::invalid_argument("reference '" + text + "' needs a value");
    const Vector value = parse_vector(text.substr(colon + 1));
    if (head == "perturbed")
        return perturbed(value);
    if (head == "fixed")
        return fixed(value);
    throw std::invalid_argument("unknown reference strategy '" + head + "'");
}

std::string ReferenceStrategy::describe() const
{
    switch (kind) {
    case Kind::Mle: return "mle";
    case Kind::PerturbedMle: return "perturbed:" + format_vector(value);
    case Kind::Fixed: return "fixed:" + format_vector(value);
    }
    return {};
}

Vector choose_reference(const Dataset& data, const Model& model, const ReferenceStrategy& strategy)
{
    const auto d = static_cast<Eigen::Index>(model.dim());
    switch (strategy.kind) {
    case ReferenceStrategy::Kind::Mle:
        return fit_mle(data, model);
    case ReferenceStrategy::Kind::PerturbedMle:
        if (strategy.value.size() != d)
            throw std::invalid_argument("perturbation has the wrong dimension");
        return fit_mle(data, model) + strategy.value / std::sqrt(static_cast<double>(data.size()));
    case ReferenceStrategy::Kind::Fixed:
        if (strategy.value.size() != d)
            throw std::invalid_argument("fixed reference has the wrong dimension");
        return strategy.value;
    }
    throw std::logic_error("unknown reference strategy");
}

GradEstimatorScheme::GradEstimatorScheme(const Dataset& data, const Model& model, SchemeConfig config)
    : data_(data), model_(model), config_(std::move(config))
{
    data_.validate();
    if (data_.dim != model_.dim())
        throw std::invalid_argument("dataset and model dimensions differ");
    const std::size_t n = data_.size();
    const auto d = static_cast<Eigen::Index>(model_.dim());
    m_ = config_.kind == SchemeKind::Canonical ? n : config_.m;
    if (m_ < 1 || m_ > n)
        throw std::invalid_argument(fmt::format("batch size m = {} outside [1, {}]", m_, n));
    if (config_.kind == SchemeKind::Mixed && !(config_.mixed_radius > 0.0))
        throw std::invalid_argument("mixed radius must be positive");
    if (!(config_.mixed_horizon > 0.0))
        throw std::invalid_argument("mixed horizon must be positive");

    c_ = model_.grad_bound(data_);
    lip_ = model_.lipschitz(data_);
    lip_total_ = model_.lipschitz_total(data_);

    x_ref_ = choose_reference(data_, model_, config_.reference);
    mean_grad_ref_ = Vector::Zero(d);

    const bool need_terms = config_.kind == SchemeKind::ControlVariate || config_.kind == SchemeKind::Mixed;
    const bool need_ss_caches =
        !c_ && (config_.kind == SchemeKind::Subsampling || config_.kind == SchemeKind::Mixed);
    const bool need_anchor = config_.kind == SchemeKind::Canonical && lip_total_.has_value();

    if (need_terms || need_ss_caches || need_anchor) {
        Vector s(d);
        if (need_terms)
            s_ref_.resize(n * static_cast<std::size_t>(d));
        c_plus_ = Vector::Constant(d, -kInf);
        c_minus_ = Vector::Constant(d, -kInf);
        for (std::size_t j = 0; j < n; ++j) {
            model_.grad_term(x_ref_, data_.obs(j), s);
            mean_grad_ref_ += s;
            if (need_terms)
                std::copy(s.data(), s.data() + d, s_ref_.begin() + static_cast<std::ptrdiff_t>(j * static_cast<std::size_t>(d)));
            c_plus_ = c_plus_.cwiseMax(s);
            c_minus_ = c_minus_.cwiseMax(-s);
        }
        mean_grad_ref_ /= static_cast<double>(n);
        setup_evals_ = n;
    }
}

bool GradEstimatorScheme::ss_branch(const Vector& x) const
{
    return x.norm() > config_.mixed_radius;
}

double GradEstimatorScheme::ss_term(std::size_t j, const Vector& x, std::size_t i, std::uint64_t* evals) const
{
    if (evals)
        *evals += 1;
    return model_.grad_term_coord(x, data_.obs(j), i);
}

double GradEstimatorScheme::cv_term(std::size_t j, const Vector& x, std::size_t i, std::uint64_t* evals) const
{
    // s^j(x_ref) comes from the cache but is still charged: the accounting
    // counts what a streaming implementation would evaluate.
    if (evals)
        *evals += 2;
    const double s_ref = s_ref_[j * model_.dim() + i];
    return model_.grad_term_coord(x, data_.obs(j), i) - s_ref + mean_grad_ref_[static_cast<Eigen::Index>(i)];
}

double GradEstimatorScheme::per_datum_term(std::size_t j, const Vector& x, std::size_t i,
                                           std::uint64_t* evals) const
{
    if (j >= n())
        throw std::out_of_range("datum index out of range");
    const double prior = model_.prior_grad_coord(x, i) / static_cast<double>(n());
    switch (config_.kind) {
    case SchemeKind::Canonical:
    case SchemeKind::Subsampling:
        return ss_term(j, x, i, evals) + prior;
    case SchemeKind::ControlVariate:
        return cv_term(j, x, i, evals) + prior;
    case SchemeKind::Mixed:
        return (ss_branch(x) ? ss_term(j, x, i, evals) : cv_term(j, x, i, evals)) + prior;
    }
    throw std::logic_error("unknown scheme");
}

Vector GradEstimatorScheme::per_datum_terms(std::size_t j, const Vector& x, std::uint64_t* evals) const
{
    Vector e(static_cast<Eigen::Index>(dim()));
    std::uint64_t local = 0;
    for (std::size_t i = 0; i < dim(); ++i)
        e[static_cast<Eigen::Index>(i)] = per_datum_term(j, x, i, &local);
    // One vector evaluation of s, not one per coordinate.
    if (evals)
        *evals += local / dim();
    return e;
}

std::uint64_t GradEstimatorScheme::charge(const Vector& x) const
{
    switch (config_.kind) {
    case SchemeKind::Canonical: return n();
    case SchemeKind::Subsampling: return m_;
    case SchemeKind::ControlVariate: return 2 * m_;
    case SchemeKind::Mixed: return ss_branch(x) ? m_ : 2 * m_;
    }
    return 0;
}

double GradEstimatorScheme::estimate_coord(const Vector& x, std::size_t i, Rng& rng,
                                           std::vector<std::uint32_t>& idx, CostLedger* ledger) const
{
    const std::size_t nn = n();
    // Partial Fisher-Yates: the first m entries form a uniform subset.
    double sum = 0.0;
    const bool ss = config_.kind == SchemeKind::Subsampling ||
                    (config_.kind == SchemeKind::Mixed && ss_branch(x));
    for (std::size_t k = 0; k < m_; ++k) {
        const std::size_t r = k + static_cast<std::size_t>(rng.index(nn - k));
        std::swap(idx[k], idx[r]);
        const std::size_t j = idx[k];
        sum += ss ? ss_term(j, x, i, nullptr) : cv_term(j, x, i, nullptr);
    }
    if (ledger)
        ledger->grad_term_evals += charge(x);
    return static_cast<double>(nn) / static_cast<double>(m_) * sum + model_.prior_grad_coord(x, i);
}

Vector GradEstimatorScheme::draw_estimate(const Vector& x, Rng& rng, CostLedger* ledger) const
{
    const std::size_t nn = n();
    std::vector<std::uint32_t> idx(nn);
    std::iota(idx.begin(), idx.end(), 0u);
    const auto d = static_cast<Eigen::Index>(dim());
    Vector sum = Vector::Zero(d);
    for (std::size_t k = 0; k < m_; ++k) {
        const std::size_t r = k + static_cast<std::size_t>(rng.index(nn - k));
        std::swap(idx[k], idx[r]);
        sum += per_datum_terms(idx[k], x);
    }
    if (ledger)
        ledger->grad_term_evals += charge(x);
    return static_cast<double>(nn) / static_cast<double>(m_) * sum;
}

namespace {

double log_binomial(std::size_t n, std::size_t k)
{
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

/// Calls f(sum of terms over the subset) for every m-subset of the terms.
template <class F>
void for_each_subset_sum(const std::vector<double>& terms, std::size_t m, F&& f)
{
    const std::size_t n = terms.size();
    std::vector<std::size_t> c(m);
    std::iota(c.begin(), c.end(), 0);
    while (true) {
        double s = 0.0;
        for (std::size_t k : c)
            s += terms[k];
        f(s);
        std::size_t k = m;
        while (k > 0 && c[k - 1] == n - m + k - 1)
            --k;
        if (k == 0)
            return;
        ++c[k - 1];
        for (std::size_t r = k; r < m; ++r)
            c[r] = c[r - 1] + 1;
    }
}

void check_enumerable(std::size_t n, std::size_t m, double max_subsets)
{
    if (log_binomial(n, m) > std::log(max_subsets) + 1e-9)
        throw EnumerationTooLarge(fmt::format("binom({}, {}) exceeds {}", n, m, max_subsets));
}

}  // namespace

double GradEstimatorScheme::effective_rate_exact(const Vector& x, double v_i, std::size_t i,
                                                 double max_subsets) const
{
    check_enumerable(n(), m_, max_subsets);
    std::vector<double> terms(n());
    for (std::size_t j = 0; j < n(); ++j)
        terms[j] = per_datum_term(j, x, i);
    double total = 0.0;
    std::size_t count = 0;
    for_each_subset_sum(terms, m_, [&](double s) {
        total += std::max(0.0, v_i * s);
        ++count;
    });
    return static_cast<double>(n()) / static_cast<double>(m_) * total / static_cast<double>(count);
}

Vector GradEstimatorScheme::exact_mean_estimate(const Vector& x, double max_subsets) const
{
    check_enumerable(n(), m_, max_subsets);
    const auto d = static_cast<Eigen::Index>(dim());
    Vector out(d);
    std::vector<double> terms(n());
    for (Eigen::Index i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < n(); ++j)
            terms[j] = per_datum_term(j, x, static_cast<std::size_t>(i));
        double total = 0.0;
        std::size_t count = 0;
        for_each_subset_sum(terms, m_, [&](double s) {
            total += s;
            ++count;
        });
        out[i] = static_cast<double>(n()) / static_cast<double>(m_) * total / static_cast<double>(count);
    }
    return out;
}

RateIdentity GradEstimatorScheme::rate_identity_check(const Vector& x, double max_subsets) const
{
    RateIdentity out;
    for (std::size_t i = 0; i < dim(); ++i) {
        double grad = 0.0;
        double mag = 0.0;
        for (std::size_t j = 0; j < n(); ++j) {
            const double e = per_datum_term(j, x, i);
            grad += e;
            mag = std::max(mag, std::abs(e));
        }
        const double diff = effective_rate_exact(x, 1.0, i, max_subsets) - effective_rate_exact(x, -1.0, i, max_subsets);
        out.residual = std::max(out.residual, std::abs(diff - grad));
        out.scale = std::max(out.scale, static_cast<double>(n()) * mag);
    }
    return out;
}

double canonical_rate(const Dataset& data, const Model& model, const Vector& x, double v_i, std::size_t i)
{
    double g = model.prior_grad_coord(x, i);
    for (std::size_t j = 0; j < data.size(); ++j)
        g += model.grad_term_coord(x, data.obs(j), i);
    return std::max(0.0, v_i * g);
}

}  // namespace zz
