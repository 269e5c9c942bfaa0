#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "zz/asymptotics.hpp"
#include "zz/errors.hpp"

namespace zz {

std::string to_string(DriftMethod method)
{
    switch (method) {
    case DriftMethod::Auto: return "auto";
    case DriftMethod::ClosedForm: return "closed";
    case DriftMethod::Quadrature: return "quadrature";
    case DriftMethod::MonteCarlo: return "montecarlo";
    }
    return "unknown";
}

DriftMethod parse_drift_method(const std::string& name)
{
    if (name == "auto")
        return DriftMethod::Auto;
    if (name == "closed" || name == "closed_form")
        return DriftMethod::ClosedForm;
    if (name == "quadrature" || name == "quad")
        return DriftMethod::Quadrature;
    if (name == "montecarlo" || name == "mc")
        return DriftMethod::MonteCarlo;
    throw std::invalid_argument("unknown drift method '" + name + "'");
}

namespace {

enum class Branch { Canonical, Subsampling, ControlVariate };

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double big_phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double logistic_p(const Vector& x, const double* w)
{
    double u = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k)
        u += x[k] * w[k];
    return 1.0 / (1.0 + std::exp(-u));
}

bool has_mean(const TruthSpec& t)
{
    return t.family == Family::Gaussian || t.family == Family::Laplace ||
           (t.family == Family::StudentT && t.dof > 1.0);
}

/// Binomial(m, q) expectation of g(k).
template <class G>
double binomial_expectation(std::size_t m, double q, G g)
{
    q = std::clamp(q, 0.0, 1.0);
    if (q == 0.0)
        return g(0);
    if (q == 1.0)
        return g(m);
    boost::math::binomial_distribution<double> bin(static_cast<double>(m), q);
    double sum = 0.0;
    for (std::size_t k = 0; k <= m; ++k)
        sum += boost::math::pdf(bin, static_cast<double>(k)) * g(k);
    return sum;
}

struct Context {
    const DriftFunction& f;
    std::unique_ptr<Model> model;

    explicit Context(const DriftFunction& fn) : f(fn), model(make_model(fn.model, fn.truth.dim())) {}

    double s(double x, double y) const
    {
        xv[0] = x;
        return model->grad_term_coord(xv, {y, nullptr}, 0);
    }

    mutable Vector xv = Vector::Zero(1);
};

Branch branch_at(const DriftFunction& f, const Vector& x)
{
    switch (f.scheme) {
    case SchemeKind::Canonical: return Branch::Canonical;
    case SchemeKind::Subsampling: return Branch::Subsampling;
    case SchemeKind::ControlVariate: return Branch::ControlVariate;
    case SchemeKind::Mixed: return x.norm() > f.mixed_radius ? Branch::Subsampling : Branch::ControlVariate;
    }
    return Branch::Canonical;
}

// Scalar closed forms ------------------------------------------------------

std::optional<double> closed_mean_s(const Context& c, double x)
{
    const TruthSpec& t = c.f.truth;
    switch (c.f.model) {
    case ModelKind::Gaussian:
        if (has_mean(t))
            return x - t.location;
        return std::nullopt;
    case ModelKind::Laplace:
        return 2.0 * t.cdf(x) - 1.0;
    case ModelKind::Cauchy:
        if (t.family == Family::Cauchy) {
            const double d = x - t.location;
            const double g = 1.0 + t.scale;
            return 2.0 * d / (d * d + g * g);
        }
        return std::nullopt;
    case ModelKind::Logistic:
        return std::nullopt;
    }
    return std::nullopt;
}

std::optional<double> closed_denominator(const Context& c, Branch br, double x, double x_star)
{
    const TruthSpec& t = c.f.truth;
    const std::size_t m = c.f.m;
    switch (c.f.model) {
    case ModelKind::Gaussian:
        if (br == Branch::Subsampling) {
            if (t.family != Family::Gaussian)
                return std::nullopt;
            const double d = x - t.location;
            const double sigma = t.scale / std::sqrt(static_cast<double>(m));
            return d * (2.0 * big_phi(d / sigma) - 1.0) + 2.0 * sigma * phi(d / sigma);
        }
        // Control variates cancel every Y: the estimate is x - E Y exactly.
        if (auto mean = closed_mean_s(c, x))
            return std::abs(*mean);
        return std::nullopt;
    case ModelKind::Laplace: {
        if (br == Branch::Subsampling) {
            const double p = t.cdf(x);
            const double md = static_cast<double>(m);
            return binomial_expectation(m, p, [&](std::size_t k) { return std::abs(2.0 * k / md - 1.0); });
        }
        // s(x; Y) - s(x*; Y) is +-2 on the data between x* and x, else 0.
        const double c_star = 2.0 * t.cdf(x_star) - 1.0;
        const double q = std::abs(t.cdf(x) - t.cdf(x_star));
        const double sign = x > x_star ? 1.0 : -1.0;
        const double md = static_cast<double>(m);
        return binomial_expectation(m, q, [&](std::size_t k) { return std::abs(sign * 2.0 * k / md + c_star); });
    }
    case ModelKind::Cauchy:
    case ModelKind::Logistic:
        return std::nullopt;
    }
    return std::nullopt;
}

// Quadrature over P via the quantile transform -------------------------------

template <class H>
double expect_abs(const TruthSpec& t, H h, double tol, std::vector<double> extra_u = {})
{
    // Split (0, 1) at sign changes of h(Q(u)) so every piece is smooth.
    constexpr int kScan = 4000;
    std::vector<double> cuts{0.0, 1.0};
    auto hu = [&](double u) { return h(t.quantile(u)); };
    double u_prev = 0.5 / kScan;
    double h_prev = hu(u_prev);
    for (int k = 1; k < kScan; ++k) {
        const double u = (k + 0.5) / kScan;
        const double hv = hu(u);
        if ((h_prev < 0.0) != (hv < 0.0)) {
            double lo = u_prev;
            double hi = u;
            const bool neg_lo = h_prev < 0.0;
            for (int it = 0; it < 80 && hi - lo > 1e-16; ++it) {
                const double mid = 0.5 * (lo + hi);
                if ((hu(mid) < 0.0) == neg_lo)
                    lo = mid;
                else
                    hi = mid;
            }
            cuts.push_back(0.5 * (lo + hi));
        }
        u_prev = u;
        h_prev = hv;
    }
    for (double u : extra_u)
        if (u > 0.0 && u < 1.0)
            cuts.push_back(u);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto integrand = [&](double u) { return std::abs(hu(u)); };
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        if (cuts[k + 1] - cuts[k] <= 0.0)
            continue;
        double err = 0.0;
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, cuts[k], cuts[k + 1], 12,
                                                                               tol, &err);
    }
    return total;
}

template <class H>
double expect_signed(const TruthSpec& t, H h, double tol, std::vector<double> extra_u = {})
{
    std::vector<double> cuts{0.0, 1.0};
    for (double u : extra_u)
        if (u > 0.0 && u < 1.0)
            cuts.push_back(u);
    std::sort(cuts.begin(), cuts.end());
    auto integrand = [&](double u) { return h(t.quantile(u)); };
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        double err = 0.0;
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, cuts[k], cuts[k + 1], 12,
                                                                               tol, &err);
    }
    return total;
}

double quad_mean_s(const Context& c, double x)
{
    if (c.f.model == ModelKind::Gaussian && !has_mean(c.f.truth))
        throw std::invalid_argument("gaussian model drift needs a data law with a finite mean");
    return expect_signed(c.f.truth, [&](double y) { return c.s(x, y); }, c.f.quad_tol, {c.f.truth.cdf(x)});
}

double quad_denominator(const Context& c, Branch br, double x, double x_star, double mean_s_star)
{
    const double tol = c.f.quad_tol;
    if (br == Branch::Subsampling)
        return expect_abs(c.f.truth, [&](double y) { return c.s(x, y); }, tol, {c.f.truth.cdf(x)});
    return expect_abs(
        c.f.truth, [&](double y) { return c.s(x, y) - c.s(x_star, y) + mean_s_star; }, tol,
        {c.f.truth.cdf(x), c.f.truth.cdf(x_star)});
}

// Monte Carlo ----------------------------------------------------------------

struct Draw {
    double y = 0.0;
    std::vector<double> w;
};

struct McComponents {
    Vector numerator;
    Vector denominator;
    Vector b;
    Vector se;
};

/// Draws per group spent on the control-variate constant E s(x*; Y). Its
/// error shifts every group alike, so it gets a larger independent sample.
constexpr std::size_t kConstantOversample = 16;

/// Generic Monte Carlo over groups of m draws from P.
McComponents monte_carlo(const Context& c, Branch br, const Vector& x)
{
    const DriftFunction& f = c.f;
    const std::size_t d = f.truth.dim();
    const std::size_t groups = std::max<std::size_t>(f.mc_budget, 2);
    const std::size_t m = f.m;
    const bool labeled = f.truth.observation_kind() == ObservationKind::Labeled;
    std::vector<double> w(labeled ? d : 0);
    Vector s_x(d), s_star(d);

    auto obs = [&](Rng& rng) {
        const double y = f.truth.sample(rng, labeled ? w.data() : nullptr);
        return ObservationRef{y, labeled ? w.data() : nullptr};
    };

    Vector c_star = Vector::Zero(static_cast<Eigen::Index>(d));
    if (br == Branch::ControlVariate) {
        Rng rng(derive_seed(f.seed, 1));
        const std::size_t draws = kConstantOversample * groups * m;
        for (std::size_t k = 0; k < draws; ++k) {
            const ObservationRef o = obs(rng);
            c.model->grad_term(f.x_star, o, s_star);
            c_star += s_star;
        }
        c_star /= static_cast<double>(draws);
    }

    // Running sums of a (numerator share) and dd (denominator share) per group.
    Vector sum_a = Vector::Zero(static_cast<Eigen::Index>(d));
    Vector sum_d = sum_a, sum_aa = sum_a, sum_dd = sum_a, sum_ad = sum_a;
    Rng rng(f.seed);
    Vector g(d), gc(d);
    for (std::size_t k = 0; k < groups; ++k) {
        g.setZero();
        gc.setZero();
        for (std::size_t j = 0; j < m; ++j) {
            const ObservationRef o = obs(rng);
            c.model->grad_term(x, o, s_x);
            g += s_x;
            if (br == Branch::ControlVariate) {
                c.model->grad_term(f.x_star, o, s_star);
                gc += s_x - s_star;
            }
        }
        g /= static_cast<double>(m);
        gc /= static_cast<double>(m);
        for (std::size_t i = 0; i < d; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            // a is minus the scheme's own estimate of E s_i(x; Y): its mean is
            // lambda(x, -1) - lambda(x, +1) and the mean of |a| their sum.
            const double a = br == Branch::ControlVariate ? -(gc[ii] + c_star[ii]) : -g[ii];
            double dv = 0.0;
            if (br != Branch::Canonical)
                dv = std::abs(a);
            sum_a[ii] += a;
            sum_d[ii] += dv;
            sum_aa[ii] += a * a;
            sum_dd[ii] += dv * dv;
            sum_ad[ii] += a * dv;
        }
    }
    const double K = static_cast<double>(groups);
    McComponents out;
    out.numerator = sum_a / K;
    out.denominator = br == Branch::Canonical ? Vector(out.numerator.cwiseAbs()) : Vector(sum_d / K);
    out.b = Vector::Zero(static_cast<Eigen::Index>(d));
    out.se = Vector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double den = out.denominator[ii];
        if (den < kZeroDenominator)
            continue;
        const double b = out.numerator[ii] / den;
        out.b[ii] = b;
        if (br == Branch::Canonical)
            continue;
        // Delta method on the ratio of means: var(a - b d) / (K den^2).
        const double ma = out.numerator[ii];
        const double md = sum_d[ii] / K;
        const double var = (sum_aa[ii] / K - ma * ma) + b * b * (sum_dd[ii] / K - md * md) -
                           2.0 * b * (sum_ad[ii] / K - ma * md);
        out.se[ii] = std::sqrt(std::max(var, 0.0) / K) / den;
    }
    return out;
}

/// Logistic regression with Y integrated out given W (m = 1, or canonical):
/// E s_i(x) = E W_i (p(x; W) - p(x0; W)) and E|s_i(x)| = E |W_i| (p0 + p - 2 p0 p).
McComponents logistic_conditional(const Context& c, Branch br, const Vector& x)
{
    const DriftFunction& f = c.f;
    const TruthSpec& t = f.truth;
    const std::size_t d = t.dim();
    const std::size_t K = std::max<std::size_t>(f.mc_budget, 2);
    std::vector<double> w(d);

    Vector c_star = Vector::Zero(static_cast<Eigen::Index>(d));
    if (br == Branch::ControlVariate) {
        Rng rng(derive_seed(f.seed, 1));
        for (std::size_t k = 0; k < kConstantOversample * K; ++k) {
            t.sample(rng, w.data());
            const double diff = logistic_p(f.x_star, w.data()) - logistic_p(t.x0, w.data());
            for (std::size_t i = 0; i < d; ++i)
                c_star[static_cast<Eigen::Index>(i)] += w[i] * diff;
        }
        c_star /= static_cast<double>(kConstantOversample * K);
    }

    Vector sum_a = Vector::Zero(static_cast<Eigen::Index>(d));
    Vector sum_d = sum_a, sum_aa = sum_a, sum_dd = sum_a, sum_ad = sum_a;
    Rng rng(f.seed);
    for (std::size_t k = 0; k < K; ++k) {
        t.sample(rng, w.data());
        const double p = logistic_p(x, w.data());
        const double p0 = logistic_p(t.x0, w.data());
        const double ps = br == Branch::ControlVariate ? logistic_p(f.x_star, w.data()) : 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double a = -w[i] * (p - p0);
            double dv = 0.0;
            if (br == Branch::Subsampling)
                dv = std::abs(w[i]) * (p0 + p - 2.0 * p0 * p);
            else if (br == Branch::ControlVariate)
                dv = std::abs(w[i] * (p - ps) + c_star[ii]);
            sum_a[ii] += a;
            sum_d[ii] += dv;
            sum_aa[ii] += a * a;
            sum_dd[ii] += dv * dv;
            sum_ad[ii] += a * dv;
        }
    }
    const double Kd = static_cast<double>(K);
    McComponents out;
    out.numerator = sum_a / Kd;
    out.denominator = br == Branch::Canonical ? Vector(out.numerator.cwiseAbs()) : Vector(sum_d / Kd);
    out.b = Vector::Zero(static_cast<Eigen::Index>(d));
    out.se = Vector::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double den = out.denominator[ii];
        if (den < kZeroDenominator)
            continue;
        const double b = out.numerator[ii] / den;
        out.b[ii] = b;
        if (br == Branch::Canonical)
            continue;
        const double ma = out.numerator[ii];
        const double md = sum_d[ii] / Kd;
        const double var = (sum_aa[ii] / Kd - ma * ma) + b * b * (sum_dd[ii] / Kd - md * md) -
                           2.0 * b * (sum_ad[ii] / Kd - ma * md);
        out.se[ii] = std::sqrt(std::max(var, 0.0) / Kd) / den;
    }
    return out;
}

DriftValue from_mc(McComponents mc, DriftMethod method)
{
    DriftValue v;
    v.numerator = std::move(mc.numerator);
    v.denominator = std::move(mc.denominator);
    v.b = std::move(mc.b);
    v.std_error = std::move(mc.se);
    v.method = method;
    return v;
}

DriftValue scalar_drift(const Context& c, Branch br, double x, DriftMethod method)
{
    const DriftFunction& f = c.f;
    const double x_star = f.x_star[0];

    std::optional<double> mean_s;
    std::optional<double> den;
    DriftMethod used = method;
    if (method == DriftMethod::ClosedForm || method == DriftMethod::Auto) {
        mean_s = closed_mean_s(c, x);
        if (mean_s) {
            if (br == Branch::Canonical)
                den = std::abs(*mean_s);
            else
                den = closed_denominator(c, br, x, x_star);
        }
        if (mean_s && den) {
            used = DriftMethod::ClosedForm;
        } else if (method == DriftMethod::ClosedForm) {
            throw std::invalid_argument(fmt::format("no closed-form {} drift for the {} model under {}",
                                                    to_string(f.scheme), to_string(f.model), f.truth.describe()));
        } else {
            used = f.m == 1 ? DriftMethod::Quadrature : DriftMethod::MonteCarlo;
        }
    }
    if (used == DriftMethod::Quadrature) {
        if (f.m != 1 && br != Branch::Canonical)
            throw std::invalid_argument("quadrature drift needs m = 1");
        mean_s = quad_mean_s(c, x);
        if (br == Branch::Canonical) {
            den = std::abs(*mean_s);
        } else {
            const double ms_star = br == Branch::ControlVariate ? quad_mean_s(c, x_star) : 0.0;
            den = quad_denominator(c, br, x, x_star, ms_star);
        }
    }
    if (used == DriftMethod::MonteCarlo) {
        Vector xv(1);
        xv[0] = x;
        return from_mc(monte_carlo(c, br, xv), DriftMethod::MonteCarlo);
    }

    DriftValue v;
    v.numerator = Vector::Constant(1, -*mean_s);
    v.denominator = Vector::Constant(1, *den);
    v.b = Vector::Zero(1);
    if (*den >= kZeroDenominator)
        v.b[0] = -*mean_s / *den;
    v.std_error = Vector::Zero(1);
    v.method = used;
    return v;
}

}  // namespace

DriftFunction prepared(DriftFunction f)
{
    if (f.m < 1)
        throw std::invalid_argument("drift batch size m must be at least 1");
    const std::size_t d = f.truth.dim();
    const bool labeled_model = f.model == ModelKind::Logistic;
    if (labeled_model != (f.truth.observation_kind() == ObservationKind::Labeled))
        throw std::invalid_argument("data law " + f.truth.describe() + " does not match the " + to_string(f.model) +
                                    " model");
    if (f.x0.size() == 0) {
        auto model = make_model(f.model, d);
        f.x0 = kl_minimizer(f.truth, *model, 1'000'000, f.seed).x0;
    }
    if (f.x_star.size() == 0)
        f.x_star = f.x0;
    if (static_cast<std::size_t>(f.x0.size()) != d || static_cast<std::size_t>(f.x_star.size()) != d)
        throw std::invalid_argument("drift reference points have the wrong dimension");
    if (!(f.mixed_radius > 0.0))
        throw std::invalid_argument("mixed radius must be positive");
    return f;
}

DriftValue drift_components(const DriftFunction& fin, const Vector& x)
{
    const DriftFunction f = (fin.x0.size() == 0 || fin.x_star.size() == 0) ? prepared(fin) : fin;
    if (static_cast<std::size_t>(x.size()) != f.truth.dim())
        throw std::invalid_argument("drift evaluated at a point of the wrong dimension");
    const Context c(f);
    const Branch br = branch_at(f, x);

    if (f.model != ModelKind::Logistic)
        return scalar_drift(c, br, x[0], f.method);

    if (f.method == DriftMethod::Quadrature)
        throw std::invalid_argument("quadrature drift is only available in one dimension");
    if (f.method != DriftMethod::MonteCarlo && (f.m == 1 || br == Branch::Canonical))
        return from_mc(logistic_conditional(c, br, x), DriftMethod::ClosedForm);
    if (f.method == DriftMethod::ClosedForm)
        throw std::invalid_argument("closed-form logistic drift needs m = 1");
    return from_mc(monte_carlo(c, br, x), DriftMethod::MonteCarlo);
}

DriftValue asymptotic_drift(const DriftFunction& f, const Vector& x)
{
    DriftValue v = drift_components(f, x);
    for (Eigen::Index i = 0; i < v.denominator.size(); ++i)
        if (v.denominator[i] < kZeroDenominator)
            throw ZeroDenominator(fmt::format("drift denominator {:.3g} in coordinate {} at x = ({})",
                                              v.denominator[i], i + 1,
                                              fmt::join(x.data(), x.data() + x.size(), ", ")));
    return v;
}

Vector finite_n_drift(const GradEstimatorScheme& scheme, const Vector& x, std::size_t mc_draws, std::uint64_t seed)
{
    const std::size_t d = scheme.dim();
    Vector b = Vector::Zero(static_cast<Eigen::Index>(d));
    try {
        for (std::size_t i = 0; i < d; ++i) {
            const double lm = scheme.effective_rate_exact(x, -1.0, i);
            const double lp = scheme.effective_rate_exact(x, 1.0, i);
            if (lm + lp > 0.0)
                b[static_cast<Eigen::Index>(i)] = (lm - lp) / (lm + lp);
        }
        return b;
    } catch (const EnumerationTooLarge&) {
        if (mc_draws == 0)
            throw;
    }
    // lambda(x, -1) - lambda(x, +1) = -E zeta and the sum is E|zeta|.
    Rng rng(seed);
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(d));
    Vector sum_abs = sum;
    for (std::size_t k = 0; k < mc_draws; ++k) {
        const Vector z = scheme.draw_estimate(x, rng);
        sum += z;
        sum_abs += z.cwiseAbs();
    }
    for (std::size_t i = 0; i < d; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (sum_abs[ii] > 0.0)
            b[ii] = -sum[ii] / sum_abs[ii];
    }
    return b;
}

}  // namespace zz
