#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "zz/errors.hpp"
#include "zz/models.hpp"

namespace zz {

Vector potential_grad(const Dataset& data, const Model& model, const Vector& x, CostLedger* ledger)
{
    const auto d = static_cast<Eigen::Index>(model.dim());
    Vector g = Vector::Zero(d);
    Vector s(d);
    for (std::size_t j = 0; j < data.size(); ++j) {
        model.grad_term(x, data.obs(j), s);
        g += s;
    }
    for (Eigen::Index i = 0; i < d; ++i)
        g[i] += model.prior_grad_coord(x, static_cast<std::size_t>(i));
    if (ledger)
        ledger->grad_term_evals += data.size();
    return g;
}

double potential(const Dataset& data, const Model& model, const Vector& x)
{
    double u = 0.0;
    for (std::size_t j = 0; j < data.size(); ++j)
        u += model.neg_log_f(x, data.obs(j));
    return u;
}

Matrix observed_information(const Dataset& data, const Model& model, const Vector& x)
{
    const auto d = static_cast<Eigen::Index>(model.dim());
    Matrix info = Matrix::Zero(d, d);
    for (std::size_t j = 0; j < data.size(); ++j)
        info += model.hess_term(x, data.obs(j));
    return info / static_cast<double>(data.size());
}

namespace {

double median_of(std::vector<double> y)
{
    const std::size_t n = y.size();
    const std::size_t h = n / 2;
    std::nth_element(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(h), y.end());
    const double upper = y[h];
    if (n % 2 == 1)
        return upper;
    const double lower = *std::max_element(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(h));
    return 0.5 * (lower + upper);
}

double score_1d(const Dataset& data, const Model& model, double x)
{
    const Vector xv = Vector::Constant(1, x);
    double s = 0.0;
    for (std::size_t j = 0; j < data.size(); ++j)
        s += model.grad_term_coord(xv, data.obs(j), 0);
    return s;
}

double score_slope_1d(const Dataset& data, const Model& model, double x)
{
    return observed_information(data, model, Vector::Constant(1, x))(0, 0) * static_cast<double>(data.size());
}

Vector fit_cauchy(const Dataset& data, const Model& model)
{
    const double n = static_cast<double>(data.size());
    const double target = 1e-12 * n;
    double x = median_of(data.y);
    double f = score_1d(data, model, x);
    if (f == 0.0)
        return Vector::Constant(1, x);

    // The score is negative far left of the data and positive far right.
    double lo = x;
    double hi = x;
    double step = 1.0;
    for (int k = 0; k < 200 && score_1d(data, model, lo) >= 0.0; ++k, step *= 2.0)
        lo = x - step;
    step = 1.0;
    for (int k = 0; k < 200 && score_1d(data, model, hi) <= 0.0; ++k, step *= 2.0)
        hi = x + step;
    if (!(score_1d(data, model, lo) < 0.0 && score_1d(data, model, hi) > 0.0))
        throw NonConvergence("could not bracket a root of the Cauchy score");

    for (int it = 0; it < 400; ++it) {
        if (std::abs(f) <= target)
            return Vector::Constant(1, x);
        if (f < 0.0)
            lo = x;
        else
            hi = x;
        const double slope = score_slope_1d(data, model, x);
        double next = slope > 0.0 ? x - f / slope : lo - 1.0;
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (next == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x)))
            break;
        x = next;
        f = score_1d(data, model, x);
    }
    if (std::abs(f) <= 1e-10 * n)
        return Vector::Constant(1, x);
    throw NonConvergence(fmt::format("Cauchy score {} at {} after bracketing", f, x));
}

Vector fit_logistic(const Dataset& data, const Model& model)
{
    const auto d = static_cast<Eigen::Index>(model.dim());
    const double n = static_cast<double>(data.size());
    Vector x = Vector::Zero(d);
    double u = potential(data, model, x);
    for (int it = 0; it < 100; ++it) {
        Vector g = Vector::Zero(d);
        Matrix h = Matrix::Zero(d, d);
        Vector s(d);
        for (std::size_t j = 0; j < data.size(); ++j) {
            model.grad_term(x, data.obs(j), s);
            g += s;
            h += model.hess_term(x, data.obs(j));
        }
        if (g.lpNorm<Eigen::Infinity>() <= 1e-10 * n)
            return x;
        if (u < 1e-8 * n)
            throw Separation("labels are (nearly) separable; the likelihood has no finite maximizer");
        Eigen::LDLT<Matrix> ldlt(h);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
            throw Separation("information matrix is singular along the Newton path");
        const Vector delta = ldlt.solve(g);
        double step = 1.0;
        Vector next = x - delta;
        double u_next = potential(data, model, next);
        // Near the optimum the decrease is below the rounding level of U.
        const double slack = 1e-12 * std::abs(u);
        for (int k = 0; k < 40 && !(u_next <= u + slack); ++k) {
            step *= 0.5;
            next = x - step * delta;
            u_next = potential(data, model, next);
        }
        x = next;
        u = u_next;
        if (x.lpNorm<Eigen::Infinity>() > 1e3)
            throw Separation("Newton iterates diverge");
    }
    if (x.lpNorm<Eigen::Infinity>() > 30.0)
        throw Separation("Newton iterates diverge");
    throw NonConvergence("logistic Newton did not converge in 100 steps");
}

}  // namespace

Vector fit_mle(const Dataset& data, const Model& model)
{
    data.validate();
    if (data.dim != model.dim())
        throw std::invalid_argument("dataset and model dimensions differ");
    switch (model.kind()) {
    case ModelKind::Gaussian:
        return Vector::Constant(1, data.mean_y());
    case ModelKind::Laplace:
        return Vector::Constant(1, median_of(data.y));
    case ModelKind::Cauchy:
        return fit_cauchy(data, model);
    case ModelKind::Logistic:
        if (data.kind != ObservationKind::Labeled)
            throw std::invalid_argument("logistic model needs labeled data");
        return fit_logistic(data, model);
    }
    throw std::logic_error("unknown model");
}

KlMinimizer kl_minimizer(const TruthSpec& truth, const Model& model, std::size_t mc_size, std::uint64_t seed,
                         bool numeric)
{
    if (!numeric) {
        if (truth.well_specified_for(model.kind())) {
            if (truth.family == Family::Logistic)
                return {truth.x0, Vector::Zero(truth.x0.size()), true};
            return {Vector::Constant(1, truth.location), Vector::Zero(1), true};
        }
        if (truth.family != Family::Logistic) {
            switch (model.kind()) {
            case ModelKind::Gaussian:
                // Squared loss is minimized at the P-mean; the KL is infinite without a variance.
                if (truth.family == Family::Cauchy || (truth.family == Family::StudentT && truth.dof <= 2.0))
                    throw std::invalid_argument("Gaussian model KL is infinite under " + truth.describe());
                return {Vector::Constant(1, truth.location), Vector::Zero(1), true};
            case ModelKind::Laplace:
            case ModelKind::Cauchy:
                // Even loss, increasing in |y - x|, under a symmetric unimodal P.
                return {Vector::Constant(1, truth.location), Vector::Zero(1), true};
            default:
                break;
            }
        }
    }

    if (truth.dim() != model.dim())
        throw std::invalid_argument("truth and model dimensions differ");
    const Dataset data = generate_data(truth, mc_size, seed);
    KlMinimizer out;
    out.analytic = false;
    out.x0 = fit_mle(data, model);
    const auto d = static_cast<Eigen::Index>(model.dim());
    // Sandwich J^-1 K J^-1 / N; the Laplace J comes from the P-density.
    Matrix j = observed_information(data, model, out.x0);
    if (model.kind() == ModelKind::Laplace)
        j(0, 0) = 2.0 * truth.pdf(out.x0[0]);
    Matrix k = Matrix::Zero(d, d);
    Vector s(d);
    for (std::size_t r = 0; r < data.size(); ++r) {
        model.grad_term(out.x0, data.obs(r), s);
        k += s * s.transpose();
    }
    k /= static_cast<double>(data.size());
    const Matrix jinv = j.inverse();
    const Matrix cov = jinv * k * jinv / static_cast<double>(data.size());
    out.std_error = cov.diagonal().cwiseSqrt();
    return out;
}

Matrix information_at(const TruthSpec& truth, const Model& model, const Vector& x0, std::size_t mc_size,
                      std::uint64_t seed)
{
    switch (model.kind()) {
    case ModelKind::Gaussian:
        return Matrix::Ones(1, 1);
    case ModelKind::Laplace:
        // d/dx E sgn(x - Y) = 2 p_P(x).
        return Matrix::Constant(1, 1, 2.0 * truth.pdf(x0[0]));
    case ModelKind::Cauchy:
        if (truth.family == Family::Cauchy && truth.scale == 1.0 && x0[0] == truth.location)
            return Matrix::Constant(1, 1, 0.5);
        break;
    case ModelKind::Logistic:
        break;
    }
    const Dataset data = generate_data(truth, mc_size, seed);
    return observed_information(data, model, x0);
}

}  // namespace zz
