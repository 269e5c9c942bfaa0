#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "zz/models.hpp"

namespace zz {

std::string to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::Gaussian: return "gaussian";
    case ModelKind::Laplace: return "laplace";
    case ModelKind::Cauchy: return "cauchy";
    case ModelKind::Logistic: return "logistic";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& name)
{
    if (name == "gaussian" || name == "normal")
        return ModelKind::Gaussian;
    if (name == "laplace")
        return ModelKind::Laplace;
    if (name == "cauchy")
        return ModelKind::Cauchy;
    if (name == "logistic")
        return ModelKind::Logistic;
    throw std::invalid_argument("unknown model '" + name + "'");
}

void Model::check_dim(const Vector& x) const
{
    if (static_cast<std::size_t>(x.size()) != dim_)
        throw std::invalid_argument(fmt::format("parameter has dimension {}, model expects {}", x.size(), dim_));
}

void Model::grad_term(const Vector& x, ObservationRef o, Vector& out) const
{
    out.resize(static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < dim_; ++i)
        out[static_cast<Eigen::Index>(i)] = grad_term_coord(x, o, i);
}

std::optional<Vector> Model::lipschitz_total(const Dataset& data) const
{
    auto l = lipschitz(data);
    if (l)
        *l *= static_cast<double>(data.size());
    return l;
}

void Model::set_prior(std::optional<GaussianPrior> prior)
{
    if (prior) {
        if (static_cast<std::size_t>(prior->mean.size()) != dim_)
            throw std::invalid_argument("prior mean has the wrong dimension");
        if (!(prior->sd > 0.0))
            throw std::invalid_argument("prior sd must be positive");
    }
    prior_ = std::move(prior);
}

double Model::prior_grad_coord(const Vector& x, std::size_t i) const
{
    if (!prior_)
        return 0.0;
    const auto k = static_cast<Eigen::Index>(i);
    return (x[k] - prior_->mean[k]) / (prior_->sd * prior_->sd);
}

double Model::prior_lipschitz() const
{
    return prior_ ? 1.0 / (prior_->sd * prior_->sd) : 0.0;
}

// Gaussian ------------------------------------------------------------------

double GaussianLocation::neg_log_f(const Vector& x, ObservationRef o) const
{
    const double r = x[0] - o.y;
    return 0.5 * r * r;
}

double GaussianLocation::grad_term_coord(const Vector& x, ObservationRef o, std::size_t) const
{
    return x[0] - o.y;
}

Matrix GaussianLocation::hess_term(const Vector&, ObservationRef) const
{
    return Matrix::Ones(1, 1);
}

std::optional<Vector> GaussianLocation::lipschitz(const Dataset&) const
{
    return Vector::Ones(1);
}

// Laplace -------------------------------------------------------------------

double LaplaceLocation::neg_log_f(const Vector& x, ObservationRef o) const
{
    return std::abs(x[0] - o.y);
}

double LaplaceLocation::grad_term_coord(const Vector& x, ObservationRef o, std::size_t) const
{
    const double r = x[0] - o.y;
    return static_cast<double>((r > 0.0) - (r < 0.0));
}

Matrix LaplaceLocation::hess_term(const Vector&, ObservationRef) const
{
    return Matrix::Zero(1, 1);
}

std::optional<Vector> LaplaceLocation::grad_bound(const Dataset&) const
{
    return Vector::Ones(1);
}

// Cauchy --------------------------------------------------------------------

double CauchyLocation::neg_log_f(const Vector& x, ObservationRef o) const
{
    const double r = x[0] - o.y;
    return std::log1p(r * r);
}

double CauchyLocation::grad_term_coord(const Vector& x, ObservationRef o, std::size_t) const
{
    const double r = x[0] - o.y;
    return 2.0 * r / (1.0 + r * r);
}

Matrix CauchyLocation::hess_term(const Vector& x, ObservationRef o) const
{
    const double r2 = (x[0] - o.y) * (x[0] - o.y);
    const double q = 1.0 + r2;
    return Matrix::Constant(1, 1, 2.0 * (1.0 - r2) / (q * q));
}

std::optional<Vector> CauchyLocation::grad_bound(const Dataset&) const
{
    return Vector::Ones(1);
}

std::optional<Vector> CauchyLocation::lipschitz(const Dataset&) const
{
    return Vector::Constant(1, 2.0);
}

// Logistic ------------------------------------------------------------------

namespace {

double sigmoid(double u)
{
    if (u >= 0.0)
        return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

double dot_row(const Vector& x, const double* w)
{
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k)
        s += x[k] * w[k];
    return s;
}

}  // namespace

double LogisticRegression::neg_log_f(const Vector& x, ObservationRef o) const
{
    const double u = dot_row(x, o.w);
    // log(1 + e^u) - y u, evaluated without overflow.
    const double softplus = u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
    return softplus - o.y * u;
}

double LogisticRegression::grad_term_coord(const Vector& x, ObservationRef o, std::size_t i) const
{
    return o.w[i] * (sigmoid(dot_row(x, o.w)) - o.y);
}

void LogisticRegression::grad_term(const Vector& x, ObservationRef o, Vector& out) const
{
    const double r = sigmoid(dot_row(x, o.w)) - o.y;
    out = Eigen::Map<const Vector>(o.w, x.size()) * r;
}

Matrix LogisticRegression::hess_term(const Vector& x, ObservationRef o) const
{
    const double p = sigmoid(dot_row(x, o.w));
    const Eigen::Map<const Vector> w(o.w, x.size());
    return w * w.transpose() * (p * (1.0 - p));
}

std::optional<Vector> LogisticRegression::grad_bound(const Dataset& data) const
{
    Vector c = Vector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t j = 0; j < data.size(); ++j) {
        const auto o = data.obs(j);
        for (std::size_t i = 0; i < dim(); ++i)
            c[static_cast<Eigen::Index>(i)] = std::max(c[static_cast<Eigen::Index>(i)], std::abs(o.w[i]));
    }
    return c;
}

std::optional<Vector> LogisticRegression::lipschitz(const Dataset& data) const
{
    // |s_i(x) - s_i(x')| <= |w_i| / 4 * |w.(x - x')| <= |w_i| ||w|| / 4 * ||x - x'||.
    Vector l = Vector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t j = 0; j < data.size(); ++j) {
        const auto o = data.obs(j);
        const double norm = Eigen::Map<const Vector>(o.w, static_cast<Eigen::Index>(dim())).norm();
        for (std::size_t i = 0; i < dim(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            l[k] = std::max(l[k], 0.25 * std::abs(o.w[i]) * norm);
        }
    }
    return l;
}

std::optional<Vector> LogisticRegression::lipschitz_total(const Dataset& data) const
{
    Vector l = Vector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t j = 0; j < data.size(); ++j) {
        const auto o = data.obs(j);
        const double norm = Eigen::Map<const Vector>(o.w, static_cast<Eigen::Index>(dim())).norm();
        for (std::size_t i = 0; i < dim(); ++i)
            l[static_cast<Eigen::Index>(i)] += 0.25 * std::abs(o.w[i]) * norm;
    }
    return l;
}

std::unique_ptr<Model> make_model(ModelKind kind, std::size_t dim)
{
    if (kind != ModelKind::Logistic && dim != 1)
        throw std::invalid_argument(to_string(kind) + " is a one-dimensional location model");
    switch (kind) {
    case ModelKind::Gaussian: return std::make_unique<GaussianLocation>();
    case ModelKind::Laplace: return std::make_unique<LaplaceLocation>();
    case ModelKind::Cauchy: return std::make_unique<CauchyLocation>();
    case ModelKind::Logistic: return std::make_unique<LogisticRegression>(dim);
    }
    throw std::invalid_argument("unknown model kind");
}

}  // namespace zz
