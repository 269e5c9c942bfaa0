#include <cmath>
#include <numbers>

#include "zz/asymptotics.hpp"
#include "zz/errors.hpp"

namespace zz {

RateEstimate limiting_zzcv_rate(const Vector& xi, const Vector& v, const Vector& xi_star, const DriftFunction& fin,
                                std::size_t mc_budget, std::uint64_t seed, bool infinite_m)
{
    const DriftFunction f = prepared(fin);
    const std::size_t d = f.truth.dim();
    const auto de = static_cast<Eigen::Index>(d);
    if (xi.size() != de || v.size() != de || xi_star.size() != de)
        throw std::invalid_argument("limiting rate arguments have the wrong dimension");
    auto model = make_model(f.model, d);
    const Matrix info = information_at(f.truth, *model, f.x0, 1'000'000, derive_seed(seed, 17));

    RateEstimate out;
    out.rate = Vector::Zero(de);
    out.std_error = Vector::Zero(de);
    if (infinite_m) {
        for (Eigen::Index i = 0; i < de; ++i)
            out.rate[i] = std::max(0.0, v[i] * info.row(i).dot(xi));
        return out;
    }
    if (mc_budget < 2)
        throw std::invalid_argument("limiting rate needs a Monte Carlo budget of at least 2");

    const bool labeled = f.truth.observation_kind() == ObservationKind::Labeled;
    std::vector<double> w(labeled ? d : 0);
    Rng rng(seed);
    Vector sum = Vector::Zero(de);
    Vector sum_sq = Vector::Zero(de);
    Matrix g(de, de);
    for (std::size_t k = 0; k < mc_budget; ++k) {
        g.setZero();
        for (std::size_t j = 0; j < f.m; ++j) {
            const double y = f.truth.sample(rng, labeled ? w.data() : nullptr);
            g += model->hess_term(f.x0, {y, labeled ? w.data() : nullptr});
        }
        g /= static_cast<double>(f.m);
        for (Eigen::Index i = 0; i < de; ++i) {
            const double lin = g.row(i).dot(xi) - (g.row(i) - info.row(i)).dot(xi_star);
            const double r = std::max(0.0, v[i] * lin);
            sum[i] += r;
            sum_sq[i] += r * r;
        }
    }
    const double K = static_cast<double>(mc_budget);
    out.rate = sum / K;
    for (Eigen::Index i = 0; i < de; ++i) {
        const double var = sum_sq[i] / K - out.rate[i] * out.rate[i];
        out.std_error[i] = std::sqrt(std::max(var, 0.0) / K);
    }
    return out;
}

RescaledPath rescale_trajectory(const Skeleton& skeleton, const Vector& x_hat, double n, RescaleMode mode)
{
    if (!(n > 0.0))
        throw std::invalid_argument("rescaling needs n > 0");
    if (static_cast<std::size_t>(x_hat.size()) != skeleton.dim())
        throw std::invalid_argument("rescaling centre has the wrong dimension");
    RescaledPath out;
    out.n = n;
    out.x_hat = x_hat;
    const double root = std::sqrt(n);
    out.time_scale = mode == RescaleMode::SpaceAndTime ? root : 1.0;
    out.skeleton = Skeleton(skeleton.dim());
    for (std::size_t k = 0; k < skeleton.size(); ++k)
        out.skeleton.push_event(skeleton.time(k) * out.time_scale, root * (skeleton.position(k) - x_hat),
                                skeleton.velocity(k));
    out.skeleton.set_end(skeleton.t_end() * out.time_scale);
    return out;
}

Skeleton unrescale(const RescaledPath& path)
{
    const double root = std::sqrt(path.n);
    Skeleton out(path.skeleton.dim());
    for (std::size_t k = 0; k < path.skeleton.size(); ++k)
        out.push_event(path.skeleton.time(k) / path.time_scale, path.x_hat + path.skeleton.position(k) / root,
                       path.skeleton.velocity(k));
    out.set_end(path.skeleton.t_end() / path.time_scale);
    return out;
}

BvmGaussian::BvmGaussian(const Matrix& info)
{
    if (info.rows() == 0 || info.rows() != info.cols())
        throw std::invalid_argument("information matrix must be square and non-empty");
    if ((info - info.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, info.cwiseAbs().maxCoeff()))
        throw NotPositiveDefinite("information matrix is not symmetric");
    const Eigen::LLT<Matrix> llt_info(info);
    if (llt_info.info() != Eigen::Success)
        throw NotPositiveDefinite("information matrix is not positive definite");
    precision_ = info;
    cov_ = llt_info.solve(Matrix::Identity(info.rows(), info.cols()));
    cov_ = 0.5 * (cov_ + cov_.transpose());
    const Eigen::LLT<Matrix> llt_cov(cov_);
    if (llt_cov.info() != Eigen::Success)
        throw NotPositiveDefinite("covariance is not positive definite");
    chol_ = llt_cov.matrixL();
    const double d = static_cast<double>(info.rows());
    const double log_det_info = 2.0 * Matrix(llt_info.matrixL()).diagonal().array().log().sum();
    log_norm_ = -0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * log_det_info;
}

Vector BvmGaussian::sample(Rng& rng) const
{
    Vector z(cov_.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i)
        z[i] = rng.normal();
    return chol_ * z;
}

double BvmGaussian::marginal_cdf(std::size_t i, double xi) const
{
    const auto ii = static_cast<Eigen::Index>(i);
    if (ii >= cov_.rows())
        throw std::out_of_range("BvM marginal index out of range");
    return 0.5 * std::erfc(-xi / std::sqrt(2.0 * cov_(ii, ii)));
}

double BvmGaussian::log_density(const Vector& xi) const
{
    if (xi.size() != cov_.rows())
        throw std::invalid_argument("BvM density evaluated at a point of the wrong dimension");
    return log_norm_ - 0.5 * xi.dot(precision_ * xi);
}

}  // namespace zz
