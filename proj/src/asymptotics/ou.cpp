#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "zz/asymptotics.hpp"
#include "zz/errors.hpp"

namespace zz {

void OUParams::validate() const
{
    const Eigen::Index d = a.rows();
    if (a.cols() != d || info.rows() != d || info.cols() != d || b.rows() != d || b.cols() != d)
        throw std::invalid_argument("OU parameter matrices have inconsistent shapes");
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) {
            if (i != j && a(i, j) != 0.0)
                throw std::invalid_argument("OU damping matrix must be diagonal");
            if (i == j && !(a(i, i) > 0.0))
                throw std::invalid_argument("OU damping matrix must have positive diagonal");
        }
    if ((info - info.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, info.cwiseAbs().maxCoeff()))
        throw NotPositiveDefinite("information matrix is not symmetric");
    if (Eigen::LLT<Matrix>(info).info() != Eigen::Success)
        throw NotPositiveDefinite("information matrix is not positive definite");
}

OUParams ou_params(const DriftFunction& fin)
{
    DriftFunction f = prepared(fin);
    f.scheme = SchemeKind::Subsampling;
    const DriftValue at_x0 = drift_components(f, f.x0);
    const Eigen::Index d = at_x0.denominator.size();

    OUParams p;
    p.a = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (!(at_x0.denominator[i] > 0.0))
            throw ZeroDenominator("E|m^{-1} sum s_i(x0; Y_j)| vanishes; damping undefined");
        p.a(i, i) = 2.0 / at_x0.denominator[i];
    }
    auto model = make_model(f.model, f.truth.dim());
    p.info = information_at(f.truth, *model, f.x0, f.mc_budget, derive_seed(f.seed, 17));
    p.info = 0.5 * (p.info + p.info.transpose());
    p.b = 0.5 * p.a * p.info;
    p.validate();
    return p;
}

Matrix ou_stationary_covariance(const OUParams& params)
{
    // vec(B S + S B^T) = (I (x) B + B (x) I) vec(S).
    const Eigen::Index d = params.b.rows();
    const Matrix eye = Matrix::Identity(d, d);
    Matrix kron(d * d, d * d);
    for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c)
            kron.block(r * d, c * d, d, d) = eye(r, c) * params.b + params.b(r, c) * eye;
    const Vector rhs = Eigen::Map<const Vector>(params.a.data(), d * d);
    const Vector sol = kron.fullPivLu().solve(rhs);
    Matrix s = Eigen::Map<const Matrix>(sol.data(), d, d);
    return 0.5 * (s + s.transpose());
}

OUPath simulate_ou(const OUParams& params, OUStart start, double t_max, double dt, std::uint64_t seed,
                   bool noiseless)
{
    params.validate();
    if (!(dt > 0.0) || !(t_max >= 0.0))
        throw std::invalid_argument("OU simulation needs dt > 0 and t_max >= 0");
    const Eigen::Index d = params.b.rows();
    const auto rows = static_cast<Eigen::Index>(std::floor(t_max / dt * (1.0 + 1e-12))) + 1;
    Rng rng(seed);

    const Matrix cov = ou_stationary_covariance(params);
    Vector xi = Vector::Zero(d);
    if (start == OUStart::Stationary) {
        const Eigen::LLT<Matrix> llt(cov);
        if (llt.info() != Eigen::Success)
            throw NotPositiveDefinite("OU stationary covariance is not positive definite");
        Vector z(d);
        for (Eigen::Index i = 0; i < d; ++i)
            z[i] = rng.normal();
        xi = llt.matrixL() * z;
    }

    OUPath path;
    path.dt = dt;
    path.xi.resize(rows, d);
    path.xi.row(0) = xi.transpose();

    if (d == 1) {
        const double b = params.b(0, 0);
        const double rho = std::exp(-b * dt);
        const double sd = noiseless ? 0.0 : std::sqrt(cov(0, 0) * (1.0 - rho * rho));
        for (Eigen::Index k = 1; k < rows; ++k) {
            xi[0] = rho * xi[0] + sd * rng.normal();
            path.xi(k, 0) = xi[0];
        }
        return path;
    }

    const double b_norm = params.b.norm();
    const double h_max = b_norm > 0.0 ? 1e-3 / b_norm : dt;
    const auto sub = static_cast<long>(std::max(1.0, std::ceil(dt / h_max)));
    const double h = dt / static_cast<double>(sub);
    const Vector noise = noiseless ? Vector::Zero(d) : Vector(params.a.diagonal().cwiseSqrt() * std::sqrt(h));
    Vector z(d);
    for (Eigen::Index k = 1; k < rows; ++k) {
        for (long s = 0; s < sub; ++s) {
            for (Eigen::Index i = 0; i < d; ++i)
                z[i] = rng.normal();
            xi = xi - h * (params.b * xi) + noise.cwiseProduct(z);
        }
        path.xi.row(k) = xi.transpose();
    }
    return path;
}

void write_ou_csv(std::ostream& out, const OUPath& path)
{
    out << "t";
    for (Eigen::Index i = 1; i <= path.xi.cols(); ++i)
        out << ",xi" << i;
    out << '\n';
    for (Eigen::Index k = 0; k < path.xi.rows(); ++k) {
        out << fmt::format("{:.17g}", static_cast<double>(k) * path.dt);
        for (Eigen::Index i = 0; i < path.xi.cols(); ++i)
            out << fmt::format(",{:.17g}", path.xi(k, i));
        out << '\n';
    }
}

}  // namespace zz
