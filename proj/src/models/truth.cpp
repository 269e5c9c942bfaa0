#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/cauchy.hpp>
#include <boost/math/distributions/laplace.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "zz/models.hpp"

namespace zz {

std::string to_string(Family family)
{
    switch (family) {
    case Family::Gaussian: return "gaussian";
    case Family::Laplace: return "laplace";
    case Family::Cauchy: return "cauchy";
    case Family::StudentT: return "student_t";
    case Family::Logistic: return "logistic";
    }
    return "unknown";
}

Family parse_family(const std::string& name)
{
    if (name == "gaussian" || name == "normal")
        return Family::Gaussian;
    if (name == "laplace")
        return Family::Laplace;
    if (name == "cauchy")
        return Family::Cauchy;
    if (name == "student_t" || name == "t")
        return Family::StudentT;
    if (name == "logistic")
        return Family::Logistic;
    throw std::invalid_argument("unknown truth family '" + name + "'");
}

std::string Covariate::describe() const
{
    switch (kind) {
    case Kind::Point: return fmt::format("point:{:.17g}", a);
    case Kind::Normal: return fmt::format("normal:{:.17g}:{:.17g}", a, b);
    case Kind::Uniform: return fmt::format("uniform:{:.17g}:{:.17g}", a, b);
    }
    return {};
}

Covariate Covariate::parse(const std::string& text)
{
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ':'))
        parts.push_back(part);
    auto num = [&](std::size_t k) {
        if (k >= parts.size())
            throw std::invalid_argument("covariate '" + text + "' is missing a parameter");
        return std::stod(parts[k]);
    };
    Covariate c;
    if (parts.empty())
        throw std::invalid_argument("empty covariate description");
    if (parts[0] == "point") {
        c.kind = Kind::Point;
        c.a = num(1);
        c.b = 0.0;
    } else if (parts[0] == "normal") {
        c.kind = Kind::Normal;
        c.a = num(1);
        c.b = num(2);
        if (!(c.b > 0.0))
            throw std::invalid_argument("normal covariate needs a positive sd");
    } else if (parts[0] == "uniform") {
        c.kind = Kind::Uniform;
        c.a = num(1);
        c.b = num(2);
        if (!(c.b > c.a))
            throw std::invalid_argument("uniform covariate needs lo < hi");
    } else {
        throw std::invalid_argument("unknown covariate kind '" + parts[0] + "'");
    }
    return c;
}

std::size_t TruthSpec::dim() const
{
    return family == Family::Logistic ? static_cast<std::size_t>(x0.size()) : 1;
}

ObservationKind TruthSpec::observation_kind() const
{
    return family == Family::Logistic ? ObservationKind::Labeled : ObservationKind::Scalar;
}

std::string TruthSpec::describe() const
{
    if (family == Family::Logistic) {
        std::string s = "logistic(x0=";
        for (Eigen::Index i = 0; i < x0.size(); ++i)
            s += fmt::format("{}{:.17g}", i ? "," : "", x0[i]);
        s += "; w=";
        for (std::size_t i = 0; i < covariates.size(); ++i)
            s += (i ? " x " : "") + covariates[i].describe();
        return s + ")";
    }
    std::string s = fmt::format("{}(location={:.17g}, scale={:.17g}", to_string(family), location, scale);
    if (family == Family::StudentT)
        s += fmt::format(", dof={:.17g}", dof);
    return s + ")";
}

double TruthSpec::sample(Rng& rng, double* w) const
{
    switch (family) {
    case Family::Gaussian:
        return location + scale * rng.normal();
    case Family::Laplace: {
        const double e = rng.exponential();
        return location + scale * (rng.uniform() < 0.5 ? -e : e);
    }
    case Family::Cauchy:
        return location + scale * std::tan(std::numbers::pi * (rng.uniform() - 0.5));
    case Family::StudentT:
        return location + scale * std::student_t_distribution<double>(dof)(rng.engine());
    case Family::Logistic: {
        double u = 0.0;
        for (std::size_t i = 0; i < covariates.size(); ++i) {
            const Covariate& c = covariates[i];
            switch (c.kind) {
            case Covariate::Kind::Point: w[i] = c.a; break;
            case Covariate::Kind::Normal: w[i] = c.a + c.b * rng.normal(); break;
            case Covariate::Kind::Uniform: w[i] = c.a + (c.b - c.a) * rng.uniform(); break;
            }
            u += x0[static_cast<Eigen::Index>(i)] * w[i];
        }
        return rng.uniform() < 1.0 / (1.0 + std::exp(-u)) ? 1.0 : 0.0;
    }
    }
    throw std::logic_error("unknown family");
}

double TruthSpec::pdf(double y) const
{
    if (family == Family::StudentT) {
        boost::math::students_t_distribution<double> d(dof);
        return boost::math::pdf(d, (y - location) / scale) / scale;
    }
    switch (family) {
    case Family::Gaussian: return boost::math::pdf(boost::math::normal_distribution<double>(location, scale), y);
    case Family::Laplace: return boost::math::pdf(boost::math::laplace_distribution<double>(location, scale), y);
    case Family::Cauchy: return boost::math::pdf(boost::math::cauchy_distribution<double>(location, scale), y);
    default: break;
    }
    throw std::invalid_argument("pdf requested for the logistic family");
}

double TruthSpec::cdf(double y) const
{
    if (family == Family::StudentT) {
        boost::math::students_t_distribution<double> d(dof);
        return boost::math::cdf(d, (y - location) / scale);
    }
    switch (family) {
    case Family::Gaussian: return boost::math::cdf(boost::math::normal_distribution<double>(location, scale), y);
    case Family::Laplace: return boost::math::cdf(boost::math::laplace_distribution<double>(location, scale), y);
    case Family::Cauchy: return boost::math::cdf(boost::math::cauchy_distribution<double>(location, scale), y);
    default: break;
    }
    throw std::invalid_argument("cdf requested for the logistic family");
}

double TruthSpec::quantile(double p) const
{
    if (family == Family::StudentT) {
        boost::math::students_t_distribution<double> d(dof);
        return location + scale * boost::math::quantile(d, p);
    }
    switch (family) {
    case Family::Gaussian: return boost::math::quantile(boost::math::normal_distribution<double>(location, scale), p);
    case Family::Laplace: return boost::math::quantile(boost::math::laplace_distribution<double>(location, scale), p);
    case Family::Cauchy: return boost::math::quantile(boost::math::cauchy_distribution<double>(location, scale), p);
    default: break;
    }
    throw std::invalid_argument("quantile requested for the logistic family");
}

bool TruthSpec::well_specified_for(ModelKind model) const
{
    switch (model) {
    case ModelKind::Gaussian: return family == Family::Gaussian && scale == 1.0;
    case ModelKind::Laplace: return family == Family::Laplace && scale == 1.0;
    case ModelKind::Cauchy: return family == Family::Cauchy && scale == 1.0;
    case ModelKind::Logistic: return family == Family::Logistic;
    }
    return false;
}

Dataset generate_data(const TruthSpec& truth, std::size_t n, std::uint64_t seed)
{
    if (n == 0)
        throw std::invalid_argument("n must be at least 1");
    if (truth.family == Family::Logistic && truth.covariates.size() != static_cast<std::size_t>(truth.x0.size()))
        throw std::invalid_argument("logistic truth needs one covariate factor per coordinate");
    Dataset data;
    data.kind = truth.observation_kind();
    data.dim = truth.dim();
    data.seed = seed;
    data.provenance = truth.describe();
    data.y.resize(n);
    if (data.kind == ObservationKind::Labeled)
        data.w.resize(n * data.dim);
    Rng rng(seed);
    for (std::size_t j = 0; j < n; ++j)
        data.y[j] = truth.sample(rng, data.kind == ObservationKind::Labeled ? data.w.data() + j * data.dim : nullptr);
    return data;
}

}  // namespace zz
