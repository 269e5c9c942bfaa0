#include "detail.hpp"

#include <filesystem>

#include <fmt/format.h>

namespace zz::detail {

std::ofstream open_output(const std::string& dir, const std::string& name)
{
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    return out;
}

Vector random_velocity(std::size_t d, std::uint64_t seed)
{
    Rng rng(seed);
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return v;
}

Vector limit_point(const ExperimentConfig& config)
{
    auto model = make_model(config.model, config.dim());
    return kl_minimizer(config.truth, *model, 1'000'000, stream_seed(config.seed, kInfo)).x0;
}

Matrix limit_information(const ExperimentConfig& config, const Vector& x0)
{
    auto model = make_model(config.model, config.dim());
    Matrix info = information_at(config.truth, *model, x0, 1'000'000, stream_seed(config.seed, kInfo, 1));
    return 0.5 * (info + info.transpose());
}

std::string columns(const std::string& prefix, std::size_t d)
{
    std::string out;
    for (std::size_t i = 1; i <= d; ++i)
        out += fmt::format(",{}{}", prefix, i);
    return out;
}

std::string row(const Eigen::Ref<const Vector>& x)
{
    std::string out;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        out += "," + csv_num(x[i]);
    return out;
}

}  // namespace zz::detail

namespace zz {

DriftFunction experiment_drift(const ExperimentConfig& config, SchemeKind kind, std::size_t n)
{
    DriftFunction f;
    f.scheme = kind;
    f.model = config.model;
    f.truth = config.truth;
    f.m = kind == SchemeKind::Canonical ? 1 : batch_size(config, n);
    if (config.x_star.size() > 0)
        f.x_star = config.x_star;
    else if (config.reference.kind == ReferenceStrategy::Kind::Fixed)
        f.x_star = config.reference.value;
    f.method = config.drift_method;
    f.mc_budget = config.drift_mc_budget;
    f.seed = stream_seed(config.seed, detail::kDrift);
    f.mixed_radius = config.mixed_radius;
    return f;
}

}  // namespace zz
