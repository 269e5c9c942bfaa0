#pragma once

#include <fstream>
#include <string>

#include "zz/experiments.hpp"

namespace zz::detail {

// Stream purposes for stream_seed.
enum Stream : std::uint64_t {
    kData = 1,
    kVelocity = 2,
    kSampler = 3,
    kInfo = 4,
    kDrift = 5,
    kRateDraws = 6,
};

std::ofstream open_output(const std::string& dir, const std::string& name);

Vector random_velocity(std::size_t d, std::uint64_t seed);

/// KL minimizer for the configured truth and model.
Vector limit_point(const ExperimentConfig& config);

/// I(x0) from a dedicated stream.
Matrix limit_information(const ExperimentConfig& config, const Vector& x0);

/// CSV header columns prefix1..prefixd.
std::string columns(const std::string& prefix, std::size_t d);

std::string row(const Eigen::Ref<const Vector>& x);

}  // namespace zz::detail
