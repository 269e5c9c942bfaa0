#include "zz/errors.hpp"

#include <utility>

namespace zz {

BoundViolation::BoundViolation(double t, Eigen::VectorXd x_, Eigen::VectorXd v_, std::size_t coord_,
                               double rate_, double bound_)
    : Error("realized rate " + std::to_string(rate_) + " exceeds bound " + std::to_string(bound_) +
            " for coordinate " + std::to_string(coord_) + " at t=" + std::to_string(t)),
      time(t), x(std::move(x_)), v(std::move(v_)), coord(coord_), rate(rate_), bound(bound_)
{
}

namespace {

std::string config_message(const std::string& what, const std::string& key, std::size_t line)
{
    std::string msg;
    if (line > 0)
        msg += "line " + std::to_string(line) + ": ";
    if (!key.empty())
        msg += "key '" + key + "': ";
    return msg + what;
}

}  // namespace

ConfigError::ConfigError(const std::string& what, std::string key_, std::size_t line_)
    : Error(config_message(what, key_, line_)), key(std::move(key_)), line(line_)
{
}

}  // namespace zz
