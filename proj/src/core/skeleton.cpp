#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "zz/core.hpp"

namespace zz {

void PhaseState::validate() const
{
    if (x.size() != v.size())
        throw std::invalid_argument("position and velocity have different dimensions");
    if (x.size() == 0)
        throw std::invalid_argument("empty state");
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]))
            throw std::invalid_argument(fmt::format("non-finite position in coordinate {}", i));
        if (v[i] != 1.0 && v[i] != -1.0)
            throw std::invalid_argument(fmt::format("velocity {} in coordinate {} is not +-1", v[i], i));
    }
}

Vector flip(const Vector& v, std::size_t i)
{
    if (i >= static_cast<std::size_t>(v.size()))
        throw std::out_of_range(fmt::format("flip index {} outside dimension {}", i, v.size()));
    Vector out = v;
    out[static_cast<Eigen::Index>(i)] = -out[static_cast<Eigen::Index>(i)];
    return out;
}

void SimBudget::validate() const
{
    if (!(t_max > 0.0))
        throw std::invalid_argument("t_max must be positive");
    if (max_events == 0 || max_proposals == 0)
        throw std::invalid_argument("event and proposal caps must be positive");
}

void Skeleton::push_event(double t, const Vector& x, const Vector& v)
{
    if (dim_ == 0)
        dim_ = static_cast<std::size_t>(x.size());
    if (static_cast<std::size_t>(x.size()) != dim_ || static_cast<std::size_t>(v.size()) != dim_)
        throw std::invalid_argument("event dimension mismatch");
    if (!times_.empty() && !(t > times_.back()))
        throw std::invalid_argument(fmt::format("event time {} not after {}", t, times_.back()));
    times_.push_back(t);
    positions_.insert(positions_.end(), x.data(), x.data() + dim_);
    velocities_.insert(velocities_.end(), v.data(), v.data() + dim_);
    if (t > t_end_)
        t_end_ = t;
}

void Skeleton::set_end(double t_end)
{
    if (!times_.empty() && t_end < times_.back())
        throw std::invalid_argument("t_end before last event");
    t_end_ = t_end;
}

PhaseState Skeleton::start_state() const
{
    if (empty())
        throw std::logic_error("empty skeleton");
    return {position(0), velocity(0)};
}

PhaseState Skeleton::end_state() const
{
    if (empty())
        throw std::logic_error("empty skeleton");
    const std::size_t k = size() - 1;
    Vector v = velocity(k);
    Vector x = position(k) + v * (t_end_ - times_[k]);
    return {x, v};
}

void Skeleton::validate(double rel_tol) const
{
    if (empty())
        throw std::logic_error("empty skeleton");
    if (times_.front() != 0.0)
        throw std::logic_error("first event not at t = 0");
    for (std::size_t k = 0; k + 1 < size(); ++k) {
        const double dt = times_[k + 1] - times_[k];
        if (!(dt > 0.0))
            throw std::logic_error(fmt::format("event times not increasing at {}", k + 1));
        int flips = 0;
        for (std::size_t i = 0; i < dim_; ++i) {
            const double xk = positions_[k * dim_ + i];
            const double vk = velocities_[k * dim_ + i];
            const double x1 = positions_[(k + 1) * dim_ + i];
            const double tol = rel_tol * (times_[k + 1] + std::abs(xk) + 1.0);
            if (std::abs(x1 - xk - vk * dt) > tol)
                throw std::logic_error(fmt::format("unit speed violated at event {} coordinate {}", k + 1, i));
            if (velocities_[(k + 1) * dim_ + i] != vk)
                ++flips;
        }
        if (flips != 1)
            throw std::logic_error(fmt::format("{} coordinates flipped at event {}", flips, k + 1));
    }
    if (t_end_ < times_.back())
        throw std::logic_error("t_end before last event");
}

void SkeletonRecorder::start(double t, const PhaseState& z)
{
    skeleton_ = Skeleton(z.dim());
    skeleton_.push_event(t, z.x, z.v);
}

void SkeletonRecorder::event(double t, const PhaseState& z, std::size_t)
{
    skeleton_.push_event(t, z.x, z.v);
}

void SkeletonRecorder::finish(double t, const PhaseState&)
{
    skeleton_.set_end(t);
}

void write_skeleton_csv(std::ostream& out, const Skeleton& skeleton)
{
    const std::size_t d = skeleton.dim();
    std::string line = "t";
    for (std::size_t i = 1; i <= d; ++i)
        line += fmt::format(",x{}", i);
    for (std::size_t i = 1; i <= d; ++i)
        line += fmt::format(",v{}", i);
    out << line << '\n';
    auto row = [&](double t, const Vector& x, const Vector& v) {
        std::string s = fmt::format("{:.17g}", t);
        for (std::size_t i = 0; i < d; ++i)
            s += fmt::format(",{:.17g}", x[static_cast<Eigen::Index>(i)]);
        for (std::size_t i = 0; i < d; ++i)
            s += fmt::format(",{:g}", v[static_cast<Eigen::Index>(i)]);
        out << s << '\n';
    };
    for (std::size_t k = 0; k < skeleton.size(); ++k)
        row(skeleton.time(k), skeleton.position(k), skeleton.velocity(k));
    if (!skeleton.empty()) {
        const PhaseState end = skeleton.end_state();
        row(skeleton.t_end(), end.x, end.v);
    }
}

Skeleton read_skeleton_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("skeleton CSV: missing header");
    std::size_t cols = 1;
    for (char c : line)
        cols += (c == ',');
    if (cols < 3 || cols % 2 == 0)
        throw std::runtime_error("skeleton CSV: malformed header '" + line + "'");
    const std::size_t d = (cols - 1) / 2;

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            vals.push_back(std::stod(cell));
        if (vals.size() != cols)
            throw std::runtime_error("skeleton CSV: wrong column count in '" + line + "'");
        rows.push_back(std::move(vals));
    }
    if (rows.empty())
        throw std::runtime_error("skeleton CSV: no rows");

    Skeleton sk(d);
    Vector x(static_cast<Eigen::Index>(d));
    Vector v(static_cast<Eigen::Index>(d));
    const std::size_t n_events = rows.size() == 1 ? 1 : rows.size() - 1;
    for (std::size_t k = 0; k < n_events; ++k) {
        for (std::size_t i = 0; i < d; ++i) {
            x[static_cast<Eigen::Index>(i)] = rows[k][1 + i];
            v[static_cast<Eigen::Index>(i)] = rows[k][1 + d + i];
        }
        sk.push_event(rows[k][0], x, v);
    }
    sk.set_end(rows.back()[0]);
    return sk;
}

}  // namespace zz
