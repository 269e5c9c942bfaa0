#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "zz/core.hpp"

namespace zz {

namespace {

std::size_t segment_index(const Skeleton& sk, double t)
{
    const auto& ts = sk.times();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    return static_cast<std::size_t>(it - ts.begin()) - 1;
}

double simpson(const std::function<double(double)>& g, double a, double b, double fa, double fm, double fb,
               double whole, double eps, int depth)
{
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = g(lm);
    const double frm = g(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || (depth < 47 && std::abs(delta) <= 15.0 * eps))
        return left + right + delta / 15.0;
    return simpson(g, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           simpson(g, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

}  // namespace

Vector position_at(const Skeleton& sk, double t)
{
    if (sk.empty())
        throw std::out_of_range("empty skeleton");
    if (!(t >= sk.time(0)) || !(t <= sk.t_end()))
        throw std::out_of_range(fmt::format("time {} outside [{}, {}]", t, sk.time(0), sk.t_end()));
    const std::size_t k = segment_index(sk, t);
    return sk.position(k) + sk.velocity(k) * (t - sk.time(k));
}

std::vector<Vector> discretize(const Skeleton& sk, double dt)
{
    if (!(dt > 0.0))
        throw std::invalid_argument("dt must be positive");
    std::vector<Vector> out;
    if (sk.empty())
        return out;
    const double t0 = sk.time(0);
    const double span = sk.t_end() - t0;
    const auto count = static_cast<std::size_t>(std::floor(span * (1.0 + 1e-12) / dt)) + 1;
    out.reserve(count);
    std::size_t k = 0;
    for (std::size_t s = 0; s < count; ++s) {
        const double t = std::min(t0 + static_cast<double>(s) * dt, sk.t_end());
        while (k + 1 < sk.size() && sk.time(k + 1) <= t)
            ++k;
        out.emplace_back(sk.position(k) + sk.velocity(k) * (t - sk.time(k)));
    }
    return out;
}

double path_average(const Skeleton& sk, const std::function<double(const Vector&)>& f, double t0, double t1)
{
    if (sk.empty() || !(t0 >= sk.time(0)) || !(t1 <= sk.t_end()) || !(t0 < t1))
        throw std::invalid_argument(fmt::format("invalid averaging interval [{}, {}]", t0, t1));

    double total = 0.0;
    Vector x;
    for (std::size_t k = segment_index(sk, t0); k < sk.size(); ++k) {
        const double a = std::max(t0, sk.time(k));
        const double b = std::min(t1, k + 1 < sk.size() ? sk.time(k + 1) : sk.t_end());
        if (a >= t1)
            break;
        if (!(b > a))
            continue;
        const auto xk = sk.position(k);
        const auto vk = sk.velocity(k);
        const double tk = sk.time(k);
        auto g = [&](double s) {
            x = xk + vk * (s - tk);
            return f(x);
        };
        const double fa = g(a);
        const double fm = g(0.5 * (a + b));
        const double fb = g(b);
        const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        const double eps = 1e-8 * std::max(std::abs(whole), 1e-6 * (b - a));
        total += simpson(g, a, b, fa, fm, fb, whole, eps, 50);
    }
    return total / (t1 - t0);
}

}  // namespace zz
