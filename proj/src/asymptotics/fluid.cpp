#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "zz/asymptotics.hpp"

namespace zz {

namespace {

bool in_h(const DriftValue& v)
{
    return v.denominator.minCoeff() < kZeroDenominator;
}

}  // namespace

FluidPath solve_fluid_ode(const DriftFunction& fin, const Vector& x_start, double t_max, double step)
{
    if (!(t_max > 0.0))
        throw std::invalid_argument("fluid ODE horizon must be positive");
    if (step == 0.0)
        step = 1e-3 * t_max;
    if (!(step > 0.0))
        throw std::invalid_argument("fluid ODE step must be positive");
    const DriftFunction f = prepared(fin);
    auto rhs = [&](const Vector& x) { return drift_components(f, x); };

    FluidPath path;
    Vector x = x_start;
    double t = 0.0;
    path.t.push_back(t);
    path.x.push_back(x);
    DriftValue here = rhs(x);
    if (in_h(here)) {
        path.status = FluidStatus::HitH;
        path.t_stop = 0.0;
        return path;
    }

    const std::size_t steps = static_cast<std::size_t>(std::ceil(t_max / step * (1.0 - 1e-12)));
    Vector x_hit;
    for (std::size_t k = 0; k < steps; ++k) {
        const double h = std::min(step, t_max - t);
        const Vector k1 = here.b;
        const DriftValue s2 = rhs(x + 0.5 * h * k1);
        const DriftValue s3 = rhs(x + 0.5 * h * s2.b);
        const DriftValue s4 = rhs(x + h * s3.b);
        const Vector x_next = x + h / 6.0 * (k1 + 2.0 * s2.b + 2.0 * s3.b + s4.b);
        DriftValue next = rhs(x_next);

        // A numerator sign change anywhere in the step means the path may
        // have reached H. Locate the zero by bisection, first along the Euler
        // ray (exact for piecewise-constant drifts), else along the chord.
        bool crossed = false;
        double t_frac = 1.0;
        for (Eigen::Index i = 0; i < x.size() && !crossed; ++i) {
            const bool neg = here.numerator[i] < 0.0;
            bool change = false;
            for (const DriftValue* v : {&s2, &s3, &s4, static_cast<const DriftValue*>(&next)})
                change = change || (v->numerator[i] < 0.0) != neg || v->denominator[i] < kZeroDenominator;
            if (!change)
                continue;
            // "Reached" means the numerator changed sign or the point is in H.
            auto reached = [&](const Vector& y) {
                const DriftValue v = rhs(y);
                return (v.numerator[i] < 0.0) != neg || v.denominator[i] < kZeroDenominator;
            };
            Vector seg = h * k1;
            if (!reached(x + seg))
                seg = x_next - x;
            if (!reached(x + seg))
                continue;
            double lo = 0.0;
            double hi = 1.0;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (reached(x + mid * seg))
                    hi = mid;
                else
                    lo = mid;
            }
            if (rhs(x + hi * seg).denominator[i] < kZeroDenominator) {
                crossed = true;
                t_frac = hi;
                x_hit = x + hi * seg;
            }
        }
        if (!crossed && in_h(next)) {
            crossed = true;
            x_hit = x_next;
        }
        if (crossed) {
            t += t_frac * h;
            path.t.push_back(t);
            path.x.push_back(x_hit);
            path.status = FluidStatus::HitH;
            path.t_stop = t;
            return path;
        }
        t = (k + 1 == steps) ? t_max : t + h;
        x = x_next;
        here = std::move(next);
        path.t.push_back(t);
        path.x.push_back(x);
    }
    path.status = FluidStatus::Completed;
    path.t_stop = t_max;
    return path;
}

Vector fluid_position(const FluidPath& path, double t)
{
    if (path.t.empty())
        throw std::invalid_argument("empty fluid path");
    if (t <= path.t.front())
        return path.x.front();
    if (t >= path.t.back())
        return path.x.back();
    const auto it = std::upper_bound(path.t.begin(), path.t.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - path.t.begin());
    const double w = (t - path.t[k - 1]) / (path.t[k] - path.t[k - 1]);
    return path.x[k - 1] + w * (path.x[k] - path.x[k - 1]);
}

void write_fluid_csv(std::ostream& out, const FluidPath& path)
{
    const std::size_t d = path.x.empty() ? 1 : static_cast<std::size_t>(path.x.front().size());
    out << "t";
    for (std::size_t i = 1; i <= d; ++i)
        out << ",x" << i;
    out << '\n';
    for (std::size_t k = 0; k < path.t.size(); ++k) {
        out << fmt::format("{:.17g}", path.t[k]);
        for (Eigen::Index i = 0; i < path.x[k].size(); ++i)
            out << fmt::format(",{:.17g}", path.x[k][i]);
        out << '\n';
    }
}

}  // namespace zz
