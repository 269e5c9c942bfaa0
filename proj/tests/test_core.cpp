#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "zz/core.hpp"
#include "zz/errors.hpp"

using namespace zz;

namespace {

Vector vec(std::initializer_list<double> xs)
{
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index k = 0;
    for (double x : xs)
        v[k++] = x;
    return v;
}

/// Standard Gaussian target in 1-d: rate (v x)_+, bound (v x)_+ + t.
ExplicitRate gaussian_rate()
{
    return ExplicitRate(
        1, [](const PhaseState& z, std::size_t) { return std::max(0.0, z.v[0] * z.x[0]); },
        [](const PhaseState& z, std::size_t i) {
            return BoundSegment::affine(i, std::max(0.0, z.v[0] * z.x[0]), 1.0);
        });
}

ExplicitRate constant_rate(double rate, double bound)
{
    return ExplicitRate(
        1, [rate](const PhaseState&, std::size_t) { return rate; },
        [bound](const PhaseState&, std::size_t i) { return BoundSegment::constant(i, bound); });
}

}  // namespace

TEST_CASE("flip negates one coordinate")
{
    CHECK(flip(vec({1, 1}), 0) == vec({-1, 1}));
    CHECK(flip(vec({-1, 1, -1}), 2) == vec({-1, 1, 1}));
    const Vector v = vec({1, -1, 1, 1});
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(flip(flip(v, i), i) == v);
    CHECK_THROWS_AS(flip(v, 4), std::out_of_range);
}

TEST_CASE("phase state validation")
{
    CHECK_NOTHROW((PhaseState{vec({0.0, 1.0}), vec({1, -1})}.validate()));
    CHECK_THROWS_AS((PhaseState{vec({0.0}), vec({0.5})}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((PhaseState{vec({NAN}), vec({1})}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((PhaseState{vec({0.0, 1.0}), vec({1})}.validate()), std::invalid_argument);
}

TEST_CASE("bound segment arrivals")
{
    CHECK(BoundSegment::constant(0, 2.0).first_arrival(1.0) == doctest::Approx(0.5));
    CHECK(BoundSegment::constant(0, 0.0).first_arrival(1.0) == kInf);
    CHECK(BoundSegment::constant(0, 2.0, 0.4).first_arrival(1.0) == kInf);
    // a t + b t^2 / 2 = E with a = 1, b = 2, E = 2: t^2 + t - 2 = 0.
    CHECK(BoundSegment::affine(0, 1.0, 2.0).first_arrival(2.0) == doctest::Approx(1.0));
    CHECK(BoundSegment::affine(0, 0.0, 1.0).first_arrival(0.5) == doctest::Approx(1.0));
    // Decreasing bound integrates to a^2 / (2|b|) = 1 at most.
    const auto dec = BoundSegment::affine(0, 2.0, -2.0, 1.0);
    CHECK(dec.first_arrival(0.75) == doctest::Approx(0.5));
    CHECK(dec.first_arrival(1.5) == kInf);
    CHECK_THROWS_AS(BoundSegment::affine(0, 1.0, -2.0, 1.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(BoundSegment::constant(0, -1.0).validate(), std::invalid_argument);
}

TEST_CASE("position_at interpolates left-closed")
{
    Skeleton sk;
    sk.push_event(0.0, vec({1, 2}), vec({1, -1}));
    sk.set_end(2.0);
    CHECK(position_at(sk, 0.5) == vec({1.5, 1.5}));
    CHECK(position_at(sk, 2.0) == vec({3.0, 0.0}));

    sk = Skeleton();
    sk.push_event(0.0, vec({0}), vec({1}));
    sk.push_event(1.0, vec({1}), vec({-1}));
    sk.set_end(3.0);
    CHECK(position_at(sk, 1.0)[0] == 1.0);
    CHECK(position_at(sk, 3.0)[0] == -1.0);
    CHECK_THROWS_AS(position_at(sk, 3.5), std::out_of_range);
    CHECK_THROWS_AS(position_at(sk, -0.1), std::out_of_range);
}

TEST_CASE("discretize")
{
    Skeleton line;
    line.push_event(0.0, vec({0}), vec({1}));
    line.set_end(2.0);
    auto pts = discretize(line, 2.0);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0][0] == 0.0);
    CHECK(pts[1][0] == 2.0);
    CHECK(discretize(line, 5.0).size() == 1);

    Skeleton kink;
    kink.push_event(0.0, vec({0}), vec({1}));
    kink.push_event(1.0, vec({1}), vec({-1}));
    kink.set_end(2.0);
    pts = discretize(kink, 0.75);
    REQUIRE(pts.size() == 3);
    CHECK(pts[1][0] == doctest::Approx(0.75));
    CHECK(pts[2][0] == doctest::Approx(0.5));  // 1 - (1.5 - 1)
    CHECK_THROWS_AS(discretize(kink, 0.0), std::invalid_argument);
}

TEST_CASE("path averages")
{
    Skeleton ramp;
    ramp.push_event(0.0, vec({0}), vec({1}));
    ramp.set_end(2.0);
    CHECK(path_average(ramp, [](const Vector& x) { return x[0]; }, 0.0, 2.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(path_average(ramp, [](const Vector& x) { return x[0] * x[0]; }, 0.0, 2.0) ==
          doctest::Approx(4.0 / 3.0).epsilon(1e-14));

    Skeleton cross;
    cross.push_event(0.0, vec({-1}), vec({1}));
    cross.set_end(2.0);
    auto ind = [](const Vector& x) { return x[0] > 0.0 ? 1.0 : 0.0; };
    // Midpoint Riemann sum oracle.
    const int cells = 1'000'000;
    double riemann = 0.0;
    for (int k = 0; k < cells; ++k)
        riemann += ind(vec({-1.0 + 2.0 * (k + 0.5) / cells}));
    riemann /= cells;
    CHECK(path_average(cross, ind, 0.0, 2.0) == doctest::Approx(riemann).epsilon(1e-6));
    CHECK(path_average(cross, ind, 0.0, 2.0) == doctest::Approx(0.5).epsilon(1e-8));
    CHECK_THROWS_AS(path_average(cross, ind, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("first switch time of the 1-d Gaussian target")
{
    auto rates = gaussian_rate();
    const int reps = 10'000;
    std::vector<double> t1;
    for (int r = 0; r < reps; ++r) {
        SimBudget budget{50.0, 1};
        const auto res = simulate(rates, {vec({0}), vec({1})}, budget, derive_seed(11, static_cast<std::uint64_t>(r)));
        REQUIRE(res.skeleton.size() == 2);
        t1.push_back(res.skeleton.time(1));
    }
    std::sort(t1.begin(), t1.end());
    double ks = 0.0;
    for (int k = 0; k < reps; ++k) {
        const double f = 1.0 - std::exp(-0.5 * t1[static_cast<std::size_t>(k)] * t1[static_cast<std::size_t>(k)]);
        ks = std::max({ks, std::abs(f - static_cast<double>(k) / reps), std::abs(f - static_cast<double>(k + 1) / reps)});
    }
    // 1% critical value of the one-sample KS statistic.
    CHECK(ks < 1.63 / std::sqrt(reps));
}

TEST_CASE("zero rate gives a straight line")
{
    auto rates = constant_rate(0.0, 0.0);
    const auto res = simulate(rates, {vec({1.0}), vec({-1})}, SimBudget{5.0}, 3);
    CHECK(res.skeleton.size() == 1);
    CHECK(res.skeleton.t_end() == 5.0);
    CHECK(res.skeleton.end_state().x[0] == doctest::Approx(-4.0));
    CHECK(res.ledger.proposals == 0);
}

TEST_CASE("constant rate thinning intensity")
{
    auto rates = constant_rate(2.0, 3.0);
    const double t = 1e4;
    const auto res = simulate(rates, {vec({0}), vec({1})}, SimBudget{t}, 1);
    const double count = static_cast<double>(res.ledger.accepted);
    CHECK(std::abs(count - 2.0 * t) <= 3.0 * std::sqrt(2.0 * t));
    CHECK(res.ledger.accepted <= res.ledger.proposals);
    CHECK(res.skeleton.size() == res.ledger.accepted + 1);
}

TEST_CASE("thinned counts are Poisson")
{
    auto rates = constant_rate(2.0, 3.0);
    const int reps = 10'000;
    const double t = 2.5;
    const int top = 12;
    std::vector<double> observed(top + 1, 0.0);
    for (int r = 0; r < reps; ++r) {
        const auto res = simulate(rates, {vec({0}), vec({1})}, SimBudget{t}, derive_seed(99, static_cast<std::uint64_t>(r)));
        observed[std::min<std::size_t>(res.ledger.accepted, top)] += 1.0;
    }
    boost::math::poisson_distribution<double> pois(2.0 * t);
    double chi2 = 0.0;
    for (int k = 0; k <= top; ++k) {
        const double p = k < top ? boost::math::pdf(pois, k) : boost::math::cdf(boost::math::complement(pois, top - 1));
        const double e = p * reps;
        chi2 += (observed[static_cast<std::size_t>(k)] - e) * (observed[static_cast<std::size_t>(k)] - e) / e;
    }
    const double pval = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(top), chi2));
    CHECK(pval > 0.01);
}

TEST_CASE("same seed, same skeleton")
{
    auto rates = ExplicitRate(
        2,
        [](const PhaseState& z, std::size_t i) {
            const auto k = static_cast<Eigen::Index>(i);
            return std::max(0.0, z.v[k] * z.x[k]);
        },
        [](const PhaseState& z, std::size_t i) {
            const auto k = static_cast<Eigen::Index>(i);
            return BoundSegment::affine(i, std::max(0.0, z.v[k] * z.x[k]), 1.0);
        });
    const PhaseState z0{vec({0.3, -1.0}), vec({1, 1})};
    const auto a = simulate(rates, z0, SimBudget{200.0}, 42);
    const auto b = simulate(rates, z0, SimBudget{200.0}, 42);
    CHECK(a.skeleton == b.skeleton);
    std::ostringstream sa, sb;
    write_skeleton_csv(sa, a.skeleton);
    write_skeleton_csv(sb, b.skeleton);
    CHECK(sa.str() == sb.str());
    CHECK_NOTHROW(a.skeleton.validate());

    std::istringstream in(sa.str());
    const Skeleton back = read_skeleton_csv(in);
    CHECK(back == a.skeleton);
    CHECK(sa.str().substr(0, 15) == "t,x1,x2,v1,v2\n0");
}

TEST_CASE("budget caps stop the run")
{
    auto rates = constant_rate(2.0, 3.0);
    auto res = simulate(rates, {vec({0}), vec({1})}, SimBudget{1e6, 10}, 1);
    CHECK(res.stop == StopReason::EventCap);
    CHECK(res.ledger.accepted == 10);
    res = simulate(rates, {vec({0}), vec({1})}, SimBudget{1e6, 1000, 7}, 1);
    CHECK(res.stop == StopReason::ProposalCap);
    CHECK(res.ledger.proposals == 7);
    CHECK_THROWS_AS((SimBudget{0.0}.validate()), std::invalid_argument);
}

TEST_CASE("bound violations are fatal unless clamped")
{
    auto rates = constant_rate(2.0, 1.0);
    CHECK_THROWS_AS((simulate(rates, {vec({0}), vec({1})}, SimBudget{10.0}, 1)), BoundViolation);
    SimOptions clamp;
    clamp.clamp_violations = true;
    const auto res = simulate(rates, {vec({0}), vec({1})}, SimBudget{10.0}, 1, clamp);
    CHECK(res.ledger.bound_violations == res.ledger.proposals);
    CHECK(res.ledger.accepted == res.ledger.proposals);
}

TEST_CASE("resumed runs continue the same path")
{
    auto rates = gaussian_rate();
    ZigZagSampler sampler(rates, {vec({0}), vec({1})}, 8);
    SkeletonRecorder rec;
    rec.start(0.0, sampler.state());
    sampler.advance(10.0, rec);
    sampler.advance(20.0, rec);
    rec.finish(sampler.time(), sampler.state());
    const auto whole = simulate(rates, {vec({0}), vec({1})}, SimBudget{20.0}, 8);
    // The split run draws extra exponentials at the pause, so only structure is compared.
    CHECK(rec.skeleton().t_end() == 20.0);
    CHECK_NOTHROW(rec.skeleton().validate());
    CHECK(whole.skeleton.t_end() == 20.0);
}
