#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "zz/errors.hpp"
#include "zz/rates.hpp"

using namespace zz;

namespace {

Dataset scalar_data(std::vector<double> y)
{
    Dataset d;
    d.y = std::move(y);
    return d;
}

Vector x1(double x)
{
    return Vector::Constant(1, x);
}

SchemeConfig scheme(SchemeKind kind, std::size_t m = 1, ReferenceStrategy ref = {})
{
    SchemeConfig c;
    c.kind = kind;
    c.m = m;
    c.reference = std::move(ref);
    return c;
}

TruthSpec logistic_truth()
{
    TruthSpec t;
    t.family = Family::Logistic;
    t.x0 = Vector(2);
    t.x0 << 1.0, 2.0;
    t.covariates = {Covariate::parse("point:1"), Covariate::parse("normal:0:1")};
    return t;
}

}  // namespace

TEST_CASE("per-datum terms")
{
    const auto data = scalar_data({-1.0, 0.5, 2.0, 4.5});
    GaussianLocation gauss;
    const GradEstimatorScheme cv(data, gauss, scheme(SchemeKind::ControlVariate, 1, ReferenceStrategy::fixed(x1(0.3))));
    const double ybar = data.mean_y();
    for (std::size_t j = 0; j < data.size(); ++j)
        CHECK(cv.per_datum_term(j, x1(1.7), 0) == doctest::Approx(1.7 - ybar).epsilon(1e-14));

    LaplaceLocation laplace;
    const auto single = scalar_data({0.0});
    const GradEstimatorScheme ss(single, laplace, scheme(SchemeKind::Subsampling));
    CHECK(ss.per_datum_term(0, x1(2.0), 0) == 1.0);

    CauchyLocation cauchy;
    const auto cdata = scalar_data({-0.3, 0.2, 1.1});
    auto mixed_cfg = scheme(SchemeKind::Mixed);
    mixed_cfg.mixed_radius = 1.605;
    const GradEstimatorScheme mixed(cdata, cauchy, mixed_cfg);
    const GradEstimatorScheme plain(cdata, cauchy, scheme(SchemeKind::Subsampling));
    const GradEstimatorScheme cvc(cdata, cauchy, scheme(SchemeKind::ControlVariate));
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(mixed.per_datum_term(j, x1(5.0), 0) == plain.per_datum_term(j, x1(5.0), 0));
        CHECK(mixed.per_datum_term(j, x1(0.5), 0) == cvc.per_datum_term(j, x1(0.5), 0));
    }

    std::uint64_t evals = 0;
    cv.per_datum_term(0, x1(0.0), 0, &evals);
    CHECK(evals == 2);
    CHECK_THROWS_AS(cv.per_datum_term(9, x1(0.0), 0), std::out_of_range);
}

TEST_CASE("estimates")
{
    const auto data = generate_data(TruthSpec{}, 30, 2);
    GaussianLocation gauss;
    Rng rng(1);
    const GradEstimatorScheme full(data, gauss, scheme(SchemeKind::Subsampling, 30));
    const double g = potential_grad(data, gauss, x1(0.4))[0];
    for (int k = 0; k < 20; ++k)
        CHECK(full.draw_estimate(x1(0.4), rng)[0] == doctest::Approx(g).epsilon(1e-12));

    const GradEstimatorScheme cv(data, gauss, scheme(SchemeKind::ControlVariate, 3));
    for (int k = 0; k < 20; ++k)
        CHECK(cv.draw_estimate(x1(0.4), rng)[0] == doctest::Approx(30 * (0.4 - data.mean_y())).epsilon(1e-12));

    const auto two = scalar_data({0.0, 2.0});
    const GradEstimatorScheme ss(two, gauss, scheme(SchemeKind::Subsampling, 1));
    int plus = 0;
    const int draws = 10'000;
    for (int k = 0; k < draws; ++k) {
        const double z = ss.draw_estimate(x1(1.0), rng)[0];
        REQUIRE((z == 2.0 || z == -2.0));
        plus += z > 0.0;
    }
    CHECK(std::abs(plus - draws / 2) <= 4 * std::sqrt(draws / 4.0));

    CostLedger ledger;
    std::vector<std::uint32_t> idx(30);
    std::iota(idx.begin(), idx.end(), 0u);
    cv.estimate_coord(x1(0.0), 0, rng, idx, &ledger);
    CHECK(ledger.grad_term_evals == 6);
}

TEST_CASE("subset draws are uniform")
{
    const auto data = scalar_data({0, 1, 2, 3, 4});
    GaussianLocation gauss;
    const GradEstimatorScheme ss(data, gauss, scheme(SchemeKind::Subsampling, 2));
    std::vector<std::uint32_t> idx(5);
    std::iota(idx.begin(), idx.end(), 0u);
    Rng rng(3);
    // (n/m) sum_{S} (x - y_j) at x = 0 identifies the subset sum y_a + y_b.
    std::vector<int> counts(8, 0);
    const int draws = 50'000;
    for (int k = 0; k < draws; ++k) {
        const double z = ss.estimate_coord(x1(0.0), 0, rng, idx);
        counts[static_cast<std::size_t>(std::lround(-z / 2.5))]++;
    }
    // Subset sums of pairs from {0..4}: 1,2,3,3,4,4,5,5,6,7.
    const std::vector<int> multiplicity{0, 1, 1, 2, 2, 2, 1, 1};
    for (std::size_t s = 1; s < 8; ++s) {
        const double e = draws * multiplicity[s] / 10.0;
        CHECK(std::abs(counts[s] - e) <= 4.5 * std::sqrt(e));
    }
}

TEST_CASE("effective rates by enumeration")
{
    const auto two = scalar_data({0.0, 2.0});
    GaussianLocation gauss;
    const GradEstimatorScheme ss(two, gauss, scheme(SchemeKind::Subsampling, 1));
    CHECK(ss.effective_rate_exact(x1(1.0), 1.0, 0) == doctest::Approx(1.0));
    const GradEstimatorScheme can(two, gauss, scheme(SchemeKind::Canonical));
    CHECK(can.effective_rate_exact(x1(1.0), 1.0, 0) == 0.0);

    Rng rng(7);
    const auto data = generate_data(TruthSpec{}, 7, 4);
    const GradEstimatorScheme full(data, gauss, scheme(SchemeKind::Subsampling, 7));
    for (int k = 0; k < 20; ++k) {
        const double x = 3.0 * rng.normal();
        for (double v : {-1.0, 1.0})
            CHECK(full.effective_rate_exact(x1(x), v, 0) ==
                  doctest::Approx(canonical_rate(data, gauss, x1(x), v, 0)).epsilon(1e-12));
    }

    const auto big = generate_data(TruthSpec{}, 60, 4);
    const GradEstimatorScheme wide(big, gauss, scheme(SchemeKind::Subsampling, 30));
    CHECK_THROWS_AS(wide.effective_rate_exact(x1(0.0), 1.0, 0), EnumerationTooLarge);
}

TEST_CASE("rate identity, unbiasedness and Jensen domination")
{
    Rng rng(2024);
    GaussianLocation gauss;
    LaplaceLocation laplace;
    CauchyLocation cauchy;
    LogisticRegression logit(2);
    TruthSpec cauchy_truth;
    cauchy_truth.family = Family::Cauchy;
    TruthSpec laplace_truth;
    laplace_truth.family = Family::Laplace;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t n = 1 + rng.index(8);
        const std::size_t m = 1 + rng.index(n);
        const int which = static_cast<int>(rng.index(4));
        const Model& model = which == 0 ? static_cast<const Model&>(gauss)
                             : which == 1 ? static_cast<const Model&>(laplace)
                             : which == 2 ? static_cast<const Model&>(cauchy)
                                          : static_cast<const Model&>(logit);
        const TruthSpec truth = which == 0 ? TruthSpec{} : which == 1 ? laplace_truth : which == 2 ? cauchy_truth : logistic_truth();
        const auto data = generate_data(truth, n, rng());
        const std::size_t d = model.dim();
        Vector ref(static_cast<Eigen::Index>(d));
        Vector x(static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i) {
            ref[static_cast<Eigen::Index>(i)] = rng.normal();
            x[static_cast<Eigen::Index>(i)] = 2.0 * rng.normal();
        }
        for (SchemeKind kind : {SchemeKind::Canonical, SchemeKind::Subsampling, SchemeKind::ControlVariate, SchemeKind::Mixed}) {
            auto cfg = scheme(kind, m, ReferenceStrategy::fixed(ref));
            cfg.mixed_radius = 1.0;
            const GradEstimatorScheme s(data, model, cfg);
            CAPTURE(to_string(kind));
            const auto id = s.rate_identity_check(x);
            CHECK(id.residual <= 1e-12 * std::max(id.scale, 1e-300));
            const Vector g = potential_grad(data, model, x);
            const Vector mean = s.exact_mean_estimate(x);
            CHECK((mean - g).lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, id.scale));
            for (std::size_t i = 0; i < d; ++i)
                for (double v : {-1.0, 1.0})
                    CHECK(s.effective_rate_exact(x, v, i) >= canonical_rate(data, model, x, v, i) - 1e-12 * id.scale);
        }
    }
}

TEST_CASE("larger batches give smaller rates and faster drift")
{
    Rng rng(5);
    GaussianLocation gauss;
    for (int k = 0; k < 100; ++k) {
        const auto data = generate_data(TruthSpec{}, 8, rng());
        const Vector x = x1(0.8 * rng.normal());
        double prev_sum = kInf;
        double prev_drift = 0.0;
        for (std::size_t m = 1; m <= 8; ++m) {
            const GradEstimatorScheme s(data, gauss, scheme(SchemeKind::Subsampling, m));
            const double up = s.effective_rate_exact(x, 1.0, 0);
            const double down = s.effective_rate_exact(x, -1.0, 0);
            const double sum = up + down;
            const double drift = std::abs((down - up) / sum);
            CHECK(sum <= prev_sum * (1 + 1e-12));
            CHECK(drift >= prev_drift * (1 - 1e-12));
            prev_sum = sum;
            prev_drift = drift;
        }
    }
}

TEST_CASE("bounds")
{
    LaplaceLocation laplace;
    const auto ldata = generate_data(TruthSpec{Family::Laplace}, 100, 1);
    const GradEstimatorScheme lss(ldata, laplace, scheme(SchemeKind::Subsampling));
    const PhaseState z{x1(0.3), x1(1.0)};
    auto b = lss.make_bound(z, 0, {}, {});
    CHECK(b.is_constant());
    CHECK(b.intercept == 100.0);

    // Calculus oracle: max over u of 2u / (1 + u^2) on a fine grid.
    double peak = 0.0;
    for (int k = 0; k <= 200'000; ++k) {
        const double u = -10.0 + 1e-4 * k;
        peak = std::max(peak, 2 * u / (1 + u * u));
    }
    CauchyLocation cauchy;
    const auto cdata = generate_data(TruthSpec{Family::Cauchy}, 50, 1);
    const GradEstimatorScheme css(cdata, cauchy, scheme(SchemeKind::Subsampling));
    b = css.make_bound(z, 0, {}, {});
    CHECK(b.is_constant());
    CHECK(b.intercept == doctest::Approx(50.0 * peak).epsilon(1e-8));

    GaussianLocation gauss;
    const auto gdata = generate_data(TruthSpec{}, 40, 1);
    const GradEstimatorScheme gcv(gdata, gauss, scheme(SchemeKind::ControlVariate));
    const PhaseState at_ref{x1(gdata.mean_y()), x1(-1.0)};
    b = gcv.make_bound(at_ref, 0, {}, {});
    CHECK(std::abs(b.intercept) < 1e-10);
    CHECK(b.slope == doctest::Approx(40.0));
    Rng rng(4);
    std::vector<std::uint32_t> idx(40);
    std::iota(idx.begin(), idx.end(), 0u);
    for (int k = 0; k <= 100; ++k) {
        const double t = 0.05 * k;
        const Vector x = at_ref.x + at_ref.v * t;
        const double rate = std::max(0.0, -gcv.estimate_coord(x, 0, rng, idx));
        CHECK(rate <= b.value_at(t) * (1 + 1e-12) + 1e-12);
    }
}

TEST_CASE("reference points")
{
    GaussianLocation gauss;
    const auto data = generate_data(TruthSpec{}, 10'000, 3);
    const GradEstimatorScheme mle(data, gauss, scheme(SchemeKind::ControlVariate));
    CHECK(mle.x_ref()[0] == doctest::Approx(data.mean_y()));
    CHECK(std::abs(mle.cached_mean_grad()[0]) < 1e-12);
    CHECK(mle.setup_evals() == 10'000);

    const Vector ref = choose_reference(data, gauss, ReferenceStrategy::perturbed(x1(2.0)));
    CHECK(ref[0] == doctest::Approx(data.mean_y() + 0.02).epsilon(1e-14));

    Vector five(2);
    five << 5.0, 5.0;
    const auto ldata = generate_data(logistic_truth(), 500, 3);
    CHECK(choose_reference(ldata, LogisticRegression(2), ReferenceStrategy::parse("fixed:5,5")) == five);
    CHECK(ReferenceStrategy::parse("perturbed:1.5").describe() == "perturbed:1.5");
    CHECK_THROWS_AS(ReferenceStrategy::parse("nearby"), std::invalid_argument);
}

TEST_CASE("simulations never violate their bounds and account exactly")
{
    struct Case {
        TruthSpec truth;
        ModelKind model;
    };
    TruthSpec cauchy_truth;
    cauchy_truth.family = Family::Cauchy;
    TruthSpec laplace_truth;
    laplace_truth.family = Family::Laplace;
    for (const auto& c : {Case{TruthSpec{}, ModelKind::Gaussian}, Case{laplace_truth, ModelKind::Laplace},
                          Case{cauchy_truth, ModelKind::Cauchy}, Case{logistic_truth(), ModelKind::Logistic}}) {
        const auto data = generate_data(c.truth, 500, 21);
        const auto model = make_model(c.model, c.truth.dim());
        for (SchemeKind kind : {SchemeKind::Canonical, SchemeKind::Subsampling, SchemeKind::ControlVariate, SchemeKind::Mixed}) {
            CAPTURE(model->name());
            CAPTURE(to_string(kind));
            auto cfg = scheme(kind, 3);
            cfg.mixed_radius = 0.5;
            const GradEstimatorScheme s(data, *model, cfg);
            SchemeRate rate(s);
            const auto d = static_cast<Eigen::Index>(model->dim());
            const PhaseState z0{s.x_ref() + Vector::Constant(d, 1.5), Vector::Ones(d)};
            const auto res = simulate(rate, z0, SimBudget{5.0}, 13);
            CHECK(res.ledger.accepted > 0);
            CHECK_NOTHROW(res.skeleton.validate(1e-10));
            if (kind != SchemeKind::Mixed) {
                CHECK(res.ledger.grad_term_evals ==
                      res.ledger.setup_evals + res.ledger.proposals * s.charge(z0.x));
            }
        }
    }
}

TEST_CASE("prior keeps the bounds valid")
{
    GaussianLocation gauss;
    gauss.set_prior(GaussianPrior{x1(2.0), 0.5});
    CauchyLocation cauchy;
    cauchy.set_prior(GaussianPrior{x1(-1.0), 0.3});
    TruthSpec cauchy_truth;
    cauchy_truth.family = Family::Cauchy;
    const auto gdata = generate_data(TruthSpec{}, 20, 2);
    const auto cdata = generate_data(cauchy_truth, 20, 2);
    for (SchemeKind kind : {SchemeKind::Canonical, SchemeKind::Subsampling, SchemeKind::ControlVariate}) {
        for (const auto* pair : {&gdata, &cdata}) {
            const Model& model = pair == &gdata ? static_cast<const Model&>(gauss) : static_cast<const Model&>(cauchy);
            const GradEstimatorScheme s(*pair, model, scheme(kind, 2));
            SchemeRate rate(s);
            CHECK_NOTHROW((simulate(rate, {x1(3.0), x1(1.0)}, SimBudget{50.0}, 3)));
            const auto id = s.rate_identity_check(x1(0.7));
            CHECK(id.residual <= 1e-12 * id.scale);
        }
    }
}
