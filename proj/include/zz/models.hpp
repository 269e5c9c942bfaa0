#pragma once

// Parametric families, synthetic data and maximum-likelihood fitting.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zz/core.hpp"

namespace zz {

enum class ObservationKind { Scalar, Labeled };

/// One observation: a scalar y, or a covariate row w (length d) with label y.
struct ObservationRef {
    double y = 0.0;
    const double* w = nullptr;
};

/// i.i.d. observations of one kind.
struct Dataset {
    ObservationKind kind = ObservationKind::Scalar;
    std::size_t dim = 1;
    std::vector<double> y;
    /// Row-major n x dim covariates (Labeled only).
    std::vector<double> w;
    std::string provenance;
    std::uint64_t seed = 0;

    std::size_t size() const { return y.size(); }
    ObservationRef obs(std::size_t j) const
    {
        return {y[j], kind == ObservationKind::Labeled ? w.data() + j * dim : nullptr};
    }
    double mean_y() const;

    /// Throws std::invalid_argument on empty data, non-finite entries or
    /// labels outside {0, 1}.
    void validate() const;
};

/// Gaussian prior N(mean, sd^2 I).
struct GaussianPrior {
    Vector mean;
    double sd = 1.0;
};

enum class ModelKind { Gaussian, Laplace, Cauchy, Logistic };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Per-datum potential terms: s(x; y) = -grad log f(y; x) and its Jacobian.
class Model {
public:
    explicit Model(std::size_t dim) : dim_(dim) {}
    virtual ~Model() = default;

    virtual ModelKind kind() const = 0;
    std::string name() const { return to_string(kind()); }
    std::size_t dim() const { return dim_; }

    virtual double neg_log_f(const Vector& x, ObservationRef o) const = 0;
    virtual double grad_term_coord(const Vector& x, ObservationRef o, std::size_t i) const = 0;
    virtual void grad_term(const Vector& x, ObservationRef o, Vector& out) const;
    virtual Matrix hess_term(const Vector& x, ObservationRef o) const = 0;

    /// Per-coordinate bound c_i >= sup |s_i| when the model is globally bounded.
    virtual std::optional<Vector> grad_bound(const Dataset& data) const = 0;
    /// Per-coordinate Lipschitz constants of s_i (Euclidean norm in x),
    /// maximized over the data.
    virtual std::optional<Vector> lipschitz(const Dataset& data) const = 0;
    /// Sum over the data of per-datum Lipschitz constants. Defaults to n times
    /// lipschitz().
    virtual std::optional<Vector> lipschitz_total(const Dataset& data) const;
    /// False when s has kinks (finite-difference Hessian checks do not apply).
    virtual bool smooth() const { return true; }

    void set_prior(std::optional<GaussianPrior> prior);
    const std::optional<GaussianPrior>& prior() const { return prior_; }
    /// -d/dx_i log prior; zero without a prior.
    double prior_grad_coord(const Vector& x, std::size_t i) const;
    /// Lipschitz constant of the prior gradient; zero without a prior.
    double prior_lipschitz() const;

protected:
    void check_dim(const Vector& x) const;

private:
    std::size_t dim_;
    std::optional<GaussianPrior> prior_;
};

/// f(y; x) proportional to exp(-(y - x)^2 / 2).
class GaussianLocation : public Model {
public:
    GaussianLocation() : Model(1) {}
    ModelKind kind() const override { return ModelKind::Gaussian; }
    double neg_log_f(const Vector& x, ObservationRef o) const override;
    double grad_term_coord(const Vector& x, ObservationRef o, std::size_t i) const override;
    Matrix hess_term(const Vector& x, ObservationRef o) const override;
    std::optional<Vector> grad_bound(const Dataset&) const override { return std::nullopt; }
    std::optional<Vector> lipschitz(const Dataset&) const override;
};

/// f(y; x) proportional to exp(-|y - x|); s is the weak derivative, 0 at a tie.
class LaplaceLocation : public Model {
public:
    LaplaceLocation() : Model(1) {}
    ModelKind kind() const override { return ModelKind::Laplace; }
    double neg_log_f(const Vector& x, ObservationRef o) const override;
    double grad_term_coord(const Vector& x, ObservationRef o, std::size_t i) const override;
    Matrix hess_term(const Vector& x, ObservationRef o) const override;
    std::optional<Vector> grad_bound(const Dataset&) const override;
    std::optional<Vector> lipschitz(const Dataset&) const override { return std::nullopt; }
    bool smooth() const override { return false; }
};

/// f(y; x) proportional to 1 / (1 + (y - x)^2).
class CauchyLocation : public Model {
public:
    CauchyLocation() : Model(1) {}
    ModelKind kind() const override { return ModelKind::Cauchy; }
    double neg_log_f(const Vector& x, ObservationRef o) const override;
    double grad_term_coord(const Vector& x, ObservationRef o, std::size_t i) const override;
    Matrix hess_term(const Vector& x, ObservationRef o) const override;
    std::optional<Vector> grad_bound(const Dataset&) const override;
    std::optional<Vector> lipschitz(const Dataset&) const override;
};

/// Logistic regression with label y in {0, 1} and P(y = 1) = 1 / (1 + exp(-x.w)).
class LogisticRegression : public Model {
public:
    explicit LogisticRegression(std::size_t dim) : Model(dim) {}
    ModelKind kind() const override { return ModelKind::Logistic; }
    double neg_log_f(const Vector& x, ObservationRef o) const override;
    double grad_term_coord(const Vector& x, ObservationRef o, std::size_t i) const override;
    void grad_term(const Vector& x, ObservationRef o, Vector& out) const override;
    Matrix hess_term(const Vector& x, ObservationRef o) const override;
    std::optional<Vector> grad_bound(const Dataset& data) const override;
    std::optional<Vector> lipschitz(const Dataset& data) const override;
    std::optional<Vector> lipschitz_total(const Dataset& data) const override;
};

std::unique_ptr<Model> make_model(ModelKind kind, std::size_t dim = 1);

// Data-generating law -------------------------------------------------------

enum class Family { Gaussian, Laplace, Cauchy, StudentT, Logistic };

std::string to_string(Family family);
Family parse_family(const std::string& name);

/// Covariate factor for logistic data: point mass at a, N(a, b^2), or U(a, b).
struct Covariate {
    enum class Kind { Point, Normal, Uniform } kind = Kind::Point;
    double a = 0.0;
    double b = 1.0;

    std::string describe() const;
    static Covariate parse(const std::string& text);
};

/// Data-generating law P. Location families use `location`/`scale`
/// (and `dof` for Student-t); the logistic family uses `x0` and `covariates`.
struct TruthSpec {
    Family family = Family::Gaussian;
    double location = 0.0;
    double scale = 1.0;
    double dof = 3.0;
    Vector x0;
    std::vector<Covariate> covariates;

    std::size_t dim() const;
    ObservationKind observation_kind() const;
    std::string describe() const;

    /// Draw one observation; `w` must have room for dim() entries when labeled.
    double sample(Rng& rng, double* w) const;

    // Scalar families only.
    double pdf(double y) const;
    double cdf(double y) const;
    double quantile(double p) const;

    /// True when P is the model's own law at some parameter.
    bool well_specified_for(ModelKind model) const;
};

Dataset generate_data(const TruthSpec& truth, std::size_t n, std::uint64_t seed);

/// sum_j s^j(x) plus the prior term. Charges n evaluations to `ledger`.
Vector potential_grad(const Dataset& data, const Model& model, const Vector& x, CostLedger* ledger = nullptr);

/// Negative log-likelihood sum_j -log f(y_j; x) (prior excluded).
double potential(const Dataset& data, const Model& model, const Vector& x);

/// Maximum-likelihood estimate. Gaussian: sample mean. Laplace: sample median
/// (midpoint of the two middle order statistics at even n). Cauchy: Newton on
/// the score from the median, bracketed with bisection. Logistic: damped
/// Newton. Throws NonConvergence or Separation.
Vector fit_mle(const Dataset& data, const Model& model);

/// n^{-1} sum_j s'(x; y_j).
Matrix observed_information(const Dataset& data, const Model& model, const Vector& x);

struct KlMinimizer {
    Vector x0;
    /// Per-coordinate Monte Carlo standard errors; zero when analytic.
    Vector std_error;
    bool analytic = true;
};

/// Minimizer of x -> -E_P log f(Y; x). Uses the stored truth, the P-mean
/// (Gaussian model), or the centre of a symmetric P (Laplace and Cauchy
/// models) when available. Otherwise, or when `numeric` is set, fits a
/// Monte Carlo sample of size `mc_size` and reports sandwich standard errors.
KlMinimizer kl_minimizer(const TruthSpec& truth, const Model& model, std::size_t mc_size = 1'000'000,
                         std::uint64_t seed = 1, bool numeric = false);

/// Fisher information I(x0) = E_P s'(x0; Y). Analytic where known, otherwise
/// Monte Carlo with `mc_size` draws.
Matrix information_at(const TruthSpec& truth, const Model& model, const Vector& x0,
                      std::size_t mc_size = 1'000'000, std::uint64_t seed = 2);

// Dataset files -------------------------------------------------------------

/// CSV with header `y` or `w1..wd,y`.
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);

/// Sidecar key=value metadata.
void write_dataset_meta(std::ostream& out, const Dataset& data, const TruthSpec& truth);

}  // namespace zz
