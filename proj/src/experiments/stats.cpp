#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "zz/errors.hpp"
#include "zz/experiments.hpp"

namespace zz {

std::vector<double> autocorrelation(const std::vector<double>& samples, std::size_t max_lag)
{
    const std::size_t n = samples.size();
    if (n < 2)
        throw TooFewSamples("autocorrelation needs at least two samples");
    max_lag = std::min(max_lag, n - 1);
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);

    std::size_t len = 1;
    while (len < 2 * n)
        len <<= 1;
    std::vector<double> padded(len, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        padded[k] = samples[k] - mean;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, padded);
    for (auto& c : spec)
        c = std::norm(c);
    std::vector<double> acov;
    fft.inv(acov, spec);

    std::vector<double> out(max_lag + 1, 0.0);
    if (!(acov[0] > 0.0))
        return out;
    for (std::size_t k = 0; k <= max_lag; ++k)
        out[k] = acov[k] / acov[0];
    return out;
}

IactResult iact_estimate(const std::vector<double>& samples, double dt)
{
    const std::size_t n = samples.size();
    if (n < 1000)
        throw TooFewSamples(fmt::format("iact estimate needs at least 1000 samples, got {}", n));
    if (!(dt > 0.0))
        throw std::invalid_argument("iact estimate needs dt > 0");

    IactResult out;
    const std::vector<double> rho = autocorrelation(samples, n - 1);
    if (rho[0] == 0.0) {
        out.iact = dt;
        out.batch_means = dt;
        out.consistent = true;
        return out;
    }
    // Geyer: sum pairs Gamma_k = rho_2k + rho_2k+1 while they stay positive.
    double tau = -1.0;
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        const double pair = rho[2 * k] + rho[2 * k + 1];
        if (!(pair > 0.0))
            break;
        tau += 2.0 * pair;
    }
    out.iact = std::max(tau, 1.0 / static_cast<double>(n)) * dt;

    const auto b = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
    const std::size_t batches = n / b;
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double s : samples)
        var += (s - mean) * (s - mean);
    var /= static_cast<double>(n - 1);
    std::vector<double> bm(batches, 0.0);
    for (std::size_t j = 0; j < batches; ++j) {
        for (std::size_t k = j * b; k < (j + 1) * b; ++k)
            bm[j] += samples[k];
        bm[j] /= static_cast<double>(b);
    }
    const double bmean = std::accumulate(bm.begin(), bm.end(), 0.0) / static_cast<double>(batches);
    double bvar = 0.0;
    for (double x : bm)
        bvar += (x - bmean) * (x - bmean);
    bvar /= static_cast<double>(batches - 1);
    out.batch_means = static_cast<double>(b) * bvar / var * dt;
    out.consistent = std::abs(out.batch_means / out.iact - 1.0) <= 0.2;
    return out;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf)
{
    if (samples.empty())
        throw TooFewSamples("KS statistic of an empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const double f = cdf(samples[k]);
        d = std::max({d, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
    }
    return d;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("line fit needs two or more paired points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (!(sxx > 0.0))
        throw std::invalid_argument("line fit needs two distinct x values");
    LineFit f;
    f.points = x.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double r = y[k] - f.intercept - f.slope * x[k];
        sse += r * r;
    }
    // Rounding in a constant response must not read as a poor fit.
    const double scale = std::max(1.0, std::abs(my));
    if (syy <= 1e-24 * scale * scale * n)
        f.r2 = sse <= 1e-24 * scale * scale * n ? 1.0 : 0.0;
    else
        f.r2 = 1.0 - sse / syy;
    f.slope_se = x.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
    return f;
}

MeanSe mean_se(const std::vector<double>& values)
{
    if (values.empty())
        throw std::invalid_argument("mean of an empty list");
    MeanSe out;
    const double n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values)
            ss += (v - out.mean) * (v - out.mean);
        out.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return out;
}

double median(std::vector<double> values)
{
    if (values.empty())
        throw std::invalid_argument("median of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t k = values.size() / 2;
    if (values.size() % 2 == 1)
        return values[k];
    // Runs that never hit are stored as +inf and sort last.
    if (std::isinf(values[k]))
        return values[k];
    return 0.5 * (values[k - 1] + values[k]);
}

}  // namespace zz
