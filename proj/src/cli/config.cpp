#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "zz/cli.hpp"
#include "zz/errors.hpp"

namespace zz::cli {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep)
{
    std::vector<std::string> out;
    if (trim(text).empty())
        return out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, sep))
        out.push_back(trim(part));
    return out;
}

double to_double(const std::string& s)
{
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size())
        throw std::invalid_argument("'" + s + "' is not a number");
    return v;
}

std::uint64_t to_uint(const std::string& s)
{
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("'" + s + "' is not a non-negative integer");
    return static_cast<std::uint64_t>(std::stoull(s));
}

std::string num(double x)
{
    return fmt::format("{:.17g}", x);
}

Vector to_vector(const std::string& s)
{
    const auto parts = split(s, ',');
    Vector v(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = to_double(parts[i]);
    return v;
}

std::string vector_text(const Vector& v)
{
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + num(v[i]);
    return s;
}

std::uint64_t ipow(std::uint64_t base, std::uint64_t exp)
{
    std::uint64_t r = 1;
    for (std::uint64_t k = 0; k < exp; ++k) {
        if (base != 0 && r > std::numeric_limits<std::uint64_t>::max() / base)
            throw std::invalid_argument("grid value overflows");
        r *= base;
    }
    return r;
}

std::pair<std::uint64_t, std::uint64_t> power(const std::string& s)
{
    const auto caret = s.find('^');
    if (caret == std::string::npos)
        throw std::invalid_argument("'" + s + "' is not of the form b^k");
    return {to_uint(trim(s.substr(0, caret))), to_uint(trim(s.substr(caret + 1)))};
}

Family family_for(ModelKind m)
{
    switch (m) {
    case ModelKind::Gaussian: return Family::Gaussian;
    case ModelKind::Laplace: return Family::Laplace;
    case ModelKind::Cauchy: return Family::Cauchy;
    case ModelKind::Logistic: return Family::Logistic;
    }
    return Family::Gaussian;
}

struct Key {
    KeyInfo info;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Key number_key(std::string name, std::string help, T ExperimentConfig::*field)
{
    return {{std::move(name), std::move(help)},
            [field](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>)
                    return num(c.experiment.*field);
                else
                    return std::to_string(c.experiment.*field);
            },
            [field](RunConfig& c, const std::string& v) {
                if constexpr (std::is_floating_point_v<T>) {
                    const double x = to_double(v);
                    if (!std::isfinite(x))
                        throw std::invalid_argument("value must be finite");
                    c.experiment.*field = x;
                } else {
                    c.experiment.*field = static_cast<T>(to_uint(v));
                }
            }};
}

const std::vector<Key>& keys()
{
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        k.push_back({{"seed", "64-bit root seed; omit to draw a fresh one (recorded in the manifest)"},
                     [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); },
                     [](RunConfig& c, const std::string& v) {
                         if (v.empty())
                             c.seed.reset();
                         else
                             c.seed = to_uint(v);
                     }});
        k.push_back({{"model.kind", "gaussian | laplace | cauchy | logistic"},
                     [](const RunConfig& c) { return to_string(c.experiment.model); },
                     [](RunConfig& c, const std::string& v) { c.experiment.model = parse_model_kind(v); }});
        k.push_back({{"truth.family", "data law P: gaussian | laplace | cauchy | student_t | logistic "
                                      "(default: the model's own family)"},
                     [](const RunConfig& c) { return to_string(c.experiment.truth.family); },
                     [](RunConfig& c, const std::string& v) { c.experiment.truth.family = parse_family(v); }});
        k.push_back({{"truth.location", "location of P"},
                     [](const RunConfig& c) { return num(c.experiment.truth.location); },
                     [](RunConfig& c, const std::string& v) { c.experiment.truth.location = to_double(v); }});
        k.push_back({{"truth.scale", "scale of P"},
                     [](const RunConfig& c) { return num(c.experiment.truth.scale); },
                     [](RunConfig& c, const std::string& v) { c.experiment.truth.scale = to_double(v); }});
        k.push_back({{"truth.dof", "degrees of freedom of a student_t P"},
                     [](const RunConfig& c) { return num(c.experiment.truth.dof); },
                     [](RunConfig& c, const std::string& v) { c.experiment.truth.dof = to_double(v); }});
        k.push_back({{"truth.x0", "logistic P: true coefficients x1,...,xd"},
                     [](const RunConfig& c) { return vector_text(c.experiment.truth.x0); },
                     [](RunConfig& c, const std::string& v) { c.experiment.truth.x0 = to_vector(v); }});
        k.push_back({{"truth.covariates", "logistic P: covariate factors separated by ';', each point:a, "
                                          "normal:mean:sd or uniform:lo:hi"},
                     [](const RunConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.experiment.truth.covariates.size(); ++i)
                             s += (i ? ";" : "") + c.experiment.truth.covariates[i].describe();
                         return s;
                     },
                     [](RunConfig& c, const std::string& v) {
                         c.experiment.truth.covariates.clear();
                         for (const auto& part : split(v, ';'))
                             c.experiment.truth.covariates.push_back(Covariate::parse(part));
                     }});
        k.push_back({{"scheme.kind", "comma list of canonical | ss | cv | mixed (single-run commands use one)"},
                     [](const RunConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.experiment.schemes.size(); ++i)
                             s += (i ? "," : "") + to_string(c.experiment.schemes[i]);
                         return s;
                     },
                     [](RunConfig& c, const std::string& v) {
                         c.experiment.schemes.clear();
                         for (const auto& part : split(v, ','))
                             c.experiment.schemes.push_back(parse_scheme_kind(part));
                     }});
        k.push_back(number_key("scheme.m", "sub-sample size; 0 means ceil(log n)", &ExperimentConfig::m));
        k.push_back({{"scheme.reference", "control-variate reference: mle | perturbed:<d1,...> | fixed:<x1,...>"},
                     [](const RunConfig& c) { return c.experiment.reference.describe(); },
                     [](RunConfig& c, const std::string& v) { c.experiment.reference = ReferenceStrategy::parse(v); }});
        k.push_back(number_key("scheme.mixed_radius",
                               "mixed scheme radius M on ||x||; 0 means the |b_ss| = |b_cv| crossing",
                               &ExperimentConfig::mixed_radius));
        k.push_back(number_key("scheme.mixed_horizon", "bound horizon of the mixed scheme near the radius",
                               &ExperimentConfig::mixed_horizon));
        k.push_back({{"experiment.n", "data sizes: comma list of integers, b^k, or b^j..b^k[:step]"},
                     [](const RunConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.experiment.n_grid.size(); ++i)
                             s += (i ? "," : "") + std::to_string(c.experiment.n_grid[i]);
                         return s;
                     },
                     [](RunConfig& c, const std::string& v) { c.experiment.n_grid = parse_n_grid(v); }});
        k.push_back(number_key("experiment.replicates", "replicates per (scheme, n)", &ExperimentConfig::replicates));
        k.push_back(number_key("experiment.t_max", "time horizon of each run", &ExperimentConfig::t_max));
        k.push_back(number_key("experiment.dt", "path discretization step; 0 picks one from the posterior scale",
                               &ExperimentConfig::dt));
        k.push_back({{"experiment.start", "start point x1,...,xd; empty means x0 + start_offset (sample: the MLE)"},
                     [](const RunConfig& c) { return vector_text(c.experiment.start); },
                     [](RunConfig& c, const std::string& v) { c.experiment.start = to_vector(v); }});
        k.push_back(number_key("experiment.start_offset", "offset from x0 of the default start",
                               &ExperimentConfig::start_offset));
        k.push_back(number_key("experiment.stop_margin",
                               "transient sup error stops this long before the fluid path reaches H",
                               &ExperimentConfig::stop_margin));
        k.push_back({{"experiment.level", "level whose first passage time is reported; empty for none"},
                     [](const RunConfig& c) { return c.experiment.level ? num(*c.experiment.level) : std::string(); },
                     [](RunConfig& c, const std::string& v) {
                         if (v.empty())
                             c.experiment.level.reset();
                         else
                             c.experiment.level = to_double(v);
                     }});
        k.push_back(number_key("experiment.burn_in", "burn-in fraction of stationary runs", &ExperimentConfig::burn_in));
        k.push_back(number_key("experiment.target_samples",
                               "stationary runs are extended to this many thinned samples (floor 200)",
                               &ExperimentConfig::target_samples));
        k.push_back({{"experiment.acf_lags", "autocorrelation lags in rescaled time, comma separated"},
                     [](const RunConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.experiment.acf_lags.size(); ++i)
                             s += (i ? "," : "") + num(c.experiment.acf_lags[i]);
                         return s;
                     },
                     [](RunConfig& c, const std::string& v) {
                         c.experiment.acf_lags.clear();
                         for (const auto& part : split(v, ','))
                             c.experiment.acf_lags.push_back(to_double(part));
                     }});
        k.push_back(number_key("experiment.epsilon", "confinement radius", &ExperimentConfig::epsilon));
        k.push_back(number_key("experiment.horizon_scale", "scaling run length in natural time units",
                               &ExperimentConfig::horizon_scale));
        k.push_back(number_key("experiment.min_switches", "minimum accepted switches per scaling run",
                               &ExperimentConfig::min_switches));
        k.push_back(number_key("experiment.bin_width", "limiting-rate bin width in xi",
                               &ExperimentConfig::bin_width));
        k.push_back(number_key("experiment.bin_range", "limiting-rate bins cover [-range, range]",
                               &ExperimentConfig::bin_range));
        k.push_back(number_key("experiment.min_events", "limiting-rate bins need this many events to count",
                               &ExperimentConfig::min_events));
        k.push_back(number_key("experiment.rate_draws", "Hessian draws for the limiting rate",
                               &ExperimentConfig::rate_draws));
        k.push_back(number_key("experiment.hit_radius", "mixed comparison target radius around x0",
                               &ExperimentConfig::hit_radius));
        k.push_back(number_key("experiment.threads", "worker threads; 0 for all cores (capped by ZZSCALE_THREADS)",
                               &ExperimentConfig::threads));
        k.push_back({{"drift.grid", "drift table grid lo:hi:step"},
                     [](const RunConfig& c) {
                         return num(c.experiment.grid_lo) + ":" + num(c.experiment.grid_hi) + ":" +
                                num(c.experiment.grid_step);
                     },
                     [](RunConfig& c, const std::string& v) {
                         const auto parts = split(v, ':');
                         if (parts.size() != 3)
                             throw std::invalid_argument("expected lo:hi:step");
                         c.experiment.grid_lo = to_double(parts[0]);
                         c.experiment.grid_hi = to_double(parts[1]);
                         c.experiment.grid_step = to_double(parts[2]);
                     }});
        k.push_back({{"drift.xstar", "limit X* of the control-variate reference; empty means the fixed reference "
                                     "point or x0"},
                     [](const RunConfig& c) { return vector_text(c.experiment.x_star); },
                     [](RunConfig& c, const std::string& v) { c.experiment.x_star = to_vector(v); }});
        k.push_back({{"drift.method", "auto | closed | quadrature | montecarlo"},
                     [](const RunConfig& c) { return to_string(c.experiment.drift_method); },
                     [](RunConfig& c, const std::string& v) { c.experiment.drift_method = parse_drift_method(v); }});
        k.push_back(number_key("drift.mc_budget", "Monte Carlo draws per drift evaluation",
                               &ExperimentConfig::drift_mc_budget));
        k.push_back({{"data.file", "dataset CSV for sample; empty means generate from the truth"},
                     [](const RunConfig& c) { return c.data_file; },
                     [](RunConfig& c, const std::string& v) { c.data_file = v; }});
        k.push_back({{"ou.start", "OU path start: stationary | zero"},
                     [](const RunConfig& c) {
                         return std::string(c.ou_start == OUStart::Stationary ? "stationary" : "zero");
                     },
                     [](RunConfig& c, const std::string& v) {
                         if (v == "stationary")
                             c.ou_start = OUStart::Stationary;
                         else if (v == "zero")
                             c.ou_start = OUStart::Zero;
                         else
                             throw std::invalid_argument("expected stationary or zero");
                     }});
        k.push_back({{"output.dir", "output directory"},
                     [](const RunConfig& c) { return c.experiment.output_dir; },
                     [](RunConfig& c, const std::string& v) {
                         if (v.empty())
                             throw std::invalid_argument("output directory must not be empty");
                         c.experiment.output_dir = v;
                     }});
        return k;
    }();
    return table;
}

}  // namespace

const std::vector<KeyInfo>& config_keys()
{
    static const std::vector<KeyInfo> infos = [] {
        std::vector<KeyInfo> out;
        for (const auto& k : keys())
            out.push_back(k.info);
        return out;
    }();
    return infos;
}

std::vector<std::size_t> parse_n_grid(const std::string& text)
{
    std::vector<std::size_t> out;
    for (const auto& item : split(text, ',')) {
        const auto dots = item.find("..");
        if (dots != std::string::npos) {
            std::string hi_text = item.substr(dots + 2);
            std::uint64_t step = 1;
            if (const auto colon = hi_text.find(':'); colon != std::string::npos) {
                step = to_uint(trim(hi_text.substr(colon + 1)));
                hi_text = hi_text.substr(0, colon);
            }
            const auto [b1, lo] = power(trim(item.substr(0, dots)));
            const auto [b2, hi] = power(trim(hi_text));
            if (b1 != b2 || lo > hi || step == 0)
                throw std::invalid_argument("range '" + item + "' needs b^j..b^k with j <= k and a positive step");
            for (std::uint64_t e = lo; e <= hi; e += step)
                out.push_back(static_cast<std::size_t>(ipow(b1, e)));
        } else if (item.find('^') != std::string::npos) {
            const auto [b, e] = power(item);
            out.push_back(static_cast<std::size_t>(ipow(b, e)));
        } else {
            out.push_back(static_cast<std::size_t>(to_uint(item)));
        }
    }
    if (out.empty())
        throw std::invalid_argument("empty n grid");
    return out;
}

std::vector<Assignment> read_assignments(const std::string& text)
{
    std::vector<Assignment> out;
    std::stringstream ss(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        const std::string s = trim(raw);
        if (s.empty() || s.front() == '#')
            continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value", {}, line);
        Assignment a{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
        if (a.key.empty())
            throw ConfigError("empty key", {}, line);
        out.push_back(std::move(a));
    }
    return out;
}

RunConfig build_config(const std::vector<Assignment>& assignments)
{
    RunConfig c;
    bool truth_given = false;
    for (const auto& a : assignments) {
        const auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return k.info.name == a.key; });
        if (it == keys().end())
            throw ConfigError("unknown key", a.key, a.line);
        try {
            it->set(c, a.value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(fmt::format("bad value '{}': {}", a.value, e.what()), a.key, a.line);
        }
        if (a.key.rfind("truth.", 0) == 0)
            truth_given = true;
    }
    if (!truth_given) {
        c.experiment.truth.family = family_for(c.experiment.model);
        if (c.experiment.model == ModelKind::Logistic) {
            c.experiment.truth.x0 = Vector::Zero(2);
            c.experiment.truth.x0 << 1.0, 2.0;
            c.experiment.truth.covariates = {Covariate::parse("point:1"), Covariate::parse("normal:0:1")};
        }
    } else if (c.experiment.truth.family == Family::Logistic &&
               (c.experiment.truth.x0.size() == 0 ||
                c.experiment.truth.covariates.size() != static_cast<std::size_t>(c.experiment.truth.x0.size()))) {
        throw ConfigError("logistic truth needs x0 and one covariate factor per coordinate", "truth.covariates");
    }
    c.experiment.seed = c.seed.value_or(0);
    c.experiment.validate();
    return c;
}

RunConfig parse_config(const std::string& text)
{
    return build_config(read_assignments(text));
}

std::string emit_config(const RunConfig& config)
{
    std::string out;
    for (const auto& k : keys()) {
        if (k.info.name == "seed" && !config.seed)
            continue;
        out += k.info.name + " = " + k.get(config) + "\n";
    }
    return out;
}

std::string key_reference()
{
    std::size_t width = 0;
    for (const auto& k : config_keys())
        width = std::max(width, k.name.size());
    std::string out = "Config keys (file lines `key = value`, or --set key=value):\n";
    for (const auto& k : config_keys())
        out += fmt::format("  {:<{}}  {}\n", k.name, width, k.help);
    return out;
}

}  // namespace zz::cli
