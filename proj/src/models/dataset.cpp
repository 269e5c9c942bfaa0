#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "zz/models.hpp"

namespace zz {

double Dataset::mean_y() const
{
    return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
}

void Dataset::validate() const
{
    if (y.empty())
        throw std::invalid_argument("dataset is empty");
    if (dim == 0)
        throw std::invalid_argument("dataset dimension is zero");
    for (double v : y)
        if (!std::isfinite(v))
            throw std::invalid_argument("dataset contains a non-finite value");
    if (kind == ObservationKind::Labeled) {
        if (w.size() != y.size() * dim)
            throw std::invalid_argument("covariate matrix has the wrong size");
        for (double v : w)
            if (!std::isfinite(v))
                throw std::invalid_argument("dataset contains a non-finite covariate");
        for (double v : y)
            if (v != 0.0 && v != 1.0)
                throw std::invalid_argument("label outside {0, 1}");
    } else if (dim != 1) {
        throw std::invalid_argument("scalar observations need dimension 1");
    }
}

void write_dataset_csv(std::ostream& out, const Dataset& data)
{
    if (data.kind == ObservationKind::Labeled) {
        for (std::size_t i = 1; i <= data.dim; ++i)
            out << 'w' << i << ',';
    }
    out << "y\n";
    for (std::size_t j = 0; j < data.size(); ++j) {
        std::string row;
        if (data.kind == ObservationKind::Labeled) {
            for (std::size_t i = 0; i < data.dim; ++i)
                row += fmt::format("{:.17g},", data.w[j * data.dim + i]);
        }
        row += fmt::format("{:.17g}\n", data.y[j]);
        out << row;
    }
}

Dataset read_dataset_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("dataset CSV: missing header");
    std::size_t cols = 1;
    for (char c : line)
        cols += (c == ',');
    Dataset data;
    data.kind = cols == 1 ? ObservationKind::Scalar : ObservationKind::Labeled;
    data.dim = cols == 1 ? 1 : cols - 1;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ','))
            vals.push_back(std::stod(cell));
        if (vals.size() != cols)
            throw std::runtime_error(fmt::format("dataset CSV line {}: expected {} columns", lineno, cols));
        if (data.kind == ObservationKind::Labeled)
            data.w.insert(data.w.end(), vals.begin(), vals.end() - 1);
        data.y.push_back(vals.back());
    }
    data.validate();
    return data;
}

void write_dataset_meta(std::ostream& out, const Dataset& data, const TruthSpec& truth)
{
    out << "generator=" << truth.describe() << '\n';
    out << "truth.family=" << to_string(truth.family) << '\n';
    if (truth.family == Family::Logistic) {
        std::string x0;
        for (Eigen::Index i = 0; i < truth.x0.size(); ++i)
            x0 += fmt::format("{}{:.17g}", i ? "," : "", truth.x0[i]);
        out << "truth.x0=" << x0 << '\n';
    } else {
        out << fmt::format("truth.location={:.17g}\ntruth.scale={:.17g}\n", truth.location, truth.scale);
    }
    out << "seed=" << data.seed << '\n';
    out << "n=" << data.size() << '\n';
    out << "dim=" << data.dim << '\n';
}

}  // namespace zz
