#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace zz {

/// Base class for every domain error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A realized rate estimate exceeded the thinning bound in force at that
/// time. Carries the full state so the failing configuration can be replayed.
class BoundViolation : public Error {
public:
    BoundViolation(double t, Eigen::VectorXd x, Eigen::VectorXd v, std::size_t coord,
                   double rate, double bound);

    double time;
    Eigen::VectorXd x;
    Eigen::VectorXd v;
    std::size_t coord;
    double rate;
    double bound;
};

class NoBoundAvailable : public Error {
public:
    using Error::Error;
};

class EnumerationTooLarge : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    using Error::Error;
};

/// Logistic data that is (quasi-)separable: the likelihood has no finite maximizer.
class Separation : public Error {
public:
    using Error::Error;
};

/// Point lies in the zero-denominator locus of an asymptotic drift.
class ZeroDenominator : public Error {
public:
    using Error::Error;
};

class TooFewSamples : public Error {
public:
    using Error::Error;
};

class InsufficientSamples : public Error {
public:
    using Error::Error;
};

class InsufficientEvents : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

/// Configuration problem; `line` is 0 when the error did not come from a file.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::string key = {}, std::size_t line = 0);

    std::string key;
    std::size_t line;
};

}  // namespace zz
