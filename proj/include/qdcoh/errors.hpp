#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qdcoh {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure did not reach its tolerance. Carries the best
/// estimate obtained before giving up.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double estimate_re = 0.0, double estimate_im = 0.0)
        : Error(what), estimate_re_(estimate_re), estimate_im_(estimate_im) {}
    double estimate_re() const { return estimate_re_; }
    double estimate_im() const { return estimate_im_; }

private:
    double estimate_re_;
    double estimate_im_;
};

/// Grids, windows or sampling that cannot support the requested computation.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Least-squares failure; `trace` holds the accepted cost history.
class FitError : public Error {
public:
    FitError(const std::string& what, std::vector<double> trace = {})
        : Error(what), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const { return trace_; }

private:
    std::vector<double> trace_;
};

/// A fitting protocol was invoked on data that violates its preconditions.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class IngestionError : public Error {
public:
    using Error::Error;
};

} // namespace qdcoh
