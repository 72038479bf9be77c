#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace qdcoh::fitting {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ParameterSpec {
    std::string name;
    double initial = 0.0;
    double lower = -kInf;
    double upper = kInf;
    bool locked = false;
    std::string scope = "shared";  // "shared" or a dataset tag
    double typical = 0.0;          // magnitude used for finite-difference steps; 0 -> |initial| or 1
    std::string provenance;        // free text carried into the report (e.g. where a lock came from)
};

struct DatasetSlice {
    std::string tag;
    std::size_t offset = 0;
    std::size_t count = 0;
};

using ResidualFunction = std::function<void(std::span<const double> params, std::span<double> residuals)>;

struct FitProblem {
    std::vector<ParameterSpec> parameters;
    std::size_t residual_count = 0;
    ResidualFunction residuals;
    std::vector<DatasetSlice> datasets;

    std::size_t free_count() const;
    void validate() const;
};

struct LeastSquaresOptions {
    std::size_t max_iterations = 500;
    double gtol = 1e-8;        // scaled gradient (cosine between residual and Jacobian columns)
    double xtol = 1e-10;       // relative step
    double ftol = 1.49e-8;     // relative reduction of the cost, actual and predicted
    double fd_relative_step = 1e-6;
    double initial_radius_factor = 100.0;
    bool absolute_sigma = false;  // false: scale covariance by the reduced chi-square
};

struct FittedParameter {
    std::string name;
    std::string scope;
    double initial = 0.0;
    double lower = -kInf;
    double upper = kInf;
    bool locked = false;
    std::string provenance;
    double value = 0.0;
    double sigma = 0.0;
};

struct DatasetResidual {
    std::string tag;
    std::size_t count = 0;
    double norm = 0.0;
    double rms = 0.0;
};

struct FitResult {
    std::vector<FittedParameter> parameters;
    double residual_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::string termination;
    std::vector<double> residual_trace;  // residual norm after each accepted step
    std::vector<DatasetResidual> per_dataset;
    std::vector<std::string> warnings;
    std::vector<std::string> free_names;       // ordering of `covariance`
    Eigen::MatrixXd covariance;
    std::size_t residual_count = 0;

    const FittedParameter& parameter(std::string_view name) const;
    bool has(std::string_view name) const;
    double value(std::string_view name) const { return parameter(name).value; }
    double sigma(std::string_view name) const { return parameter(name).sigma; }
    std::vector<double> values() const;
    /// Correlation coefficient between two free parameters (0 if either is locked).
    double correlation(std::string_view a, std::string_view b) const;
};

FitResult least_squares(const FitProblem& problem, const LeastSquaresOptions& options = {});

/// Forward-difference Jacobian of `f` at `x` over the columns listed in
/// `columns`. Steps are rel_step * max(|x_j|, typical_j) and flip sign at an
/// upper bound.
Eigen::MatrixXd forward_difference_jacobian(const ResidualFunction& f, std::span<const double> x,
                                            std::span<const double> base_residuals,
                                            std::span<const std::size_t> columns, double rel_step,
                                            std::span<const double> typical = {},
                                            std::span<const double> upper = {});

} // namespace qdcoh::fitting
