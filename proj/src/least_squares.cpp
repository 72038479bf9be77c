#include "qdcoh/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdcoh/errors.hpp"

namespace qdcoh::fitting {

std::size_t FitProblem::free_count() const {
    return static_cast<std::size_t>(
        std::count_if(parameters.begin(), parameters.end(), [](const ParameterSpec& p) { return !p.locked; }));
}

void FitProblem::validate() const {
    if (!residuals) throw FitError("fit problem has no residual evaluator");
    const std::size_t nfree = free_count();
    if (nfree == 0) throw FitError("fit problem has no free parameter");
    if (residual_count < nfree) {
        throw FitError("residual dimension " + std::to_string(residual_count) + " is smaller than the " +
                       std::to_string(nfree) + " free parameters");
    }
    for (const auto& p : parameters) {
        if (!(p.lower <= p.upper)) throw FitError("parameter '" + p.name + "' has inverted bounds");
        if (!(p.initial >= p.lower && p.initial <= p.upper) || !std::isfinite(p.initial)) {
            std::ostringstream os;
            os << "initial value of '" << p.name << "' (" << p.initial << ") is outside [" << p.lower << ", "
               << p.upper << "]";
            throw FitError(os.str());
        }
    }
}

const FittedParameter& FitResult::parameter(std::string_view name) const {
    for (const auto& p : parameters)
        if (p.name == name) return p;
    throw std::out_of_range("no fitted parameter named '" + std::string(name) + "'");
}

bool FitResult::has(std::string_view name) const {
    return std::any_of(parameters.begin(), parameters.end(), [&](const FittedParameter& p) { return p.name == name; });
}

std::vector<double> FitResult::values() const {
    std::vector<double> v;
    v.reserve(parameters.size());
    for (const auto& p : parameters) v.push_back(p.value);
    return v;
}

double FitResult::correlation(std::string_view a, std::string_view b) const {
    auto index = [&](std::string_view n) -> long {
        for (std::size_t i = 0; i < free_names.size(); ++i)
            if (free_names[i] == n) return static_cast<long>(i);
        return -1;
    };
    const long i = index(a), j = index(b);
    if (i < 0 || j < 0) return 0.0;
    const double d = std::sqrt(covariance(i, i) * covariance(j, j));
    return d > 0.0 ? covariance(i, j) / d : 0.0;
}

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double step_size(double x, double typical, double rel) {
    const double scale = std::max(std::abs(x), typical > 0.0 ? typical : 1.0);
    return rel * scale;
}

} // namespace

Eigen::MatrixXd forward_difference_jacobian(const ResidualFunction& f, std::span<const double> x,
                                            std::span<const double> base_residuals,
                                            std::span<const std::size_t> columns, double rel_step,
                                            std::span<const double> typical, std::span<const double> upper) {
    const std::size_t m = base_residuals.size();
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(columns.size()));
    std::vector<double> xp(x.begin(), x.end());
    std::vector<double> rp(m);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        const std::size_t j = columns[c];
        double h = step_size(x[j], typical.empty() ? 0.0 : typical[j], rel_step);
        if (!upper.empty() && x[j] + h > upper[j]) h = -h;
        xp[j] = x[j] + h;
        double dh = xp[j] - x[j];
        f(xp, rp);
        if (!all_finite(rp)) {
            // Retry on the other side; a column that stays non-finite is left
            // as NaN for the caller to reject.
            xp[j] = x[j] - h;
            dh = xp[j] - x[j];
            f(xp, rp);
        }
        xp[j] = x[j];
        for (std::size_t i = 0; i < m; ++i)
            jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = (rp[i] - base_residuals[i]) / dh;
    }
    return jac;
}

FitResult least_squares(const FitProblem& problem, const LeastSquaresOptions& options) {
    problem.validate();
    const std::size_t n = problem.parameters.size();
    const std::size_t m = problem.residual_count;

    std::vector<double> x(n), lower(n), upper(n), typical(n);
    std::vector<std::size_t> free;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& p = problem.parameters[j];
        x[j] = p.initial;
        lower[j] = p.lower;
        upper[j] = p.upper;
        typical[j] = p.typical > 0.0 ? p.typical : (p.initial != 0.0 ? std::abs(p.initial) : 1.0);
        if (!p.locked) free.push_back(j);
    }
    const std::size_t nf = free.size();

    std::vector<double> r(m), r_trial(m);
    problem.residuals(x, r);
    if (!all_finite(r)) throw FitError("residuals are not finite at the initial parameters");
    double rnorm = norm2(r);
    std::vector<double> trace{rnorm};

    auto jacobian = [&] {
        return forward_difference_jacobian(problem.residuals, x, r, free, options.fd_relative_step, typical, upper);
    };
    auto require_finite = [&](const Eigen::MatrixXd& j, const std::vector<double>& trace) {
        if (j.allFinite()) return;
        for (std::size_t c = 0; c < nf; ++c)
            if (!j.col(static_cast<Eigen::Index>(c)).allFinite())
                throw FitError("jacobian column for '" + problem.parameters[free[c]].name +
                                   "' is not finite on either side of the current point",
                               trace);
    };
    Eigen::MatrixXd jac = jacobian();
    require_finite(jac, trace);
    Eigen::VectorXd diag(static_cast<Eigen::Index>(nf));
    for (std::size_t c = 0; c < nf; ++c) {
        const double cn = jac.col(static_cast<Eigen::Index>(c)).norm();
        diag(static_cast<Eigen::Index>(c)) = cn > 0.0 ? cn : 1.0;
    }
    auto scaled_x_norm = [&] {
        double s = 0.0;
        for (std::size_t c = 0; c < nf; ++c) {
            const double v = diag(static_cast<Eigen::Index>(c)) * x[free[c]];
            s += v * v;
        }
        return std::sqrt(s);
    };
    double radius = options.initial_radius_factor * scaled_x_norm();
    if (!(radius > 0.0)) radius = options.initial_radius_factor;

    FitResult result;
    std::size_t iterations = 0;
    std::size_t nonfinite_streak = 0;
    bool converged = false;
    std::string termination = "max_iterations";

    while (iterations < options.max_iterations) {
        const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(m));
        if (rnorm == 0.0) {
            converged = true;
            termination = "zero_residual";
            break;
        }
        const Eigen::VectorXd grad = jac.transpose() * rv;

        // Active set: free parameters pinned at a bound with the descent
        // direction pointing outward do not take part in the step.
        std::vector<Eigen::Index> inactive;
        double gnorm = 0.0;
        for (std::size_t c = 0; c < nf; ++c) {
            const std::size_t j = free[c];
            const auto ci = static_cast<Eigen::Index>(c);
            const bool pinned = (x[j] <= lower[j] && grad(ci) > 0.0) || (x[j] >= upper[j] && grad(ci) < 0.0);
            if (pinned) continue;
            inactive.push_back(ci);
            const double cn = jac.col(ci).norm();
            if (cn > 0.0) gnorm = std::max(gnorm, std::abs(grad(ci)) / (cn * rnorm));
        }
        if (inactive.empty() || gnorm <= options.gtol) {
            converged = true;
            termination = "gradient";
            break;
        }
        ++iterations;

        const auto k = static_cast<Eigen::Index>(inactive.size());
        Eigen::MatrixXd js(static_cast<Eigen::Index>(m), k);
        for (Eigen::Index c = 0; c < k; ++c) js.col(c) = jac.col(inactive[c]) / diag(inactive[c]);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(js, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        const Eigen::VectorXd utr = svd.matrixU().transpose() * rv;
        const double rank_cut = sv.size() > 0 ? sv(0) * 1e-13 : 0.0;

        auto scaled_step = [&](double lambda) {
            Eigen::VectorXd coef(sv.size());
            for (Eigen::Index i = 0; i < sv.size(); ++i) {
                const double s = sv(i);
                coef(i) = (lambda == 0.0 && s <= rank_cut) ? 0.0 : -s * utr(i) / (s * s + lambda);
            }
            return Eigen::VectorXd(svd.matrixV() * coef);
        };

        Eigen::VectorXd dscaled = scaled_step(0.0);
        if (dscaled.norm() > radius) {
            // ||step(lambda)|| decreases monotonically; bisect log(lambda).
            double lo = std::log(std::max(rank_cut * rank_cut, 1e-300));
            // ||step(lambda)|| <= s_max ||U^T r|| / lambda bounds the upper end.
            const double smax = sv.size() > 0 ? sv(0) : 1.0;
            double hi = std::log(10.0 * std::max(smax * utr.norm() / radius, smax * smax) + 1e-300);
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double len = scaled_step(std::exp(mid)).norm();
                if (len > radius) lo = mid; else hi = mid;
                if (hi - lo < 1e-10) break;
            }
            dscaled = scaled_step(std::exp(hi));
        }

        std::vector<double> x_trial = x;
        Eigen::VectorXd dx_full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nf));
        for (Eigen::Index c = 0; c < k; ++c) {
            const std::size_t j = free[static_cast<std::size_t>(inactive[c])];
            x_trial[j] = std::clamp(x[j] + dscaled(c) / diag(inactive[c]), lower[j], upper[j]);
            dx_full(inactive[c]) = x_trial[j] - x[j];
        }
        const double step_norm = (diag.array() * dx_full.array()).matrix().norm();

        const double cost = 0.5 * rnorm * rnorm;
        const Eigen::VectorXd lin = rv + jac * dx_full;
        const double predicted = cost - 0.5 * lin.squaredNorm();

        problem.residuals(x_trial, r_trial);
        double ratio = -1.0;
        double actual = 0.0;
        const bool finite = all_finite(r_trial);
        if (finite) {
            const double trial_norm = norm2(r_trial);
            actual = cost - 0.5 * trial_norm * trial_norm;
            if (predicted > 0.0) ratio = actual / predicted;
            nonfinite_streak = 0;
        } else {
            ++nonfinite_streak;
        }

        if (ratio < 0.25) {
            radius = 0.25 * (step_norm > 0.0 ? std::min(step_norm, radius) : radius);
        } else if (ratio > 0.75) {
            radius = std::max(radius, 2.0 * step_norm);
        }

        const double xnorm = scaled_x_norm();
        if (ratio > 1e-4 && actual > 0.0) {
            x = std::move(x_trial);
            std::swap(r, r_trial);
            const double old_cost = cost;
            rnorm = norm2(r);
            trace.push_back(rnorm);
            jac = jacobian();
            require_finite(jac, trace);
            for (std::size_t c = 0; c < nf; ++c) {
                const auto ci = static_cast<Eigen::Index>(c);
                diag(ci) = std::max(diag(ci), jac.col(ci).norm());
            }
            if (actual <= options.ftol * old_cost && std::abs(predicted) <= options.ftol * old_cost) {
                converged = true;
                termination = "ftol";
                break;
            }
            if (step_norm <= options.xtol * (scaled_x_norm() + options.xtol)) {
                converged = true;
                termination = "xtol";
                break;
            }
        } else {
            if (nonfinite_streak >= 50) {
                throw FitError("residuals stayed non-finite around the current point; trust region collapsed", trace);
            }
            if (radius <= options.xtol * (xnorm + options.xtol)) {
                converged = true;
                termination = "xtol";
                break;
            }
        }
    }

    result.iterations = iterations;
    result.converged = converged;
    result.termination = termination;
    result.residual_norm = rnorm;
    result.residual_trace = std::move(trace);
    result.residual_count = m;

    // Covariance from the final Jacobian (pseudo-inverse over free parameters).
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nf), static_cast<Eigen::Index>(nf));
    if (nf > 0) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        const double cut = sv.size() > 0 ? sv(0) * 1e-13 : 0.0;
        Eigen::VectorXd inv2(sv.size());
        for (Eigen::Index i = 0; i < sv.size(); ++i) inv2(i) = sv(i) > cut ? 1.0 / (sv(i) * sv(i)) : 0.0;
        cov = svd.matrixV() * inv2.asDiagonal() * svd.matrixV().transpose();
        if (!options.absolute_sigma && m > nf) cov *= rnorm * rnorm / static_cast<double>(m - nf);
        if (sv.size() > 0 && sv(sv.size() - 1) <= cut) result.warnings.push_back("jacobian is rank deficient at the solution");
    }
    result.covariance = cov;

    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& spec = problem.parameters[j];
        FittedParameter fp{spec.name, spec.scope, spec.initial, spec.lower, spec.upper, spec.locked,
                           spec.provenance.empty() ? (spec.locked ? "locked" : "free") : spec.provenance,
                           spec.locked ? spec.initial : x[j], 0.0};
        if (!spec.locked) {
            const auto ci = static_cast<Eigen::Index>(c++);
            fp.sigma = std::sqrt(std::max(0.0, cov(ci, ci)));
            result.free_names.push_back(spec.name);
        }
        result.parameters.push_back(std::move(fp));
    }
    for (const auto& ds : problem.datasets) {
        double s = 0.0;
        for (std::size_t i = ds.offset; i < ds.offset + ds.count && i < m; ++i) s += r[i] * r[i];
        result.per_dataset.push_back(
            {ds.tag, ds.count, std::sqrt(s), ds.count > 0 ? std::sqrt(s / static_cast<double>(ds.count)) : 0.0});
    }
    if (!converged) result.warnings.push_back("iteration limit reached before convergence");
    return result;
}

} // namespace qdcoh::fitting
