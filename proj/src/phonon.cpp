#include "qdcoh/phonon.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"

namespace qdcoh::phonon {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

// Local mode: Gaussian bump normalised on [0, inf). A smooth onset
// 1 - exp(-(w/w_t)^6), w_t = omega_loc/2, forces J_loc ~ w^9 at the origin so
// that J/(pi w^2) coth(...) stays integrable; at the bump it differs from 1 by
// exp(-64).
double local_taper(double omega, double taper_scale) {
    const double r = omega / taper_scale;
    return -std::expm1(-std::pow(r, 6));
}

double local_norm(const PhononParams& p) {
    const double z = 0.5 * (1.0 + std::erf(p.omega_loc / (std::sqrt(2.0) * p.sigma_loc)));
    return 1.0 / (std::sqrt(2.0 * kPi) * p.sigma_loc * z);
}

} // namespace

void PhononParams::validate() const {
    require(std::isfinite(alpha_la) && alpha_la >= 0.0, "alpha_la must be >= 0");
    require(std::isfinite(omega_c) && omega_c > 0.0, "omega_c must be > 0");
    require(std::isfinite(s_loc) && s_loc >= 0.0, "s_loc must be >= 0");
    require(std::isfinite(omega_loc) && omega_loc > 0.0, "omega_loc must be > 0");
    require(std::isfinite(sigma_loc) && sigma_loc > 0.0, "sigma_loc must be > 0");
    require(std::isfinite(temperature) && temperature > 0.0, "temperature must be > 0");
}

void EmitterParams::validate() const {
    require(std::isfinite(omega0_mev) && omega0_mev > 0.0, "omega0 must be > 0");
    require(std::isfinite(gamma_inhom) && gamma_inhom >= 0.0, "gamma_inhom must be >= 0");
    require(std::isfinite(gamma_hom) && gamma_hom >= 0.0, "gamma_hom must be >= 0");
}

double spectral_density_la(double omega, const PhononParams& p) {
    if (!(omega >= 0.0)) throw DomainError("spectral density requires omega >= 0");
    const double r = omega / p.omega_c;
    return p.alpha_la * omega * omega * omega * std::exp(-r * r);
}

double spectral_density_local(double omega, const PhononParams& p) {
    if (!(omega >= 0.0)) throw DomainError("spectral density requires omega >= 0");
    if (p.s_loc == 0.0 || omega == 0.0) return 0.0;
    const double d = (omega - p.omega_loc) / p.sigma_loc;
    const double g = local_norm(p) * std::exp(-0.5 * d * d);
    return p.s_loc * p.omega_loc * p.omega_loc * g * local_taper(omega, 0.5 * p.omega_loc);
}

double upper_frequency(const PhononParams& p) {
    return std::max(5.0 * p.omega_c, p.omega_loc + 8.0 * p.sigma_loc);
}

namespace detail {

DephasingKernel::DephasingKernel(const PhononParams& p)
    : p_(p),
      thermal_scale_(kHbarMeVps / (2.0 * kBoltzmannMeVK * p.temperature)),
      local_norm_(local_norm(p)),
      taper_scale_(0.5 * p.omega_loc),
      omega_max_(upper_frequency(p)) {
    p.validate();
}

double DephasingKernel::coupling_over_cube(double omega) const {
    const double r = omega / p_.omega_c;
    double g = p_.alpha_la * std::exp(-r * r);
    if (p_.s_loc > 0.0 && omega > 0.0) {
        const double d = (omega - p_.omega_loc) / p_.sigma_loc;
        const double bump = local_norm_ * std::exp(-0.5 * d * d);
        const double x = omega / taper_scale_;
        // taper / w^3, with the leading-order form where expm1 would underflow
        const double taper_over_cube = x < 1e-3 ? omega * omega * omega / std::pow(taper_scale_, 6)
                                                : local_taper(omega, taper_scale_) / (omega * omega * omega);
        g += p_.s_loc * p_.omega_loc * p_.omega_loc * bump * taper_over_cube;
    }
    return g / kPi;
}

double DephasingKernel::thermal_factor_series(double omega) const {
    // x coth x = 1 + x^2/3 - x^4/45 + 2x^6/945 - ...
    const double x = thermal_scale_ * omega;
    const double x2 = x * x;
    return (1.0 + x2 * (1.0 / 3.0 + x2 * (-1.0 / 45.0 + x2 * (2.0 / 945.0)))) / thermal_scale_;
}

double DephasingKernel::thermal_factor_direct(double omega) const {
    const double x = thermal_scale_ * omega;
    return omega / std::tanh(x);
}

double DephasingKernel::thermal_factor(double omega) const {
    return omega < kSeriesThreshold ? thermal_factor_series(omega) : thermal_factor_direct(omega);
}

std::complex<double> DephasingKernel::assemble(double omega, double t, double thermal) const {
    // J/(pi w^2) = g w, so the real part is -2 g [w coth(a w)] sin^2(wt/2)
    // and the imaginary part is -g w sin(wt) = -2 g w s c.
    const double g = coupling_over_cube(omega);
    const double half = 0.5 * omega * t;
    const double s = std::sin(half);
    const double c = std::cos(half);
    return {-2.0 * g * thermal * s * s, -2.0 * g * omega * s * c};
}

std::complex<double> DephasingKernel::integrand(double omega, double t) const {
    return assemble(omega, t, thermal_factor(omega));
}
std::complex<double> DephasingKernel::integrand_series(double omega, double t) const {
    return assemble(omega, t, thermal_factor_series(omega));
}
std::complex<double> DephasingKernel::integrand_direct(double omega, double t) const {
    return assemble(omega, t, thermal_factor_direct(omega));
}

std::vector<double> DephasingKernel::breakpoints(double t) const {
    std::vector<double> b{0.0, omega_max_};
    if (p_.s_loc > 0.0) {
        for (int k = -8; k <= 8; ++k) {
            const double w = p_.omega_loc + k * p_.sigma_loc;
            if (w > 0.0 && w < omega_max_) b.push_back(w);
        }
    }
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    double width = std::min(0.5 * p_.omega_c, omega_max_ / 8.0);
    if (std::abs(t) > 0.0) width = std::min(width, 2.0 * kPi / std::abs(t));
    return quadrature::refine_breakpoints(b, width);
}

} // namespace detail

std::complex<double> phonon_integral(double t, const PhononParams& p, const quadrature::Options& opt) {
    if (!std::isfinite(t)) throw DomainError("phonon_integral requires finite t");
    if (t == 0.0) return {0.0, 0.0};
    if (t < 0.0) return std::conj(phonon_integral(-t, p, opt));
    const detail::DephasingKernel kernel(p);
    const auto b = kernel.breakpoints(t);
    const auto r = quadrature::integrate([&](double w) { return kernel.integrand(w, t); }, b, opt);
    return r.value;
}

double huang_rhys_total(const PhononParams& p, const quadrature::Options& opt) {
    const detail::DephasingKernel kernel(p);
    const auto b = kernel.breakpoints(0.0);
    auto f = [&](double w) { return std::complex<double>(kernel.coupling_over_cube(w) * w, 0.0); };
    return quadrature::integrate(f, b, opt).value.real();
}

double debye_waller_exponent(const PhononParams& p, const quadrature::Options& opt) {
    const detail::DephasingKernel kernel(p);
    const auto b = kernel.breakpoints(0.0);
    auto f = [&](double w) {
        return std::complex<double>(kernel.coupling_over_cube(w) * kernel.thermal_factor(w), 0.0);
    };
    return -quadrature::integrate(f, b, opt).value.real();
}

std::vector<std::complex<double>> dephasing_trace(const UniformGrid& time, const PhononParams& p) {
    p.validate();
    if (!(time.step >= 0.0) || !std::isfinite(time.start) || !std::isfinite(time.back()))
        throw DomainError("dephasing_trace requires a finite ascending grid");
    std::vector<std::complex<double>> out(time.size);
    if (time.size == 0) return out;
    const detail::DephasingKernel kernel(p);
    const double t_max = std::max(std::abs(time.start), std::abs(time.back()));
    const auto b = kernel.breakpoints(t_max);

    std::vector<double> re(time.size, 0.0), im(time.size, 0.0);
    auto accumulate = [&](double w, double weight) {
        const double g = kernel.coupling_over_cube(w) * weight;
        const double a = g * kernel.thermal_factor(w);  // multiplies cos(wt) - 1
        const double c = g * w;                         // multiplies -sin(wt)
        // Recurrence for e^{i w t_n}; re-anchored every 64 steps.
        const std::complex<double> rot = std::polar(1.0, w * time.step);
        std::complex<double> z;
        for (std::size_t n = 0; n < time.size; ++n) {
            if (n % 64 == 0) z = std::polar(1.0, w * time.at(n));
            // cos - 1 = -2 sin^2(x/2) = -(sin x)^2 / (1 + cos x) away from cos x = -1
            const double cm1 = z.real() > -0.5 ? -z.imag() * z.imag() / (1.0 + z.real()) : z.real() - 1.0;
            re[n] += a * cm1;
            im[n] -= c * z.imag();
            z *= rot;
        }
    };
    for (std::size_t k = 0; k + 1 < b.size(); ++k) {
        const double half = 0.5 * (b[k + 1] - b[k]);
        const double mid = 0.5 * (b[k + 1] + b[k]);
        accumulate(mid, half * quadrature::kKronrodWeights[10]);
        for (std::size_t j = 0; j < 10; ++j) {
            const double dx = half * quadrature::kKronrodNodes[j];
            accumulate(mid - dx, half * quadrature::kKronrodWeights[j]);
            accumulate(mid + dx, half * quadrature::kKronrodWeights[j]);
        }
    }
    for (std::size_t n = 0; n < time.size; ++n) {
        if (time.at(n) == 0.0) continue;
        out[n] = {re[n], im[n]};
    }
    return out;
}

SusceptibilityTrace susceptibility(const UniformGrid& time, const EmitterParams& e, const PhononParams& p,
                                   bool factor_carrier) {
    e.validate();
    p.validate();
    if (time.start != 0.0 || !(time.step > 0.0) || time.size == 0) {
        throw ConfigurationError("susceptibility time grid must start at 0 with positive step");
    }
    const double w0 = mev_to_angular(e.omega0_mev);
    SusceptibilityTrace out;
    out.time = time;
    out.omega0_mev = e.omega0_mev;
    out.carrier_factored = factor_carrier;
    out.values.resize(time.size);
    const auto phi = dephasing_trace(time, p);
    for (std::size_t n = 0; n < time.size; ++n) {
        const double t = time.at(n);
        std::complex<double> exponent = phi[n] - e.gamma_inhom * e.gamma_inhom * t * t - e.gamma_hom * t;
        if (!factor_carrier) exponent += std::complex<double>(0.0, -w0 * t);
        out.values[n] = std::exp(exponent);
    }
    return out;
}

} // namespace qdcoh::phonon
