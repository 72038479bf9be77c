#pragma once

#include <complex>
#include <vector>

#include "qdcoh/grid.hpp"
#include "qdcoh/quadrature.hpp"

namespace qdcoh::phonon {

/// Two exciton-phonon branches: a superohmic 2D LA continuum
/// J_LA = alpha_la w^3 exp(-w^2/omega_c^2) and a localized Gaussian mode.
struct PhononParams {
    double alpha_la = 0.0;     // ps^2
    double omega_c = 1.0;      // ps^-1
    double s_loc = 0.0;        // dimensionless
    double omega_loc = 1.0;    // ps^-1
    double sigma_loc = 0.1;    // ps^-1
    double temperature = 4.0;  // K

    void validate() const;
};

struct EmitterParams {
    double omega0_mev = 1596.0;  // ZPL energy
    double gamma_inhom = 0.0;    // ps^-1, Gaussian exp(-gamma_inhom^2 t^2)
    double gamma_hom = 0.0;      // ps^-1, optional exponential exp(-gamma_hom t)

    void validate() const;
};

/// Envelope of chi(t) on t >= 0. With `carrier_factored` the e^{-i w0 t}
/// factor is left out of `values`.
struct SusceptibilityTrace {
    UniformGrid time;
    std::vector<std::complex<double>> values;
    double omega0_mev = 0.0;
    bool carrier_factored = true;
};

double spectral_density_la(double omega, const PhononParams& p);
double spectral_density_local(double omega, const PhononParams& p);

/// Upper integration limit max(5 omega_c, omega_loc + 8 sigma_loc).
double upper_frequency(const PhononParams& p);

/// Phi(t) = sum_j int dw J_j/(pi w^2) {coth(hbar w/2kT)[cos wt - 1] - i sin wt}.
std::complex<double> phonon_integral(double t, const PhononParams& p, const quadrature::Options& opt = {});

/// Phi on every point of a uniform grid at once: fixed 21-point Kronrod
/// panels no wider than one oscillation period at the last time, with the
/// e^{i w t_n} factors advanced by recurrence. Agrees with phonon_integral to
/// its tolerance and costs one adaptive integral's worth of kernel calls.
std::vector<std::complex<double>> dephasing_trace(const UniformGrid& time, const PhononParams& p);

/// sum_j int J_j/(pi w^2) dw.
double huang_rhys_total(const PhononParams& p, const quadrature::Options& opt = {});

/// lim_{t->inf} Re Phi(t) = -sum_j int J_j/(pi w^2) coth(hbar w/2kT) dw. Always <= 0.
double debye_waller_exponent(const PhononParams& p, const quadrature::Options& opt = {});

SusceptibilityTrace susceptibility(const UniformGrid& time, const EmitterParams& e, const PhononParams& p,
                                   bool factor_carrier = true);

namespace detail {

/// Integrand evaluator with the temperature and normalisation constants
/// hoisted out. Everything is written in terms of J/(pi w^3), which stays
/// finite at w -> 0, and w coth(a w), which is series-expanded below
/// kSeriesThreshold.
class DephasingKernel {
public:
    static constexpr double kSeriesThreshold = 1e-3;  // ps^-1

    explicit DephasingKernel(const PhononParams& p);

    /// sum_j J_j(w) / (pi w^3)
    double coupling_over_cube(double omega) const;
    /// w coth(hbar w / 2kT); finite limit 2kT/hbar at w = 0.
    double thermal_factor(double omega) const;
    double thermal_factor_series(double omega) const;
    double thermal_factor_direct(double omega) const;

    std::complex<double> integrand(double omega, double t) const;
    std::complex<double> integrand_series(double omega, double t) const;
    std::complex<double> integrand_direct(double omega, double t) const;

    std::vector<double> breakpoints(double t) const;

private:
    std::complex<double> assemble(double omega, double t, double thermal) const;

    PhononParams p_;
    double thermal_scale_;   // hbar / (2 k_B T), ps
    double local_norm_;      // 1 / (sqrt(2 pi) sigma Z)
    double taper_scale_;     // onset of the local-mode taper
    double omega_max_;
};

} // namespace detail

} // namespace qdcoh::phonon
