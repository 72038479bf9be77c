#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdcoh/grid.hpp"
#include "qdcoh/least_squares.hpp"
#include "qdcoh/phonon.hpp"

namespace qdcoh::spectra {

/// Lorentzian cavity filter (a_cav/gamma_cav) / (1 + (w - w_cav)^2 / gamma_cav^2).
struct CavityParams {
    double omega_cav_mev = 1596.0;
    double gamma_cav_mev = 1.75;  // HWHM
    double a_cav = 1.75;          // intensity * meV

    void validate() const;
};

struct SpectrumLabels {
    std::optional<double> detuning_mev;  // hbar w_cav - hbar w0
    std::optional<double> omega0_mev;
    std::string tag;
    std::string provenance;
};

struct Spectrum {
    UniformGrid energy;  // meV, ascending
    std::vector<double> intensity;
    double background = 0.0;
    SpectrumLabels labels;

    void validate() const;
    std::vector<double> net() const;  // intensity - background
};

/// Energy/time discretisation shared by the forward model. The time step is
/// the Nyquist step of the energy span, so the transform lands exactly on
/// the energy grid.
struct GridConfig {
    double half_span_mev = 20.0;
    std::size_t energy_points = std::size_t{1} << 14;
    double time_span_ps = 80.0;

    UniformGrid energy_grid(double omega0_mev) const;
    UniformGrid time_grid() const;
    void validate() const;
};

struct RippleReport {
    double clipped_mass = 0.0;  // |negative part| integrated, intensity * meV
    double total_mass = 0.0;
    std::size_t clipped_points = 0;
};

struct AbsorptionOptions {
    double abort_fraction = 1e-3;  // clipped mass / total mass that is treated as a pathology
    double max_tail = 1e-2;        // |chi| allowed at the end of the time grid
};

/// alpha(w) = Im int chi(t) e^{iwt} dt = Re int_0^inf env(t) e^{i(w-w0)t} dt,
/// by zero-padded FFT with trapezoid end weights.
Spectrum absorption_spectrum(const phonon::SusceptibilityTrace& chi, const UniformGrid& energy,
                             RippleReport* ripple = nullptr, const AbsorptionOptions& opt = {});

/// Full complex transform int env(t) e^{i x t} dt on the natural FFT grid
/// (x relative to w0, meV); `natural` receives that grid. The time samples
/// carry the same trapezoid weights as absorption_spectrum.
std::vector<std::complex<double>> susceptibility_transform(const phonon::SusceptibilityTrace& chi,
                                                           std::size_t min_points, UniformGrid& natural);

/// I(w) = alpha(2 w0 - w) on the mirrored grid (exact, no interpolation).
Spectrum emission_spectrum(const Spectrum& alpha, double omega0_mev);
/// Same, resampled onto `out`; throws DomainError naming the uncovered interval.
Spectrum emission_spectrum(const Spectrum& alpha, double omega0_mev, const UniformGrid& out);

double cavity_filter_factor(double energy_mev, const CavityParams& c);
Spectrum apply_cavity_filter(const Spectrum& s, const CavityParams& c, double i_bg);

/// Bare QD emission (phonon sideband included, no cavity) on config.energy_grid(w0).
Spectrum qd_emission(const phonon::EmitterParams& e, const phonon::PhononParams& p, const GridConfig& grid = {},
                     RippleReport* ripple = nullptr);

/// One filtered spectrum per detuning, w_cav = w0 + delta; order follows `detunings`.
std::vector<Spectrum> sweep_detuning(const phonon::EmitterParams& e, const phonon::PhononParams& p,
                                     const CavityParams& cavity_template, double i_bg,
                                     std::span<const double> detunings_mev, const GridConfig& grid = {});

/// Cubic interpolation of a spectrum's intensity; 0 outside its grid.
double sample(const Spectrum& s, double energy_mev);

std::string detuning_tag(double detuning_mev);

// ---- ZPL / PSB decomposition -------------------------------------------

struct SplitOptions {
    double instrument_fwhm_mev = 0.110;
    std::optional<double> zpl_hint_mev;
    double noise_floor_fraction = 1e-3;  // psb_area below this fraction of zpl_area is unreliable
    double weight_floor = 1e-2;          // residual weights 1/sqrt(max(y, floor)), y peak-normalised
};

struct ZplComponent {
    double area = 0.0;
    double centre_mev = 0.0;
    double hwhm_mev = 0.0;
};

/// Asymmetric Gaussian: separate widths on the red and blue flanks.
struct PsbComponent {
    double area = 0.0;
    double centre_mev = 0.0;
    double sigma_red_mev = 0.0;
    double sigma_blue_mev = 0.0;
};

struct ZplPsbSplit {
    double zpl_area = 0.0;
    double psb_area = 0.0;
    std::optional<double> ratio;  // zpl/psb, only when psb_area > 0
    bool reliable = false;
    ZplComponent zpl;
    PsbComponent psb;
    fitting::FitResult fit;
};

double zpl_component(double x, const ZplComponent& z);
double psb_component(double x, const PsbComponent& p);

/// Index of the ZPL candidate: among prominent local maxima, the narrowest.
std::size_t find_zpl_index(const UniformGrid& grid, std::span<const double> y, double instrument_fwhm_mev);

ZplPsbSplit split_zpl_psb(const Spectrum& s, const SplitOptions& opt = {});

} // namespace qdcoh::spectra
