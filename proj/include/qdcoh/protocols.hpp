#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "qdcoh/coherence.hpp"
#include "qdcoh/least_squares.hpp"
#include "qdcoh/phonon.hpp"
#include "qdcoh/spectra.hpp"

namespace qdcoh::fitting {

// ---- global spectral fit -----------------------------------------------------

/// Initial values for one dataset; unset fields are estimated from the data.
struct DatasetInit {
    std::optional<double> omega0_mev;
    std::optional<double> omega_cav_mev;
    std::optional<double> gamma_cav_mev;
    std::optional<double> a_cav;
    std::optional<double> i_bg;
};

struct GlobalFitInit {
    phonon::PhononParams phonons;
    phonon::EmitterParams emitter;  // gamma_inhom / gamma_hom initial values; omega0 is per dataset
    std::map<std::string, DatasetInit> datasets;
    std::map<std::string, double> locks;  // parameter name -> locked value
    std::set<std::string> exclude;        // dataset tags reported but not fitted
    bool fit_gamma_hom = false;           // gamma_hom stays at its initial value unless set
    spectra::GridConfig grid;
    double weight_floor = 1e-3;  // fraction of the dataset maximum
    LeastSquaresOptions options;
};

struct Overlay {
    std::string tag;
    UniformGrid energy;
    std::vector<double> data;
    std::vector<double> model;
    std::vector<double> residual;
};

struct GlobalFitReport {
    FitResult fit;
    std::vector<Overlay> overlays;
    std::vector<std::string> excluded;
    std::size_t model_evaluations = 0;
};

/// Shared: phonon parameters, temperature, gamma_inhom (and gamma_hom when
/// enabled). Per dataset "<tag>.omega0", "<tag>.omega_cav", "<tag>.gamma_cav",
/// "<tag>.a_cav", "<tag>.i_bg". Residuals weighted by 1/sqrt(max(I, floor)).
GlobalFitReport fit_spectra_global(const std::vector<spectra::Spectrum>& series, const GlobalFitInit& init);

/// Names of the shared parameters in the order used by the global fit.
std::vector<std::string> shared_parameter_names();

// ---- visibility protocols ------------------------------------------------------

struct LongFitOptions {
    double exclusion_ps = 10.0;
    double amplitude = 0.8;
    bool lock_amplitude = true;
    double tau1_initial = 10.0;
    std::string amplitude_provenance = "maximum observed visibility";
};

/// amplitude * e^{-|t|/tau1} on |t| > exclusion. Reports "amplitude", "tau1".
FitResult fit_visibility_long(const coherence::VisibilityTrace& v, const LongFitOptions& opt = {});

struct ShortFitOptions {
    double tau1 = 11.8;
    std::string tau1_provenance = "stage 1";
    double half_range_ps = 3.2;
    bool lock_constant = true;  // constant * A_j appear only as a product
    double constant = 1.0;
    std::vector<double> beat_periods_ps = {0.5, 0.7, 0.9, 1.2, 1.6, 2.4};
    std::vector<double> tau2_starts_ps = {0.4, 1.0};
    double degeneracy_correlation = 0.98;
};

/// constant * sqrt(radicand) with the envelope radicand of the two-component
/// model; tau1 locked. Reports "constant", "a1", "tau1", "a2", "tau2", "delta_omega".
FitResult fit_visibility_short(const coherence::VisibilityTrace& v, const ShortFitOptions& opt = {});

/// Slow amplitude (visibility at t = 0) and tau1 read from either fit.
std::pair<double, double> slow_component(const FitResult& slow);

struct PsbArea {
    double area = 0.0;          // ps
    double clipped_mass = 0.0;  // ps, negative residual discarded
    std::vector<double> time;
    std::vector<double> residual;  // clipped to >= 0
    std::vector<std::string> warnings;
};

PsbArea psb_visibility_area(const coherence::VisibilityTrace& v, const FitResult& slow, double half_range_ps = 3.2);

// ---- synthetic data -------------------------------------------------------------

/// sigma_i = rel * sqrt(max(I_i, floor * I_peak) * I_peak); clipped at 0.
void add_count_noise(spectra::Spectrum& s, double rel, std::mt19937_64& rng, double floor = 1e-3);
/// Additive Gaussian noise, clipped at `clip_below` when given.
void add_gaussian_noise(std::vector<double>& y, double sigma, std::mt19937_64& rng,
                        std::optional<double> clip_below = std::nullopt);

} // namespace qdcoh::fitting
