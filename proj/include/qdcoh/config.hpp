#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qdcoh/phonon.hpp"
#include "qdcoh/spectra.hpp"

namespace qdcoh::config {

struct CoherenceConfig {
    std::pair<double, double> window_mev{-5.0, 2.0};  // relative to omega0
    std::optional<double> bandpass_fwhm_mev;
    double max_delay_ps = 60.0;
    double step_ps = 0.005;
};

struct InterferometerConfig {
    bool emit = false;  // simulate-coherence also writes noisy interferograms
    double noise = 0.02;  // fraction of i0
    double max_delay_ps = 50.0;
    double coarse_spacing_ps = 2.5;
    double fine_half_range_ps = 3.2;
    double points_per_fringe = 8.0;
    double periods_per_window = 10.0;
};

struct ProtocolConfig {
    double exclusion_ps = 10.0;
    double amplitude = 0.8;
    bool lock_amplitude = true;
    double short_half_range_ps = 3.2;
};

struct FitConfig {
    std::vector<std::string> exclude;
    std::map<std::string, double> locks;
    double initial_temperature_k = 3.2;
    bool fit_gamma_hom = false;
};

struct RunConfig {
    phonon::EmitterParams emitter;
    phonon::PhononParams phonon;
    spectra::CavityParams cavity;
    double i_bg = 0.0;
    std::vector<double> detunings_mev;
    spectra::GridConfig grid;
    CoherenceConfig coherence;
    InterferometerConfig interferometer;
    ProtocolConfig protocol;
    FitConfig fit;
    double synthetic_noise = 0.0;  // relative count noise added to simulated spectra
    std::uint64_t seed = 1;
    std::optional<std::filesystem::path> data;

    /// Invariants across blocks (Nyquist, windows, parameter domains).
    void validate() const;
};

RunConfig defaults();
nlohmann::json to_json(const RunConfig& c);
/// Strict: unknown or mistyped fields raise ConfigurationError naming the field.
RunConfig from_json(const nlohmann::json& j, const RunConfig& base = defaults());
RunConfig load(const std::filesystem::path& path);
/// SHA-256 of the canonical JSON form.
std::string hash(const RunConfig& c);

} // namespace qdcoh::config
