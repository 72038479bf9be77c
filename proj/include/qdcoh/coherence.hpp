#pragma once

#include <complex>
#include <optional>
#include <utility>
#include <vector>

#include "qdcoh/grid.hpp"
#include "qdcoh/spectra.hpp"

namespace qdcoh::coherence {

struct CoherenceTrace {
    UniformGrid time;  // ps
    std::vector<std::complex<double>> values;
    double omega0_mev = 0.0;
};

/// Visibility on an arbitrary (ascending) delay axis, with optional 1-sigma.
struct VisibilityTrace {
    std::vector<double> time;  // ps
    std::vector<double> visibility;
    std::vector<double> sigma;  // empty or same length as `visibility`
    std::vector<bool> flagged;  // empty or same length; true marks points kept but unreliable

    std::size_t size() const { return time.size(); }
    void validate() const;
};

/// Gaussian transmission exp(-4 ln2 (w - centre)^2 / fwhm^2).
struct Bandpass {
    double centre_mev = 0.0;
    double fwhm_mev = 2.5;
};

struct CoherenceOptions {
    std::optional<std::pair<double, double>> window_mev;  // absolute energies; default [w0 - 5, w0 + 2]
    std::optional<Bandpass> bandpass;
};

std::pair<double, double> default_window(double omega0_mev);

/// I(t) = int_window (I - I_BG) e^{i (w - w0) t / hbar} dw / int_window (I - I_BG) dw.
CoherenceTrace temporal_coherence(const spectra::Spectrum& s, double omega0_mev, const UniformGrid& time,
                                  const CoherenceOptions& opt = {});

VisibilityTrace visibility_of(const CoherenceTrace& c);

/// Period of the dominant oscillation of |I(t)|, from the autocorrelation of
/// its first difference. Empty when no autocorrelation peak exceeds
/// `min_correlation`.
std::optional<double> dominant_beat_period(const CoherenceTrace& c, double min_correlation = 0.1);

/// Log-linear fit of |I(t)| = A e^{-t/tau} over t in [t_lo, t_hi].
double exponential_decay_time(const CoherenceTrace& c, double t_lo, double t_hi);

} // namespace qdcoh::coherence
