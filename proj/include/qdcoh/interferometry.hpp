#pragma once

#include <optional>
#include <span>
#include <vector>

#include "qdcoh/coherence.hpp"

namespace qdcoh::interferometry {

/// Two-component fringe model. a1, a2 are the amplitudes A_1, A_2 (the
/// fringe term of component j is (A_j/tau_j) ...), so a_j carries units of ps.
struct InterferogramModelParams {
    double i0 = 1.0;
    double a1 = 0.0;
    double tau1 = 1.0;    // ps
    double omega1 = 0.0;  // ps^-1
    double a2 = 0.0;
    double tau2 = 1.0;    // ps
    double omega2 = 0.0;  // ps^-1

    void validate() const;
};

struct Interferogram {
    std::vector<double> delay;  // ps, ascending
    std::vector<double> samples;

    void validate() const;
};

struct EnvelopeValue {
    double upper = 0.0;
    double lower = 0.0;
};

struct EnvelopePair {
    std::vector<double> delay;
    std::vector<double> upper;
    std::vector<double> lower;
};

double interferogram_model(double t, const InterferogramModelParams& p);

/// (A1/tau1)^2 e^{-2|t|/tau1} + (A2/tau2)^2 g^2 + 2 (A1/tau1)(A2/tau2) e g cos(|w1-w2| t)
double envelope_radicand(double t, const InterferogramModelParams& p);
EnvelopeValue envelope_model(double t, const InterferogramModelParams& p);
EnvelopePair envelope_model(std::span<const double> t, const InterferogramModelParams& p);
/// (I_max - I_min) / (I_max + I_min) of the model envelope.
double model_visibility(double t, const InterferogramModelParams& p);

/// Fringe period 2 pi hbar / E in ps.
double fringe_period(double carrier_mev);

/// A contiguous block of equally spaced delays.
struct Segment {
    double centre = 0.0;  // ps
    double width = 0.0;   // ps
    double step = 0.0;    // ps
};

struct Sampling {
    std::vector<Segment> segments;

    std::vector<double> delays() const;
    /// Sub-fringe scan over [-half_range, half_range].
    static Sampling fine(double carrier_mev, double half_range_ps = 3.2, double points_per_fringe = 8.0);
    /// Short fringe-resolved segments every `spacing` ps out to +-max_delay.
    static Sampling coarse(double carrier_mev, double max_delay_ps = 50.0, double spacing_ps = 2.5,
                           double periods_per_segment = 10.0, double points_per_fringe = 8.0);
};

/// I0 (1 + Re[C(t) e^{i w0 t}]) with C from the coherence trace (Hermitian
/// extension to negative delay, cubic interpolation in between).
Interferogram synthesize_interferogram(const coherence::CoherenceTrace& c, double i0, const Sampling& sampling);

/// Evaluates the two-component model on the given sampling.
Interferogram synthesize_model(const InterferogramModelParams& p, const Sampling& sampling);

struct ExtractOptions {
    double carrier_mev = 1596.0;             // initial fringe frequency
    double frequency_tolerance = 0.1;        // relative bound on the fitted frequency
    std::optional<double> window_width_ps;   // default 10 fringe periods
};

struct ExtractionReport {
    std::vector<double> dropped;  // window centres whose fit failed
};

/// Windowed offset + sine fits; visibility = amplitude / offset at each window
/// centre. Windows advance by half their width inside each contiguous block.
coherence::VisibilityTrace extract_visibility(const Interferogram& raw, const ExtractOptions& opt = {},
                                              ExtractionReport* report = nullptr);

} // namespace qdcoh::interferometry
