#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

#include "qdcoh/coherence.hpp"
#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"
#include "qdcoh/interferometry.hpp"
#include "qdcoh/presets.hpp"

using namespace qdcoh;
using coherence::CoherenceTrace;

namespace {

spectra::Spectrum lines(const UniformGrid& g, std::initializer_list<std::array<double, 3>> components) {
    spectra::Spectrum s;
    s.energy = g;
    s.intensity.assign(g.size, 0.0);
    for (const auto& [area, centre, fwhm] : components)
        for (std::size_t i = 0; i < g.size; ++i) s.intensity[i] += area * oracle::lorentzian(g.at(i), centre, fwhm);
    return s;
}

spectra::Spectrum reference_spectrum(double detuning) {
    const double d[] = {detuning};
    return spectra::sweep_detuning(presets::reference_emitter(), presets::reference_phonons(), presets::reference_cavity(), 0.0, d)
        .front();
}

} // namespace

TEST_SUITE("coherence") {

TEST_CASE("Lorentzian line decays with tau = 2 hbar / Gamma") {
    const double w0 = 1596.0, fwhm = 0.110;
    const double tau = 2.0 * kHbarMeVps / fwhm;
    CHECK(tau == doctest::Approx(11.97).epsilon(1e-3));
    const UniformGrid g = UniformGrid::centred(w0, 50.0, 1 << 16);
    const auto s = lines(g, {{1.0, w0, fwhm}});
    coherence::CoherenceOptions wide;
    wide.window_mev = std::pair{g.start, g.back()};
    const auto c = coherence::temporal_coherence(s, w0, UniformGrid{0.0, 0.05, 801}, wide);
    CHECK(std::abs(c.values[0] - 1.0) < 1e-9);
    CHECK(coherence::exponential_decay_time(c, 2.0, 38.0) == doctest::Approx(tau).epsilon(0.01));

    // Far wings matter at the 1e-3 level; integrate over +-200 meV.
    const UniformGrid far = UniformGrid::centred(w0, 200.0, 1 << 18);
    wide.window_mev = std::pair{far.start, far.back()};
    const auto ct = coherence::temporal_coherence(lines(far, {{1.0, w0, fwhm}}), w0, UniformGrid{0.0, tau, 2}, wide);
    CHECK(std::abs(coherence::visibility_of(ct).visibility[1] - std::exp(-1.0)) < 1e-3);

    // The default asymmetric window loses the far wings but keeps the rate.
    const auto cd = coherence::temporal_coherence(s, w0, UniformGrid{0.0, 0.05, 801});
    CHECK(coherence::exponential_decay_time(cd, 2.0, 38.0) == doctest::Approx(tau).epsilon(0.01));
}

TEST_CASE("normalisation, bound and Hermitian symmetry") {
    const auto s = reference_spectrum(-4.6);
    const double w0 = *s.labels.omega0_mev;
    const auto c = coherence::temporal_coherence(s, w0, UniformGrid{-10.0, 0.01, 2001});
    CHECK(std::abs(c.values[1000] - 1.0) < 1e-9);
    for (const auto& v : c.values) CHECK(std::abs(v) <= 1.0 + 1e-9);
    for (std::size_t i = 0; i < 1000; ++i) {
        CHECK(std::abs(c.values[i] - std::conj(c.values[2000 - i])) < 1e-12);
    }
    const auto vis = coherence::visibility_of(c);
    for (std::size_t i = 0; i < 1000; ++i) CHECK(vis.visibility[i] == doctest::Approx(vis.visibility[2000 - i]));
    for (double v : vis.visibility) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("two lines beat at 2 pi hbar / splitting") {
    const double w0 = 1596.0;
    const UniformGrid g = UniformGrid::centred(w0, 20.0, 1 << 14);
    const auto s = lines(g, {{1.0, w0, 0.110}, {0.4, w0 - 4.6, 0.3}});
    const auto c = coherence::temporal_coherence(s, w0, UniformGrid{0.0, 0.005, 1201});
    const auto period = coherence::dominant_beat_period(c);
    REQUIRE(period.has_value());
    CHECK(*period == doctest::Approx(2.0 * kPi * kHbarMeVps / 4.6).epsilon(0.01));

    const auto single = coherence::temporal_coherence(lines(g, {{1.0, w0, 0.110}}), w0, UniformGrid{0.0, 0.005, 1201});
    CHECK_FALSE(coherence::dominant_beat_period(single).has_value());
}

TEST_CASE("visibility of pure phases and of the origin") {
    CoherenceTrace c;
    c.time = UniformGrid{0.0, 0.1, 50};
    for (std::size_t i = 0; i < 50; ++i) c.values.push_back(std::polar(1.0, 0.37 * static_cast<double>(i * i)));
    for (double v : coherence::visibility_of(c).visibility) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
    c.values[3] = {1.0 + 1e-12, 0.0};
    CHECK(coherence::visibility_of(c).visibility[3] == 1.0);
}

TEST_CASE("translating spectrum and ZPL together leaves |I| unchanged") {
    const auto s = reference_spectrum(-4.6);
    const double w0 = *s.labels.omega0_mev;
    auto moved = s;
    const double shift = 3.0 * s.energy.step;
    moved.energy.start += shift;
    const UniformGrid t{0.0, 0.02, 500};
    const auto a = coherence::temporal_coherence(s, w0, t);
    const auto b = coherence::temporal_coherence(moved, w0 + shift, t);
    for (std::size_t i = 0; i < t.size; ++i) CHECK(std::abs(std::abs(a.values[i]) - std::abs(b.values[i])) < 1e-10);
}

TEST_CASE("narrowing the window onto the ZPL slows the short-time decay") {
    const auto s = reference_spectrum(-4.6);
    const double w0 = *s.labels.omega0_mev;
    const UniformGrid t{0.0, 0.01, 301};
    const auto full = coherence::visibility_of(coherence::temporal_coherence(s, w0, t));
    double prev = 0.0;
    for (double half : {2.0, 1.0, 0.5}) {
        coherence::CoherenceOptions opt;
        opt.window_mev = std::pair{w0 - half, w0 + half};
        const auto v = coherence::visibility_of(coherence::temporal_coherence(s, w0, t, opt));
        double mean = 0.0;
        for (std::size_t i = 20; i < t.size; ++i) mean += v.visibility[i];
        mean /= static_cast<double>(t.size - 20);
        double full_mean = 0.0;
        for (std::size_t i = 20; i < t.size; ++i) full_mean += full.visibility[i];
        full_mean /= static_cast<double>(t.size - 20);
        CHECK(mean > full_mean);
        CHECK(mean > prev);
        prev = mean;
    }
}

TEST_CASE("Gaussian bandpass reduction") {
    const auto s = reference_spectrum(-4.6);
    const double w0 = *s.labels.omega0_mev;
    coherence::CoherenceOptions opt;
    opt.bandpass = coherence::Bandpass{w0, 2.5};
    const auto c = coherence::temporal_coherence(s, w0, UniformGrid{0.0, 0.01, 301}, opt);
    CHECK(std::abs(c.values[0] - 1.0) < 1e-9);
    const auto hard = coherence::temporal_coherence(s, w0, UniformGrid{0.0, 0.01, 301});
    CHECK(std::abs(c.values[100]) > std::abs(hard.values[100]));
}

TEST_CASE("window and area errors") {
    const auto s = reference_spectrum(0.0);
    const double w0 = *s.labels.omega0_mev;
    const UniformGrid t{0.0, 0.1, 10};
    coherence::CoherenceOptions opt;
    opt.window_mev = std::pair{w0 + 1.0, w0 - 1.0};
    CHECK_THROWS_AS(coherence::temporal_coherence(s, w0, t, opt), DomainError);
    opt.window_mev = std::pair{w0 - 50.0, w0};
    CHECK_THROWS_AS(coherence::temporal_coherence(s, w0, t, opt), DomainError);
    auto dark = s;
    dark.background = 1e6;
    CHECK_THROWS_AS(coherence::temporal_coherence(dark, w0, t), DomainError);
}

TEST_CASE("theory visibility matches the visibility extracted from synthesized fringes") {
    for (double detuning : {-4.6, 0.0, 8.92}) {
        const auto s = reference_spectrum(detuning);
        const double w0 = *s.labels.omega0_mev;
        const auto c = coherence::temporal_coherence(s, w0, UniformGrid{0.0, 0.002, 25001});
        const auto raw = interferometry::synthesize_interferogram(c, 1.0, interferometry::Sampling::fine(w0, 3.2, 8.0));
        interferometry::ExtractOptions opt;
        opt.carrier_mev = w0;
        const auto v = interferometry::extract_visibility(raw, opt);
        double ss = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double t = std::abs(v.time[i]);
            const double ref = std::abs(c.values[static_cast<std::size_t>(std::lround(t / 0.002))]);
            ss += (v.visibility[i] - ref) * (v.visibility[i] - ref);
        }
        CHECK(std::sqrt(ss / static_cast<double>(v.size())) < 0.01);
    }
}

}
