#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"
#include "qdcoh/presets.hpp"
#include "qdcoh/spectra.hpp"

using namespace qdcoh;
using spectra::Spectrum;

namespace {

phonon::PhononParams uncoupled() {
    phonon::PhononParams p = presets::reference_phonons();
    p.alpha_la = 0.0;
    p.s_loc = 0.0;
    return p;
}

double full_width_half_max(const Spectrum& s) {
    const auto top = std::max_element(s.intensity.begin(), s.intensity.end());
    const double half = 0.5 * *top;
    std::size_t i = static_cast<std::size_t>(top - s.intensity.begin());
    std::size_t lo = i, hi = i;
    while (lo > 0 && s.intensity[lo] > half) --lo;
    while (hi + 1 < s.intensity.size() && s.intensity[hi] > half) ++hi;
    auto cross = [&](std::size_t a, std::size_t b) {
        const double ya = s.intensity[a], yb = s.intensity[b];
        return s.energy.at(a) + (half - ya) / (yb - ya) * (s.energy.at(b) - s.energy.at(a));
    };
    return cross(hi - 1, hi) - cross(lo, lo + 1);
}

Spectrum two_component(const UniformGrid& g, const spectra::ZplComponent& z, const spectra::PsbComponent& p) {
    Spectrum s;
    s.energy = g;
    s.intensity.resize(g.size);
    for (std::size_t i = 0; i < g.size; ++i)
        s.intensity[i] = spectra::zpl_component(g.at(i), z) + spectra::psb_component(g.at(i), p);
    return s;
}

} // namespace

TEST_SUITE("spectra") {

TEST_CASE("exponential envelope gives the closed-form Lorentzian") {
    phonon::EmitterParams e;
    e.gamma_hom = 0.2;
    const spectra::GridConfig grid;
    const auto chi = phonon::susceptibility(grid.time_grid(), e, uncoupled());
    const auto a = spectra::absorption_spectrum(chi, grid.energy_grid(e.omega0_mev));
    const double fwhm = 2.0 * angular_to_mev(e.gamma_hom);
    const double area = kPi * kHbarMeVps;  // int Re[1/(gamma - i x)] dx over energy
    double peak = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < a.energy.size; ++i) {
        const double ref = area * oracle::lorentzian(a.energy.at(i), e.omega0_mev, fwhm);
        peak = std::max(peak, ref);
        worst = std::max(worst, std::abs(a.intensity[i] - ref));
    }
    CHECK(worst <= 1e-4 * peak);
    const auto top = std::max_element(a.intensity.begin(), a.intensity.end()) - a.intensity.begin();
    CHECK(a.energy.at(static_cast<std::size_t>(top)) == doctest::Approx(e.omega0_mev).epsilon(1e-12));
    CHECK(full_width_half_max(a) == doctest::Approx(fwhm).epsilon(1e-3));
}

TEST_CASE("Gaussian envelope gives a Gaussian line of width 4 gamma sqrt(ln 2)") {
    phonon::EmitterParams e;
    e.gamma_inhom = 0.5;
    const spectra::GridConfig grid;
    const auto chi = phonon::susceptibility(grid.time_grid(), e, uncoupled());
    const auto a = spectra::absorption_spectrum(chi, grid.energy_grid(e.omega0_mev));
    const double expected = 4.0 * angular_to_mev(e.gamma_inhom) * std::sqrt(std::log(2.0));
    CHECK(full_width_half_max(a) == doctest::Approx(expected).epsilon(1e-3));
    const double g = e.gamma_inhom;
    for (std::size_t i = 0; i < a.energy.size; i += 97) {
        const double x = mev_to_angular(a.energy.at(i) - e.omega0_mev);
        const double ref = std::sqrt(kPi) / (2.0 * g) * std::exp(-x * x / (4.0 * g * g));
        CHECK(std::abs(a.intensity[i] - ref) <= 1e-6 * std::sqrt(kPi) / (2.0 * g));
    }
}

TEST_CASE("absorption sideband on the blue side, emission sideband on the red side") {
    phonon::PhononParams p = uncoupled();
    p.s_loc = 0.3;
    p.omega_loc = mev_to_angular(0.6);
    p.sigma_loc = mev_to_angular(0.05);
    phonon::EmitterParams e;
    e.gamma_hom = 0.1;
    const spectra::GridConfig grid;
    const Spectrum em = spectra::qd_emission(e, p, grid);
    auto peak_in = [&](const Spectrum& s, double lo, double hi) {
        double best = lo, val = -1.0;
        for (std::size_t i = 0; i < s.energy.size; ++i) {
            const double x = s.energy.at(i);
            if (x >= lo && x <= hi && s.intensity[i] > val) {
                val = s.intensity[i];
                best = x;
            }
        }
        return best;
    };
    const double w0 = e.omega0_mev;
    CHECK(peak_in(em, w0 - 1.2, w0 - 0.3) == doctest::Approx(w0 - 0.6).epsilon(0.02 / w0));

    const auto chi = phonon::susceptibility(grid.time_grid(), e, p);
    const auto ab = spectra::absorption_spectrum(chi, grid.energy_grid(w0));
    CHECK(peak_in(ab, w0 + 0.3, w0 + 1.2) == doctest::Approx(w0 + 0.6).epsilon(0.02 / w0));
}

TEST_CASE("low-temperature sideband is red-heavy in emission") {
    phonon::EmitterParams e = presets::reference_emitter();
    phonon::PhononParams p = presets::reference_phonons();
    const spectra::GridConfig grid;
    auto band = [](const Spectrum& s, double lo, double hi) {
        double sum = 0.0;
        for (std::size_t i = 0; i < s.energy.size; ++i)
            if (s.energy.at(i) >= lo && s.energy.at(i) <= hi) sum += s.intensity[i];
        return sum;
    };
    const double w0 = e.omega0_mev;
    const Spectrum cold = spectra::qd_emission(e, p, grid);
    const double cold_ratio = band(cold, w0 - 4.0, w0 - 0.5) / band(cold, w0 + 0.5, w0 + 4.0);
    CHECK(cold_ratio > 2.0);
    p.temperature = 60.0;
    const Spectrum hot = spectra::qd_emission(e, p, grid);
    const double hot_ratio = band(hot, w0 - 4.0, w0 - 0.5) / band(hot, w0 + 0.5, w0 + 4.0);
    CHECK(hot_ratio < cold_ratio);
    CHECK(hot_ratio > 1.0);
}

TEST_CASE("grid, tail and ripple diagnostics") {
    phonon::EmitterParams e;
    e.gamma_hom = 0.2;
    const spectra::GridConfig grid;
    const auto chi = phonon::susceptibility(grid.time_grid(), e, uncoupled());
    const UniformGrid wide = UniformGrid::centred(e.omega0_mev, 30.0, 1024);
    CHECK_THROWS_AS(spectra::absorption_spectrum(chi, wide), ConfigurationError);
    CHECK_THROWS_AS(spectra::absorption_spectrum(chi, UniformGrid{e.omega0_mev, 0.01, 1}), ConfigurationError);

    spectra::GridConfig short_grid;
    short_grid.time_span_ps = 5.0;
    const auto cut = phonon::susceptibility(short_grid.time_grid(), e, uncoupled());
    CHECK_THROWS_AS(spectra::absorption_spectrum(cut, grid.energy_grid(e.omega0_mev)), ConfigurationError);
    try {
        spectra::AbsorptionOptions loose;
        loose.max_tail = 1.0;
        (void)spectra::absorption_spectrum(cut, grid.energy_grid(e.omega0_mev), nullptr, loose);
        FAIL("expected NumericalError");
    } catch (const NumericalError& err) {
        CHECK(err.estimate_re() > 0.0);
    }

    spectra::RippleReport rep;
    const auto clean = spectra::absorption_spectrum(chi, grid.energy_grid(e.omega0_mev), &rep);
    CHECK(rep.clipped_mass <= 1e-3 * rep.total_mass);
    for (double v : clean.intensity) CHECK(v >= 0.0);
}

TEST_CASE("discrete Parseval identity of the transform") {
    phonon::EmitterParams e = presets::reference_emitter();
    const spectra::GridConfig grid;
    const auto chi = phonon::susceptibility(grid.time_grid(), e, presets::reference_phonons());
    UniformGrid natural;
    const auto f = spectra::susceptibility_transform(chi, 1 << 12, natural);
    const double dt = chi.time.step;
    double time_side = 0.0;
    for (std::size_t k = 0; k < chi.values.size(); ++k) {
        const double w = (k == 0 || k + 1 == chi.values.size()) ? 0.5 : 1.0;
        time_side += w * w * std::norm(chi.values[k]) * dt;
    }
    const double domega = mev_to_angular(natural.step);
    double freq_side = 0.0;
    for (const auto& v : f) freq_side += std::norm(v) * domega / (2.0 * kPi);
    CHECK(freq_side == doctest::Approx(time_side).epsilon(1e-6));
}

TEST_CASE("emission mirror: fixed point, involution and coverage") {
    const double w0 = 1596.0;
    Spectrum sym;
    sym.energy = UniformGrid::from_range(w0 - 5.0, w0 + 5.0, 1001);
    sym.intensity.resize(sym.energy.size);
    for (std::size_t i = 0; i < sym.energy.size; ++i) {
        const long k = static_cast<long>(i) - 500;
        sym.intensity[i] = 1.0 / (1.0 + 1e-4 * static_cast<double>(k * k));
    }
    const Spectrum m = spectra::emission_spectrum(sym, w0);
    CHECK(m.energy.start == doctest::Approx(sym.energy.start).epsilon(1e-14));
    CHECK(m.intensity == sym.intensity);

    Spectrum skew = sym;
    for (std::size_t i = 0; i < skew.energy.size; ++i) skew.intensity[i] *= 1.0 + 0.3 * std::tanh(skew.energy.at(i) - w0 - 0.4);
    const Spectrum twice = spectra::emission_spectrum(spectra::emission_spectrum(skew, w0 + 0.2), w0 + 0.2);
    CHECK(twice.intensity == skew.intensity);
    CHECK(twice.energy.start == doctest::Approx(skew.energy.start).epsilon(1e-14));

    const UniformGrid inner = UniformGrid::from_range(w0 - 2.0, w0 + 2.0, 401);
    const Spectrum once = spectra::emission_spectrum(skew, w0, inner);
    const Spectrum back = spectra::emission_spectrum(once, w0, UniformGrid::from_range(w0 - 1.5, w0 + 1.5, 301));
    for (std::size_t i = 0; i < back.energy.size; ++i)
        CHECK(back.intensity[i] == doctest::Approx(spectra::sample(skew, back.energy.at(i))).epsilon(1e-9));

    const UniformGrid outside = UniformGrid::from_range(w0 - 7.0, w0 + 2.0, 91);
    try {
        (void)spectra::emission_spectrum(skew, w0, outside);
        FAIL("expected DomainError");
    } catch (const DomainError& err) {
        CHECK(std::string(err.what()).find("-7") == std::string::npos);
        CHECK(std::string(err.what()).find("meV") != std::string::npos);
    }
}

TEST_CASE("cavity filter factor") {
    const spectra::CavityParams c = presets::reference_cavity();
    CHECK(spectra::cavity_filter_factor(c.omega_cav_mev, c) == doctest::Approx(c.a_cav / c.gamma_cav_mev));
    CHECK(spectra::cavity_filter_factor(c.omega_cav_mev + c.gamma_cav_mev, c) ==
          doctest::Approx(0.5 * c.a_cav / c.gamma_cav_mev));
    CHECK(spectra::cavity_filter_factor(c.omega_cav_mev - c.gamma_cav_mev, c) ==
          doctest::Approx(0.5 * c.a_cav / c.gamma_cav_mev));
    for (double x = c.omega_cav_mev - 40.0; x < c.omega_cav_mev + 40.0; x += 0.173) {
        const double f = spectra::cavity_filter_factor(x, c);
        CHECK(f > 0.0);
        CHECK(f <= c.a_cav / c.gamma_cav_mev);
    }

    const Spectrum bare = spectra::qd_emission(presets::reference_emitter(), presets::reference_phonons(), {});
    spectra::CavityParams dark = c;
    dark.a_cav = 0.0;
    const Spectrum flat = spectra::apply_cavity_filter(bare, dark, 0.37);
    for (double v : flat.intensity) CHECK(v == 0.37);
    CHECK(flat.background == 0.37);
    CHECK(flat.labels.detuning_mev.value() == doctest::Approx(c.omega_cav_mev - 1596.0));

    spectra::CavityParams bad = c;
    bad.gamma_cav_mev = 0.0;
    CHECK_THROWS_AS(spectra::apply_cavity_filter(bare, bad, 0.0), DomainError);
    CHECK_THROWS_AS(spectra::apply_cavity_filter(bare, c, -1.0), DomainError);
}

TEST_CASE("detuning sweep: tags, order and on-resonance enhancement") {
    const auto e = presets::reference_emitter();
    const auto d = presets::reference_detunings();
    const auto sweep = spectra::sweep_detuning(e, presets::reference_phonons(), presets::reference_cavity(), 0.0, d);
    REQUIRE(sweep.size() == 5);
    const char* tags[] = {"d-9.15", "d-4.60", "d+0.00", "d+4.60", "d+8.92"};
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(sweep[k].labels.tag == tags[k]);
        CHECK(sweep[k].labels.detuning_mev.value() == d[k]);
    }
    auto zpl_peak = [&](const Spectrum& s) { return spectra::sample(s, e.omega0_mev); };
    std::size_t best = 0;
    for (std::size_t k = 1; k < 5; ++k)
        if (zpl_peak(sweep[k]) > zpl_peak(sweep[best])) best = k;
    CHECK(best == 2);
    CHECK(zpl_peak(sweep[2]) >= 6.0 * zpl_peak(sweep[0]));
    CHECK(zpl_peak(sweep[2]) >= 6.0 * zpl_peak(sweep[4]));

    const double nan_d[] = {std::nan("")};
    CHECK_THROWS_AS(spectra::sweep_detuning(e, presets::reference_phonons(), presets::reference_cavity(), 0.0, nan_d),
                    DomainError);
}

TEST_CASE("shifting the emitter and cavity together only translates the grid") {
    auto e = presets::reference_emitter();
    const auto p = presets::reference_phonons();
    const double d[] = {-4.6, 3.0};
    const auto a = spectra::sweep_detuning(e, p, presets::reference_cavity(), 0.01, d);
    const double shift = 7.25;
    e.omega0_mev += shift;
    const auto b = spectra::sweep_detuning(e, p, presets::reference_cavity(), 0.01, d);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(b[k].energy.start - a[k].energy.start == doctest::Approx(shift).epsilon(1e-9));
        const std::size_t ref = a[k].intensity.size() / 2;
        for (std::size_t i = 0; i < a[k].intensity.size(); i += 61) {
            const double ra = a[k].intensity[i] / a[k].intensity[ref];
            const double rb = b[k].intensity[i] / b[k].intensity[ref];
            CHECK(std::abs(ra - rb) <= 1e-10 * std::max(1.0, ra));
        }
    }
}

TEST_CASE("split recovers a Lorentzian plus displaced Gaussian") {
    const UniformGrid g = UniformGrid::centred(1596.0, 10.0, 2048);
    const Spectrum s = two_component(g, {4.0, 1596.0, 0.055}, {1.0, 1595.0, 1.0, 0.6});
    const auto split = spectra::split_zpl_psb(s);
    REQUIRE(split.ratio.has_value());
    CHECK(*split.ratio == doctest::Approx(4.0).epsilon(0.05 / 4.0));
    CHECK(split.reliable);
    CHECK(split.zpl.centre_mev == doctest::Approx(1596.0).epsilon(1e-6));
    CHECK(split.zpl.hwhm_mev <= 3.0 * 0.110);
}

TEST_CASE("split round-trip over random two-component draws") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    const UniformGrid g = UniformGrid::centred(1596.0, 10.0, 2048);
    int within = 0;
    for (int k = 0; k < 100; ++k) {
        const spectra::ZplComponent z{1.0 + 6.0 * u(rng), 1596.0 + 0.2 * (u(rng) - 0.5), 0.03 + 0.08 * u(rng)};
        const spectra::PsbComponent p{0.5 + 2.0 * u(rng), z.centre_mev - (0.5 + 2.0 * u(rng)), 0.6 + 1.0 * u(rng),
                                      0.3 + 0.6 * u(rng)};
        Spectrum s = two_component(g, z, p);
        // SNR 100 on every sample.
        for (double& v : s.intensity) v *= 1.0 + 0.01 * noise(rng);
        const auto split = spectra::split_zpl_psb(s);
        const double truth = z.area / p.area;
        if (split.ratio && std::abs(*split.ratio - truth) <= 0.03 * truth) ++within;
        else MESSAGE("draw " << k << ": ratio " << split.ratio.value_or(-1.0) << " vs " << truth);
    }
    CHECK(within == 100);
}

TEST_CASE("split flags a sideband below the noise floor") {
    const UniformGrid g = UniformGrid::centred(1596.0, 10.0, 2048);
    const Spectrum s = two_component(g, {4.0, 1596.0, 0.05}, {1e-6, 1595.0, 1.0, 0.6});
    const auto split = spectra::split_zpl_psb(s);
    CHECK_FALSE(split.reliable);
    CHECK(split.zpl_area >= 0.0);
    CHECK(split.psb_area >= 0.0);
    Spectrum empty;
    empty.energy = g;
    empty.intensity.assign(g.size, 0.0);
    CHECK_THROWS_AS(spectra::split_zpl_psb(empty), DomainError);
}

}
