#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"

#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"
#include "qdcoh/interferometry.hpp"
#include "qdcoh/presets.hpp"
#include "qdcoh/protocols.hpp"

using namespace qdcoh;
using namespace qdcoh::fitting;
using coherence::VisibilityTrace;

namespace {

VisibilityTrace trace_of(const std::vector<double>& t, const std::function<double(double)>& f) {
    VisibilityTrace v;
    for (double x : t) {
        v.time.push_back(x);
        v.visibility.push_back(f(x));
    }
    return v;
}

std::vector<double> coarse_delays() {
    std::vector<double> t;
    for (int k = -20; k <= 20; ++k) t.push_back(2.5 * k);
    return t;
}

std::vector<double> fine_delays(double half = 3.2, double step = 0.02) {
    std::vector<double> t;
    const auto n = static_cast<int>(std::lround(half / step));
    for (int k = -n; k <= n; ++k) t.push_back(step * k);
    return t;
}

interferometry::InterferogramModelParams two_component() {
    interferometry::InterferogramModelParams p;
    p.a1 = 9.44;
    p.tau1 = 11.8;
    p.omega1 = mev_to_angular(1596.0);
    p.a2 = 0.12;
    p.tau2 = 0.8;
    p.omega2 = mev_to_angular(1596.0 - 4.6);
    return p;
}

spectra::GridConfig small_grid() {
    spectra::GridConfig g;
    g.energy_points = 1 << 11;
    return g;
}

std::vector<spectra::Spectrum> synthetic_series(double scale = 1.0) {
    const double d[] = {-4.6, 0.0, 4.6};
    auto series = spectra::sweep_detuning(presets::reference_emitter(), presets::reference_phonons(), presets::reference_cavity(),
                                          0.02, d, small_grid());
    for (auto& s : series) {
        for (double& v : s.intensity) v *= scale;
        s.background *= scale;
    }
    return series;
}

GlobalFitInit small_init() {
    GlobalFitInit init;
    init.phonons = presets::reference_phonons();
    init.phonons.alpha_la *= 1.15;
    init.phonons.omega_c *= 0.9;
    init.phonons.temperature = 3.2;
    init.emitter = presets::reference_emitter();
    init.grid = small_grid();
    init.locks = {{"s_loc", presets::reference_phonons().s_loc},
                  {"omega_loc", presets::reference_phonons().omega_loc},
                  {"sigma_loc", presets::reference_phonons().sigma_loc},
                  {"gamma_inhom", presets::reference_emitter().gamma_inhom}};
    return init;
}

} // namespace

TEST_SUITE("protocols") {

TEST_CASE("long-delay fit recovers tau1 with the amplitude locked") {
    std::mt19937_64 rng(101);
    auto v = trace_of(coarse_delays(), [](double t) { return 0.8 * std::exp(-std::abs(t) / 11.8); });
    add_gaussian_noise(v.visibility, 0.02 * 0.8, rng, 0.0);
    const auto f = fit_visibility_long(v);
    CHECK(f.converged);
    CHECK(std::abs(f.value("tau1") - 11.8) <= 0.4);
    const double amp = f.value("amplitude");
    const double expected = 0.8;
    CHECK(std::memcmp(&amp, &expected, sizeof amp) == 0);
    CHECK(f.parameter("amplitude").locked);
    CHECK(f.parameter("amplitude").provenance == "maximum observed visibility");
}

TEST_CASE("exclusion window does not move tau1 on a pure exponential") {
    const auto v = trace_of(coarse_delays(), [](double t) { return 0.8 * std::exp(-std::abs(t) / 11.8); });
    LongFitOptions none;
    none.exclusion_ps = 0.0;
    const double with = fit_visibility_long(v).value("tau1");
    const double without = fit_visibility_long(v, none).value("tau1");
    CHECK(std::abs(with - without) < 0.005 * without);
}

TEST_CASE("long-delay fit needs six points beyond the exclusion") {
    const auto v = trace_of(fine_delays(9.0, 0.5), [](double t) { return 0.8 * std::exp(-std::abs(t) / 11.8); });
    CHECK_THROWS_AS(fit_visibility_long(v), ProtocolError);
    auto edge = trace_of({-12.5, -11.0, 0.0, 11.0, 12.5}, [](double) { return 0.5; });
    CHECK_THROWS_AS(fit_visibility_long(edge), ProtocolError);
}

TEST_CASE("short-delay fit recovers the fast component") {
    const auto p = two_component();
    std::mt19937_64 rng(103);
    auto v = trace_of(fine_delays(), [&](double t) { return interferometry::model_visibility(t, p); });
    add_gaussian_noise(v.visibility, 0.01, rng);
    const auto f = fit_visibility_short(v);
    CHECK(f.converged);
    CHECK(f.value("tau1") == 11.8);
    CHECK(f.parameter("tau1").locked);
    CHECK(f.parameter("tau1").provenance == "stage 1");
    CHECK(f.value("a2") == doctest::Approx(p.a2).epsilon(0.05));
    CHECK(f.value("tau2") == doctest::Approx(p.tau2).epsilon(0.05));
    CHECK(f.value("a1") == doctest::Approx(p.a1).epsilon(0.05));
    const double period = 2.0 * kPi * kHbarMeVps / 4.6;
    CHECK(f.value("delta_omega") == doctest::Approx(2.0 * kPi / period).epsilon(0.05));
}

TEST_CASE("absent fast component is fitted as zero within two sigma") {
    auto p = two_component();
    p.a2 = 0.0;
    std::mt19937_64 rng(107);
    auto v = trace_of(fine_delays(), [&](double t) { return interferometry::model_visibility(t, p); });
    add_gaussian_noise(v.visibility, 0.01, rng);
    const auto f = fit_visibility_short(v);
    CHECK(f.value("a2") <= 2.0 * f.sigma("a2") + 1e-12);
}

TEST_CASE("a scan window narrow against tau2 exposes the a2 / tau2 degeneracy") {
    auto p = two_component();
    p.tau2 = 3.0;
    p.a2 = 0.45;
    std::mt19937_64 rng(109);
    auto v = trace_of(fine_delays(0.8, 0.02), [&](double t) { return interferometry::model_visibility(t, p); });
    add_gaussian_noise(v.visibility, 0.01, rng);
    ShortFitOptions opt;
    opt.half_range_ps = 0.8;
    const auto f = fit_visibility_short(v, opt);
    CHECK(std::abs(f.correlation("a2", "tau2")) > 0.98);
    CHECK_FALSE(f.warnings.empty());

    auto w = trace_of(fine_delays(), [&](double t) { return interferometry::model_visibility(t, two_component()); });
    add_gaussian_noise(w.visibility, 0.01, rng);
    CHECK(fit_visibility_short(w).warnings.empty());
}

TEST_CASE("short-delay fit preconditions") {
    const auto v = trace_of(coarse_delays(), [](double t) { return 0.8 * std::exp(-std::abs(t) / 11.8); });
    CHECK_THROWS_AS(fit_visibility_short(v), ProtocolError);
    ShortFitOptions bad;
    bad.tau1 = 0.0;
    const auto w = trace_of(fine_delays(), [](double t) { return 0.8 * std::exp(-std::abs(t) / 11.8); });
    CHECK_THROWS_AS(fit_visibility_short(w, bad), ProtocolError);
}

TEST_CASE("PSB area: zero for a pure slow trace, linear in the fast weight") {
    auto slow_only = [](double t) { return 0.8 * std::exp(-std::abs(t) / 11.8); };
    auto long_trace = trace_of(coarse_delays(), slow_only);
    const auto slow = fit_visibility_long(long_trace);

    const auto flat = psb_visibility_area(trace_of(fine_delays(), slow_only), slow);
    CHECK(flat.area < 1e-9);
    CHECK(flat.warnings.empty());

    std::vector<double> areas;
    const double weights[] = {0.02, 0.04, 0.06, 0.08, 0.10};
    for (double w : weights) {
        const auto v = trace_of(fine_delays(), [&](double t) { return slow_only(t) + w * std::exp(-t * t / 0.5); });
        areas.push_back(psb_visibility_area(v, slow).area);
    }
    const double unit = std::sqrt(0.5 * kPi);  // int exp(-t^2/0.5) dt
    for (std::size_t k = 0; k < 5; ++k) CHECK(areas[k] / weights[k] == doctest::Approx(unit).epsilon(0.03));
}

TEST_CASE("PSB area warns when the slow trace overshoots") {
    auto long_trace = trace_of(coarse_delays(), [](double t) { return 0.9 * std::exp(-std::abs(t) / 11.8); });
    LongFitOptions opt;
    opt.amplitude = 0.9;
    const auto slow = fit_visibility_long(long_trace, opt);
    const auto v = trace_of(fine_delays(), [](double t) { return 0.7 * std::exp(-std::abs(t) / 11.8); });
    const auto a = psb_visibility_area(v, slow);
    CHECK(a.area == 0.0);
    CHECK(a.clipped_mass > 0.0);
    CHECK_FALSE(a.warnings.empty());
    for (double r : a.residual) CHECK(r >= 0.0);
}

TEST_CASE("slow component from either stage") {
    auto long_trace = trace_of(coarse_delays(), [](double t) { return 0.8 * std::exp(-std::abs(t) / 11.8); });
    const auto [amp, tau] = slow_component(fit_visibility_long(long_trace));
    CHECK(amp == 0.8);
    CHECK(tau == doctest::Approx(11.8).epsilon(1e-6));
    const auto p = two_component();
    const auto s = fit_visibility_short(trace_of(fine_delays(), [&](double t) { return interferometry::model_visibility(t, p); }));
    CHECK(slow_component(s).first == doctest::Approx(p.a1 / p.tau1).epsilon(0.02));
    FitResult empty;
    CHECK_THROWS_AS(slow_component(empty), ProtocolError);
}

TEST_CASE("global spectral fit recovers shared parameters and honours locks") {
    const auto series = synthetic_series();
    const auto init = small_init();
    const auto report = fit_spectra_global(series, init);
    const auto& f = report.fit;
    CHECK(f.converged);
    const auto truth = presets::reference_phonons();
    CHECK(f.value("alpha_la") == doctest::Approx(truth.alpha_la).epsilon(1e-3));
    CHECK(f.value("omega_c") == doctest::Approx(truth.omega_c).epsilon(1e-3));
    CHECK(f.value("temperature") == doctest::Approx(truth.temperature).epsilon(1e-3));
    const double s_loc = f.value("s_loc");
    CHECK(std::memcmp(&s_loc, &truth.s_loc, sizeof s_loc) == 0);
    CHECK(f.parameter("s_loc").provenance == "locked by configuration");
    CHECK(f.parameter("gamma_hom").locked);
    CHECK(f.value("d-4.60.omega0") == doctest::Approx(1596.0).epsilon(1e-6));
    CHECK(f.value("d+4.60.omega_cav") == doctest::Approx(1600.6).epsilon(1e-5));
    CHECK(f.value("d+0.00.gamma_cav") == doctest::Approx(1.75).epsilon(1e-3));
    REQUIRE(report.overlays.size() == 3);
    for (const auto& o : report.overlays)
        for (std::size_t i = 0; i < o.data.size(); ++i) CHECK(o.residual[i] == doctest::Approx(o.data[i] - o.model[i]));
    CHECK(report.model_evaluations > 0);
}

TEST_CASE("global fit is equivariant under intensity rescaling") {
    const auto init = small_init();
    const auto a = fit_spectra_global(synthetic_series(1.0), init).fit;
    const auto b = fit_spectra_global(synthetic_series(7.0), init).fit;
    for (const auto& name : shared_parameter_names())
        CHECK(b.value(name) == doctest::Approx(a.value(name)).epsilon(1e-8));
    for (const char* tag : {"d-4.60", "d+0.00", "d+4.60"}) {
        const std::string t(tag);
        CHECK(b.value(t + ".a_cav") == doctest::Approx(7.0 * a.value(t + ".a_cav")).epsilon(1e-8));
        CHECK(b.value(t + ".i_bg") == doctest::Approx(7.0 * a.value(t + ".i_bg")).epsilon(1e-6));
        CHECK(b.value(t + ".omega_cav") == doctest::Approx(a.value(t + ".omega_cav")).epsilon(1e-10));
    }
}

TEST_CASE("excluded datasets are reported but not fitted") {
    auto init = small_init();
    init.exclude = {"d+4.60"};
    const auto report = fit_spectra_global(synthetic_series(), init);
    REQUIRE(report.excluded.size() == 1);
    CHECK(report.excluded[0] == "d+4.60");
    CHECK_FALSE(report.fit.has("d+4.60.a_cav"));
    CHECK(report.overlays.size() == 2);

    init.exclude = {"d+4.60", "d+0.00"};
    CHECK_THROWS_AS(fit_spectra_global(synthetic_series(), init), ProtocolError);
    init.exclude = {"d+1.00"};
    CHECK_THROWS_AS(fit_spectra_global(synthetic_series(), init), ProtocolError);
    init.exclude.clear();
    init.locks["nonsense"] = 1.0;
    CHECK_THROWS_AS(fit_spectra_global(synthetic_series(), init), ConfigurationError);
}

TEST_CASE("count noise is reproducible and non-negative") {
    auto a = synthetic_series().front();
    auto b = a;
    std::mt19937_64 r1(5), r2(5);
    add_count_noise(a, 0.01, r1);
    add_count_noise(b, 0.01, r2);
    CHECK(a.intensity == b.intensity);
    for (double v : a.intensity) CHECK(v >= 0.0);
}

}
