#include "qdcoh/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"
#include "qdcoh/fft.hpp"
#include "qdcoh/interpolation.hpp"

namespace qdcoh::spectra {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Fractional index of x on grid, snapped to the nearest sample when it is
// within rounding distance so coincident grids copy exactly.
double grid_index(const UniformGrid& g, double x) {
    const double u = (x - g.start) / g.step;
    const double r = std::round(u);
    return std::abs(u - r) < 1e-7 ? r : u;
}

} // namespace

void CavityParams::validate() const {
    if (!(std::isfinite(omega_cav_mev))) throw DomainError("omega_cav must be finite");
    if (!(std::isfinite(gamma_cav_mev) && gamma_cav_mev > 0.0)) throw DomainError("gamma_cav must be > 0");
    if (!(std::isfinite(a_cav) && a_cav >= 0.0)) throw DomainError("a_cav must be >= 0");
}

void Spectrum::validate() const {
    if (energy.size != intensity.size()) throw DomainError("spectrum grid and intensity sizes differ");
    if (energy.size > 1 && !(energy.step > 0.0)) throw DomainError("spectrum grid must be ascending");
    if (!(std::isfinite(background) && background >= 0.0)) throw DomainError("background must be >= 0");
    for (std::size_t i = 0; i < intensity.size(); ++i) {
        if (!(std::isfinite(intensity[i]) && intensity[i] >= 0.0))
            throw DomainError("negative or non-finite intensity at " + fmt(energy.at(i)) + " meV");
    }
}

std::vector<double> Spectrum::net() const {
    std::vector<double> out(intensity);
    for (double& v : out) v -= background;
    return out;
}

UniformGrid GridConfig::energy_grid(double omega0_mev) const {
    return UniformGrid::centred(omega0_mev, half_span_mev, energy_points);
}

UniformGrid GridConfig::time_grid() const {
    const double dt = kPi * kHbarMeVps / half_span_mev;
    const auto n = static_cast<std::size_t>(std::floor(time_span_ps / dt + 1e-9)) + 1;
    return {0.0, dt, n};
}

void GridConfig::validate() const {
    if (!(std::isfinite(half_span_mev) && half_span_mev > 0.0)) throw ConfigurationError("half_span must be > 0");
    if (energy_points < 16) throw ConfigurationError("energy grid needs at least 16 points");
    if (!(std::isfinite(time_span_ps) && time_span_ps > 0.0)) throw ConfigurationError("time_span must be > 0");
}

std::vector<std::complex<double>> susceptibility_transform(const phonon::SusceptibilityTrace& chi,
                                                           std::size_t min_points, UniformGrid& natural) {
    const std::size_t nt = chi.values.size();
    if (nt < 2 || chi.time.size != nt) throw ConfigurationError("susceptibility trace needs at least 2 samples");
    if (chi.time.start != 0.0) throw ConfigurationError("susceptibility trace must start at t = 0");
    const double dt = chi.time.step;
    const std::size_t n = fft::next_pow2(std::max(nt, min_points));
    const double carrier = chi.carrier_factored ? 0.0 : mev_to_angular(chi.omega0_mev);

    std::vector<std::complex<double>> buf(n);
    for (std::size_t k = 0; k < nt; ++k) {
        const double t = chi.time.at(k);
        std::complex<double> v = chi.values[k];
        if (carrier != 0.0) v *= std::polar(1.0, carrier * t);
        double w = dt;
        if (k == 0 || k + 1 == nt) w *= 0.5;
        buf[k] = (k % 2 == 0 ? w : -w) * v;
    }
    fft::backward(buf);

    const double de = 2.0 * kPi * kHbarMeVps / (static_cast<double>(n) * dt);
    natural = {-de * static_cast<double>(n / 2), de, n};
    return buf;
}

Spectrum absorption_spectrum(const phonon::SusceptibilityTrace& chi, const UniformGrid& energy, RippleReport* ripple,
                             const AbsorptionOptions& opt) {
    if (energy.size < 2 || !(energy.step > 0.0)) throw ConfigurationError("energy grid must be ascending with >= 2 points");
    const std::size_t nt = chi.values.size();
    if (nt < 2) throw ConfigurationError("susceptibility trace needs at least 2 samples");
    const double dt = chi.time.step;
    const double nyquist = kPi * kHbarMeVps / dt;
    const double lo = energy.start - chi.omega0_mev, hi = energy.back() - chi.omega0_mev;
    const double slack = 1e-9 * nyquist;
    if (lo < -nyquist - slack || hi > nyquist + slack)
        throw ConfigurationError("time step " + fmt(dt) + " ps covers only +-" + fmt(nyquist) +
                                 " meV about the ZPL; requested grid spans [" + fmt(lo) + ", " + fmt(hi) + "] meV");
    const double tail = std::abs(chi.values.back());
    if (tail > opt.max_tail)
        throw ConfigurationError("time grid ends at " + fmt(chi.time.back()) + " ps with |chi| = " + fmt(tail) +
                                 "; spectral resolution is coarser than the requested grid");

    // Natural grid at least as fine as the requested one.
    const double natural_step = 2.0 * kPi * kHbarMeVps / dt;
    const auto need = static_cast<std::size_t>(std::ceil(natural_step / energy.step - 1e-9));
    UniformGrid natural;
    const auto f = susceptibility_transform(chi, need, natural);
    std::vector<double> re(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) re[k] = f[k].real();
    natural.start += chi.omega0_mev;

    Spectrum out;
    out.energy = energy;
    out.labels.omega0_mev = chi.omega0_mev;
    out.intensity.resize(energy.size);
    for (std::size_t i = 0; i < energy.size; ++i) {
        const double u = grid_index(natural, energy.at(i));
        const double r = std::round(u);
        out.intensity[i] = (u == r && r >= 0.0 && r < static_cast<double>(re.size()))
                               ? re[static_cast<std::size_t>(r)]
                               : cubic_at(re, u, 0.0);
    }

    RippleReport rep;
    for (double& v : out.intensity) {
        if (v < 0.0) {
            rep.clipped_mass -= v * energy.step;
            ++rep.clipped_points;
            v = 0.0;
        } else {
            rep.total_mass += v * energy.step;
        }
    }
    if (ripple) *ripple = rep;
    if (rep.clipped_mass > opt.abort_fraction * rep.total_mass)
        throw NumericalError("negative ripple mass " + fmt(rep.clipped_mass) + " exceeds " + fmt(opt.abort_fraction) +
                                 " of total " + fmt(rep.total_mass),
                             rep.clipped_mass, rep.total_mass);
    return out;
}

Spectrum emission_spectrum(const Spectrum& alpha, double omega0_mev) {
    Spectrum out = alpha;
    out.energy.start = 2.0 * omega0_mev - alpha.energy.back();
    std::reverse(out.intensity.begin(), out.intensity.end());
    out.labels.omega0_mev = omega0_mev;
    return out;
}

Spectrum emission_spectrum(const Spectrum& alpha, double omega0_mev, const UniformGrid& grid) {
    const double need_lo = 2.0 * omega0_mev - grid.back();
    const double need_hi = 2.0 * omega0_mev - grid.start;
    const double tol = 1e-9 * std::max(1.0, std::abs(omega0_mev));
    if (need_lo < alpha.energy.start - tol || need_hi > alpha.energy.back() + tol) {
        const double clip_lo = std::max(grid.start, 2.0 * omega0_mev - alpha.energy.start);
        const double clip_hi = std::min(grid.back(), 2.0 * omega0_mev - alpha.energy.back());
        std::string what = "mirror about " + fmt(omega0_mev) + " meV leaves the absorption grid for";
        if (need_hi > alpha.energy.back() + tol) what += " [" + fmt(grid.start) + ", " + fmt(clip_hi) + ")";
        if (need_lo < alpha.energy.start - tol) what += " (" + fmt(clip_lo) + ", " + fmt(grid.back()) + "]";
        what += " meV";
        throw DomainError(what);
    }
    Spectrum out;
    out.energy = grid;
    out.background = alpha.background;
    out.labels = alpha.labels;
    out.labels.omega0_mev = omega0_mev;
    out.intensity.resize(grid.size);
    for (std::size_t i = 0; i < grid.size; ++i) {
        const double u = std::clamp(grid_index(alpha.energy, 2.0 * omega0_mev - grid.at(i)), 0.0,
                                     static_cast<double>(alpha.intensity.size() - 1));
        out.intensity[i] = std::max(0.0, cubic_at(alpha.intensity, u, 0.0));
    }
    return out;
}

double cavity_filter_factor(double energy_mev, const CavityParams& c) {
    const double d = (energy_mev - c.omega_cav_mev) / c.gamma_cav_mev;
    return (c.a_cav / c.gamma_cav_mev) / (1.0 + d * d);
}

Spectrum apply_cavity_filter(const Spectrum& s, const CavityParams& c, double i_bg) {
    c.validate();
    if (!(std::isfinite(i_bg) && i_bg >= 0.0)) throw DomainError("background must be >= 0");
    Spectrum out = s;
    for (std::size_t i = 0; i < s.intensity.size(); ++i)
        out.intensity[i] = s.intensity[i] * cavity_filter_factor(s.energy.at(i), c) + i_bg;
    out.background = i_bg;
    out.labels.detuning_mev = c.omega_cav_mev - s.labels.omega0_mev.value_or(c.omega_cav_mev);
    return out;
}

Spectrum qd_emission(const phonon::EmitterParams& e, const phonon::PhononParams& p, const GridConfig& grid,
                     RippleReport* ripple) {
    e.validate();
    p.validate();
    grid.validate();
    const auto chi = phonon::susceptibility(grid.time_grid(), e, p, true);
    // Absorption is needed on the mirror image of the emission grid.
    const UniformGrid out = grid.energy_grid(e.omega0_mev);
    const UniformGrid mirrored{2.0 * e.omega0_mev - out.back(), out.step, out.size};
    Spectrum s = emission_spectrum(absorption_spectrum(chi, mirrored, ripple), e.omega0_mev);
    s.energy = out;  // identical up to rounding of the start value
    s.labels.omega0_mev = e.omega0_mev;
    s.labels.provenance = "qd_emission";
    return s;
}

std::vector<Spectrum> sweep_detuning(const phonon::EmitterParams& e, const phonon::PhononParams& p,
                                     const CavityParams& cavity_template, double i_bg,
                                     std::span<const double> detunings_mev, const GridConfig& grid) {
    for (double d : detunings_mev)
        if (!std::isfinite(d)) throw DomainError("detuning must be finite");
    const Spectrum bare = qd_emission(e, p, grid);
    std::vector<Spectrum> out;
    out.reserve(detunings_mev.size());
    for (double d : detunings_mev) {
        CavityParams c = cavity_template;
        c.omega_cav_mev = e.omega0_mev + d;
        Spectrum s = apply_cavity_filter(bare, c, i_bg);
        s.labels.detuning_mev = d;
        s.labels.tag = detuning_tag(d);
        s.labels.provenance = "sweep_detuning";
        out.push_back(std::move(s));
    }
    return out;
}

double sample(const Spectrum& s, double energy_mev) {
    return cubic_at(s.energy, s.intensity, energy_mev, 0.0);
}

std::string detuning_tag(double detuning_mev) {
    if (std::abs(detuning_mev) < 0.005) detuning_mev = 0.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "d%+.2f", detuning_mev);
    return buf;
}

// ---- ZPL / PSB --------------------------------------------------------------

double zpl_component(double x, const ZplComponent& z) {
    const double d = x - z.centre_mev;
    return z.area * (z.hwhm_mev / kPi) / (d * d + z.hwhm_mev * z.hwhm_mev);
}

double psb_component(double x, const PsbComponent& p) {
    const double height = p.area / (std::sqrt(kPi / 2.0) * (p.sigma_red_mev + p.sigma_blue_mev));
    const double s = x < p.centre_mev ? p.sigma_red_mev : p.sigma_blue_mev;
    const double d = (x - p.centre_mev) / s;
    return height * std::exp(-0.5 * d * d);
}

namespace {

// Full width at half maximum around a local maximum, by linear crossing.
double local_fwhm(const UniformGrid& g, std::span<const double> y, std::size_t i) {
    const double half = 0.5 * y[i];
    std::size_t l = i, r = i;
    while (l > 0 && y[l] > half) --l;
    while (r + 1 < y.size() && y[r] > half) ++r;
    auto cross = [&](std::size_t a, std::size_t b) {
        const double den = y[b] - y[a];
        const double f = den != 0.0 ? (half - y[a]) / den : 0.0;
        return g.at(a) + f * (g.at(b) - g.at(a));
    };
    const double xl = l < i ? cross(l, l + 1) : g.at(l);
    const double xr = r > i ? cross(r, r - 1) : g.at(r);
    return xr - xl;
}

} // namespace

std::size_t find_zpl_index(const UniformGrid& grid, std::span<const double> y, double instrument_fwhm_mev) {
    if (y.empty()) throw DomainError("empty spectrum");
    const auto imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    const double top = y[imax];
    if (!(top > 0.0)) throw DomainError("spectrum has no positive peak");
    const auto reach = static_cast<long>(std::max(1.0, std::ceil(instrument_fwhm_mev / grid.step)));
    const auto n = static_cast<long>(y.size());
    std::size_t best = imax;
    double best_width = local_fwhm(grid, y, imax);
    for (long i = 0; i < n; ++i) {
        const double v = y[static_cast<std::size_t>(i)];
        if (v < 0.1 * top || static_cast<std::size_t>(i) == imax) continue;
        bool is_max = true;
        for (long k = std::max(0L, i - reach); k <= std::min(n - 1, i + reach) && is_max; ++k)
            if (y[static_cast<std::size_t>(k)] > v) is_max = false;
        if (!is_max) continue;
        const double w = local_fwhm(grid, y, static_cast<std::size_t>(i));
        if (w < best_width) {
            best_width = w;
            best = static_cast<std::size_t>(i);
        }
    }
    return best;
}

ZplPsbSplit split_zpl_psb(const Spectrum& s, const SplitOptions& opt) {
    const UniformGrid& g = s.energy;
    if (g.size < 16) throw DomainError("spectrum too short for decomposition");
    std::vector<double> y = s.net();
    const double scale = *std::max_element(y.begin(), y.end());
    if (!(scale > 0.0)) throw DomainError("spectrum has no positive net intensity");
    for (double& v : y) v /= scale;

    std::size_t iz = find_zpl_index(g, y, opt.instrument_fwhm_mev);
    if (opt.zpl_hint_mev) {
        const auto h = static_cast<long>(std::llround((*opt.zpl_hint_mev - g.start) / g.step));
        const long reach = static_cast<long>(std::ceil(opt.instrument_fwhm_mev / g.step));
        long lo = std::max(0L, h - reach), hi = std::min(static_cast<long>(g.size) - 1, h + reach);
        if (lo > hi) throw DomainError("ZPL hint outside the spectrum grid");
        iz = static_cast<std::size_t>(lo);
        for (long k = lo; k <= hi; ++k)
            if (y[static_cast<std::size_t>(k)] > y[iz]) iz = static_cast<std::size_t>(k);
    }
    const double hw_max = 1.5 * opt.instrument_fwhm_mev;
    const double hw_min = 0.5 * g.step;
    const double cz0 = g.at(iz);
    const double hw0 = std::clamp(0.5 * local_fwhm(g, y, iz), 2.0 * hw_min, hw_max);
    const double az0 = y[iz] * kPi * hw0;
    const double total = trapezoid(g.values(), y);
    const double ap0 = std::max(0.05 * total, total - az0);

    const std::size_t n = g.size;
    // Unit weights for the multi-start pass; count-like weights from the
    // model (not the data, which biases areas low) for the refinement.
    std::vector<double> weight(n, 1.0);
    // Parameters: zpl area, centre, hwhm, psb area, red offset, sigma_red, sigma_blue.
    auto model = [&](std::span<const double> q, double x) {
        const ZplComponent z{q[0], q[1], q[2]};
        const PsbComponent p{q[3], q[1] - q[4], q[5], q[6]};
        return zpl_component(x, z) + psb_component(x, p);
    };
    fitting::FitProblem prob;
    prob.residual_count = n;
    prob.residuals = [&](std::span<const double> q, std::span<double> r) {
        for (std::size_t i = 0; i < n; ++i) r[i] = (model(q, g.at(i)) - y[i]) * weight[i];
    };
    prob.datasets = {{s.labels.tag.empty() ? "spectrum" : s.labels.tag, 0, n}};

    const double width = g.span();
    fitting::FitResult best;
    bool have = false;
    std::vector<std::string> failures;
    for (double offset : {0.6, 1.5, 3.0}) {
        for (double sigma : {0.4, 1.2}) {
            prob.parameters = {
                {"zpl_area", az0, 0.0, fitting::kInf},
                {"zpl_centre", cz0, cz0 - 2.0 * hw_max, cz0 + 2.0 * hw_max},
                {"zpl_hwhm", hw0, hw_min, hw_max},
                {"psb_area", ap0, 0.0, fitting::kInf},
                {"psb_red_offset", offset, 0.0, width},
                {"psb_sigma_red", sigma, 4.0 * g.step, width},
                {"psb_sigma_blue", sigma, 4.0 * g.step, width},
            };
            try {
                auto r = fitting::least_squares(prob);
                if (!have || r.residual_norm < best.residual_norm) {
                    best = std::move(r);
                    have = true;
                }
            } catch (const FitError& e) {
                failures.emplace_back(e.what());
            }
        }
    }
    if (!have) throw FitError("ZPL/PSB decomposition failed at every start: " + failures.front());
    for (int pass = 0; pass < 2 && best.converged; ++pass) {
        for (std::size_t i = 0; i < n; ++i)
            weight[i] = 1.0 / std::sqrt(std::max(model(best.values(), g.at(i)), opt.weight_floor));
        for (std::size_t k = 0; k < prob.parameters.size(); ++k) prob.parameters[k].initial = best.values()[k];
        try {
            auto r = fitting::least_squares(prob);
            if (r.converged) best = std::move(r);
        } catch (const FitError&) {
            break;
        }
    }
    if (!best.converged)
        throw FitError("ZPL/PSB decomposition did not converge (" + best.termination + ", residual norm " +
                           fmt(best.residual_norm * scale) + ")",
                       best.residual_trace);

    ZplPsbSplit out;
    out.zpl = {best.value("zpl_area") * scale, best.value("zpl_centre"), best.value("zpl_hwhm")};
    out.psb = {best.value("psb_area") * scale, best.value("zpl_centre") - best.value("psb_red_offset"),
               best.value("psb_sigma_red"), best.value("psb_sigma_blue")};
    out.zpl_area = out.zpl.area;
    out.psb_area = out.psb.area;
    if (out.psb_area > 0.0) out.ratio = out.zpl_area / out.psb_area;
    out.reliable = out.ratio.has_value() && out.psb_area > opt.noise_floor_fraction * out.zpl_area;
    out.fit = std::move(best);
    return out;
}

} // namespace qdcoh::spectra
