#include "qdcoh/coherence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"

namespace qdcoh::coherence {

void VisibilityTrace::validate() const {
    if (visibility.size() != time.size()) throw DomainError("visibility and delay columns differ in length");
    if (!sigma.empty() && sigma.size() != time.size()) throw DomainError("sigma column length mismatch");
    if (!flagged.empty() && flagged.size() != time.size()) throw DomainError("flag column length mismatch");
    for (std::size_t i = 1; i < time.size(); ++i)
        if (!(time[i] > time[i - 1])) throw DomainError("delay axis must be strictly ascending");
}

std::pair<double, double> default_window(double omega0_mev) { return {omega0_mev - 5.0, omega0_mev + 2.0}; }

CoherenceTrace temporal_coherence(const spectra::Spectrum& s, double omega0_mev, const UniformGrid& time,
                                  const CoherenceOptions& opt) {
    const auto [lo, hi] = opt.window_mev.value_or(default_window(omega0_mev));
    if (!(hi > lo)) throw DomainError("coherence window is empty");
    const UniformGrid& g = s.energy;
    const double tol = 1e-9 * g.step;
    if (lo < g.start - tol || hi > g.back() + tol)
        throw DomainError("coherence window lies outside the spectrum grid");
    const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil((lo - g.start) / g.step - 1e-9)));
    const auto last = static_cast<std::size_t>(std::min<double>(g.size - 1, std::floor((hi - g.start) / g.step + 1e-9)));
    if (last <= first) throw DomainError("coherence window holds fewer than two grid points");

    const std::size_t m = last - first + 1;
    std::vector<double> w(m);
    double area = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double x = g.at(first + k);
        double v = s.intensity[first + k] - s.background;
        if (opt.bandpass) {
            const double d = (x - opt.bandpass->centre_mev) / opt.bandpass->fwhm_mev;
            v *= std::exp(-4.0 * std::log(2.0) * d * d);
        }
        if (k == 0 || k + 1 == m) v *= 0.5;
        w[k] = v;
        area += v;
    }
    if (!(area > 0.0)) throw DomainError("net spectral area in the coherence window is not positive");
    for (double& v : w) v /= area;

    CoherenceTrace out;
    out.time = time;
    out.omega0_mev = omega0_mev;
    out.values.resize(time.size);
    const double x0 = g.at(first) - omega0_mev;
    for (std::size_t j = 0; j < time.size; ++j) {
        const double t = time.at(j) / kHbarMeVps;
        // e^{i x_k t} by rotation, re-anchored every 256 steps.
        const std::complex<double> rot = std::polar(1.0, g.step * t);
        std::complex<double> acc{0.0, 0.0}, ph;
        for (std::size_t k = 0; k < m; ++k) {
            if (k % 256 == 0) ph = std::polar(1.0, (x0 + g.step * static_cast<double>(k)) * t);
            acc += w[k] * ph;
            ph *= rot;
        }
        out.values[j] = acc;
    }
    return out;
}

VisibilityTrace visibility_of(const CoherenceTrace& c) {
    VisibilityTrace v;
    v.time = c.time.values();
    v.visibility.resize(c.values.size());
    for (std::size_t i = 0; i < c.values.size(); ++i) v.visibility[i] = std::clamp(std::abs(c.values[i]), 0.0, 1.0);
    return v;
}

std::optional<double> dominant_beat_period(const CoherenceTrace& c, double min_correlation) {
    const std::size_t n = c.values.size();
    if (n < 8) return std::nullopt;
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) d[i] = std::abs(c.values[i + 1]) - std::abs(c.values[i]);
    const std::size_t m = d.size();
    auto corr = [&](std::size_t lag) {
        double s = 0.0, a = 0.0, b = 0.0;
        for (std::size_t i = 0; i + lag < m; ++i) {
            s += d[i] * d[i + lag];
            a += d[i] * d[i];
            b += d[i + lag] * d[i + lag];
        }
        return (a > 0.0 && b > 0.0) ? s / std::sqrt(a * b) : 0.0;
    };
    std::vector<double> r(m / 2 + 1);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = corr(k);
    std::size_t k = 1;
    while (k < r.size() && r[k] > 0.0) ++k;  // past the zero-lag lobe
    std::size_t best = 0;
    for (; k + 1 < r.size(); ++k) {
        if (r[k] > r[k - 1] && r[k] >= r[k + 1] && r[k] > min_correlation) {
            best = k;
            break;
        }
    }
    if (best == 0) return std::nullopt;
    const double a = r[best - 1], b = r[best], e = r[best + 1];
    const double den = a - 2.0 * b + e;
    const double shift = den != 0.0 ? 0.5 * (a - e) / den : 0.0;
    return (static_cast<double>(best) + shift) * c.time.step;
}

double exponential_decay_time(const CoherenceTrace& c, double t_lo, double t_hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < c.values.size(); ++i) {
        const double t = c.time.at(i);
        const double v = std::abs(c.values[i]);
        if (t < t_lo || t > t_hi || !(v > 0.0)) continue;
        const double y = std::log(v);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        ++n;
    }
    if (n < 2) throw DomainError("decay fit needs at least two points in [" + std::to_string(t_lo) + ", " +
                                 std::to_string(t_hi) + "] ps");
    const double dn = static_cast<double>(n);
    const double slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
    if (!(slope < 0.0)) throw NumericalError("trace does not decay over the fit range", slope);
    return -1.0 / slope;
}

} // namespace qdcoh::coherence
