#include "qdcoh/interferometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"
#include "qdcoh/interpolation.hpp"
#include "qdcoh/least_squares.hpp"

namespace qdcoh::interferometry {

namespace {

double slow_term(double t, const InterferogramModelParams& p) {
    return (p.a1 / p.tau1) * std::exp(-std::abs(t) / p.tau1);
}

double fast_term(double t, const InterferogramModelParams& p) {
    const double r = t / p.tau2;
    return (p.a2 / p.tau2) * std::exp(-r * r / std::log(2.0));
}

} // namespace

void InterferogramModelParams::validate() const {
    if (!(i0 > 0.0)) throw DomainError("i0 must be > 0");
    if (!(tau1 > 0.0 && tau2 > 0.0)) throw DomainError("tau1 and tau2 must be > 0");
    if (!(a1 >= 0.0 && a2 >= 0.0)) throw DomainError("a1 and a2 must be >= 0");
    if (!(std::isfinite(omega1) && std::isfinite(omega2))) throw DomainError("frequencies must be finite");
}

void Interferogram::validate() const {
    if (delay.size() != samples.size()) throw DomainError("delay and sample columns differ in length");
    for (std::size_t i = 1; i < delay.size(); ++i)
        if (!(delay[i] > delay[i - 1])) throw DomainError("delays must be strictly ascending");
    for (double v : samples)
        if (!(std::isfinite(v) && v >= 0.0)) throw DomainError("interferogram samples must be finite and >= 0");
}

double interferogram_model(double t, const InterferogramModelParams& p) {
    return p.i0 + slow_term(t, p) * std::cos(p.omega1 * t) + fast_term(t, p) * std::cos(p.omega2 * t);
}

double envelope_radicand(double t, const InterferogramModelParams& p) {
    const double s = slow_term(t, p), f = fast_term(t, p);
    return s * s + f * f + 2.0 * s * f * std::cos(std::abs(p.omega1 - p.omega2) * t);
}

EnvelopeValue envelope_model(double t, const InterferogramModelParams& p) {
    const double r = std::sqrt(std::max(0.0, envelope_radicand(t, p)));
    return {p.i0 + r, p.i0 - r};
}

EnvelopePair envelope_model(std::span<const double> t, const InterferogramModelParams& p) {
    EnvelopePair out;
    out.delay.assign(t.begin(), t.end());
    out.upper.reserve(t.size());
    out.lower.reserve(t.size());
    for (double x : t) {
        const auto e = envelope_model(x, p);
        out.upper.push_back(e.upper);
        out.lower.push_back(e.lower);
    }
    return out;
}

double model_visibility(double t, const InterferogramModelParams& p) {
    const auto e = envelope_model(t, p);
    return (e.upper - e.lower) / (e.upper + e.lower);
}

double fringe_period(double carrier_mev) { return 2.0 * kPi * kHbarMeVps / carrier_mev; }

std::vector<double> Sampling::delays() const {
    std::vector<double> out;
    for (const auto& s : segments) {
        const auto n = static_cast<long>(std::floor(0.5 * s.width / s.step + 1e-9));
        for (long k = -n; k <= n; ++k) out.push_back(s.centre + static_cast<double>(k) * s.step);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
              out.end());
    return out;
}

Sampling Sampling::fine(double carrier_mev, double half_range_ps, double points_per_fringe) {
    return {{{0.0, 2.0 * half_range_ps, fringe_period(carrier_mev) / points_per_fringe}}};
}

Sampling Sampling::coarse(double carrier_mev, double max_delay_ps, double spacing_ps, double periods_per_segment,
                          double points_per_fringe) {
    const double period = fringe_period(carrier_mev);
    Sampling s;
    const auto n = static_cast<long>(std::floor(max_delay_ps / spacing_ps + 1e-9));
    for (long k = -n; k <= n; ++k)
        s.segments.push_back({static_cast<double>(k) * spacing_ps, periods_per_segment * period,
                              period / points_per_fringe});
    return s;
}

namespace {

void check_sampling(const Sampling& sampling, double carrier_mev) {
    const double period = fringe_period(carrier_mev);
    for (const auto& s : sampling.segments) {
        if (!(s.step > 0.0 && s.width >= 0.0)) throw ConfigurationError("sampling segment needs step > 0");
        if (s.step > period / 4.0 * (1.0 + 1e-9))
            throw ConfigurationError("sampling step " + std::to_string(s.step * 1e3) + " fs gives fewer than 4 points per " +
                                     std::to_string(period * 1e3) + " fs fringe");
    }
}

} // namespace

Interferogram synthesize_interferogram(const coherence::CoherenceTrace& c, double i0, const Sampling& sampling) {
    if (!(i0 > 0.0)) throw DomainError("i0 must be > 0");
    check_sampling(sampling, c.omega0_mev);
    if (c.time.size < 2 || c.time.start != 0.0)
        throw ConfigurationError("coherence trace must start at t = 0 with at least two points");
    std::vector<double> re(c.values.size()), im(c.values.size());
    for (std::size_t i = 0; i < c.values.size(); ++i) {
        re[i] = c.values[i].real();
        im[i] = c.values[i].imag();
    }
    const double w0 = mev_to_angular(c.omega0_mev);
    Interferogram out;
    out.delay = sampling.delays();
    out.samples.reserve(out.delay.size());
    for (double t : out.delay) {
        const double a = std::abs(t);
        if (a > c.time.back() * (1.0 + 1e-12))
            throw ConfigurationError("delay " + std::to_string(t) + " ps lies beyond the coherence trace");
        const double u = std::min(a / c.time.step, static_cast<double>(c.values.size() - 1));
        std::complex<double> v{cubic_at(re, u), cubic_at(im, u)};
        if (t < 0.0) v = std::conj(v);
        out.samples.push_back(std::max(0.0, i0 * (1.0 + (v * std::polar(1.0, w0 * t)).real())));
    }
    return out;
}

Interferogram synthesize_model(const InterferogramModelParams& p, const Sampling& sampling) {
    p.validate();
    Interferogram out;
    out.delay = sampling.delays();
    out.samples.reserve(out.delay.size());
    for (double t : out.delay) out.samples.push_back(std::max(0.0, interferogram_model(t, p)));
    return out;
}

namespace {

struct WindowFit {
    double centre = 0.0;
    double visibility = 0.0;
    double sigma = 0.0;
    bool ok = false;
    bool uncertain = false;
};

WindowFit fit_window(std::span<const double> t, std::span<const double> y, double centre, double omega,
                     double tolerance) {
    const std::size_t n = t.size();
    WindowFit out;
    out.centre = centre;
    if (n < 6) return out;

    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ph = omega * (t[i] - centre);
        x(static_cast<Eigen::Index>(i), 0) = 1.0;
        x(static_cast<Eigen::Index>(i), 1) = std::cos(ph);
        x(static_cast<Eigen::Index>(i), 2) = std::sin(ph);
        b(static_cast<Eigen::Index>(i)) = y[i];
    }
    Eigen::Vector3d q = x.colPivHouseholderQr().solve(b);
    const double dof = static_cast<double>(n) - 3.0;
    double s2 = (x * q - b).squaredNorm() / dof;
    Eigen::Matrix3d cov = s2 * (x.transpose() * x).inverse();
    double amp = std::hypot(q(1), q(2));
    double amp_sigma = std::sqrt(std::max(0.0, cov(1, 1) + cov(2, 2)) / 2.0);

    // Refine with a free frequency when there is a fringe to lock on to.
    if (amp > 3.0 * amp_sigma) {
        fitting::FitProblem prob;
        prob.residual_count = n;
        prob.residuals = [&](std::span<const double> p, std::span<double> r) {
            for (std::size_t i = 0; i < n; ++i) {
                const double ph = p[3] * (t[i] - centre);
                r[i] = p[0] + p[1] * std::cos(ph) + p[2] * std::sin(ph) - y[i];
            }
        };
        const double scale = std::max(std::abs(q(0)), 1e-300);
        prob.parameters = {{"offset", q(0), -fitting::kInf, fitting::kInf, false, "shared", scale},
                           {"cos", q(1), -fitting::kInf, fitting::kInf, false, "shared", scale},
                           {"sin", q(2), -fitting::kInf, fitting::kInf, false, "shared", scale},
                           {"omega", omega, omega * (1.0 - tolerance), omega * (1.0 + tolerance)}};
        try {
            const auto r = fitting::least_squares(prob);
            if (!r.converged) return out;
            const auto v = r.values();
            q = {v[0], v[1], v[2]};
            if (r.covariance.rows() == 4) cov = r.covariance.topLeftCorner<3, 3>();
            amp = std::hypot(q(1), q(2));
        } catch (const FitError&) {
            return out;
        }
    }
    if (!(q(0) > 0.0)) return out;

    Eigen::Vector3d grad;
    grad(0) = -amp / (q(0) * q(0));
    grad(1) = amp > 0.0 ? q(1) / (amp * q(0)) : 1.0 / q(0);
    grad(2) = amp > 0.0 ? q(2) / (amp * q(0)) : 0.0;
    out.visibility = amp / q(0);
    out.sigma = std::sqrt(std::max(0.0, grad.dot(cov * grad)));
    amp_sigma = out.sigma * q(0);
    out.ok = std::isfinite(out.visibility) && std::isfinite(out.sigma);
    out.uncertain = amp_sigma > amp;
    return out;
}

} // namespace

coherence::VisibilityTrace extract_visibility(const Interferogram& raw, const ExtractOptions& opt,
                                              ExtractionReport* report) {
    raw.validate();
    const double period = fringe_period(opt.carrier_mev);
    const double width = opt.window_width_ps.value_or(10.0 * period);
    if (width < 2.0 * period * (1.0 - 1e-9))
        throw ConfigurationError("window width must cover at least two fringe periods");
    const double omega = mev_to_angular(opt.carrier_mev);
    const std::size_t n = raw.delay.size();

    // Contiguous blocks: a gap wider than half a window starts a new block.
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i == n || raw.delay[i] - raw.delay[i - 1] > 0.5 * width) {
            blocks.emplace_back(begin, i);
            begin = i;
        }
    }

    coherence::VisibilityTrace out;
    ExtractionReport rep;
    const double slack = 1e-6 * width;
    for (const auto& [b, e] : blocks) {
        const double t0 = raw.delay[b], t1 = raw.delay[e - 1];
        if (t1 - t0 < width * (1.0 - 1e-3)) continue;
        const auto count = static_cast<std::size_t>(std::floor((t1 - t0 - width + slack) / (0.5 * width))) + 1;
        // Centre the run of windows inside the block.
        const double lead = 0.5 * ((t1 - t0) - width - 0.5 * width * static_cast<double>(count - 1));
        for (std::size_t k = 0; k < count; ++k) {
            const double lo = t0 + std::max(0.0, lead) + 0.5 * width * static_cast<double>(k);
            const double hi = lo + width;
            const auto first = std::lower_bound(raw.delay.begin() + static_cast<long>(b),
                                                raw.delay.begin() + static_cast<long>(e), lo - slack);
            const auto last = std::upper_bound(first, raw.delay.begin() + static_cast<long>(e), hi + slack);
            const auto i0 = static_cast<std::size_t>(first - raw.delay.begin());
            const auto i1 = static_cast<std::size_t>(last - raw.delay.begin());
            const double centre = 0.5 * (lo + hi);
            const auto f = fit_window(std::span(raw.delay).subspan(i0, i1 - i0),
                                      std::span(raw.samples).subspan(i0, i1 - i0), centre, omega,
                                      opt.frequency_tolerance);
            if (!f.ok) {
                rep.dropped.push_back(centre);
                continue;
            }
            out.time.push_back(centre);
            out.visibility.push_back(f.visibility);
            out.sigma.push_back(f.sigma);
            out.flagged.push_back(f.uncertain);
        }
    }
    if (report) *report = rep;
    if (out.time.size() < 3)
        throw ProtocolError("only " + std::to_string(out.time.size()) + " valid visibility windows (need 3)");
    return out;
}

} // namespace qdcoh::interferometry
