#include "qdcoh/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>

#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"
#include "qdcoh/interpolation.hpp"

namespace qdcoh::fitting {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

constexpr std::size_t kShared = 8;
constexpr std::size_t kPerDataset = 5;

phonon::PhononParams phonons_from(std::span<const double> q) {
    phonon::PhononParams p;
    p.alpha_la = q[0];
    p.omega_c = q[1];
    p.s_loc = q[2];
    p.omega_loc = q[3];
    p.sigma_loc = q[4];
    p.temperature = q[5];
    return p;
}

// Bare QD emission for the last two shared-parameter vectors. The Jacobian
// sweeps one column at a time, so per-dataset columns hit the base entry.
class LineshapeCache {
public:
    LineshapeCache(double reference_mev, spectra::GridConfig grid) : ref_(reference_mev), grid_(grid) {}

    const spectra::Spectrum& get(std::span<const double> shared) {
        std::vector<double> key(shared.begin(), shared.end());
        for (auto it = entries_.begin(); it != entries_.end(); ++it) {
            if (it->first == key) {
                if (it != entries_.begin()) {
                    auto e = std::move(*it);
                    entries_.erase(it);
                    entries_.push_front(std::move(e));
                }
                return entries_.front().second;
            }
        }
        phonon::EmitterParams e;
        e.omega0_mev = ref_;
        e.gamma_inhom = shared[6];
        e.gamma_hom = shared[7];
        entries_.emplace_front(std::move(key), spectra::qd_emission(e, phonons_from(shared), grid_));
        ++evaluations_;
        if (entries_.size() > 2) entries_.pop_back();
        return entries_.front().second;
    }

    double reference() const { return ref_; }
    std::size_t evaluations() const { return evaluations_; }

private:
    double ref_;
    spectra::GridConfig grid_;
    std::deque<std::pair<std::vector<double>, spectra::Spectrum>> entries_;
    std::size_t evaluations_ = 0;
};

struct Dataset {
    std::string tag;
    const spectra::Spectrum* spectrum = nullptr;
    std::vector<double> weight;
    std::size_t offset = 0;
};

// Model for one dataset, given shared lineshape and its five parameters.
void dataset_model(const Dataset& d, const spectra::Spectrum& bare, double ref, std::span<const double> q,
                   std::span<double> out) {
    spectra::CavityParams c;
    c.omega_cav_mev = q[1];
    c.gamma_cav_mev = q[2];
    c.a_cav = q[3];
    const auto& g = d.spectrum->energy;
    for (std::size_t i = 0; i < g.size; ++i) {
        const double e = g.at(i);
        const double v = cubic_at(bare.energy, bare.intensity, e - q[0] + ref, 0.0);
        out[i] = v * spectra::cavity_filter_factor(e, c) + q[4];
    }
}

} // namespace

std::vector<std::string> shared_parameter_names() {
    return {"alpha_la", "omega_c", "s_loc", "omega_loc", "sigma_loc", "temperature", "gamma_inhom", "gamma_hom"};
}

GlobalFitReport fit_spectra_global(const std::vector<spectra::Spectrum>& series, const GlobalFitInit& init) {
    init.phonons.validate();
    init.emitter.validate();
    GlobalFitReport report;

    std::vector<Dataset> sets;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        s.validate();
        std::string tag = s.labels.tag;
        if (tag.empty()) tag = s.labels.detuning_mev ? spectra::detuning_tag(*s.labels.detuning_mev) : "ds" + std::to_string(i);
        if (!seen.insert(tag).second) throw ProtocolError("duplicate dataset tag '" + tag + "'");
        if (init.exclude.count(tag)) {
            report.excluded.push_back(tag);
            continue;
        }
        sets.push_back({tag, &s, {}, 0});
    }
    for (const auto& t : init.exclude)
        if (!seen.count(t)) throw ProtocolError("excluded dataset '" + t + "' is not among the inputs");
    if (sets.size() < 2) throw ProtocolError("global spectral fit needs at least 2 datasets, got " + std::to_string(sets.size()));

    // Parameters.
    std::vector<ParameterSpec> params;
    const auto& ph = init.phonons;
    params.push_back({"alpha_la", ph.alpha_la, 0.0, kInf, false, "shared", 0.0, "initial"});
    params.push_back({"omega_c", ph.omega_c, 1e-3, kInf, false, "shared", 0.0, "initial"});
    params.push_back({"s_loc", ph.s_loc, 0.0, kInf, false, "shared", 0.1, "initial"});
    params.push_back({"omega_loc", ph.omega_loc, 1e-3, kInf, false, "shared", 0.0, "initial"});
    params.push_back({"sigma_loc", ph.sigma_loc, 1e-3, kInf, false, "shared", 0.0, "initial"});
    params.push_back({"temperature", ph.temperature, 0.1, 400.0, false, "shared", 0.0, "initial"});
    params.push_back({"gamma_inhom", init.emitter.gamma_inhom, 0.0, kInf, false, "shared", 0.01, "initial"});
    params.push_back({"gamma_hom", init.emitter.gamma_hom, 0.0, kInf, !init.fit_gamma_hom, "shared", 0.01,
                      init.fit_gamma_hom ? "initial" : "fixed extension"});

    std::size_t offset = 0;
    double reference = 0.0;
    for (auto& d : sets) {
        const auto& s = *d.spectrum;
        const auto y = std::span<const double>(s.intensity);
        const double top = *std::max_element(y.begin(), y.end());
        if (!(top > 0.0)) throw ProtocolError("dataset '" + d.tag + "' has no positive intensity");
        d.offset = offset;
        offset += y.size();
        d.weight.resize(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) d.weight[i] = 1.0 / std::sqrt(std::max(y[i], init.weight_floor * top));

        const DatasetInit di = init.datasets.count(d.tag) ? init.datasets.at(d.tag) : DatasetInit{};
        const double w0 = di.omega0_mev.value_or(s.energy.at(spectra::find_zpl_index(s.energy, y, 0.110)));
        if (reference == 0.0) reference = w0;
        double wc = 0.0;
        if (di.omega_cav_mev) wc = *di.omega_cav_mev;
        else if (s.labels.detuning_mev) wc = w0 + *s.labels.detuning_mev;
        else throw ProtocolError("dataset '" + d.tag + "' has no cavity energy or detuning to start from");
        const double bg = di.i_bg.value_or(std::max(0.0, *std::min_element(y.begin(), y.end())));
        params.push_back({d.tag + ".omega0", w0, w0 - 0.5, w0 + 0.5, false, d.tag, 0.0, di.omega0_mev ? "initial" : "ZPL peak"});
        params.push_back({d.tag + ".omega_cav", wc, wc - 10.0, wc + 10.0, false, d.tag, 0.0, "initial"});
        params.push_back({d.tag + ".gamma_cav", di.gamma_cav_mev.value_or(1.75), 0.05, 50.0, false, d.tag, 0.0, "initial"});
        params.push_back({d.tag + ".a_cav", di.a_cav.value_or(0.0), 0.0, kInf, false, d.tag, 0.0, "initial"});
        params.push_back({d.tag + ".i_bg", bg, 0.0, kInf, false, d.tag, top * 1e-3, "initial"});
    }

    for (const auto& [name, value] : init.locks) {
        auto it = std::find_if(params.begin(), params.end(), [&](const ParameterSpec& p) { return p.name == name; });
        if (it == params.end()) throw ConfigurationError("cannot lock unknown parameter '" + name + "'");
        it->initial = value;
        it->locked = true;
        it->provenance = "locked by configuration";
    }

    LineshapeCache cache(reference, init.grid);

    // Amplitude starts from a projection of the data on the initial shape.
    {
        std::vector<double> q0(params.size());
        for (std::size_t j = 0; j < params.size(); ++j) q0[j] = params[j].initial;
        const auto& bare = cache.get(std::span(q0).first(kShared));
        for (std::size_t k = 0; k < sets.size(); ++k) {
            auto& a = params[kShared + k * kPerDataset + 3];
            if (a.locked || (init.datasets.count(sets[k].tag) && init.datasets.at(sets[k].tag).a_cav)) continue;
            std::vector<double> q(q0.begin() + static_cast<long>(kShared + k * kPerDataset),
                                  q0.begin() + static_cast<long>(kShared + (k + 1) * kPerDataset));
            q[3] = 1.0;
            q[4] = 0.0;
            std::vector<double> m(sets[k].spectrum->intensity.size());
            dataset_model(sets[k], bare, reference, q, m);
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double w2 = sets[k].weight[i] * sets[k].weight[i];
                num += w2 * m[i] * (sets[k].spectrum->intensity[i] - q0[kShared + k * kPerDataset + 4]);
                den += w2 * m[i] * m[i];
            }
            a.initial = den > 0.0 ? std::max(num / den, 1e-12) : 1.0;
        }
    }

    FitProblem prob;
    prob.parameters = params;
    prob.residual_count = offset;
    for (const auto& d : sets) prob.datasets.push_back({d.tag, d.offset, d.spectrum->intensity.size()});
    prob.residuals = [&](std::span<const double> q, std::span<double> r) {
        const auto& bare = cache.get(q.first(kShared));
        for (std::size_t k = 0; k < sets.size(); ++k) {
            const auto& d = sets[k];
            auto out = r.subspan(d.offset, d.spectrum->intensity.size());
            dataset_model(d, bare, cache.reference(), q.subspan(kShared + k * kPerDataset, kPerDataset), out);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - d.spectrum->intensity[i]) * d.weight[i];
        }
    };
    report.fit = least_squares(prob, init.options);

    const auto q = report.fit.values();
    const auto& bare = cache.get(std::span(q).first(kShared));
    for (std::size_t k = 0; k < sets.size(); ++k) {
        const auto& d = sets[k];
        Overlay o;
        o.tag = d.tag;
        o.energy = d.spectrum->energy;
        o.data = d.spectrum->intensity;
        o.model.resize(o.data.size());
        dataset_model(d, bare, cache.reference(), std::span(q).subspan(kShared + k * kPerDataset, kPerDataset), o.model);
        o.residual.resize(o.data.size());
        for (std::size_t i = 0; i < o.data.size(); ++i) o.residual[i] = o.data[i] - o.model[i];
        report.overlays.push_back(std::move(o));
    }
    report.model_evaluations = cache.evaluations();
    return report;
}

// ---- visibility ----------------------------------------------------------------

namespace {

struct Points {
    std::vector<double> t, v;
};

Points select(const coherence::VisibilityTrace& tr, auto keep) {
    tr.validate();
    Points p;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        if (!tr.flagged.empty() && tr.flagged[i]) continue;
        if (!keep(tr.time[i])) continue;
        p.t.push_back(tr.time[i]);
        p.v.push_back(tr.visibility[i]);
    }
    return p;
}

} // namespace

FitResult fit_visibility_long(const coherence::VisibilityTrace& v, const LongFitOptions& opt) {
    const Points p = select(v, [&](double t) { return std::abs(t) > opt.exclusion_ps; });
    if (p.t.size() < 6)
        throw ProtocolError("long-delay fit needs at least 6 points beyond +-" + fmt(opt.exclusion_ps) + " ps, got " +
                            std::to_string(p.t.size()));
    FitProblem prob;
    prob.residual_count = p.t.size();
    prob.residuals = [&](std::span<const double> q, std::span<double> r) {
        for (std::size_t i = 0; i < p.t.size(); ++i) r[i] = q[0] * std::exp(-std::abs(p.t[i]) / q[1]) - p.v[i];
    };
    prob.parameters = {
        {"amplitude", opt.amplitude, 0.0, kInf, opt.lock_amplitude, "shared", 0.0,
         opt.lock_amplitude ? opt.amplitude_provenance : "initial"},
        {"tau1", opt.tau1_initial, 1e-3, kInf, false, "shared", 0.0, "initial"},
    };
    prob.datasets = {{"visibility", 0, p.t.size()}};
    return least_squares(prob);
}

FitResult fit_visibility_short(const coherence::VisibilityTrace& v, const ShortFitOptions& opt) {
    const Points p = select(v, [&](double t) { return std::abs(t) <= opt.half_range_ps; });
    if (p.t.size() < 8)
        throw ProtocolError("short-delay fit needs at least 8 points within +-" + fmt(opt.half_range_ps) + " ps, got " +
                            std::to_string(p.t.size()));
    if (!(opt.tau1 > 0.0)) throw ProtocolError("tau1 must be > 0");
    const double vmax = *std::max_element(p.v.begin(), p.v.end());

    FitProblem prob;
    prob.residual_count = p.t.size();
    prob.residuals = [&](std::span<const double> q, std::span<double> r) {
        for (std::size_t i = 0; i < p.t.size(); ++i) {
            const double t = p.t[i];
            const double s = (q[1] / q[2]) * std::exp(-std::abs(t) / q[2]);
            const double x = t / q[4];
            const double f = (q[3] / q[4]) * std::exp(-x * x / std::log(2.0));
            const double rad = s * s + f * f + 2.0 * s * f * std::cos(q[5] * t);
            r[i] = q[0] * std::sqrt(std::max(0.0, rad)) - p.v[i];
        }
    };
    prob.datasets = {{"visibility", 0, p.t.size()}};

    FitResult best;
    bool have = false;
    std::string last_error;
    for (double period : opt.beat_periods_ps) {
        for (double tau2 : opt.tau2_starts_ps) {
            prob.parameters = {
                {"constant", opt.constant, 0.0, kInf, opt.lock_constant, "shared", 0.0,
                 opt.lock_constant ? "fixed: degenerate with a1, a2" : "initial"},
                {"a1", 0.7 * vmax * opt.tau1, 0.0, kInf, false, "shared", 0.0, "initial"},
                {"tau1", opt.tau1, 1e-3, kInf, true, "shared", 0.0, opt.tau1_provenance},
                {"a2", 0.3 * vmax * tau2, 0.0, kInf, false, "shared", 0.0, "initial"},
                {"tau2", tau2, 1e-2, 50.0, false, "shared", 0.0, "initial"},
                {"delta_omega", 2.0 * kPi / period, 0.0, 2.0 * kPi / 0.05, false, "shared", 0.0, "initial"},
            };
            try {
                auto r = least_squares(prob);
                if (!have || r.residual_norm < best.residual_norm) {
                    best = std::move(r);
                    have = true;
                }
            } catch (const FitError& e) {
                last_error = e.what();
            }
        }
    }
    if (!have) throw FitError("short-delay fit failed at every start: " + last_error);
    const double c = best.correlation("a2", "tau2");
    if (std::abs(c) > opt.degeneracy_correlation)
        best.warnings.push_back("a2 and tau2 are degenerate at this resolution (correlation " + fmt(c) + ")");
    const auto& a2 = best.parameter("a2");
    const auto& t2 = best.parameter("tau2");
    if ((a2.value > 0.0 && a2.sigma > a2.value) || (t2.sigma > t2.value))
        best.warnings.push_back("a2/tau2 uncertainty exceeds the value (sigma ratio " +
                                fmt(a2.value > 0.0 ? a2.sigma / a2.value : kInf) + ", " + fmt(t2.sigma / t2.value) + ")");
    return best;
}

std::pair<double, double> slow_component(const FitResult& slow) {
    if (slow.has("amplitude")) return {slow.value("amplitude"), slow.value("tau1")};
    if (slow.has("a1")) {
        const double c = slow.has("constant") ? slow.value("constant") : 1.0;
        return {c * slow.value("a1") / slow.value("tau1"), slow.value("tau1")};
    }
    throw ProtocolError("fit result carries no slow component");
}

PsbArea psb_visibility_area(const coherence::VisibilityTrace& v, const FitResult& slow, double half_range_ps) {
    const auto [amp, tau] = slow_component(slow);
    const Points p = select(v, [&](double t) { return std::abs(t) <= half_range_ps; });
    if (p.t.size() < 2) throw ProtocolError("visibility trace has fewer than 2 points in the fine window");
    PsbArea out;
    out.time = p.t;
    std::vector<double> neg(p.t.size());
    out.residual.resize(p.t.size());
    for (std::size_t i = 0; i < p.t.size(); ++i) {
        const double r = p.v[i] - amp * std::exp(-std::abs(p.t[i]) / tau);
        out.residual[i] = std::max(0.0, r);
        neg[i] = std::max(0.0, -r);
    }
    out.area = trapezoid(out.time, out.residual);
    out.clipped_mass = trapezoid(out.time, neg);
    if (out.clipped_mass > out.area)
        out.warnings.push_back("slow trace overshoots the data: clipped mass " + fmt(out.clipped_mass) +
                               " ps exceeds the area " + fmt(out.area) + " ps");
    return out;
}

void add_count_noise(spectra::Spectrum& s, double rel, std::mt19937_64& rng, double floor) {
    const double top = *std::max_element(s.intensity.begin(), s.intensity.end());
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : s.intensity) {
        const double sigma = rel * std::sqrt(std::max(v, floor * top) * top);
        v = std::max(0.0, v + sigma * n(rng));
    }
}

void add_gaussian_noise(std::vector<double>& y, double sigma, std::mt19937_64& rng, std::optional<double> clip_below) {
    std::normal_distribution<double> n(0.0, sigma);
    for (double& v : y) {
        v += n(rng);
        if (clip_below) v = std::max(*clip_below, v);
    }
}

} // namespace qdcoh::fitting
