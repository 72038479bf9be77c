#include "qdcoh/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "qdcoh/constants.hpp"
#include "qdcoh/errors.hpp"
#include "qdcoh/io.hpp"
#include "qdcoh/presets.hpp"

namespace qdcoh::config {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig defaults() {
    RunConfig c;
    c.emitter = presets::reference_emitter();
    c.phonon = presets::reference_phonons();
    c.cavity = presets::reference_cavity();
    c.detunings_mev = presets::reference_detunings();
    return c;
}

json to_json(const RunConfig& c) {
    json j;
    j["emitter"] = {{"omega0_mev", c.emitter.omega0_mev},
                    {"gamma_inhom_per_ps", c.emitter.gamma_inhom},
                    {"gamma_hom_per_ps", c.emitter.gamma_hom}};
    j["phonon"] = {{"alpha_la_ps2", c.phonon.alpha_la},
                   {"omega_c_mev", angular_to_mev(c.phonon.omega_c)},
                   {"s_loc", c.phonon.s_loc},
                   {"omega_loc_mev", angular_to_mev(c.phonon.omega_loc)},
                   {"sigma_loc_mev", angular_to_mev(c.phonon.sigma_loc)},
                   {"temperature_k", c.phonon.temperature}};
    j["cavity"] = {{"gamma_cav_mev", c.cavity.gamma_cav_mev}, {"a_cav", c.cavity.a_cav}, {"i_bg", c.i_bg}};
    j["detunings_mev"] = c.detunings_mev;
    j["grid"] = {{"half_span_mev", c.grid.half_span_mev},
                 {"energy_points", c.grid.energy_points},
                 {"time_span_ps", c.grid.time_span_ps}};
    j["coherence"] = {{"window_mev", {c.coherence.window_mev.first, c.coherence.window_mev.second}},
                      {"bandpass_fwhm_mev", c.coherence.bandpass_fwhm_mev ? json(*c.coherence.bandpass_fwhm_mev) : json()},
                      {"max_delay_ps", c.coherence.max_delay_ps},
                      {"step_ps", c.coherence.step_ps}};
    const auto& f = c.interferometer;
    j["interferometer"] = {{"emit", f.emit},
                           {"noise", f.noise},
                           {"max_delay_ps", f.max_delay_ps},
                           {"coarse_spacing_ps", f.coarse_spacing_ps},
                           {"fine_half_range_ps", f.fine_half_range_ps},
                           {"points_per_fringe", f.points_per_fringe},
                           {"periods_per_window", f.periods_per_window}};
    j["protocol"] = {{"exclusion_ps", c.protocol.exclusion_ps},
                     {"amplitude", c.protocol.amplitude},
                     {"lock_amplitude", c.protocol.lock_amplitude},
                     {"short_half_range_ps", c.protocol.short_half_range_ps}};
    j["fit"] = {{"exclude", c.fit.exclude},
                {"locks", c.fit.locks},
                {"initial_temperature_k", c.fit.initial_temperature_k},
                {"fit_gamma_hom", c.fit.fit_gamma_hom}};
    j["synthetic_noise"] = c.synthetic_noise;
    j["seed"] = c.seed;
    j["data"] = c.data ? json(c.data->generic_string()) : json();
    return j;
}

namespace {

// Walks one JSON object, rejecting keys that no reader claimed.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigurationError(where() + ": expected an object");
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigurationError("unknown field '" + field(k) + "'");
    }

    void number(const char* key, double& out) {
        if (const json* v = get(key)) {
            if (!v->is_number()) throw ConfigurationError("field '" + field(key) + "' must be a number");
            out = v->get<double>();
            if (!std::isfinite(out)) throw ConfigurationError("field '" + field(key) + "' must be finite");
        }
    }
    void count(const char* key, std::size_t& out) {
        if (const json* v = get(key)) {
            if (!v->is_number_unsigned()) throw ConfigurationError("field '" + field(key) + "' must be a non-negative integer");
            out = v->get<std::size_t>();
        }
    }
    void seed(const char* key, std::uint64_t& out) {
        if (const json* v = get(key)) {
            if (!v->is_number_unsigned()) throw ConfigurationError("field '" + field(key) + "' must be a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void boolean(const char* key, bool& out) {
        if (const json* v = get(key)) {
            if (!v->is_boolean()) throw ConfigurationError("field '" + field(key) + "' must be true or false");
            out = v->get<bool>();
        }
    }
    void optional_number(const char* key, std::optional<double>& out) {
        if (const json* v = get(key)) {
            if (v->is_null()) out.reset();
            else if (v->is_number()) out = v->get<double>();
            else throw ConfigurationError("field '" + field(key) + "' must be a number or null");
        }
    }
    void numbers(const char* key, std::vector<double>& out) {
        if (const json* v = get(key)) {
            if (!v->is_array()) throw ConfigurationError("field '" + field(key) + "' must be an array of numbers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number())
                    throw ConfigurationError("field '" + field(key) + "[" + std::to_string(i) + "]' must be a number");
                out.push_back((*v)[i].get<double>());
            }
        }
    }
    void strings(const char* key, std::vector<std::string>& out) {
        if (const json* v = get(key)) {
            if (!v->is_array()) throw ConfigurationError("field '" + field(key) + "' must be an array of strings");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_string())
                    throw ConfigurationError("field '" + field(key) + "[" + std::to_string(i) + "]' must be a string");
                out.push_back((*v)[i].get<std::string>());
            }
        }
    }
    void number_map(const char* key, std::map<std::string, double>& out) {
        if (const json* v = get(key)) {
            if (!v->is_object()) throw ConfigurationError("field '" + field(key) + "' must be an object of numbers");
            out.clear();
            for (const auto& [k, x] : v->items()) {
                if (!x.is_number()) throw ConfigurationError("field '" + field(key) + "." + k + "' must be a number");
                out[k] = x.get<double>();
            }
        }
    }
    void path(const char* key, std::optional<fs::path>& out) {
        if (const json* v = get(key)) {
            if (v->is_null()) out.reset();
            else if (v->is_string()) out = fs::path(v->get<std::string>());
            else throw ConfigurationError("field '" + field(key) + "' must be a string or null");
        }
    }
    template <typename F>
    void object(const char* key, F&& f) {
        if (const json* v = get(key)) {
            Reader sub(*v, field(key));
            f(sub);
        }
    }
    const json* get(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "config" : "field '" + path_ + "'"; }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void check(bool ok, const std::string& what) {
    if (!ok) throw ConfigurationError(what);
}

} // namespace

RunConfig from_json(const json& j, const RunConfig& base) {
    RunConfig c = base;
    {
        Reader r(j, "");
        r.object("emitter", [&](Reader& e) {
            e.number("omega0_mev", c.emitter.omega0_mev);
            e.number("gamma_inhom_per_ps", c.emitter.gamma_inhom);
            e.number("gamma_hom_per_ps", c.emitter.gamma_hom);
        });
        r.object("phonon", [&](Reader& p) {
            double wc = angular_to_mev(c.phonon.omega_c), wl = angular_to_mev(c.phonon.omega_loc),
                   sl = angular_to_mev(c.phonon.sigma_loc);
            p.number("alpha_la_ps2", c.phonon.alpha_la);
            p.number("omega_c_mev", wc);
            p.number("s_loc", c.phonon.s_loc);
            p.number("omega_loc_mev", wl);
            p.number("sigma_loc_mev", sl);
            p.number("temperature_k", c.phonon.temperature);
            c.phonon.omega_c = mev_to_angular(wc);
            c.phonon.omega_loc = mev_to_angular(wl);
            c.phonon.sigma_loc = mev_to_angular(sl);
        });
        r.object("cavity", [&](Reader& k) {
            k.number("gamma_cav_mev", c.cavity.gamma_cav_mev);
            k.number("a_cav", c.cavity.a_cav);
            k.number("i_bg", c.i_bg);
        });
        r.numbers("detunings_mev", c.detunings_mev);
        r.object("grid", [&](Reader& g) {
            g.number("half_span_mev", c.grid.half_span_mev);
            g.count("energy_points", c.grid.energy_points);
            g.number("time_span_ps", c.grid.time_span_ps);
        });
        r.object("coherence", [&](Reader& k) {
            std::vector<double> w{c.coherence.window_mev.first, c.coherence.window_mev.second};
            k.numbers("window_mev", w);
            if (w.size() != 2) throw ConfigurationError("field 'coherence.window_mev' must hold two numbers");
            c.coherence.window_mev = {w[0], w[1]};
            k.optional_number("bandpass_fwhm_mev", c.coherence.bandpass_fwhm_mev);
            k.number("max_delay_ps", c.coherence.max_delay_ps);
            k.number("step_ps", c.coherence.step_ps);
        });
        r.object("interferometer", [&](Reader& k) {
            auto& f = c.interferometer;
            k.boolean("emit", f.emit);
            k.number("noise", f.noise);
            k.number("max_delay_ps", f.max_delay_ps);
            k.number("coarse_spacing_ps", f.coarse_spacing_ps);
            k.number("fine_half_range_ps", f.fine_half_range_ps);
            k.number("points_per_fringe", f.points_per_fringe);
            k.number("periods_per_window", f.periods_per_window);
        });
        r.object("protocol", [&](Reader& k) {
            k.number("exclusion_ps", c.protocol.exclusion_ps);
            k.number("amplitude", c.protocol.amplitude);
            k.boolean("lock_amplitude", c.protocol.lock_amplitude);
            k.number("short_half_range_ps", c.protocol.short_half_range_ps);
        });
        r.object("fit", [&](Reader& k) {
            k.strings("exclude", c.fit.exclude);
            k.number_map("locks", c.fit.locks);
            k.number("initial_temperature_k", c.fit.initial_temperature_k);
            k.boolean("fit_gamma_hom", c.fit.fit_gamma_hom);
        });
        r.number("synthetic_noise", c.synthetic_noise);
        r.seed("seed", c.seed);
        r.path("data", c.data);
    }
    return c;
}

void RunConfig::validate() const {
    try {
        emitter.validate();
        phonon.validate();
        cavity.validate();
    } catch (const DomainError& e) {
        throw ConfigurationError(e.what());
    }
    check(i_bg >= 0.0, "field 'cavity.i_bg' must be >= 0");
    for (double d : detunings_mev) check(std::isfinite(d), "field 'detunings_mev' must hold finite numbers");
    grid.validate();
    const double nyquist_span = kPi * kHbarMeVps / grid.time_grid().step;
    check(std::abs(nyquist_span - grid.half_span_mev) < 1e-9 * grid.half_span_mev,
          "grid: time step does not match the energy span");
    const auto& w = coherence.window_mev;
    check(w.second > w.first, "field 'coherence.window_mev' must be ascending");
    check(w.first >= -grid.half_span_mev && w.second <= grid.half_span_mev,
          "field 'coherence.window_mev' exceeds the energy grid");
    if (coherence.bandpass_fwhm_mev) check(*coherence.bandpass_fwhm_mev > 0.0, "field 'coherence.bandpass_fwhm_mev' must be > 0");
    check(coherence.step_ps > 0.0 && coherence.max_delay_ps > coherence.step_ps,
          "fields 'coherence.step_ps' and 'coherence.max_delay_ps' must be positive and ordered");
    const auto& f = interferometer;
    check(f.noise >= 0.0, "field 'interferometer.noise' must be >= 0");
    check(f.points_per_fringe >= 4.0, "field 'interferometer.points_per_fringe' must be >= 4");
    check(f.periods_per_window >= 2.0, "field 'interferometer.periods_per_window' must be >= 2");
    check(f.coarse_spacing_ps > 0.0 && f.max_delay_ps > 0.0 && f.fine_half_range_ps > 0.0,
          "interferometer delays must be positive");
    // Outermost coarse segment reaches half a window past max_delay_ps.
    const double reach = f.max_delay_ps + 0.5 * f.periods_per_window * 2.0 * kPi * kHbarMeVps / emitter.omega0_mev;
    check(reach <= coherence.max_delay_ps,
          "field 'interferometer.max_delay_ps' plus half a fringe window exceeds 'coherence.max_delay_ps'");
    check(protocol.exclusion_ps >= 0.0 && protocol.short_half_range_ps > 0.0, "protocol ranges must be positive");
    check(fit.initial_temperature_k > 0.0, "field 'fit.initial_temperature_k' must be > 0");
    check(synthetic_noise >= 0.0, "field 'synthetic_noise' must be >= 0");
    if (data) check(fs::exists(*data), "field 'data': path '" + data->string() + "' does not exist");
}

RunConfig load(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigurationError(path.string() + ": cannot open");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigurationError(path.string() + ": " + e.what());
    }
    try {
        RunConfig c = from_json(j);
        if (c.data && c.data->is_relative()) c.data = path.parent_path() / *c.data;
        c.validate();
        return c;
    } catch (const ConfigurationError& e) {
        throw ConfigurationError(path.string() + ": " + e.what());
    }
}

std::string hash(const RunConfig& c) { return io::sha256_hex(to_json(c).dump()); }

} // namespace qdcoh::config
