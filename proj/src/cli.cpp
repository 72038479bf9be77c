#include "qdcoh/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "qdcoh/coherence.hpp"
#include "qdcoh/config.hpp"
#include "qdcoh/errors.hpp"
#include "qdcoh/interferometry.hpp"
#include "qdcoh/io.hpp"
#include "qdcoh/protocols.hpp"

namespace qdcoh::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : (v < 0 ? "-inf" : "nan")); }

json fit_json(const fitting::FitResult& r) {
    json j;
    j["parameters"] = json::array();
    for (const auto& p : r.parameters) {
        j["parameters"].push_back({{"name", p.name},
                                   {"scope", p.scope},
                                   {"initial", number(p.initial)},
                                   {"lower", number(p.lower)},
                                   {"upper", number(p.upper)},
                                   {"locked", p.locked},
                                   {"provenance", p.provenance},
                                   {"value", number(p.value)},
                                   {"sigma", number(p.sigma)}});
    }
    j["residual_norm"] = number(r.residual_norm);
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["termination"] = r.termination;
    j["warnings"] = r.warnings;
    j["per_dataset"] = json::array();
    for (const auto& d : r.per_dataset)
        j["per_dataset"].push_back({{"tag", d.tag}, {"count", d.count}, {"norm", number(d.norm)}, {"rms", number(d.rms)}});
    json trace = json::array();
    for (double v : r.residual_trace) trace.push_back(number(v));
    j["residual_trace"] = trace;
    return j;
}

// Collects outputs and writes them with the config hash in every header.
class Run {
public:
    Run(std::string command, config::RunConfig cfg, fs::path out)
        : command_(std::move(command)), cfg_(std::move(cfg)), out_(std::move(out)), hash_(config::hash(cfg_)) {
        fs::create_directories(out_);
    }

    const config::RunConfig& cfg() const { return cfg_; }
    const std::string& hash() const { return hash_; }

    io::Header header(const std::string& what) const {
        return {{"config_hash", hash_}, {"command", command_}, {"content", what}};
    }

    void table(const std::string& name, io::Table t, const std::string& what) {
        auto h = header(what);
        t.header.insert(t.header.begin(), h.begin(), h.end());
        io::write_table(out_ / name, t);
        files_.push_back(name);
    }

    void document(const std::string& name, json j) {
        j["config_hash"] = hash_;
        j["command"] = command_;
        write_text(name, j.dump(2) + "\n");
        files_.push_back(name);
    }

    json& checks() { return checks_; }

    void finish() {
        json m;
        m["run_id"] = io::sha256_hex(command_ + "\n" + hash_).substr(0, 16);
        m["command"] = command_;
        m["config_hash"] = hash_;
        m["seed"] = cfg_.seed;
        m["config"] = config::to_json(cfg_);
        m["outputs"] = json::array();
        for (const auto& f : files_) m["outputs"].push_back({{"path", f}, {"sha256", io::sha256_file(out_ / f)}});
        m["checks"] = checks_;
        write_text("manifest.json", m.dump(2) + "\n");
    }

private:
    void write_text(const std::string& name, const std::string& text) {
        std::ofstream f(out_ / name, std::ios::binary);
        if (!f) throw Error("cannot write " + (out_ / name).string());
        f << text;
    }

    std::string command_;
    config::RunConfig cfg_;
    fs::path out_;
    std::string hash_;
    std::vector<std::string> files_;
    json checks_ = json::object();
};

coherence::CoherenceOptions coherence_options(const config::RunConfig& c, double omega0) {
    coherence::CoherenceOptions o;
    o.window_mev = std::make_pair(omega0 + c.coherence.window_mev.first, omega0 + c.coherence.window_mev.second);
    if (c.coherence.bandpass_fwhm_mev) o.bandpass = coherence::Bandpass{omega0, *c.coherence.bandpass_fwhm_mev};
    return o;
}

UniformGrid delay_grid(const config::RunConfig& c) {
    const auto n = static_cast<std::size_t>(std::floor(c.coherence.max_delay_ps / c.coherence.step_ps + 1e-9)) + 1;
    return {0.0, c.coherence.step_ps, n};
}

std::vector<spectra::Spectrum> simulate(const config::RunConfig& c) {
    return spectra::sweep_detuning(c.emitter, c.phonon, c.cavity, c.i_bg, c.detunings_mev, c.grid);
}

std::vector<fs::path> inputs(const config::RunConfig& c, const std::string& kind) {
    if (!c.data) throw ProtocolError("no input data: pass --data or set 'data' in the config");
    std::vector<fs::path> files;
    if (fs::is_directory(*c.data)) {
        for (const auto& e : fs::directory_iterator(*c.data)) {
            if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
            std::ifstream f(e.path());
            std::string line;
            bool match = false;
            while (std::getline(f, line) && !line.empty() && line[0] == '#')
                if (line == "# kind: " + kind) match = true;
            if (match) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(*c.data);
    }
    if (files.empty()) throw ProtocolError("no '" + kind + "' files in " + c.data->string());
    return files;
}

std::string tag_of(const io::Table& t, const fs::path& p) {
    if (const auto* tag = t.find("tag")) return *tag;
    return p.stem().string();
}

// ---- commands ------------------------------------------------------------------

void simulate_spectrum(Run& run) {
    const auto& c = run.cfg();
    std::mt19937_64 rng(c.seed);
    auto bare = spectra::qd_emission(c.emitter, c.phonon, c.grid);
    run.table("qd_emission.csv", io::spectrum_table(bare), "bare emitter spectrum");
    json peaks = json::object();
    for (auto s : simulate(c)) {
        if (c.synthetic_noise > 0.0) fitting::add_count_noise(s, c.synthetic_noise, rng);
        s.labels.provenance = c.synthetic_noise > 0.0 ? "simulated with count noise" : "simulated";
        peaks[s.labels.tag] = number(spectra::sample(s, c.emitter.omega0_mev));
        run.table("spectrum_" + s.labels.tag + ".csv", io::spectrum_table(s), "cavity-filtered spectrum");
    }
    run.checks()["zpl_peak"] = peaks;
}

void simulate_coherence(Run& run) {
    const auto& c = run.cfg();
    std::mt19937_64 rng(c.seed);
    const auto delays = delay_grid(c);
    io::Table summary;
    summary.columns = {"detuning_mev", "beat_period_ps", "visibility_1ps"};
    summary.data.assign(3, {});
    json periods = json::object();
    for (const auto& s : simulate(c)) {
        const auto trace = coherence::temporal_coherence(s, c.emitter.omega0_mev, delays,
                                                         coherence_options(c, c.emitter.omega0_mev));
        auto v = coherence::visibility_of(trace);
        const auto period = coherence::dominant_beat_period(trace);
        io::Table t = io::visibility_table(v);
        t.header.emplace_back("tag", s.labels.tag);
        t.header.emplace_back("detuning_mev", io::format_double(*s.labels.detuning_mev));
        if (period) t.header.emplace_back("beat_period_ps", io::format_double(*period));
        run.table("coherence_" + s.labels.tag + ".csv", t, "theoretical visibility");
        const double v1 = v.visibility[std::min(v.size() - 1, static_cast<std::size_t>(std::lround(1.0 / c.coherence.step_ps)))];
        summary.data[0].push_back(*s.labels.detuning_mev);
        summary.data[1].push_back(period.value_or(std::nan("")));
        summary.data[2].push_back(v1);
        periods[s.labels.tag] = period ? number(*period) : json();

        if (c.interferometer.emit) {
            const auto& f = c.interferometer;
            auto coarse = interferometry::Sampling::coarse(c.emitter.omega0_mev, f.max_delay_ps, f.coarse_spacing_ps,
                                                           f.periods_per_window, f.points_per_fringe);
            // Coarse segments inside the fine scan are dropped; the fine scan covers them.
            std::erase_if(coarse.segments, [&](const auto& seg) { return std::abs(seg.centre) <= f.fine_half_range_ps; });
            auto fine = interferometry::Sampling::fine(c.emitter.omega0_mev, f.fine_half_range_ps, f.points_per_fringe);
            coarse.segments.insert(coarse.segments.end(), fine.segments.begin(), fine.segments.end());
            auto g = interferometry::synthesize_interferogram(trace, 1.0, coarse);
            if (f.noise > 0.0) fitting::add_gaussian_noise(g.samples, f.noise, rng, 0.0);
            io::Table it = io::interferogram_table(g);
            it.header.emplace_back("tag", s.labels.tag);
            it.header.emplace_back("detuning_mev", io::format_double(*s.labels.detuning_mev));
            it.header.emplace_back("carrier_mev", io::format_double(c.emitter.omega0_mev));
            run.table("interferogram_" + s.labels.tag + ".csv", it, "synthetic interferogram");
        }
    }
    run.table("coherence_summary.csv", summary, "beat period per detuning");
    run.checks()["beat_period_ps"] = periods;
}

void sweep_detuning(Run& run) {
    const auto& c = run.cfg();
    const auto delays = delay_grid(c);
    io::Table split;
    split.columns = {"detuning_mev", "zpl_area", "psb_area", "ratio", "reliable", "psb_visibility_area_ps"};
    split.data.assign(split.columns.size(), {});
    json ratios = json::object(), areas = json::object();
    for (const auto& s : simulate(c)) {
        run.table("spectrum_" + s.labels.tag + ".csv", io::spectrum_table(s), "cavity-filtered spectrum");
        spectra::SplitOptions so;
        so.zpl_hint_mev = c.emitter.omega0_mev;
        const auto sp = spectra::split_zpl_psb(s, so);

        // Theory trace mirrored to negative delay for the two-sided protocol.
        const auto trace = coherence::temporal_coherence(s, c.emitter.omega0_mev, delays,
                                                         coherence_options(c, c.emitter.omega0_mev));
        const auto half = coherence::visibility_of(trace);
        coherence::VisibilityTrace v;
        for (std::size_t i = half.size(); i-- > 1;) {
            v.time.push_back(-half.time[i]);
            v.visibility.push_back(half.visibility[i]);
        }
        v.time.insert(v.time.end(), half.time.begin(), half.time.end());
        v.visibility.insert(v.visibility.end(), half.visibility.begin(), half.visibility.end());
        fitting::LongFitOptions lo;
        lo.exclusion_ps = c.protocol.exclusion_ps;
        lo.lock_amplitude = false;
        lo.amplitude = half.visibility.front();
        const auto slow = fitting::fit_visibility_long(v, lo);
        const auto area = fitting::psb_visibility_area(v, slow, c.protocol.short_half_range_ps);

        split.data[0].push_back(*s.labels.detuning_mev);
        split.data[1].push_back(sp.zpl_area);
        split.data[2].push_back(sp.psb_area);
        split.data[3].push_back(sp.ratio.value_or(std::nan("")));
        split.data[4].push_back(sp.reliable ? 1.0 : 0.0);
        split.data[5].push_back(area.area);
        ratios[s.labels.tag] = sp.ratio ? number(*sp.ratio) : json();
        areas[s.labels.tag] = number(area.area);
    }
    run.table("sweep_summary.csv", split, "ZPL/PSB split and sideband visibility area per detuning");
    run.checks()["zpl_psb_ratio"] = ratios;
    run.checks()["psb_visibility_area_ps"] = areas;
}

void fit_spectra(Run& run) {
    const auto& c = run.cfg();
    std::vector<spectra::Spectrum> series;
    for (const auto& p : inputs(c, "spectrum")) {
        auto t = io::read_table(p);
        auto s = io::spectrum_from_table(t, p.string());
        if (s.labels.tag.empty()) s.labels.tag = p.stem().string();
        series.push_back(std::move(s));
    }
    fitting::GlobalFitInit init;
    init.phonons = c.phonon;
    init.phonons.temperature = c.fit.initial_temperature_k;
    init.emitter = c.emitter;
    init.locks = c.fit.locks;
    init.exclude.insert(c.fit.exclude.begin(), c.fit.exclude.end());
    init.fit_gamma_hom = c.fit.fit_gamma_hom;
    init.grid = c.grid;
    for (const auto& s : series) {
        fitting::DatasetInit d;
        d.gamma_cav_mev = c.cavity.gamma_cav_mev;
        init.datasets[s.labels.tag] = d;
    }
    try {
        const auto rep = fitting::fit_spectra_global(series, init);
        json j = fit_json(rep.fit);
        j["excluded"] = rep.excluded;
        j["model_evaluations"] = rep.model_evaluations;
        run.document("fit_spectra.json", j);
        for (const auto& o : rep.overlays) {
            io::Table t;
            t.header = {{"tag", o.tag}, {"units", "energy_mev: meV, intensities: arb."}};
            t.columns = {"energy_mev", "data", "model", "residual"};
            t.data = {o.energy.values(), o.data, o.model, o.residual};
            run.table("overlay_" + o.tag + ".csv", t, "data, model and residual");
        }
        run.checks()["temperature_k"] = number(rep.fit.value("temperature"));
        run.checks()["converged"] = rep.fit.converged;
        run.checks()["excluded"] = rep.excluded;
    } catch (const FitError& e) {
        std::string tags;
        for (const auto& s : series) tags += (tags.empty() ? "" : ",") + s.labels.tag;
        throw FitError(std::string(e.what()) + " [datasets: " + tags + "]", e.trace());
    }
}

void fit_visibility(Run& run) {
    const auto& c = run.cfg();
    io::Table areas;
    areas.columns = {"detuning_mev", "tau1_ps", "tau1_sigma_ps", "tau2_ps", "a2", "psb_area_ps", "clipped_mass_ps"};
    areas.data.assign(areas.columns.size(), {});
    json summary = json::object();
    for (const auto& p : inputs(c, "visibility")) {
        const auto t = io::read_table(p);
        const auto v = io::visibility_from_table(t, p.string());
        const std::string tag = tag_of(t, p);
        fitting::LongFitOptions lo;
        lo.exclusion_ps = c.protocol.exclusion_ps;
        lo.amplitude = c.protocol.amplitude;
        lo.lock_amplitude = c.protocol.lock_amplitude;
        for (const auto& [name, value] : c.fit.locks) {
            if (name == "amplitude") {
                lo.amplitude = value;
                lo.lock_amplitude = true;
                lo.amplitude_provenance = "locked by configuration";
            }
        }
        fitting::FitResult stage1;
        try {
            stage1 = fitting::fit_visibility_long(v, lo);
        } catch (const ProtocolError& e) {
            throw ProtocolError(p.string() + ": stage 1: " + e.what());
        }
        fitting::ShortFitOptions so;
        so.tau1 = stage1.value("tau1");
        so.tau1_provenance = "stage 1 fit of " + p.filename().string();
        so.half_range_ps = c.protocol.short_half_range_ps;
        if (c.fit.locks.count("tau1")) {
            so.tau1 = c.fit.locks.at("tau1");
            so.tau1_provenance = "locked by configuration";
        }
        fitting::FitResult stage2;
        try {
            stage2 = fitting::fit_visibility_short(v, so);
        } catch (const ProtocolError& e) {
            throw ProtocolError(p.string() + ": stage 2: " + e.what());
        }
        const auto area = fitting::psb_visibility_area(v, stage1, c.protocol.short_half_range_ps);

        json j;
        j["tag"] = tag;
        j["stage1"] = fit_json(stage1);
        j["stage2"] = fit_json(stage2);
        j["psb_area_ps"] = number(area.area);
        j["clipped_mass_ps"] = number(area.clipped_mass);
        j["warnings"] = area.warnings;
        run.document("fit_" + tag + ".json", j);

        io::Table frag;
        frag.header = {{"tag", tag}, {"units", "delay_ps: ps, residual: 1"}};
        frag.columns = {"delay_ps", "residual"};
        frag.data = {area.time, area.residual};
        run.table("fragment_" + tag + ".csv", frag, "visibility minus slow trace");

        double detuning = std::nan("");
        if (const auto* d = t.find("detuning_mev")) detuning = std::stod(*d);
        areas.data[0].push_back(detuning);
        areas.data[1].push_back(stage1.value("tau1"));
        areas.data[2].push_back(stage1.sigma("tau1"));
        areas.data[3].push_back(stage2.value("tau2"));
        areas.data[4].push_back(stage2.value("a2"));
        areas.data[5].push_back(area.area);
        areas.data[6].push_back(area.clipped_mass);
        summary[tag] = {{"tau1_ps", number(stage1.value("tau1"))}, {"psb_area_ps", number(area.area)}};
    }
    run.table("psb_area.csv", areas, "two-stage visibility fit per dataset");
    run.checks()["visibility_fits"] = summary;
}

void analyze_interferogram(Run& run) {
    const auto& c = run.cfg();
    for (const auto& p : inputs(c, "interferogram")) {
        const auto t = io::read_table(p);
        const auto g = io::interferogram_from_table(t, p.string());
        interferometry::ExtractOptions o;
        o.carrier_mev = c.emitter.omega0_mev;
        if (const auto* carrier = t.find("carrier_mev")) o.carrier_mev = std::stod(*carrier);
        o.window_width_ps = c.interferometer.periods_per_window * interferometry::fringe_period(o.carrier_mev);
        interferometry::ExtractionReport rep;
        const auto v = interferometry::extract_visibility(g, o, &rep);
        const std::string tag = tag_of(t, p);
        io::Table vt = io::visibility_table(v);
        vt.header.emplace_back("tag", tag);
        if (const auto* d = t.find("detuning_mev")) vt.header.emplace_back("detuning_mev", *d);
        vt.header.emplace_back("dropped_windows", std::to_string(rep.dropped.size()));
        run.table("visibility_" + tag + ".csv", vt, "extracted visibility");
        run.checks()[tag] = {{"windows", v.size()}, {"dropped", rep.dropped.size()}};
    }
}

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size() && item.find_first_not_of(" ", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigurationError(flag + ": '" + item + "' is not a number");
        }
    }
    return out;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cavity-filtered phonon sideband spectra, coherence and interferogram analysis"};
    app.require_subcommand(1);
    std::string config_path, out_dir = "out", detunings, window, data;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> excludes, locks;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "random seed for synthetic noise");
        sub->add_option("--detunings", detunings, "comma-separated cavity detunings, meV");
        sub->add_option("--exclude-dataset", excludes, "dataset tag left out of the fit")->take_all();
        sub->add_option("--window", window, "coherence window LOW,HIGH in meV relative to the ZPL");
        sub->add_option("--lock", locks, "NAME=VALUE parameter lock")->take_all();
        sub->add_option("--data", data, "input file or directory");
    };
    using Command = void (*)(Run&);
    const std::vector<std::tuple<std::string, std::string, Command>> commands = {
        {"simulate-spectrum", "write cavity-filtered spectra per detuning", simulate_spectrum},
        {"simulate-coherence", "write theoretical visibility traces and beat periods", simulate_coherence},
        {"sweep-detuning", "ZPL/PSB ratio and sideband visibility area across detunings", sweep_detuning},
        {"fit-spectra", "global fit of spectra with shared phonon parameters", fit_spectra},
        {"fit-visibility", "two-stage visibility fit and sideband area", fit_visibility},
        {"analyze-interferogram", "extract visibility from raw fringes", analyze_interferogram},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help, fn] : commands) {
        subs.push_back(app.add_subcommand(name, help));
        common(subs.back());
    }

    std::vector<std::string> argv_store{"qdcoh"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, r;
        const int code = app.exit(e, o, r);
        out << o.str();
        err << r.str();
        return code;
    }

    try {
        config::RunConfig cfg = config_path.empty() ? config::defaults() : config::load(config_path);
        if (seed) cfg.seed = *seed;
        if (!detunings.empty()) cfg.detunings_mev = parse_list(detunings, "--detunings");
        if (!window.empty()) {
            const auto w = parse_list(window, "--window");
            if (w.size() != 2) throw ConfigurationError("--window expects LOW,HIGH");
            cfg.coherence.window_mev = {w[0], w[1]};
        }
        for (const auto& e : excludes) cfg.fit.exclude.push_back(e);
        for (const auto& l : locks) {
            const auto eq = l.find('=');
            if (eq == std::string::npos) throw ConfigurationError("--lock expects NAME=VALUE, got '" + l + "'");
            cfg.fit.locks[l.substr(0, eq)] = parse_list(l.substr(eq + 1), "--lock").at(0);
        }
        if (!data.empty()) cfg.data = fs::path(data);
        cfg.validate();

        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            Run r(std::get<0>(commands[i]), cfg, out_dir);
            std::get<2>(commands[i])(r);
            r.finish();
            out << std::get<0>(commands[i]) << ": wrote " << (fs::path(out_dir) / "manifest.json").string()
                << " (config " << r.hash().substr(0, 12) << ")\n";
        }
        return 0;
    } catch (const ConfigurationError& e) {
        err << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const IngestionError& e) {
        err << "ingestion error: " << e.what() << '\n';
        return 3;
    } catch (const ProtocolError& e) {
        err << "protocol error: " << e.what() << '\n';
        return 4;
    } catch (const FitError& e) {
        err << "fit error: " << e.what() << '\n';
        return 5;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace qdcoh::cli
