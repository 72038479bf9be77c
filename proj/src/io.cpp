#include "qdcoh/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "qdcoh/errors.hpp"

namespace qdcoh::io {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        out.push_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    return r.ec == std::errc() && r.ptr == end;
}

double header_double(const Table& t, const std::string& key, const std::string& source) {
    const std::string* s = t.find(key);
    double v = 0.0;
    if (!s || !parse_double(*s, v)) throw IngestionError(source + ": header field '" + key + "' missing or not a number");
    return v;
}

std::size_t require_column(const Table& t, const std::string& name, const std::string& source) {
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        if (t.columns[i] == name) return i;
    throw IngestionError(source + ": missing column '" + name + "'");
}

} // namespace

const std::string* Table::find(const std::string& key) const {
    for (const auto& [k, v] : header)
        if (k == key) return &v;
    return nullptr;
}

const std::vector<double>& Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return data[i];
    throw IngestionError("missing column '" + name + "'");
}

std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void write_table(const fs::path& path, const Table& t) {
    if (t.data.size() != t.columns.size()) throw Error("table column count mismatch for " + path.string());
    std::ostringstream os;
    for (const auto& [k, v] : t.header) os << "# " << k << ": " << v << '\n';
    os << "# columns: ";
    for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
    os << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << format_double(t.data[c][r]);
        os << '\n';
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f << os.str();
    if (!f) throw Error("write failed for " + path.string());
}

Table read_table(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestionError(path.string() + ": cannot open");
    const std::string source = path.string();
    Table t;
    std::string line;
    std::size_t lineno = 0;
    bool have_columns = false;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty()) continue;
        if (s[0] == '#') {
            const std::string body = trim(std::string_view(s).substr(1));
            const auto colon = body.find(':');
            if (colon == std::string::npos) continue;
            const std::string key = trim(std::string_view(body).substr(0, colon));
            const std::string value = trim(std::string_view(body).substr(colon + 1));
            if (key == "columns") {
                t.columns = split(value, ',');
                t.data.assign(t.columns.size(), {});
                have_columns = true;
            } else {
                t.header.emplace_back(key, value);
            }
            continue;
        }
        auto fields = split(s, ',');
        if (!have_columns) {
            // Headerless two-column input, or a bare name row.
            double probe = 0.0;
            if (!parse_double(fields[0], probe)) {
                t.columns = fields;
                t.data.assign(t.columns.size(), {});
                have_columns = true;
                continue;
            }
            t.columns.clear();
            for (std::size_t i = 0; i < fields.size(); ++i) t.columns.push_back("c" + std::to_string(i));
            t.data.assign(t.columns.size(), {});
            have_columns = true;
        }
        if (fields.size() != t.columns.size())
            throw IngestionError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                                 " columns, found " + std::to_string(fields.size()));
        for (std::size_t c = 0; c < fields.size(); ++c) {
            double v = 0.0;
            if (!parse_double(fields[c], v))
                throw IngestionError(source + ":" + std::to_string(lineno) + ": column '" + t.columns[c] +
                                     "' is not a number: '" + fields[c] + "'");
            t.data[c].push_back(v);
        }
    }
    if (t.rows() == 0) throw IngestionError(source + ": no data rows");
    return t;
}

Table spectrum_table(const spectra::Spectrum& s) {
    Table t;
    t.header = {{"kind", "spectrum"},
                {"units", "energy_mev: meV, intensity: arb."},
                {"grid_start_mev", format_double(s.energy.start)},
                {"grid_step_mev", format_double(s.energy.step)},
                {"background", format_double(s.background)}};
    if (s.labels.detuning_mev) t.header.emplace_back("detuning_mev", format_double(*s.labels.detuning_mev));
    if (s.labels.omega0_mev) t.header.emplace_back("omega0_mev", format_double(*s.labels.omega0_mev));
    if (!s.labels.tag.empty()) t.header.emplace_back("tag", s.labels.tag);
    if (!s.labels.provenance.empty()) t.header.emplace_back("provenance", s.labels.provenance);
    t.columns = {"energy_mev", "intensity"};
    t.data = {s.energy.values(), s.intensity};
    return t;
}

spectra::Spectrum spectrum_from_table(const Table& t, const std::string& source) {
    const auto ce = require_column(t, "energy_mev", source);
    const auto ci = require_column(t, "intensity", source);
    const auto& e = t.data[ce];
    spectra::Spectrum s;
    if (t.find("grid_start_mev") && t.find("grid_step_mev")) {
        s.energy = {header_double(t, "grid_start_mev", source), header_double(t, "grid_step_mev", source), e.size()};
        for (std::size_t i = 0; i < e.size(); ++i)
            if (std::abs(s.energy.at(i) - e[i]) > 1e-9 * std::max(1.0, std::abs(e[i])))
                throw IngestionError(source + ": energy row " + std::to_string(i + 1) + " disagrees with the header grid");
    } else {
        if (e.size() < 2 || !is_uniform(e, 1e-6) || !(e[1] > e[0]))
            throw IngestionError(source + ": energy column must be uniform and ascending");
        s.energy = UniformGrid::from_range(e.front(), e.back(), e.size());
    }
    s.intensity = t.data[ci];
    if (t.find("background")) s.background = header_double(t, "background", source);
    if (t.find("detuning_mev")) s.labels.detuning_mev = header_double(t, "detuning_mev", source);
    if (t.find("omega0_mev")) s.labels.omega0_mev = header_double(t, "omega0_mev", source);
    if (const auto* tag = t.find("tag")) s.labels.tag = *tag;
    if (const auto* p = t.find("provenance")) s.labels.provenance = *p;
    try {
        s.validate();
    } catch (const DomainError& err) {
        throw IngestionError(source + ": " + err.what());
    }
    return s;
}

Table visibility_table(const coherence::VisibilityTrace& v) {
    Table t;
    t.header = {{"kind", "visibility"}, {"units", "delay_ps: ps, visibility: 1, sigma: 1"}};
    t.columns = {"delay_ps", "visibility", "sigma", "flagged"};
    std::vector<double> sigma = v.sigma.empty() ? std::vector<double>(v.size(), 0.0) : v.sigma;
    std::vector<double> flag(v.size(), 0.0);
    for (std::size_t i = 0; i < v.flagged.size(); ++i) flag[i] = v.flagged[i] ? 1.0 : 0.0;
    t.data = {v.time, v.visibility, sigma, flag};
    return t;
}

coherence::VisibilityTrace visibility_from_table(const Table& t, const std::string& source) {
    coherence::VisibilityTrace v;
    v.time = t.data[require_column(t, "delay_ps", source)];
    v.visibility = t.data[require_column(t, "visibility", source)];
    for (const auto& c : t.columns) {
        if (c == "sigma") v.sigma = t.column("sigma");
        if (c == "flagged")
            for (double f : t.column("flagged")) v.flagged.push_back(f != 0.0);
    }
    try {
        v.validate();
    } catch (const DomainError& err) {
        throw IngestionError(source + ": " + err.what());
    }
    return v;
}

Table interferogram_table(const interferometry::Interferogram& g) {
    Table t;
    t.header = {{"kind", "interferogram"}, {"units", "delay_ps: ps, intensity: arb."}};
    t.columns = {"delay_ps", "intensity"};
    t.data = {g.delay, g.samples};
    return t;
}

interferometry::Interferogram interferogram_from_table(const Table& t, const std::string& source) {
    interferometry::Interferogram g;
    if (t.columns.size() == 2 && t.columns[0] == "c0") {
        g.delay = t.data[0];
        g.samples = t.data[1];
    } else {
        g.delay = t.data[require_column(t, "delay_ps", source)];
        g.samples = t.data[require_column(t, "intensity", source)];
    }
    try {
        g.validate();
    } catch (const DomainError& err) {
        throw IngestionError(source + ": " + err.what());
    }
    return g;
}

void write_spectrum(const fs::path& path, const spectra::Spectrum& s, const Header& extra) {
    Table t = spectrum_table(s);
    t.header.insert(t.header.begin(), extra.begin(), extra.end());
    write_table(path, t);
}

spectra::Spectrum read_spectrum(const fs::path& path) { return spectrum_from_table(read_table(path), path.string()); }

void write_visibility(const fs::path& path, const coherence::VisibilityTrace& v, const Header& extra) {
    Table t = visibility_table(v);
    t.header.insert(t.header.begin(), extra.begin(), extra.end());
    write_table(path, t);
}

coherence::VisibilityTrace read_visibility(const fs::path& path) {
    return visibility_from_table(read_table(path), path.string());
}

interferometry::Interferogram read_interferogram(const fs::path& path) {
    return interferogram_from_table(read_table(path), path.string());
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestionError(path.string() + ": cannot open");
    std::ostringstream os;
    os << f.rdbuf();
    return sha256_hex(os.str());
}

} // namespace qdcoh::io
