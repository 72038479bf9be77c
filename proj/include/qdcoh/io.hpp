#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qdcoh/coherence.hpp"
#include "qdcoh/interferometry.hpp"
#include "qdcoh/spectra.hpp"

namespace qdcoh::io {

using Header = std::vector<std::pair<std::string, std::string>>;

/// Comma-delimited numeric table with "# key: value" header lines. The
/// column names sit in a "# columns: a,b,c" line.
struct Table {
    Header header;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data;  // data[column][row]

    const std::string* find(const std::string& key) const;
    std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
    const std::vector<double>& column(const std::string& name) const;
};

/// Shortest representation that reads back bit-identical.
std::string format_double(double v);

void write_table(const std::filesystem::path& path, const Table& t);
Table read_table(const std::filesystem::path& path);

Table spectrum_table(const spectra::Spectrum& s);
spectra::Spectrum spectrum_from_table(const Table& t, const std::string& source);

Table visibility_table(const coherence::VisibilityTrace& v);
coherence::VisibilityTrace visibility_from_table(const Table& t, const std::string& source);

Table interferogram_table(const interferometry::Interferogram& g);
interferometry::Interferogram interferogram_from_table(const Table& t, const std::string& source);

void write_spectrum(const std::filesystem::path& path, const spectra::Spectrum& s, const Header& extra = {});
spectra::Spectrum read_spectrum(const std::filesystem::path& path);
void write_visibility(const std::filesystem::path& path, const coherence::VisibilityTrace& v, const Header& extra = {});
coherence::VisibilityTrace read_visibility(const std::filesystem::path& path);
interferometry::Interferogram read_interferogram(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

} // namespace qdcoh::io
