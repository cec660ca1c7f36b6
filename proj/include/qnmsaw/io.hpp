#ifndef QNMSAW_IO_HPP
#define QNMSAW_IO_HPP

// CSV readers and writers for mode lists, field profiles, S11 traces and
// batch manifests. Numbers are written with 17 significant digits so that
// files round-trip exactly and identical runs give identical bytes.

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "qnm.hpp"
#include "resfit.hpp"

namespace qnmsaw {

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_modes_csv(std::ostream& out, const std::string& label, const std::vector<QnmMode>& modes) {
    out << "label,index,frequency_hz,re_omega,im_omega,q_radiation,residual\n";
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const QnmMode& m = modes[k];
        out << label << ',' << k << ',' << format_number(m.frequency_hz) << ','
            << format_number(m.omega.omega.real()) << ',' << format_number(m.omega.omega.imag()) << ','
            << format_number(m.q_radiation) << ',' << format_number(m.residual) << '\n';
    }
}

inline void write_field_csv(std::ostream& out, const std::vector<FieldSample>& samples) {
    out << "x_m,re_A,im_A,abs_A\n";
    for (const auto& s : samples)
        out << format_number(s.x) << ',' << format_number(s.a.real()) << ',' << format_number(s.a.imag()) << ','
            << format_number(std::abs(s.a)) << '\n';
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
    if (s.empty()) throw ValidationError(where + ": empty value");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) throw ValidationError(where + ": not a number '" + s + "'");
    return v;
}

// Header row plus data rows; blank lines and lines starting with '#' are
// skipped.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    [[nodiscard]] std::size_t column(const std::string& name, const std::string& source) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return k;
        throw ValidationError(source + ": missing column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path + "'");
    CsvTable t;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (t.header.empty()) {
            t.header = split_csv_line(s);
            continue;
        }
        auto cells = split_csv_line(s);
        if (cells.size() != t.header.size())
            throw ValidationError(path + ":" + std::to_string(number) + ": expected " +
                                  std::to_string(t.header.size()) + " columns");
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(number);
    }
    if (t.header.empty()) throw ValidationError(path + ": empty file");
    return t;
}

} // namespace detail

// Reads frequency_hz,re_s11,im_s11 or, with `polar`, frequency_hz,mag_db,phase_deg.
inline S11Trace read_trace_csv(const std::string& path, bool polar = false) {
    const detail::CsvTable t = detail::read_csv(path);
    const std::size_t cf = t.column("frequency_hz", path);
    const std::size_t ca = t.column(polar ? "mag_db" : "re_s11", path);
    const std::size_t cb = t.column(polar ? "phase_deg" : "im_s11", path);
    S11Trace trace;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = path + ":" + std::to_string(t.line_numbers[r]);
        const double f = detail::parse_number(t.rows[r][cf], where);
        const double a = detail::parse_number(t.rows[r][ca], where);
        const double b = detail::parse_number(t.rows[r][cb], where);
        trace.frequencies.push_back(f);
        if (polar) trace.s11.push_back(std::polar(std::pow(10.0, a / 20.0), b * std::numbers::pi / 180.0));
        else trace.s11.emplace_back(a, b);
    }
    trace.metadata.label = std::filesystem::path(path).stem().string();
    trace.validate();
    return trace;
}

inline void write_trace_csv(std::ostream& out, const S11Trace& trace) {
    out << "frequency_hz,re_s11,im_s11\n";
    for (std::size_t k = 0; k < trace.frequencies.size(); ++k)
        out << format_number(trace.frequencies[k]) << ',' << format_number(trace.s11[k].real()) << ','
            << format_number(trace.s11[k].imag()) << '\n';
}

struct ManifestEntry {
    std::string file;  // resolved against the manifest's directory
    TraceMetadata metadata;
};

// Columns: file (required), label, temperature_k, power_dbm. Empty or
// missing metadata cells are unknown.
inline std::vector<ManifestEntry> read_manifest_csv(const std::string& path) {
    const detail::CsvTable t = detail::read_csv(path);
    const std::size_t cf = t.column("file", path);
    auto optional_column = [&](const std::string& name) -> std::ptrdiff_t {
        for (std::size_t k = 0; k < t.header.size(); ++k)
            if (t.header[k] == name) return static_cast<std::ptrdiff_t>(k);
        return -1;
    };
    const auto cl = optional_column("label");
    const auto ct = optional_column("temperature_k");
    const auto cp = optional_column("power_dbm");
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::vector<ManifestEntry> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = path + ":" + std::to_string(t.line_numbers[r]);
        ManifestEntry e;
        if (row[cf].empty()) throw ValidationError(where + ": empty file name");
        const std::filesystem::path f(row[cf]);
        e.file = (f.is_absolute() ? f : base / f).string();
        e.metadata.label = cl >= 0 && !row[static_cast<std::size_t>(cl)].empty() ? row[static_cast<std::size_t>(cl)]
                                                                                 : f.stem().string();
        if (ct >= 0 && !row[static_cast<std::size_t>(ct)].empty())
            e.metadata.temperature_k = detail::parse_number(row[static_cast<std::size_t>(ct)], where);
        if (cp >= 0 && !row[static_cast<std::size_t>(cp)].empty())
            e.metadata.power_dbm = detail::parse_number(row[static_cast<std::size_t>(cp)], where);
        out.push_back(std::move(e));
    }
    if (out.empty()) throw ValidationError(path + ": no traces listed");
    return out;
}

} // namespace qnmsaw

#endif // QNMSAW_IO_HPP
