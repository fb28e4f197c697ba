#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "msfa/core.hpp"
#include "msfa/wiener.hpp"

namespace msfa {

// On-disk layout: every binary artifact is a pair of files sharing a stem.
// The path handed to the loaders/savers names the plain-text header (by
// convention "<stem>.hdr"); the raw payload lives next to it as
// "<stem>.raw". Headers are "key = value" lines; payloads are 32-bit
// little-endian floats.

inline std::string payload_path_for(const std::string& header_path) {
    auto slash = header_path.find_last_of('/');
    auto dot = header_path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return header_path + ".raw";
    return header_path.substr(0, dot) + ".raw";
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

using HeaderMap = std::map<std::string, std::string>;

inline HeaderMap parse_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open header file: " + path);
    HeaderMap kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw validation_error(path + ":" + std::to_string(lineno) + ": malformed header line (expected key = value)");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw validation_error(path + ":" + std::to_string(lineno) + ": malformed header line (empty key)");
        kv[key] = value;
    }
    return kv;
}

inline const std::string& require_key(const HeaderMap& kv, const std::string& key, const std::string& path) {
    auto it = kv.find(key);
    if (it == kv.end()) throw validation_error(path + ": missing header key '" + key + "'");
    return it->second;
}

inline long parse_long(const std::string& s, const std::string& what) {
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
        throw validation_error("header value for " + what + " is not an integer: '" + s + "'");
    return v;
}

inline double parse_number(const std::string& s, const std::string& what) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw validation_error("header value for " + what + " is not a number: '" + s + "'");
    return v;
}

inline std::vector<double> parse_number_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_number(trim(tok), what));
    if (out.empty()) throw validation_error("header value for " + what + " is empty");
    return out;
}

inline void check_encoding(const HeaderMap& kv, const std::string& path) {
    if (require_key(kv, "byte_order", path) != "little")
        throw validation_error(path + ": byte_order must be 'little'");
    if (require_key(kv, "dtype", path) != "float32")
        throw validation_error(path + ": dtype must be 'float32'");
}

inline std::vector<float> read_payload(const std::string& header_path, size_t expected_count) {
    std::string path = payload_path_for(header_path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open payload file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() != expected_count * 4)
        throw validation_error(path + ": payload holds " + std::to_string(bytes.size() / 4) +
                               " samples, header declares " + std::to_string(expected_count));
    std::vector<float> out(expected_count);
    for (size_t i = 0; i < expected_count; ++i) {
        uint32_t u = static_cast<uint32_t>(bytes[4 * i]) | static_cast<uint32_t>(bytes[4 * i + 1]) << 8 |
                     static_cast<uint32_t>(bytes[4 * i + 2]) << 16 | static_cast<uint32_t>(bytes[4 * i + 3]) << 24;
        out[i] = std::bit_cast<float>(u);
    }
    return out;
}

inline void write_payload(const std::string& header_path, const std::vector<float>& values) {
    std::string path = payload_path_for(header_path);
    std::vector<unsigned char> bytes;
    bytes.reserve(values.size() * 4);
    for (float f : values) {
        uint32_t u = std::bit_cast<uint32_t>(f);
        bytes.push_back(static_cast<unsigned char>(u & 0xff));
        bytes.push_back(static_cast<unsigned char>(u >> 8 & 0xff));
        bytes.push_back(static_cast<unsigned char>(u >> 16 & 0xff));
        bytes.push_back(static_cast<unsigned char>(u >> 24 & 0xff));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open payload file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("failed writing payload file: " + path);
}

inline void write_header(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open header file for writing: " + path);
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
    if (!out) throw io_error("failed writing header file: " + path);
}

inline std::string join_list(const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += format_double(v[i]);
    }
    return s;
}

} // namespace detail

// --- Spectral cubes -------------------------------------------------------

inline SpectralCube load_cube(const std::string& path) {
    auto kv = detail::parse_header(path);
    detail::check_encoding(kv, path);
    SpectralCube c;
    c.height = static_cast<int>(detail::parse_long(detail::require_key(kv, "height", path), "height"));
    c.width = static_cast<int>(detail::parse_long(detail::require_key(kv, "width", path), "width"));
    c.bands = static_cast<int>(detail::parse_long(detail::require_key(kv, "bands", path), "bands"));
    c.wavelengths = detail::parse_number_list(detail::require_key(kv, "wavelengths", path), "wavelengths");
    c.scale = detail::parse_number(detail::require_key(kv, "scale", path), "scale");
    if (c.height < 1 || c.width < 1 || c.bands < 1)
        throw validation_error(path + ": dimensions must be positive");

    auto raw = detail::read_payload(path, c.sample_count());
    c.data.resize(c.sample_count());
    const size_t plane = static_cast<size_t>(c.height) * c.width;
    for (int b = 0; b < c.bands; ++b)
        for (size_t p = 0; p < plane; ++p)
            c.data[p * c.bands + b] = static_cast<double>(raw[static_cast<size_t>(b) * plane + p]) / c.scale;

    validate_cube_shape(c);
    validate_cube_range(c);
    return c;
}

// Writes <stem>.hdr and <stem>.raw. Payload samples are value * scale in
// float32, so a cube that came from a file goes back bit-identically.
inline void save_cube(const SpectralCube& c, const std::string& path) {
    validate_cube_shape(c);
    validate_cube_range(c);
    detail::write_header(path, {{"height", std::to_string(c.height)},
                                {"width", std::to_string(c.width)},
                                {"bands", std::to_string(c.bands)},
                                {"wavelengths", detail::join_list(c.wavelengths)},
                                {"scale", format_double(c.scale)},
                                {"byte_order", "little"},
                                {"dtype", "float32"}});
    const size_t plane = static_cast<size_t>(c.height) * c.width;
    std::vector<float> raw(c.sample_count());
    for (int b = 0; b < c.bands; ++b)
        for (size_t p = 0; p < plane; ++p)
            raw[static_cast<size_t>(b) * plane + p] = static_cast<float>(c.data[p * c.bands + b] * c.scale);
    detail::write_payload(path, raw);
}

// --- Filter-array blocks ---------------------------------------------------

inline MsfaBlock load_msfa(const std::string& path) {
    auto kv = detail::parse_header(path);
    MsfaBlock m;
    m.geometry.rows = static_cast<int>(detail::parse_long(detail::require_key(kv, "rows", path), "rows"));
    m.geometry.cols = static_cast<int>(detail::parse_long(detail::require_key(kv, "cols", path), "cols"));
    m.bands = static_cast<int>(detail::parse_long(detail::require_key(kv, "bands", path), "bands"));
    if (m.geometry.rows < 1 || m.geometry.cols < 1 || m.bands < 1)
        throw validation_error(path + ": rows/cols/bands must be positive");
    auto raw = detail::read_payload(path, static_cast<size_t>(m.geometry.pixels()) * m.bands);
    m.sensitivities = Matrix(m.geometry.pixels(), m.bands);
    for (size_t i = 0; i < raw.size(); ++i) m.sensitivities.data()[i] = raw[i];
    validate_msfa(m);
    return m;
}

inline void save_msfa(const MsfaBlock& m, const std::string& path) {
    validate_msfa(m);
    detail::write_header(path, {{"rows", std::to_string(m.geometry.rows)},
                                {"cols", std::to_string(m.geometry.cols)},
                                {"bands", std::to_string(m.bands)},
                                {"byte_order", "little"},
                                {"dtype", "float32"}});
    std::vector<float> raw(m.sensitivities.data().size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(m.sensitivities.data()[i]);
    detail::write_payload(path, raw);
}

// --- Wiener reconstruction matrices ----------------------------------------

inline WienerMatrix load_wiener(const std::string& path) {
    auto kv = detail::parse_header(path);
    WienerMatrix w;
    w.geometry.rows = static_cast<int>(detail::parse_long(detail::require_key(kv, "rows", path), "rows"));
    w.geometry.cols = static_cast<int>(detail::parse_long(detail::require_key(kv, "cols", path), "cols"));
    w.bands = static_cast<int>(detail::parse_long(detail::require_key(kv, "bands", path), "bands"));
    w.ridge = detail::parse_number(detail::require_key(kv, "ridge", path), "ridge");
    if (w.geometry.rows < 1 || w.geometry.cols < 1 || w.bands < 1)
        throw validation_error(path + ": rows/cols/bands must be positive");
    const int m = w.geometry.pixels();
    auto raw = detail::read_payload(path, static_cast<size_t>(w.bands) * m * m);
    w.matrix = Matrix(w.bands * m, m);
    for (size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i])) throw validation_error(path + ": non-finite matrix entry");
        w.matrix.data()[i] = raw[i];
    }
    return w;
}

inline void save_wiener(const WienerMatrix& w, const std::string& path) {
    detail::write_header(path, {{"rows", std::to_string(w.geometry.rows)},
                                {"cols", std::to_string(w.geometry.cols)},
                                {"bands", std::to_string(w.bands)},
                                {"ridge", format_double(w.ridge)},
                                {"byte_order", "little"},
                                {"dtype", "float32"}});
    std::vector<float> raw(w.matrix.data().size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(w.matrix.data()[i]);
    detail::write_payload(path, raw);
}

// --- Mosaicked images -------------------------------------------------------

// A mosaic is stored in the cube format with bands = 1. Normalized payload
// values are measurement * source_scale, with scale = source_scale * L so
// that payload / scale = v / L stays in [0, 1]. Provenance keys carry what
// demosaicking needs to rebuild a faithful cube; plain cube readers ignore
// them.
inline void save_mosaic(const MosaickedImage& img, const std::string& path) {
    if (img.source_bands < 1) throw validation_error("save_mosaic: source band count missing");
    double file_scale = img.source_scale * img.source_bands;
    detail::write_header(path, {{"height", std::to_string(img.height)},
                                {"width", std::to_string(img.width)},
                                {"bands", "1"},
                                {"wavelengths", "0"},
                                {"scale", format_double(file_scale)},
                                {"byte_order", "little"},
                                {"dtype", "float32"},
                                {"msfa_rows", std::to_string(img.geometry.rows)},
                                {"msfa_cols", std::to_string(img.geometry.cols)},
                                {"source_bands", std::to_string(img.source_bands)},
                                {"source_scale", format_double(img.source_scale)},
                                {"source_wavelengths", detail::join_list(img.source_wavelengths)}});
    std::vector<float> raw(img.data.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        raw[i] = static_cast<float>(img.data[i] * img.source_scale);
        double normalized = raw[i] / file_scale;
        if (!(normalized >= 0.0 && normalized <= 1.0))
            throw validation_error("save_mosaic: measurement " + format_double(img.data[i]) +
                                   " cannot be represented in [0, scale]");
    }
    detail::write_payload(path, raw);
}

inline MosaickedImage load_mosaic(const std::string& path) {
    auto kv = detail::parse_header(path);
    detail::check_encoding(kv, path);
    MosaickedImage img;
    img.height = static_cast<int>(detail::parse_long(detail::require_key(kv, "height", path), "height"));
    img.width = static_cast<int>(detail::parse_long(detail::require_key(kv, "width", path), "width"));
    long bands = detail::parse_long(detail::require_key(kv, "bands", path), "bands");
    if (bands != 1) throw validation_error(path + ": a mosaicked image must have bands = 1, got " + std::to_string(bands));
    if (img.height < 1 || img.width < 1) throw validation_error(path + ": dimensions must be positive");
    double file_scale = detail::parse_number(detail::require_key(kv, "scale", path), "scale");
    img.geometry.rows = static_cast<int>(detail::parse_long(detail::require_key(kv, "msfa_rows", path), "msfa_rows"));
    img.geometry.cols = static_cast<int>(detail::parse_long(detail::require_key(kv, "msfa_cols", path), "msfa_cols"));
    img.source_bands = static_cast<int>(detail::parse_long(detail::require_key(kv, "source_bands", path), "source_bands"));
    img.source_scale = detail::parse_number(detail::require_key(kv, "source_scale", path), "source_scale");
    img.source_wavelengths =
        detail::parse_number_list(detail::require_key(kv, "source_wavelengths", path), "source_wavelengths");
    if (img.source_bands < 1 || !(img.source_scale > 0.0))
        throw validation_error(path + ": source_bands/source_scale invalid");

    auto raw = detail::read_payload(path, static_cast<size_t>(img.height) * img.width);
    img.data.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        double normalized = static_cast<double>(raw[i]) / file_scale;
        if (!(normalized >= 0.0 && normalized <= 1.0))
            throw validation_error(path + ": sample outside [0, 1] after applying scale");
        img.data[i] = static_cast<double>(raw[i]) / img.source_scale;
    }
    return img;
}

// --- Spectral sample tables (CSV) -------------------------------------------

// Reads a CSV of spectra, one sample per row, one column per band. A single
// leading header row is skipped if it is not numeric.
inline Matrix load_spectra_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open spectra table: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(t);
        std::string tok;
        bool numeric = true;
        while (std::getline(ss, tok, ',')) {
            tok = detail::trim(tok);
            char* end = nullptr;
            double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (rows.empty() && lineno == 1) continue; // header row
            throw validation_error(path + ":" + std::to_string(lineno) + ": non-numeric entry");
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw validation_error(path + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw validation_error(path + ": no spectra found");
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j) m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    return m;
}

} // namespace msfa
