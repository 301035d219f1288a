#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeloc/kernel.hpp"
#include "treeloc/rde.hpp"

namespace treeloc {

inline constexpr const char* artifact_version = "1.0.0";

// CSV numeric format: 6 significant digits, '.' separator, no locale
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline void write_file_header(std::ostream& out, const std::string& command,
                              const std::map<std::string, std::string>& config,
                              std::uint64_t seed) {
    out << "# treeloc " << artifact_version << "\n";
    out << "# command = " << command << "\n";
    for (const auto& [k, v] : config) out << "# " << k << " = " << v << "\n";
    out << "# master_seed = " << seed << "\n";
}

// pool serialization: one header line, then (index, value) rows
inline void write_pool_csv(std::ostream& out, const ResolventPool& pool) {
    out << "index,value\n";
    for (std::size_t i = 0; i < pool.samples.size(); ++i)
        out << i << "," << fmt(pool.samples[i]) << "\n";
}

// effective-density serialization: tail parameters ride along as comments
inline void write_effective_csv(std::ostream& out, const EffectiveDensity& eff) {
    out << "# tail_amplitude=" << fmt(eff.tail_amp) << " tail_exponent=" << fmt(eff.tail_exp) << "\n";
    out << "z,density\n";
    for (std::size_t i = 0; i < eff.grid.size(); ++i)
        out << fmt(eff.grid[i]) << "," << fmt(eff.values[i]) << "\n";
}

// two-column profile suitable for external plotting
inline void write_profile(std::ostream& out, const std::vector<std::pair<double, double>>& profile) {
    for (const auto& [x, p] : profile) out << fmt(x) << " " << fmt(p) << "\n";
}

// row-major 64-bit float dump preceded by two 64-bit integers (rows, cols)
inline void write_kernel_binary(const std::string& path, const DiscreteKernel& kernel) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open kernel dump file: " + path);
    const std::int64_t n = static_cast<std::int64_t>(kernel.size());
    const std::int64_t dims[2] = {n, n};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    std::vector<double> row(kernel.size());
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        for (std::size_t j = 0; j < kernel.size(); ++j) row[j] = kernel.entry(i, j);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
}

// JSON object for the diagnostics column, quoted as a single CSV field
// (embedded '"' doubled per RFC 4180)
inline std::string diagnostics_json_field(const std::map<std::string, std::string>& diag) {
    std::string json = "{";
    bool first = true;
    for (const auto& [k, v] : diag) {
        if (!first) json += ",";
        first = false;
        json += "\"" + k + "\":\"" + v + "\"";
    }
    json += "}";
    std::string field = "\"";
    for (char c : json) {
        if (c == '"') field += "\"\"";
        else field += c;
    }
    field += "\"";
    return field;
}

} // namespace treeloc
