#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ab {

// Minimal CSV support for the numeric file formats this library reads and
// writes (datasets, plans, fold assignments, label exchanges, metrics).
// Fields never contain commas or quotes, so no quoting layer is needed.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name; -1 when absent.
    int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// Canonical double formatting: shortest text that round-trips exactly
// (std::to_chars). save->load->save is byte-identical under this format.
std::string format_double(double v);

// Strict parse; the full field must be consumed. Returns nullopt on failure.
std::optional<double> parse_double(const std::string& s);
std::optional<int64_t> parse_int(const std::string& s);

} // namespace ab
