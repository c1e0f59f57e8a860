#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lmlab::csv {

// Shortest round-trippable decimal form ("%.17g"), stable across runs.
std::string format_double(double v);

std::string join(const std::vector<std::string>& fields);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column; throws InputError when absent.
    std::size_t column(const std::string& name) const;
};

// Minimal reader for the comma-separated artifacts this project writes
// (no quoting, no embedded commas).
Table read(const std::filesystem::path& path);

void write(const std::filesystem::path& path, const Table& table);

}  // namespace lmlab::csv
