#include "lmlab/common/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lmlab/common/error.hpp"

namespace lmlab::csv {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    return out;
}

std::size_t Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw InputError("CSV column '" + name + "' not found");
}

static std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open CSV " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw InputError("empty CSV " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split_line(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != t.header.size()) {
            throw InputError("CSV row width mismatch in " + path.string());
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write(const std::filesystem::path& path, const Table& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write CSV " + path.string());
    out << join(table.header) << '\n';
    for (const auto& row : table.rows) out << join(row) << '\n';
    if (!out) throw InputError("failed writing CSV " + path.string());
}

}  // namespace lmlab::csv
