#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace lmlab::cli {

// Bad flags or config values; exits with status 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Kind { Int, Float, Bool, String, Path, IntList, FloatList, PathList };

struct Option {
    std::string key;  // config key; the flag is --key with '_' as '-'
    Kind kind;
    nlohmann::json fallback;
    std::string help;
};

struct Command {
    std::string name;
    std::string help;
    std::vector<Option> options;  // "out" and "seed" are added to every command
    std::function<void(const nlohmann::json& cfg)> run;
};

const std::vector<Command>& commands();

// Parses a flag value given on the command line.
nlohmann::json parse_value(const Option& opt, const std::string& text);

// Defaults, then `file` (a plain config object or a run.json), then
// `flags`. Unknown keys and ill-typed values raise UsageError. Path
// values are made absolute so the result can be replayed from anywhere.
nlohmann::json resolve_config(const Command& cmd, const nlohmann::json& file, const nlohmann::json& flags);

// Reads a config file; a run.json contributes its "config" member.
nlohmann::json read_config_file(const std::filesystem::path& path, const std::string& command);

nlohmann::json run_record(const std::string& command, const nlohmann::json& cfg);

}  // namespace lmlab::cli
