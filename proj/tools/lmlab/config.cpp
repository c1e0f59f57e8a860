#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace lmlab::cli {

namespace {

bool is_list(Kind k) { return k == Kind::IntList || k == Kind::FloatList || k == Kind::PathList; }

Kind element(Kind k) {
    switch (k) {
        case Kind::IntList: return Kind::Int;
        case Kind::FloatList: return Kind::Float;
        case Kind::PathList: return Kind::Path;
        default: return k;
    }
}

nlohmann::json scalar(Kind kind, const std::string& key, const std::string& text) {
    try {
        std::size_t used = 0;
        switch (kind) {
            case Kind::Int: {
                const auto v = std::stoll(text, &used);
                if (used != text.size()) break;
                return v;
            }
            case Kind::Float: {
                const auto v = std::stod(text, &used);
                if (used != text.size()) break;
                return v;
            }
            case Kind::Bool:
                if (text == "true" || text == "1") return true;
                if (text == "false" || text == "0") return false;
                break;
            default: return text;
        }
    } catch (const std::exception&) {
    }
    throw UsageError("invalid value '" + text + "' for " + key);
}

nlohmann::json check_type(const Option& opt, const nlohmann::json& v) {
    auto fits = [](Kind k, const nlohmann::json& x) {
        switch (k) {
            case Kind::Int: return x.is_number_integer();
            case Kind::Float: return x.is_number();
            case Kind::Bool: return x.is_boolean();
            default: return x.is_string();
        }
    };
    bool ok = true;
    if (is_list(opt.kind)) {
        ok = v.is_array();
        for (const auto& x : v) ok = ok && fits(element(opt.kind), x);
    } else {
        ok = fits(opt.kind, v);
    }
    if (!ok) throw UsageError("config value for '" + opt.key + "' has the wrong type: " + v.dump());
    if (opt.kind == Kind::Float) return v.get<double>();
    if (opt.kind == Kind::FloatList) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& x : v) out.push_back(x.get<double>());
        return out;
    }
    return v;
}

std::string absolute(const std::string& p) {
    if (p.empty()) return p;
    return std::filesystem::absolute(p).lexically_normal().string();
}

}  // namespace

nlohmann::json parse_value(const Option& opt, const std::string& text) {
    if (!is_list(opt.kind)) return scalar(opt.kind, opt.key, text);
    nlohmann::json out = nlohmann::json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(scalar(element(opt.kind), opt.key, item));
    }
    return out;
}

nlohmann::json resolve_config(const Command& cmd, const nlohmann::json& file, const nlohmann::json& flags) {
    nlohmann::json cfg = nlohmann::json::object();
    for (const auto& o : cmd.options) cfg[o.key] = o.fallback;
    for (const auto* layer : {&file, &flags}) {
        if (layer->is_null()) continue;
        if (!layer->is_object()) throw UsageError("config must be a JSON object");
        for (const auto& [key, value] : layer->items()) {
            const auto it = std::find_if(cmd.options.begin(), cmd.options.end(),
                                         [&](const Option& o) { return o.key == key; });
            if (it == cmd.options.end()) throw UsageError("unknown config key '" + key + "' for " + cmd.name);
            cfg[key] = check_type(*it, value);
        }
    }
    for (const auto& o : cmd.options) {
        if (o.kind == Kind::Path) cfg[o.key] = absolute(cfg[o.key].get<std::string>());
        if (o.kind == Kind::PathList) {
            for (auto& p : cfg[o.key]) p = absolute(p.get<std::string>());
        }
    }
    return cfg;
}

nlohmann::json read_config_file(const std::filesystem::path& path, const std::string& command) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("malformed config " + path.string() + ": " + e.what());
    }
    if (j.is_object() && j.contains("command") && j.contains("config")) {
        if (j["command"] != command) {
            throw UsageError(path.string() + " records a '" + j["command"].get<std::string>() + "' run, not " +
                             command);
        }
        return j["config"];
    }
    return j;
}

nlohmann::json run_record(const std::string& command, const nlohmann::json& cfg) {
    return {{"tool", "lmlab"}, {"version", LMLAB_VERSION}, {"command", command},
            {"seed", cfg.at("seed")}, {"config", cfg}};
}

}  // namespace lmlab::cli
