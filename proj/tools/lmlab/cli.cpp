#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "config.hpp"
#include "lmlab/common/error.hpp"

namespace lmlab::cli {

namespace {

std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return "--" + key;
}

void write_run_json(const nlohmann::json& record) {
    const std::filesystem::path out = record["config"]["out"].get<std::string>();
    std::filesystem::create_directories(out);
    std::ofstream(out / "run.json") << record.dump(2) << '\n';
}

void execute(const Command& cmd, const nlohmann::json& cfg) {
    write_run_json(run_record(cmd.name, cfg));
    cmd.run(cfg);
}

const Command& find_command(const std::string& name) {
    for (const auto& c : commands()) {
        if (c.name == name) return c;
    }
    throw UsageError("unknown command '" + name + "'");
}

struct Bound {
    const Command* cmd = nullptr;
    CLI::App* app = nullptr;
    std::map<std::string, std::string> text;
    std::map<std::string, bool> flags;
    std::map<std::string, CLI::Option*> handles;
    std::string config_path;
};

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Encoder-decoder vs decoder-only language model laboratory", "lmlab"};
    app.set_version_flag("--version", nlohmann::json{{"name", "lmlab"}, {"version", LMLAB_VERSION}}.dump());
    app.require_subcommand(1);

    std::vector<std::unique_ptr<Bound>> bound;
    for (const auto& cmd : commands()) {
        auto b = std::make_unique<Bound>();
        b->cmd = &cmd;
        b->app = app.add_subcommand(cmd.name, cmd.help);
        b->app->add_option("--config", b->config_path, "JSON config or run.json; flags take precedence");
        for (const auto& o : cmd.options) {
            const auto help = o.help + " (default " + o.fallback.dump() + ")";
            if (o.kind == Kind::Bool) {
                b->handles[o.key] = b->app->add_flag(flag_name(o.key) + ",!--no-" + flag_name(o.key).substr(2),
                                                     b->flags[o.key], help);
            } else {
                b->handles[o.key] = b->app->add_option(flag_name(o.key), b->text[o.key], help);
            }
        }
        bound.push_back(std::move(b));
    }
    std::string replay_path, replay_out;
    auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a run.json");
    replay->add_option("run_json", replay_path, "run.json of an earlier run")->required();
    replay->add_option("--out", replay_out, "output directory (default: the recorded one)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (replay->parsed()) {
            std::ifstream f(replay_path);
            if (!f) throw UsageError("cannot read " + replay_path);
            nlohmann::json rec;
            try {
                rec = nlohmann::json::parse(f);
            } catch (const nlohmann::json::exception& e) {
                throw UsageError("malformed run record: " + std::string(e.what()));
            }
            if (!rec.contains("command") || !rec.contains("config")) throw UsageError(replay_path + " is not a run.json");
            const auto& cmd = find_command(rec["command"].get<std::string>());
            nlohmann::json flags = nlohmann::json::object();
            if (!replay_out.empty()) flags["out"] = replay_out;
            execute(cmd, resolve_config(cmd, rec["config"], flags));
            return 0;
        }
        for (const auto& b : bound) {
            if (!b->app->parsed()) continue;
            nlohmann::json file;
            if (!b->config_path.empty()) file = read_config_file(b->config_path, b->cmd->name);
            nlohmann::json flags = nlohmann::json::object();
            for (const auto& o : b->cmd->options) {
                if (b->handles[o.key]->count() == 0) continue;
                flags[o.key] = o.kind == Kind::Bool ? nlohmann::json(b->flags[o.key]) : parse_value(o, b->text[o.key]);
            }
            execute(*b->cmd, resolve_config(*b->cmd, file, flags));
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace lmlab::cli
